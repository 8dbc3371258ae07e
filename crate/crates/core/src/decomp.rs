//! Overlapping decompositions of the interior-DOF graph.
//!
//! A base partition is grown breadth-first from farthest-point seeds, then each
//! part is widened by `overlap` BFS layers. Overlapping DOFs are shared through
//! multiplicity weights `D_i(j) = 1 / #{subdomains containing j}`, which also
//! define the Nicolaides coarse space.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Overlapping subdomains with partition-of-unity weights and coarse basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    /// Sorted interior-DOF indices of each overlapping subdomain.
    pub subdomains: Vec<Vec<usize>>,
    /// Base (non-overlapping) part of every DOF.
    pub base_owner: Vec<usize>,
    pub overlap: usize,
    /// `D_i`, aligned with `subdomains[i]`.
    pub pou_weights: Vec<Vec<f64>>,
    /// Nicolaides coarse matrix `R_0`, `K × N`.
    pub r0: CsrMatrix,
}

/// On-disk form: index lists, overlap and owner array.
#[derive(Debug, Serialize, Deserialize)]
struct DecompositionFile {
    subdomains: Vec<Vec<usize>>,
    overlap: usize,
    base_owner: Vec<usize>,
}

impl Decomposition {
    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.base_owner.len()
    }

    pub fn subdomain_sizes(&self) -> Vec<usize> {
        self.subdomains.iter().map(Vec::len).collect()
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.subdomains.len() {
            return Err(Error::InvalidArgument(format!(
                "subdomain {i} out of range (K = {})",
                self.subdomains.len()
            )));
        }
        Ok(())
    }

    /// `R_i x`.
    pub fn restrict(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        if x.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs(),
                actual: x.len(),
            });
        }
        Ok(self.subdomains[i].iter().map(|&j| x[j]).collect())
    }

    /// `R_iᵀ v`.
    pub fn extend(&self, i: usize, v: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        let mut out = vec![0.0; self.n_dofs()];
        self.extend_add(i, v, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += scale · R_iᵀ v`.
    pub fn extend_add(&self, i: usize, v: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        self.check_index(i)?;
        let idx = &self.subdomains[i];
        if v.len() != idx.len() {
            return Err(Error::DimensionMismatch {
                expected: idx.len(),
                actual: v.len(),
            });
        }
        if out.len() != self.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_dofs(),
                actual: out.len(),
            });
        }
        for (&j, &vj) in idx.iter().zip(v) {
            out[j] += scale * vj;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&DecompositionFile {
            subdomains: self.subdomains.clone(),
            overlap: self.overlap,
            base_owner: self.base_owner.clone(),
        })
        .expect("decomposition serializes")
    }

    /// Restores a decomposition, recomputing weights and the coarse basis.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: DecompositionFile = serde_json::from_str(text)?;
        let n = file.base_owner.len();
        for sub in &file.subdomains {
            if sub.windows(2).any(|w| w[0] >= w[1]) || sub.last().is_some_and(|&j| j >= n) {
                return Err(Error::InvalidArgument("malformed subdomain index list".into()));
            }
        }
        if file.base_owner.iter().any(|&p| p >= file.subdomains.len()) {
            return Err(Error::InvalidArgument("owner refers to a missing subdomain".into()));
        }
        Ok(finish(file.subdomains, file.base_owner, file.overlap))
    }
}

fn bfs_distances(adjacency: &[Vec<usize>], sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adjacency.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Lowest index attaining the largest finite value.
fn argmax(values: &[usize]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v != usize::MAX && (values[best] == usize::MAX || v > values[best]) {
            best = i;
        }
    }
    best
}

fn is_connected_without(adjacency: &[Vec<usize>], owner: &[usize], part: usize, removed: usize) -> bool {
    let members: Vec<usize> = (0..owner.len()).filter(|&v| owner[v] == part && v != removed).collect();
    let Some(&start) = members.first() else {
        return false;
    };
    let mut seen = vec![false; owner.len()];
    seen[start] = true;
    let mut stack = vec![start];
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &v in &adjacency[u] {
            if v != removed && owner[v] == part && !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == members.len()
}

/// Splits a connected graph into `K = round(N / target_size)` connected parts.
///
/// Seeds are picked by repeated farthest-point BFS starting from node
/// `seed mod N`; regions then grow one node at a time, always extending the
/// currently smallest region. A single smoothing sweep moves frontier nodes to a
/// smaller neighbouring region when that keeps the donor connected. Parts are
/// numbered by their smallest node.
pub fn partition(adjacency: &[Vec<usize>], target_size: usize, seed: u64) -> Result<Vec<usize>> {
    let n = adjacency.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty graph".into()));
    }
    if target_size == 0 || target_size > n {
        return Err(Error::InvalidArgument(format!(
            "target_size must lie in 1..={n}, got {target_size}"
        )));
    }
    if bfs_distances(adjacency, &[0]).contains(&usize::MAX) {
        return Err(Error::DisconnectedGraph);
    }
    let k = ((n as f64 / target_size as f64).round() as usize).clamp(1, n);

    let start = (seed % n as u64) as usize;
    let mut seeds = vec![argmax(&bfs_distances(adjacency, &[start]))];
    let mut nearest = bfs_distances(adjacency, &seeds);
    while seeds.len() < k {
        let next = argmax(&nearest);
        seeds.push(next);
        let d = bfs_distances(adjacency, &[next]);
        for (m, dv) in nearest.iter_mut().zip(d) {
            *m = (*m).min(dv);
        }
    }

    let mut owner = vec![usize::MAX; n];
    let mut sizes = vec![1usize; k];
    let mut frontier: Vec<VecDeque<usize>> = vec![VecDeque::new(); k];
    for (r, &s) in seeds.iter().enumerate() {
        owner[s] = r;
    }
    for (r, &s) in seeds.iter().enumerate() {
        frontier[r].extend(adjacency[s].iter().copied().filter(|&v| owner[v] == usize::MAX));
    }
    let mut assigned = k;
    while assigned < n {
        let r = (0..k)
            .filter(|&r| !frontier[r].is_empty())
            .min_by_key(|&r| (sizes[r], r))
            .expect("connected graph always has an open frontier");
        let u = frontier[r].pop_front().unwrap();
        if owner[u] != usize::MAX {
            continue;
        }
        owner[u] = r;
        sizes[r] += 1;
        assigned += 1;
        frontier[r].extend(adjacency[u].iter().copied().filter(|&v| owner[v] == usize::MAX));
    }

    for u in 0..n {
        let r = owner[u];
        let mut candidates: Vec<usize> = adjacency[u].iter().map(|&v| owner[v]).filter(|&s| s != r).collect();
        candidates.sort_unstable_by_key(|&s| (sizes[s], s));
        candidates.dedup();
        if let Some(&s) = candidates.first() {
            if sizes[r] > sizes[s] + 1 && is_connected_without(adjacency, &owner, r, u) {
                owner[u] = s;
                sizes[r] -= 1;
                sizes[s] += 1;
            }
        }
    }

    let mut relabel = vec![usize::MAX; k];
    let mut next = 0;
    for u in 0..n {
        if relabel[owner[u]] == usize::MAX {
            relabel[owner[u]] = next;
            next += 1;
        }
    }
    Ok(owner.into_iter().map(|r| relabel[r]).collect())
}

/// Widens each base part by `overlap` BFS layers and builds weights and `R_0`.
pub fn add_overlap(base_owner: &[usize], adjacency: &[Vec<usize>], overlap: usize) -> Result<Decomposition> {
    let n = base_owner.len();
    if adjacency.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: adjacency.len(),
        });
    }
    let k = base_owner.iter().max().map_or(0, |m| m + 1);
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (v, &p) in base_owner.iter().enumerate() {
        parts[p].push(v);
    }
    if parts.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("base partition has an empty part".into()));
    }
    let mut mark = vec![usize::MAX; n];
    let subdomains = parts
        .iter()
        .enumerate()
        .map(|(i, part)| {
            let mut members = part.clone();
            for &v in part {
                mark[v] = i;
            }
            let mut layer = part.clone();
            for _ in 0..overlap {
                let mut next = Vec::new();
                for &u in &layer {
                    for &v in &adjacency[u] {
                        if mark[v] != i {
                            mark[v] = i;
                            next.push(v);
                        }
                    }
                }
                members.extend_from_slice(&next);
                layer = next;
            }
            members.sort_unstable();
            members
        })
        .collect();
    Ok(finish(subdomains, base_owner.to_vec(), overlap))
}

fn finish(subdomains: Vec<Vec<usize>>, base_owner: Vec<usize>, overlap: usize) -> Decomposition {
    let n = base_owner.len();
    let mut multiplicity = vec![0usize; n];
    for sub in &subdomains {
        for &j in sub {
            multiplicity[j] += 1;
        }
    }
    let pou_weights: Vec<Vec<f64>> = subdomains
        .iter()
        .map(|sub| sub.iter().map(|&j| 1.0 / multiplicity[j] as f64).collect())
        .collect();
    let mut dec = Decomposition {
        subdomains,
        base_owner,
        overlap,
        pou_weights,
        r0: CsrMatrix::identity(0),
    };
    dec.r0 = nicolaides(&dec);
    dec
}

/// Nicolaides coarse matrix: row `i` is `R_iᵀ D_i R_i 1`.
pub fn nicolaides(dec: &Decomposition) -> CsrMatrix {
    let k = dec.subdomains.len();
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for (sub, w) in dec.subdomains.iter().zip(&dec.pou_weights) {
        col_idx.extend_from_slice(sub);
        values.extend_from_slice(w);
        row_ptr.push(col_idx.len());
    }
    CsrMatrix::new(k, dec.n_dofs(), row_ptr, col_idx, values).expect("subdomain lists are sorted")
}

/// Convenience: partition plus overlap on the graph of `a`.
pub fn decompose(a: &CsrMatrix, target_size: usize, overlap: usize, seed: u64) -> Result<Decomposition> {
    let adjacency = a.adjacency();
    let owner = partition(&adjacency, target_size, seed)?;
    add_overlap(&owner, &adjacency, overlap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Vec<Vec<usize>> {
        (0..n)
            .map(|i| {
                let mut nb = Vec::new();
                if i > 0 {
                    nb.push(i - 1);
                }
                if i + 1 < n {
                    nb.push(i + 1);
                }
                nb
            })
            .collect()
    }

    #[test]
    fn path_of_four_splits_in_halves() {
        let owner = partition(&path(4), 2, 0).unwrap();
        assert_eq!(owner, vec![0, 0, 1, 1]);
        // the starting node does not change the result
        assert_eq!(partition(&path(4), 2, 3).unwrap(), owner);
    }

    #[test]
    fn target_equal_to_n_gives_one_part() {
        let owner = partition(&path(7), 7, 0).unwrap();
        assert!(owner.iter().all(|&p| p == 0));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let adj = vec![vec![1], vec![0], vec![3], vec![2]];
        assert!(matches!(partition(&adj, 2, 0), Err(Error::DisconnectedGraph)));
        assert!(partition(&path(3), 0, 0).is_err());
        assert!(partition(&path(3), 4, 0).is_err());
    }

    #[test]
    fn one_overlap_layer_on_a_path() {
        let dec = add_overlap(&[0, 0, 0, 1, 1], &path(5), 1).unwrap();
        assert_eq!(dec.subdomains[0], vec![0, 1, 2, 3]);
        assert_eq!(dec.subdomains[1], vec![2, 3, 4]);
    }

    #[test]
    fn zero_overlap_is_plain_indicators() {
        let dec = add_overlap(&[0, 0, 1, 1, 1], &path(5), 0).unwrap();
        assert_eq!(dec.subdomains, vec![vec![0, 1], vec![2, 3, 4]]);
        assert!(dec.pou_weights.iter().flatten().all(|&w| w == 1.0));
        assert_eq!(dec.r0.to_dense(), vec![vec![1.0, 1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0, 1.0]]);
    }

    #[test]
    fn nicolaides_rows_on_shared_path() {
        let dec = add_overlap(&[0, 0, 0, 1, 1, 1], &path(6), 1).unwrap();
        assert_eq!(
            dec.r0.to_dense(),
            vec![vec![1.0, 1.0, 0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5, 1.0, 1.0]]
        );
    }

    #[test]
    fn restrict_extend_errors() {
        let dec = add_overlap(&[0, 0, 1, 1], &path(4), 1).unwrap();
        assert!(dec.restrict(2, &[0.0; 4]).is_err());
        assert!(dec.restrict(0, &[0.0; 3]).is_err());
        assert!(dec.extend(0, &[0.0; 2]).is_err());
        assert_eq!(dec.restrict(0, &[1.0; 4]).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn json_round_trip_rebuilds_weights() {
        let dec = add_overlap(&[0, 0, 0, 1, 1, 1], &path(6), 2).unwrap();
        let back = Decomposition::from_json(&dec.to_json()).unwrap();
        assert_eq!(back, dec);
    }
}
