use crate::error::{Error, Result};
use crate::sparse::{norm2, CsrMatrix};

/// Directed adjacency with per-edge geometric features.
///
/// Edge `e` in `ptr[j]..ptr[j + 1]` goes from `j` to `nbr[e]` and carries
/// `(dx, dy, ‖d‖)` with `d = x_l - x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphTopology {
    ptr: Vec<usize>,
    nbr: Vec<usize>,
    feat: Vec<[f64; 3]>,
}

impl GraphTopology {
    /// Builds both directions of every undirected pair. Self loops and
    /// duplicates are dropped.
    pub fn new(coords: &[[f64; 2]], edges: &[[usize; 2]]) -> Result<Self> {
        let n = coords.len();
        let mut lists = vec![Vec::new(); n];
        for &[j, l] in edges {
            if j >= n || l >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({j}, {l}) out of range for {n} nodes"
                )));
            }
            if j != l {
                lists[j].push(l);
                lists[l].push(j);
            }
        }
        let mut ptr = Vec::with_capacity(n + 1);
        ptr.push(0);
        let mut nbr = Vec::new();
        let mut feat = Vec::new();
        for (j, list) in lists.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &l in list.iter() {
                let dx = coords[l][0] - coords[j][0];
                let dy = coords[l][1] - coords[j][1];
                nbr.push(l);
                feat.push([dx, dy, dx.hypot(dy)]);
            }
            ptr.push(nbr.len());
        }
        Ok(GraphTopology { ptr, nbr, feat })
    }

    /// Disjoint union; node indices of part `p` are shifted by the sizes of
    /// the parts before it.
    pub fn union<'a>(parts: impl IntoIterator<Item = &'a GraphTopology>) -> Self {
        let mut ptr = vec![0];
        let mut nbr = Vec::new();
        let mut feat = Vec::new();
        let mut shift = 0;
        for t in parts {
            for j in 0..t.node_count() {
                for e in t.ptr[j]..t.ptr[j + 1] {
                    nbr.push(t.nbr[e] + shift);
                    feat.push(t.feat[e]);
                }
                ptr.push(nbr.len());
            }
            shift += t.node_count();
        }
        GraphTopology { ptr, nbr, feat }
    }

    pub fn node_count(&self) -> usize {
        self.ptr.len() - 1
    }

    /// Number of directed edges.
    pub fn edge_count(&self) -> usize {
        self.nbr.len()
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.nbr[self.ptr[j]..self.ptr[j + 1]]
    }

    pub fn features(&self, j: usize) -> &[[f64; 3]] {
        &self.feat[self.ptr[j]..self.ptr[j + 1]]
    }

    pub fn degree(&self, j: usize) -> usize {
        self.ptr[j + 1] - self.ptr[j]
    }

    pub(crate) fn ptr(&self) -> &[usize] {
        &self.ptr
    }

    pub(crate) fn nbr(&self) -> &[usize] {
        &self.nbr
    }

    pub(crate) fn feat(&self) -> &[[f64; 3]] {
        &self.feat
    }

    /// Undirected pairs `(j, l)` with `j < l`.
    pub fn undirected_edges(&self) -> Vec<[usize; 2]> {
        (0..self.node_count())
            .flat_map(|j| self.neighbors(j).iter().filter(move |&&l| j < l).map(move |&l| [j, l]))
            .collect()
    }
}

/// One local Poisson problem `A_i u = c` together with its mesh geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGraph {
    pub coords: Vec<[f64; 2]>,
    pub topology: GraphTopology,
    pub c: Vec<f64>,
    pub a_local: CsrMatrix,
    /// `‖R_i r‖` before normalization.
    pub scale: f64,
}

impl LocalGraph {
    /// Edges are taken from the off-diagonal pattern of `a_local`; `c` starts at zero.
    pub fn from_matrix(coords: Vec<[f64; 2]>, a_local: CsrMatrix) -> Result<Self> {
        let edges: Vec<[usize; 2]> = a_local
            .adjacency()
            .iter()
            .enumerate()
            .flat_map(|(j, ls)| ls.iter().filter(move |&&l| j < l).map(move |&l| [j, l]))
            .collect();
        Self::new(coords, &edges, a_local, vec![0.0; 0], 0.0)
    }

    /// An empty `c` is replaced by zeros.
    pub fn new(
        coords: Vec<[f64; 2]>,
        edges: &[[usize; 2]],
        a_local: CsrMatrix,
        c: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        let n = coords.len();
        if a_local.n_rows() != n || a_local.n_cols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: a_local.n_rows(),
            });
        }
        let c = if c.is_empty() { vec![0.0; n] } else { c };
        if c.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: c.len(),
            });
        }
        let topology = GraphTopology::new(&coords, edges)?;
        Ok(LocalGraph {
            coords,
            topology,
            c,
            a_local,
            scale,
        })
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    /// Sets `c = r / ‖r‖` and `scale = ‖r‖`; a zero `r` leaves `c = 0`.
    pub fn set_residual(&mut self, r: &[f64]) -> Result<()> {
        if r.len() != self.node_count() {
            return Err(Error::DimensionMismatch {
                expected: self.node_count(),
                actual: r.len(),
            });
        }
        let s = norm2(r);
        self.scale = s;
        if s > 0.0 {
            for (ci, ri) in self.c.iter_mut().zip(r) {
                *ci = ri / s;
            }
        } else {
            self.c.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(())
    }

    /// Relabels nodes so that old node `j` becomes `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        let mut coords = vec![[0.0; 2]; n];
        let mut c = vec![0.0; n];
        for j in 0..n {
            coords[perm[j]] = self.coords[j];
            c[perm[j]] = self.c[j];
        }
        let edges: Vec<[usize; 2]> = self
            .topology
            .undirected_edges()
            .iter()
            .map(|&[j, l]| [perm[j], perm[l]])
            .collect();
        let mut t = Vec::with_capacity(self.a_local.nnz());
        for j in 0..n {
            let (cols, vals) = self.a_local.row(j);
            for (&l, &v) in cols.iter().zip(vals) {
                t.push((perm[j], perm[l], v));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        LocalGraph::new(coords, &edges, a, c, self.scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_directions_with_antisymmetric_features() {
        let coords = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0]];
        let t = GraphTopology::new(&coords, &[[0, 1], [2, 0], [1, 0]]).unwrap();
        assert_eq!(t.edge_count(), 4);
        assert_eq!(t.neighbors(0), &[1, 2]);
        assert_eq!(t.features(0)[1], [0.0, 2.0, 2.0]);
        assert_eq!(t.features(2)[0], [0.0, -2.0, 2.0]);
        assert_eq!(t.undirected_edges(), vec![[0, 1], [0, 2]]);
        assert!(GraphTopology::new(&coords, &[[0, 3]]).is_err());
    }

    #[test]
    fn union_shifts_indices() {
        let coords = vec![[0.0, 0.0], [1.0, 0.0]];
        let t = GraphTopology::new(&coords, &[[0, 1]]).unwrap();
        let u = GraphTopology::union([&t, &t]);
        assert_eq!(u.node_count(), 4);
        assert_eq!(u.neighbors(2), &[3]);
        assert_eq!(u.neighbors(3), &[2]);
    }

    #[test]
    fn residual_normalization() {
        let a = CsrMatrix::identity(2);
        let mut g = LocalGraph::from_matrix(vec![[0.0, 0.0], [1.0, 0.0]], a).unwrap();
        g.set_residual(&[3.0, 4.0]).unwrap();
        assert_eq!(g.scale, 5.0);
        assert!((norm2(&g.c) - 1.0).abs() < 1e-15);
        g.set_residual(&[0.0, 0.0]).unwrap();
        assert_eq!(g.c, vec![0.0, 0.0]);
    }
}
