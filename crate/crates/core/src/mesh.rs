//! Two-dimensional triangle meshes.
//!
//! Three ways to obtain a [`Mesh`]:
//!
//! - [`generate_blob_mesh`]: a structured polar disk triangulation mapped through
//!   a random smooth radius function, giving star-shaped "blob" domains;
//! - [`generate_rect_mesh`]: a crossed-diagonal rectangle grid with optional
//!   rectangular holes;
//! - [`import_mesh`]: the line-oriented `mesh2d v1` text format written by
//!   [`export_mesh`].
//!
//! Boundary nodes are always derived structurally: a node is on the boundary iff
//! it is an endpoint of an edge that belongs to exactly one triangle.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// An unstructured P1 triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub coords: Vec<[f64; 2]>,
    /// Counter-clockwise node triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary: Vec<bool>,
}

impl Mesh {
    /// Builds a mesh from raw parts, computing boundary flags and checking every
    /// invariant.
    pub fn from_parts(coords: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = coords.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a node outside 0..{n}"
                )));
            }
        }
        let boundary = boundary_flags(n, &triangles)?;
        let mesh = Mesh {
            coords,
            triangles,
            boundary,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn node_count(&self) -> usize {
        self.coords.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn interior_count(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    /// Signed area of triangle `t` (positive for counter-clockwise).
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.coords[a], self.coords[b], self.coords[c])
    }

    /// Sum of all triangle areas.
    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    /// Area enclosed by the oriented boundary edges (outer loop minus holes).
    pub fn boundary_polygon_area(&self) -> f64 {
        let counts = edge_counts(&self.triangles);
        let mut twice = 0.0;
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                if counts[&edge_key(a, b)] == 1 {
                    let (p, q) = (self.coords[a], self.coords[b]);
                    twice += p[0] * q[1] - q[0] * p[1];
                }
            }
        }
        0.5 * twice
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = edge_counts(&self.triangles).into_keys().collect();
        edges.sort_unstable();
        edges
    }

    /// Recomputes the structural boundary flags.
    pub fn recompute_boundary(&self) -> Vec<bool> {
        boundary_flags(self.coords.len(), &self.triangles)
            .expect("mesh was validated at construction")
    }

    /// Checks every mesh invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.coords.len();
        if n == 0 || self.triangles.is_empty() {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        if self.boundary.len() != n {
            return Err(Error::InvalidMesh("boundary flag count differs from node count".into()));
        }
        if self.coords.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::InvalidMesh("non-finite coordinate".into()));
        }
        let mut used = vec![false; n];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= n {
                    return Err(Error::InvalidMesh(format!("triangle {t} index out of range")));
                }
                used[v] = true;
            }
            if !(self.signed_area(t) > 0.0) {
                return Err(Error::DegenerateTriangle(t));
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidMesh(format!("node {v} belongs to no triangle")));
        }
        let flags = boundary_flags(n, &self.triangles)?;
        if flags != self.boundary {
            return Err(Error::InvalidMesh("boundary flags inconsistent with edge sharing".into()));
        }
        if !triangles_connected(&self.triangles) {
            return Err(Error::InvalidMesh("mesh is not connected".into()));
        }
        Ok(())
    }
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn edge_counts(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut counts = HashMap::with_capacity(triangles.len() * 2);
    for tri in triangles {
        for e in 0..3 {
            *counts.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_insert(0) += 1;
        }
    }
    counts
}

fn boundary_flags(n: usize, triangles: &[[usize; 3]]) -> Result<Vec<bool>> {
    let mut flags = vec![false; n];
    for ((a, b), count) in edge_counts(triangles) {
        match count {
            1 => {
                flags[a] = true;
                flags[b] = true;
            }
            2 => {}
            _ => {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a}, {b}) is shared by {count} triangles"
                )))
            }
        }
    }
    Ok(flags)
}

fn triangles_connected(triangles: &[[usize; 3]]) -> bool {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            by_edge.entry(edge_key(tri[e], tri[(e + 1) % 3])).or_default().push(t);
        }
    }
    let mut seen = vec![false; triangles.len()];
    let mut stack = vec![0];
    seen[0] = true;
    let mut count = 1;
    while let Some(t) = stack.pop() {
        let tri = triangles[t];
        for e in 0..3 {
            for &u in &by_edge[&edge_key(tri[e], tri[(e + 1) % 3])] {
                if !seen[u] {
                    seen[u] = true;
                    count += 1;
                    stack.push(u);
                }
            }
        }
    }
    count == triangles.len()
}

/// Generates a random smooth star-shaped domain.
///
/// A polar disk triangulation (center node plus `R` rings, ring `k` holding about
/// `6k` nodes, slightly graded toward the boundary) is mapped through
/// `r(θ) = 1 + p · s(θ)` where `s` is a random trigonometric polynomial of degree 4
/// normalized so that `|s| ≤ 1`.
pub fn generate_blob_mesh(seed: u64, target_nodes: usize, perturbation: f64) -> Result<Mesh> {
    if target_nodes < 16 {
        return Err(Error::InvalidArgument(format!(
            "target_nodes must be at least 16, got {target_nodes}"
        )));
    }
    if !(0.0..=0.3).contains(&perturbation) {
        return Err(Error::InvalidArgument(format!(
            "perturbation must lie in [0, 0.3], got {perturbation}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = [0.0; 4];
    let mut b = [0.0; 4];
    for m in 0..4 {
        a[m] = rng.gen_range(-1.0..=1.0);
        b[m] = rng.gen_range(-1.0..=1.0);
    }
    let amplitude: f64 = a.iter().chain(b.iter()).map(|v: &f64| v.abs()).sum();
    let radius = |theta: f64| -> f64 {
        if perturbation == 0.0 || amplitude == 0.0 {
            return 1.0;
        }
        let s: f64 = (0..4)
            .map(|m| {
                let k = (m + 1) as f64;
                a[m] * (k * theta).cos() + b[m] * (k * theta).sin()
            })
            .sum();
        1.0 + perturbation * s / amplitude
    };

    // 1 + c R (R + 1) / 2 nodes with c close to 6.
    let t = (target_nodes - 1) as f64;
    let rings = (((1.0 + 4.0 * t / 3.0).sqrt() - 1.0) / 2.0).round().max(2.0) as usize;
    let per_ring = 2.0 * t / (rings * (rings + 1)) as f64;
    let grading = 0.15;

    let mut coords = vec![[0.0, 0.0]];
    let mut ring_start = vec![0usize];
    let mut ring_len = vec![1usize];
    let mut ring_phase = vec![0.0f64];
    for k in 1..=rings {
        let m = ((per_ring * k as f64).round() as usize).max(3);
        let s = k as f64 / rings as f64;
        let rho = s * (1.0 + grading * (1.0 - s));
        let phase = if k % 2 == 1 { 0.5 } else { 0.0 };
        ring_start.push(coords.len());
        ring_len.push(m);
        ring_phase.push(phase);
        for i in 0..m {
            let theta = 2.0 * PI * (i as f64 + phase) / m as f64;
            let r = rho * radius(theta);
            coords.push([r * theta.cos(), r * theta.sin()]);
        }
    }

    let mut triangles = Vec::new();
    let (s1, m1) = (ring_start[1], ring_len[1]);
    for i in 0..m1 {
        triangles.push([0, s1 + i, s1 + (i + 1) % m1]);
    }
    for k in 2..=rings {
        zip_rings(
            (ring_start[k - 1], ring_len[k - 1], ring_phase[k - 1]),
            (ring_start[k], ring_len[k], ring_phase[k]),
            &mut triangles,
        );
    }
    Mesh::from_parts(coords, triangles)
}

/// Triangulates the annulus between two node rings by merging their angular
/// positions.
fn zip_rings(
    inner: (usize, usize, f64),
    outer: (usize, usize, f64),
    triangles: &mut Vec<[usize; 3]>,
) {
    let (is, im, ip) = inner;
    let (os, om, op) = outer;
    let pos_in = |i: usize| (i as f64 + ip) / im as f64;
    let pos_out = |j: usize| (j as f64 + op) / om as f64;
    let (mut i, mut j) = (0usize, 0usize);
    while i < im || j < om {
        let advance_inner = if i == im {
            false
        } else if j == om {
            true
        } else {
            pos_in(i + 1) <= pos_out(j + 1)
        };
        if advance_inner {
            triangles.push([is + i % im, os + j % om, is + (i + 1) % im]);
            i += 1;
        } else {
            triangles.push([is + i % im, os + j % om, os + (j + 1) % om]);
            j += 1;
        }
    }
}

/// Axis-aligned rectangular hole `[x0, x1] × [y0, y1]` cut out of a rectangle mesh.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Hole {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Hole {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Hole { x0, y0, x1, y1 }
    }
}

fn to_cell_index(v: f64, h: f64, what: &str) -> Result<usize> {
    let q = v / h;
    let r = q.round();
    if (q - r).abs() > 1e-9 || r < 0.0 {
        return Err(Error::InvalidArgument(format!("hole {what} = {v} is not cell-aligned")));
    }
    Ok(r as usize)
}

/// Structured `nx × ny` rectangle mesh on `[0, lx] × [0, ly]`.
///
/// Each cell is split along one diagonal, alternating in a checkerboard pattern.
/// Cells covered by a hole are removed and the hole rims become boundary.
pub fn generate_rect_mesh(nx: usize, ny: usize, lx: f64, ly: f64, holes: &[Hole]) -> Result<Mesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidArgument(format!("nx and ny must be >= 2, got {nx}x{ny}")));
    }
    if !(lx > 0.0 && ly > 0.0) {
        return Err(Error::InvalidArgument("lx and ly must be positive".into()));
    }
    let (hx, hy) = (lx / nx as f64, ly / ny as f64);

    let mut ranges = Vec::with_capacity(holes.len());
    for hole in holes {
        let (i0, i1) = (to_cell_index(hole.x0, hx, "x0")?, to_cell_index(hole.x1, hx, "x1")?);
        let (j0, j1) = (to_cell_index(hole.y0, hy, "y0")?, to_cell_index(hole.y1, hy, "y1")?);
        if i0 >= i1 || j0 >= j1 {
            return Err(Error::InvalidArgument(format!("hole {hole:?} is empty")));
        }
        if i0 < 1 || j0 < 1 || i1 > nx - 1 || j1 > ny - 1 {
            return Err(Error::InvalidArgument(format!(
                "hole {hole:?} touches the outer boundary"
            )));
        }
        for &(a0, a1, b0, b1) in &ranges {
            if i0 < a1 && a0 < i1 && j0 < b1 && b0 < j1 {
                return Err(Error::InvalidArgument(format!("hole {hole:?} overlaps another hole")));
            }
        }
        ranges.push((i0, i1, j0, j1));
    }
    let in_hole = |i: usize, j: usize| {
        ranges
            .iter()
            .any(|&(i0, i1, j0, j1)| (i0..i1).contains(&i) && (j0..j1).contains(&j))
    };

    let lattice = |i: usize, j: usize| j * (nx + 1) + i;
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if in_hole(i, j) {
                continue;
            }
            cells.push((i, j));
            for (di, dj) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                used[lattice(i + di, j + dj)] = true;
            }
        }
    }
    let mut index = vec![usize::MAX; used.len()];
    let mut coords = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if used[lattice(i, j)] {
                index[lattice(i, j)] = coords.len();
                coords.push([lx * i as f64 / nx as f64, ly * j as f64 / ny as f64]);
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * cells.len());
    for (i, j) in cells {
        let v00 = index[lattice(i, j)];
        let v10 = index[lattice(i + 1, j)];
        let v01 = index[lattice(i, j + 1)];
        let v11 = index[lattice(i + 1, j + 1)];
        if (i + j) % 2 == 0 {
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        } else {
            triangles.push([v00, v10, v01]);
            triangles.push([v10, v11, v01]);
        }
    }
    Mesh::from_parts(coords, triangles)
}

/// Serializes a mesh in the `mesh2d v1` text format.
pub fn mesh_to_string(mesh: &Mesh) -> String {
    let mut out = String::with_capacity(64 * mesh.node_count());
    out.push_str("mesh2d v1\n");
    let _ = writeln!(out, "nodes {}", mesh.node_count());
    for (p, &b) in mesh.coords.iter().zip(&mesh.boundary) {
        let _ = writeln!(out, "{:.16e} {:.16e} {}", p[0], p[1], b as u8);
    }
    let _ = writeln!(out, "tris {}", mesh.triangle_count());
    for t in &mesh.triangles {
        let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
    }
    out
}

pub fn export_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, mesh_to_string(mesh))?;
    Ok(())
}

pub fn import_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_mesh(&text, path)
}

/// Parses `mesh2d v1` text; errors carry the 1-based line number.
pub fn parse_mesh(text: &str, path: &Path) -> Result<Mesh> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
    };

    let (ln, header) = next("header")?;
    if header != "mesh2d v1" {
        return Err(err(ln, format!("malformed header {header:?}")));
    }
    let count = |ln: usize, line: &str, key: &str| -> Result<usize> {
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next().map(str::parse::<usize>), parts.next()) {
            (Some(k), Some(Ok(n)), None) if k == key => Ok(n),
            _ => Err(err(ln, format!("expected `{key} <count>`, got {line:?}"))),
        }
    };

    let (ln, line) = next("node count")?;
    let n = count(ln, line, "nodes")?;
    let mut coords = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    let mut flag_lines = Vec::with_capacity(n);
    for _ in 0..n {
        let (ln, line) = next("node line")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(err(ln, format!("expected `x y b`, got {line:?}")));
        }
        let x: f64 = parts[0].parse().map_err(|_| err(ln, format!("bad x {:?}", parts[0])))?;
        let y: f64 = parts[1].parse().map_err(|_| err(ln, format!("bad y {:?}", parts[1])))?;
        let b = match parts[2] {
            "0" => false,
            "1" => true,
            other => return Err(err(ln, format!("boundary flag must be 0 or 1, got {other:?}"))),
        };
        coords.push([x, y]);
        flags.push(b);
        flag_lines.push(ln);
    }

    let (ln, line) = next("triangle count")?;
    let t = count(ln, line, "tris")?;
    let mut triangles = Vec::with_capacity(t);
    for _ in 0..t {
        let (ln, line) = next("triangle line")?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(err(ln, format!("expected `i j k`, got {line:?}")));
        }
        let mut tri = [0usize; 3];
        for (slot, s) in tri.iter_mut().zip(&parts) {
            *slot = s.parse().map_err(|_| err(ln, format!("bad index {s:?}")))?;
            if *slot >= n {
                return Err(err(ln, format!("index {} out of range for {n} nodes", *slot)));
            }
        }
        if !(signed_area(coords[tri[0]], coords[tri[1]], coords[tri[2]]) > 0.0) {
            return Err(err(ln, "non-positive area".into()));
        }
        triangles.push(tri);
    }
    if let Some((ln, line)) = lines.find(|(_, l)| !l.is_empty()) {
        return Err(err(ln, format!("trailing content {line:?}")));
    }

    let computed = boundary_flags(n, &triangles).map_err(|e| err(0, e.to_string()))?;
    if let Some(v) = (0..n).find(|&v| computed[v] != flags[v]) {
        return Err(err(
            flag_lines[v],
            format!("boundary flag of node {v} disagrees with mesh topology"),
        ));
    }
    let mesh = Mesh {
        coords,
        triangles,
        boundary: flags,
    };
    mesh.validate().map_err(|e| err(0, e.to_string()))?;
    Ok(mesh)
}
