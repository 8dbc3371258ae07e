use super::graph::{GraphTopology, LocalGraph};
use super::model::{DssModel, MlpLayout};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `H⁰..H^k̄`, each `n × d` row-major; `H⁰ = 0`.
    pub states: Vec<Vec<f64>>,
    /// `r̂¹..r̂^k̄`.
    pub outputs: Vec<Vec<f64>>,
    pub(crate) cache: Vec<IterCache>,
}

impl ForwardTrace {
    /// Output of the last iteration.
    pub fn solution(&self) -> &[f64] {
        self.outputs.last().expect("k_bar >= 1")
    }
}

/// Pre-activations of one iteration.
#[derive(Debug, Clone, Default)]
pub(crate) struct IterCache {
    pub pre_out: Vec<f64>,
    pub pre_in: Vec<f64>,
    pub s_out: Vec<f64>,
    pub s_in: Vec<f64>,
    pub phi_out: Vec<f64>,
    pub phi_in: Vec<f64>,
    pub psi_v: Vec<f64>,
    pub dec_u: Vec<f64>,
}

/// `out[q] = b[q] + Σ_i w[q, i] x[i]` for a row-major `w` with `x.len()` columns.
#[inline]
pub(crate) fn affine(w: &[f64], b: Option<&[f64]>, x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (q, o) in out.iter_mut().enumerate() {
        let row = &w[q * cols..(q + 1) * cols];
        let mut s = b.map_or(0.0, |b| b[q]);
        for (wi, xi) in row.iter().zip(x) {
            s += wi * xi;
        }
        *o = s;
    }
}

/// Sum over neighbours of the message perceptron. `sign` flips the edge
/// vector: `+1` for outgoing `d_jl`, `-1` for ingoing `d_lj`.
///
/// The first layer splits as `W1 = [Wa | Wb | We]`, so the per-edge
/// pre-activation is `(Wa h_j + b1) + Wb h_l + We e_jl`.
#[allow(clippy::too_many_arguments)]
fn message(
    p: &[f64],
    mlp: MlpLayout,
    d: usize,
    topo: &GraphTopology,
    h: &[f64],
    sign: f64,
    pre: &mut [f64],
    s: &mut [f64],
    phi: &mut [f64],
) {
    let n = topo.node_count();
    let nin = 2 * d + 3;
    let w1 = &p[mlp.w1..mlp.b1];
    let b1 = &p[mlp.b1..mlp.w2];
    let w2 = &p[mlp.w2..mlp.b2];
    let b2 = &p[mlp.b2..mlp.end()];

    let mut pq = vec![0.0; n * 2 * d];
    for j in 0..n {
        let hj = &h[j * d..(j + 1) * d];
        let (pj, qj) = pq[j * 2 * d..(j + 1) * 2 * d].split_at_mut(d);
        for q in 0..d {
            let row = &w1[q * nin..(q + 1) * nin];
            let mut a = b1[q];
            let mut b = 0.0;
            for i in 0..d {
                a += row[i] * hj[i];
                b += row[d + i] * hj[i];
            }
            pj[q] = a;
            qj[q] = b;
        }
    }

    let (ptr, nbr, feat) = (topo.ptr(), topo.nbr(), topo.feat());
    s.iter_mut().for_each(|v| *v = 0.0);
    for j in 0..n {
        let pj = &pq[j * 2 * d..j * 2 * d + d];
        let sj = &mut s[j * d..(j + 1) * d];
        for e in ptr[j]..ptr[j + 1] {
            let l = nbr[e];
            let ql = &pq[l * 2 * d + d..(l + 1) * 2 * d];
            let f = [sign * feat[e][0], sign * feat[e][1], feat[e][2]];
            let pe = &mut pre[e * d..(e + 1) * d];
            for q in 0..d {
                let we = &w1[q * nin + 2 * d..(q + 1) * nin];
                let v = pj[q] + ql[q] + we[0] * f[0] + we[1] * f[1] + we[2] * f[2];
                pe[q] = v;
                if v > 0.0 {
                    sj[q] += v;
                }
            }
        }
    }

    for j in 0..n {
        let deg = (ptr[j + 1] - ptr[j]) as f64;
        let sj = &s[j * d..(j + 1) * d];
        let out = &mut phi[j * d..(j + 1) * d];
        affine(w2, None, sj, out);
        for q in 0..d {
            out[q] += deg * b2[q];
        }
    }
}

/// Runs all `k̄` iterations on a graph given by its topology and input `c`.
pub(crate) fn forward_parts(
    model: &DssModel,
    topo: &GraphTopology,
    c: &[f64],
    keep_cache: bool,
) -> Result<ForwardTrace> {
    let n = topo.node_count();
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: c.len(),
        });
    }
    let d = model.d();
    let alpha = model.alpha();
    let p = model.params();
    let e = topo.edge_count();

    let mut states = vec![vec![0.0; n * d]];
    let mut outputs = Vec::with_capacity(model.k_bar());
    let mut cache = Vec::new();
    let mut ic = IterCache {
        pre_out: vec![0.0; e * d],
        pre_in: vec![0.0; e * d],
        s_out: vec![0.0; n * d],
        s_in: vec![0.0; n * d],
        phi_out: vec![0.0; n * d],
        phi_in: vec![0.0; n * d],
        psi_v: vec![0.0; n * d],
        dec_u: vec![0.0; n * d],
    };
    let mut x = vec![0.0; 3 * d + 1];
    let mut t = vec![0.0; d];
    let mut delta = vec![0.0; d];

    for k in 0..model.k_bar() {
        let b = model.block(k);
        let h = states.last().expect("H0 present");
        message(p, b.phi_out, d, topo, h, 1.0, &mut ic.pre_out, &mut ic.s_out, &mut ic.phi_out);
        message(p, b.phi_in, d, topo, h, -1.0, &mut ic.pre_in, &mut ic.s_in, &mut ic.phi_in);

        let psi = b.psi;
        let mut h_next = h.clone();
        for j in 0..n {
            x[..d].copy_from_slice(&h[j * d..(j + 1) * d]);
            x[d] = c[j];
            x[d + 1..2 * d + 1].copy_from_slice(&ic.phi_out[j * d..(j + 1) * d]);
            x[2 * d + 1..].copy_from_slice(&ic.phi_in[j * d..(j + 1) * d]);
            let v = &mut ic.psi_v[j * d..(j + 1) * d];
            affine(&p[psi.w1..psi.b1], Some(&p[psi.b1..psi.w2]), &x, v);
            for q in 0..d {
                t[q] = v[q].max(0.0);
            }
            affine(&p[psi.w2..psi.b2], Some(&p[psi.b2..psi.end()]), &t, &mut delta);
            for q in 0..d {
                h_next[j * d + q] += alpha * delta[q];
            }
        }

        let dec = b.decoder;
        let mut out = vec![0.0; n];
        for j in 0..n {
            let u = &mut ic.dec_u[j * d..(j + 1) * d];
            affine(&p[dec.w1..dec.b1], Some(&p[dec.b1..dec.w2]), &h_next[j * d..(j + 1) * d], u);
            let w2 = &p[dec.w2..dec.b2];
            let mut o = p[dec.b2];
            for q in 0..d {
                o += w2[q] * u[q].max(0.0);
            }
            out[j] = o;
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::ModelNaN(k + 1));
        }
        outputs.push(out);
        states.push(h_next);
        if keep_cache {
            cache.push(ic.clone());
        }
    }
    if !keep_cache {
        states.drain(1..states.len() - 1);
    }
    Ok(ForwardTrace {
        states,
        outputs,
        cache,
    })
}

/// Full forward pass with every intermediate activation cached.
pub fn forward(model: &DssModel, g: &LocalGraph) -> Result<ForwardTrace> {
    forward_parts(model, &g.topology, &g.c, true)
}

/// Final outputs `r̂^k̄` for several graphs, evaluated as one disjoint-union graph.
pub fn infer_batch(model: &DssModel, graphs: &[(&GraphTopology, &[f64])]) -> Result<Vec<Vec<f64>>> {
    let topo = GraphTopology::union(graphs.iter().map(|(t, _)| *t));
    let c: Vec<f64> = graphs.iter().flat_map(|(_, c)| c.iter().copied()).collect();
    let trace = forward_parts(model, &topo, &c, false)?;
    let out = trace.solution();
    let mut start = 0;
    Ok(graphs
        .iter()
        .map(|(t, _)| {
            let part = out[start..start + t.node_count()].to_vec();
            start += t.node_count();
            part
        })
        .collect())
}

/// `A u - c`.
pub(crate) fn local_residual(a: &CsrMatrix, c: &[f64], u: &[f64]) -> Vec<f64> {
    let mut r = a.spmv(u);
    for (ri, ci) in r.iter_mut().zip(c) {
        *ri -= ci;
    }
    r
}

/// `(1/k) Σ_j (-c_j + Σ_l a_jl u_l)²`.
pub fn residual_loss(u: &[f64], g: &LocalGraph) -> Result<f64> {
    let n = g.node_count();
    if u.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: u.len(),
        });
    }
    let r = local_residual(&g.a_local, &g.c, u);
    Ok(r.iter().map(|v| v * v).sum::<f64>() / n as f64)
}

/// Sum of the residual losses of all intermediate outputs.
pub fn training_loss(trace: &ForwardTrace, g: &LocalGraph) -> Result<f64> {
    trace.outputs.iter().map(|u| residual_loss(u, g)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dss::model::init_model;

    fn triangle() -> LocalGraph {
        let coords = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let a = CsrMatrix::from_dense(&[
            vec![4.0, -1.0, -1.0, 0.0],
            vec![-1.0, 4.0, -1.0, -1.0],
            vec![-1.0, -1.0, 4.0, -1.0],
            vec![0.0, -1.0, -1.0, 4.0],
        ]);
        let mut g = LocalGraph::from_matrix(coords, a).unwrap();
        g.set_residual(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        g
    }

    #[test]
    fn zero_model_outputs_zero() {
        let g = triangle();
        let m = DssModel::zeros(3, 4, 1e-3, 0);
        let tr = forward(&m, &g).unwrap();
        assert_eq!(tr.outputs.len(), 3);
        assert!(tr.outputs.iter().flatten().all(|&v| v == 0.0));
        assert!(tr.states[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_alpha_freezes_latent_state() {
        let g = triangle();
        let m = init_model(3, 4, 0.0, 2).unwrap();
        let tr = forward(&m, &g).unwrap();
        assert!(tr.states.iter().flatten().all(|&v| v == 0.0));
        // decoder of a zero state with zero biases
        assert!(tr.outputs.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_loss_values() {
        let a = CsrMatrix::identity(2);
        let g = LocalGraph::new(vec![[0.0, 0.0], [1.0, 0.0]], &[[0, 1]], a, vec![1.0, 0.0], 1.0).unwrap();
        assert_eq!(residual_loss(&[0.0, 0.0], &g).unwrap(), 0.5);
        assert!(residual_loss(&[0.0], &g).is_err());
    }

    #[test]
    fn training_loss_of_zero_model_on_identity() {
        let a = CsrMatrix::identity(4);
        let mut g = LocalGraph::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            &[[0, 1], [1, 2], [2, 3]],
            a,
            vec![],
            0.0,
        )
        .unwrap();
        g.set_residual(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = DssModel::zeros(5, 3, 1e-3, 0);
        let tr = forward(&m, &g).unwrap();
        let loss = training_loss(&tr, &g).unwrap();
        assert!((loss - 5.0 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn batch_equals_individual_bitwise() {
        let g = triangle();
        let mut h = triangle();
        h.set_residual(&[0.1, 0.0, -0.7, 0.2]).unwrap();
        let m = init_model(4, 5, 0.3, 7).unwrap();
        let batch = infer_batch(&m, &[(&g.topology, &g.c), (&h.topology, &h.c)]).unwrap();
        assert_eq!(batch[0], forward(&m, &g).unwrap().solution());
        assert_eq!(batch[1], forward(&m, &h).unwrap().solution());
    }

    #[test]
    fn nan_weights_report_iteration() {
        let g = triangle();
        let mut m = init_model(2, 3, 1e-3, 1).unwrap();
        let b = m.block(1).decoder;
        m.params_mut()[b.b2] = f64::NAN;
        assert!(matches!(forward(&m, &g), Err(Error::ModelNaN(2))));
    }
}
