use rayon::prelude::*;

use super::forward::{forward, local_residual, training_loss, ForwardTrace};
use super::graph::{GraphTopology, LocalGraph};
use super::model::{DssModel, MlpLayout};
use crate::error::{Error, Result};

/// Gradient of the training loss with respect to every parameter, in the
/// flat layout of [`DssModel::params`].
pub fn backward(model: &DssModel, g: &LocalGraph, trace: &ForwardTrace) -> Result<Vec<f64>> {
    let n = g.node_count();
    let d = model.d();
    let kb = model.k_bar();
    if trace.cache.len() != kb || trace.states.len() != kb + 1 || trace.states[0].len() != n * d {
        return Err(Error::InvalidArgument(
            "trace does not match model and graph (was it produced with caching?)".into(),
        ));
    }
    let p = model.params();
    let alpha = model.alpha();
    let mut grad = vec![0.0; p.len()];
    let mut gh = vec![0.0; n * d];
    let inv_n = 2.0 / n as f64;

    for k in (0..kb).rev() {
        let b = model.block(k);
        let cache = &trace.cache[k];
        let h_old = &trace.states[k];
        let h_new = &trace.states[k + 1];

        let res = local_residual(&g.a_local, &g.c, &trace.outputs[k]);
        let gout: Vec<f64> = g.a_local.spmv_transpose(&res).iter().map(|v| v * inv_n).collect();
        decoder_backward(p, &mut grad, b.decoder, d, h_new, &cache.dec_u, &gout, &mut gh);

        let mut g_old = gh.clone();
        let mut g_phi_out = vec![0.0; n * d];
        let mut g_phi_in = vec![0.0; n * d];
        let psi = b.psi;
        let nin = 3 * d + 1;
        let mut x = vec![0.0; nin];
        let mut gv = vec![0.0; d];
        for j in 0..n {
            x[..d].copy_from_slice(&h_old[j * d..(j + 1) * d]);
            x[d] = g.c[j];
            x[d + 1..2 * d + 1].copy_from_slice(&cache.phi_out[j * d..(j + 1) * d]);
            x[2 * d + 1..].copy_from_slice(&cache.phi_in[j * d..(j + 1) * d]);
            let v = &cache.psi_v[j * d..(j + 1) * d];
            let gdelta: Vec<f64> = gh[j * d..(j + 1) * d].iter().map(|g| alpha * g).collect();
            for m in 0..d {
                grad[psi.b2 + m] += gdelta[m];
            }
            for q in 0..d {
                let tq = v[q].max(0.0);
                let mut gt = 0.0;
                for m in 0..d {
                    grad[psi.w2 + m * d + q] += gdelta[m] * tq;
                    gt += p[psi.w2 + m * d + q] * gdelta[m];
                }
                gv[q] = if v[q] > 0.0 { gt } else { 0.0 };
            }
            for q in 0..d {
                let gq = gv[q];
                if gq == 0.0 {
                    continue;
                }
                grad[psi.b1 + q] += gq;
                let row = psi.w1 + q * nin;
                for i in 0..nin {
                    grad[row + i] += gq * x[i];
                }
                for i in 0..d {
                    g_old[j * d + i] += p[row + i] * gq;
                    g_phi_out[j * d + i] += p[row + d + 1 + i] * gq;
                    g_phi_in[j * d + i] += p[row + 2 * d + 1 + i] * gq;
                }
            }
        }

        let topo = &g.topology;
        message_backward(p, &mut grad, b.phi_out, d, topo, h_old, 1.0, &cache.pre_out, &cache.s_out, &g_phi_out, &mut g_old);
        message_backward(p, &mut grad, b.phi_in, d, topo, h_old, -1.0, &cache.pre_in, &cache.s_in, &g_phi_in, &mut g_old);
        gh = g_old;
    }
    Ok(grad)
}

#[allow(clippy::too_many_arguments)]
fn decoder_backward(
    p: &[f64],
    grad: &mut [f64],
    dec: MlpLayout,
    d: usize,
    h: &[f64],
    u_all: &[f64],
    gout: &[f64],
    gh: &mut [f64],
) {
    for (j, &go) in gout.iter().enumerate() {
        grad[dec.b2] += go;
        let u = &u_all[j * d..(j + 1) * d];
        for m in 0..d {
            grad[dec.w2 + m] += go * u[m].max(0.0);
            if u[m] <= 0.0 {
                continue;
            }
            let gu = go * p[dec.w2 + m];
            grad[dec.b1 + m] += gu;
            let row = dec.w1 + m * d;
            for i in 0..d {
                grad[row + i] += gu * h[j * d + i];
                gh[j * d + i] += gu * p[row + i];
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn message_backward(
    p: &[f64],
    grad: &mut [f64],
    mlp: MlpLayout,
    d: usize,
    topo: &GraphTopology,
    h: &[f64],
    sign: f64,
    pre: &[f64],
    s: &[f64],
    g_phi: &[f64],
    g_h: &mut [f64],
) {
    let n = topo.node_count();
    let nin = 2 * d + 3;
    let (ptr, nbr, feat) = (topo.ptr(), topo.nbr(), topo.feat());

    let mut gs = vec![0.0; n * d];
    for j in 0..n {
        let deg = (ptr[j + 1] - ptr[j]) as f64;
        let gp = &g_phi[j * d..(j + 1) * d];
        for m in 0..d {
            grad[mlp.b2 + m] += deg * gp[m];
        }
        for q in 0..d {
            let sq = s[j * d + q];
            let mut acc = 0.0;
            for m in 0..d {
                grad[mlp.w2 + m * d + q] += gp[m] * sq;
                acc += p[mlp.w2 + m * d + q] * gp[m];
            }
            gs[j * d + q] = acc;
        }
    }

    let mut gpq = vec![0.0; n * 2 * d];
    for j in 0..n {
        for e in ptr[j]..ptr[j + 1] {
            let l = nbr[e];
            let f = [sign * feat[e][0], sign * feat[e][1], feat[e][2]];
            for q in 0..d {
                if pre[e * d + q] <= 0.0 {
                    continue;
                }
                let g = gs[j * d + q];
                gpq[j * 2 * d + q] += g;
                gpq[l * 2 * d + d + q] += g;
                let we = mlp.w1 + q * nin + 2 * d;
                grad[we] += g * f[0];
                grad[we + 1] += g * f[1];
                grad[we + 2] += g * f[2];
            }
        }
    }

    for j in 0..n {
        let hj = &h[j * d..(j + 1) * d];
        for q in 0..d {
            let gp = gpq[j * 2 * d + q];
            let gq = gpq[j * 2 * d + d + q];
            grad[mlp.b1 + q] += gp;
            let row = mlp.w1 + q * nin;
            for i in 0..d {
                grad[row + i] += gp * hj[i];
                grad[row + d + i] += gq * hj[i];
                g_h[j * d + i] += p[row + i] * gp + p[row + d + i] * gq;
            }
        }
    }
}

/// Summed training loss and summed gradient over `graphs`.
///
/// Graphs are processed concurrently and reduced in slice order, so the result
/// does not depend on the thread count.
pub fn batch_gradient(model: &DssModel, graphs: &[&LocalGraph]) -> Result<(f64, Vec<f64>)> {
    let parts = graphs
        .par_iter()
        .map(|g| {
            let trace = forward(model, g)?;
            let loss = training_loss(&trace, g)?;
            let grad = backward(model, g, &trace)?;
            Ok((loss, grad))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}
