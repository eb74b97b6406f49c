//! Forward and backward passes of the over-the-air network.
//!
//! Activations are stored column-per-sample. Complex gradients follow the
//! convention `G = ∂L/∂Re + j·∂L/∂Im`, under which `Y = A·X` back-propagates
//! as `G_X = A^H·G_Y` and `G_A = G_Y·X^H`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use super::state::{NetState, Params, PhaseParams};
use super::{TrainConfig, BN_EPS, BN_MOMENTUM, CONV_CHANNELS, CONV_KERNEL, CONV_OUT, CONV_PAD, CONV_STRIDE, FEATURES};
use crate::channel::{effective_channel, ChannelRealization, RisPhases};
use crate::data::{Dataset, PIXELS, SIDE};
use crate::error::{mismatch, Result};
use crate::numerics::{frobenius_sq, inner, modulus, CMatrix, CVector};

/// Floor on `‖F1·X‖_F` in the power normalization.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Batch {
    /// `784 × B`, row-major pixels per column, values in `[0, 1]`.
    pub images: DMatrix<f64>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_dataset(ds: &Dataset, indices: &[usize]) -> Self {
        let mut images = DMatrix::zeros(PIXELS, indices.len());
        for (col, &i) in indices.iter().enumerate() {
            for (p, &byte) in ds.image_bytes(i).iter().enumerate() {
                images[(p, col)] = byte as f64 / 255.0;
            }
        }
        Batch {
            images,
            labels: indices.iter().map(|&i| ds.label(i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Which batch-norm statistics the forward pass uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Batch,
    Running,
}

/// `CN(0, σ²)` entries, `n × b`.
pub fn draw_noise<R: Rng>(rng: &mut R, n: usize, b: usize, sigma2: f64) -> CMatrix<f64> {
    let s = (sigma2 / 2.0).sqrt();
    CMatrix::from_fn(n, b, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * s, im * s)
    })
}

#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat_re: DMatrix<f64>,
    pub xhat_im: DMatrix<f64>,
    pub inv_std_re: DVector<f64>,
    pub inv_std_im: DVector<f64>,
    pub mean_re: DVector<f64>,
    pub mean_im: DVector<f64>,
    pub var_re: DVector<f64>,
    pub var_im: DVector<f64>,
}

/// Every intermediate of one forward pass.
#[derive(Debug, Clone)]
pub struct Caches {
    pub images: DMatrix<f64>,
    /// Conv output, channel-major `2·7·7 × B`.
    pub conv: DMatrix<f64>,
    /// After R2C.
    pub z0: CMatrix<f64>,
    pub a1: CMatrix<f64>,
    pub h1: CMatrix<f64>,
    pub bn: BnCache,
    pub h2: CMatrix<f64>,
    /// Encoder output, input to the power normalization.
    pub a2: CMatrix<f64>,
    /// `F1·a2`.
    pub z: CMatrix<f64>,
    /// `‖F1·a2‖_F` before flooring.
    pub z_norm: f64,
    pub scale: f64,
    /// Normalized precoder input `X_out`.
    pub x_out: CMatrix<f64>,
    /// Transmitted signal `F1·X_out`.
    pub s: CMatrix<f64>,
    pub phases: RisPhases<f64>,
    pub h: CMatrix<f64>,
    pub noise: CMatrix<f64>,
    /// Received signal `H·S + n`.
    pub r: CMatrix<f64>,
    /// Combiner output.
    pub y: CMatrix<f64>,
    /// C2R output `[Re y; Im y]`.
    pub c2r: DMatrix<f64>,
    pub logits: DMatrix<f64>,
}

fn conv_forward(w: &DVector<f64>, b: &DVector<f64>, images: &DMatrix<f64>) -> DMatrix<f64> {
    let per = CONV_OUT * CONV_OUT;
    let mut out = DMatrix::zeros(CONV_CHANNELS * per, images.ncols());
    for col in 0..images.ncols() {
        let img = images.column(col);
        for c in 0..CONV_CHANNELS {
            for i in 0..CONV_OUT {
                for j in 0..CONV_OUT {
                    let mut acc = b[c];
                    for u in 0..CONV_KERNEL {
                        let Some(row) = (CONV_STRIDE * i + u).checked_sub(CONV_PAD).filter(|&r| r < SIDE) else {
                            continue;
                        };
                        for v in 0..CONV_KERNEL {
                            let Some(px) = (CONV_STRIDE * j + v).checked_sub(CONV_PAD).filter(|&q| q < SIDE) else {
                                continue;
                            };
                            acc += w[(c * CONV_KERNEL + u) * CONV_KERNEL + v] * img[row * SIDE + px];
                        }
                    }
                    out[(c * per + i * CONV_OUT + j, col)] = acc;
                }
            }
        }
    }
    out
}

fn conv_backward(g_out: &DMatrix<f64>, images: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let per = CONV_OUT * CONV_OUT;
    let mut gw = DVector::zeros(CONV_CHANNELS * CONV_KERNEL * CONV_KERNEL);
    let mut gb = DVector::zeros(CONV_CHANNELS);
    for col in 0..images.ncols() {
        let img = images.column(col);
        for c in 0..CONV_CHANNELS {
            for i in 0..CONV_OUT {
                for j in 0..CONV_OUT {
                    let g = g_out[(c * per + i * CONV_OUT + j, col)];
                    if g == 0.0 {
                        continue;
                    }
                    gb[c] += g;
                    for u in 0..CONV_KERNEL {
                        let Some(row) = (CONV_STRIDE * i + u).checked_sub(CONV_PAD).filter(|&r| r < SIDE) else {
                            continue;
                        };
                        for v in 0..CONV_KERNEL {
                            let Some(px) = (CONV_STRIDE * j + v).checked_sub(CONV_PAD).filter(|&q| q < SIDE) else {
                                continue;
                            };
                            gw[(c * CONV_KERNEL + u) * CONV_KERNEL + v] += g * img[row * SIDE + px];
                        }
                    }
                }
            }
        }
    }
    (gw, gb)
}

/// Interleaved pairing: entry `2k` is the real part of feature `k`, `2k+1`
/// the imaginary part.
pub fn r2c(x: &DMatrix<f64>) -> CMatrix<f64> {
    CMatrix::from_fn(x.nrows() / 2, x.ncols(), |k, c| {
        Complex::new(x[(2 * k, c)], x[(2 * k + 1, c)])
    })
}

fn r2c_backward(g: &CMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(2 * g.nrows(), g.ncols(), |r, c| {
        let z = g[(r / 2, c)];
        if r % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

/// `[Re y; Im y]`.
pub fn c2r(y: &CMatrix<f64>) -> DMatrix<f64> {
    let n = y.nrows();
    DMatrix::from_fn(
        2 * n,
        y.ncols(),
        |r, c| if r < n { y[(r, c)].re } else { y[(r - n, c)].im },
    )
}

fn c2r_backward(g: &DMatrix<f64>) -> CMatrix<f64> {
    let n = g.nrows() / 2;
    CMatrix::from_fn(n, g.ncols(), |r, c| Complex::new(g[(r, c)], g[(r + n, c)]))
}

/// Split ReLU on real and imaginary parts.
pub fn crelu(x: &CMatrix<f64>) -> CMatrix<f64> {
    x.map(|z| Complex::new(z.re.max(0.0), z.im.max(0.0)))
}

fn crelu_backward(g: &CMatrix<f64>, pre: &CMatrix<f64>) -> CMatrix<f64> {
    g.zip_map(pre, |g, p| {
        Complex::new(if p.re > 0.0 { g.re } else { 0.0 }, if p.im > 0.0 { g.im } else { 0.0 })
    })
}

fn column_broadcast(v: &CMatrix<f64>, b: &nalgebra::DVector<Complex<f64>>) -> CMatrix<f64> {
    let mut out = v.clone();
    for mut col in out.column_iter_mut() {
        col += b;
    }
    out
}

/// Per-feature standardization of one real part.
fn bn_part(
    x: &DMatrix<f64>,
    gamma: &DVector<f64>,
    beta: &DVector<f64>,
    stats: Option<(&DVector<f64>, &DVector<f64>)>,
) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
    let (n, b) = x.shape();
    let (mean, var) = match stats {
        Some((m, v)) => (m.clone(), v.clone()),
        None => {
            let mean = DVector::from_fn(n, |i, _| x.row(i).sum() / b as f64);
            let var = DVector::from_fn(n, |i, _| {
                x.row(i).iter().map(|&e| (e - mean[i]).powi(2)).sum::<f64>() / b as f64
            });
            (mean, var)
        }
    };
    let inv_std = var.map(|v| 1.0 / (v + BN_EPS).sqrt());
    let xhat = DMatrix::from_fn(n, b, |i, c| (x[(i, c)] - mean[i]) * inv_std[i]);
    let y = DMatrix::from_fn(n, b, |i, c| gamma[i] * xhat[(i, c)] + beta[i]);
    (y, xhat, inv_std, mean, var)
}

fn bn_part_backward(
    g: &DMatrix<f64>,
    xhat: &DMatrix<f64>,
    inv_std: &DVector<f64>,
    gamma: &DVector<f64>,
) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let (n, b) = g.shape();
    let bf = b as f64;
    let g_gamma = DVector::from_fn(n, |i, _| g.row(i).dot(&xhat.row(i)));
    let g_beta = DVector::from_fn(n, |i, _| g.row(i).sum());
    let gx = DMatrix::from_fn(n, b, |i, c| {
        gamma[i] * inv_std[i] * (g[(i, c)] - g_beta[i] / bf - xhat[(i, c)] * g_gamma[i] / bf)
    });
    (gx, g_gamma, g_beta)
}

/// Full forward pass with an explicit noise realization (`N × B`).
///
/// `power_share` scales the transmit power of a partial batch so that the
/// per-sample power matches a full one; it is 1 during training.
pub fn forward(
    state: &NetState,
    images: &DMatrix<f64>,
    ch: &ChannelRealization<f64>,
    noise: &CMatrix<f64>,
    bn_mode: BnMode,
    power_share: f64,
) -> Result<Caches> {
    let p = &state.params;
    let n = state.n();
    let b = images.ncols();
    if images.nrows() != PIXELS || noise.shape() != (n, b) || ch.n() != n {
        return Err(mismatch(format!(
            "images {:?}, noise {:?}, channel N={}, state N={n}",
            images.shape(),
            noise.shape(),
            ch.n()
        )));
    }
    let conv = conv_forward(&p.conv_w, &p.conv_b, images);
    let z0 = r2c(&conv);
    debug_assert_eq!(z0.nrows(), FEATURES);
    let a1 = crelu(&z0);
    let h1 = column_broadcast(&(&p.fc_w * &a1), &p.fc_b);

    let re = h1.map(|z| z.re);
    let im = h1.map(|z| z.im);
    let running = &state.bn_running;
    let (stats_re, stats_im) = match bn_mode {
        BnMode::Batch => (None, None),
        BnMode::Running => (
            Some((&running.mean_re, &running.var_re)),
            Some((&running.mean_im, &running.var_im)),
        ),
    };
    let (y_re, xhat_re, inv_std_re, mean_re, var_re) = bn_part(&re, &p.bn_gamma_re, &p.bn_beta_re, stats_re);
    let (y_im, xhat_im, inv_std_im, mean_im, var_im) = bn_part(&im, &p.bn_gamma_im, &p.bn_beta_im, stats_im);
    let h2 = y_re.zip_map(&y_im, Complex::new);
    let a2 = crelu(&h2);

    let z = &p.f1 * &a2;
    let z_norm = frobenius_sq(&z).sqrt();
    let scale = (p.p_tx * power_share).sqrt() / z_norm.max(NORM_FLOOR);
    let x_out = &a2 * Complex::new(scale, 0.0);
    let s = &z * Complex::new(scale, 0.0);

    let phases = state.phases();
    let h = effective_channel(ch, &phases)?;
    let r = &h * &s + noise;
    let y = &p.f2 * &r;
    let c2r_out = c2r(&y);
    let mut logits = &p.out_w * &c2r_out;
    for mut col in logits.column_iter_mut() {
        col += &p.out_b;
    }

    Ok(Caches {
        images: images.clone(),
        conv,
        z0,
        a1,
        h1,
        bn: BnCache {
            xhat_re,
            xhat_im,
            inv_std_re,
            inv_std_im,
            mean_re,
            mean_im,
            var_re,
            var_im,
        },
        h2,
        a2,
        z,
        z_norm,
        scale,
        x_out,
        s,
        phases,
        h,
        noise: noise.clone(),
        r,
        y,
        c2r: c2r_out,
        logits,
    })
}

/// Folds the batch statistics of a training forward pass into the running
/// estimates (unbiased variance, momentum [`BN_MOMENTUM`]).
pub fn update_running_stats(state: &mut NetState, caches: &Caches) {
    let b = caches.bn.xhat_re.ncols() as f64;
    let unbias = if b > 1.0 { b / (b - 1.0) } else { 1.0 };
    let m = BN_MOMENTUM;
    let r = &mut state.bn_running;
    r.mean_re = &r.mean_re * (1.0 - m) + &caches.bn.mean_re * m;
    r.mean_im = &r.mean_im * (1.0 - m) + &caches.bn.mean_im * m;
    r.var_re = &r.var_re * (1.0 - m) + &caches.bn.var_re * (m * unbias);
    r.var_im = &r.var_im * (1.0 - m) + &caches.bn.var_im * (m * unbias);
}

fn softmax_column(logits: &DMatrix<f64>, c: usize) -> DVector<f64> {
    let col = logits.column(c);
    let mx = col.max();
    let e = col.map(|x| (x - mx).exp());
    let s = e.sum();
    e / s
}

/// Mean cross-entropy over the batch.
pub fn cross_entropy(logits: &DMatrix<f64>, labels: &[usize]) -> f64 {
    let b = labels.len() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(c, &y)| {
            let col = logits.column(c);
            let mx = col.max();
            let lse = mx + col.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln();
            lse - col[y]
        })
        .sum::<f64>()
        / b
}

/// `λ_p·max(0, P_Tx − P_max)`.
pub fn power_penalty(p_tx: f64, p_max: f64, lambda_p: f64) -> f64 {
    lambda_p * (p_tx - p_max).max(0.0)
}

/// `λ_RIS·Σ max(0, |v_m| − 1)`.
pub fn amplitude_penalty(phases: &RisPhases<f64>, lambda_ris: f64) -> f64 {
    lambda_ris
        * phases
            .values()
            .iter()
            .flat_map(|v| v.iter())
            .map(|z| (modulus(z) - 1.0).max(0.0))
            .sum::<f64>()
}

/// Penalized training loss. The amplitude term only exists for relaxed
/// coefficients.
pub fn loss(logits: &DMatrix<f64>, labels: &[usize], state: &NetState, cfg: &TrainConfig, p_max: f64) -> f64 {
    let mut l = cross_entropy(logits, labels) + power_penalty(state.params.p_tx, p_max, cfg.lambda_p);
    if let PhaseParams::Free(_) = state.params.phases {
        l += amplitude_penalty(&state.phases(), cfg.lambda_ris);
    }
    l
}

/// `∂L/∂logits` of the mean cross-entropy.
pub fn logits_grad(logits: &DMatrix<f64>, labels: &[usize]) -> DMatrix<f64> {
    let b = labels.len() as f64;
    let mut g = DMatrix::zeros(logits.nrows(), logits.ncols());
    for (c, &y) in labels.iter().enumerate() {
        let p = softmax_column(logits, c);
        for k in 0..logits.nrows() {
            g[(k, c)] = (p[k] - if k == y { 1.0 } else { 0.0 }) / b;
        }
    }
    g
}

/// Receiver-side gradients: output layer, combiner and the upstream signal.
#[derive(Debug, Clone)]
pub struct ReceiverGrads {
    pub out_w: DMatrix<f64>,
    pub out_b: DVector<f64>,
    pub f2: CMatrix<f64>,
    /// `G_Y`, gradient w.r.t. the combiner output.
    pub g_y: CMatrix<f64>,
    /// `G_R = F2^H·G_Y`, gradient w.r.t. the received signal.
    pub g_r: CMatrix<f64>,
}

pub fn receiver_backward(state: &NetState, caches: &Caches, labels: &[usize]) -> ReceiverGrads {
    let p = &state.params;
    let g_logits = logits_grad(&caches.logits, labels);
    let out_w = &g_logits * caches.c2r.transpose();
    let out_b = DVector::from_fn(g_logits.nrows(), |k, _| g_logits.row(k).sum());
    let g_c2r = p.out_w.transpose() * &g_logits;
    let g_y = c2r_backward(&g_c2r);
    let f2 = &g_y * caches.r.adjoint();
    let g_r = p.f2.adjoint() * &g_y;
    ReceiverGrads {
        out_w,
        out_b,
        f2,
        g_y,
        g_r,
    }
}

/// Transmitter-side gradients given the gradient `G_S` w.r.t. the transmitted
/// signal `S = F1·X_out`.
#[derive(Debug, Clone)]
pub struct TransmitterGrads {
    pub conv_w: DVector<f64>,
    pub conv_b: DVector<f64>,
    pub fc_w: CMatrix<f64>,
    pub fc_b: CVector<f64>,
    pub bn_gamma_re: DVector<f64>,
    pub bn_gamma_im: DVector<f64>,
    pub bn_beta_re: DVector<f64>,
    pub bn_beta_im: DVector<f64>,
    /// Full precoder gradient including the normalization pathway.
    pub f1: CMatrix<f64>,
    /// Normalization pathway of `∂L/∂P_Tx` plus the hinge penalty.
    pub p_tx: f64,
}

/// Local correction of the precoder gradient for the power normalization:
/// `−(Re⟨G_S, S⟩/‖S‖²)·S·X_out^H`. Zero when the norm floor is active.
pub fn normalization_correction(g_s: &CMatrix<f64>, caches: &Caches) -> CMatrix<f64> {
    if caches.z_norm < NORM_FLOOR {
        return CMatrix::zeros(g_s.nrows(), caches.x_out.nrows());
    }
    let s_sq = frobenius_sq(&caches.s);
    let coef = inner(g_s, &caches.s).re / s_sq;
    &caches.s * caches.x_out.adjoint() * Complex::new(-coef, 0.0)
}

pub fn transmitter_backward(
    state: &NetState,
    caches: &Caches,
    g_s: &CMatrix<f64>,
    cfg: &TrainConfig,
    p_max: f64,
) -> TransmitterGrads {
    let p = &state.params;
    // S = c·Z with c = √P_Tx / ‖Z‖ and Z = F1·a2.
    let c = caches.scale;
    let mut g_z = g_s * Complex::new(c, 0.0);
    if caches.z_norm >= NORM_FLOOR {
        let n2 = caches.z_norm * caches.z_norm;
        let coef = c * inner(g_s, &caches.z).re / n2;
        g_z -= &caches.z * Complex::new(coef, 0.0);
    }
    let f1 = &g_z * caches.a2.adjoint();
    let g_a2 = p.f1.adjoint() * &g_z;
    let p_tx_norm = if p.p_tx > 0.0 {
        inner(g_s, &caches.s).re / (2.0 * p.p_tx)
    } else {
        0.0
    };
    let p_tx = p_tx_norm + if p.p_tx > p_max { cfg.lambda_p } else { 0.0 };

    let g_h2 = crelu_backward(&g_a2, &caches.h2);
    let g_re = g_h2.map(|z| z.re);
    let g_im = g_h2.map(|z| z.im);
    let (gx_re, bn_gamma_re, bn_beta_re) =
        bn_part_backward(&g_re, &caches.bn.xhat_re, &caches.bn.inv_std_re, &p.bn_gamma_re);
    let (gx_im, bn_gamma_im, bn_beta_im) =
        bn_part_backward(&g_im, &caches.bn.xhat_im, &caches.bn.inv_std_im, &p.bn_gamma_im);
    let g_h1 = gx_re.zip_map(&gx_im, Complex::new);

    let fc_w = &g_h1 * caches.a1.adjoint();
    let fc_b = CVector::from_fn(g_h1.nrows(), |k, _| g_h1.row(k).sum());
    let g_a1 = p.fc_w.adjoint() * &g_h1;
    let g_z0 = crelu_backward(&g_a1, &caches.z0);
    let g_conv = r2c_backward(&g_z0);
    let (conv_w, conv_b) = conv_backward(&g_conv, &caches.images);

    TransmitterGrads {
        conv_w,
        conv_b,
        fc_w,
        fc_b,
        bn_gamma_re,
        bn_gamma_im,
        bn_beta_re,
        bn_beta_im,
        f1,
        p_tx,
    }
}

/// Gradient w.r.t. the stacked RIS coefficients from `G_H`:
/// `G_{v_m} = [Ĥ^H·G_H·H̄^H]_{mm}`.
pub fn phase_coefficient_grad(ch: &ChannelRealization<f64>, g_h: &CMatrix<f64>) -> CVector<f64> {
    let rx = ch.stacked_ris_to_rx(); // N × M
    let tx = ch.stacked_tx_to_ris(); // M × N
    let left = rx.adjoint() * g_h; // M × N
    CVector::from_fn(tx.nrows(), |m, _| {
        left.row(m)
            .iter()
            .zip(tx.row(m).iter())
            .fold(Complex::new(0.0, 0.0), |acc, (a, b)| acc + a * b.conj())
    })
}

/// Gradients of the penalized loss w.r.t. every trainable parameter, plus the
/// intermediate signal gradients.
#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Params,
    pub g_y: CMatrix<f64>,
    pub g_s: CMatrix<f64>,
}

/// Exact centralized backward pass (the noise realization is a constant).
pub fn backward(
    state: &NetState,
    caches: &Caches,
    labels: &[usize],
    ch: &ChannelRealization<f64>,
    cfg: &TrainConfig,
    p_max: f64,
) -> Backward {
    let rx = receiver_backward(state, caches, labels);
    let g_s = caches.h.adjoint() * &rx.g_r;
    let tx = transmitter_backward(state, caches, &g_s, cfg, p_max);

    let phases = match &state.params.phases {
        PhaseParams::Frozen => PhaseParams::Frozen,
        params => {
            let g_h = &rx.g_r * caches.s.adjoint();
            let g_v = phase_coefficient_grad(ch, &g_h);
            let v = caches.phases.flat();
            match params {
                PhaseParams::Angles(_) => {
                    // v = exp(jθ): ∂L/∂θ = −Im(conj(G_v)·v)
                    PhaseParams::Angles(DVector::from_fn(v.len(), |m, _| -(g_v[m].conj() * v[m]).im))
                }
                _ => PhaseParams::Free(CVector::from_fn(v.len(), |m, _| {
                    let r = modulus(&v[m]);
                    let pen = if r > 1.0 {
                        v[m] * (cfg.lambda_ris / r)
                    } else {
                        Complex::new(0.0, 0.0)
                    };
                    g_v[m] + pen
                })),
            }
        }
    };

    Backward {
        grads: Params {
            conv_w: tx.conv_w,
            conv_b: tx.conv_b,
            fc_w: tx.fc_w,
            fc_b: tx.fc_b,
            bn_gamma_re: tx.bn_gamma_re,
            bn_gamma_im: tx.bn_gamma_im,
            bn_beta_re: tx.bn_beta_re,
            bn_beta_im: tx.bn_beta_im,
            f1: tx.f1,
            f2: rx.f2,
            phases,
            p_tx: tx.p_tx,
            out_w: rx.out_w,
            out_b: rx.out_b,
        },
        g_y: rx.g_y,
        g_s,
    }
}

/// Predicted class per column.
pub fn predictions(logits: &DMatrix<f64>) -> Vec<usize> {
    (0..logits.ncols()).map(|c| logits.column(c).imax()).collect()
}
