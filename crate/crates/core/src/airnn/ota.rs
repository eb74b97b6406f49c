//! Gradients computed over the air, as the two transceivers would.
//!
//! These use the Wirtinger derivative `D = ∂L/∂z = conj(G)/2`, where
//! `G = ∂L/∂Re + j·∂L/∂Im` is the convention of
//! [`backward`](super::network::backward). A linear map `y = A·x` then gives
//! `D_A = D_y·x^T`.

use crate::numerics::CMatrix;

/// `conj(G)/2`.
pub fn to_wirtinger(g: &CMatrix<f64>) -> CMatrix<f64> {
    g.map(|z| z.conj() * 0.5)
}

/// `2·conj(D)`.
pub fn from_wirtinger(d: &CMatrix<f64>) -> CMatrix<f64> {
    d.map(|z| z.conj() * 2.0)
}

/// Receiver-side combiner gradient `D_y·r^T`, summed over the batch columns,
/// from the received signal `r = H·F1·x + n` alone.
pub fn ota_grad_f2(upstream: &CMatrix<f64>, received: &CMatrix<f64>) -> CMatrix<f64> {
    upstream * received.transpose()
}

/// What the transmitter obtains after the receiver sends `D_y` back through
/// the reciprocal channel `(F2·H)^T`.
#[derive(Debug, Clone)]
pub struct FeedbackGradient {
    /// Received feedback `ĝ = (F2·H)^T·D_y + n`.
    pub received: CMatrix<f64>,
    /// `ĝ·x^T`: the precoder gradient plus `n·x^T`.
    pub f1: CMatrix<f64>,
}

/// Transmitter-side precoder gradient from noisy feedback.
///
/// `cascade` is the forward cascade `F2·H`; the transmitter never sees it
/// directly, it only receives its transpose applied to `upstream`.
pub fn ota_grad_f1(
    cascade: &CMatrix<f64>,
    upstream: &CMatrix<f64>,
    x: &CMatrix<f64>,
    fb_noise: &CMatrix<f64>,
) -> FeedbackGradient {
    let received = cascade.transpose() * upstream + fb_noise;
    let f1 = &received * x.transpose();
    FeedbackGradient { received, f1 }
}

/// `n·x^T`, the error term of [`ota_grad_f1`].
pub fn feedback_error(fb_noise: &CMatrix<f64>, x: &CMatrix<f64>) -> CMatrix<f64> {
    fb_noise * x.transpose()
}
