//! Alternating optimization of precoder, combiner and RIS coefficients so that
//! the over-the-air map `F2·H(v)·F1` reproduces a target weight matrix.
//!
//! The objective is
//!
//! ```text
//! ‖F2·H·F1 − W‖_F² + σ²·tr(F2·F2^H)      s.t. ‖F1‖_F² ≤ P_max,  |v_m| = 1 (or ≤ 1)
//! ```
//!
//! and each block has a (semi-)closed-form update:
//!
//! * precoder: regularized least squares `(Υ^HΥ + λI)^{-1}Υ^H W` with the
//!   multiplier `λ` found by bisection on the power, `Υ = F2·H`;
//! * combiner: `W·Ῡ^H·(Ῡ·Ῡ^H + σ²I)^{-1}`, `Ῡ = H·F1`;
//! * RIS: the objective is a quadratic `v^HΩv − 2Re{v^Tφ} + const` in the
//!   stacked coefficients; unit-modulus coefficients are updated by
//!   majorization-minimization, relaxed ones by projected gradient.

use nalgebra::DVector;
use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{effective_channel, ChannelRealization, ReflectionMode, RisPhases, SystemConfig};
use crate::error::{mismatch, Error, Result};
use crate::numerics::{
    ensure_finite, frobenius_sq, hermitian_eig, modulus, right_solve_hermitian, trace, CMatrix, CVector, Real,
};

/// Digital fully-connected layer `y = W·x + b` to be emulated.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetLayer<T: Real> {
    pub w: CMatrix<T>,
    pub b: CVector<T>,
}

impl<T: Real> TargetLayer<T> {
    pub fn new(w: CMatrix<T>, b: CVector<T>) -> Result<Self> {
        if !w.is_square() || b.len() != w.nrows() {
            return Err(mismatch(format!("target layer W {:?}, b {}", w.shape(), b.len())));
        }
        ensure_finite(&w, "target weights")?;
        Ok(TargetLayer { w, b })
    }

    /// Seeded layer with i.i.d. `CN(0, 1/n)` weights and zero bias.
    pub fn random(n: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let s = (0.5 / n as f64).sqrt();
        let w = CMatrix::from_fn(n, n, |_, _| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex::new(T::lit(re * s), T::lit(im * s))
        });
        TargetLayer {
            w,
            b: CVector::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }
}

/// Precoder, combiner and RIS coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionParams<T: Real> {
    pub f1: CMatrix<T>,
    pub f2: CMatrix<T>,
    pub phases: RisPhases<T>,
}

impl<T: Real> TransmissionParams<T> {
    /// Checks `‖F1‖_F² ≤ P_max(1 + 1e-9)`.
    pub fn satisfies_power(&self, p_max: f64) -> bool {
        frobenius_sq(&self.f1).as_f64() <= p_max * (1.0 + 1e-9)
    }

    /// Over-the-air layer output `F2(H·F1·x + n) + b` for one input column.
    pub fn apply(
        &self,
        ch: &ChannelRealization<T>,
        target: &TargetLayer<T>,
        x: &CVector<T>,
        noise: &CVector<T>,
    ) -> Result<CVector<T>> {
        let h = effective_channel(ch, &self.phases)?;
        Ok(&self.f2 * (h * (&self.f1 * x) + noise) + &target.b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationReport {
    /// `‖F2·H·F1 − W‖_F²`.
    pub weight_error: f64,
    /// `σ²·tr(F2·F2^H)`.
    pub bias_error: f64,
    pub sum_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every block update.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorTerms {
    pub weight_error: f64,
    pub bias_error: f64,
}

impl ErrorTerms {
    pub fn sum(&self) -> f64 {
        self.weight_error + self.bias_error
    }
}

fn check_square(name: &str, a: &CMatrix<impl Real>, n: usize) -> Result<()> {
    if a.shape() != (n, n) {
        return Err(mismatch(format!("{name} is {:?}, expected {n}x{n}", a.shape())));
    }
    Ok(())
}

fn weight_and_bias<T: Real>(f1: &CMatrix<T>, f2: &CMatrix<T>, h: &CMatrix<T>, w: &CMatrix<T>, sigma2: T) -> (T, T) {
    let weight = frobenius_sq(&(f2 * h * f1 - w));
    let bias = sigma2 * trace(&(f2 * f2.adjoint())).re;
    (weight, bias)
}

/// Evaluates the emulation objective for fixed parameters.
pub fn sum_error<T: Real>(
    params: &TransmissionParams<T>,
    ch: &ChannelRealization<T>,
    target: &TargetLayer<T>,
    sigma2: f64,
) -> Result<EmulationReport> {
    let n = target.n();
    if ch.n() != n {
        return Err(mismatch(format!("channel N={} vs target N={n}", ch.n())));
    }
    check_square("F1", &params.f1, n)?;
    check_square("F2", &params.f2, n)?;
    let h = effective_channel(ch, &params.phases)?;
    let (we, be) = weight_and_bias(&params.f1, &params.f2, &h, &target.w, T::lit(sigma2));
    let terms = ErrorTerms {
        weight_error: we.as_f64(),
        bias_error: be.as_f64(),
    };
    Ok(EmulationReport {
        weight_error: terms.weight_error,
        bias_error: terms.bias_error,
        sum_error: terms.sum(),
        iterations: 0,
        converged: true,
        objective_trace: vec![terms.sum()],
    })
}

/// Result of the precoder block update.
#[derive(Debug, Clone)]
pub struct PrecoderSolution<T: Real> {
    pub f1: CMatrix<T>,
    /// Lagrange multiplier of the power constraint.
    pub lambda: T,
    /// `‖F1‖_F²`.
    pub power: T,
    /// Bisection upper bound `λ_up` (zero when the constraint is inactive).
    pub lambda_up: T,
}

/// Power profile `‖F1(λ)‖_F² = Σ_i a_i/(σ_i + λ)²` of the regularized
/// least-squares precoder, built from one eigendecomposition of `Υ^HΥ`.
#[derive(Debug, Clone)]
pub struct PowerProfile<T: Real> {
    eig: crate::numerics::HermitianEig<T>,
    /// `U^H Υ^H W`.
    projected: CMatrix<T>,
    /// `a_i = [U^HΥ^H W W^H Υ U]_{ii}`.
    weights: Vec<T>,
    cutoff: T,
}

impl<T: Real> PowerProfile<T> {
    pub fn new(upsilon: &CMatrix<T>, w: &CMatrix<T>) -> Result<Self> {
        let gram = upsilon.adjoint() * upsilon;
        let eig = hermitian_eig(&gram)?;
        let projected = eig.vectors.adjoint() * upsilon.adjoint() * w;
        let weights = projected
            .row_iter()
            .map(|r| r.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr()))
            .collect();
        // Only modes at the rounding floor of the Gram matrix count as null;
        // anything above carries real (possibly enormous) power at λ = 0.
        let floor = T::default_epsilon() * T::lit(10.0 * gram.nrows().max(1) as f64);
        let cutoff = floor * eig.max_eigenvalue().max(T::zero());
        Ok(PowerProfile {
            eig,
            projected,
            weights,
            cutoff,
        })
    }

    fn mode_active(&self, i: usize, lambda: T) -> bool {
        lambda > T::zero() || self.eig.values[i] > self.cutoff
    }

    /// `‖F1(λ)‖_F²`; modes with zero eigenvalue are excluded at `λ = 0`.
    pub fn power(&self, lambda: T) -> T {
        self.weights
            .iter()
            .enumerate()
            .filter(|&(i, _)| self.mode_active(i, lambda))
            .fold(T::zero(), |acc, (i, &a)| {
                let d = self.eig.values[i] + lambda;
                acc + a / (d * d)
            })
    }

    /// `λ_up = sqrt(Σ a_i / P_max)`, for which `‖F1(λ_up)‖_F² ≤ P_max`.
    pub fn lambda_upper(&self, p_max: T) -> T {
        let total = self.weights.iter().fold(T::zero(), |a, &b| a + b);
        (total / p_max).sqrt()
    }

    /// `F1(λ) = U (Σ + λI)^† U^H Υ^H W`.
    pub fn precoder(&self, lambda: T) -> CMatrix<T> {
        let mut scaled = self.projected.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            let s = if self.mode_active(i, lambda) {
                T::one() / (self.eig.values[i] + lambda)
            } else {
                T::zero()
            };
            row *= Complex::new(s, T::zero());
        }
        &self.eig.vectors * scaled
    }
}

/// Optimal precoder for a fixed cascade `Υ` under `‖F1‖_F² ≤ P_max`.
///
/// `tol` is the bisection tolerance on the power residual, relative to
/// `P_max`.
pub fn precoder_for_cascade<T: Real>(
    upsilon: &CMatrix<T>,
    w: &CMatrix<T>,
    p_max: T,
    tol: T,
) -> Result<PrecoderSolution<T>> {
    if upsilon.nrows() != w.nrows() {
        return Err(mismatch(format!(
            "cascade {:?} vs target {:?}",
            upsilon.shape(),
            w.shape()
        )));
    }
    let profile = PowerProfile::new(upsilon, w)?;
    let p0 = profile.power(T::zero());
    if p0 < p_max {
        return Ok(PrecoderSolution {
            f1: profile.precoder(T::zero()),
            lambda: T::zero(),
            power: p0,
            lambda_up: T::zero(),
        });
    }
    let up = profile.lambda_upper(p_max);
    let (mut lo, mut hi) = (T::zero(), up);
    let mut lambda = up;
    for _ in 0..200 {
        lambda = (lo + hi) * T::lit(0.5);
        let residual = profile.power(lambda) - p_max;
        if residual.abs() <= tol * p_max {
            break;
        }
        if residual > T::zero() {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if hi - lo <= T::default_epsilon() * hi {
            break;
        }
    }
    let f1 = profile.precoder(lambda);
    let power = frobenius_sq(&f1);
    Ok(PrecoderSolution {
        f1,
        lambda,
        power,
        lambda_up: up,
    })
}

/// Default bisection tolerance on the relative power residual.
pub const BISECTION_TOL: f64 = 1e-9;

/// Precoder block update for fixed combiner and RIS coefficients.
pub fn update_precoder<T: Real>(
    f2: &CMatrix<T>,
    phases: &RisPhases<T>,
    ch: &ChannelRealization<T>,
    target: &TargetLayer<T>,
    p_max: f64,
) -> Result<PrecoderSolution<T>> {
    let h = effective_channel(ch, phases)?;
    check_square("F2", f2, target.n())?;
    precoder_for_cascade(&(f2 * h), &target.w, T::lit(p_max), T::lit(BISECTION_TOL))
}

/// `F2 = W·Ῡ^H·(Ῡ·Ῡ^H + σ²I)^{-1}` (pseudo-inverse when singular).
pub fn combiner_for_cascade<T: Real>(ubar: &CMatrix<T>, w: &CMatrix<T>, sigma2: T) -> Result<CMatrix<T>> {
    let n = ubar.nrows();
    let gram = ubar * ubar.adjoint() + CMatrix::<T>::identity(n, n) * Complex::new(sigma2, T::zero());
    right_solve_hermitian(&(w * ubar.adjoint()), &gram)
}

/// Combiner block update for fixed precoder and RIS coefficients.
pub fn update_combiner<T: Real>(
    f1: &CMatrix<T>,
    phases: &RisPhases<T>,
    ch: &ChannelRealization<T>,
    target: &TargetLayer<T>,
    sigma2: f64,
) -> Result<CMatrix<T>> {
    let h = effective_channel(ch, phases)?;
    check_square("F1", f1, target.n())?;
    combiner_for_cascade(&(h * f1), &target.w, T::lit(sigma2))
}

/// `v^HΩv − 2Re{v^Tφ} + constant`, the weight error as a function of the
/// stacked RIS coefficients.
#[derive(Debug, Clone)]
pub struct QuadraticForm<T: Real> {
    pub omega: CMatrix<T>,
    pub phi: CVector<T>,
    pub constant: T,
}

impl<T: Real> QuadraticForm<T> {
    pub fn value(&self, v: &CVector<T>) -> T {
        self.value_given(v, &(&self.omega * v))
    }

    /// Same as [`value`](Self::value) with `Ω·v` already at hand.
    fn value_given(&self, v: &CVector<T>, omega_v: &CVector<T>) -> T {
        let quad = v.dotc(omega_v).re;
        let lin = v
            .iter()
            .zip(self.phi.iter())
            .fold(T::zero(), |acc, (a, b)| acc + (a * b).re);
        quad - T::lit(2.0) * lin + self.constant
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    /// MM upper bound of `v^HΩv` around `v_r` for unit-modulus `v`:
    /// `λM − 2Re{v^H(λI − Ω)v_r} + v_r^H(λI − Ω)v_r`.
    pub fn surrogate_quadratic(&self, v: &CVector<T>, v_r: &CVector<T>, lambda_max: T) -> T {
        let m = self.len();
        let shifted = CMatrix::<T>::identity(m, m) * Complex::new(lambda_max, T::zero()) - &self.omega;
        let cross = (v.adjoint() * &shifted * v_r)[(0, 0)].re;
        let own = (v_r.adjoint() * &shifted * v_r)[(0, 0)].re;
        lambda_max * T::lit(m as f64) - T::lit(2.0) * cross + own
    }
}

/// Builds `Ω = (Ĥ^H F2^H F2 Ĥ) ⊙ (H̄ F1 F1^H H̄^H)^T`,
/// `φ_m = [H̄ F1 W^H F2 Ĥ]_{mm}` and `constant = tr(W W^H)` from the stacked
/// hops.
pub fn build_quadratic_form<T: Real>(
    f1: &CMatrix<T>,
    f2: &CMatrix<T>,
    ch: &ChannelRealization<T>,
    target: &TargetLayer<T>,
) -> Result<QuadraticForm<T>> {
    let n = target.n();
    if ch.n() != n {
        return Err(mismatch(format!("channel N={} vs target N={n}", ch.n())));
    }
    check_square("F1", f1, n)?;
    check_square("F2", f2, n)?;
    let rx = ch.stacked_ris_to_rx();
    let tx = ch.stacked_tx_to_ris();
    let a = f2 * rx; // N x M
    let b = tx * f1; // M x N
    let omega = (a.adjoint() * &a).component_mul(&(&b * b.adjoint()).transpose());
    let cross = &b * target.w.adjoint() * &a;
    let phi = cross.diagonal();
    let constant = frobenius_sq(&target.w);
    Ok(QuadraticForm { omega, phi, constant })
}

/// Inner-loop settings for the RIS updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerSettings {
    /// Stop once the relative improvement of the quadratic drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for InnerSettings {
    fn default() -> Self {
        InnerSettings {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

fn relative_gain<T: Real>(before: T, after: T) -> T {
    (before - after) / before.abs().max(T::lit(1e-300))
}

/// One MM step `v = exp(j·arg((λ_max I − Ω)·v_r + φ*))`; entries with a zero
/// argument keep their current value.
pub fn mm_step<T: Real>(v_r: &CVector<T>, qf: &QuadraticForm<T>, lambda_max: T) -> CVector<T> {
    mm_step_given(v_r, &(&qf.omega * v_r), qf, lambda_max)
}

fn mm_step_given<T: Real>(v_r: &CVector<T>, omega_v: &CVector<T>, qf: &QuadraticForm<T>, lambda_max: T) -> CVector<T> {
    let c = v_r * Complex::new(lambda_max, T::zero()) - omega_v + qf.phi.map(|z| z.conj());
    CVector::from_iterator(
        c.len(),
        c.iter().zip(v_r.iter()).map(|(z, cur)| {
            let r = modulus(z);
            if r > T::zero() {
                z * Complex::new(T::one() / r, T::zero())
            } else {
                *cur
            }
        }),
    )
}

/// Repeated MM steps on the unit-modulus quadratic program. The quadratic is
/// non-increasing at every step.
pub fn update_phases_mm<T: Real>(
    v_current: &CVector<T>,
    qf: &QuadraticForm<T>,
    settings: InnerSettings,
) -> Result<CVector<T>> {
    if v_current.len() != qf.len() {
        return Err(mismatch(format!(
            "{} coefficients vs quadratic of size {}",
            v_current.len(),
            qf.len()
        )));
    }
    let lambda_max = hermitian_eig(&qf.omega)?.max_eigenvalue();
    let mut v = v_current.clone();
    let mut omega_v = &qf.omega * &v;
    let mut f = qf.value_given(&v, &omega_v);
    for _ in 0..settings.max_iter {
        let next = mm_step_given(&v, &omega_v, qf, lambda_max);
        let omega_next = &qf.omega * &next;
        let f_next = qf.value_given(&next, &omega_next);
        if f_next > f {
            // round-off only; the surrogate guarantees descent
            break;
        }
        let gain = relative_gain(f, f_next);
        v = next;
        omega_v = omega_next;
        f = f_next;
        if gain < T::lit(settings.tol) {
            break;
        }
    }
    Ok(v)
}

fn project_disk<T: Real>(v: &mut CVector<T>) {
    for z in v.iter_mut() {
        let r = modulus(z);
        if r > T::one() {
            *z *= Complex::new(T::one() / r, T::zero());
        }
    }
}

/// Projected gradient with step `1/λ_max(Ω)` on `|v_m| ≤ 1`.
///
/// For `Ω = 0` the problem is linear and the minimizer is the phase-aligned
/// boundary point `v_m = φ_m*/|φ_m|`.
pub fn update_phases_relaxed<T: Real>(
    v_current: &CVector<T>,
    qf: &QuadraticForm<T>,
    settings: InnerSettings,
) -> Result<CVector<T>> {
    if v_current.len() != qf.len() {
        return Err(mismatch(format!(
            "{} coefficients vs quadratic of size {}",
            v_current.len(),
            qf.len()
        )));
    }
    let lambda_max = hermitian_eig(&qf.omega)?.max_eigenvalue();
    if lambda_max <= T::zero() {
        return Ok(CVector::from_iterator(
            qf.len(),
            qf.phi.iter().zip(v_current.iter()).map(|(p, cur)| {
                let r = modulus(p);
                if r > T::zero() {
                    p.conj() * Complex::new(T::one() / r, T::zero())
                } else {
                    *cur
                }
            }),
        ));
    }
    let step = Complex::new(T::one() / lambda_max, T::zero());
    let phi_conj = qf.phi.map(|z| z.conj());
    let mut v = v_current.clone();
    project_disk(&mut v);
    let mut f = qf.value(&v);
    for _ in 0..settings.max_iter {
        let grad = &qf.omega * &v - &phi_conj;
        let mut next = &v - grad * step;
        project_disk(&mut next);
        let f_next = qf.value(&next);
        if f_next > f {
            break;
        }
        let gain = relative_gain(f, f_next);
        v = next;
        f = f_next;
        if gain < T::lit(settings.tol) {
            break;
        }
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmSettings {
    /// Stop when the relative decrease over one outer iteration falls below
    /// this.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub mm: InnerSettings,
    pub relaxed: InnerSettings,
}

impl Default for AlgorithmSettings {
    fn default() -> Self {
        AlgorithmSettings {
            outer_tol: 1e-6,
            max_outer: 500,
            mm: InnerSettings::default(),
            relaxed: InnerSettings {
                tol: 1e-8,
                max_iter: 500,
            },
        }
    }
}

/// Hook invoked after every block update with the block name and objective.
pub type BlockObserver<'a> = &'a mut dyn FnMut(Block, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Init,
    Precoder,
    Combiner,
    Phases,
}

/// Alternating optimization over precoder, combiner and RIS coefficients.
///
/// Initialization: random unit-modulus phases (seeded from `cfg.seed`),
/// `F1 = √(P_max/N)·I`, and `F2` from the combiner update. Hitting the
/// iteration cap is reported through `converged = false`, not as an error.
pub fn run_algorithm1<T: Real>(
    cfg: &SystemConfig,
    ch: &ChannelRealization<T>,
    target: &TargetLayer<T>,
    mode: ReflectionMode,
    settings: &AlgorithmSettings,
) -> Result<(TransmissionParams<T>, EmulationReport)> {
    run_algorithm1_observed(cfg, ch, target, mode, settings, &mut |_, _| {})
}

pub fn run_algorithm1_observed<T: Real>(
    cfg: &SystemConfig,
    ch: &ChannelRealization<T>,
    target: &TargetLayer<T>,
    mode: ReflectionMode,
    settings: &AlgorithmSettings,
    observer: BlockObserver<'_>,
) -> Result<(TransmissionParams<T>, EmulationReport)> {
    cfg.validate()?;
    let n = target.n();
    if cfg.n != n || ch.n() != n {
        return Err(mismatch(format!(
            "config N={}, channel N={}, target N={n}",
            cfg.n,
            ch.n()
        )));
    }
    let sigma2 = T::lit(cfg.sigma2);
    let p_max = T::lit(cfg.p_max);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(u64::MAX);
    let mut phases = RisPhases::<T>::random_unit(&ch.ris_sizes(), &mut rng);
    let mut f1 = CMatrix::<T>::identity(n, n) * Complex::new((p_max / T::lit(n as f64)).sqrt(), T::zero());
    let mut h = effective_channel(ch, &phases)?;
    let mut f2 = combiner_for_cascade(&(&h * &f1), &target.w, sigma2)?;

    let objective = |f1: &CMatrix<T>, f2: &CMatrix<T>, h: &CMatrix<T>| {
        let (we, be) = weight_and_bias(f1, f2, h, &target.w, sigma2);
        (we + be).as_f64()
    };
    let mut trace_values = vec![objective(&f1, &f2, &h)];
    observer(Block::Init, trace_values[0]);

    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_outer {
        iterations += 1;
        let before = *trace_values.last().unwrap();

        f1 = precoder_for_cascade(&(&f2 * &h), &target.w, p_max, T::lit(BISECTION_TOL))?.f1;
        let obj = objective(&f1, &f2, &h);
        trace_values.push(obj);
        observer(Block::Precoder, obj);

        f2 = combiner_for_cascade(&(&h * &f1), &target.w, sigma2)?;
        let obj = objective(&f1, &f2, &h);
        trace_values.push(obj);
        observer(Block::Combiner, obj);

        let qf = build_quadratic_form(&f1, &f2, ch, target)?;
        let v = match mode {
            ReflectionMode::UnitModulus => update_phases_mm(&phases.flat(), &qf, settings.mm)?,
            ReflectionMode::Relaxed => update_phases_relaxed(&phases.flat(), &qf, settings.relaxed)?,
        };
        phases = phases.with_flat(mode, &v)?;
        h = effective_channel(ch, &phases)?;
        let obj = objective(&f1, &f2, &h);
        trace_values.push(obj);
        observer(Block::Phases, obj);

        if !obj.is_finite() {
            return Err(Error::NonFinite("emulation objective".into()));
        }
        if (before - obj) / before.abs().max(1e-300) < settings.outer_tol {
            converged = true;
            break;
        }
    }

    let (we, be) = weight_and_bias(&f1, &f2, &h, &target.w, sigma2);
    let report = EmulationReport {
        weight_error: we.as_f64(),
        bias_error: be.as_f64(),
        sum_error: (we + be).as_f64(),
        iterations,
        converged,
        objective_trace: trace_values,
    };
    Ok((TransmissionParams { f1, f2, phases }, report))
}

/// Unit vector helper for tests and diagnostics.
pub fn unit_vector<T: Real>(angles: &[f64]) -> CVector<T> {
    DVector::from_iterator(
        angles.len(),
        angles.iter().map(|&a| Complex::new(T::lit(a.cos()), T::lit(a.sin()))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, RicianFactor};
    use crate::numerics::test_support::random_cmatrix;
    use crate::numerics::{cplx, inner};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex<f64> {
        Complex::new(re, 0.0)
    }

    fn instance(n: usize, m: usize, seed: u64) -> (SystemConfig, ChannelRealization<f64>, TargetLayer<f64>) {
        let cfg = SystemConfig::single_ris(n, m, 2.0, 1.0, RicianFactor::Linear(3.0), seed);
        let ch = sample_channel(&cfg, 0).unwrap();
        (cfg, ch, TargetLayer::random(n, seed + 100))
    }

    #[test]
    fn sum_error_trivial_cases() {
        let (cfg, ch, _) = instance(2, 3, 1);
        let zero = CMatrix::<f64>::zeros(2, 2);
        let target0 = TargetLayer::new(zero.clone(), CVector::zeros(2)).unwrap();
        let params = TransmissionParams {
            f1: zero.clone(),
            f2: zero.clone(),
            phases: RisPhases::ones(&[3]),
        };
        assert_eq!(sum_error(&params, &ch, &target0, cfg.sigma2).unwrap().sum_error, 0.0);
        let target = TargetLayer::random(2, 9);
        let rep = sum_error(&params, &ch, &target, cfg.sigma2).unwrap();
        assert!((rep.sum_error - frobenius_sq(&target.w)).abs() < 1e-15);
    }

    #[test]
    fn sum_error_matches_naive_formula() {
        let (_, ch, target) = instance(2, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f1 = random_cmatrix(&mut rng, 2, 2);
        let f2 = random_cmatrix(&mut rng, 2, 2);
        let phases = RisPhases::random_unit(&[2], &mut rng);
        let rep = sum_error(
            &TransmissionParams {
                f1: f1.clone(),
                f2: f2.clone(),
                phases: phases.clone(),
            },
            &ch,
            &target,
            0.7,
        )
        .unwrap();
        // explicit index sums
        let link = &ch.links()[0];
        let v = phases.flat();
        let mut weight = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = c(0.0);
                for a in 0..2 {
                    for m in 0..2 {
                        for b in 0..2 {
                            acc += f2[(i, a)] * link.ris_to_rx[(a, m)] * v[m] * link.tx_to_ris[(m, b)] * f1[(b, j)];
                        }
                    }
                }
                weight += (acc - target.w[(i, j)]).norm_sqr();
            }
        }
        let bias: f64 = 0.7 * f2.iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert!((rep.weight_error - weight).abs() < 1e-12 * weight.max(1.0));
        assert!((rep.bias_error - bias).abs() < 1e-12 * bias.max(1.0));
        assert!((rep.sum_error - rep.weight_error - rep.bias_error).abs() <= 1e-12 * rep.sum_error);
    }

    #[test]
    fn precoder_unconstrained_identity() {
        let w = CMatrix::from_fn(2, 2, |i, j| cplx::<f64>(0.3 * i as f64, 0.2 * j as f64));
        let sol = precoder_for_cascade(&CMatrix::identity(2, 2), &w, 4.0, 1e-12).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert!(frobenius_sq(&(sol.f1 - &w)) < 1e-28);
    }

    /// Scalar bisection on (2/(1+λ))²·2 = 4, run independently of the
    /// eigendecomposition path.
    fn scalar_oracle_lambda() -> f64 {
        let (mut lo, mut hi) = (0.0f64, 10.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let p = 2.0 * (2.0 / (1.0 + mid)).powi(2);
            if p > 4.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn precoder_active_identity_case() {
        let w = CMatrix::<f64>::identity(2, 2) * c(2.0);
        let sol = precoder_for_cascade(&CMatrix::identity(2, 2), &w, 4.0, 1e-12).unwrap();
        let oracle = scalar_oracle_lambda();
        assert!((oracle - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((sol.lambda - oracle).abs() < 1e-9, "lambda {}", sol.lambda);
        let expect = CMatrix::<f64>::identity(2, 2) * c(2f64.sqrt());
        assert!(frobenius_sq(&(sol.f1 - expect)).sqrt() < 1e-9);
    }

    #[test]
    fn precoder_zero_cascade_gives_zero() {
        let w = CMatrix::<f64>::identity(2, 2);
        let sol = precoder_for_cascade(&CMatrix::zeros(2, 2), &w, 1.0, 1e-9).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert_eq!(frobenius_sq(&sol.f1), 0.0);
    }

    #[test]
    fn precoder_rank_deficient_uses_pseudo_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_cmatrix(&mut rng, 3, 1);
        let upsilon = &x * x.adjoint(); // rank one
        let w = random_cmatrix(&mut rng, 3, 3);
        let sol = precoder_for_cascade(&upsilon, &w, 1e6, 1e-12).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert!(crate::numerics::all_finite(&sol.f1));
        // least-squares normal equations hold on the range of Υ^H
        let resid = upsilon.adjoint() * (&upsilon * &sol.f1 - &w);
        assert!(frobenius_sq(&resid).sqrt() < 1e-8);
    }

    #[test]
    fn precoder_power_monotone_and_upper_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let upsilon = random_cmatrix(&mut rng, 4, 4);
            let w = random_cmatrix(&mut rng, 4, 4);
            let p_max = 0.05 + rng.random::<f64>();
            let profile = PowerProfile::new(&upsilon, &w).unwrap();
            let up = profile.lambda_upper(p_max);
            assert!(profile.power(up) <= p_max * (1.0 + 1e-12));
            let mut prev = f64::INFINITY;
            for k in 0..100 {
                let lam = up * k as f64 / 99.0 + 1e-9;
                let p = profile.power(lam);
                assert!(p < prev);
                prev = p;
            }
            let sol = precoder_for_cascade(&upsilon, &w, p_max, 1e-9).unwrap();
            let kkt = sol.lambda * (sol.power - p_max);
            assert!(kkt.abs() <= 1e-6 * p_max);
        }
    }

    #[test]
    fn combiner_trivial_cases() {
        let w = CMatrix::from_fn(3, 3, |i, j| cplx::<f64>(i as f64 - j as f64, 0.5));
        let f2 = combiner_for_cascade(&CMatrix::identity(3, 3), &w, 0.0).unwrap();
        assert!(frobenius_sq(&(f2 - &w)) < 1e-24);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ubar = random_cmatrix(&mut rng, 3, 3);
        let f2 = combiner_for_cascade(&ubar, &CMatrix::zeros(3, 3), 1.0).unwrap();
        assert_eq!(frobenius_sq(&f2), 0.0);
    }

    fn combiner_objective(f2: &CMatrix<f64>, ubar: &CMatrix<f64>, w: &CMatrix<f64>, s2: f64) -> f64 {
        frobenius_sq(&(f2 * ubar - w)) + s2 * frobenius_sq(f2)
    }

    #[test]
    fn combiner_is_stationary_and_locally_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ubar = random_cmatrix(&mut rng, 3, 3);
        let w = random_cmatrix(&mut rng, 3, 3);
        let f2 = combiner_for_cascade(&ubar, &w, 1.0).unwrap();
        // finite-difference gradient over real and imaginary parts
        let h = 1e-4;
        let mut grad_sq = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                for dir in [c(1.0), Complex::new(0.0, 1.0)] {
                    let mut p = f2.clone();
                    p[(i, j)] += dir * h;
                    let mut q = f2.clone();
                    q[(i, j)] -= dir * h;
                    let g =
                        (combiner_objective(&p, &ubar, &w, 1.0) - combiner_objective(&q, &ubar, &w, 1.0)) / (2.0 * h);
                    grad_sq += g * g;
                }
            }
        }
        assert!(grad_sq.sqrt() <= 1e-8, "fd gradient {}", grad_sq.sqrt());
        let base = combiner_objective(&f2, &ubar, &w, 1.0);
        for _ in 0..100 {
            let mut d = random_cmatrix(&mut rng, 3, 3);
            d /= c(frobenius_sq(&d).sqrt());
            let moved = &f2 + d * c(1e-3);
            assert!(combiner_objective(&moved, &ubar, &w, 1.0) >= base);
        }
    }

    #[test]
    fn quadratic_form_zero_precoder() {
        let (_, ch, target) = instance(2, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let qf = build_quadratic_form(&CMatrix::zeros(2, 2), &random_cmatrix(&mut rng, 2, 2), &ch, &target).unwrap();
        assert_eq!(frobenius_sq(&qf.omega), 0.0);
        assert!(qf.phi.iter().all(|z| z.norm() == 0.0));
        assert!((qf.constant - frobenius_sq(&target.w)).abs() < 1e-15);
    }

    #[test]
    fn quadratic_form_matches_direct_objective() {
        let cfg = SystemConfig {
            n: 2,
            ris_elements: vec![3, 2],
            p_max: 1.0,
            sigma2: 1.0,
            rician: RicianFactor::Linear(1.0),
            seed: 3,
        };
        let ch = sample_channel::<f64>(&cfg, 0).unwrap();
        let target = TargetLayer::random(2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f1 = random_cmatrix(&mut rng, 2, 2);
        let f2 = random_cmatrix(&mut rng, 2, 2);
        let qf = build_quadratic_form(&f1, &f2, &ch, &target).unwrap();
        hermitian_eig(&qf.omega).expect("omega is PSD");
        for _ in 0..20 {
            let phases = RisPhases::random_unit(&[3, 2], &mut rng);
            let h = effective_channel(&ch, &phases).unwrap();
            let direct = frobenius_sq(&(&f2 * h * &f1 - &target.w));
            let viaq = qf.value(&phases.flat());
            assert!((direct - viaq).abs() <= 1e-10 * direct.max(1.0));
        }
    }

    #[test]
    fn mm_identity_curvature_gives_aligned_phases() {
        let phi = CVector::from_vec(vec![cplx::<f64>(1.0, 2.0), cplx(-0.5, 0.1), cplx(0.0, -3.0)]);
        let qf = QuadraticForm {
            omega: CMatrix::identity(3, 3) * c(2.0),
            phi: phi.clone(),
            constant: 0.0,
        };
        let v0 = unit_vector::<f64>(&[0.3, 1.0, -2.0]);
        let v = update_phases_mm(&v0, &qf, InnerSettings::default()).unwrap();
        for (z, p) in v.iter().zip(phi.iter()) {
            let want = p.conj() / p.norm();
            assert!((z - want).norm() < 1e-12);
        }
        // the closed form is the brute-force minimizer of the separable problem
        for (k, p) in phi.iter().enumerate() {
            let best = (0..3600)
                .map(|s| s as f64 * std::f64::consts::TAU / 3600.0)
                .map(|a| (a, -(Complex::from_polar(1.0, a) * p).re))
                .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap()
                .0;
            assert!((Complex::from_polar(1.0, best) - v[k]).norm() < 2e-3);
        }
    }

    #[test]
    fn mm_zero_problem_keeps_phases() {
        let qf = QuadraticForm::<f64> {
            omega: CMatrix::zeros(2, 2),
            phi: CVector::zeros(2),
            constant: 1.0,
        };
        let v0 = unit_vector::<f64>(&[0.4, 2.0]);
        assert_eq!(update_phases_mm(&v0, &qf, InnerSettings::default()).unwrap(), v0);
    }

    #[test]
    fn surrogate_is_tangent_and_dominates() {
        let (_, ch, target) = instance(3, 6, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let qf = build_quadratic_form(
            &random_cmatrix(&mut rng, 3, 3),
            &random_cmatrix(&mut rng, 3, 3),
            &ch,
            &target,
        )
        .unwrap();
        let lam = hermitian_eig(&qf.omega).unwrap().max_eigenvalue();
        let v_r = RisPhases::<f64>::random_unit(&[6], &mut rng).flat();
        let quad = |v: &CVector<f64>| (v.adjoint() * &qf.omega * v)[(0, 0)].re;
        assert!((qf.surrogate_quadratic(&v_r, &v_r, lam) - quad(&v_r)).abs() < 1e-10 * lam.max(1.0));
        for _ in 0..100 {
            let v = RisPhases::<f64>::random_unit(&[6], &mut rng).flat();
            assert!(qf.surrogate_quadratic(&v, &v_r, lam) >= quad(&v) - 1e-10 * lam.max(1.0));
        }
    }

    #[test]
    fn relaxed_trivial_cases() {
        let ones = CVector::from_element(3, c(1.0));
        let interior = QuadraticForm {
            omega: CMatrix::<f64>::identity(3, 3),
            phi: &ones * c(0.5),
            constant: 0.0,
        };
        let v0 = unit_vector::<f64>(&[1.0, 2.0, 3.0]);
        let v = update_phases_relaxed(&v0, &interior, InnerSettings::default()).unwrap();
        assert!((v - &ones * c(0.5)).norm() < 1e-12);
        let boundary = QuadraticForm {
            omega: CMatrix::<f64>::identity(3, 3),
            phi: &ones * c(2.0),
            constant: 0.0,
        };
        let v = update_phases_relaxed(&v0, &boundary, InnerSettings::default()).unwrap();
        assert!((v - &ones).norm() < 1e-12);
    }

    #[test]
    fn relaxed_beats_unit_and_matches_slow_oracle() {
        let (_, ch, target) = instance(2, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f1 = random_cmatrix(&mut rng, 2, 2) * c(0.3);
        let f2 = random_cmatrix(&mut rng, 2, 2);
        let qf = build_quadratic_form(&f1, &f2, &ch, &target).unwrap();
        let v0 = RisPhases::<f64>::random_unit(&[3], &mut rng).flat();
        let settings = InnerSettings {
            tol: 1e-14,
            max_iter: 100_000,
        };
        let relaxed = update_phases_relaxed(&v0, &qf, settings).unwrap();
        let unit = update_phases_mm(&v0, &qf, settings).unwrap();
        assert!(qf.value(&relaxed) <= qf.value(&unit) + 1e-12);
        // independent oracle: tiny fixed step projected gradient, many iterations
        let lam = hermitian_eig(&qf.omega).unwrap().max_eigenvalue();
        let mut v = CVector::<f64>::zeros(3);
        for _ in 0..400_000 {
            let g = &qf.omega * &v - qf.phi.map(|z| z.conj());
            v -= g * c(0.05 / lam);
            for z in v.iter_mut() {
                if z.norm() > 1.0 {
                    *z /= z.norm();
                }
            }
        }
        assert!((qf.value(&relaxed) - qf.value(&v)).abs() < 1e-4);
    }

    #[test]
    fn scalar_system_solved_exactly() {
        let h1 = CMatrix::from_element(1, 1, cplx::<f64>(0.8, -0.3));
        let h2 = CMatrix::from_element(1, 1, cplx::<f64>(-0.2, 1.1));
        let link = crate::channel::RisLink {
            tx_to_ris: h1.clone(),
            ris_to_rx: h2.clone(),
            tx_to_ris_los: h1,
            ris_to_rx_los: h2,
        };
        let ch = ChannelRealization::from_links(1, RicianFactor::Linear(1.0), vec![link]).unwrap();
        let target = TargetLayer::new(CMatrix::from_element(1, 1, cplx(0.5, 0.25)), CVector::zeros(1)).unwrap();
        let cfg = SystemConfig::single_ris(1, 1, 10.0, 0.0, RicianFactor::Linear(1.0), 0);
        let (_, rep) = run_algorithm1(
            &cfg,
            &ch,
            &target,
            ReflectionMode::UnitModulus,
            &AlgorithmSettings::default(),
        )
        .unwrap();
        assert!(rep.sum_error < 1e-10, "{}", rep.sum_error);
    }

    #[test]
    fn algorithm_trace_is_monotone() {
        for seed in 0..100u64 {
            let n = [2, 4, 8][(seed % 3) as usize];
            let m = [4, 16][((seed / 3) % 2) as usize];
            let cfg = SystemConfig::single_ris(n, m, 1.0, 1.0, RicianFactor::from_db(10.0), seed);
            let ch = sample_channel::<f64>(&cfg, 0).unwrap();
            let target = TargetLayer::random(n, seed);
            let (params, rep) = run_algorithm1(
                &cfg,
                &ch,
                &target,
                ReflectionMode::UnitModulus,
                &AlgorithmSettings::default(),
            )
            .unwrap();
            for w in rep.objective_trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "seed {seed}: {} -> {}", w[0], w[1]);
            }
            assert!(params.satisfies_power(cfg.p_max));
            assert!((rep.sum_error - rep.weight_error - rep.bias_error).abs() <= 1e-12 * rep.sum_error);
        }
    }

    #[test]
    fn exact_emulation_with_ample_power_and_no_noise() {
        let cfg = SystemConfig::single_ris(3, 8, 1e6, 0.0, RicianFactor::Rayleigh, 4);
        let ch = sample_channel::<f64>(&cfg, 0).unwrap();
        let target = TargetLayer::random(3, 4);
        let (_, rep) = run_algorithm1(
            &cfg,
            &ch,
            &target,
            ReflectionMode::UnitModulus,
            &AlgorithmSettings::default(),
        )
        .unwrap();
        assert!(rep.weight_error <= 1e-8, "{}", rep.weight_error);
    }

    #[test]
    fn relaxed_mode_respects_disk() {
        let cfg = SystemConfig::single_ris(3, 6, 0.1, 1.0, RicianFactor::from_db(10.0), 2);
        let ch = sample_channel::<f64>(&cfg, 0).unwrap();
        let target = TargetLayer::random(3, 2);
        let (params, rep) = run_algorithm1(
            &cfg,
            &ch,
            &target,
            ReflectionMode::Relaxed,
            &AlgorithmSettings::default(),
        )
        .unwrap();
        assert!(params.phases.max_modulus() <= 1.0 + 1e-12);
        for w in rep.objective_trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9));
        }
    }

    #[test]
    fn generic_over_f32() {
        let cfg = SystemConfig::single_ris(2, 4, 1.0, 1.0, RicianFactor::from_db(0.0), 3);
        let ch = sample_channel::<f32>(&cfg, 0).unwrap();
        let target = TargetLayer::<f32>::random(2, 3);
        let settings = AlgorithmSettings {
            outer_tol: 1e-4,
            ..Default::default()
        };
        let (_, rep32) = run_algorithm1(&cfg, &ch, &target, ReflectionMode::UnitModulus, &settings).unwrap();
        let ch64 = sample_channel::<f64>(&cfg, 0).unwrap();
        let target64 = TargetLayer::<f64>::random(2, 3);
        let (_, rep64) = run_algorithm1(&cfg, &ch64, &target64, ReflectionMode::UnitModulus, &settings).unwrap();
        assert!((rep32.sum_error - rep64.sum_error).abs() < 1e-2 * rep64.sum_error.max(1.0));
    }

    #[test]
    fn inner_product_helper() {
        let a = CMatrix::from_element(1, 1, cplx::<f64>(0.0, 1.0));
        assert_eq!(inner(&a, &a), c(1.0));
    }
}
