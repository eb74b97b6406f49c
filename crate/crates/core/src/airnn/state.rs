use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, CONV_CHANNELS, CONV_KERNEL, FEATURES};
use crate::channel::{effective_channel, los_aligned_phases, ChannelRealization, ReflectionMode, RisPhases};
use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, modulus, CMatrix, CVector};

/// How the RIS coefficients are parametrized during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    /// Trainable angles, `v = exp(jθ)`.
    Unit,
    /// Trainable complex coefficients, penalized outside the unit disk.
    Relaxed,
    /// Frozen at the LoS-aligned configuration.
    FixedLos,
}

/// Trainable RIS parameters, flattened across surfaces.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseParams {
    Angles(DVector<f64>),
    Free(CVector<f64>),
    Frozen,
}

/// A parameter tensor that can be flattened to reals. Complex entries are
/// interleaved `(re, im)`; matrices are row-major.
pub trait Tensor {
    fn shape(&self) -> Vec<usize>;
    fn write(&self, out: &mut Vec<f64>);
    fn read(&mut self, src: &[f64]);

    fn numel(&self) -> usize {
        self.shape().iter().product()
    }
}

impl Tensor for f64 {
    fn shape(&self) -> Vec<usize> {
        vec![1]
    }
    fn write(&self, out: &mut Vec<f64>) {
        out.push(*self);
    }
    fn read(&mut self, src: &[f64]) {
        *self = src[0];
    }
}

impl Tensor for DVector<f64> {
    fn shape(&self) -> Vec<usize> {
        vec![self.len()]
    }
    fn write(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.as_slice());
    }
    fn read(&mut self, src: &[f64]) {
        self.as_mut_slice().copy_from_slice(src);
    }
}

impl Tensor for DMatrix<f64> {
    fn shape(&self) -> Vec<usize> {
        vec![self.nrows(), self.ncols()]
    }
    fn write(&self, out: &mut Vec<f64>) {
        for r in 0..self.nrows() {
            out.extend(self.row(r).iter());
        }
    }
    fn read(&mut self, src: &[f64]) {
        let cols = self.ncols();
        for (k, &x) in src.iter().enumerate() {
            self[(k / cols, k % cols)] = x;
        }
    }
}

impl Tensor for CMatrix<f64> {
    fn shape(&self) -> Vec<usize> {
        vec![self.nrows(), self.ncols(), 2]
    }
    fn write(&self, out: &mut Vec<f64>) {
        for r in 0..self.nrows() {
            for z in self.row(r).iter() {
                out.push(z.re);
                out.push(z.im);
            }
        }
    }
    fn read(&mut self, src: &[f64]) {
        let cols = self.ncols();
        for (k, pair) in src.chunks_exact(2).enumerate() {
            self[(k / cols, k % cols)] = Complex::new(pair[0], pair[1]);
        }
    }
}

impl Tensor for CVector<f64> {
    fn shape(&self) -> Vec<usize> {
        vec![self.len(), 2]
    }
    fn write(&self, out: &mut Vec<f64>) {
        for z in self.iter() {
            out.push(z.re);
            out.push(z.im);
        }
    }
    fn read(&mut self, src: &[f64]) {
        for (z, pair) in self.iter_mut().zip(src.chunks_exact(2)) {
            *z = Complex::new(pair[0], pair[1]);
        }
    }
}

impl Tensor for PhaseParams {
    fn shape(&self) -> Vec<usize> {
        match self {
            PhaseParams::Angles(t) => Tensor::shape(t),
            PhaseParams::Free(v) => Tensor::shape(v),
            PhaseParams::Frozen => vec![0],
        }
    }
    fn write(&self, out: &mut Vec<f64>) {
        match self {
            PhaseParams::Angles(t) => t.write(out),
            PhaseParams::Free(v) => v.write(out),
            PhaseParams::Frozen => {}
        }
    }
    fn read(&mut self, src: &[f64]) {
        match self {
            PhaseParams::Angles(t) => t.read(src),
            PhaseParams::Free(v) => v.read(src),
            PhaseParams::Frozen => {}
        }
    }
}

/// Every trainable parameter. Gradients use the same type: for a complex
/// entry `z` the gradient slot holds `∂L/∂Re z + j·∂L/∂Im z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[channel][row][col]`, 2 × 3 × 3.
    pub conv_w: DVector<f64>,
    pub conv_b: DVector<f64>,
    pub fc_w: CMatrix<f64>,
    pub fc_b: CVector<f64>,
    pub bn_gamma_re: DVector<f64>,
    pub bn_gamma_im: DVector<f64>,
    pub bn_beta_re: DVector<f64>,
    pub bn_beta_im: DVector<f64>,
    pub f1: CMatrix<f64>,
    pub f2: CMatrix<f64>,
    pub phases: PhaseParams,
    pub p_tx: f64,
    /// `C × 2N`.
    pub out_w: DMatrix<f64>,
    pub out_b: DVector<f64>,
}

impl Params {
    pub fn tensors(&self) -> Vec<(&'static str, &dyn Tensor)> {
        vec![
            ("conv_w", &self.conv_w),
            ("conv_b", &self.conv_b),
            ("fc_w", &self.fc_w),
            ("fc_b", &self.fc_b),
            ("bn_gamma_re", &self.bn_gamma_re),
            ("bn_gamma_im", &self.bn_gamma_im),
            ("bn_beta_re", &self.bn_beta_re),
            ("bn_beta_im", &self.bn_beta_im),
            ("f1", &self.f1),
            ("f2", &self.f2),
            ("phases", &self.phases),
            ("p_tx", &self.p_tx),
            ("out_w", &self.out_w),
            ("out_b", &self.out_b),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut dyn Tensor)> {
        vec![
            ("conv_w", &mut self.conv_w),
            ("conv_b", &mut self.conv_b),
            ("fc_w", &mut self.fc_w),
            ("fc_b", &mut self.fc_b),
            ("bn_gamma_re", &mut self.bn_gamma_re),
            ("bn_gamma_im", &mut self.bn_gamma_im),
            ("bn_beta_re", &mut self.bn_beta_re),
            ("bn_beta_im", &mut self.bn_beta_im),
            ("f1", &mut self.f1),
            ("f2", &mut self.f2),
            ("phases", &mut self.phases),
            ("p_tx", &mut self.p_tx),
            ("out_w", &mut self.out_w),
            ("out_b", &mut self.out_b),
        ]
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, t) in self.tensors() {
            t.write(&mut out);
        }
        out
    }

    pub fn unpack(&mut self, flat: &[f64]) {
        let mut at = 0;
        for (_, t) in self.tensors_mut() {
            let n = t.numel();
            t.read(&flat[at..at + n]);
            at += n;
        }
        debug_assert_eq!(at, flat.len());
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Params {
        let mut z = self.clone();
        let n = z.pack().len();
        z.unpack(&vec![0.0; n]);
        z
    }

    pub fn all_finite(&self) -> bool {
        self.pack().iter().all(|x| x.is_finite())
    }
}

/// Running batch-norm statistics used at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct BnRunning {
    pub mean_re: DVector<f64>,
    pub mean_im: DVector<f64>,
    pub var_re: DVector<f64>,
    pub var_im: DVector<f64>,
}

impl BnRunning {
    fn new(n: usize) -> Self {
        BnRunning {
            mean_re: DVector::zeros(n),
            mean_im: DVector::zeros(n),
            var_re: DVector::from_element(n, 1.0),
            var_im: DVector::from_element(n, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetState {
    pub params: Params,
    pub bn_running: BnRunning,
    pub phase_mode: PhaseMode,
    pub ris_sizes: Vec<usize>,
    /// Coefficients used when `phase_mode` is `FixedLos`.
    pub frozen_phases: Option<RisPhases<f64>>,
}

fn split_flat(flat: &CVector<f64>, sizes: &[usize]) -> Vec<CVector<f64>> {
    let mut at = 0;
    sizes
        .iter()
        .map(|&m| {
            let v = flat.rows(at, m).into_owned();
            at += m;
            v
        })
        .collect()
}

fn uniform(rng: &mut ChaCha12Rng, bound: f64) -> f64 {
    rng.random_range(-bound..=bound)
}

fn cn(rng: &mut ChaCha12Rng, var: f64) -> Complex<f64> {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re * s, im * s)
}

impl NetState {
    /// Seeded initialization for one channel realization.
    ///
    /// Conv and FC weights are fan-in uniform; `F1 = √(P_max/N)·(I + 0.01·G)`;
    /// `F2 ~ CN(0, 1/(N·ρ))` with `ρ` the per-entry received power at
    /// initialization so the combined signal starts at unit scale.
    pub fn init(cfg: &TrainConfig, ch: &ChannelRealization<f64>, p_max: f64, sigma2: f64) -> Result<Self> {
        let n = ch.n();
        if n != FEATURES {
            return Err(Error::InvalidConfig(format!(
                "the 28x28 front-end produces {FEATURES} complex features, channel has N={n}"
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(super::STREAM_INIT);

        let k2 = (CONV_KERNEL * CONV_KERNEL) as f64;
        let conv_w = DVector::from_fn(CONV_CHANNELS * CONV_KERNEL * CONV_KERNEL, |_, _| {
            uniform(&mut rng, 1.0 / k2.sqrt())
        });
        let conv_b = DVector::from_fn(CONV_CHANNELS, |_, _| uniform(&mut rng, 1.0 / k2.sqrt()));
        let fc_bound = 1.0 / (n as f64).sqrt();
        let fc_w = CMatrix::from_fn(n, n, |_, _| {
            Complex::new(uniform(&mut rng, fc_bound), uniform(&mut rng, fc_bound))
        });
        let fc_b = CVector::from_fn(n, |_, _| {
            Complex::new(uniform(&mut rng, fc_bound), uniform(&mut rng, fc_bound))
        });

        let sizes = ch.ris_sizes();
        let m: usize = sizes.iter().sum();
        let (phases, frozen) = match cfg.phase_mode {
            PhaseMode::Unit => (
                PhaseParams::Angles(DVector::from_fn(m, |_, _| rng.random_range(0.0..std::f64::consts::TAU))),
                None,
            ),
            PhaseMode::Relaxed => (
                PhaseParams::Free(CVector::from_fn(m, |_, _| {
                    Complex::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
                })),
                None,
            ),
            PhaseMode::FixedLos => {
                let aligned = los_aligned_phases(ch);
                if aligned.missing_los {
                    log::warn!("channel has no LoS component; frozen phases default to all ones");
                }
                (PhaseParams::Frozen, Some(aligned.phases))
            }
        };

        let scale = (p_max / n as f64).sqrt();
        let f1 = CMatrix::from_fn(n, n, |r, c| {
            let eye = if r == c { 1.0 } else { 0.0 };
            (Complex::new(eye, 0.0) + cn(&mut rng, 1e-4)) * scale
        });

        let mut state = NetState {
            params: Params {
                conv_w,
                conv_b,
                fc_w,
                fc_b,
                bn_gamma_re: DVector::from_element(n, 1.0),
                bn_gamma_im: DVector::from_element(n, 1.0),
                bn_beta_re: DVector::zeros(n),
                bn_beta_im: DVector::zeros(n),
                f1,
                f2: CMatrix::zeros(n, n),
                phases,
                p_tx: p_max,
                out_w: DMatrix::zeros(cfg.classes, 2 * n),
                out_b: DVector::zeros(cfg.classes),
            },
            bn_running: BnRunning::new(n),
            phase_mode: cfg.phase_mode,
            ris_sizes: sizes,
            frozen_phases: frozen,
        };

        let h = effective_channel(ch, &state.phases())?;
        let b = cfg.batch_size as f64;
        let rho = frobenius_sq(&h) * p_max / (b * (n * n) as f64) + sigma2;
        let f2_var = 1.0 / (n as f64 * rho.max(1e-300));
        state.params.f2 = CMatrix::from_fn(n, n, |_, _| cn(&mut rng, f2_var));

        let out_bound = 1.0 / ((2 * n) as f64).sqrt();
        state.params.out_w = DMatrix::from_fn(cfg.classes, 2 * n, |_, _| uniform(&mut rng, out_bound));
        state.params.out_b = DVector::from_fn(cfg.classes, |_, _| uniform(&mut rng, out_bound));
        Ok(state)
    }

    /// Current RIS coefficients.
    pub fn phases(&self) -> RisPhases<f64> {
        match &self.params.phases {
            PhaseParams::Angles(theta) => {
                let v = CVector::from_fn(theta.len(), |i, _| Complex::from_polar(1.0, theta[i]));
                RisPhases::unchecked(ReflectionMode::UnitModulus, split_flat(&v, &self.ris_sizes))
            }
            PhaseParams::Free(v) => RisPhases::unchecked(ReflectionMode::Relaxed, split_flat(v, &self.ris_sizes)),
            PhaseParams::Frozen => self
                .frozen_phases
                .clone()
                .unwrap_or_else(|| RisPhases::ones(&self.ris_sizes)),
        }
    }

    pub fn max_abs_v(&self) -> f64 {
        self.phases()
            .values()
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |m, z| m.max(modulus(z)))
    }

    pub fn n(&self) -> usize {
        self.params.f1.nrows()
    }

    pub fn classes(&self) -> usize {
        self.params.out_w.nrows()
    }
}
