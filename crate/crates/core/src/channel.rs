//! Rician-fading channels for single- and multi-RIS links.
//!
//! A realization holds, for every RIS `i`, the transmitter→RIS block
//! `H̄_i ∈ ℂ^{M_i×N}` and the RIS→receiver block `Ĥ_i ∈ ℂ^{N×M_i}` together
//! with their line-of-sight components. The cascaded channel is
//! `H = Σ_i Ĥ_i·diag(v_i)·H̄_i`; the direct transmitter–receiver link is
//! assumed blocked.
//!
//! Geometry: half-wavelength uniform linear arrays at every node, angles drawn
//! uniformly from `[0, π)` per realization, unit large-scale gain.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::numerics::{arg, ensure_finite, expj, modulus, numerical_rank, CMatrix, CVector, Real, DEFAULT_RANK_TOL};
use num_complex::Complex;

/// Rician factor with explicit sentinels for the two limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RicianFactor {
    /// `K = +∞`: line-of-sight only.
    PureLos,
    /// `K = 0` (−∞ dB): Rayleigh fading only.
    Rayleigh,
    /// Finite, positive linear factor.
    Linear(f64),
}

impl RicianFactor {
    /// Converts a dB value; `±∞` map to the sentinels.
    pub fn from_db(db: f64) -> Self {
        if db == f64::INFINITY {
            RicianFactor::PureLos
        } else if db == f64::NEG_INFINITY {
            RicianFactor::Rayleigh
        } else {
            RicianFactor::Linear(db_to_linear(db))
        }
    }

    /// `(√(K/(K+1)), √(1/(K+1)))`.
    pub fn weights(self) -> (f64, f64) {
        match self {
            RicianFactor::PureLos => (1.0, 0.0),
            RicianFactor::Rayleigh => (0.0, 1.0),
            RicianFactor::Linear(k) => ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt()),
        }
    }

    pub fn has_los(self) -> bool {
        self.weights().0 > 0.0
    }

    fn validate(self) -> Result<()> {
        match self {
            RicianFactor::Linear(k) if !(k.is_finite() && k >= 0.0) => Err(Error::InvalidConfig(format!(
                "Rician factor must be finite and non-negative, got {k}"
            ))),
            _ => Ok(()),
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Physical and numerical parameters of one simulated link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Antennas per side, equal to the emulated layer width.
    pub n: usize,
    /// Element count of each RIS; `L = ris_elements.len()`.
    pub ris_elements: Vec<usize>,
    /// Transmit power budget (linear).
    pub p_max: f64,
    /// Receiver noise power (linear).
    pub sigma2: f64,
    pub rician: RicianFactor,
    pub seed: u64,
}

impl SystemConfig {
    pub fn single_ris(n: usize, m: usize, p_max: f64, sigma2: f64, rician: RicianFactor, seed: u64) -> Self {
        SystemConfig {
            n,
            ris_elements: vec![m],
            p_max,
            sigma2,
            rician,
            seed,
        }
    }

    /// `M` elements split as evenly as possible over `l` surfaces, earlier
    /// surfaces taking the remainder.
    pub fn split_elements(m: usize, l: usize) -> Vec<usize> {
        (0..l).map(|i| m / l + usize::from(i < m % l)).collect()
    }

    pub fn num_ris(&self) -> usize {
        self.ris_elements.len()
    }

    pub fn total_elements(&self) -> usize {
        self.ris_elements.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("N must be at least 1".into()));
        }
        if self.ris_elements.is_empty() || self.ris_elements.contains(&0) {
            return Err(Error::InvalidConfig(
                "need at least one RIS, each with at least one element".into(),
            ));
        }
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "P_max must be positive, got {}",
                self.p_max
            )));
        }
        if !(self.sigma2 >= 0.0 && self.sigma2.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise power must be non-negative, got {}",
                self.sigma2
            )));
        }
        self.rician.validate()
    }
}

/// Reflection constraint of a RIS element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionMode {
    /// `|v_m| = 1` (phase-only).
    UnitModulus,
    /// `|v_m| ≤ 1` (amplitude and phase).
    Relaxed,
}

/// Channel blocks of one RIS.
#[derive(Debug, Clone, PartialEq)]
pub struct RisLink<T: Real> {
    /// `H̄_i`, `M_i × N`.
    pub tx_to_ris: CMatrix<T>,
    /// `Ĥ_i`, `N × M_i`.
    pub ris_to_rx: CMatrix<T>,
    pub tx_to_ris_los: CMatrix<T>,
    pub ris_to_rx_los: CMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T: Real> {
    n: usize,
    rician: RicianFactor,
    links: Vec<RisLink<T>>,
}

impl<T: Real> ChannelRealization<T> {
    /// Builds a realization from explicit blocks, checking shapes and
    /// finiteness.
    pub fn from_links(n: usize, rician: RicianFactor, links: Vec<RisLink<T>>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::InvalidConfig("channel needs at least one RIS".into()));
        }
        for (i, link) in links.iter().enumerate() {
            let m = link.tx_to_ris.nrows();
            let shapes = [
                (link.tx_to_ris.shape(), (m, n)),
                (link.ris_to_rx.shape(), (n, m)),
                (link.tx_to_ris_los.shape(), (m, n)),
                (link.ris_to_rx_los.shape(), (n, m)),
            ];
            for (got, want) in shapes {
                if got != want {
                    return Err(mismatch(format!("RIS {i}: block {got:?}, expected {want:?}")));
                }
            }
            ensure_finite(&link.tx_to_ris, "tx_to_ris")?;
            ensure_finite(&link.ris_to_rx, "ris_to_rx")?;
        }
        Ok(ChannelRealization { n, rician, links })
    }

    /// Single RIS with `H̄ = Ĥ = I_n`, so that all-ones phases give `H = I`.
    pub fn identity(n: usize) -> Self {
        let eye = CMatrix::<T>::identity(n, n);
        ChannelRealization {
            n,
            rician: RicianFactor::PureLos,
            links: vec![RisLink {
                tx_to_ris: eye.clone(),
                ris_to_rx: eye.clone(),
                tx_to_ris_los: eye.clone(),
                ris_to_rx_los: eye,
            }],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rician(&self) -> RicianFactor {
        self.rician
    }

    pub fn links(&self) -> &[RisLink<T>] {
        &self.links
    }

    pub fn ris_sizes(&self) -> Vec<usize> {
        self.links.iter().map(|l| l.tx_to_ris.nrows()).collect()
    }

    pub fn total_elements(&self) -> usize {
        self.ris_sizes().iter().sum()
    }

    /// `Ĥ = [Ĥ_1, …, Ĥ_L]`, `N × M`.
    pub fn stacked_ris_to_rx(&self) -> CMatrix<T> {
        let m = self.total_elements();
        let mut out = CMatrix::zeros(self.n, m);
        let mut off = 0;
        for link in &self.links {
            let mi = link.ris_to_rx.ncols();
            out.columns_mut(off, mi).copy_from(&link.ris_to_rx);
            off += mi;
        }
        out
    }

    /// `H̄ = [H̄_1; …; H̄_L]`, `M × N`.
    pub fn stacked_tx_to_ris(&self) -> CMatrix<T> {
        let m = self.total_elements();
        let mut out = CMatrix::zeros(m, self.n);
        let mut off = 0;
        for link in &self.links {
            let mi = link.tx_to_ris.nrows();
            out.rows_mut(off, mi).copy_from(&link.tx_to_ris);
            off += mi;
        }
        out
    }
}

/// Per-RIS reflection coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhases<T: Real> {
    mode: ReflectionMode,
    values: Vec<CVector<T>>,
}

impl<T: Real> RisPhases<T> {
    /// Unit-modulus coefficients `exp(j·θ)`.
    pub fn from_angles(angles: &[Vec<T>]) -> Self {
        RisPhases {
            mode: ReflectionMode::UnitModulus,
            values: angles
                .iter()
                .map(|a| CVector::from_iterator(a.len(), a.iter().map(|&t| expj(t))))
                .collect(),
        }
    }

    pub fn ones(sizes: &[usize]) -> Self {
        RisPhases {
            mode: ReflectionMode::UnitModulus,
            values: sizes
                .iter()
                .map(|&m| CVector::from_element(m, Complex::new(T::one(), T::zero())))
                .collect(),
        }
    }

    /// Uniform random phases on the unit circle.
    pub fn random_unit<R: Rng>(sizes: &[usize], rng: &mut R) -> Self {
        let angles: Vec<Vec<T>> = sizes
            .iter()
            .map(|&m| {
                (0..m)
                    .map(|_| T::lit(rng.random::<f64>() * std::f64::consts::TAU))
                    .collect()
            })
            .collect();
        Self::from_angles(&angles)
    }

    /// Validates the modulus invariant of `mode`.
    pub fn new(mode: ReflectionMode, values: Vec<CVector<T>>) -> Result<Self> {
        let tol = T::lit(1e-12).max(T::default_epsilon() * T::lit(16.0));
        for v in &values {
            for z in v.iter() {
                let r = modulus(z);
                let ok = match mode {
                    ReflectionMode::UnitModulus => (r - T::one()).abs() <= tol,
                    ReflectionMode::Relaxed => r <= T::one() + tol,
                };
                if !ok {
                    return Err(Error::InvalidConfig(format!(
                        "reflection coefficient modulus {} violates {:?}",
                        r.as_f64(),
                        mode
                    )));
                }
            }
        }
        Ok(RisPhases { mode, values })
    }

    /// Builds coefficients without checking the modulus invariant; for
    /// intermediate or deliberately infeasible values (e.g. penalized training).
    pub fn unchecked(mode: ReflectionMode, values: Vec<CVector<T>>) -> Self {
        RisPhases { mode, values }
    }

    pub fn mode(&self) -> ReflectionMode {
        self.mode
    }

    pub fn values(&self) -> &[CVector<T>] {
        &self.values
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.values.iter().map(|v| v.len()).collect()
    }

    /// All coefficients stacked in RIS order.
    pub fn flat(&self) -> CVector<T> {
        let total = self.values.iter().map(|v| v.len()).sum();
        CVector::from_iterator(total, self.values.iter().flat_map(|v| v.iter().copied()))
    }

    /// Same partition as `self`, new stacked coefficients.
    pub fn with_flat(&self, mode: ReflectionMode, flat: &CVector<T>) -> Result<Self> {
        let total: usize = self.values.iter().map(|v| v.len()).sum();
        if flat.len() != total {
            return Err(mismatch(format!("{} coefficients for {total} elements", flat.len())));
        }
        let mut off = 0;
        let values = self
            .values
            .iter()
            .map(|v| {
                let part = CVector::from_iterator(v.len(), flat.iter().skip(off).take(v.len()).copied());
                off += v.len();
                part
            })
            .collect();
        Ok(RisPhases { mode, values })
    }

    pub fn max_modulus(&self) -> T {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(T::zero(), |m, z| m.max(modulus(z)))
    }
}

fn steering(len: usize, angle: f64) -> Vec<Complex<f64>> {
    let phase = std::f64::consts::PI * angle.cos();
    (0..len).map(|k| Complex::from_polar(1.0, phase * k as f64)).collect()
}

/// `a_rows(θ_r) · a_cols(θ_c)^H`.
fn los_block<T: Real>(rows: usize, cols: usize, rx_angle: f64, tx_angle: f64) -> CMatrix<T> {
    let a = steering(rows, rx_angle);
    let b = steering(cols, tx_angle);
    CMatrix::from_fn(rows, cols, |i, j| {
        let z = a[i] * b[j].conj();
        Complex::new(T::lit(z.re), T::lit(z.im))
    })
}

fn gaussian_block<T: Real, R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix<T> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(T::lit(re * s), T::lit(im * s))
    })
}

/// Draws realization `index` for `cfg`.
///
/// Each `(seed, index)` pair owns an independent ChaCha stream, so
/// realizations can be generated in any order or in parallel. All random
/// variates are drawn regardless of `K`, which keeps the scattered component
/// identical across Rician-factor sweeps.
pub fn sample_channel<T: Real>(cfg: &SystemConfig, index: u64) -> Result<ChannelRealization<T>> {
    cfg.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let (w_los, w_nlos) = cfg.rician.weights();
    let (w_los, w_nlos) = (
        Complex::new(T::lit(w_los), T::zero()),
        Complex::new(T::lit(w_nlos), T::zero()),
    );
    let n = cfg.n;
    let pi = std::f64::consts::PI;
    let links = cfg
        .ris_elements
        .iter()
        .map(|&m| {
            let ris_arrival = rng.random::<f64>() * pi;
            let tx_departure = rng.random::<f64>() * pi;
            let rx_arrival = rng.random::<f64>() * pi;
            let ris_departure = rng.random::<f64>() * pi;
            let tx_to_ris_los = los_block::<T>(m, n, ris_arrival, tx_departure);
            let ris_to_rx_los = los_block::<T>(n, m, rx_arrival, ris_departure);
            let tx_nlos = gaussian_block::<T, _>(&mut rng, m, n);
            let rx_nlos = gaussian_block::<T, _>(&mut rng, n, m);
            RisLink {
                tx_to_ris: &tx_to_ris_los * w_los + tx_nlos * w_nlos,
                ris_to_rx: &ris_to_rx_los * w_los + rx_nlos * w_nlos,
                tx_to_ris_los,
                ris_to_rx_los,
            }
        })
        .collect();
    ChannelRealization::from_links(n, cfg.rician, links)
}

/// `H = Σ_i Ĥ_i·diag(v_i)·H̄_i`.
pub fn effective_channel<T: Real>(ch: &ChannelRealization<T>, phases: &RisPhases<T>) -> Result<CMatrix<T>> {
    if phases.sizes() != ch.ris_sizes() {
        return Err(mismatch(format!(
            "phases partition {:?} vs RIS sizes {:?}",
            phases.sizes(),
            ch.ris_sizes()
        )));
    }
    let mut h = CMatrix::zeros(ch.n, ch.n);
    for (link, v) in ch.links.iter().zip(phases.values()) {
        let mut scaled = link.ris_to_rx.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= v[j];
        }
        h += scaled * &link.tx_to_ris;
    }
    Ok(h)
}

/// Outcome of [`los_aligned_phases`].
#[derive(Debug, Clone)]
pub struct LosAlignment<T: Real> {
    pub phases: RisPhases<T>,
    /// Set when the channel has no line-of-sight component; `phases` is then
    /// the all-ones fallback.
    pub missing_los: bool,
}

/// Phases that make the LoS cascade paths from transmit antenna 1 to receive
/// antenna 1 add coherently: `v_{i,m} = exp(−j·arg([Ĥ_i^LoS]_{1,m}·[H̄_i^LoS]_{m,1}))`.
pub fn los_aligned_phases<T: Real>(ch: &ChannelRealization<T>) -> LosAlignment<T> {
    if !ch.rician.has_los() {
        return LosAlignment {
            phases: RisPhases::ones(&ch.ris_sizes()),
            missing_los: true,
        };
    }
    let angles: Vec<Vec<T>> = ch
        .links
        .iter()
        .map(|link| {
            (0..link.tx_to_ris.nrows())
                .map(|m| {
                    let path = link.ris_to_rx_los[(0, m)] * link.tx_to_ris_los[(m, 0)];
                    -arg(&path)
                })
                .collect()
        })
        .collect();
    LosAlignment {
        phases: RisPhases::from_angles(&angles),
        missing_los: false,
    }
}

/// Numerical ranks of the cascade and of the stacked hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankReport {
    pub rank_h: usize,
    pub rank_ris_to_rx: usize,
    pub rank_tx_to_ris: usize,
    /// `min(rank Ĥ, rank H̄, N)`.
    pub bound: usize,
    pub satisfied: bool,
}

pub fn rank_bound_check<T: Real>(ch: &ChannelRealization<T>, phases: &RisPhases<T>) -> Result<RankReport> {
    let h = effective_channel(ch, phases)?;
    let rank_h = numerical_rank(&h, DEFAULT_RANK_TOL);
    let rank_ris_to_rx = numerical_rank(&ch.stacked_ris_to_rx(), DEFAULT_RANK_TOL);
    let rank_tx_to_ris = numerical_rank(&ch.stacked_tx_to_ris(), DEFAULT_RANK_TOL);
    let bound = rank_ris_to_rx.min(rank_tx_to_ris).min(ch.n);
    Ok(RankReport {
        rank_h,
        rank_ris_to_rx,
        rank_tx_to_ris,
        bound,
        satisfied: rank_h <= bound,
    })
}
