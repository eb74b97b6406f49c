//! Config-driven sweeps: emulation error, training accuracy and rank checks.
//!
//! A run is described by one JSON [`ExperimentConfig`]. Every grid point is
//! crossed with every seed and the resulting jobs run on the rayon pool;
//! each job derives all of its randomness from its own seed, so the detail
//! rows do not depend on scheduling. Outputs carry the SHA-256 of the
//! resolved configuration (output path excluded).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::airnn::{checkpoint, target_from_state, train_centralized, train_distributed, PhaseMode, TrainConfig};
use crate::airnn::{TrainOutcome, FEATURES};
use crate::channel::{
    db_to_linear, rank_bound_check, sample_channel, ChannelRealization, ReflectionMode, RicianFactor, RisPhases,
    SystemConfig,
};
use crate::data::{load_dir, Dataset};
use crate::dump::{self, JsonChannel, JsonParams};
use crate::emulator::{run_algorithm1, AlgorithmSettings, EmulationReport, TargetLayer};
use crate::error::{Error, Result};

/// Default seed lists when the config gives none.
pub const DEFAULT_EMULATION_SEEDS: u64 = 20;
pub const DEFAULT_TRAINING_SEEDS: u64 = 5;

// Random targets and rank-check phases must not share a stream with the
// channel drawn from the same seed.
const TARGET_SALT: u64 = 0x7a26_e1c0_55d3_9b41;
const PHASE_SALT: u64 = 0x3c6e_f372_fe94_f82b;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Emulate,
    Train,
    RankCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    PMaxDb,
    M,
    KDb,
    L,
}

impl SweepVariable {
    pub fn is_db(self) -> bool {
        matches!(self, SweepVariable::PMaxDb | SweepVariable::KDb)
    }

    pub fn linear(self, value: f64) -> f64 {
        if self.is_db() {
            db_to_linear(value)
        } else {
            value
        }
    }

    /// `+1` if the mean emulation error should grow with the value, `−1` if
    /// it should shrink.
    pub fn expected_error_trend(self) -> i8 {
        match self {
            SweepVariable::KDb => 1,
            _ => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    /// dB for `p_max_db`/`k_db`, counts for `m`/`l`.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RicianLimit {
    PureLos,
    Rayleigh,
}

/// Rician factor as written in a config: a dB number or a named limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RicianSpec {
    Db(f64),
    Limit(RicianLimit),
}

impl RicianSpec {
    pub fn factor(self) -> RicianFactor {
        match self {
            RicianSpec::Db(db) => RicianFactor::from_db(db),
            RicianSpec::Limit(RicianLimit::PureLos) => RicianFactor::PureLos,
            RicianSpec::Limit(RicianLimit::Rayleigh) => RicianFactor::Rayleigh,
        }
    }
}

/// System parameters in config units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    /// Total RIS elements, split evenly over `l` surfaces.
    pub m: usize,
    pub l: usize,
    pub p_max_db: f64,
    pub sigma2: f64,
    pub k: RicianSpec,
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec {
            n: 16,
            m: 64,
            l: 1,
            p_max_db: 10.0,
            sigma2: 1.0,
            k: RicianSpec::Db(0.0),
        }
    }
}

impl SystemSpec {
    /// Copy with the sweep variable set to `value`.
    pub fn at(&self, variable: SweepVariable, value: f64) -> SystemSpec {
        let mut s = self.clone();
        match variable {
            SweepVariable::PMaxDb => s.p_max_db = value,
            SweepVariable::KDb => s.k = RicianSpec::Db(value),
            SweepVariable::M => s.m = value as usize,
            SweepVariable::L => s.l = value as usize,
        }
        s
    }

    pub fn system(&self, seed: u64) -> SystemConfig {
        SystemConfig {
            n: self.n,
            ris_elements: SystemConfig::split_elements(self.m, self.l),
            p_max: db_to_linear(self.p_max_db),
            sigma2: self.sigma2,
            rician: self.k.factor(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.l == 0 || self.l > self.m {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= l <= m, got l = {}, m = {}",
                self.l, self.m
            )));
        }
        if let RicianSpec::Db(db) = self.k {
            if !db.is_finite() {
                return Err(Error::InvalidConfig(
                    "k must be a finite dB value or a named limit".into(),
                ));
            }
        }
        if !self.p_max_db.is_finite() {
            return Err(Error::InvalidConfig("p_max_db must be finite".into()));
        }
        self.system(0).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSource {
    /// Seeded `CN(0, 1/N)` weights, zero bias.
    #[default]
    Random,
    /// The transmission layer `F2·F1` of a trained network checkpoint.
    Checkpoint { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    TrainableUnit,
    TrainableRelaxed,
    /// Centralized training with the RIS frozen at the LoS-aligned preset.
    Baseline1,
    /// Over-the-air training with noisy gradient feedback, RIS frozen.
    Baseline2,
    /// Ideal noiseless identity link.
    Digital,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::TrainableUnit,
        Scheme::TrainableRelaxed,
        Scheme::Baseline1,
        Scheme::Baseline2,
        Scheme::Digital,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::TrainableUnit => "trainable-unit",
            Scheme::TrainableRelaxed => "trainable-relaxed",
            Scheme::Baseline1 => "baseline1",
            Scheme::Baseline2 => "baseline2",
            Scheme::Digital => "digital",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// Directory holding the four standard IDX files.
    pub dir: PathBuf,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub subset_seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            dir: PathBuf::from("data/mnist"),
            train_subset: None,
            test_subset: None,
            subset_seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        let (mut train, mut test) = load_dir(&self.dir)?;
        if let Some(k) = self.train_subset {
            train = train.subset(k, self.subset_seed);
        }
        if let Some(k) = self.test_subset {
            test = test.subset(k, self.subset_seed);
        }
        Ok((train, test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankCheckSpec {
    pub k: Vec<RicianSpec>,
    pub l: Vec<usize>,
    /// Channel draws per `(K, L, seed)`.
    pub draws: usize,
}

impl Default for RankCheckSpec {
    fn default() -> Self {
        RankCheckSpec {
            k: vec![
                RicianSpec::Limit(RicianLimit::PureLos),
                RicianSpec::Db(10.0),
                RicianSpec::Db(0.0),
                RicianSpec::Limit(RicianLimit::Rayleigh),
            ],
            l: vec![1, 5],
            draws: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must agree with the subcommand when present.
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub system: SystemSpec,
    #[serde(default = "unit_modulus")]
    pub reflection: ReflectionMode,
    #[serde(default)]
    pub algorithm: AlgorithmSettings,
    /// `seed` is replaced by the run seed.
    #[serde(default)]
    pub train: TrainConfig,
    /// Empty means `0..20` for emulation and `0..5` for training.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub target: TargetSource,
    /// Omitted means every scheme; an explicit empty list is an error.
    #[serde(default)]
    pub schemes: Option<Vec<Scheme>>,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub rank_check: RankCheckSpec,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn unit_modulus() -> ReflectionMode {
    ReflectionMode::UnitModulus
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: None,
            sweep: None,
            system: SystemSpec::default(),
            reflection: ReflectionMode::UnitModulus,
            algorithm: AlgorithmSettings::default(),
            train: TrainConfig::default(),
            seeds: Vec::new(),
            target: TargetSource::Random,
            schemes: None,
            dataset: DatasetSpec::default(),
            rank_check: RankCheckSpec::default(),
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills defaults for `mode` and validates everything that mode uses.
    pub fn resolved(&self, mode: Mode) -> Result<ExperimentConfig> {
        if let Some(m) = self.mode {
            if m != mode {
                return Err(Error::InvalidConfig(format!("config is for {m:?}, requested {mode:?}")));
            }
        }
        let mut cfg = self.clone();
        cfg.mode = Some(mode);
        if cfg.seeds.is_empty() {
            let count = match mode {
                Mode::Train => DEFAULT_TRAINING_SEEDS,
                _ => DEFAULT_EMULATION_SEEDS,
            };
            cfg.seeds = (0..count).collect();
        }
        if mode == Mode::Train && cfg.schemes.is_none() {
            cfg.schemes = Some(Scheme::ALL.to_vec());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let mode = self.mode.unwrap_or(Mode::Emulate);
        self.system.validate()?;
        if mode != Mode::RankCheck {
            let sweep = self
                .sweep
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("a sweep is required".into()))?;
            if sweep.values.is_empty() {
                return Err(Error::InvalidConfig("sweep grid is empty".into()));
            }
            for &x in &sweep.values {
                let counted = !sweep.variable.is_db();
                if !x.is_finite() || (counted && (x < 1.0 || x.fract() != 0.0)) {
                    return Err(Error::InvalidConfig(format!("bad {:?} grid value {x}", sweep.variable)));
                }
                self.system.at(sweep.variable, x).validate()?;
            }
        }
        if mode == Mode::Train {
            if self.system.n != FEATURES {
                return Err(Error::InvalidConfig(format!(
                    "training needs n = {FEATURES}, got {}",
                    self.system.n
                )));
            }
            if self.schemes.as_ref().is_some_and(|s| s.is_empty()) {
                return Err(Error::InvalidConfig("scheme list is empty".into()));
            }
            self.train.validate()?;
        }
        if mode == Mode::RankCheck {
            let rc = &self.rank_check;
            if rc.k.is_empty() || rc.l.is_empty() || rc.draws == 0 {
                return Err(Error::InvalidConfig(
                    "rank check needs K and L grids and draws > 0".into(),
                ));
            }
            for &l in &rc.l {
                SystemSpec {
                    l,
                    ..self.system.clone()
                }
                .validate()?;
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form, output path excluded.
    pub fn config_hash(&self) -> String {
        let canonical = ExperimentConfig {
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    fn sweep(&self) -> &Sweep {
        self.sweep.as_ref().expect("validated")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowType {
    Detail,
    Aggregate,
}

/// One CSV row of an emulation sweep. Aggregate rows hold seed means, leave
/// `seed` empty and fill `sum_error_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmulationRow {
    pub row_type: RowType,
    pub config_hash: String,
    pub sweep_variable: SweepVariable,
    pub sweep_value: f64,
    pub sweep_linear: f64,
    pub seed: Option<u64>,
    pub n_seeds: usize,
    pub weight_error: f64,
    pub bias_error: f64,
    pub sum_error: f64,
    pub sum_error_std: Option<f64>,
    pub iterations: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct EmulationSweep {
    pub config_hash: String,
    pub rows: Vec<EmulationRow>,
    pub aggregates: Vec<EmulationRow>,
    pub warnings: Vec<String>,
}

impl EmulationSweep {
    /// `(sweep_value, mean sum error)` per grid point, in grid order.
    pub fn mean_sum_error(&self) -> Vec<(f64, f64)> {
        self.aggregates.iter().map(|r| (r.sweep_value, r.sum_error)).collect()
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn target_for(cfg: &ExperimentConfig, checkpoint_target: Option<&TargetLayer<f64>>, seed: u64) -> TargetLayer<f64> {
    match checkpoint_target {
        Some(t) => t.clone(),
        None => TargetLayer::random(cfg.system.n, seed ^ TARGET_SALT),
    }
}

fn load_target(cfg: &ExperimentConfig) -> Result<Option<TargetLayer<f64>>> {
    match &cfg.target {
        TargetSource::Random => Ok(None),
        TargetSource::Checkpoint { path } => {
            let t = target_from_state(&checkpoint::load(path)?);
            if t.n() != cfg.system.n {
                return Err(Error::InvalidConfig(format!(
                    "checkpoint target has N = {}, system n = {}",
                    t.n(),
                    cfg.system.n
                )));
            }
            Ok(Some(t))
        }
    }
}

/// Algorithm 1 on the first channel realization for `seed` at one system
/// setting.
pub fn emulate_once(
    spec: &SystemSpec,
    seed: u64,
    target: &TargetLayer<f64>,
    mode: ReflectionMode,
    settings: &AlgorithmSettings,
) -> Result<EmulationReport> {
    let system = spec.system(seed);
    let ch = sample_channel::<f64>(&system, 0)?;
    Ok(run_algorithm1(&system, &ch, target, mode, settings)?.1)
}

/// Flags grid neighbours whose mean moves against `direction`.
pub fn trend_warnings(label: &str, means: &[(f64, f64)], direction: i8) -> Vec<String> {
    means
        .windows(2)
        .filter(|w| (w[1].1 - w[0].1) * f64::from(direction) < 0.0)
        .map(|w| {
            format!(
                "{label}: mean moved against the expected trend between {} ({:.6e}) and {} ({:.6e})",
                w[0].0, w[0].1, w[1].0, w[1].1
            )
        })
        .collect()
}

pub fn run_emulate_sweep(cfg: &ExperimentConfig) -> Result<EmulationSweep> {
    let cfg = cfg.resolved(Mode::Emulate)?;
    let hash = cfg.config_hash();
    let checkpoint_target = load_target(&cfg)?;
    let sweep = cfg.sweep().clone();
    let jobs: Vec<(f64, u64)> = sweep
        .values
        .iter()
        .flat_map(|&x| cfg.seeds.iter().map(move |&s| (x, s)))
        .collect();
    let results: Vec<Result<EmulationRow>> = jobs
        .par_iter()
        .map(|&(x, seed)| {
            let target = target_for(&cfg, checkpoint_target.as_ref(), seed);
            let spec = cfg.system.at(sweep.variable, x);
            let r = emulate_once(&spec, seed, &target, cfg.reflection, &cfg.algorithm)?;
            Ok(EmulationRow {
                row_type: RowType::Detail,
                config_hash: hash.clone(),
                sweep_variable: sweep.variable,
                sweep_value: x,
                sweep_linear: sweep.variable.linear(x),
                seed: Some(seed),
                n_seeds: 1,
                weight_error: r.weight_error,
                bias_error: r.bias_error,
                sum_error: r.sum_error,
                sum_error_std: None,
                iterations: r.iterations as f64,
                converged: r.converged,
            })
        })
        .collect();
    let (rows, failure) = split_results(results);

    let mut aggregates = Vec::new();
    for &x in &sweep.values {
        let at: Vec<&EmulationRow> = rows.iter().filter(|r| r.sweep_value == x).collect();
        if at.is_empty() {
            continue;
        }
        let col = |f: fn(&EmulationRow) -> f64| at.iter().map(|r| f(r)).collect::<Vec<_>>();
        let (sum, std) = mean_std(&col(|r| r.sum_error));
        aggregates.push(EmulationRow {
            row_type: RowType::Aggregate,
            config_hash: hash.clone(),
            sweep_variable: sweep.variable,
            sweep_value: x,
            sweep_linear: sweep.variable.linear(x),
            seed: None,
            n_seeds: at.len(),
            weight_error: mean_std(&col(|r| r.weight_error)).0,
            bias_error: mean_std(&col(|r| r.bias_error)).0,
            sum_error: sum,
            sum_error_std: Some(std),
            iterations: mean_std(&col(|r| r.iterations)).0,
            converged: at.iter().all(|r| r.converged),
        });
    }
    let out = EmulationSweep {
        config_hash: hash,
        warnings: trend_warnings(
            "mean sum error",
            &aggregates
                .iter()
                .map(|r| (r.sweep_value, r.sum_error))
                .collect::<Vec<_>>(),
            sweep.variable.expected_error_trend(),
        ),
        rows,
        aggregates,
    };
    for w in &out.warnings {
        log::warn!("{w}");
    }
    if let Some(path) = &cfg.output {
        write_csv(path, out.rows.iter().chain(&out.aggregates))?;
        write_metadata(path, &cfg, &out.config_hash, &out.warnings)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Successful values in job order, plus the first failure.
fn split_results<T>(results: Vec<Result<T>>) -> (Vec<T>, Option<Error>) {
    let mut ok = Vec::with_capacity(results.len());
    let mut failure = None;
    for r in results {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => {
                log::error!("job failed: {e}");
                failure.get_or_insert(e);
            }
        }
    }
    (ok, failure)
}

fn write_csv<'a, T: Serialize + 'a>(path: &Path, rows: impl IntoIterator<Item = &'a T>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Metadata<'a> {
    config_hash: &'a str,
    sweep_db: Option<Vec<f64>>,
    sweep_linear: Option<Vec<f64>>,
    p_max_db: f64,
    p_max_linear: f64,
    warnings: &'a [String],
    config: &'a ExperimentConfig,
}

/// `<output>.meta.json`: resolved config, its hash, and dB grids next to
/// their linear values.
fn write_metadata(path: &Path, cfg: &ExperimentConfig, hash: &str, warnings: &[String]) -> Result<()> {
    let db_sweep = cfg.sweep.as_ref().filter(|s| s.variable.is_db());
    let meta = Metadata {
        config_hash: hash,
        sweep_db: db_sweep.map(|s| s.values.clone()),
        sweep_linear: db_sweep.map(|s| s.values.iter().map(|&x| s.variable.linear(x)).collect()),
        p_max_db: cfg.system.p_max_db,
        p_max_linear: db_to_linear(cfg.system.p_max_db),
        warnings,
        config: cfg,
    };
    fs::write(sibling(path, ".meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// One training run of `scheme` on the first channel realization for
/// `seed`. The digital scheme replaces the channel by a noiseless identity.
pub fn run_scheme(
    scheme: Scheme,
    spec: &SystemSpec,
    train_cfg: &TrainConfig,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
) -> Result<TrainOutcome> {
    let system = spec.system(seed);
    let cfg = TrainConfig {
        seed,
        ..train_cfg.clone()
    };
    let with_phases = |phase_mode| TrainConfig {
        phase_mode,
        ..cfg.clone()
    };
    if scheme == Scheme::Digital {
        let ch = ChannelRealization::<f64>::identity(system.n);
        return train_centralized(&with_phases(PhaseMode::FixedLos), &ch, system.p_max, 0.0, train, test);
    }
    let ch = sample_channel::<f64>(&system, 0)?;
    let (p, s2) = (system.p_max, system.sigma2);
    match scheme {
        Scheme::TrainableUnit => train_centralized(&with_phases(PhaseMode::Unit), &ch, p, s2, train, test),
        Scheme::TrainableRelaxed => train_centralized(&with_phases(PhaseMode::Relaxed), &ch, p, s2, train, test),
        Scheme::Baseline1 => train_centralized(&with_phases(PhaseMode::FixedLos), &ch, p, s2, train, test),
        Scheme::Baseline2 => train_distributed(&cfg, &ch, p, s2, train, test),
        Scheme::Digital => unreachable!(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub row_type: RowType,
    pub config_hash: String,
    pub sweep_variable: SweepVariable,
    pub sweep_value: f64,
    pub sweep_linear: f64,
    pub seed: Option<u64>,
    pub n_seeds: usize,
    pub scheme: Scheme,
    pub final_accuracy: f64,
    pub accuracy_std: Option<f64>,
    pub trace_path: Option<String>,
}

/// Metric trace row as written next to a training sweep.
#[derive(Debug, Clone, Serialize)]
struct TraceRow<'a> {
    epoch: usize,
    train_loss: f64,
    test_accuracy: f64,
    #[serde(rename = "P_Tx")]
    p_tx: f64,
    #[serde(rename = "max|v|")]
    max_abs_v: f64,
    config_hash: &'a str,
    seed: u64,
    scheme: &'static str,
}

#[derive(Debug, Clone)]
pub struct TrainSweep {
    pub config_hash: String,
    pub rows: Vec<TrainRow>,
    pub aggregates: Vec<TrainRow>,
    pub warnings: Vec<String>,
}

impl TrainSweep {
    /// Seed-mean accuracy for `scheme` at `sweep_value`.
    pub fn mean_accuracy(&self, scheme: Scheme, sweep_value: f64) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|r| r.scheme == scheme && r.sweep_value == sweep_value)
            .map(|r| r.final_accuracy)
    }
}

pub fn run_train_sweep(cfg: &ExperimentConfig) -> Result<TrainSweep> {
    let cfg = cfg.resolved(Mode::Train)?;
    run_train_sweep_on(&cfg, &cfg.dataset.load()?)
}

/// [`run_train_sweep`] with the datasets already in memory.
pub fn run_train_sweep_on(cfg: &ExperimentConfig, data: &(Dataset, Dataset)) -> Result<TrainSweep> {
    let cfg = cfg.resolved(Mode::Train)?;
    let hash = cfg.config_hash();
    let sweep = cfg.sweep().clone();
    let schemes = cfg.schemes.clone().expect("resolved");
    let trace_dir = cfg.output.as_ref().map(|p| sibling(p, ".traces"));
    if let Some(dir) = &trace_dir {
        fs::create_dir_all(dir)?;
    }
    let mut jobs = Vec::new();
    for &x in &sweep.values {
        for &seed in &cfg.seeds {
            for &scheme in &schemes {
                jobs.push((x, seed, scheme));
            }
        }
    }
    let results: Vec<Result<TrainRow>> = jobs
        .par_iter()
        .map(|&(x, seed, scheme)| {
            let spec = cfg.system.at(sweep.variable, x);
            let outcome = run_scheme(scheme, &spec, &cfg.train, seed, &data.0, &data.1)?;
            let trace_path = match &trace_dir {
                Some(dir) => {
                    let path = dir.join(format!("{}_{:?}_{x}_seed{seed}.csv", scheme.name(), sweep.variable));
                    write_csv(
                        &path,
                        &outcome
                            .trace
                            .iter()
                            .map(|m| TraceRow {
                                epoch: m.epoch,
                                train_loss: m.train_loss,
                                test_accuracy: m.test_accuracy,
                                p_tx: m.p_tx,
                                max_abs_v: m.max_abs_v,
                                config_hash: &hash,
                                seed,
                                scheme: scheme.name(),
                            })
                            .collect::<Vec<_>>(),
                    )?;
                    Some(path.display().to_string())
                }
                None => None,
            };
            Ok(TrainRow {
                row_type: RowType::Detail,
                config_hash: hash.clone(),
                sweep_variable: sweep.variable,
                sweep_value: x,
                sweep_linear: sweep.variable.linear(x),
                seed: Some(seed),
                n_seeds: 1,
                scheme,
                final_accuracy: outcome.final_accuracy(),
                accuracy_std: None,
                trace_path,
            })
        })
        .collect();
    let (rows, failure) = split_results(results);

    let mut aggregates = Vec::new();
    let mut warnings = Vec::new();
    for &x in &sweep.values {
        let mut means = BTreeMap::new();
        for &scheme in &schemes {
            let accs: Vec<f64> = rows
                .iter()
                .filter(|r| r.sweep_value == x && r.scheme == scheme)
                .map(|r| r.final_accuracy)
                .collect();
            if accs.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&accs);
            means.insert(scheme, mean);
            aggregates.push(TrainRow {
                row_type: RowType::Aggregate,
                config_hash: hash.clone(),
                sweep_variable: sweep.variable,
                sweep_value: x,
                sweep_linear: sweep.variable.linear(x),
                seed: None,
                n_seeds: accs.len(),
                scheme,
                final_accuracy: mean,
                accuracy_std: Some(std),
                trace_path: None,
            });
        }
        if let Some(&digital) = means.get(&Scheme::Digital) {
            if means.values().any(|&m| m > digital) {
                warnings.push(format!(
                    "{:?} = {x}: digital scheme is not the most accurate",
                    sweep.variable
                ));
            }
        }
        if let (Some(&u), Some(&r)) = (means.get(&Scheme::TrainableUnit), means.get(&Scheme::TrainableRelaxed)) {
            if r < u {
                warnings.push(format!(
                    "{:?} = {x}: relaxed RIS ({r:.4}) below unit-modulus RIS ({u:.4})",
                    sweep.variable
                ));
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let out = TrainSweep {
        config_hash: hash,
        rows,
        aggregates,
        warnings,
    };
    if let Some(path) = &cfg.output {
        write_csv(path, out.rows.iter().chain(&out.aggregates))?;
        write_metadata(path, &cfg, &out.config_hash, &out.warnings)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCase {
    pub k: RicianSpec,
    pub l: usize,
    pub seed: u64,
    /// Draw count per observed rank of `H`.
    pub rank_counts: BTreeMap<usize, usize>,
    /// Draw count per value of the bound `min(rank Ĥ, rank H̄, N)`.
    pub bound_counts: BTreeMap<usize, usize>,
    pub satisfied: usize,
    pub satisfaction_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCheckReport {
    pub config_hash: String,
    pub n: usize,
    pub m: usize,
    pub draws: usize,
    pub cases: Vec<RankCase>,
    pub satisfaction_rate: f64,
}

/// Numerical rank of the cascade against its bound over the configured
/// `K × L × seed` grid, with random unit-modulus phases per draw.
pub fn run_rank_check(cfg: &ExperimentConfig) -> Result<RankCheckReport> {
    let cfg = cfg.resolved(Mode::RankCheck)?;
    let rc = &cfg.rank_check;
    let mut jobs = Vec::new();
    for &k in &rc.k {
        for &l in &rc.l {
            for &seed in &cfg.seeds {
                jobs.push((k, l, seed));
            }
        }
    }
    let cases = jobs
        .par_iter()
        .map(|&(k, l, seed)| {
            let spec = SystemSpec {
                l,
                k,
                ..cfg.system.clone()
            };
            let system = spec.system(seed);
            let mut rank_counts = BTreeMap::new();
            let mut bound_counts = BTreeMap::new();
            let mut satisfied = 0;
            for d in 0..rc.draws as u64 {
                let ch = sample_channel::<f64>(&system, d)?;
                let mut rng = ChaCha12Rng::seed_from_u64(seed ^ PHASE_SALT);
                rng.set_stream(d);
                let phases = RisPhases::random_unit(&ch.ris_sizes(), &mut rng);
                let r = rank_bound_check(&ch, &phases)?;
                *rank_counts.entry(r.rank_h).or_insert(0) += 1;
                *bound_counts.entry(r.bound).or_insert(0) += 1;
                satisfied += usize::from(r.satisfied);
            }
            Ok(RankCase {
                k,
                l,
                seed,
                satisfaction_rate: satisfied as f64 / rc.draws as f64,
                rank_counts,
                bound_counts,
                satisfied,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total: usize = cases.iter().map(|c| c.satisfied).sum();
    let report = RankCheckReport {
        config_hash: cfg.config_hash(),
        n: cfg.system.n,
        m: cfg.system.m,
        draws: rc.draws,
        satisfaction_rate: total as f64 / (cases.len() * rc.draws) as f64,
        cases,
    };
    if let Some(path) = &cfg.output {
        write_json(path, &report)?;
    }
    Ok(report)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Files written by [`dump_channel`].
#[derive(Debug, Clone, Serialize)]
pub struct DumpManifest {
    pub config_hash: String,
    pub seed: u64,
    pub channel_bin: PathBuf,
    pub channel_json: PathBuf,
    pub params_bin: PathBuf,
    pub params_json: PathBuf,
    pub report_json: PathBuf,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config_hash: &'a str,
    seed: u64,
    report: &'a EmulationReport,
}

/// Samples the base system's channel for the first seed, runs Algorithm 1
/// on it, and writes channel, transmission parameters and report into `dir`.
pub fn dump_channel(cfg: &ExperimentConfig, dir: &Path) -> Result<DumpManifest> {
    let mut cfg = cfg.clone();
    cfg.system.validate()?;
    if cfg.seeds.is_empty() {
        cfg.seeds.push(0);
    }
    let hash = cfg.config_hash();
    let seed = cfg.seeds[0];
    let system = cfg.system.system(seed);
    let ch = sample_channel::<f64>(&system, 0)?;
    let target = target_for(&cfg, load_target(&cfg)?.as_ref(), seed);
    let (params, report) = run_algorithm1(&system, &ch, &target, cfg.reflection, &cfg.algorithm)?;

    fs::create_dir_all(dir)?;
    let m = DumpManifest {
        config_hash: hash.clone(),
        seed,
        channel_bin: dir.join("channel.afch"),
        channel_json: dir.join("channel.json"),
        params_bin: dir.join("params.aftp"),
        params_json: dir.join("params.json"),
        report_json: dir.join("report.json"),
    };
    dump::write_channel(&m.channel_bin, &ch)?;
    write_json(&m.channel_json, &JsonChannel::from(&ch))?;
    dump::write_params(&m.params_bin, &params)?;
    write_json(&m.params_json, &JsonParams::from(&params))?;
    write_json(
        &m.report_json,
        &ReportFile {
            config_hash: &hash,
            seed,
            report: &report,
        },
    )?;
    Ok(m)
}
