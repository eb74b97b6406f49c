//! Acceptance criteria 1–12. Runs as a plain binary (`harness = false`) so
//! every criterion prints one PASS/FAIL line even when output is captured.
//!
//! MNIST is read from `AIRFC_MNIST_DIR`, falling back to `data/mnist` at the
//! workspace root; without it criterion 11 reports SKIP.

use std::path::PathBuf;
use std::time::Instant;

use airfc::airnn::network::{backward, draw_noise, forward, loss, normalization_correction, Batch, BnMode};
use airfc::airnn::ota::{feedback_error, from_wirtinger, ota_grad_f1, ota_grad_f2, to_wirtinger};
use airfc::airnn::state::PhaseParams;
use airfc::airnn::{NetState, PhaseMode, TrainConfig, TrainMode, Trainer, CONV_OUT, FEATURES};
use airfc::channel::{
    db_to_linear, sample_channel, ChannelRealization, ReflectionMode, RicianFactor, RisPhases, SystemConfig,
};
use airfc::data::{Dataset, Split, PIXELS};
use airfc::emulator::{
    build_quadratic_form, combiner_for_cascade, run_algorithm1_observed, update_phases_mm, update_precoder,
    AlgorithmSettings, InnerSettings, TargetLayer,
};
use airfc::experiment::{
    run_emulate_sweep, run_train_sweep_on, DatasetSpec, ExperimentConfig, Scheme, Sweep, SweepVariable, SystemSpec,
};
use airfc::experiment::{RicianSpec, TrainSweep};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type C = Complex<f64>;
type CMat = DMatrix<C>;
type CVec = DVector<C>;

enum Status {
    Pass,
    Fail,
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn judge(ok: bool, detail: String) -> Outcome {
    Outcome {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn gauss(rng: &mut ChaCha8Rng) -> C {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn cmat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMat {
    CMat::from_fn(r, c, |_, _| gauss(rng))
}

fn unit(rng: &mut ChaCha8Rng, m: usize) -> CVec {
    CVec::from_fn(m, |_, _| {
        C::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
    })
}

fn fro2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// `Σ_i Ĥ_i·diag(v_i)·H̄_i`, written out entry by entry.
fn cascade(ch: &ChannelRealization<f64>, v: &CVec) -> CMat {
    let n = ch.n();
    let mut h = CMat::zeros(n, n);
    let mut at = 0;
    for link in ch.links() {
        let m = link.tx_to_ris.nrows();
        for r in 0..n {
            for c in 0..n {
                for k in 0..m {
                    h[(r, c)] += link.ris_to_rx[(r, k)] * v[at + k] * link.tx_to_ris[(k, c)];
                }
            }
        }
        at += m;
    }
    h
}

fn rank(a: &CMat) -> usize {
    let s = a.clone().svd(false, false).singular_values;
    let top = s.iter().cloned().fold(0.0, f64::max);
    s.iter().filter(|&&x| x > 1e-8 * top).count()
}

fn criterion_1() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut updates = 0usize;
    for i in 0..100u64 {
        let n = [2, 4, 8][(i % 3) as usize];
        let m = [4, 16][((i / 3) % 2) as usize];
        let k = [0.0, 10.0][((i / 6) % 2) as usize];
        let p = db_to_linear([-10.0, 0.0, 10.0, 20.0][(i % 4) as usize]);
        let mode = if i % 5 == 0 {
            ReflectionMode::Relaxed
        } else {
            ReflectionMode::UnitModulus
        };
        let cfg = SystemConfig::single_ris(n, m, p, 1.0, RicianFactor::from_db(k), 100 + i);
        let ch = sample_channel::<f64>(&cfg, 0).unwrap();
        let target = TargetLayer::<f64>::random(n, 9000 + i);
        let mut prev: Option<f64> = None;
        run_algorithm1_observed(
            &cfg,
            &ch,
            &target,
            mode,
            &AlgorithmSettings::default(),
            &mut |_, obj| {
                if let Some(p) = prev {
                    worst = worst.max((obj - p) / p.abs());
                    updates += 1;
                }
                prev = Some(obj);
            },
        )
        .unwrap();
    }
    judge(
        worst <= 1e-9,
        format!("100 instances, {updates} block updates, worst relative increase {worst:.2e} (limit 1e-9)"),
    )
}

fn inv2(a: &CMat) -> CMat {
    let det = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
    CMat::from_row_slice(2, 2, &[a[(1, 1)], -a[(0, 1)], -a[(1, 0)], a[(0, 0)]]) / det
}

fn criterion_2() -> Outcome {
    let mut worst_obj = 0.0f64;
    let mut worst_pow = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + i);
        let cfg = SystemConfig::single_ris(2, 4, 1.0, 1.0, RicianFactor::from_db(0.0), 300 + i);
        let ch = sample_channel::<f64>(&cfg, 0).unwrap();
        let v = unit(&mut rng, 4);
        let phases = RisPhases::new(ReflectionMode::UnitModulus, vec![v.clone()]).unwrap();
        let f2 = cmat(&mut rng, 2, 2);
        let target = TargetLayer::new(cmat(&mut rng, 2, 2), CVec::zeros(2)).unwrap();
        let ups = &f2 * cascade(&ch, &v);
        let w = &target.w;

        // dense geometric grid brackets the smallest feasible λ, bisection
        // on the closed-form 2×2 power profile pins it
        let gram = ups.adjoint() * &ups;
        let rhs = ups.adjoint() * w;
        let f_of = |lam: f64| inv2(&(&gram + CMat::identity(2, 2) * C::new(lam, 0.0))) * &rhs;
        let obj = |f1: &CMat| fro2(&(&ups * f1 - w));
        let p_max = 0.5 * fro2(&f_of(0.0));
        let grid: Vec<f64> = (0..=20_000)
            .map(|k| 10f64.powf(-10.0 + 20.0 * k as f64 / 20_000.0))
            .collect();
        let first = grid.iter().position(|&l| fro2(&f_of(l)) <= p_max).unwrap();
        let (mut lo, mut hi) = (if first == 0 { 0.0 } else { grid[first - 1] }, grid[first]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fro2(&f_of(mid)) > p_max {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = obj(&f_of(hi));

        let sol = update_precoder(&f2, &phases, &ch, &target, p_max).unwrap();
        let power = fro2(&sol.f1);
        worst_obj = worst_obj.max((obj(&sol.f1) - oracle).abs() / oracle.max(1.0));
        worst_pow = worst_pow.max((power - p_max).abs() / p_max);
        worst_kkt = worst_kkt.max(sol.lambda * (power - p_max).abs() / p_max);
    }
    judge(
        worst_obj <= 1e-6 && worst_pow <= 1e-6 && worst_kkt <= 1e-6,
        format!(
            "50 instances: objective gap {worst_obj:.2e}, power residual {worst_pow:.2e}, KKT residual {worst_kkt:.2e} (limits 1e-6)"
        ),
    )
}

fn criterion_3() -> Outcome {
    let mut worst_grad = 0.0f64;
    let mut worst_drop = f64::NEG_INFINITY;
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + i);
        let n = [2, 4, 8][(i % 3) as usize];
        let sigma2 = [0.1, 1.0, 10.0][(i % 3) as usize];
        let ubar = cmat(&mut rng, n, n);
        let w = cmat(&mut rng, n, n);
        let f2 = combiner_for_cascade(&ubar, &w, sigma2).unwrap();
        let obj = |f: &CMat| fro2(&(f * &ubar - &w)) + sigma2 * fro2(f);
        let grad = (&f2 * &ubar - &w) * ubar.adjoint() + &f2 * C::new(sigma2, 0.0);
        worst_grad = worst_grad.max(fro2(&grad).sqrt() / fro2(&(&w * ubar.adjoint())).sqrt());
        let base = obj(&f2);
        for _ in 0..100 {
            let d = cmat(&mut rng, n, n);
            let d = &d * C::new(1e-3 / fro2(&d).sqrt(), 0.0);
            worst_drop = worst_drop.max((base - obj(&(&f2 + d))) / base);
        }
    }
    judge(
        worst_grad <= 1e-8 && worst_drop <= 0.0,
        format!(
            "50 instances: stationarity {worst_grad:.2e} (limit 1e-8), largest relative decrease under perturbation {worst_drop:.2e} (must be <= 0)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut worst_tangent = 0.0f64;
    let mut worst_dominance = f64::NEG_INFINITY;
    for i in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + i);
        let cfg = SystemConfig::single_ris(4, 8, 1.0, 1.0, RicianFactor::from_db(5.0), 600 + i);
        let ch = sample_channel::<f64>(&cfg, 0).unwrap();
        let target = TargetLayer::<f64>::random(4, 700 + i);
        let qf = build_quadratic_form(&cmat(&mut rng, 4, 4), &cmat(&mut rng, 4, 4), &ch, &target).unwrap();
        let lambda = qf.omega.clone().symmetric_eigen().eigenvalues.max();
        let quad = |v: &CVec| v.dotc(&(&qf.omega * v)).re;
        let v_r = unit(&mut rng, 8);
        let scale = lambda * 8.0;
        worst_tangent = worst_tangent.max((qf.surrogate_quadratic(&v_r, &v_r, lambda) - quad(&v_r)).abs() / scale);
        for _ in 0..100 {
            let v = unit(&mut rng, 8);
            worst_dominance = worst_dominance.max((quad(&v) - qf.surrogate_quadratic(&v, &v_r, lambda)) / scale);
        }
    }

    // exhaustive 64-level grid over M = 4 coefficients
    const LEVELS: usize = 64;
    let table: Vec<C> = (0..LEVELS)
        .map(|k| C::from_polar(1.0, std::f64::consts::TAU * k as f64 / LEVELS as f64))
        .collect();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut first_start_hits = 0;
    for i in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(800 + i);
        let cfg = SystemConfig::single_ris(2, 4, 1.0, 1.0, RicianFactor::from_db(0.0), 900 + i);
        let ch = sample_channel::<f64>(&cfg, 0).unwrap();
        let target = TargetLayer::<f64>::random(2, 1000 + i);
        let f1 = CMat::identity(2, 2) * C::new((0.5f64).sqrt(), 0.0);
        let f2 = cmat(&mut rng, 2, 2);
        let qf = build_quadratic_form(&f1, &f2, &ch, &target).unwrap();
        let om = &qf.omega;
        let eval = |v: [C; 4]| {
            let mut q = 0.0;
            let mut lin = 0.0;
            for a in 0..4 {
                for b in 0..4 {
                    q += (v[a].conj() * om[(a, b)] * v[b]).re;
                }
                lin += (v[a] * qf.phi[a]).re;
            }
            q - 2.0 * lin + qf.constant
        };
        let mut best = f64::INFINITY;
        for a in &table {
            for b in &table {
                for c in &table {
                    for d in &table {
                        best = best.min(eval([*a, *b, *c, *d]));
                    }
                }
            }
        }
        // the MM iteration only reaches a stationary point of a nonconvex
        // problem, so the fixed point compared is the best of 16 random starts
        let settings = InnerSettings {
            tol: 1e-15,
            max_iter: 100_000,
        };
        let mut mm = f64::INFINITY;
        for start in 0..16 {
            let v = update_phases_mm(&unit(&mut rng, 4), &qf, settings).unwrap();
            let value = eval([v[0], v[1], v[2], v[3]]);
            if start == 0 && (value - best) / best.abs() <= 0.02 {
                first_start_hits += 1;
            }
            mm = mm.min(value);
        }
        worst_gap = worst_gap.max((mm - best) / best.abs());
    }
    judge(
        worst_tangent <= 1e-10 && worst_dominance <= 1e-10 && worst_gap <= 0.02,
        format!(
            "tangency {worst_tangent:.2e}, worst dominance violation {worst_dominance:.2e} (limits 1e-10); MM vs 64^4 grid optimum worst gap {:.3}% (limit 2%), single start within 2% on {first_start_hits}/10",
            100.0 * worst_gap
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + i);
        let n = [2, 4][(i % 2) as usize];
        let l = [1, 2][((i / 2) % 2) as usize];
        let mut cfg = SystemConfig::single_ris(n, 8, 1.0, 1.0, RicianFactor::from_db(3.0), 1200 + i);
        cfg.ris_elements = SystemConfig::split_elements(8, l);
        let ch = sample_channel::<f64>(&cfg, 0).unwrap();
        let target = TargetLayer::<f64>::random(n, 1300 + i);
        let f1 = cmat(&mut rng, n, n);
        let f2 = cmat(&mut rng, n, n);
        let qf = build_quadratic_form(&f1, &f2, &ch, &target).unwrap();
        for j in 0..20 {
            let mut v = unit(&mut rng, 8);
            if j % 2 == 1 {
                v.iter_mut().for_each(|z| *z *= rng.random_range(0.0..1.0));
            }
            let direct = fro2(&(&f2 * cascade(&ch, &v) * &f1 - &target.w));
            worst = worst.max((qf.value(&v) - direct).abs() / direct.max(1.0));
        }
    }
    judge(
        worst <= 1e-10,
        format!("50 instances x 20 points, worst relative gap {worst:.2e} (limit 1e-10)"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1400);
    let mut single_ok = 0;
    let mut multi_ok = 0;
    let mut bound_ok = 0;
    let mut bound_total = 0;
    let mut check_bound = |ch: &ChannelRealization<f64>, h: &CMat| {
        bound_total += 1;
        let b = rank(&ch.stacked_ris_to_rx()).min(rank(&ch.stacked_tx_to_ris()));
        usize::from(rank(h) <= b)
    };
    for d in 0..100u64 {
        let n = [4, 8, 16][(d % 3) as usize];
        let m = [8, 32][(d % 2) as usize];
        let cfg = SystemConfig::single_ris(n, m, 1.0, 1.0, RicianFactor::PureLos, 1500);
        let ch = sample_channel::<f64>(&cfg, d).unwrap();
        let h = cascade(&ch, &unit(&mut rng, m));
        single_ok += usize::from(rank(&h) == 1);
        bound_ok += check_bound(&ch, &h);
    }
    for d in 0..100u64 {
        let (n, l) = [(8, 2), (8, 3), (8, 5), (4, 5), (16, 5)][(d % 5) as usize];
        let mut cfg = SystemConfig::single_ris(n, 20, 1.0, 1.0, RicianFactor::PureLos, 1600);
        cfg.ris_elements = SystemConfig::split_elements(20, l);
        let ch = sample_channel::<f64>(&cfg, d).unwrap();
        let h = cascade(&ch, &unit(&mut rng, 20));
        multi_ok += usize::from(rank(&h) == l.min(n));
        bound_ok += check_bound(&ch, &h);
    }
    for d in 0..100u64 {
        let k = [
            RicianFactor::Rayleigh,
            RicianFactor::from_db(0.0),
            RicianFactor::from_db(10.0),
        ][(d % 3) as usize];
        let (n, m, l) = [(8, 4, 1), (8, 8, 2), (6, 12, 3), (4, 16, 1)][(d % 4) as usize];
        let mut cfg = SystemConfig::single_ris(n, m, 1.0, 1.0, k, 1700);
        cfg.ris_elements = SystemConfig::split_elements(m, l);
        let ch = sample_channel::<f64>(&cfg, d).unwrap();
        let h = cascade(&ch, &unit(&mut rng, m));
        bound_ok += check_bound(&ch, &h);
    }
    judge(
        single_ok == 100 && multi_ok == 100 && bound_ok == bound_total,
        format!(
            "pure-LoS L=1 rank 1: {single_ok}/100; pure-LoS rank min(L,N): {multi_ok}/100; rank bound: {bound_ok}/{bound_total}"
        ),
    )
}

fn random_images(b: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(PIXELS, b, |_, _| rng.random::<f64>())
}

fn net_channel(seed: u64) -> ChannelRealization<f64> {
    let mut cfg = SystemConfig::single_ris(FEATURES, 6, 10.0, 1.0, RicianFactor::from_db(-10.0), seed);
    cfg.ris_elements = vec![4, 2];
    sample_channel(&cfg, 0).unwrap()
}

fn criterion_7() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (mode, p_factor) in [
        (PhaseMode::Unit, 0.7),
        (PhaseMode::Relaxed, 1.3),
        (PhaseMode::FixedLos, 0.5),
    ] {
        let ch = net_channel(17);
        let cfg = TrainConfig {
            phase_mode: mode,
            ..TrainConfig::default()
        };
        let p_max = 10.0;
        let mut state = NetState::init(&cfg, &ch, p_max, 1.0).unwrap();
        state.params.p_tx = p_max * p_factor;
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        if let PhaseParams::Free(v) = &mut state.params.phases {
            v.iter_mut().for_each(|z| *z *= rng.random_range(0.5..1.5));
        }
        state.params.out_w = DMatrix::from_fn(10, 2 * FEATURES, |_, _| rng.random_range(-1.0..1.0));
        let images = random_images(4, 19);
        let labels = [3, 1, 4, 1];
        let noise = draw_noise(&mut rng, FEATURES, 4, 1.0);
        let eval = |s: &NetState| {
            let c = forward(s, &images, &ch, &noise, BnMode::Batch, 1.0).unwrap();
            loss(&c.logits, &labels, s, &cfg, p_max)
        };
        let c = forward(&state, &images, &ch, &noise, BnMode::Batch, 1.0).unwrap();
        let grads = backward(&state, &c, &labels, &ch, &cfg, p_max).grads;
        let g = grads.pack();
        let floor = 1e-3 * g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let base = state.params.pack();
        let mut probe = state.clone();
        let mut at = 0;
        let mut worst: (f64, &str) = (0.0, "");
        for (name, t) in grads.tensors() {
            let (mut diff, mut fd_n, mut an_n) = (0.0, 0.0, 0.0);
            for i in at..at + t.numel() {
                let mut x = base.clone();
                x[i] += 1e-5;
                probe.params.unpack(&x);
                let up = eval(&probe);
                x[i] -= 2e-5;
                probe.params.unpack(&x);
                let fd = (up - eval(&probe)) / 2e-5;
                diff += (fd - g[i]).powi(2);
                fd_n += fd * fd;
                an_n += g[i] * g[i];
            }
            at += t.numel();
            // fc_b feeds batch norm directly and has an exactly zero gradient;
            // the floor keeps roundoff from deciding that case
            let rel = diff.sqrt() / fd_n.sqrt().max(an_n.sqrt()).max(floor);
            if rel > worst.0 {
                worst = (rel, name);
            }
        }
        ok &= worst.0 <= 1e-4;
        lines.push(format!("{mode:?} worst {:.1e} ({})", worst.0, worst.1));
    }
    judge(ok, format!("{} (limit 1e-4)", lines.join(", ")))
}

fn criterion_8() -> Outcome {
    let ch = net_channel(21);
    let cfg = TrainConfig::default();
    let state = NetState::init(&cfg, &ch, 10.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst_f2 = 0.0f64;
    let mut worst_f1 = 0.0f64;
    for trial in 0..5u64 {
        let images = random_images(8, 23 + trial);
        let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..10)).collect();
        let noise = draw_noise(&mut rng, FEATURES, 8, 1.0);
        let fb_noise = draw_noise(&mut rng, FEATURES, 8, 1.0);
        let c = forward(&state, &images, &ch, &noise, BnMode::Batch, 1.0).unwrap();
        let b = backward(&state, &c, &labels, &ch, &cfg, 10.0);
        let d_y = to_wirtinger(&b.g_y);
        let f2 = ota_grad_f2(&d_y, &c.r);
        worst_f2 = worst_f2.max((f2 - to_wirtinger(&b.grads.f2)).camax());
        let fb = ota_grad_f1(&(&state.params.f2 * &c.h), &d_y, &c.x_out, &fb_noise);
        let analytic = to_wirtinger(&(&b.g_s * c.x_out.adjoint()));
        worst_f1 = worst_f1.max((&fb.f1 - analytic - feedback_error(&fb_noise, &c.x_out)).camax());
        // with the local normalization term the noiseless feedback is the full gradient
        let clean = ota_grad_f1(&(&state.params.f2 * &c.h), &d_y, &c.x_out, &CMat::zeros(FEATURES, 8));
        let full = &clean.f1 + to_wirtinger(&normalization_correction(&from_wirtinger(&clean.received), &c));
        worst_f1 = worst_f1.max((full - to_wirtinger(&b.grads.f1)).camax());
    }
    judge(
        worst_f2 <= 1e-12 && worst_f1 <= 1e-12,
        format!("F2 deviation {worst_f2:.2e}, F1 deviation from analytic + n x^T {worst_f1:.2e} (limits 1e-12)"),
    )
}

fn synthetic_dataset(count: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = (0..count * PIXELS).map(|_| rng.random::<u8>()).collect();
    let labels = (0..count).map(|_| rng.random_range(0..10u8)).collect();
    Dataset::from_raw(pixels, labels, Split::Train).unwrap()
}

fn criterion_9() -> Outcome {
    let sys = SystemConfig::single_ris(FEATURES, 16, 10.0, 0.0, RicianFactor::from_db(-10.0), 31);
    let ch = sample_channel::<f64>(&sys, 0).unwrap();
    let ds = synthetic_dataset(96, 32);
    let central_cfg = TrainConfig {
        phase_mode: PhaseMode::FixedLos,
        seed: 33,
        ..TrainConfig::default()
    };
    let dist_cfg = TrainConfig {
        mode: TrainMode::Distributed,
        ..central_cfg.clone()
    };
    let mut a = Trainer::new(&central_cfg, &ch, sys.p_max, 0.0).unwrap();
    let mut b = Trainer::new(&dist_cfg, &ch, sys.p_max, 0.0).unwrap();
    let same_init = a.state == b.state;
    let mut gaps = Vec::new();
    for idx in ds.batches(32, 1, 0).unwrap() {
        let batch = Batch::from_dataset(&ds, &idx);
        a.step(&batch).unwrap();
        b.step(&batch).unwrap();
        let (x, y) = (a.state.params.pack(), b.state.params.pack());
        gaps.push(x.iter().zip(&y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
    }
    judge(
        same_init && gaps.len() == 3 && gaps.iter().all(|&g| g <= 1e-8),
        format!(
            "max parameter gap after each batch: {} (limit 1e-8)",
            gaps.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn emulation_sweep(variable: SweepVariable, values: Vec<f64>, system: SystemSpec) -> Vec<(f64, f64)> {
    let cfg = ExperimentConfig {
        sweep: Some(Sweep { variable, values }),
        system,
        seeds: (0..20).collect(),
        ..ExperimentConfig::default()
    };
    run_emulate_sweep(&cfg).unwrap().mean_sum_error()
}

fn criterion_10() -> Outcome {
    let base = SystemSpec {
        n: 16,
        m: 64,
        l: 1,
        p_max_db: 10.0,
        sigma2: 1.0,
        k: RicianSpec::Db(0.0),
    };
    let strictly = |xs: &[(f64, f64)], sign: f64| xs.windows(2).all(|w| sign * (w[1].1 - w[0].1) > 0.0);
    let fmt = |xs: &[(f64, f64)]| {
        xs.iter()
            .map(|(x, e)| format!("{x}:{e:.3}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let p = emulation_sweep(SweepVariable::PMaxDb, vec![-20.0, -10.0, 0.0, 10.0, 20.0], base.clone());
    let m = emulation_sweep(
        SweepVariable::M,
        vec![16.0, 32.0, 64.0],
        SystemSpec {
            p_max_db: 0.0,
            ..base.clone()
        },
    );
    let k = emulation_sweep(SweepVariable::KDb, vec![0.0, 10.0, 20.0, 30.0], base.clone());
    let l = emulation_sweep(
        SweepVariable::L,
        vec![1.0, 5.0],
        SystemSpec {
            k: RicianSpec::Db(30.0),
            ..base
        },
    );
    let reduction = 1.0 - l[1].1 / l[0].1;
    let checks = [
        strictly(&p, -1.0),
        strictly(&m, -1.0),
        strictly(&k, 1.0),
        reduction >= 0.5,
    ];
    judge(
        checks.iter().all(|&c| c),
        format!(
            "P_max dB [{}] {}; M [{}] {}; K dB [{}] {}; L=5 vs L=1 at K=30 dB reduction {:.1}% {}",
            fmt(&p),
            mark(checks[0]),
            fmt(&m),
            mark(checks[1]),
            fmt(&k),
            mark(checks[2]),
            100.0 * reduction,
            mark(checks[3])
        ),
    )
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "VIOLATED"
    }
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("AIRFC_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn criterion_11() -> Outcome {
    let dataset = DatasetSpec {
        dir: mnist_dir(),
        train_subset: Some(10_000),
        test_subset: Some(2_000),
        subset_seed: 0,
    };
    let data = match dataset.load() {
        Ok(d) => d,
        Err(e) => {
            return Outcome {
                status: Status::Skip,
                detail: format!("MNIST not available under {}: {e}", dataset.dir.display()),
            }
        }
    };
    let cfg = |values: Vec<f64>, schemes: Vec<Scheme>| ExperimentConfig {
        sweep: Some(Sweep {
            variable: SweepVariable::PMaxDb,
            values,
        }),
        system: SystemSpec {
            n: FEATURES,
            m: 50,
            l: 1,
            p_max_db: 10.0,
            sigma2: 1.0,
            k: RicianSpec::Db(-10.0),
        },
        train: TrainConfig {
            epochs: 20,
            ..TrainConfig::default()
        },
        schemes: Some(schemes),
        dataset: dataset.clone(),
        seeds: vec![0, 1, 2],
        ..ExperimentConfig::default()
    };
    let main: TrainSweep = run_train_sweep_on(&cfg(vec![10.0], Scheme::ALL.to_vec()), &data).unwrap();
    let low = run_train_sweep_on(
        &cfg(vec![-10.0, 0.0], vec![Scheme::Baseline1, Scheme::Baseline2]),
        &data,
    )
    .unwrap();
    let acc = |s: Scheme| main.mean_accuracy(s, 10.0).unwrap();
    let (digital, relaxed, unit_acc, b1) = (
        acc(Scheme::Digital),
        acc(Scheme::TrainableRelaxed),
        acc(Scheme::TrainableUnit),
        acc(Scheme::Baseline1),
    );
    let gap = |p: f64| {
        let sweep = if p == 10.0 { &main } else { &low };
        sweep.mean_accuracy(Scheme::Baseline1, p).unwrap() - sweep.mean_accuracy(Scheme::Baseline2, p).unwrap()
    };
    let gaps = [gap(-10.0), gap(0.0), gap(10.0)];
    let checks = [
        digital >= 0.90,
        digital >= relaxed && relaxed >= unit_acc && unit_acc >= b1,
        gaps[0] > gaps[1] && gaps[1] > gaps[2],
    ];
    judge(
        checks.iter().all(|&c| c),
        format!(
            "digital {:.2}% {}; at 10 dB digital {:.2}% >= relaxed {:.2}% >= unit {:.2}% >= baseline1 {:.2}% {}; baseline1 - baseline2 gap at -10/0/10 dB: {:.2}/{:.2}/{:.2} pts {}",
            100.0 * digital,
            mark(checks[0]),
            100.0 * digital,
            100.0 * relaxed,
            100.0 * unit_acc,
            100.0 * b1,
            mark(checks[1]),
            100.0 * gaps[0],
            100.0 * gaps[1],
            100.0 * gaps[2],
            mark(checks[2])
        ),
    )
}

fn criterion_12() -> Outcome {
    let ch = net_channel(41);
    let state = NetState::init(&TrainConfig::default(), &ch, 10.0, 1.0).unwrap();
    let c = forward(
        &state,
        &random_images(5, 42),
        &ch,
        &CMat::zeros(FEATURES, 5),
        BnMode::Batch,
        1.0,
    )
    .unwrap();
    let ok = CONV_OUT == 7 && FEATURES == 49 && c.conv.shape() == (2 * 49, 5) && c.x_out.shape() == (49, 5);
    judge(
        ok,
        format!(
            "28x28 -> conv {}x{}x{} -> {} complex features per sample (x_out {:?})",
            2,
            CONV_OUT,
            CONV_OUT,
            c.x_out.nrows(),
            c.x_out.shape()
        ),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let only: Option<Vec<usize>> = std::env::var("AIRFC_CRITERIA")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [Criterion; 12] = [
        (1, "Algorithm 1 monotone descent", criterion_1),
        (2, "precoder optimality", criterion_2),
        (3, "combiner optimality", criterion_3),
        (4, "MM phase update", criterion_4),
        (5, "quadratic-form equivalence", criterion_5),
        (6, "rank laws", criterion_6),
        (7, "gradient exactness", criterion_7),
        (8, "over-the-air gradient fidelity", criterion_8),
        (9, "distributed = centralized at zero noise", criterion_9),
        (10, "emulation trends", criterion_10),
        (11, "training trends", criterion_11),
        (12, "shape contract", criterion_12),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let out = run();
        let tag = match out.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed.push(id);
                "FAIL"
            }
            Status::Skip => "SKIP",
        };
        println!(
            "criterion {id:>2} {tag} {name}: {} [{:.1} s]",
            out.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
