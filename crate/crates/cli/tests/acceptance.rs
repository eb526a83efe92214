//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.
//!
//! Run with `cargo test -p clockwalk-cli --test acceptance`.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use clockwalk::process::{continuity_residual_at, trajectory_rng};
use clockwalk::{
    build_reduced, conditional_cdfs, ensemble, flipped_edges, initial_state, verify_conservation,
    ChainConfig, Complex, ConditionalCdfs, Ensemble, PairState, SamplerSettings,
    SpectralDecomposition, WaveTable,
};
use clockwalk_cli::commands::{amplitude_rows, compare};
use clockwalk_cli::config::{Mode, Overrides, RunConfig};
use nalgebra::DMatrix;
use rand::Rng;

/// Ratio `max_t |ψ_t(6,7)| / max_t |ψ⁰_t(6,7)|` for `s = 7, a = 3, b = 5` on
/// `t ∈ [0, 30]`, step 0.05, from the dense Padé propagator below.
const SUPPRESSION_RATIO: f64 = 0.359_826_030_545_92;

// Conditional statistics at (12,13), s = 25, a = 11, b = 13, horizon 25,
// 10⁴ trajectories, dt = 0.005, seed 1.
const SOJOURN_MEAN_INTERACTING: f64 = 3.564_285_093_542_624_7;
const SOJOURN_MEAN_FREE: f64 = 0.671_181_529_417_376_9;
const FPT_IQR_INTERACTING: f64 = 1.472_048_418_285_943_7;
const FPT_IQR_FREE: f64 = 3.231_046_495_461_926_7;
const PIN_TOL: f64 = 1e-9;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn chain(s: usize, a: usize, b: usize) -> ChainConfig {
    ChainConfig::interacting(s, a, b).unwrap()
}

fn conservation() -> Outcome {
    let start = Instant::now();
    let reports: Vec<_> = [chain(7, 4, 5), chain(7, 3, 5)]
        .iter()
        .map(|c| verify_conservation(c).unwrap())
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let worst = reports
        .iter()
        .map(|r| r.commutator_norm.max(r.reduction_residual))
        .fold(0.0, f64::max);
    outcome(
        worst < 1e-12 && elapsed < 1.0,
        format!("worst residual {worst:.3e}, {elapsed:.3} s"),
    )
}

fn flipped_structure() -> Outcome {
    let mut ok = true;
    let mut counts = Vec::new();
    for (c, expected) in [(chain(7, 4, 5), 4), (chain(7, 3, 5), 3)] {
        let h = build_reduced(&c);
        let positive: Vec<(PairState, PairState)> = h
            .edges()
            .filter(|&(_, _, v)| v > 0.0)
            .map(|(i, j, _)| (h.indexing().site(i), h.indexing().site(j)))
            .collect();
        let located = positive.iter().all(|(p, q)| {
            p.x1() == q.x1() && p.x1() <= c.a() && p.x2() == c.b() && q.x2() == c.b() + 1
        });
        ok &= positive.len() == expected && located && positive == flipped_edges(&c);
        counts.push(positive.len());
    }
    outcome(ok, format!("positive edges {counts:?}, expected [4, 3]"))
}

fn amplitude_config(a: usize, b: usize) -> RunConfig {
    let settings = Overrides {
        s: Some(7),
        a: Some(a),
        b: Some(b),
        t_max: Some(30.0),
        dt: Some(0.05),
        ..Default::default()
    };
    RunConfig::resolve(Mode::Amplitude, settings).unwrap()
}

fn kickback() -> Outcome {
    let (summary, rows) = amplitude_rows(&amplitude_config(4, 5)).unwrap();
    let dev = summary.max_kickback_deviation;
    outcome(
        rows.len() == 601 && dev < 1e-9,
        format!("max |-psi - psi0| = {dev:.3e} over {} times", rows.len()),
    )
}

/// Independent oracle: repeated multiplication by the Padé exponential of
/// `-i h dt`, tracking the terminal amplitude.
fn dense_terminal_max(c: &ChainConfig, dt: f64, steps: usize) -> f64 {
    let h = build_reduced(c);
    let n = h.dim();
    let generator = h.to_dense().map(|v| Complex::new(0.0, -v * dt));
    let step = generator.exp();
    let site = h.indexing().index_of(PairState::new(c.s() - 1, c.s()).unwrap()).unwrap();
    let mut psi = DMatrix::<Complex<f64>>::zeros(n, 1);
    psi[(0, 0)] = Complex::new(1.0, 0.0);
    let mut best = psi[(site, 0)].norm();
    for _ in 0..steps {
        psi = &step * psi;
        best = best.max(psi[(site, 0)].norm());
    }
    best
}

fn suppression() -> Outcome {
    let (summary, _) = amplitude_rows(&amplitude_config(3, 5)).unwrap();
    let c = chain(7, 3, 5);
    let oracle = dense_terminal_max(&c, 0.05, 600) / dense_terminal_max(&c.to_free(), 0.05, 600);
    let ratio = summary.suppression_ratio;
    outcome(
        summary.max_abs_interacting < summary.max_abs_free
            && (ratio - SUPPRESSION_RATIO).abs() < 1e-6
            && (oracle - SUPPRESSION_RATIO).abs() < 1e-6,
        format!(
            "max |psi| {:.6} < free {:.6}, ratio {ratio:.12} (oracle {oracle:.12}, pinned {SUPPRESSION_RATIO})",
            summary.max_abs_interacting, summary.max_abs_free
        ),
    )
}

fn continuity() -> Outcome {
    const STENCIL: f64 = 1e-4;
    let mut worst = 0.0f64;
    let mut probes = 0;
    for (k, c) in [chain(7, 3, 5), chain(25, 11, 13)].into_iter().enumerate() {
        for (j, variant) in [c, c.to_free()].into_iter().enumerate() {
            let h = build_reduced(&variant);
            let spectral = SpectralDecomposition::new(&h).unwrap();
            let psi0 = initial_state(h.indexing());
            let mut rng = trajectory_rng(2024, (2 * k + j) as u64);
            let mut taken = 0;
            while taken < 10 {
                let t: f64 = rng.gen_range(0.5..20.0);
                let site = rng.gen_range(0..h.dim());
                let psis = [t - STENCIL, t, t + STENCIL].map(|tt| spectral.evolve(&psi0, tt));
                if let Some(r) = continuity_residual_at(&h, &psis, site).unwrap() {
                    worst = worst.max(r);
                    taken += 1;
                }
            }
            probes += taken;
        }
    }
    outcome(worst < 1e-5, format!("worst residual {worst:.3e} over {probes} probes"))
}

struct Ensembles {
    settings: SamplerSettings,
    interacting: Ensemble,
    free: Ensemble,
}

fn sample_both() -> Ensembles {
    let settings = SamplerSettings {
        dt: 0.005,
        horizon: 25.0,
        n_traj: 10_000,
        seed: 1,
        ..Default::default()
    };
    let run = |c: &ChainConfig| {
        let h = build_reduced(c);
        let table = WaveTable::new(&h, &settings).unwrap();
        ensemble(&h, &table, &settings).unwrap()
    };
    let c = chain(25, 11, 13);
    Ensembles {
        settings,
        interacting: run(&c),
        free: run(&c.to_free()),
    }
}

fn marginal_law(ens: &Ensembles) -> Outcome {
    let c = chain(25, 11, 13);
    let mut worst_z = 0.0f64;
    let mut ok = true;
    for (variant, sample) in [(c, &ens.interacting), (c.to_free(), &ens.free)] {
        ok &= sample.failures.is_empty() && sample.trajectories.len() == ens.settings.n_traj;
        let h = build_reduced(&variant);
        let spectral = SpectralDecomposition::new(&h).unwrap();
        let psi0 = initial_state(h.indexing());
        let n = sample.trajectories.len() as f64;
        for t in [2.0, 5.0, 10.0] {
            let psi = spectral.evolve(&psi0, t);
            let mut counts = vec![0usize; h.dim()];
            for tr in &sample.trajectories {
                counts[h.indexing().index_of(tr.state_at(t)).unwrap()] += 1;
            }
            for (count, amp) in counts.iter().zip(&psi.amplitudes) {
                let p = amp.norm_sqr().min(1.0);
                let sd = (n * p * (1.0 - p)).sqrt();
                let dev = (*count as f64 - n * p).abs();
                if dev > 5.0 * sd {
                    ok = false;
                }
                if sd > 0.0 {
                    worst_z = worst_z.max(dev / sd);
                }
            }
        }
    }
    outcome(ok, format!("worst |z| = {worst_z:.2} (limit 5)"))
}

fn conditionals(ens: &Ensembles) -> (ConditionalCdfs, ConditionalCdfs) {
    let target = PairState::new(12, 13).unwrap();
    let horizon = ens.settings.horizon;
    (
        conditional_cdfs(&ens.interacting.trajectories, target, horizon).unwrap(),
        conditional_cdfs(&ens.free.trajectories, target, horizon).unwrap(),
    )
}

fn sojourn_ordering(ci: &ConditionalCdfs, cf: &ConditionalCdfs) -> Outcome {
    let cmp = compare(ci, cf, 1).unwrap();
    let ci_diff = cmp.sojourn_mean_difference;
    let (mi, mf) = (ci.sojourn.mean(), cf.sojourn.mean());
    let pinned = (mi - SOJOURN_MEAN_INTERACTING).abs() < PIN_TOL
        && (mf - SOJOURN_MEAN_FREE).abs() < PIN_TOL;
    outcome(
        mi > mf && ci_diff.lower > 0.0 && pinned,
        format!(
            "mean sojourn {mi:.6} vs free {mf:.6}, 99% CI of difference [{:.4}, {:.4}]",
            ci_diff.lower, ci_diff.upper
        ),
    )
}

fn fpt_concentration(ci: &ConditionalCdfs, cf: &ConditionalCdfs) -> Outcome {
    let cmp = compare(ci, cf, 1).unwrap();
    let ci_diff = cmp.first_passage_iqr_difference;
    let (qi, qf) = (ci.first_passage.iqr(), cf.first_passage.iqr());
    let pinned = (qi - FPT_IQR_INTERACTING).abs() < PIN_TOL && (qf - FPT_IQR_FREE).abs() < PIN_TOL;
    outcome(
        qi < qf && ci_diff.upper < 0.0 && pinned,
        format!(
            "FPT IQR {qi:.6} vs free {qf:.6}, 99% CI of difference [{:.4}, {:.4}]",
            ci_diff.lower, ci_diff.upper
        ),
    )
}

fn run_sample(dir: &Path, name: &str, threads: usize) -> Vec<u8> {
    let out = dir.join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_clockwalk"))
        .args(["sample", "--n-traj", "1000", "--seed", "7", "--threads"])
        .arg(threads.to_string())
        .arg("--out")
        .arg(&out)
        .output()
        .expect("run clockwalk");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    fs::read(out).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let first = run_sample(dir.path(), "a.csv", 4);
    let second = run_sample(dir.path(), "b.csv", 4);
    let serial = run_sample(dir.path(), "c.csv", 1);
    outcome(
        !first.is_empty() && first == second && first == serial,
        format!("{} bytes; repeat identical: {}, 1 vs 4 threads identical: {}", first.len(), first == second, first == serial),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, o: Outcome| {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        println!("{tag} [{id}] {name}: {}", o.detail);
        if !o.passed {
            failed += 1;
        }
    };
    report(1, "conservation", conservation());
    report(2, "flipped-edge structure", flipped_structure());
    report(3, "dynamical kickback", kickback());
    report(4, "interference suppression", suppression());
    report(5, "continuity equation", continuity());
    let ens = sample_both();
    report(6, "sampler marginal law", marginal_law(&ens));
    let (ci, cf) = conditionals(&ens);
    report(7, "sojourn ordering", sojourn_ordering(&ci, &cf));
    report(8, "first-passage concentration", fpt_concentration(&ci, &cf));
    report(9, "determinism", determinism());
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
