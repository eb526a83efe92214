use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clockwalk::hamiltonian::gauge_residual;
use clockwalk::process::{continuity_residual, read_trajectories, write_trajectories};
use clockwalk::propagator::uniform_grid;
use clockwalk::stats::{bootstrap_difference, iqr, mean, BootstrapInterval, SampleSummary};
use clockwalk::{
    amplitude_series, build_reduced, conditional_cdfs, ensemble, initial_state,
    verify_conservation, ChainConfig, ConditionalCdfs, PairState, PassageRecord,
    SpectralDecomposition, Trajectory, TrajectoryFormat, WaveTable,
};
use serde::Serialize;

use crate::config::{OutputFormat, RunConfig};
use crate::error::CliError;

/// Threshold on the continuity residual checked by `verify`.
pub const CONTINUITY_TOL: f64 = 1e-5;
/// Threshold on the `b = a + 1` gauge identity checked by `verify`.
pub const GAUGE_TOL: f64 = 1e-12;
/// Probe times and half-width of the central difference used by `verify`.
pub const CONTINUITY_PROBES: [f64; 5] = [0.5, 1.0, 2.5, 5.0, 10.0];
pub const CONTINUITY_STENCIL: f64 = 1e-4;

pub const BOOTSTRAP_RESAMPLES: usize = 2000;
pub const BOOTSTRAP_CONFIDENCE: f64 = 0.99;

fn write_file<F>(path: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> clockwalk::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| match e {
        clockwalk::Error::Io(src) => CliError::io(path, src),
        other => other.into(),
    })?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_file(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            passed: value < threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub chain: ChainConfig,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failing(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}

/// Conservation of the dressed projector, the kickback gauge identity when
/// `b = a + 1`, and the continuity equation of the rate field.
pub fn verify(chain: &ChainConfig) -> Result<VerifyReport, CliError> {
    let mut checks = Vec::new();
    let cons = verify_conservation(chain)?;
    checks.push(Check::below("projector_commutator", cons.commutator_norm, cons.tolerance));
    checks.push(Check::below("reduction_residual", cons.reduction_residual, cons.tolerance));
    if let Some(g) = gauge_residual(chain) {
        checks.push(Check::below("kickback_gauge", g, GAUGE_TOL));
    }
    let h = build_reduced(chain);
    let spectral = SpectralDecomposition::new(&h)?;
    let psi0 = initial_state(h.indexing());
    for &t in &CONTINUITY_PROBES {
        let psis = [t - CONTINUITY_STENCIL, t, t + CONTINUITY_STENCIL]
            .map(|tt| spectral.evolve(&psi0, tt));
        let r = continuity_residual(&h, &psis)?;
        checks.push(Check::below(format!("continuity_t{t}"), r, CONTINUITY_TOL));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport {
        chain: *chain,
        checks,
        passed,
    })
}

/// Runs [`verify`] and writes the report as JSON (default `verify_report.json`).
pub fn cmd_verify(cfg: &RunConfig) -> Result<VerifyReport, CliError> {
    let report = verify(&cfg.chain)?;
    let path = cfg.out.clone().unwrap_or_else(|| PathBuf::from("verify_report.json"));
    write_json(&path, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeSummary {
    pub site: PairState,
    pub rows: usize,
    pub max_abs_interacting: f64,
    pub max_abs_free: f64,
    /// `max |ψ_t| / max |ψ⁰_t|` over the grid.
    pub suppression_ratio: f64,
    /// `max |−ψ_t − ψ⁰_t|` over the grid.
    pub max_kickback_deviation: f64,
}

/// Amplitude rows for the terminal site `(s-1, s)`: the interacting `−ψ_t`
/// next to the free `ψ⁰_t`.
pub fn amplitude_rows(cfg: &RunConfig) -> Result<(AmplitudeSummary, Vec<[f64; 7]>), CliError> {
    let chain = cfg.chain.to_interacting();
    let s = chain.s();
    let site = PairState::new(s - 1, s)?;
    let grid = uniform_grid(cfg.t_max, cfg.dt)?;
    let run = |c: &ChainConfig| -> Result<_, CliError> {
        let h = build_reduced(c);
        Ok(amplitude_series(&h, &initial_state(h.indexing()), &grid, site)?)
    };
    let inter = run(&chain)?;
    let free = run(&chain.to_free())?;
    let mut rows = Vec::with_capacity(grid.len());
    let (mut mi, mut mf, mut dev) = (0.0f64, 0.0f64, 0.0f64);
    for (i, f) in inter.iter().zip(&free) {
        let neg = -i.value;
        mi = mi.max(neg.norm());
        mf = mf.max(f.value.norm());
        dev = dev.max((neg - f.value).norm());
        rows.push([i.t, neg.re, neg.im, neg.norm(), f.value.re, f.value.im, f.value.norm()]);
    }
    let summary = AmplitudeSummary {
        site,
        rows: rows.len(),
        max_abs_interacting: mi,
        max_abs_free: mf,
        suppression_ratio: mi / mf,
        max_kickback_deviation: dev,
    };
    Ok((summary, rows))
}

const AMPLITUDE_COLUMNS: [&str; 7] = ["t", "re", "im", "abs", "free_re", "free_im", "free_abs"];

/// Writes the terminal-amplitude series (default `amplitude.csv`).
pub fn cmd_amplitude(cfg: &RunConfig) -> Result<AmplitudeSummary, CliError> {
    let (summary, rows) = amplitude_rows(cfg)?;
    let default = match cfg.format {
        OutputFormat::Csv => "amplitude.csv",
        OutputFormat::Json => "amplitude.ndjson",
    };
    let path = cfg.out.clone().unwrap_or_else(|| PathBuf::from(default));
    write_file(&path, |w| {
        if cfg.format == OutputFormat::Csv {
            writeln!(w, "{}", AMPLITUDE_COLUMNS.join(","))?;
        }
        for row in &rows {
            let cells: Vec<String> = row.iter().map(|&v| clockwalk::fmt::f64_17(v)).collect();
            match cfg.format {
                OutputFormat::Csv => writeln!(w, "{}", cells.join(","))?,
                OutputFormat::Json => {
                    let fields: Vec<String> = AMPLITUDE_COLUMNS
                        .iter()
                        .zip(&cells)
                        .map(|(k, v)| format!("\"{k}\":{v}"))
                        .collect();
                    writeln!(w, "{{{}}}", fields.join(","))?
                }
            }
        }
        Ok(())
    })?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleReport {
    pub path: PathBuf,
    pub n_traj: usize,
    pub written: usize,
    pub target: PairState,
    pub hit_fraction: f64,
    pub failures: usize,
    pub subdivisions: u64,
    pub node_holds: u64,
}

fn required_target(cfg: &RunConfig) -> Result<PairState, CliError> {
    cfg.target
        .ok_or_else(|| CliError::Config("a target site is required (--target x1,x2)".into()))
}

fn trajectory_format(f: OutputFormat) -> TrajectoryFormat {
    match f {
        OutputFormat::Csv => TrajectoryFormat::Csv,
        OutputFormat::Json => TrajectoryFormat::Ndjson,
    }
}

/// Samples an ensemble for `chain` with the run's sampler settings.
pub fn sample_ensemble(cfg: &RunConfig, chain: &ChainConfig) -> Result<clockwalk::Ensemble, CliError> {
    let settings = cfg.sampler();
    let h = build_reduced(chain);
    let table = WaveTable::new(&h, &settings)?;
    Ok(ensemble(&h, &table, &settings)?)
}

fn hits(trajectories: &[Trajectory], target: PairState, horizon: f64) -> Vec<bool> {
    trajectories
        .iter()
        .map(|tr| PassageRecord::new(tr, target, horizon).hit)
        .collect()
}

/// Samples the ensemble for the configured chain (interacting unless
/// `free`) and writes it (default `trajectories.csv` / `.ndjson`).
pub fn cmd_sample(cfg: &RunConfig) -> Result<SampleReport, CliError> {
    let target = required_target(cfg)?;
    let ens = sample_ensemble(cfg, &cfg.chain)?;
    let hit = hits(&ens.trajectories, target, cfg.horizon);
    let n_hit = hit.iter().filter(|&&h| h).count();
    let kept: Vec<&Trajectory> = ens
        .trajectories
        .iter()
        .zip(&hit)
        .filter(|(_, &h)| h || !cfg.hits_only)
        .map(|(t, _)| t)
        .collect();
    let default = match cfg.format {
        OutputFormat::Csv => "trajectories.csv",
        OutputFormat::Json => "trajectories.ndjson",
    };
    let path = cfg.out.clone().unwrap_or_else(|| PathBuf::from(default));
    write_file(&path, |w| write_trajectories(w, kept.iter().copied(), trajectory_format(cfg.format)))?;
    Ok(SampleReport {
        path,
        n_traj: cfg.n_traj,
        written: kept.len(),
        target,
        hit_fraction: n_hit as f64 / cfg.n_traj as f64,
        failures: ens.failures.len(),
        subdivisions: ens.diagnostics.subdivisions,
        node_holds: ens.diagnostics.node_holds,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SideSummary {
    pub n_traj: usize,
    pub n_hit: usize,
    pub hit_fraction: f64,
    pub first_passage: SampleSummary,
    pub sojourn: SampleSummary,
}

impl From<&ConditionalCdfs> for SideSummary {
    fn from(c: &ConditionalCdfs) -> Self {
        SideSummary {
            n_traj: c.n_total,
            n_hit: c.n_hit,
            hit_fraction: c.hit_fraction,
            first_passage: c.first_passage.summary(),
            sojourn: c.sojourn.summary(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    /// Interacting minus free mean sojourn time.
    pub sojourn_mean_difference: BootstrapInterval,
    /// Interacting minus free interquartile range of the first-passage time.
    pub first_passage_iqr_difference: BootstrapInterval,
}

#[derive(Debug, Clone, Serialize)]
pub struct StatsSummary {
    pub chain: ChainConfig,
    pub target: PairState,
    pub horizon: f64,
    pub seed: u64,
    pub interacting: SideSummary,
    pub free: SideSummary,
    pub comparison: Comparison,
}

/// Bootstrap comparison of interacting against free conditional samples.
pub fn compare(inter: &ConditionalCdfs, free: &ConditionalCdfs, seed: u64) -> Result<Comparison, CliError> {
    Ok(Comparison {
        sojourn_mean_difference: bootstrap_difference(
            inter.sojourn.samples(),
            free.sojourn.samples(),
            mean,
            BOOTSTRAP_RESAMPLES,
            BOOTSTRAP_CONFIDENCE,
            seed,
        )?,
        first_passage_iqr_difference: bootstrap_difference(
            inter.first_passage.samples(),
            free.first_passage.samples(),
            iqr,
            BOOTSTRAP_RESAMPLES,
            BOOTSTRAP_CONFIDENCE,
            seed.wrapping_add(1),
        )?,
    })
}

/// Trajectory files to read instead of sampling inline.
#[derive(Debug, Clone, Default)]
pub struct StatsInputs {
    pub interacting: Option<PathBuf>,
    pub free: Option<PathBuf>,
}

fn load_or_sample(
    cfg: &RunConfig,
    chain: &ChainConfig,
    input: Option<&Path>,
) -> Result<Vec<Trajectory>, CliError> {
    match input {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            read_trajectories(BufReader::new(file), trajectory_format(cfg.format), cfg.horizon)
                .map_err(|e| match e {
                    clockwalk::Error::Io(src) => CliError::io(path, src),
                    other => other.into(),
                })
        }
        None => Ok(sample_ensemble(cfg, chain)?.trajectories),
    }
}

fn conditional(trajs: &[Trajectory], cfg: &RunConfig, label: &str) -> Result<ConditionalCdfs, CliError> {
    conditional_cdfs(trajs, required_target(cfg)?, cfg.horizon).map_err(|e| match e {
        clockwalk::Error::NoHits { .. } => CliError::CheckFailed(format!("{label}: {e}")),
        other => other.into(),
    })
}

/// Conditional first-passage and sojourn CDFs at the target for the
/// interacting and free processes, written into the output directory
/// (default `stats/`) together with `summary.json`.
pub fn cmd_stats(cfg: &RunConfig, inputs: &StatsInputs) -> Result<StatsSummary, CliError> {
    let chain = cfg.chain.to_interacting();
    let target = required_target(cfg)?;
    let inter = load_or_sample(cfg, &chain, inputs.interacting.as_deref())?;
    let free = load_or_sample(cfg, &chain.to_free(), inputs.free.as_deref())?;
    let ci = conditional(&inter, cfg, "interacting")?;
    let cf = conditional(&free, cfg, "free")?;
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("stats"));
    for (name, cdf) in [
        ("fpt_interacting.csv", &ci.first_passage),
        ("sojourn_interacting.csv", &ci.sojourn),
        ("fpt_free.csv", &cf.first_passage),
        ("sojourn_free.csv", &cf.sojourn),
    ] {
        write_file(&dir.join(name), |w| cdf.write_csv(w))?;
    }
    let summary = StatsSummary {
        chain,
        target,
        horizon: cfg.horizon,
        seed: cfg.seed,
        interacting: SideSummary::from(&ci),
        free: SideSummary::from(&cf),
        comparison: compare(&ci, &cf, cfg.seed)?,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}
