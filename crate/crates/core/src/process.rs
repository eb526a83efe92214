//! The jump process on the pair lattice whose one-time law is `|ψ_t|²`.
//!
//! From site `x` the process jumps to a lattice neighbour `y` at rate
//!
//! ```text
//! v_t(y|x) = |h(x,y)| |ψ_t(y)/ψ_t(x)| [1 + sin(Arg ψ_t(x) − Arg ψ_t(y) + Arg h(x,y))]
//! ```
//!
//! Sample paths are drawn with a first-order scheme on a uniform grid: from
//! `x` at `t`, jump to `y` with probability `v_t(y|x)·dt`. A step whose total
//! jump probability exceeds the cap is halved recursively; substeps off the
//! grid get their amplitudes from the spectral expansion directly.

use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmt::f64_17;
use crate::hamiltonian::ReducedHamiltonian;
use crate::lattice::{ChainConfig, PairState};
use crate::propagator::{initial_state, Evolution, PsiGrid, SpectralDecomposition, Wavefunction};
use crate::C64;

/// Amplitude modulus below which a site is treated as a node.
pub const DEFAULT_ZERO_THRESHOLD: f64 = 1e-12;

/// Deepest allowed step halving.
pub const MAX_SUBDIVISION_DEPTH: u32 = 20;

/// Sites with `|ψ| ≤` this are skipped by [`continuity_residual`].
pub const CONTINUITY_SITE_THRESHOLD: f64 = 1e-6;

/// Jump rate from an amplitude `psi_x` to a neighbour amplitude `psi_y`
/// across an edge of weight `h_xy`.
///
/// Uses `|h||ψx||ψy| sin(Arg ψx − Arg ψy + Arg h) = Im(h ψx ψ̄y)`, which
/// avoids the branch cut of `Arg`. Returns 0 when `|ψx| ≤ zero_threshold`.
pub fn jump_rate(h_xy: f64, psi_x: C64, psi_y: C64, zero_threshold: f64) -> f64 {
    let rx = psi_x.norm();
    if rx <= zero_threshold {
        return 0.0;
    }
    let ry = psi_y.norm();
    let coherent = (psi_x * psi_y.conj()).im * h_xy;
    ((h_xy.abs() * rx * ry + coherent) / (rx * rx)).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedRate {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Rates on every directed lattice edge at one instant, in adjacency order.
#[derive(Debug, Clone)]
pub struct RateField {
    pub time: f64,
    rates: Vec<DirectedRate>,
}

impl RateField {
    pub fn rates(&self) -> &[DirectedRate] {
        &self.rates
    }

    /// Rate of `from → to`; zero if they are not neighbours.
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates
            .iter()
            .find(|r| r.from == from && r.to == to)
            .map_or(0.0, |r| r.rate)
    }

    /// Total rate out of `from`.
    pub fn outflow(&self, from: usize) -> f64 {
        self.rates.iter().filter(|r| r.from == from).map(|r| r.rate).sum()
    }
}

/// Evaluates the rate field for the wavefunction `psi`.
pub fn rate_field(h: &ReducedHamiltonian, psi: &Wavefunction, zero_threshold: f64) -> RateField {
    let amps = &psi.amplitudes;
    let rates = (0..h.dim())
        .flat_map(|x| {
            h.row(x).iter().map(move |&(y, v)| DirectedRate {
                from: x,
                to: y,
                rate: jump_rate(v, amps[x], amps[y], zero_threshold),
            })
        })
        .collect();
    RateField {
        time: psi.time,
        rates,
    }
}

fn check_stencil(psis: &[Wavefunction; 3]) -> Result<f64> {
    let [before, mid, after] = psis;
    let d1 = mid.time - before.time;
    let d2 = after.time - mid.time;
    if d1.is_nan() || d1 <= 0.0 || (d1 - d2).abs() > 1e-9 * d1.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "continuity stencil needs equally spaced increasing times, got {}, {}, {}",
            before.time, mid.time, after.time
        )));
    }
    Ok(d1)
}

/// `d|ψ(x)|²/dt` minus the net probability flux into `x` from the rate field,
/// at the middle time of a central-difference stencil. `None` if the site is
/// below [`CONTINUITY_SITE_THRESHOLD`].
pub fn continuity_residual_at(
    h: &ReducedHamiltonian,
    psis: &[Wavefunction; 3],
    site: usize,
) -> Result<Option<f64>> {
    let delta = check_stencil(psis)?;
    let [before, mid, after] = psis;
    let amps = &mid.amplitudes;
    if amps[site].norm() <= CONTINUITY_SITE_THRESHOLD {
        return Ok(None);
    }
    let derivative =
        (after.amplitudes[site].norm_sqr() - before.amplitudes[site].norm_sqr()) / (2.0 * delta);
    let px = amps[site].norm_sqr();
    let flux: f64 = h
        .row(site)
        .iter()
        .map(|&(y, v)| {
            let inflow = jump_rate(v, amps[y], amps[site], DEFAULT_ZERO_THRESHOLD) * amps[y].norm_sqr();
            let outflow = jump_rate(v, amps[site], amps[y], DEFAULT_ZERO_THRESHOLD) * px;
            inflow - outflow
        })
        .sum();
    Ok(Some((derivative - flux).abs()))
}

/// Largest [`continuity_residual_at`] over all sites above threshold.
pub fn continuity_residual(h: &ReducedHamiltonian, psis: &[Wavefunction; 3]) -> Result<f64> {
    let mut worst = 0.0f64;
    for x in 0..h.dim() {
        if let Some(r) = continuity_residual_at(h, psis, x)? {
            worst = worst.max(r);
        }
    }
    Ok(worst)
}

/// Parameters of the path sampler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerSettings {
    pub dt: f64,
    pub horizon: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub max_step_prob: f64,
    pub zero_threshold: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            dt: 0.005,
            horizon: 25.0,
            n_traj: 10_000,
            seed: 1,
            max_step_prob: 0.1,
            zero_threshold: DEFAULT_ZERO_THRESHOLD,
        }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be >= 0, got {}", self.horizon));
        }
        if self.n_traj == 0 {
            return bad("n_traj must be at least 1".into());
        }
        if !(self.max_step_prob > 0.0 && self.max_step_prob < 1.0) {
            return bad(format!("max_step_prob must lie in (0,1), got {}", self.max_step_prob));
        }
        if self.zero_threshold.is_nan() || self.zero_threshold < 0.0 {
            return bad(format!("zero_threshold must be >= 0, got {}", self.zero_threshold));
        }
        Ok(())
    }

    /// Number of grid steps covering `[0, horizon]`; the last may be short.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// `ψ` on the sampler grid together with the spectral expansion used for
/// off-grid substeps. Independent of any particular trajectory.
#[derive(Debug, Clone)]
pub struct WaveTable {
    evolution: Evolution,
    grid: PsiGrid,
}

impl WaveTable {
    /// Evolves `|(1,2),+1⟩` under `h` and tabulates it on `settings`' grid.
    pub fn new(h: &ReducedHamiltonian, settings: &SamplerSettings) -> Result<Self> {
        settings.validate()?;
        let spectral = SpectralDecomposition::new(h)?;
        let evolution = Evolution::new(&spectral, &initial_state(h.indexing()));
        let grid = PsiGrid::new(&evolution, settings.dt, settings.steps());
        Ok(Self { evolution, grid })
    }

    pub fn evolution(&self) -> &Evolution {
        &self.evolution
    }

    pub fn grid(&self) -> &PsiGrid {
        &self.grid
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub site: PairState,
}

/// A right-continuous piecewise-constant path on `[0, horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub index: u64,
    pub start: PairState,
    pub jumps: Vec<Jump>,
    pub horizon: f64,
}

impl Trajectory {
    /// State at time `t` (the latest jump at or before `t`).
    pub fn state_at(&self, t: f64) -> PairState {
        let k = self.jumps.partition_point(|j| j.time <= t);
        if k == 0 {
            self.start
        } else {
            self.jumps[k - 1].site
        }
    }

    /// `(enter, leave, site)` for every constant piece, clipped to the horizon.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, PairState)> + '_ {
        let starts = std::iter::once((0.0, self.start))
            .chain(self.jumps.iter().map(|j| (j.time, j.site)));
        let ends = self
            .jumps
            .iter()
            .map(|j| j.time)
            .chain(std::iter::once(self.horizon));
        starts
            .zip(ends)
            .map(|((enter, site), leave)| (enter, leave, site))
    }

    /// Adjacency of consecutive states, strictly increasing jump times inside
    /// `(0, horizon)` and every state on the chain.
    pub fn is_well_formed(&self, config: &ChainConfig) -> bool {
        let mut prev_site = self.start;
        let mut prev_time = 0.0;
        if !config.contains(prev_site) {
            return false;
        }
        for j in &self.jumps {
            if !(j.time > prev_time && j.time < self.horizon) {
                return false;
            }
            if !crate::lattice::neighbours(prev_site, config).contains(&j.site) {
                return false;
            }
            prev_site = j.site;
            prev_time = j.time;
        }
        true
    }
}

/// Per-trajectory sampler bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SampleDiagnostics {
    /// Half-steps taken because a step exceeded the probability cap.
    pub subdivisions: u64,
    /// Steps spent on a site whose amplitude was below the zero threshold.
    pub node_holds: u64,
}

impl std::ops::AddAssign for SampleDiagnostics {
    fn add_assign(&mut self, rhs: Self) {
        self.subdivisions += rhs.subdivisions;
        self.node_holds += rhs.node_holds;
    }
}

struct PathSampler<'a> {
    h: &'a ReducedHamiltonian,
    table: &'a WaveTable,
    settings: &'a SamplerSettings,
    index: u64,
    rng: ChaCha8Rng,
    jumps: Vec<Jump>,
    diag: SampleDiagnostics,
}

impl PathSampler<'_> {
    /// Advances the walker at `site` over `[t, t + len)`. `grid_row` is the
    /// tabulated time index when `t` is on the grid.
    fn advance(
        &mut self,
        site: usize,
        t: f64,
        len: f64,
        grid_row: Option<usize>,
        depth: u32,
    ) -> Result<usize> {
        let row = self.h.row(site);
        let mut rates = [0.0f64; 4];
        let psi_x;
        match grid_row {
            Some(k) => {
                let amps = self.table.grid.row(k);
                psi_x = amps[site];
                for (r, &(y, v)) in rates.iter_mut().zip(row) {
                    *r = jump_rate(v, psi_x, amps[y], self.settings.zero_threshold);
                }
            }
            None => {
                let mut wanted = [site; 5];
                for (w, &(y, _)) in wanted[1..].iter_mut().zip(row) {
                    *w = y;
                }
                let amps = self.table.evolution.amplitudes_at(&wanted[..=row.len()], t);
                psi_x = amps[0];
                for ((r, &(_, v)), &psi_y) in rates.iter_mut().zip(row).zip(&amps[1..]) {
                    *r = jump_rate(v, psi_x, psi_y, self.settings.zero_threshold);
                }
            }
        }
        if psi_x.norm() <= self.settings.zero_threshold {
            self.diag.node_holds += 1;
            return Ok(site);
        }

        let total: f64 = rates.iter().sum::<f64>() * len;
        if total > self.settings.max_step_prob {
            if depth >= MAX_SUBDIVISION_DEPTH {
                return Err(Error::SubdivisionLimit {
                    index: self.index,
                    time: t,
                    site: self.h.indexing().site(site),
                    max_depth: MAX_SUBDIVISION_DEPTH,
                });
            }
            self.diag.subdivisions += 1;
            let half = 0.5 * len;
            let site = self.advance(site, t, half, grid_row, depth + 1)?;
            return self.advance(site, t + half, half, None, depth + 1);
        }
        if total <= 0.0 {
            return Ok(site);
        }

        let u: f64 = self.rng.gen();
        if u >= total {
            return Ok(site);
        }
        let mut acc = 0.0;
        let mut target = row[row.len() - 1].0;
        for (&r, &(y, _)) in rates.iter().zip(row) {
            acc += r * len;
            if u < acc {
                target = y;
                break;
            }
        }
        let w: f64 = self.rng.sample(Open01);
        let mut time = t + len * w;
        if time >= t + len {
            time = t + 0.5 * len;
        }
        if let Some(last) = self.jumps.last() {
            if time <= last.time {
                time = last.time.next_up();
            }
        }
        self.jumps.push(Jump {
            time,
            site: self.h.indexing().site(target),
        });
        Ok(target)
    }
}

/// RNG for trajectory `index`: the seed picks the key, the index picks the
/// ChaCha stream, so trajectories are independent of scheduling.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn sample_path(
    h: &ReducedHamiltonian,
    table: &WaveTable,
    settings: &SamplerSettings,
    index: u64,
) -> Result<(Trajectory, SampleDiagnostics)> {
    let origin = PairState::origin();
    let mut sampler = PathSampler {
        h,
        table,
        settings,
        index,
        rng: trajectory_rng(settings.seed, index),
        jumps: Vec::new(),
        diag: SampleDiagnostics::default(),
    };
    let mut site = h.indexing().index_of(origin).expect("origin on lattice");
    let steps = settings.steps();
    for k in 0..steps {
        let t = table.grid.time(k);
        let len = settings.dt.min(settings.horizon - t);
        if len <= 0.0 {
            break;
        }
        site = sampler.advance(site, t, len, Some(k), 0)?;
    }
    Ok((
        Trajectory {
            index,
            start: origin,
            jumps: sampler.jumps,
            horizon: settings.horizon,
        },
        sampler.diag,
    ))
}

/// Samples trajectory `index` from `(1,2)`.
///
/// Fails with [`Error::SubdivisionLimit`] if a step near a node of `ψ` would
/// need more than [`MAX_SUBDIVISION_DEPTH`] halvings.
pub fn sample_trajectory(
    h: &ReducedHamiltonian,
    table: &WaveTable,
    settings: &SamplerSettings,
    index: u64,
) -> Result<Trajectory> {
    settings.validate()?;
    sample_path(h, table, settings, index).map(|(tr, _)| tr)
}

/// Result of sampling many trajectories; failed indices are reported in
/// `failures` and omitted from `trajectories`.
#[derive(Debug)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub failures: Vec<Error>,
    pub diagnostics: SampleDiagnostics,
}

/// Samples `settings.n_traj` trajectories in parallel. The output is ordered
/// by trajectory index and does not depend on the worker count.
pub fn ensemble(
    h: &ReducedHamiltonian,
    table: &WaveTable,
    settings: &SamplerSettings,
) -> Result<Ensemble> {
    settings.validate()?;
    let results: Vec<_> = (0..settings.n_traj as u64)
        .into_par_iter()
        .map(|i| sample_path(h, table, settings, i))
        .collect();
    let mut out = Ensemble {
        trajectories: Vec::with_capacity(results.len()),
        failures: Vec::new(),
        diagnostics: SampleDiagnostics::default(),
    };
    for r in results {
        match r {
            Ok((tr, d)) => {
                out.diagnostics += d;
                out.trajectories.push(tr);
            }
            Err(e) => out.failures.push(e),
        }
    }
    Ok(out)
}

/// On-disk trajectory encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryFormat {
    /// `index,t,x1,x2,t,x1,x2,…` per line; the first triple is the start.
    Csv,
    /// `{"index":i,"path":[[t,x1,x2],…]}` per line.
    Ndjson,
}

impl FromStr for TrajectoryFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" | "ndjson" => Ok(Self::Ndjson),
            other => Err(Error::InvalidArgument(format!(
                "unknown format `{other}` (expected csv or json)"
            ))),
        }
    }
}

impl std::fmt::Display for TrajectoryFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Ndjson => "json",
        })
    }
}

fn points(tr: &Trajectory) -> impl Iterator<Item = (f64, PairState)> + '_ {
    std::iter::once((0.0, tr.start)).chain(tr.jumps.iter().map(|j| (j.time, j.site)))
}

pub fn write_trajectories<'a, W, I>(mut w: W, trajectories: I, format: TrajectoryFormat) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Trajectory>,
{
    for tr in trajectories {
        match format {
            TrajectoryFormat::Csv => {
                write!(w, "{}", tr.index)?;
                for (t, p) in points(tr) {
                    write!(w, ",{},{},{}", f64_17(t), p.x1(), p.x2())?;
                }
                writeln!(w)?;
            }
            TrajectoryFormat::Ndjson => {
                write!(w, "{{\"index\":{},\"path\":[", tr.index)?;
                for (k, (t, p)) in points(tr).enumerate() {
                    let sep = if k == 0 { "" } else { "," };
                    write!(w, "{sep}[{},{},{}]", f64_17(t), p.x1(), p.x2())?;
                }
                writeln!(w, "]}}")?;
            }
        }
    }
    Ok(())
}

fn parse_record(fields: &[&str], line: usize, horizon: f64) -> Result<Trajectory> {
    let err = |reason: String| Error::Parse { line, reason };
    let (head, rest) = fields.split_first().ok_or_else(|| err("empty record".into()))?;
    let index = head.trim().parse::<u64>().map_err(|e| err(format!("index: {e}")))?;
    if rest.is_empty() || rest.len() % 3 != 0 {
        return Err(err(format!("expected (t,x1,x2) triples, got {} fields", rest.len())));
    }
    let mut pts = rest.chunks(3).map(|c| -> Result<(f64, PairState)> {
        let t = c[0].trim().parse::<f64>().map_err(|e| err(format!("time: {e}")))?;
        let x1 = c[1].trim().parse::<usize>().map_err(|e| err(format!("x1: {e}")))?;
        let x2 = c[2].trim().parse::<usize>().map_err(|e| err(format!("x2: {e}")))?;
        let p = PairState::new(x1, x2).map_err(|e| err(e.to_string()))?;
        Ok((t, p))
    });
    let (_, start) = pts.next().expect("nonempty")?;
    let jumps = pts
        .map(|r| r.map(|(time, site)| Jump { time, site }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        index,
        start,
        jumps,
        horizon,
    })
}

/// Reads trajectories written by [`write_trajectories`]. The horizon is not
/// part of the file and must be supplied.
pub fn read_trajectories<R: BufRead>(
    r: R,
    format: TrajectoryFormat,
    horizon: f64,
) -> Result<Vec<Trajectory>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let flattened;
        let fields: Vec<&str> = match format {
            TrajectoryFormat::Csv => line.split(',').collect(),
            TrajectoryFormat::Ndjson => {
                let body = line
                    .trim()
                    .strip_prefix("{\"index\":")
                    .and_then(|b| b.strip_suffix("]}"))
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        reason: "not a trajectory object".into(),
                    })?;
                flattened = body.replacen(",\"path\":[", ",", 1).replace(['[', ']'], "");
                flattened.split(',').collect()
            }
        };
        out.push(parse_record(&fields, line_no, horizon)?);
    }
    Ok(out)
}
