//! First-passage and sojourn statistics at a target site, conditioned on the
//! target being visited.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmt::f64_17;
use crate::lattice::PairState;
use crate::process::{trajectory_rng, Trajectory};

/// Earliest jump into `target` inside `(0, horizon)`.
///
/// Time zero is excluded, so a path starting on `target` only counts a
/// later return.
pub fn first_passage_within(tr: &Trajectory, target: PairState, horizon: f64) -> Option<f64> {
    tr.jumps
        .iter()
        .take_while(|j| j.time < horizon)
        .find(|j| j.site == target && j.time > 0.0)
        .map(|j| j.time)
}

/// Total time spent on `target` inside `(0, horizon)`.
pub fn sojourn_within(tr: &Trajectory, target: PairState, horizon: f64) -> f64 {
    tr.segments()
        .filter(|&(_, _, site)| site == target)
        .map(|(enter, leave, _)| (leave.min(horizon) - enter.max(0.0)).max(0.0))
        .sum()
}

/// [`first_passage_within`] over the trajectory's own horizon.
pub fn first_passage_time(tr: &Trajectory, target: PairState) -> Option<f64> {
    first_passage_within(tr, target, tr.horizon)
}

/// [`sojourn_within`] over the trajectory's own horizon.
pub fn sojourn_time(tr: &Trajectory, target: PairState) -> f64 {
    sojourn_within(tr, target, tr.horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PassageRecord {
    pub index: u64,
    pub hit: bool,
    pub first_passage: Option<f64>,
    pub sojourn: Option<f64>,
}

impl PassageRecord {
    pub fn new(tr: &Trajectory, target: PairState, horizon: f64) -> Self {
        let horizon = horizon.min(tr.horizon);
        match first_passage_within(tr, target, horizon) {
            Some(t) => Self {
                index: tr.index,
                hit: true,
                first_passage: Some(t),
                sojourn: Some(sojourn_within(tr, target, horizon)),
            },
            None => Self {
                index: tr.index,
                hit: false,
                first_passage: None,
                sojourn: None,
            },
        }
    }
}

/// Linear-interpolation quantile of sorted data (type 7).
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Interquartile range `Q3 - Q1`.
pub fn iqr(xs: &[f64]) -> f64 {
    let s = sorted_copy(xs);
    sorted_quantile(&s, 0.75) - sorted_quantile(&s, 0.25)
}

/// Right-continuous step function `F(x) = #{v ≤ x} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("empirical CDF needs at least one sample".into()));
        }
        if samples.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("empirical CDF sample contains NaN".into()));
        }
        Ok(Self {
            sorted: sorted_copy(samples),
        })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    pub fn quantile(&self, p: f64) -> f64 {
        sorted_quantile(&self.sorted, p)
    }

    pub fn mean(&self) -> f64 {
        mean(&self.sorted)
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    /// `(value, F(value))` at each distinct sample value.
    pub fn steps(&self) -> Vec<(f64, f64)> {
        let n = self.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (k, &v) in self.sorted.iter().enumerate() {
            let frac = (k + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = frac,
                _ => out.push((v, frac)),
            }
        }
        out
    }

    pub fn summary(&self) -> SampleSummary {
        SampleSummary {
            n: self.len(),
            mean: self.mean(),
            median: self.median(),
            q1: self.quantile(0.25),
            q3: self.quantile(0.75),
            iqr: self.iqr(),
        }
    }

    /// Writes `value,cumulative_fraction` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "value,cumulative_fraction")?;
        for (v, f) in self.steps() {
            writeln!(w, "{},{}", f64_17(v), f64_17(f))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleSummary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

/// First-passage and sojourn distributions on the hitting subsample.
#[derive(Debug, Clone)]
pub struct ConditionalCdfs {
    pub target: PairState,
    pub horizon: f64,
    pub n_total: usize,
    pub n_hit: usize,
    pub hit_fraction: f64,
    pub first_passage: EmpiricalCdf,
    pub sojourn: EmpiricalCdf,
}

/// Builds the conditional CDFs from the trajectories that visit `target`
/// inside `(0, horizon)`. Fails with [`Error::NoHits`] if none do.
pub fn conditional_cdfs(
    trajectories: &[Trajectory],
    target: PairState,
    horizon: f64,
) -> Result<ConditionalCdfs> {
    if trajectories.is_empty() {
        return Err(Error::InvalidArgument("ensemble is empty".into()));
    }
    let records: Vec<_> = trajectories
        .iter()
        .map(|tr| PassageRecord::new(tr, target, horizon))
        .filter(|r| r.hit)
        .collect();
    if records.is_empty() {
        return Err(Error::NoHits { target, horizon });
    }
    let fpt: Vec<f64> = records.iter().filter_map(|r| r.first_passage).collect();
    let soj: Vec<f64> = records.iter().filter_map(|r| r.sojourn).collect();
    Ok(ConditionalCdfs {
        target,
        horizon,
        n_total: trajectories.len(),
        n_hit: records.len(),
        hit_fraction: records.len() as f64 / trajectories.len() as f64,
        first_passage: EmpiricalCdf::new(&fpt)?,
        sojourn: EmpiricalCdf::new(&soj)?,
    })
}

/// Percentile bootstrap interval for `stat(a) − stat(b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub resamples: usize,
}

impl BootstrapInterval {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }
}

fn resample(xs: &[f64], rng: &mut impl Rng, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend((0..xs.len()).map(|_| xs[rng.gen_range(0..xs.len())]));
}

/// Two-sample percentile bootstrap of a difference of statistics. Resample
/// `k` draws from its own ChaCha stream of `seed`, so the interval does not
/// depend on the worker count.
pub fn bootstrap_difference<F>(
    a: &[f64],
    b: &[f64],
    statistic: F,
    resamples: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapInterval>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if a.is_empty() || b.is_empty() || resamples == 0 {
        return Err(Error::InvalidArgument("bootstrap needs nonempty samples and resamples".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence must lie in (0,1), got {confidence}")));
    }
    let mut diffs: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = trajectory_rng(seed, k);
            let mut buf = Vec::with_capacity(a.len().max(b.len()));
            resample(a, &mut rng, &mut buf);
            let sa = statistic(&buf);
            resample(b, &mut rng, &mut buf);
            sa - statistic(&buf)
        })
        .collect();
    diffs.sort_unstable_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - confidence);
    Ok(BootstrapInterval {
        estimate: statistic(a) - statistic(b),
        lower: sorted_quantile(&diffs, tail),
        upper: sorted_quantile(&diffs, 1.0 - tail),
        confidence,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::Jump;
    use proptest::prelude::*;

    fn p(x1: usize, x2: usize) -> PairState {
        PairState::new(x1, x2).unwrap()
    }

    fn path(jumps: &[(f64, PairState)], horizon: f64) -> Trajectory {
        Trajectory {
            index: 0,
            start: p(1, 2),
            jumps: jumps.iter().map(|&(time, site)| Jump { time, site }).collect(),
            horizon,
        }
    }

    #[test]
    fn passage_examples() {
        let target = p(2, 3);
        let never = path(&[(0.5, p(1, 3))], 25.0);
        assert_eq!(first_passage_time(&never, target), None);
        assert_eq!(sojourn_time(&never, target), 0.0);

        let once = path(&[(1.0, p(1, 3)), (3.2, p(2, 3))], 25.0);
        assert_eq!(first_passage_time(&once, target), Some(3.2));

        let visits = path(
            &[(1.0, p(2, 3)), (1.5, p(1, 3)), (2.0, p(2, 3)), (2.25, p(1, 3))],
            25.0,
        );
        assert!((sojourn_time(&visits, target) - 0.75).abs() < 1e-15);

        let open = path(&[(24.9, p(2, 3))], 25.0);
        assert!((sojourn_time(&open, target) - 0.1).abs() < 1e-12);
        assert_eq!(first_passage_time(&open, target), Some(24.9));
        // Clipped to a shorter window the visit disappears.
        assert_eq!(first_passage_within(&open, target, 20.0), None);
        assert_eq!(sojourn_within(&open, target, 20.0), 0.0);
    }

    #[test]
    fn start_site_is_not_a_passage_at_zero() {
        let origin = p(1, 2);
        let stay = path(&[], 5.0);
        assert_eq!(first_passage_time(&stay, origin), None);
        let back = path(&[(1.0, p(1, 3)), (2.0, origin)], 5.0);
        assert_eq!(first_passage_time(&back, origin), Some(2.0));
        assert!((sojourn_time(&back, origin) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn records() {
        let tr = path(&[(1.0, p(1, 3)), (3.0, p(2, 3)), (4.0, p(2, 4))], 25.0);
        let r = PassageRecord::new(&tr, p(2, 3), 25.0);
        assert!(r.hit);
        assert_eq!(r.first_passage, Some(3.0));
        assert_eq!(r.sojourn, Some(1.0));
        let miss = PassageRecord::new(&tr, p(5, 6), 25.0);
        assert!(!miss.hit && miss.first_passage.is_none() && miss.sojourn.is_none());
    }

    #[test]
    fn conditional_cdf_edge_cases() {
        let target = p(2, 3);
        let misses = vec![path(&[(1.0, p(1, 3))], 10.0); 3];
        assert!(matches!(conditional_cdfs(&misses, target, 10.0), Err(Error::NoHits { .. })));
        assert!(conditional_cdfs(&[], target, 10.0).is_err());

        let mut ens = misses.clone();
        ens.push(path(&[(1.0, p(1, 3)), (2.0, target), (2.5, p(1, 3))], 10.0));
        let c = conditional_cdfs(&ens, target, 10.0).unwrap();
        assert_eq!(c.n_hit, 1);
        assert_eq!(c.hit_fraction, 0.25);
        assert_eq!(c.first_passage.eval(1.99), 0.0);
        assert_eq!(c.first_passage.eval(2.0), 1.0);
        assert_eq!(c.sojourn.steps(), vec![(0.5, 1.0)]);
    }

    #[test]
    fn cdf_basics() {
        let cdf = EmpiricalCdf::new(&[3.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(cdf.eval(0.0), 0.0);
        assert_eq!(cdf.eval(1.0), 0.25);
        assert_eq!(cdf.eval(2.0), 0.75);
        assert_eq!(cdf.eval(f64::INFINITY), 1.0);
        assert_eq!(cdf.steps(), vec![(1.0, 0.25), (2.0, 0.75), (3.0, 1.0)]);
        assert_eq!(cdf.median(), 2.0);
        assert_eq!(cdf.mean(), 2.0);
        assert_eq!(cdf.quantile(0.25), 1.75);
        assert_eq!(cdf.iqr(), 2.25 - 1.75);
        assert!(EmpiricalCdf::new(&[]).is_err());
        assert!(EmpiricalCdf::new(&[f64::NAN]).is_err());

        let mut buf = Vec::new();
        cdf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("value,cumulative_fraction"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn bootstrap_detects_shift() {
        let a: Vec<f64> = (0..500).map(|k| (k % 17) as f64 + 3.0).collect();
        let b: Vec<f64> = (0..400).map(|k| (k % 13) as f64).collect();
        let ci = bootstrap_difference(&a, &b, mean, 1000, 0.99, 7).unwrap();
        assert!(ci.lower > 0.0 && ci.lower <= ci.estimate && ci.estimate <= ci.upper);
        let same = bootstrap_difference(&a, &a, mean, 1000, 0.99, 7).unwrap();
        assert!(!same.excludes_zero());
        let again = bootstrap_difference(&a, &b, mean, 1000, 0.99, 7).unwrap();
        assert_eq!(ci, again);
        assert!(bootstrap_difference(&a, &[], mean, 10, 0.99, 7).is_err());
    }

    proptest! {
        #[test]
        fn cdf_is_a_monotone_step_function(xs in proptest::collection::vec(0.0f64..25.0, 1..60), probes in proptest::collection::vec(-1.0f64..26.0, 1..20)) {
            let cdf = EmpiricalCdf::new(&xs).unwrap();
            let mut probes = probes;
            probes.sort_unstable_by(f64::total_cmp);
            let vals: Vec<f64> = probes.iter().map(|&x| cdf.eval(x)).collect();
            prop_assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            prop_assert_eq!(cdf.eval(-1.0), 0.0);
            prop_assert_eq!(cdf.eval(f64::INFINITY), 1.0);
            for &x in &xs {
                prop_assert!(cdf.eval(x) > 0.0);
            }
        }

        #[test]
        fn sojourn_bounded_and_positive_after_passage(times in proptest::collection::vec(0.01f64..0.99, 0..30), horizon in 1.0f64..30.0) {
            // Alternate between two adjacent sites.
            let mut ts: Vec<f64> = times.iter().map(|t| t * horizon).collect();
            ts.sort_unstable_by(f64::total_cmp);
            ts.dedup();
            let target = p(1, 3);
            let jumps: Vec<_> = ts
                .iter()
                .enumerate()
                .map(|(k, &t)| (t, if k % 2 == 0 { target } else { p(1, 2) }))
                .collect();
            let tr = path(&jumps, horizon);
            let soj = sojourn_time(&tr, target);
            prop_assert!(soj >= 0.0 && soj <= horizon);
            if first_passage_time(&tr, target).is_some() {
                prop_assert!(soj > 0.0);
            }
        }
    }
}
