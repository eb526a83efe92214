//! Run configuration: per-mode defaults, a flat `key=value` file format, and
//! command-line overrides layered on top.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clockwalk::process::DEFAULT_ZERO_THRESHOLD;
use clockwalk::{ChainConfig, PairState, SamplerSettings};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Verify,
    Amplitude,
    Sample,
    Stats,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Verify => "verify",
            Mode::Amplitude => "amplitude",
            Mode::Sample => "sample",
            Mode::Stats => "stats",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "verify" => Ok(Mode::Verify),
            "amplitude" => Ok(Mode::Amplitude),
            "sample" => Ok(Mode::Sample),
            "stats" => Ok(Mode::Stats),
            other => Err(CliError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(CliError::Config(format!("unknown format `{other}` (csv or json)"))),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        })
    }
}

/// Everything a subcommand needs, already validated.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub chain: ChainConfig,
    /// End of the amplitude time grid.
    pub t_max: f64,
    /// Amplitude grid step in `amplitude` mode, sampler step otherwise.
    pub dt: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Site for passage statistics; always set in `sample` and `stats` mode.
    pub target: Option<PairState>,
    pub horizon: f64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    /// Keep only trajectories that visit the target when writing samples.
    pub hits_only: bool,
}

/// Raw, unvalidated settings; every field optional so that layers can be
/// merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub s: Option<usize>,
    pub a: Option<usize>,
    pub b: Option<usize>,
    pub free: Option<bool>,
    pub t_max: Option<f64>,
    pub dt: Option<f64>,
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    pub target: Option<PairState>,
    pub horizon: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub hits_only: Option<bool>,
}

impl Overrides {
    /// Fields set in `other` win.
    pub fn merge(self, other: Overrides) -> Overrides {
        Overrides {
            s: other.s.or(self.s),
            a: other.a.or(self.a),
            b: other.b.or(self.b),
            free: other.free.or(self.free),
            t_max: other.t_max.or(self.t_max),
            dt: other.dt.or(self.dt),
            n_traj: other.n_traj.or(self.n_traj),
            seed: other.seed.or(self.seed),
            target: other.target.or(self.target),
            horizon: other.horizon.or(self.horizon),
            out: other.out.or(self.out),
            format: other.format.or(self.format),
            hits_only: other.hits_only.or(self.hits_only),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| CliError::Config(format!("bad value `{raw}` for `{key}`: {e}")))
}

/// Parses the `key=value` config format. Blank lines and lines starting with
/// `#` are ignored. Returns the optional `mode` entry alongside the settings.
pub fn parse_kv(text: &str) -> Result<(Option<Mode>, Overrides), CliError> {
    let mut seen = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected key=value", k + 1)))?;
        let key = key.trim().replace('-', "_");
        if seen.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key `{key}`", k + 1)));
        }
    }
    let mut mode = None;
    let mut o = Overrides::default();
    for (key, v) in &seen {
        let v = v.as_str();
        match key.as_str() {
            "mode" => mode = Some(v.parse()?),
            "s" => o.s = Some(parse_value(key, v)?),
            "a" => o.a = Some(parse_value(key, v)?),
            "b" => o.b = Some(parse_value(key, v)?),
            "free" => o.free = Some(parse_value(key, v)?),
            "t_max" => o.t_max = Some(parse_value(key, v)?),
            "dt" => o.dt = Some(parse_value(key, v)?),
            "n_traj" => o.n_traj = Some(parse_value(key, v)?),
            "seed" => o.seed = Some(parse_value(key, v)?),
            "target" => o.target = Some(parse_value(key, v)?),
            "horizon" => o.horizon = Some(parse_value(key, v)?),
            "out" => o.out = Some(PathBuf::from(v)),
            "format" => o.format = Some(v.parse()?),
            "hits_only" => o.hits_only = Some(parse_value(key, v)?),
            other => return Err(CliError::Config(format!("unknown key `{other}`"))),
        }
    }
    Ok((mode, o))
}

impl RunConfig {
    /// Defaults for `mode`, then `settings` on top, then validation.
    ///
    /// `verify` and `amplitude` default to the seven-site chain with
    /// `a = 4, b = 5`; `sample` and `stats` to `s = 25, a = 11, b = 13`. The
    /// horizon defaults to `s` and the target to `(a+1, b)`.
    pub fn resolve(mode: Mode, settings: Overrides) -> Result<Self, CliError> {
        let (s, a, b, dt) = match mode {
            Mode::Verify | Mode::Amplitude => (7, 4, 5, clockwalk::propagator::DEFAULT_SERIES_DT),
            Mode::Sample | Mode::Stats => (25, 11, 13, SamplerSettings::default().dt),
        };
        let s = settings.s.unwrap_or(s);
        let a = settings.a.unwrap_or(a);
        let b = settings.b.unwrap_or(b);
        let chain = ChainConfig::new(s, a, b, settings.free.unwrap_or(false))?;
        let target = match (settings.target, mode) {
            (Some(t), _) => Some(t),
            (None, Mode::Sample | Mode::Stats) => Some(PairState::new(a + 1, b).map_err(|_| {
                CliError::Config(format!(
                    "default target (a+1,b) = ({},{b}) is not a site; pass --target",
                    a + 1
                ))
            })?),
            (None, _) => None,
        };
        if let Some(t) = target {
            chain.check_site(t)?;
        }
        let cfg = RunConfig {
            mode,
            chain,
            t_max: settings.t_max.unwrap_or(30.0),
            dt: settings.dt.unwrap_or(dt),
            n_traj: settings.n_traj.unwrap_or(SamplerSettings::default().n_traj),
            seed: settings.seed.unwrap_or(SamplerSettings::default().seed),
            target,
            horizon: settings.horizon.unwrap_or(s as f64),
            out: settings.out,
            format: settings.format.unwrap_or(OutputFormat::Csv),
            hits_only: settings.hits_only.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(CliError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(CliError::Config(format!("t-max must be >= 0, got {}", self.t_max)));
        }
        if matches!(self.mode, Mode::Sample | Mode::Stats) {
            self.sampler().validate()?;
        }
        if self.mode == Mode::Verify && self.chain.s() > clockwalk::hamiltonian::MAX_DENSE_CHAIN {
            return Err(CliError::Config(format!(
                "verify needs s <= {}, got {}",
                clockwalk::hamiltonian::MAX_DENSE_CHAIN,
                self.chain.s()
            )));
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerSettings {
        SamplerSettings {
            dt: self.dt,
            horizon: self.horizon,
            n_traj: self.n_traj,
            seed: self.seed,
            max_step_prob: 0.1,
            zero_threshold: DEFAULT_ZERO_THRESHOLD,
        }
    }

    /// Every setting as `key=value` lines; [`parse_kv`] reads it back.
    pub fn emit_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        put("mode", self.mode.to_string());
        put("s", self.chain.s().to_string());
        put("a", self.chain.a().to_string());
        put("b", self.chain.b().to_string());
        put("free", self.chain.is_free().to_string());
        put("t_max", self.t_max.to_string());
        put("dt", self.dt.to_string());
        put("n_traj", self.n_traj.to_string());
        put("seed", self.seed.to_string());
        if let Some(t) = self.target {
            put("target", format!("{},{}", t.x1(), t.x2()));
        }
        put("horizon", self.horizon.to_string());
        if let Some(p) = &self.out {
            put("out", p.display().to_string());
        }
        put("format", self.format.to_string());
        put("hits_only", self.hits_only.to_string());
        out
    }

    /// Reads a config produced by [`RunConfig::emit_kv`] (or written by hand).
    pub fn from_kv(text: &str, default_mode: Mode) -> Result<Self, CliError> {
        let (mode, settings) = parse_kv(text)?;
        RunConfig::resolve(mode.unwrap_or(default_mode), settings)
    }
}
