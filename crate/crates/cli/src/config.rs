//! Run configuration: one TOML file with `[model]`, `[auxiliary]`, `[regime]`,
//! `[simulation]` and `[output]` sections.

use std::fmt;
use std::path::{Path, PathBuf};

use pdiv::mc_oracle::SimConfig;
use pdiv::regime_solver::SwitchComponent;
use pdiv::{FixedPoint, Jumps, Model, Payoff, Regime, Switch, Valuation};
use serde::Deserialize;

/// Why a command failed; each kind maps to one process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad config, flags or arguments (exit code 2).
    Validation(String),
    /// A solver did not converge (exit code 3).
    Convergence(String),
    /// Reading or writing files failed (exit code 1).
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Convergence(_) => 3,
            Failure::Io(_) => 1,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Failure::Validation(msg.into())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "validation error: {m}"),
            Failure::Convergence(m) => write!(f, "convergence failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<pdiv::Error> for Failure {
    fn from(e: pdiv::Error) -> Self {
        match e {
            pdiv::Error::Convergence(m) => Failure::Convergence(m),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, Failure>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub drift_c: f64,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub jumps: JumpsSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpsSection {
    #[default]
    None,
    Hyperexponential {
        arrival_rate: f64,
        weights: Vec<f64>,
        rates: Vec<f64>,
    },
    Tabulated {
        z: Vec<f64>,
        density: Vec<f64>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSection {
    /// `[x, omega(x)]` pairs starting at `x = 0`.
    pub knots: Vec<[f64; 2]>,
    #[serde(default)]
    pub terminal_slope: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxiliarySection {
    pub delta: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub phi: f64,
    pub b: Option<f64>,
    pub omega: Option<OmegaSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComponentSection {
    Point { at: f64, weight: f64 },
    Exponential { rate: f64, weight: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchSection {
    pub from: usize,
    pub to: usize,
    pub components: Vec<ComponentSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub n_knots: Option<usize>,
    pub growth: Option<f64>,
    pub grid_factor: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSection {
    pub gamma: f64,
    pub phi: f64,
    pub discounts: Vec<f64>,
    pub generator: Vec<Vec<f64>>,
    pub states: Vec<ModelSection>,
    #[serde(default)]
    pub switch_jumps: Vec<SwitchSection>,
    /// Barriers used by `simulate` when no barrier file is given.
    pub barriers: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n_paths: Option<usize>,
    pub discount_floor: Option<f64>,
    pub brownian_step_dt: Option<f64>,
    pub base_seed: Option<u64>,
    pub stream_stride: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: Option<ModelSection>,
    pub auxiliary: Option<AuxiliarySection>,
    pub regime: Option<RegimeSection>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// Parsed config together with its source text, used to point at lines.
pub struct RunConfig {
    pub raw: RawConfig,
    source: String,
    path: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&source, path)
    }

    pub fn parse(source: &str, path: &Path) -> CliResult<Self> {
        let raw: RawConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map(|s| line_of_offset(source, s.start));
            let msg = e.message().trim().to_string();
            Failure::validation(match line {
                Some(l) => format!("{}:{l}: {msg}", path.display()),
                None => format!("{}: {msg}", path.display()),
            })
        })?;
        let cfg = Self { raw, source: source.to_string(), path: path.to_path_buf() };
        if cfg.raw.auxiliary.is_some() && cfg.raw.regime.is_some() {
            return Err(cfg.invalid("regime", "a config holds exactly one of [auxiliary] and [regime]"));
        }
        Ok(cfg)
    }

    /// Validation failure for a dotted field path, with the line where it is set when found.
    pub fn invalid(&self, field: &str, msg: impl fmt::Display) -> Failure {
        match locate(&self.source, field) {
            Some(l) => Failure::validation(format!("{}:{l}: {field}: {msg}", self.path.display())),
            None => Failure::validation(format!("{}: {field}: {msg}", self.path.display())),
        }
    }

    /// Attaches a line number to a core validation error.
    pub fn lift(&self, e: pdiv::Error) -> Failure {
        self.lift_in(e, "")
    }

    /// Like [`Self::lift`], rewriting the field path under `prefix`.
    fn lift_in(&self, e: pdiv::Error, prefix: &str) -> Failure {
        match e {
            pdiv::Error::Config { field, msg } => {
                let field = if prefix.is_empty() { field } else { format!("{prefix}.{}", field.trim_start_matches("model.")) };
                self.invalid(&field, msg)
            }
            other => other.into(),
        }
    }

    pub fn model(&self) -> CliResult<Model> {
        let m = self.raw.model.as_ref().ok_or_else(|| self.invalid("model", "the [model] section is required"))?;
        build_model(m).map_err(|e| self.lift(e))
    }

    pub fn auxiliary(&self) -> CliResult<&AuxiliarySection> {
        self.raw.auxiliary.as_ref().ok_or_else(|| self.invalid("auxiliary", "the [auxiliary] section is required"))
    }

    pub fn omega(&self) -> CliResult<Payoff> {
        let aux = self.auxiliary()?;
        let om = aux.omega.as_ref().ok_or_else(|| self.invalid("auxiliary.omega", "payoff knots are required"))?;
        Payoff::new(om.knots.iter().map(|k| (k[0], k[1])).collect(), om.terminal_slope).map_err(|e| self.lift(e))
    }

    /// Valuation context at barrier `b` with the configured payoff.
    pub fn valuation(&self, b: f64) -> CliResult<Valuation> {
        let model = self.model()?;
        let aux = self.auxiliary()?;
        let omega = self.omega()?;
        Valuation::new(&model, aux.delta, aux.lambda, aux.gamma, aux.phi, b, omega).map_err(|e| self.lift(e))
    }

    pub fn regime(&self) -> CliResult<Regime> {
        let r = self.raw.regime.as_ref().ok_or_else(|| self.invalid("regime", "the [regime] section is required"))?;
        let models = r
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| build_model(s).map_err(|e| self.lift_in(e, &format!("regime.states[{i}]"))))
            .collect::<CliResult<Vec<_>>>()?;
        let m = models.len();
        let mut jumps = vec![vec![Switch::none(); m]; m];
        for (k, s) in r.switch_jumps.iter().enumerate() {
            let field = format!("regime.switch_jumps[{k}]");
            if s.from >= m || s.to >= m || s.from == s.to {
                return Err(self.invalid(&field, format!("from = {} and to = {} must be distinct states below {m}", s.from, s.to)));
            }
            let (weights, comps): (Vec<f64>, Vec<SwitchComponent<f64>>) = s
                .components
                .iter()
                .map(|c| match *c {
                    ComponentSection::Point { at, weight } => (weight, SwitchComponent::PointMass { at }),
                    ComponentSection::Exponential { rate, weight } => (weight, SwitchComponent::Exponential { rate }),
                })
                .unzip();
            jumps[s.from][s.to] = Switch::new(weights, comps).map_err(|e| self.lift_in(e, &field))?;
        }
        Regime::new(models, r.generator.clone(), r.discounts.clone(), r.gamma, r.phi, jumps).map_err(|e| self.lift(e))
    }

    pub fn fixed_point(&self) -> CliResult<FixedPoint> {
        let mut cfg = FixedPoint::default();
        if let Some(r) = &self.raw.regime {
            let s = &r.solver;
            cfg.tol = s.tol.unwrap_or(cfg.tol);
            cfg.max_iter = s.max_iter.unwrap_or(cfg.max_iter);
            cfg.n_knots = s.n_knots.unwrap_or(cfg.n_knots);
            cfg.growth = s.growth.unwrap_or(cfg.growth);
            cfg.grid_factor = s.grid_factor.unwrap_or(cfg.grid_factor);
        }
        if !(cfg.tol > 0.0) {
            return Err(self.invalid("regime.solver.tol", "must be > 0"));
        }
        if cfg.n_knots < 4 {
            return Err(self.invalid("regime.solver.n_knots", "must be at least 4"));
        }
        if !(cfg.growth >= 1.0) {
            return Err(self.invalid("regime.solver.growth", "must be >= 1"));
        }
        if !(cfg.grid_factor > 1.0) {
            return Err(self.invalid("regime.solver.grid_factor", "must be > 1"));
        }
        Ok(cfg)
    }

    /// Simulation settings with the optional flag overrides applied.
    pub fn simulation(&self, paths: Option<usize>, seed: Option<u64>) -> CliResult<SimConfig> {
        let s = &self.raw.simulation;
        let d = SimConfig::default();
        let cfg = SimConfig {
            n_paths: paths.or(s.n_paths).unwrap_or(d.n_paths),
            discount_floor: s.discount_floor.unwrap_or(d.discount_floor),
            brownian_step_dt: s.brownian_step_dt.unwrap_or(d.brownian_step_dt),
            base_seed: seed.or(s.base_seed).unwrap_or(d.base_seed),
            stream_stride: s.stream_stride.unwrap_or(d.stream_stride),
        };
        cfg.validate().map_err(|e| self.lift(e))?;
        Ok(cfg)
    }
}

fn build_model(m: &ModelSection) -> pdiv::Result<Model> {
    let jumps = match &m.jumps {
        JumpsSection::None => Jumps::None,
        JumpsSection::Hyperexponential { arrival_rate, weights, rates } => {
            Jumps::Hyperexponential { arrival_rate: *arrival_rate, weights: weights.clone(), rates: rates.clone() }
        }
        JumpsSection::Tabulated { z, density } => Jumps::Tabulated { z: z.clone(), density: density.clone() },
    };
    Model::new(m.drift_c, m.sigma, jumps)
}

fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// 1-based line where a dotted field is set, or of its table header.
///
/// Array indices such as `states[1]` select the matching `[[...]]` block.
fn locate(src: &str, field: &str) -> Option<usize> {
    let parts: Vec<&str> = field.split('.').collect();
    let mut table = String::new();
    let mut index = 0usize;
    let mut key_start = parts.len();
    for (i, p) in parts.iter().enumerate() {
        let (name, idx) = match p.split_once('[') {
            Some((n, rest)) => (n, rest.trim_end_matches(']').parse().ok()),
            None => (*p, None),
        };
        if !table.is_empty() {
            table.push('.');
        }
        table.push_str(name);
        if let Some(k) = idx {
            index = k;
            key_start = i + 1;
        } else if i == 0 {
            key_start = 1;
        }
    }
    let header_name: String = parts[..key_start].iter().map(|p| p.split('[').next().unwrap_or(p)).collect::<Vec<_>>().join(".");
    let key = parts.get(key_start).map(|k| k.split('[').next().unwrap_or(k));
    let lines: Vec<&str> = src.lines().collect();
    let mut seen = 0usize;
    let mut header = None;
    for (n, line) in lines.iter().enumerate() {
        let t = line.trim();
        if t == format!("[{header_name}]") || t == format!("[[{header_name}]]") {
            if seen == index {
                header = Some(n);
                break;
            }
            seen += 1;
        }
    }
    let start = header?;
    let Some(key) = key else { return Some(start + 1) };
    for (n, line) in lines.iter().enumerate().skip(start + 1) {
        let t = line.trim();
        if t.starts_with('[') {
            break;
        }
        if let Some((k, _)) = t.split_once('=') {
            if k.trim() == key {
                return Some(n + 1);
            }
        }
    }
    Some(start + 1)
}
