//! Job configuration: one TOML file per job, validated before any work.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ruelle_core::potential::Potential;
use ruelle_core::space::{build_apriori, AprioriMeasure, MeasureSpec, SpaceKind, StateSpace};
use ruelle_core::transfer::SolverOptions;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Gibbs,
    Entropy,
    PressurePeriodic,
    Zerotemp,
    Involution,
    VerifyAll,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Gibbs => "gibbs",
            Command::Entropy => "entropy",
            Command::PressurePeriodic => "pressure-periodic",
            Command::Zerotemp => "zerotemp",
            Command::Involution => "involution",
            Command::VerifyAll => "verify-all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpaceConfig {
    Finite { d: usize },
    Circle { n: usize },
    Interval { n: usize },
    Countable { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MeasureConfig {
    /// Uniform on a finite alphabet; the quadrature weights on the circle and
    /// interval.
    Natural,
    Weights {
        weights: Vec<f64>,
        #[serde(default)]
        auto_renormalize: bool,
    },
    Geometric {
        q: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    Zero,
    Constant {
        value: f64,
    },
    Table {
        /// Flat values in lexicographic tuple order.
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        range: Option<usize>,
        /// CSV with header `i1,…,ik,value`, relative to the config file.
        #[serde(default)]
        path: Option<PathBuf>,
    },
    Xy {
        #[serde(default)]
        alpha: f64,
        #[serde(default)]
        gamma: f64,
    },
    ExpInterval {
        c: f64,
    },
    NegDistance {
        range: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Contraction schedule; defaults to `1 − 2^{−m}`, `m = 1..12`.
    pub schedule: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolverOptions::default();
        SolverConfig {
            tol: d.tol,
            max_iter: d.max_iter,
            schedule: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroTempConfig {
    pub betas: Option<Vec<f64>>,
    pub escape_radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodicConfig {
    pub max_n: usize,
    pub exhaustive_up_to: usize,
    pub recurrence_anchor: usize,
    pub recurrence_max_n: usize,
}

impl Default for PeriodicConfig {
    fn default() -> Self {
        PeriodicConfig {
            max_n: 64,
            exhaustive_up_to: 10,
            recurrence_anchor: 0,
            recurrence_max_n: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub level: usize,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig { level: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvolutionConfig {
    pub reference: Option<Vec<usize>>,
    pub derivative_step: f64,
    pub samples: usize,
}

impl Default for InvolutionConfig {
    fn default() -> Self {
        InvolutionConfig {
            reference: None,
            derivative_step: ruelle_core::involution::DERIVATIVE_STEP,
            samples: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub fail_fast: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { fail_fast: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub command: Command,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub space: Option<SpaceConfig>,
    #[serde(default)]
    pub measure: Option<MeasureConfig>,
    #[serde(default)]
    pub potential: Option<PotentialConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub zerotemp: ZeroTempConfig,
    #[serde(default)]
    pub periodic: PeriodicConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default)]
    pub involution: InvolutionConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    /// Directory that relative paths are resolved against; not part of the
    /// file format.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Everything a single-system command needs, built from a validated config.
#[derive(Debug, Clone)]
pub struct System {
    pub nu: AprioriMeasure,
    pub potential: Potential,
    pub label: String,
}

impl JobConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: JobConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.solver.tol,
            max_iter: self.solver.max_iter,
        }
    }

    /// Canonical JSON of the parsed config, used for hashing.
    pub fn canonical(&self) -> String {
        serde_json::to_string(&serde_json::to_value(self).expect("config serializes")).expect("json")
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) {
            return bad(format!("solver.tol must lie in (0, 1), got {}", self.solver.tol));
        }
        if self.solver.max_iter == 0 {
            return bad("solver.max_iter must be positive".into());
        }
        if let Some(b) = &self.zerotemp.betas {
            if b.is_empty() || b.iter().any(|x| !(*x > 0.0)) || b.windows(2).any(|w| w[0] >= w[1]) {
                return bad("zerotemp.betas must be positive and strictly increasing".into());
            }
        }
        if self.entropy.level == 0 {
            return bad("entropy.level must be positive".into());
        }
        if self.periodic.max_n == 0 || self.periodic.recurrence_max_n == 0 {
            return bad("periodic lengths must be positive".into());
        }
        if !(self.involution.derivative_step > 0.0) {
            return bad("involution.derivative_step must be positive".into());
        }
        if self.command == Command::VerifyAll {
            return Ok(());
        }
        if self.space.is_none() {
            return bad(format!("command {} needs a [space] section", self.command.name()));
        }
        if self.potential.is_none() {
            return bad(format!("command {} needs a [potential] section", self.command.name()));
        }
        Ok(())
    }

    /// Build the a-priori measure and potential; schema errors map to exit 2.
    pub fn system(&self) -> Result<System, CliError> {
        let space_cfg = self.space.as_ref().ok_or_else(|| CliError::Config("missing [space]".into()))?;
        let space = match space_cfg {
            SpaceConfig::Finite { d } => StateSpace::finite(*d),
            SpaceConfig::Circle { n } => StateSpace::circle(*n),
            SpaceConfig::Interval { n } => StateSpace::interval(*n),
            SpaceConfig::Countable { n } => StateSpace::truncated_countable(*n),
        }
        .map_err(config_error)?;
        let spec = match (self.measure.as_ref().unwrap_or(&MeasureConfig::Natural), space.kind()) {
            (MeasureConfig::Natural, SpaceKind::FiniteAlphabet) => MeasureSpec::Uniform { d: space.len() },
            (MeasureConfig::Natural, SpaceKind::CircleGrid) => MeasureSpec::Circle { n: space.len() },
            (MeasureConfig::Natural, SpaceKind::IntervalGrid) => MeasureSpec::Interval { n: space.len() },
            (MeasureConfig::Natural, SpaceKind::TruncatedCountable) => MeasureSpec::Geometric { q: 0.5, n: space.len() },
            (MeasureConfig::Geometric { q }, SpaceKind::TruncatedCountable) => MeasureSpec::Geometric { q: *q, n: space.len() },
            (MeasureConfig::Geometric { .. }, k) => {
                return Err(CliError::Config(format!("geometric weights need a countable space, not {}", k.name())))
            }
            (MeasureConfig::Weights { weights, auto_renormalize }, _) => {
                let nu = AprioriMeasure::new(space.clone(), weights.clone(), *auto_renormalize).map_err(config_error)?;
                return self.with_measure(nu);
            }
        };
        let nu = build_apriori(&spec).map_err(config_error)?;
        self.with_measure(nu)
    }

    fn with_measure(&self, nu: AprioriMeasure) -> Result<System, CliError> {
        let pcfg = self.potential.as_ref().ok_or_else(|| CliError::Config("missing [potential]".into()))?;
        let n = nu.len();
        let (potential, label) = match pcfg {
            PotentialConfig::Zero => (Potential::constant(0.0), "zero".to_string()),
            PotentialConfig::Constant { value } => (Potential::constant(*value), format!("constant({value})")),
            PotentialConfig::Xy { alpha, gamma } => (Potential::xy(*alpha, *gamma), format!("xy(alpha={alpha}, gamma={gamma})")),
            PotentialConfig::ExpInterval { c } => (Potential::exp_interval(*c).map_err(config_error)?, format!("exp-interval(c={c})")),
            PotentialConfig::NegDistance { range } => (
                Potential::neg_distance_to_zero(*range).map_err(config_error)?,
                format!("neg-distance(range={range})"),
            ),
            PotentialConfig::Table { values, range, path } => {
                let (range, values) = match (values, path) {
                    (Some(v), None) => {
                        let k = match range {
                            Some(k) => *k,
                            None => infer_range(n, v.len())?,
                        };
                        (k, v.clone())
                    }
                    (None, Some(p)) => {
                        let full = self.base_dir.join(p);
                        let (k, v) = crate::emit::load_table_csv(&full, n)?;
                        if range.is_some_and(|r| r != k) {
                            return Err(CliError::Config(format!("table file has range {k}, config says {}", range.unwrap())));
                        }
                        (k, v)
                    }
                    _ => return Err(CliError::Config("a table potential needs exactly one of `values` or `path`".into())),
                };
                (Potential::table(n, range, values).map_err(config_error)?, format!("table(range={range})"))
            }
        };
        if matches!(potential.evaluator(), ruelle_core::potential::Evaluator::Xy { .. })
            && nu.space().kind() != SpaceKind::CircleGrid
        {
            return Err(CliError::Config("the xy potential lives on the circle".into()));
        }
        if matches!(potential.evaluator(), ruelle_core::potential::Evaluator::ExpInterval { .. })
            && nu.space().kind() != SpaceKind::IntervalGrid
        {
            return Err(CliError::Config("the exp-interval potential lives on the interval".into()));
        }
        Ok(System { nu, potential, label })
    }
}

fn config_error(e: ruelle_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn infer_range(n: usize, len: usize) -> Result<usize, CliError> {
    let mut size = n;
    for k in 1..=32 {
        if size == len {
            return Ok(k);
        }
        size = match size.checked_mul(n) {
            Some(s) if s <= len => s,
            _ => break,
        };
    }
    Err(CliError::Config(format!("{len} table values is not a power of the alphabet size {n}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_solve_config() {
        let cfg = JobConfig::parse(
            r#"
command = "solve"
[space]
kind = "circle"
n = 16
[potential]
kind = "xy"
gamma = 0.5
"#,
        )
        .unwrap();
        assert_eq!(cfg.command, Command::Solve);
        let sys = cfg.system().unwrap();
        assert_eq!(sys.nu.len(), 16);
        assert_eq!(sys.potential.range(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            "command = \"solve\"\nbogus = 1\n",
            "command = \"solve\"\n[space]\nkind = \"finite\"\nd = 2\nn = 3\n",
            "command = \"solve\"\n[solver]\ntolerance = 1e-9\n",
            "command = \"launch\"\n",
        ] {
            assert!(matches!(JobConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn missing_sections_and_bad_values() {
        assert!(JobConfig::parse("command = \"solve\"\n").is_err());
        assert!(JobConfig::parse("command = \"verify-all\"\n").is_ok());
        let cfg = JobConfig::parse(
            "command = \"solve\"\n[space]\nkind = \"finite\"\nd = 2\n[measure]\nkind = \"weights\"\nweights = [0.5, 0.6]\n[potential]\nkind = \"zero\"\n",
        )
        .unwrap();
        assert!(matches!(cfg.system(), Err(CliError::Config(_))));
        let cfg = JobConfig::parse("command = \"solve\"\n[space]\nkind = \"finite\"\nd = 3\n[potential]\nkind = \"table\"\nvalues = [1.0, 2.0]\n").unwrap();
        assert!(matches!(cfg.system(), Err(CliError::Config(_))));
    }

    #[test]
    fn table_range_is_inferred() {
        let cfg = JobConfig::parse(
            "command = \"gibbs\"\n[space]\nkind = \"finite\"\nd = 2\n[potential]\nkind = \"table\"\nvalues = [0.0, 1.0, 1.0, 0.0]\n",
        )
        .unwrap();
        assert_eq!(cfg.system().unwrap().potential.range(), 2);
    }
}
