//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 7
//! output_dir = "out"
//!
//! [field]
//! catalog = "even_power"      # or: expression = "x^4 + y^2", variables = ["x", "y"]
//! params = { k = 2 }
//!
//! [integrator]
//! rel_tol = 1e-10
//!
//! [flow]
//! starts = [[1.0]]
//! ```
//!
//! Every section rejects unknown keys. Errors carry `path:line:column`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use gradlab_core::catalog::{self, ReferenceFacts, CATALOG_IDS};
use gradlab_core::{CriticalManifoldModel, Domain, IntegratorConfig, ScalarField};
use serde::{Deserialize, Serialize};
use toml::Spanned;

/// A configuration or input problem. The CLI maps it to exit code 2.
#[derive(Debug)]
pub struct ConfigError {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, ":{l}:{c}")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub flow: Option<FlowSection>,
    pub critical: Option<CriticalSection>,
    pub connections: Option<ConnectionsSection>,
    pub loja: Option<LojaSection>,
    pub verify: Option<VerifySection>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    #[default]
    Euclidean,
    Torus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub catalog: Option<Spanned<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    pub expression: Option<Spanned<String>>,
    pub variables: Option<Vec<String>>,
    #[serde(default)]
    pub domain: DomainKind,
    /// Torus periods; defaults to 2π in every coordinate.
    pub periods: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomStarts {
    pub count: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default)]
    pub starts: Vec<Vec<f64>>,
    pub random: Option<RandomStarts>,
    /// Write one CSV per trajectory (default) or only the summary.
    #[serde(default = "yes")]
    pub write_trajectories: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub grid: Vec<usize>,
    #[serde(default = "default_newton_tol")]
    pub tol: f64,
}

fn default_newton_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectionsSection {
    pub seed_eps: Option<f64>,
    pub locate_tol: Option<f64>,
    pub endpoint_grad_tol: Option<f64>,
    pub sphere_samples: Option<usize>,
    /// Regular levels, as fractions of the way from target to source
    /// value, at which every connection is sliced.
    #[serde(default = "default_level_fractions")]
    pub level_fractions: Vec<f64>,
}

impl Default for ConnectionsSection {
    fn default() -> Self {
        ConnectionsSection {
            seed_eps: None,
            locate_tol: None,
            endpoint_grad_tol: None,
            sphere_samples: None,
            level_fractions: default_level_fractions(),
        }
    }
}

fn default_level_fractions() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Exponent,
    Rate,
    Bias,
    Secant,
    ZSet,
    Distance,
    Survey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZSetSection {
    /// Defaults to the smallest admissible exponent for the estimated θ.
    pub k: Option<u32>,
    #[serde(default = "default_hundred")]
    pub count: usize,
    #[serde(default = "default_ball")]
    pub radius: f64,
}

fn default_hundred() -> usize {
    100
}

fn default_ball() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceSection {
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default = "default_samples")]
    pub count: usize,
    /// Samples sit at log-uniform distances in `[1e-4·radius, radius]`.
    #[serde(default = "default_ball")]
    pub radius: f64,
}

fn default_radii() -> Vec<f64> {
    vec![0.2, 0.1, 0.05, 0.02]
}

fn default_samples() -> usize {
    400
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveySection {
    #[serde(default = "default_survey_count")]
    pub count: usize,
    /// Normal offset of the starts from the manifold.
    #[serde(default = "default_offset")]
    pub offset: f64,
    #[serde(default = "default_mesh")]
    pub mesh: usize,
    /// Half-length of the surveyed piece of a linear manifold.
    #[serde(default = "default_extent")]
    pub extent: f64,
}

fn default_survey_count() -> usize {
    200
}

fn default_offset() -> f64 {
    0.5
}

fn default_mesh() -> usize {
    400
}

fn default_extent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LojaSection {
    /// Start of the reference trajectory.
    pub start: Option<Vec<f64>>,
    /// Limit point; defaults to the projection of the endpoint onto the
    /// manifold.
    pub limit: Option<Vec<f64>>,
    /// Critical value; defaults to the catalog value, then to the
    /// trajectory's terminal value.
    pub critical_value: Option<f64>,
    pub manifold: Option<CriticalManifoldModel>,
    #[serde(default = "default_analyses")]
    pub analyses: Vec<Analysis>,
    pub z_set: Option<ZSetSection>,
    pub distance: Option<DistanceSection>,
    pub survey: Option<SurveySection>,
}

fn default_analyses() -> Vec<Analysis> {
    vec![Analysis::Exponent, Analysis::Rate]
}

impl ZSetSection {
    pub fn or_default(s: &Option<ZSetSection>) -> ZSetSection {
        s.clone().unwrap_or(ZSetSection { k: None, count: default_hundred(), radius: default_ball() })
    }
}

impl DistanceSection {
    pub fn or_default(s: &Option<DistanceSection>) -> DistanceSection {
        s.clone().unwrap_or(DistanceSection {
            radii: default_radii(),
            count: default_samples(),
            radius: default_ball(),
        })
    }
}

impl SurveySection {
    pub fn or_default(s: &Option<SurveySection>) -> SurveySection {
        s.clone().unwrap_or(SurveySection {
            count: default_survey_count(),
            offset: default_offset(),
            mesh: default_mesh(),
            extent: default_extent(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    /// Criterion ids (`"C1"`..`"C15"`) to run; empty runs all of them.
    #[serde(default)]
    pub only: Vec<String>,
}

/// A parsed config together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: ExperimentConfig,
}

/// The field named by `[field]`, with catalog facts where available.
#[derive(Debug, Clone)]
pub struct ResolvedField {
    pub field: ScalarField,
    pub facts: Option<ReferenceFacts>,
    pub label: String,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.chars().count(), |nl| before[nl + 1..].chars().count()) + 1;
    (line, col)
}

impl LoadedConfig {
    pub fn error_at(&self, span: Option<Range<usize>>, message: impl Into<String>) -> ConfigError {
        let (line, column) = match span {
            Some(s) => {
                let (l, c) = line_col(&self.text, s.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        ConfigError { path: self.path.clone(), line, column, message: message.into() }
    }

    pub fn error(&self, message: impl Into<String>) -> ConfigError {
        self.error_at(None, message)
    }

    /// Byte span of `[name]` in the source, for errors about a section.
    pub fn section_span(&self, name: &str) -> Option<Range<usize>> {
        let header = format!("[{name}]");
        self.text.find(&header).map(|i| i..i + header.len())
    }

    pub fn resolve_field(&self) -> Result<ResolvedField, ConfigError> {
        let spec = self.config.field.as_ref().ok_or_else(|| self.error("missing [field] section"))?;
        match (&spec.catalog, &spec.expression) {
            (Some(id), None) => {
                if !CATALOG_IDS.contains(&id.get_ref().as_str()) {
                    return Err(self.error_at(
                        Some(id.span()),
                        format!("unknown catalog id `{}` (known: {})", id.get_ref(), CATALOG_IDS.join(", ")),
                    ));
                }
                let entry = catalog::lookup(id.get_ref(), &spec.params)
                    .map_err(|e| self.error_at(Some(id.span()), e.to_string()))?;
                let label = if spec.params.is_empty() {
                    entry.name.clone()
                } else {
                    let p: Vec<String> = spec.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    format!("{}({})", entry.name, p.join(","))
                };
                Ok(ResolvedField { field: entry.field, facts: Some(entry.facts), label })
            }
            (None, Some(text)) => {
                let vars = spec
                    .variables
                    .clone()
                    .ok_or_else(|| self.error_at(Some(text.span()), "`expression` needs `variables`"))?;
                if !spec.params.is_empty() {
                    return Err(self.error_at(self.section_span("field"), "`params` only applies to catalog fields"));
                }
                let domain = match spec.domain {
                    DomainKind::Euclidean => Domain::Euclidean,
                    DomainKind::Torus => Domain::FlatTorus {
                        periods: spec.periods.clone().unwrap_or_else(|| vec![TAU; vars.len()]),
                    },
                };
                let field = ScalarField::from_expression(text.get_ref(), &vars, domain).map_err(|e| {
                    // Point at the offending character inside the string literal.
                    let inner = match &e {
                        gradlab_core::Error::Expr(ex) => ex.offset(),
                        _ => None,
                    };
                    let span = text.span();
                    let at = inner.map_or(span.clone(), |o| span.start + 1 + o..span.start + 2 + o);
                    self.error_at(Some(at), e.to_string())
                })?;
                Ok(ResolvedField { field, facts: None, label: text.get_ref().clone() })
            }
            (Some(_), Some(e)) => {
                Err(self.error_at(Some(e.span()), "give either `catalog` or `expression`, not both"))
            }
            (None, None) => Err(self.error_at(
                self.section_span("field"),
                "[field] needs `catalog` or `expression`",
            )),
        }
    }
}

pub fn parse_config(path: &Path, text: &str) -> Result<LoadedConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = match e.span() {
            Some(s) => {
                let (l, c) = line_col(text, s.start);
                (Some(l), Some(c))
            }
            None => (None, None),
        };
        ConfigError { path: path.to_path_buf(), line, column, message: e.message().to_string() }
    })?;
    let loaded = LoadedConfig { path: path.to_path_buf(), text: text.to_string(), config };
    loaded.validate()?;
    Ok(loaded)
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: path.to_path_buf(),
        line: None,
        column: None,
        message: format!("cannot read config: {e}"),
    })?;
    parse_config(path, &text)
}

impl LoadedConfig {
    fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        c.integrator
            .validate()
            .map_err(|e| self.error_at(self.section_span("integrator"), e.to_string()))?;
        if c.workers == Some(0) {
            return Err(self.error("`workers` must be at least 1"));
        }
        if c.field.is_some() {
            self.resolve_field()?;
        }
        if let Some(flow) = &c.flow {
            if flow.starts.is_empty() && flow.random.is_none() {
                return Err(self.error_at(self.section_span("flow"), "[flow] needs `starts` or `random`"));
            }
            if let Some(r) = &flow.random {
                self.check_box(&r.lo, &r.hi, "flow.random")?;
                if c.seed.is_none() {
                    return Err(self.error_at(
                        self.section_span("flow.random"),
                        "random starts need a top-level `seed`",
                    ));
                }
            }
        }
        if let Some(cr) = &c.critical {
            self.check_box(&cr.lo, &cr.hi, "critical")?;
            if cr.grid.len() != cr.lo.len() || cr.grid.contains(&0) {
                return Err(self.error_at(
                    self.section_span("critical"),
                    "`grid` needs one positive count per coordinate",
                ));
            }
        }
        if let Some(cn) = &c.connections {
            if cn.level_fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
                return Err(self.error_at(
                    self.section_span("connections"),
                    "`level_fractions` must lie strictly between 0 and 1",
                ));
            }
        }
        if let Some(l) = &c.loja {
            let random = l.analyses.iter().any(|a| matches!(a, Analysis::ZSet | Analysis::Distance));
            if random && c.seed.is_none() {
                return Err(self.error_at(self.section_span("loja"), "z_set and distance analyses need a `seed`"));
            }
        }
        if let Some(v) = &c.verify {
            for id in &v.only {
                let ok = id.strip_prefix('C').and_then(|n| n.parse::<usize>().ok()).is_some_and(|n| (1..=15).contains(&n));
                if !ok {
                    return Err(self.error_at(self.section_span("verify"), format!("unknown criterion `{id}`")));
                }
            }
        }
        Ok(())
    }

    fn check_box(&self, lo: &[f64], hi: &[f64], section: &str) -> Result<(), ConfigError> {
        let bad = lo.len() != hi.len()
            || lo.is_empty()
            || lo.iter().zip(hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b));
        if bad {
            return Err(self.error_at(
                self.section_span(section),
                "`lo` and `hi` must have equal length with lo < hi componentwise",
            ));
        }
        if self.config.field.is_some() {
            if let Ok(r) = self.resolve_field() {
                if r.field.dimension() != lo.len() {
                    return Err(self.error_at(
                        self.section_span(section),
                        format!("box has {} coordinates, the field has {}", lo.len(), r.field.dimension()),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl ExperimentConfig {
    /// TOML rendering used as the config echo in reports.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<LoadedConfig, ConfigError> {
        parse_config(Path::new("test.toml"), text)
    }

    #[test]
    fn catalog_field_with_params() {
        let c = parse("[field]\ncatalog = \"even_power\"\nparams = { k = 2 }\n").unwrap();
        let r = c.resolve_field().unwrap();
        assert_eq!(r.field.dimension(), 1);
        assert_eq!(r.label, "even_power(k=2)");
    }

    #[test]
    fn unknown_catalog_id_is_positioned() {
        let err = parse("seed = 1\n[field]\ncatalog = \"banana\"\n").unwrap_err();
        assert_eq!((err.line, err.column), (Some(3), Some(11)));
        assert!(err.message.contains("banana"));
        assert!(err.to_string().starts_with("test.toml:3:11:"));
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let err = parse("seed = 1\n[integrator\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        let err = parse("[integrator]\nrel_tol = \"x\"\n").unwrap_err();
        assert_eq!(err.line, Some(2));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse("[integrator]\nrel_tl = 1e-8\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.message.contains("rel_tl"));
    }

    #[test]
    fn expression_errors_point_into_string() {
        let err = parse("[field]\nexpression = \"x^2 + \"\nvariables = [\"x\"]\n").unwrap_err();
        assert_eq!(err.line, Some(2));
        assert!(err.column.unwrap() > 14);
    }

    #[test]
    fn exactly_one_field_source() {
        assert!(parse("[field]\ncatalog = \"bowl\"\nexpression = \"x\"\nvariables = [\"x\"]\n").is_err());
        assert!(parse("[field]\n").is_err());
    }

    #[test]
    fn random_starts_need_seed() {
        let text = "[field]\ncatalog = \"bowl\"\n[flow.random]\ncount = 3\nlo = [0, 0]\nhi = [1, 1]\n";
        let err = parse(text).unwrap_err();
        assert!(err.message.contains("seed"));
        assert!(parse(&format!("seed = 3\n{text}")).is_ok());
    }

    #[test]
    fn box_dimension_must_match_field() {
        let err = parse("[field]\ncatalog = \"bowl\"\n[critical]\nlo = [0]\nhi = [1]\ngrid = [3]\n").unwrap_err();
        assert!(err.message.contains("coordinates"));
    }

    #[test]
    fn echo_round_trips() {
        let text = "seed = 9\noutput_dir = \"o\"\n[field]\nexpression = \"cos(x) + cos(y)\"\nvariables = [\"x\", \"y\"]\ndomain = \"torus\"\n[integrator]\nrel_tol = 1e-9\n[flow]\nstarts = [[0.5, 0.5]]\n[loja]\nanalyses = [\"exponent\", \"z_set\"]\nmanifold = { kind = \"point\", location = [3.14, 3.14] }\n";
        let first = parse(text).unwrap();
        let echo = first.config.to_toml();
        let second = parse(&echo).unwrap();
        assert_eq!(second.config.to_toml(), echo);
        assert_eq!(second.config.seed, Some(9));
        assert_eq!(second.config.integrator.rel_tol, 1e-9);
    }
}
