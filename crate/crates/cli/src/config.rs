//! Experiment configuration: one JSON document per run.

use std::fmt;

use serde::{Deserialize, Serialize};
use weyl_core::asymptotics::{ComparisonFamily, ComparisonFunction};
use weyl_core::quadrature::QuadSpec;
use weyl_core::symbols::{Symbol, SymbolSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Spectrum,
    WeylCheck,
    HeatCheck,
    Tauberian,
    StarCheck,
    ParametrixCheck,
    MehlerCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Spectrum,
        Experiment::WeylCheck,
        Experiment::HeatCheck,
        Experiment::Tauberian,
        Experiment::StarCheck,
        Experiment::ParametrixCheck,
        Experiment::MehlerCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Spectrum => "spectrum",
            Experiment::WeylCheck => "weyl_check",
            Experiment::HeatCheck => "heat_check",
            Experiment::Tauberian => "tauberian",
            Experiment::StarCheck => "star_check",
            Experiment::ParametrixCheck => "parametrix_check",
            Experiment::MehlerCheck => "mehler_check",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Experiment::Spectrum => "eigenvalues and N(λ)/σ(λ) against the predicted Weyl constant",
            Experiment::WeylCheck => "log-slope fit of the eigenvalues and the eventual lower bound",
            Experiment::HeatCheck => "heat trace against the phase-space integral and remainder",
            Experiment::Tauberian => "Weyl constant recovered from heat traces by Karamata inversion",
            Experiment::StarCheck => "sharp-product layers and Hermite-basis matrix composition",
            Experiment::ParametrixCheck => "parametrix layers q_j and the identity (Σ q_j) # a = 1",
            Experiment::MehlerCheck => "heat parametrix of the harmonic oscillator against Mehler's symbol",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How eigenvalues are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Radial transform for radial d = 1 symbols, tensor sums for separable
    /// ones, Hermite-basis matrices otherwise.
    #[default]
    Auto,
    RadialWeyl,
    RadialAntiWick,
    Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative deviation of `N(λ)/σ(λ)` from the predicted constant.
    pub weyl_ratio: f64,
    /// Relative deviation of the fitted eigenvalue slope.
    pub slope: f64,
    /// Largest admissible max/min spread of residual/remainder ratios.
    pub heat_spread: f64,
    /// Relative deviation of the Karamata constant.
    pub karamata: f64,
    pub star_layers: f64,
    pub star_matrix: f64,
    pub parametrix_q1: f64,
    pub parametrix_identity: f64,
    /// Admissible range of `error(t)/error(t/2)`.
    pub mehler_ratio: [f64; 2],
    /// Relative slack when counting eigenvalues at degenerate levels.
    pub tie: f64,
    /// Agreement between truncations for an eigenvalue to be trusted.
    pub trust: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            weyl_ratio: 0.005,
            slope: 0.10,
            heat_spread: 3.0,
            karamata: 0.05,
            star_layers: 1e-10,
            star_matrix: 1e-6,
            parametrix_q1: 1e-12,
            parametrix_identity: 1e-8,
            mehler_ratio: [8.0, 24.0],
            tie: 1e-9,
            trust: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub symbol: Option<SymbolSpec>,
    /// Comparison function; derived from the symbol when omitted.
    #[serde(default)]
    pub comparison: Option<ComparisonFamily>,
    #[serde(default)]
    pub comparison_y0: Option<f64>,
    #[serde(default = "default_basis")]
    pub basis_size: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub separable_cutoff: Option<f64>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default)]
    pub lambda_grid: Vec<f64>,
    /// Inclusive 1-based eigenvalue range for slope fits.
    #[serde(default)]
    pub fit_range: Option<[usize; 2]>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub predicted_constant: Option<f64>,
    /// `C` in the lower bound `a(w) ≥ C f(|w|)`.
    #[serde(default = "default_lower_c")]
    pub lower_bound_c: f64,
    /// Expected value of `a # a` for `star_check`.
    #[serde(default)]
    pub product: Option<SymbolSpec>,
    #[serde(default)]
    pub terms: Option<usize>,
    /// Spectral parameter `z` as `[re, im]` for `parametrix_check`.
    #[serde(default)]
    pub z: [f64; 2],
    /// Phase-space point for `mehler_check`.
    #[serde(default)]
    pub point: Option<[f64; 2]>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub quadrature: QuadSpec,
    #[serde(default)]
    pub output_prefix: String,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_basis() -> usize {
    400
}

fn default_lower_c() -> f64 {
    1.0
}

/// Problems with a configuration, reported before any computation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// A configuration with its symbol and comparison function built.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: ExperimentConfig,
    pub symbol: Option<Symbol>,
    pub comparison: Option<ComparisonFunction>,
}

impl Resolved {
    pub fn symbol(&self) -> &Symbol {
        self.symbol.as_ref().expect("validated configs carry a symbol")
    }

    pub fn comparison(&self) -> &ComparisonFunction {
        self.comparison.as_ref().expect("validated configs carry a comparison function")
    }

    pub fn d(&self) -> usize {
        self.symbol.as_ref().map_or(1, Symbol::d)
    }

    /// `β` of the comparison function (`None` for `β = ∞`).
    pub fn beta(&self) -> Option<f64> {
        match &self.comparison.as_ref()?.family {
            ComparisonFamily::PowerLog { beta, .. } => Some(*beta),
            _ => None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("cannot parse config: {e}")))
    }

    fn needs_symbol(&self) -> bool {
        self.experiment != Experiment::MehlerCheck
    }

    fn needs_comparison(&self) -> bool {
        matches!(
            self.experiment,
            Experiment::Spectrum | Experiment::WeylCheck | Experiment::HeatCheck | Experiment::Tauberian
        )
    }

    /// Validates every referenced spec and fills experiment defaults.
    pub fn resolve(mut self) -> Result<Resolved, ConfigError> {
        if self.basis_size == 0 {
            return fail("basis_size must be positive");
        }
        if self.threads == Some(0) {
            return fail("threads must be positive");
        }
        if self.lower_bound_c <= 0.0 || !self.lower_bound_c.is_finite() {
            return fail("lower_bound_c must be positive");
        }
        if self.output_prefix.contains(['/', '\\']) {
            return fail("output_prefix must be a plain file-name prefix");
        }
        for (name, grid) in [("t_grid", &self.t_grid), ("lambda_grid", &self.lambda_grid)] {
            if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return fail(format!("{name} entries must be positive and finite"));
            }
        }
        if self.needs_symbol() && self.symbol.is_none() {
            return fail(format!("experiment {} needs a symbol", self.experiment));
        }
        let symbol = match &self.symbol {
            Some(spec) => Some(spec.build().map_err(|e| ConfigError(format!("symbol: {e}")))?),
            None => None,
        };
        if self.comparison.is_none() && self.needs_comparison() {
            self.comparison = self.symbol.as_ref().and_then(derived_comparison);
            if self.comparison.is_none() {
                return fail("no comparison function given and none can be derived from the symbol");
            }
        }
        let comparison = match &self.comparison {
            Some(family) => Some(
                ComparisonFunction::new(family.clone(), self.comparison_y0)
                    .map_err(|e| ConfigError(format!("comparison: {e}")))?,
            ),
            None => None,
        };
        if let Some(p) = &self.product {
            p.build().map_err(|e| ConfigError(format!("product: {e}")))?;
        }
        match self.experiment {
            Experiment::HeatCheck | Experiment::Tauberian => {
                if self.t_grid.is_empty() {
                    self.t_grid = vec![0.2, 0.1, 0.05];
                }
                if self.experiment == Experiment::Tauberian && self.t_grid.len() < 3 {
                    return fail("tauberian needs at least three t values");
                }
                if self.experiment == Experiment::HeatCheck && self.rho.is_none() {
                    self.rho = Some(match &self.symbol {
                        Some(SymbolSpec::ExpGevrey { s, .. }) => (1.0 - 1.0 / s).clamp(0.05, 1.0),
                        _ => 1.0,
                    });
                }
            }
            Experiment::WeylCheck => {
                let [lo, hi] = *self.fit_range.get_or_insert([50, 300]);
                if lo == 0 || hi <= lo + 1 {
                    return fail("fit_range must be [lo, hi] with 1 <= lo and hi > lo + 1");
                }
            }
            Experiment::StarCheck => {
                if self.product.is_none() {
                    return fail("star_check needs the expected product symbol");
                }
                self.terms.get_or_insert(3);
            }
            Experiment::ParametrixCheck => {
                self.terms.get_or_insert(3);
            }
            Experiment::MehlerCheck => {
                if self.t_grid.is_empty() {
                    self.t_grid = vec![0.2, 0.1];
                }
                if self.t_grid.iter().any(|t| *t >= std::f64::consts::FRAC_PI_2) {
                    return fail("mehler_check needs t < π/2");
                }
                self.point.get_or_insert([1.0, 0.0]);
                self.terms.get_or_insert(3);
            }
            Experiment::Spectrum => {}
        }
        if let Some(t) = self.terms {
            if t == 0 || t > weyl_core::calculus::MAX_HEAT_TERMS {
                return fail(format!(
                    "terms must lie in 1..={}",
                    weyl_core::calculus::MAX_HEAT_TERMS
                ));
            }
        }
        Ok(Resolved {
            config: self,
            symbol,
            comparison,
        })
    }
}

/// Comparison function matching a built-in symbol's radial growth.
fn derived_comparison(spec: &SymbolSpec) -> Option<ComparisonFamily> {
    match spec {
        SymbolSpec::Radial { coeffs, exp: false, .. } => {
            let degree = coeffs.iter().rposition(|c| *c != 0.0)?;
            (degree > 0).then_some(ComparisonFamily::PowerLog {
                beta: 2.0 * degree as f64,
                alpha: 0.0,
            })
        }
        // e^{h⟨w⟩^{1/s}} = exp((h^s y)^{1/s}) along rays, up to ⟨w⟩ versus |w|
        SymbolSpec::ExpGevrey { h, s, .. } => Some(ComparisonFamily::ExpGevrey { h: h.powf(*s), s: *s }),
        SymbolSpec::SeparableSum { parts } => {
            let first = derived_comparison(parts.first()?)?;
            parts[1..]
                .iter()
                .all(|p| derived_comparison(p).as_ref() == Some(&first))
                .then_some(first)
        }
        _ => None,
    }
}
