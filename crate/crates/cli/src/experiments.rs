//! The named experiments. Each returns its CSV artifacts and a summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;
use weyl_core::asymptotics::{
    counting_with_tolerance, karamata_estimate, ln_eigenvalue_prediction, lower_bound_check,
    upper_bound_const, weyl_constant, weyl_report, weyl_report_csv, ComparisonFamily,
    SphereProfile,
};
use weyl_core::calculus::{parametrix_jets, sharp_layers, sharp_term};
use weyl_core::heat::{
    heat_trace, mehler_parametrix_error, mehler_symbol, verify_heat_formula, TailBound,
};
use weyl_core::quantize::{
    build_matrix, combine_separable, eigensolve, radial_antiwick_eigs, radial_weyl_eigs,
    truncation_trust, SpectralData,
};
use weyl_core::symbols::{PhasePoint, Symbol};
use weyl_core::{Error, Result};

use crate::config::{Experiment, ExperimentConfig, Method, Resolved};

/// Number formatting used in every CSV: 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Tolerance {
    /// `value ≤ max`.
    Max(f64),
    /// `lo ≤ value ≤ hi`.
    Range([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl Check {
    fn max(name: impl Into<String>, value: f64, max: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: Tolerance::Max(max),
            pass: value <= max,
        }
    }

    fn range(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance: Tolerance::Range([lo, hi]),
            pass: (lo..=hi).contains(&value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Constant {
    pub computed: f64,
    pub predicted: Option<f64>,
    pub ratio: Option<f64>,
}

impl Constant {
    fn new(computed: f64, predicted: Option<f64>) -> Self {
        Constant {
            computed,
            predicted,
            ratio: predicted.map(|p| computed / p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub experiment: Experiment,
    pub inputs: ExperimentConfig,
    pub constants: BTreeMap<String, Constant>,
    pub checks: Vec<Check>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Result of a completed experiment.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    /// `(file stem, contents)`.
    pub csvs: Vec<(String, String)>,
    pub constants: BTreeMap<String, Constant>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn csv(&mut self, name: &str, contents: String) {
        self.csvs.push((name.to_string(), contents));
    }

    fn constant(&mut self, name: &str, computed: f64, predicted: Option<f64>) {
        self.constants.insert(name.to_string(), Constant::new(computed, predicted));
    }
}

pub fn run_experiment(r: &Resolved) -> Result<Outcome> {
    match r.config.experiment {
        Experiment::Spectrum => spectrum(r),
        Experiment::WeylCheck => weyl_check(r),
        Experiment::HeatCheck => heat_check(r),
        Experiment::Tauberian => tauberian(r),
        Experiment::StarCheck => star_check(r),
        Experiment::ParametrixCheck => parametrix_check(r),
        Experiment::MehlerCheck => mehler_check(r),
    }
}

/// Eigenvalues of the configured symbol by the configured method.
pub fn compute_spectrum(sym: &Symbol, cfg: &ExperimentConfig) -> Result<SpectralData> {
    let n = cfg.basis_size;
    let quad = &cfg.quadrature;
    match cfg.method {
        Method::RadialWeyl | Method::RadialAntiWick => {
            let profile = match (sym.radial_profile(), sym.d()) {
                (Some(p), 1) => p,
                _ => {
                    return Err(Error::Capability(
                        "radial transforms need a radial symbol with d = 1".into(),
                    ))
                }
            };
            if cfg.method == Method::RadialWeyl {
                radial_weyl_eigs(profile, n, quad)
            } else {
                radial_antiwick_eigs(profile, n)
            }
        }
        Method::Matrix => matrix_spectrum(sym, cfg),
        Method::Auto => match sym {
            Symbol::SeparableSum { parts, .. } => {
                let spectra = parts
                    .iter()
                    .map(|p| compute_spectrum(p, cfg))
                    .collect::<Result<Vec<_>>>()?;
                let cutoff = cfg.separable_cutoff.unwrap_or_else(|| default_cutoff(&spectra));
                let mut acc = spectra[0].clone();
                for next in &spectra[1..] {
                    acc = combine_separable(&acc, next, cutoff)?;
                }
                Ok(acc)
            }
            _ if sym.d() == 1 && sym.radial_profile().is_some() => {
                radial_weyl_eigs(sym.radial_profile().unwrap(), n, quad)
            }
            _ => matrix_spectrum(sym, cfg),
        },
    }
}

/// Largest cutoff every factor covers: `min_i (max_i + Σ_{k≠i} min_k)`.
fn default_cutoff(spectra: &[SpectralData]) -> f64 {
    let mins: f64 = spectra.iter().map(|s| s.trusted()[0]).sum();
    spectra
        .iter()
        .map(|s| s.trusted()[s.trusted().len() - 1] + mins - s.trusted()[0])
        .fold(f64::INFINITY, f64::min)
        * (1.0 - 1e-12)
}

/// Dense Hermite-basis spectrum, trusted where the `N` and `3N/4` truncations agree.
fn matrix_spectrum(sym: &Symbol, cfg: &ExperimentConfig) -> Result<SpectralData> {
    let n = cfg.basis_size;
    let matrix = build_matrix(sym, n, &cfg.quadrature)?;
    let mut large = eigensolve(&matrix)?;
    let small = eigensolve(&matrix.leading_block((3 * n / 4).max(1)))?;
    large.trusted_count = Some(truncation_trust(&small, &large, cfg.tolerances.trust));
    Ok(large)
}

fn sphere_one(d: usize) -> Result<SphereProfile> {
    SphereProfile::constant(d, 1.0)
}

fn predicted_constant(r: &Resolved) -> Result<f64> {
    match r.config.predicted_constant {
        Some(c) => Ok(c),
        None => weyl_constant(r.d(), r.beta(), &sphere_one(r.d())?),
    }
}

/// `λ_j ≥ C f(h j^{1/(2d)})` with `h` at 80% of its admissible threshold.
fn tail_bound(r: &Resolved) -> Result<TailBound> {
    let c = r.config.lower_bound_c;
    let ub = upper_bound_const(r.d(), r.beta(), c, true)?;
    Ok(TailBound {
        f: r.comparison().clone(),
        c,
        h: 0.8 * ub.h_threshold,
        d: r.d(),
    })
}

fn spectrum(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config;
    let spec = compute_spectrum(r.symbol(), cfg)?;
    let mut out = Outcome::default();
    out.csv("spectrum", spec.to_csv());
    if !cfg.lambda_grid.is_empty() {
        let predicted = predicted_constant(r)?;
        let rows = weyl_report(&spec, r.comparison(), r.d(), &cfg.lambda_grid, predicted, cfg.tolerances.tie)?;
        for row in &rows {
            out.checks.push(Check::max(
                format!("weyl_ratio_at_{}", row.lambda),
                (row.ratio / predicted - 1.0).abs(),
                cfg.tolerances.weyl_ratio,
            ));
        }
        let last = rows.last().expect("non-empty grid");
        out.constant("weyl_constant", last.ratio, Some(predicted));
        out.csv("weyl", weyl_report_csv(&rows));
    }
    Ok(out)
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn weyl_check(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config;
    let d = r.d();
    let f = r.comparison();
    let spec = compute_spectrum(r.symbol(), cfg)?;
    let [lo, hi] = cfg.fit_range.expect("resolved");
    let trusted = spec.trusted();
    if hi > trusted.len() {
        return Err(Error::Resolution(format!(
            "fit range ends at j = {hi} but only {} eigenvalues are trusted",
            trusted.len()
        )));
    }
    // abscissa in which ln λ_j is asymptotically linear
    let abscissa = |j: f64| match &f.family {
        ComparisonFamily::ExpGevrey { s, .. } | ComparisonFamily::ExpRootScaled { s, .. } => {
            j.powf(0.5 / (d as f64 * s))
        }
        _ => j.ln(),
    };
    let phi = sphere_one(d)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut preds = Vec::new();
    let mut csv = String::from("j,lambda,ln_lambda,x,ln_predicted\n");
    for j in lo..=hi {
        let lambda = trusted[j - 1];
        if lambda <= 0.0 {
            return Err(Error::Domain(format!("λ_{j} = {lambda} is not positive")));
        }
        let x = abscissa(j as f64);
        let pred = ln_eigenvalue_prediction(j, f, d, &phi, r.beta())?;
        let _ = writeln!(csv, "{j},{},{},{},{}", num(lambda), num(lambda.ln()), num(x), num(pred));
        xs.push(x);
        ys.push(lambda.ln());
        preds.push(pred);
    }
    let fitted = slope(&xs, &ys);
    let predicted = slope(&xs, &preds);
    let mut out = Outcome::default();
    out.constant("log_slope", fitted, Some(predicted));
    out.checks.push(Check::max(
        "log_slope_relative_error",
        (fitted / predicted - 1.0).abs(),
        cfg.tolerances.slope,
    ));

    let h = tail_bound(r)?.h;
    let lb = lower_bound_check(&spec, f, d, h)?;
    out.checks.push(Check {
        name: "lower_bound_onset".into(),
        value: lb.onset.map_or(f64::NAN, |j| j as f64),
        tolerance: Tolerance::Max(trusted.len() as f64),
        pass: lb.holds_eventually(),
    });
    out.constant("lower_bound_h", h, None);
    out.csv("slope", csv);
    out.csv("spectrum", spec.to_csv());
    if !cfg.lambda_grid.is_empty() {
        let predicted = predicted_constant(r)?;
        let rows = weyl_report(&spec, f, d, &cfg.lambda_grid, predicted, cfg.tolerances.tie)?;
        out.csv("weyl", weyl_report_csv(&rows));
    }
    Ok(out)
}

fn heat_check(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config;
    let spec = compute_spectrum(r.symbol(), cfg)?;
    let tail = tail_bound(r)?;
    let rho = cfg.rho.expect("resolved");
    let report = verify_heat_formula(&spec, r.symbol(), &cfg.t_grid, rho, Some(&tail), &cfg.quadrature)?;
    let mut out = Outcome::default();
    out.constant("remainder_constant", report.constant, None);
    out.checks.push(Check {
        name: "remainder_ratio_bounded".into(),
        value: report.spread,
        tolerance: Tolerance::Max(cfg.tolerances.heat_spread),
        pass: report.bounded(cfg.tolerances.heat_spread),
    });
    out.csv("heat", report.to_csv());
    Ok(out)
}

fn tauberian(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config;
    let d = r.d();
    let f = r.comparison();
    let spec = compute_spectrum(r.symbol(), cfg)?;
    let tail = tail_bound(r)?;
    let mut ts = cfg.t_grid.clone();
    ts.sort_by(|a, b| b.total_cmp(a));
    let samples = ts
        .iter()
        .map(|&t| Ok((t, heat_trace(&spec, t, Some(&tail))?.value)))
        .collect::<Result<Vec<_>>>()?;
    let k = karamata_estimate(&samples, f, d)?;
    let predicted = predicted_constant(r)?;
    let mut out = Outcome::default();
    out.constant("weyl_constant", k.constant(), Some(predicted));
    out.checks.push(Check::max(
        "karamata_constant_relative_error",
        (k.constant() / predicted - 1.0).abs(),
        cfg.tolerances.karamata,
    ));
    let mut csv = String::from("t,trace,ratio\n");
    for ((t, trace), ratio) in samples.iter().zip(&k.ratios) {
        let _ = writeln!(csv, "{},{},{}", num(*t), num(*trace), num(*ratio));
    }
    out.csv("tauberian", csv);
    if !cfg.lambda_grid.is_empty() {
        let mut csv = String::from("lambda,N_estimate,N\n");
        for &lambda in &cfg.lambda_grid {
            let est = k.counting_estimate(f, lambda)?;
            let count = counting_with_tolerance(&spec, lambda, cfg.tolerances.tie)?;
            let _ = writeln!(csv, "{},{},{count}", num(lambda), num(est));
        }
        out.csv("counting", csv);
    }
    Ok(out)
}

/// Deterministic sample points with coordinates uniform in `[-5, 5]`.
pub fn sample_points(d: usize, count: usize) -> Vec<PhasePoint> {
    let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = || {
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 10.0 - 5.0
    };
    (0..count)
        .map(|_| PhasePoint::new((0..2 * d).map(|_| next()).collect()).expect("finite coordinates"))
        .collect()
}

fn coords_csv(w: &PhasePoint) -> String {
    w.coords().iter().map(|c| num(*c)).collect::<Vec<_>>().join(",")
}

fn coord_header(d: usize) -> String {
    let xs = (1..=d).map(|i| format!("x{i}"));
    let xis = (1..=d).map(|i| format!("xi{i}"));
    xs.chain(xis).collect::<Vec<_>>().join(",")
}

fn star_check(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config;
    let a = r.symbol();
    let product = cfg.product.as_ref().expect("resolved").build()?;
    let layers = cfg.terms.expect("resolved");
    let mut csv = coord_header(a.d());
    for l in 0..layers {
        let _ = write!(csv, ",c{l}_re,c{l}_im");
    }
    csv.push_str(",sum_re,expected\n");
    let mut layer_err: f64 = 0.0;
    for w in sample_points(a.d(), 20) {
        let c = sharp_layers(a, a, layers, &w)?;
        let sum: Complex64 = c.iter().sum();
        let expected = product.value(&w)?;
        layer_err = layer_err.max((sum - expected).norm() / (1.0 + expected.norm()));
        let _ = write!(csv, "{}", coords_csv(&w));
        for v in &c {
            let _ = write!(csv, ",{},{}", num(v.re), num(v.im));
        }
        let _ = writeln!(csv, ",{},{}", num(sum.re), num(expected.re));
    }
    let mut out = Outcome::default();
    out.checks.push(Check::max("layer_sum_relative_error", layer_err, cfg.tolerances.star_layers));
    if a.d() == 1 {
        let n = cfg.basis_size;
        let block = (n / 4).clamp(1, 50);
        let ma = build_matrix(a, n, &cfg.quadrature)?;
        let mp = build_matrix(&product, n, &cfg.quadrature)?;
        let lhs = ma.matmul(&ma)?.leading_block(block);
        let rhs = mp.leading_block(block);
        let err = lhs
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        out.checks.push(Check::max(
            format!("matrix_composition_{block}x{block}"),
            err,
            cfg.tolerances.star_matrix,
        ));
    }
    out.csv("star", csv);
    Ok(out)
}

fn parametrix_check(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config;
    let a = r.symbol();
    let terms = cfg.terms.expect("resolved");
    let z = Complex64::new(cfg.z[0], cfg.z[1]);
    let order = terms - 1;
    let mut csv = coord_header(a.d());
    for j in 0..terms {
        let _ = write!(csv, ",q{j}_re,q{j}_im");
    }
    csv.push_str(",identity_defect\n");
    let mut q1: f64 = 0.0;
    let mut defect: f64 = 0.0;
    let shifted = Symbol::shifted(a.clone(), z);
    for w in sample_points(a.d(), 100) {
        let jets = parametrix_jets(a, terms, &w, z, order)?;
        let ja = shifted.jet(&w, order)?;
        let mut local: f64 = 0.0;
        for m in 0..terms {
            let want = if m == 0 { 1.0 } else { 0.0 };
            local = local.max((sharp_term(&jets, std::slice::from_ref(&ja), m)? - want).norm());
        }
        defect = defect.max(local);
        if let Some(j1) = jets.get(1) {
            q1 = q1.max(j1.value().norm());
        }
        let _ = write!(csv, "{}", coords_csv(&w));
        for j in &jets {
            let _ = write!(csv, ",{},{}", num(j.value().re), num(j.value().im));
        }
        let _ = writeln!(csv, ",{}", num(local));
    }
    let mut out = Outcome::default();
    if terms > 1 && a.is_real() && z.im == 0.0 {
        out.checks.push(Check::max("max_abs_q1", q1, cfg.tolerances.parametrix_q1));
    }
    out.checks.push(Check::max("identity_defect", defect, cfg.tolerances.parametrix_identity));
    out.csv("parametrix", csv);
    Ok(out)
}

fn mehler_check(r: &Resolved) -> Result<Outcome> {
    let cfg = &r.config;
    let [x, xi] = cfg.point.expect("resolved");
    let w = PhasePoint::xy(x, xi);
    let terms = cfg.terms.expect("resolved");
    let [lo, hi] = cfg.tolerances.mehler_ratio;
    let mut csv = String::from("t,mehler,error,error_half,ratio\n");
    let mut out = Outcome::default();
    for &t in &cfg.t_grid {
        let e = mehler_parametrix_error(t, &w, terms)?;
        let e2 = mehler_parametrix_error(t / 2.0, &w, terms)?;
        let ratio = e / e2;
        let _ = writeln!(csv, "{},{},{},{},{}", num(t), num(mehler_symbol(t, &w)?), num(e), num(e2), num(ratio));
        out.checks.push(Check::range(format!("error_ratio_at_{t}"), ratio, lo, hi));
    }
    out.csv("mehler", csv);
    Ok(out)
}
