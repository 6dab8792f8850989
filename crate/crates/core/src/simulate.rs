//! Monte Carlo studies of coverage, sign determination and false coverage.
//!
//! Every replication draws from its own ChaCha8 stream, numbered
//! `(cell << 32) | rep` under a key derived from the master seed, so results
//! do not depend on how replications are scheduled across threads. Per
//! replication outcomes are collected in order and reduced sequentially.

use std::fmt;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal as NormalDist, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{LocationFamily, Truncated};
use crate::error::{Error, Result};
use crate::invert::{sign_thresholds, Inverter, SignCall};
use crate::multiplicity::{
    select, AdjustedMethod, Adjustment, CoverageTally, ErrorRates, SelectionRule,
};
use crate::regions::{Method, MethodSpec, Setting};

/// Generator for replication `rep` of study cell `cell`.
pub fn stream_rng(seed: u64, cell: u32, rep: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((cell as u64) << 32) | rep as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaModel {
    Fixed {
        values: Vec<f64>,
    },
    /// The first `round(pi1 m)` parameters equal `value`, the rest are 0.
    ProportionNonnull {
        pi1: f64,
        value: f64,
    },
    /// Each parameter is non-null with probability `pi1`, with effect drawn
    /// from `N(prior_mean, prior_sd^2)`; redrawn every replication.
    TwoGroup {
        pi1: f64,
        prior_mean: f64,
        prior_sd: f64,
    },
}

impl ThetaModel {
    fn validate(&self, m: usize) -> Result<()> {
        match *self {
            ThetaModel::Fixed { ref values } => {
                if values.len() != m || values.iter().any(|t| !t.is_finite()) {
                    return Err(Error::parameter(format!(
                        "fixed theta vector needs {m} finite values"
                    )));
                }
            }
            ThetaModel::ProportionNonnull { pi1, value } => {
                if !(0.0..=1.0).contains(&pi1) || !value.is_finite() {
                    return Err(Error::parameter("pi1 must lie in [0, 1]"));
                }
            }
            ThetaModel::TwoGroup {
                pi1,
                prior_mean,
                prior_sd,
            } => {
                if !(0.0..=1.0).contains(&pi1)
                    || !prior_mean.is_finite()
                    || !(prior_sd >= 0.0 && prior_sd.is_finite())
                {
                    return Err(Error::parameter(
                        "two-group model needs pi1 in [0, 1] and a finite prior",
                    ));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            ThetaModel::Fixed { ref values } => values.clone(),
            ThetaModel::ProportionNonnull { pi1, value } => {
                let k = (pi1 * m as f64).round() as usize;
                (0..m).map(|i| if i < k { value } else { 0.0 }).collect()
            }
            ThetaModel::TwoGroup {
                pi1,
                prior_mean,
                prior_sd,
            } => {
                let prior = NormalDist::new(prior_mean, prior_sd).expect("validated");
                (0..m)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let effect = prior.sample(rng);
                        if u < pi1 {
                            effect
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrModel {
    #[default]
    Independent,
    /// `corr(Y_i, Y_j) = rho` for `i != j`.
    Exchangeable { rho: f64 },
    /// `corr(Y_i, Y_j) = rho^|i - j|`.
    Ar1 { rho: f64 },
}

impl CorrModel {
    pub fn matrix(&self, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(m, m, |i, j| match *self {
            _ if i == j => 1.0,
            CorrModel::Independent => 0.0,
            CorrModel::Exchangeable { rho } => rho,
            CorrModel::Ar1 { rho } => rho.powi(i.abs_diff(j) as i32),
        })
    }

    /// Lower Cholesky factor, `None` under independence.
    pub fn factor(&self, m: usize) -> Result<Option<DMatrix<f64>>> {
        let rho = match *self {
            CorrModel::Independent => return Ok(None),
            CorrModel::Exchangeable { rho } | CorrModel::Ar1 { rho } => rho,
        };
        if !(rho.abs() < 1.0) {
            return Err(Error::parameter(format!(
                "correlation must satisfy |rho| < 1, got {rho}"
            )));
        }
        Cholesky::new(self.matrix(m))
            .map(|ch| Some(ch.l()))
            .ok_or_else(|| {
                Error::parameter(format!(
                    "{self} correlation is not positive definite for m = {m}"
                ))
            })
    }
}

impl fmt::Display for CorrModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            CorrModel::Independent => write!(f, "independent"),
            CorrModel::Exchangeable { rho } => write!(f, "exchangeable({rho})"),
            CorrModel::Ar1 { rho } => write!(f, "ar1({rho})"),
        }
    }
}

/// An interval method with its multiplicity adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodEntry {
    #[serde(flatten)]
    pub spec: MethodSpec,
    #[serde(default)]
    pub adjustment: Adjustment,
}

impl MethodEntry {
    pub fn new(spec: MethodSpec, adjustment: Adjustment) -> Self {
        MethodEntry { spec, adjustment }
    }
}

impl fmt::Display for MethodEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.adjustment {
            Adjustment::None => write!(f, "{}", self.spec),
            adj => write!(f, "{} {adj}", self.spec),
        }
    }
}

/// One multi-parameter scenario, as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub id: String,
    pub m: usize,
    pub theta_model: ThetaModel,
    #[serde(default)]
    pub corr_model: CorrModel,
    pub rule: SelectionRule,
    pub methods: Vec<MethodEntry>,
    pub reps: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.reps == 0 {
            return Err(Error::parameter("m and reps must be at least 1"));
        }
        if self.reps > u32::MAX as usize {
            return Err(Error::parameter("too many replications"));
        }
        self.theta_model.validate(self.m)?;
        self.rule.validate()?;
        for e in &self.methods {
            e.spec.validate()?;
        }
        Ok(())
    }
}

/// Parameters and estimates of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub thetas: Vec<f64>,
    pub ys: Vec<f64>,
}

/// A scenario with its correlation factor computed once.
#[derive(Debug, Clone)]
pub struct Sampler {
    spec: ScenarioSpec,
    factor: Option<DMatrix<f64>>,
    cell: u32,
}

impl Sampler {
    pub fn new(spec: &ScenarioSpec) -> Result<Self> {
        Self::for_cell(spec, 0)
    }

    fn for_cell(spec: &ScenarioSpec, cell: u32) -> Result<Self> {
        spec.validate()?;
        Ok(Sampler {
            factor: spec.corr_model.factor(spec.m)?,
            spec: spec.clone(),
            cell,
        })
    }

    pub fn sample(&self, rep: u32) -> Sample {
        let mut rng = stream_rng(self.spec.seed, self.cell, rep);
        let m = self.spec.m;
        let thetas = self.spec.theta_model.draw(m, &mut rng);
        let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let noise = match &self.factor {
            Some(l) => l * z,
            None => z,
        };
        let ys = thetas
            .iter()
            .zip(noise.iter())
            .map(|(t, e)| t + e)
            .collect();
        Sample { thetas, ys }
    }
}

/// Replication `rep` of `spec`.
pub fn sample_scenario(spec: &ScenarioSpec, rep: u32) -> Result<Sample> {
    Ok(Sampler::new(spec)?.sample(rep))
}

/// A draw of `Y` given selection, by inversion of the truncated cdf.
pub fn sample_truncated_estimator(
    family: &dyn LocationFamily,
    theta: f64,
    rule: SelectionRule,
    rep: u32,
    seed: u64,
) -> Result<f64> {
    let trunc = Truncated::new(family, theta, rule.truncation()?)?;
    if trunc.selection_prob() < 1e-12 {
        return Err(Error::parameter(format!(
            "selection probability {:e} at theta = {theta} is too small to sample",
            trunc.selection_prob()
        )));
    }
    let u: f64 = Open01.sample(&mut stream_rng(seed, 0, rep));
    Ok(trunc.quantile(u))
}

/// One output line: `(scenario, theta, method, metric, value, se)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub scenario: String,
    pub theta: Option<f64>,
    pub method: String,
    pub metric: String,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

/// `x` rounded to six significant digits, printed without exponent noise.
pub fn format_sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.5e}").parse().expect("float round trip");
    rounded.to_string()
}

impl MetricsReport {
    pub const HEADER: [&'static str; 6] = ["scenario", "theta", "method", "metric", "value", "se"];

    fn push(
        &mut self,
        scenario: &str,
        theta: Option<f64>,
        method: &str,
        metric: &str,
        value: f64,
        se: f64,
    ) {
        self.rows.push(MetricRow {
            scenario: scenario.to_owned(),
            theta,
            method: method.to_owned(),
            metric: metric.to_owned(),
            value,
            se,
        });
    }

    /// First row matching all three keys.
    pub fn get(&self, theta: Option<f64>, method: &str, metric: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.theta == theta && r.method == method && r.metric == metric)
    }

    pub fn extend(&mut self, other: MetricsReport) {
        self.rows.extend(other.rows);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let wrap = |e: csv::Error| Error::Numeric(format!("csv output: {e}"));
        w.write_record(Self::HEADER).map_err(wrap)?;
        for r in &self.rows {
            let theta = r.theta.map(format_sig6).unwrap_or_default();
            w.write_record([
                r.scenario.as_str(),
                &theta,
                &r.method,
                &r.metric,
                &format_sig6(r.value),
                &format_sig6(r.se),
            ])
            .map_err(wrap)?;
        }
        w.flush().map_err(|e| Error::Io {
            context: "writing report".into(),
            source: e,
        })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Running mean of a real-valued metric.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Mean {
    n: u64,
    sum: f64,
    sum2: f64,
}

impl Mean {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum2 += x * x;
    }

    fn merge(&mut self, o: &Mean) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum2 += o.sum2;
    }

    fn value_se(&self) -> (f64, f64) {
        if self.n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = (self.sum2 / n - mean * mean).max(0.0);
        (mean, (var / n).sqrt())
    }
}

/// Running frequency of an event.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Freq {
    hits: u64,
    n: u64,
}

impl Freq {
    fn push(&mut self, hit: bool) {
        self.n += 1;
        self.hits += u64::from(hit);
    }

    fn merge(&mut self, o: &Freq) {
        self.n += o.n;
        self.hits += o.hits;
    }

    fn value_se(&self) -> (f64, f64) {
        if self.n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let p = self.hits as f64 / self.n as f64;
        (p, (p * (1.0 - p) / self.n as f64).sqrt())
    }
}

/// Single-parameter comparison of methods over a θ grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    #[serde(default)]
    pub id: String,
    pub thetas: Vec<f64>,
    pub methods: Vec<MethodSpec>,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct SingleStats {
    coverage: Freq,
    length: Mean,
    minimal_effect: Mean,
    weak: Freq,
    strict: Freq,
}

/// Length, minimal effect, sign determination and coverage per θ and
/// method. Conditional methods are fed draws from the law given selection;
/// all methods share the same uniform per replication.
pub fn run_method_comparison(
    family: &dyn LocationFamily,
    spec: &ComparisonSpec,
) -> Result<MetricsReport> {
    if spec.reps == 0 || spec.reps > u32::MAX as usize {
        return Err(Error::parameter("reps must be in [1, 2^32)"));
    }
    let inverters = spec
        .methods
        .iter()
        .map(|&s| Inverter::new(family, s))
        .collect::<Result<Vec<_>>>()?;
    let cells = spec
        .thetas
        .par_iter()
        .enumerate()
        .map(|(cell, &theta)| {
            let truncs = inverters
                .iter()
                .map(|inv| {
                    inv.spec()
                        .truncation()
                        .map(|t| Truncated::new(family, theta, t))
                        .transpose()
                })
                .collect::<Result<Vec<_>>>()?;
            let mut stats = vec![SingleStats::default(); inverters.len()];
            for rep in 0..spec.reps as u32 {
                let u: f64 = Open01.sample(&mut stream_rng(spec.seed, cell as u32, rep));
                for ((inv, trunc), st) in inverters.iter().zip(&truncs).zip(&mut stats) {
                    let y = match trunc {
                        Some(t) => t.quantile(u),
                        None => theta + family.quantile0(u),
                    };
                    let ci = inv.interval(y)?;
                    let call = ci.sign_call();
                    st.coverage.push(ci.contains(theta));
                    st.length.push(ci.length());
                    if theta > 0.0 {
                        st.minimal_effect.push(ci.lower);
                    } else if theta < 0.0 {
                        st.minimal_effect.push(ci.upper);
                    }
                    st.weak.push(call.is_determined());
                    st.strict.push(call.is_strict());
                }
            }
            Ok(stats)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = MetricsReport::default();
    for (&theta, stats) in spec.thetas.iter().zip(cells) {
        for (inv, st) in inverters.iter().zip(stats) {
            let label = inv.spec().to_string();
            let mut put = |metric: &str, (v, se): (f64, f64)| {
                report.push(&spec.id, Some(theta), &label, metric, v, se)
            };
            put("length", st.length.value_se());
            if theta != 0.0 {
                put("minimal_effect", st.minimal_effect.value_se());
            }
            put("sign_weak", st.weak.value_se());
            put("sign_strict", st.strict.value_se());
            put("coverage", st.coverage.value_se());
        }
    }
    Ok(report)
}

/// Per-method totals of a multi-parameter scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub entry: MethodEntry,
    pub rates: ErrorRates,
    /// FCP (`V / max(|S|, 1)`) of every replication, in order.
    pub fcp: Vec<f64>,
    power_weak: Freq,
    power_strict: Freq,
    length: Mean,
    minimal_effect: Mean,
}

impl MethodOutcome {
    fn new(entry: MethodEntry) -> Self {
        MethodOutcome {
            entry,
            rates: ErrorRates::default(),
            fcp: Vec::new(),
            power_weak: Freq::default(),
            power_strict: Freq::default(),
            length: Mean::default(),
            minimal_effect: Mean::default(),
        }
    }

    /// Share of selected non-null parameters whose sign is determined
    /// correctly, strictly or weakly, with its standard error.
    pub fn power_weak(&self) -> (f64, f64) {
        self.power_weak.value_se()
    }

    pub fn power_strict(&self) -> (f64, f64) {
        self.power_strict.value_se()
    }

    /// Mean length over all constructed intervals.
    pub fn length(&self) -> (f64, f64) {
        self.length.value_se()
    }

    /// Mean bound nearer zero on the true side, over selected non-nulls.
    pub fn minimal_effect(&self) -> (f64, f64) {
        self.minimal_effect.value_se()
    }

    fn merge_rep(&mut self, r: &RepOutcome) {
        self.rates.push(r.v, r.s);
        self.fcp.push(r.v as f64 / r.s.max(1) as f64);
        self.power_weak.merge(&r.weak);
        self.power_strict.merge(&r.strict);
        self.length.merge(&r.length);
        self.minimal_effect.merge(&r.minimal_effect);
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RepOutcome {
    v: usize,
    s: usize,
    weak: Freq,
    strict: Freq,
    length: Mean,
    minimal_effect: Mean,
}

fn rep_outcome(
    sample: &Sample,
    selected: &[usize],
    method: &AdjustedMethod<'_>,
) -> Result<RepOutcome> {
    let sel_ys: Vec<f64> = selected.iter().map(|&i| sample.ys[i]).collect();
    let cis = method.intervals(&sel_ys)?;
    let tally = CoverageTally::from_intervals(&sample.thetas, selected, &cis)?;
    let mut out = RepOutcome {
        v: tally.n_noncover,
        s: tally.n_selected,
        ..Default::default()
    };
    for (&i, ci) in selected.iter().zip(&cis) {
        out.length.push(ci.length());
        let theta = sample.thetas[i];
        if theta == 0.0 {
            continue;
        }
        let call = ci.sign_call();
        let (right_strict, right_weak) = if theta > 0.0 {
            (SignCall::StrictPositive, SignCall::WeakPositive)
        } else {
            (SignCall::StrictNegative, SignCall::WeakNegative)
        };
        out.weak.push(call == right_strict || call == right_weak);
        out.strict.push(call == right_strict);
        out.minimal_effect
            .push(if theta > 0.0 { ci.lower } else { -ci.upper });
    }
    Ok(out)
}

/// Runs a scenario: per replication, sample, select, build every method's
/// intervals and tally.
pub fn run_scenario(
    family: &dyn LocationFamily,
    spec: &ScenarioSpec,
) -> Result<Vec<MethodOutcome>> {
    run_scenario_cell(family, spec, 0)
}

fn run_scenario_cell(
    family: &dyn LocationFamily,
    spec: &ScenarioSpec,
    cell: u32,
) -> Result<Vec<MethodOutcome>> {
    let sampler = Sampler::for_cell(spec, cell)?;
    let methods = spec
        .methods
        .iter()
        .map(|e| AdjustedMethod::new(family, e.spec, e.adjustment, spec.m))
        .collect::<Result<Vec<_>>>()?;
    let per_rep = (0..spec.reps as u32)
        .into_par_iter()
        .map(|rep| {
            let sample = sampler.sample(rep);
            let selected = select(&sample.ys, spec.rule);
            methods
                .iter()
                .map(|m| rep_outcome(&sample, &selected, m))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out: Vec<MethodOutcome> = spec
        .methods
        .iter()
        .map(|&e| MethodOutcome::new(e))
        .collect();
    for rep in &per_rep {
        for (o, r) in out.iter_mut().zip(rep) {
            o.merge_rep(r);
        }
    }
    Ok(out)
}

fn push_outcomes(
    report: &mut MetricsReport,
    scenario: &str,
    theta: Option<f64>,
    outcomes: &[MethodOutcome],
) {
    for o in outcomes {
        let label = o.entry.to_string();
        let mut put =
            |metric: &str, (v, se): (f64, f64)| report.push(scenario, theta, &label, metric, v, se);
        if let Some(e) = o.rates.fcr() {
            put("fcr", (e.value, e.se));
        }
        let mfcr = o
            .rates
            .mfcr()
            .map_or((f64::NAN, f64::NAN), |e| (e.value, e.se));
        put("mfcr", mfcr);
        put("power_weak", o.power_weak());
        put("power_strict", o.power_strict());
        put("length", o.length());
        put("minimal_effect", o.minimal_effect());
        let n = o.rates.reps as f64;
        put("mean_selected", (o.rates.sum_s as f64 / n, f64::NAN));
    }
}

/// Grid of proportion-of-non-null scenarios under several correlation models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceGrid {
    #[serde(default)]
    pub id: String,
    pub m: usize,
    pub proportions: Vec<f64>,
    pub thetas: Vec<f64>,
    pub corr_models: Vec<CorrModel>,
    pub rule: SelectionRule,
    pub methods: Vec<MethodEntry>,
    pub reps: usize,
    pub seed: u64,
}

impl DependenceGrid {
    /// Every cell as a scenario, in report order.
    pub fn scenarios(&self) -> Vec<ScenarioSpec> {
        let mut out = Vec::new();
        for corr in &self.corr_models {
            for &pi1 in &self.proportions {
                for &value in &self.thetas {
                    out.push(ScenarioSpec {
                        id: format!("{}/{corr}/pi1={pi1}", self.id),
                        m: self.m,
                        theta_model: ThetaModel::ProportionNonnull { pi1, value },
                        corr_model: *corr,
                        rule: self.rule,
                        methods: self.methods.clone(),
                        reps: self.reps,
                        seed: self.seed,
                    });
                }
            }
        }
        out
    }
}

/// FCR, mFCR, sign power, length and minimal effect for every cell of the
/// grid. Rows carry the common non-null value in the θ column.
pub fn run_dependence_study(
    family: &dyn LocationFamily,
    grid: &DependenceGrid,
) -> Result<MetricsReport> {
    let scenarios = grid.scenarios();
    let outcomes = scenarios
        .par_iter()
        .enumerate()
        .map(|(cell, s)| run_scenario_cell(family, s, cell as u32))
        .collect::<Result<Vec<_>>>()?;
    let mut report = MetricsReport::default();
    for (s, o) in scenarios.iter().zip(&outcomes) {
        let theta = match s.theta_model {
            ThetaModel::ProportionNonnull { value, .. } => Some(value),
            _ => None,
        };
        push_outcomes(&mut report, &s.id, theta, o);
    }
    Ok(report)
}

/// Counts of per-replication FCP values in equal-width bins over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FcpHistogram {
    pub method: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl FcpHistogram {
    pub fn new(method: String, fcp: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        let mut counts = vec![0; bins];
        for &x in fcp {
            let i = ((x * bins as f64) as usize).min(bins - 1);
            counts[i] += 1;
        }
        FcpHistogram {
            method,
            edges,
            counts,
        }
    }
}

/// The two-group scenario: error rates plus the FCP distribution per method.
pub fn run_two_group(
    family: &dyn LocationFamily,
    spec: &ScenarioSpec,
    bins: usize,
) -> Result<(MetricsReport, Vec<FcpHistogram>)> {
    if !matches!(spec.theta_model, ThetaModel::TwoGroup { .. }) {
        return Err(Error::parameter(
            "two-group study needs a two_group theta model",
        ));
    }
    let outcomes = run_scenario(family, spec)?;
    let mut report = MetricsReport::default();
    push_outcomes(&mut report, &spec.id, None, &outcomes);
    let hists = outcomes
        .iter()
        .map(|o| FcpHistogram::new(o.entry.to_string(), &o.fcp, bins))
        .collect();
    Ok((report, hists))
}

/// Smallest `y` giving a strict positive call under PP(r), for each `r`.
/// `c = None` is the marginal setting.
pub fn sweep_inflation(
    family: &dyn LocationFamily,
    alpha: f64,
    c: Option<f64>,
    r_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let setting = c.map_or(Setting::Marginal, |c| Setting::Conditional { c });
    r_grid
        .par_iter()
        .map(|&r| {
            let spec = MethodSpec::new(Method::Pp { r_minus: r }, setting, alpha)?;
            let t = sign_thresholds(&Inverter::new(family, spec)?)?;
            let y = t.positive.ok_or_else(|| {
                Error::Numeric(format!("no positive call below y = 1000 for r = {r}"))
            })?;
            Ok((r, y))
        })
        .collect()
}

/// Curve of the smallest strictly positive `y` against `r`, per setting.
/// The θ column of the report carries `r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default)]
    pub id: String,
    pub alpha: f64,
    /// `None` entries are the marginal setting.
    pub thresholds: Vec<Option<f64>>,
    pub r_grid: Vec<f64>,
}

pub fn run_sweep(family: &dyn LocationFamily, spec: &SweepSpec) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    for &c in &spec.thresholds {
        let label = match c {
            None => "pp marginal".to_string(),
            Some(c) => format!("pp conditional({c})"),
        };
        for (r, y) in sweep_inflation(family, spec.alpha, c, &spec.r_grid)? {
            report.push(&spec.id, Some(r), &label, "min_positive_y", y, 0.0);
        }
    }
    Ok(report)
}

/// Any study, as read from a scenario file. The `study` field selects the
/// kind; the other fields are those of the matching spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case")]
pub enum Study {
    Scenario(ScenarioSpec),
    Comparison(ComparisonSpec),
    Dependence(DependenceGrid),
    TwoGroup(ScenarioSpec),
    Sweep(SweepSpec),
}

impl Study {
    /// Replaces the master seed; sweeps have none.
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Study::Scenario(s) | Study::TwoGroup(s) => s.seed = seed,
            Study::Comparison(s) => s.seed = seed,
            Study::Dependence(s) => s.seed = seed,
            Study::Sweep(_) => {}
        }
    }

    pub fn set_reps(&mut self, reps: usize) {
        match self {
            Study::Scenario(s) | Study::TwoGroup(s) => s.reps = reps,
            Study::Comparison(s) => s.reps = reps,
            Study::Dependence(s) => s.reps = reps,
            Study::Sweep(_) => {}
        }
    }

    /// Runs the study. Two-group runs also return FCP histograms.
    pub fn run(&self, family: &dyn LocationFamily) -> Result<(MetricsReport, Vec<FcpHistogram>)> {
        Ok(match self {
            Study::Scenario(s) => {
                let mut report = MetricsReport::default();
                push_outcomes(&mut report, &s.id, None, &run_scenario(family, s)?);
                (report, Vec::new())
            }
            Study::Comparison(s) => (run_method_comparison(family, s)?, Vec::new()),
            Study::Dependence(g) => (run_dependence_study(family, g)?, Vec::new()),
            Study::TwoGroup(s) => run_two_group(family, s, 20)?,
            Study::Sweep(s) => (run_sweep(family, s)?, Vec::new()),
        })
    }
}

/// Ready-made studies, named after the plots they produce.
pub mod presets {
    use super::*;

    /// `lo, lo + step, ..., hi`, with rounding noise removed.
    pub fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize;
        (0..=n)
            .map(|i| ((lo + i as f64 * step) * 1e9).round() / 1e9)
            .collect()
    }

    fn spec(method: Method, setting: Setting) -> MethodSpec {
        MethodSpec::new(method, setting, 0.05).expect("preset methods are valid")
    }

    /// Shortest, MP(1.3) and PP(1.3), marginal then conditional at 1.96.
    pub fn standard_methods() -> Vec<MethodSpec> {
        let mut out = Vec::new();
        for setting in [Setting::Marginal, Setting::Conditional { c: 1.96 }] {
            for method in [
                Method::Shortest,
                Method::Mp { r: 1.3 },
                Method::Pp { r_minus: 1.3 },
            ] {
                out.push(spec(method, setting));
            }
        }
        out
    }

    /// PP curves for `r` in `1, 1.05, ..., 3`, marginal and at `c = 1.96`.
    pub fn fig3() -> SweepSpec {
        SweepSpec {
            id: "fig3".into(),
            alpha: 0.05,
            thresholds: vec![None, Some(1.96)],
            r_grid: grid(1.0, 3.0, 0.05),
        }
    }

    /// Named preset as a study: `fig3`, `fig4`, `fig5`, `fig7`, `two-group`.
    pub fn by_name(name: &str, reps: Option<usize>, seed: u64) -> Option<Study> {
        Some(match name {
            "fig3" => Study::Sweep(fig3()),
            "fig4" => Study::Comparison(fig4(reps.unwrap_or(1000), seed)),
            "fig5" => Study::Dependence(fig5(reps.unwrap_or(1000), seed)),
            "fig7" => Study::Dependence(fig7(reps.unwrap_or(1000), seed)),
            "two-group" => Study::TwoGroup(two_group(reps.unwrap_or(1000), seed)),
            _ => return None,
        })
    }

    pub const NAMES: [&str; 5] = ["fig3", "fig4", "fig5", "fig7", "two-group"];

    /// Method comparison over `theta in {-4, -3.95, ..., 4}`.
    pub fn fig4(reps: usize, seed: u64) -> ComparisonSpec {
        ComparisonSpec {
            id: "fig4".into(),
            thetas: grid(-4.0, 4.0, 0.05),
            methods: standard_methods(),
            reps,
            seed,
        }
    }

    /// Conditional and BY05-adjusted shortest, MP(1.3) and PP(1.3).
    pub fn selection_methods(c: f64) -> Vec<MethodEntry> {
        let mut out = Vec::new();
        for method in [
            Method::Shortest,
            Method::Mp { r: 1.3 },
            Method::Pp { r_minus: 1.3 },
        ] {
            out.push(MethodEntry::new(
                spec(method, Setting::Conditional { c }),
                Adjustment::None,
            ));
        }
        for method in [
            Method::Shortest,
            Method::Mp { r: 1.3 },
            Method::Pp { r_minus: 1.3 },
        ] {
            out.push(MethodEntry::new(
                spec(method, Setting::Marginal),
                Adjustment::By05,
            ));
        }
        out
    }

    /// m = 20, non-null proportions 0.05 to 0.5, common value -3..3, both
    /// readings of the correlation (constant 0.7 and 0.7^|i-j|).
    pub fn fig5(reps: usize, seed: u64) -> DependenceGrid {
        DependenceGrid {
            id: "fig5".into(),
            m: 20,
            proportions: vec![0.05, 0.1, 0.2, 0.5],
            thetas: grid(-3.0, 3.0, 0.5),
            corr_models: vec![
                CorrModel::Exchangeable { rho: 0.7 },
                CorrModel::Ar1 { rho: 0.7 },
            ],
            rule: SelectionRule::two_sided(1.96).expect("valid"),
            methods: selection_methods(1.96),
            reps,
            seed,
        }
    }

    /// 1, 2, 4 or 10 non-null of 20 under correlation -0.7, 0 and 0.7.
    /// Constant correlation -0.7 is not a valid correlation matrix for
    /// m = 20, so the negative case uses AR(1).
    pub fn fig7(reps: usize, seed: u64) -> DependenceGrid {
        DependenceGrid {
            id: "fig7".into(),
            m: 20,
            proportions: vec![0.05, 0.1, 0.2, 0.5],
            thetas: grid(-3.0, 3.0, 0.5),
            corr_models: vec![
                CorrModel::Ar1 { rho: -0.7 },
                CorrModel::Independent,
                CorrModel::Exchangeable { rho: 0.7 },
            ],
            rule: SelectionRule::two_sided(1.96).expect("valid"),
            methods: selection_methods(1.96),
            reps,
            seed,
        }
    }

    /// m = 1000, 10% non-null with effects from N(0.5, 1), independent.
    pub fn two_group(reps: usize, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            id: "two-group".into(),
            m: 1000,
            theta_model: ThetaModel::TwoGroup {
                pi1: 0.1,
                prior_mean: 0.5,
                prior_sd: 1.0,
            },
            corr_model: CorrModel::Independent,
            rule: SelectionRule::two_sided(1.96).expect("valid"),
            methods: selection_methods(1.96),
            reps,
            seed,
        }
    }
}
