//! Selection, multiplicity adjustment and false coverage accounting.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dist::{selection_prob, LocationFamily, Truncated, TruncationKind, TruncationSpec};
use crate::error::{Error, Result};
use crate::invert::{ConfidenceInterval, Inverter, SignCall};
use crate::regions::{MethodSpec, Setting};
use crate::solve::{check_alpha, check_inflation, find_root, Bracket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    /// Select `|y| > c`.
    TwoSidedThreshold,
    /// Select `y > c`.
    OneSidedThreshold,
}

/// Thresholding rule `S(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionRule {
    pub kind: SelectionKind,
    pub c: f64,
}

impl SelectionRule {
    pub fn new(kind: SelectionKind, c: f64) -> Result<Self> {
        let rule = SelectionRule { kind, c };
        rule.validate()?;
        Ok(rule)
    }

    pub fn two_sided(c: f64) -> Result<Self> {
        Self::new(SelectionKind::TwoSidedThreshold, c)
    }

    pub fn one_sided(c: f64) -> Result<Self> {
        Self::new(SelectionKind::OneSidedThreshold, c)
    }

    pub fn validate(&self) -> Result<()> {
        self.truncation().map(|_| ())
    }

    pub fn selects(&self, y: f64) -> bool {
        match self.kind {
            SelectionKind::TwoSidedThreshold => y.abs() > self.c,
            SelectionKind::OneSidedThreshold => y > self.c,
        }
    }

    /// The conditioning event matching this rule.
    pub fn truncation(&self) -> Result<TruncationSpec> {
        let kind = match self.kind {
            SelectionKind::TwoSidedThreshold => TruncationKind::TwoSided,
            SelectionKind::OneSidedThreshold => TruncationKind::UpperOneSided,
        };
        TruncationSpec::new(kind, self.c)
    }

    /// `P(i selected)` when `y_i` has location `theta`.
    pub fn probability(&self, family: &dyn LocationFamily, theta: f64) -> f64 {
        match self.kind {
            SelectionKind::TwoSidedThreshold => selection_prob(family, theta, self.c),
            SelectionKind::OneSidedThreshold => family.sf0(self.c - theta),
        }
    }
}

/// Zero-based indices of the selected estimates, in input order.
pub fn select(ys: &[f64], rule: SelectionRule) -> Vec<usize> {
    ys.iter()
        .enumerate()
        .filter(|(_, &y)| rule.selects(y))
        .map(|(i, _)| i)
        .collect()
}

/// Per-interval level `k alpha / m` after selecting `k` of `m`.
pub fn by05_level(k: usize, m: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if k == 0 {
        return Err(Error::NothingSelected);
    }
    if k > m {
        return Err(Error::parameter(format!("selected {k} of only {m}")));
    }
    Ok(if k == m {
        alpha
    } else {
        alpha * (k as f64 / m as f64)
    })
}

pub fn bonferroni_level(m: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(Error::parameter("m must be at least 1"));
    }
    Ok(alpha / m as f64)
}

/// One-sided Bonferroni z threshold `q(alpha / m)`.
pub fn bonferroni_threshold(family: &dyn LocationFamily, m: usize, alpha: f64) -> Result<f64> {
    Ok(family.upper_quantile(bonferroni_level(m, alpha)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Adjustment {
    #[default]
    None,
    By05,
    Bonferroni,
}

impl Adjustment {
    pub fn as_str(self) -> &'static str {
        match self {
            Adjustment::None => "none",
            Adjustment::By05 => "by05",
            Adjustment::Bonferroni => "bonferroni",
        }
    }
}

impl std::fmt::Display for Adjustment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A method plus adjustment, ready to produce intervals for many selections.
///
/// BY05 inverters are built lazily, one per selection count.
pub struct AdjustedMethod<'a> {
    family: &'a dyn LocationFamily,
    spec: MethodSpec,
    adjustment: Adjustment,
    m: usize,
    cache: Vec<OnceLock<Inverter<'a>>>,
}

impl std::fmt::Debug for AdjustedMethod<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AdjustedMethod")
            .field("spec", &self.spec)
            .field("adjustment", &self.adjustment)
            .field("m", &self.m)
            .finish()
    }
}

impl<'a> AdjustedMethod<'a> {
    pub fn new(
        family: &'a dyn LocationFamily,
        spec: MethodSpec,
        adjustment: Adjustment,
        m: usize,
    ) -> Result<Self> {
        spec.validate()?;
        if m == 0 {
            return Err(Error::parameter("m must be at least 1"));
        }
        if adjustment != Adjustment::None && spec.setting != Setting::Marginal {
            return Err(Error::parameter(format!(
                "{adjustment} adjustment applies to marginal methods only, got {spec}"
            )));
        }
        let slots = if adjustment == Adjustment::By05 { m } else { 1 };
        let cache = (0..slots).map(|_| OnceLock::new()).collect();
        let me = AdjustedMethod {
            family,
            spec,
            adjustment,
            m,
            cache,
        };
        if adjustment != Adjustment::By05 {
            me.inverter(1)?;
        }
        Ok(me)
    }

    pub fn spec(&self) -> MethodSpec {
        self.spec
    }

    pub fn adjustment(&self) -> Adjustment {
        self.adjustment
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Level used for each interval when `k` are selected.
    pub fn level(&self, k: usize) -> Result<f64> {
        match self.adjustment {
            Adjustment::None => Ok(self.spec.alpha),
            Adjustment::By05 => by05_level(k, self.m, self.spec.alpha),
            Adjustment::Bonferroni => bonferroni_level(self.m, self.spec.alpha),
        }
    }

    fn inverter(&self, k: usize) -> Result<&Inverter<'a>> {
        let slot = match self.adjustment {
            Adjustment::By05 => {
                if k == 0 || k > self.m {
                    return Err(Error::parameter(format!("selected {k} of {}", self.m)));
                }
                k - 1
            }
            _ => 0,
        };
        if let Some(inv) = self.cache[slot].get() {
            return Ok(inv);
        }
        let spec = self.spec.with_alpha(self.level(k)?)?;
        let inv = Inverter::new(self.family, spec)?;
        Ok(self.cache[slot].get_or_init(|| inv))
    }

    /// Intervals for the selected estimates; `k` is their number.
    pub fn intervals(&self, selected_ys: &[f64]) -> Result<Vec<ConfidenceInterval>> {
        let k = selected_ys.len();
        if k == 0 {
            return Ok(Vec::new());
        }
        let inv = self.inverter(k)?;
        selected_ys.iter().map(|&y| inv.interval(y)).collect()
    }
}

/// One interval per selected estimate, at the adjusted level.
///
/// `selected_ys` holds only the selected estimates and `m` is the number of
/// parameters considered before selection.
pub fn adjusted_cis(
    family: &dyn LocationFamily,
    selected_ys: &[f64],
    spec: MethodSpec,
    adjustment: Adjustment,
    m: usize,
) -> Result<Vec<ConfidenceInterval>> {
    AdjustedMethod::new(family, spec, adjustment, m)?.intervals(selected_ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamOutcome {
    pub selected: bool,
    /// Meaningful only when selected.
    pub covered: bool,
    pub sign_call: SignCall,
}

/// Outcome of one replication: `V`, `|S|` and the per-parameter detail.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoverageTally {
    pub n_selected: usize,
    pub n_noncover: usize,
    pub per_parameter: Vec<ParamOutcome>,
}

impl CoverageTally {
    /// Tally for `m = thetas.len()` parameters with `cis[j]` built for
    /// parameter `selected[j]`.
    pub fn from_intervals(
        thetas: &[f64],
        selected: &[usize],
        cis: &[ConfidenceInterval],
    ) -> Result<Self> {
        if selected.len() != cis.len() {
            return Err(Error::parameter(
                "one interval per selected index is required",
            ));
        }
        let mut per_parameter = vec![
            ParamOutcome {
                selected: false,
                covered: false,
                sign_call: SignCall::Undetermined,
            };
            thetas.len()
        ];
        let mut n_noncover = 0;
        for (&i, ci) in selected.iter().zip(cis) {
            let theta = *thetas
                .get(i)
                .ok_or_else(|| Error::parameter(format!("index {i} out of range")))?;
            let covered = ci.contains(theta);
            n_noncover += usize::from(!covered);
            per_parameter[i] = ParamOutcome {
                selected: true,
                covered,
                sign_call: ci.sign_call(),
            };
        }
        Ok(CoverageTally {
            n_selected: selected.len(),
            n_noncover,
            per_parameter,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fcp {
    /// `V / |S|`, undefined when nothing is selected.
    pub proportion: Option<f64>,
    /// `V / max(|S|, 1)`, the quantity averaged by the FCR.
    pub by_convention: f64,
}

pub fn fcr_fcp(tally: &CoverageTally) -> Fcp {
    let v = tally.n_noncover as f64;
    let s = tally.n_selected;
    Fcp {
        proportion: (s > 0).then(|| v / s as f64),
        by_convention: v / s.max(1) as f64,
    }
}

/// `sum V / sum |S|` over replications, `None` when nothing was ever selected.
pub fn mfcr(tallies: &[CoverageTally]) -> Option<f64> {
    let v: usize = tallies.iter().map(|t| t.n_noncover).sum();
    let s: usize = tallies.iter().map(|t| t.n_selected).sum();
    (s > 0).then(|| v as f64 / s as f64)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Running FCR / mFCR sums over replications.
///
/// Counts are integers, so merging is exact; the FCP sums are floats and
/// are exact only when replications are pushed in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorRates {
    pub reps: u64,
    pub sum_v: u64,
    pub sum_s: u64,
    sum_v2: u64,
    sum_s2: u64,
    sum_vs: u64,
    sum_fcp: f64,
    sum_fcp2: f64,
}

impl ErrorRates {
    pub fn push(&mut self, n_noncover: usize, n_selected: usize) {
        let (v, s) = (n_noncover as u64, n_selected as u64);
        let fcp = v as f64 / s.max(1) as f64;
        self.reps += 1;
        self.sum_v += v;
        self.sum_s += s;
        self.sum_v2 += v * v;
        self.sum_s2 += s * s;
        self.sum_vs += v * s;
        self.sum_fcp += fcp;
        self.sum_fcp2 += fcp * fcp;
    }

    pub fn push_tally(&mut self, tally: &CoverageTally) {
        self.push(tally.n_noncover, tally.n_selected);
    }

    pub fn merge(&mut self, other: &ErrorRates) {
        self.reps += other.reps;
        self.sum_v += other.sum_v;
        self.sum_s += other.sum_s;
        self.sum_v2 += other.sum_v2;
        self.sum_s2 += other.sum_s2;
        self.sum_vs += other.sum_vs;
        self.sum_fcp += other.sum_fcp;
        self.sum_fcp2 += other.sum_fcp2;
    }

    pub fn fcr(&self) -> Option<Estimate> {
        if self.reps == 0 {
            return None;
        }
        let n = self.reps as f64;
        let mean = self.sum_fcp / n;
        let var = (self.sum_fcp2 / n - mean * mean).max(0.0);
        Some(Estimate {
            value: mean,
            se: (var / n).sqrt(),
        })
    }

    /// Ratio of means with a delta-method standard error.
    pub fn mfcr(&self) -> Option<Estimate> {
        if self.sum_s == 0 {
            return None;
        }
        let n = self.reps as f64;
        let vbar = self.sum_v as f64 / n;
        let sbar = self.sum_s as f64 / n;
        let ratio = vbar / sbar;
        let var_v = self.sum_v2 as f64 / n - vbar * vbar;
        let var_s = self.sum_s2 as f64 / n - sbar * sbar;
        let cov = self.sum_vs as f64 / n - vbar * sbar;
        let var = (var_v - 2.0 * ratio * cov + ratio * ratio * var_s).max(0.0) / (sbar * sbar);
        Some(Estimate {
            value: ratio,
            se: (var / n).sqrt(),
        })
    }
}

/// Tail split used by [`proposition_check`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailSplit {
    /// `alpha / 2` in each tail.
    #[default]
    Symmetric,
    Explicit {
        beta_minus: f64,
        beta_plus: f64,
    },
    /// Split of a PP(r_minus) region at zero, solved separately for the
    /// conditional and the BY05 region.
    Pp {
        r_minus: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains_interval(&self, other: &Interval, tol: f64) -> bool {
        self.lower <= other.lower + tol && other.upper <= self.upper + tol
    }
}

/// Conditional versus BY05 acceptance regions at `theta = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub c: f64,
    pub m: usize,
    pub alpha: f64,
    /// Null selection probability `P(|Y - theta| > c)`.
    pub t0: f64,
    /// `t0 < 1/m`.
    pub condition: bool,
    /// Upper tail mass of the conditional region.
    pub conditional_beta_plus: f64,
    /// Upper tail mass of the BY05 regions.
    pub by05_beta_plus: f64,
    /// Hull of the conditional region.
    pub conditional: Interval,
    /// BY05 region with one selection, the widest it gets.
    pub by05_worst: Interval,
    /// BY05 region at `k/m = t0`.
    pub by05_limit: Interval,
    /// `conditional` contains `by05_worst`.
    pub conditional_dominates: bool,
}

/// Upper tail mass `b` solving
/// `q(b s) + q((alpha - b) s) = 2 r q(alpha s / 2) - 2 c (r - 1)`,
/// the root with `b >= alpha / 2`.
fn pp_split(family: &dyn LocationFamily, alpha: f64, scale: f64, r: f64, c: f64) -> Result<f64> {
    let half = 0.5 * alpha;
    if r == 1.0 {
        return Ok(half);
    }
    let target = 2.0 * r * family.upper_quantile(half * scale) - 2.0 * c * (r - 1.0);
    let g = |b: f64| {
        family.upper_quantile(b * scale) + family.upper_quantile((alpha - b) * scale) - target
    };
    let mut d = 0.5 * half;
    while g(alpha - d) <= 0.0 {
        d *= 0.5;
        if d < 1e-300 {
            return Err(Error::Numeric("pp split has no bracket".into()));
        }
    }
    Ok(find_root(g, Bracket::new(half, alpha - d), 1e-15)?)
}

fn two_tail(family: &dyn LocationFamily, beta_minus: f64, beta_plus: f64) -> Interval {
    Interval {
        lower: -family.upper_quantile(beta_minus),
        upper: family.upper_quantile(beta_plus),
    }
}

/// Compares the conditional region at zero with the BY05-adjusted one under
/// two-sided selection at `c` among `m` parameters.
pub fn proposition_check(
    family: &dyn LocationFamily,
    c: f64,
    m: usize,
    alpha: f64,
    split: TailSplit,
) -> Result<PropositionReport> {
    check_alpha(alpha)?;
    if m == 0 {
        return Err(Error::parameter("m must be at least 1"));
    }
    let trunc = Truncated::new(family, 0.0, TruncationSpec::two_sided(c)?)?;
    let t0 = trunc.selection_prob();
    let inv_m = 1.0 / m as f64;
    let (cond_plus, by_plus, by_plus_worst) = match split {
        TailSplit::Symmetric => (0.5 * alpha, 0.5 * alpha, 0.5 * alpha),
        TailSplit::Explicit {
            beta_minus,
            beta_plus,
        } => {
            if !(beta_minus > 0.0 && beta_plus > 0.0)
                || (beta_minus + beta_plus - alpha).abs() > 1e-12
            {
                return Err(Error::parameter(
                    "tail split must be positive and sum to alpha",
                ));
            }
            (beta_plus, beta_plus, beta_plus)
        }
        TailSplit::Pp { r_minus } => {
            check_inflation(r_minus)?;
            (
                pp_split(family, alpha, t0, r_minus, c)?,
                pp_split(family, alpha, t0, r_minus, 0.0)?,
                pp_split(family, alpha, inv_m, r_minus, 0.0)?,
            )
        }
    };
    let conditional = Interval {
        lower: trunc.quantile(alpha - cond_plus),
        upper: trunc.upper_quantile(cond_plus),
    };
    let by05_worst = two_tail(
        family,
        (alpha - by_plus_worst) * inv_m,
        by_plus_worst * inv_m,
    );
    let by05_limit = two_tail(family, (alpha - by_plus) * t0, by_plus * t0);
    Ok(PropositionReport {
        c,
        m,
        alpha,
        t0,
        condition: t0 < inv_m,
        conditional_beta_plus: cond_plus,
        by05_beta_plus: by_plus,
        conditional,
        by05_worst,
        by05_limit,
        conditional_dominates: conditional.contains_interval(&by05_worst, 1e-9),
    })
}
