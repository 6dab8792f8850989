//! Batch interval computation for tables of estimates with standard errors,
//! and the GWAS-style report built on it.

use std::io::Read;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{LocationFamily, Truncated};
use crate::error::{Error, Result};
use crate::invert::{ConfidenceInterval, SignCall};
use crate::multiplicity::{bonferroni_threshold, AdjustedMethod, Adjustment, SelectionRule};
use crate::regions::{Method, MethodSpec, Setting};
use crate::simulate::{stream_rng, MethodEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    Identity,
    /// Report `exp` of the endpoints, e.g. odds ratios from log odds ratios.
    Exp,
}

impl Transform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Exp => x.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub id: String,
    pub estimate: f64,
    #[serde(default = "unit_se")]
    pub se: f64,
}

fn unit_se() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: String,
    estimate: String,
    se: Option<String>,
}

/// Reads `id,estimate[,se]`. With `require_se` a missing `se` column is an
/// error; otherwise it defaults to 1.
pub fn read_batch<R: Read>(input: R, require_se: bool) -> Result<Vec<BatchRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Input {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    for col in ["id", "estimate"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Input {
                line: 1,
                message: format!("missing column `{col}`"),
            });
        }
    }
    if require_se && !headers.iter().any(|h| h == "se") {
        return Err(Error::Input {
            line: 1,
            message: "missing column `se`".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize::<RawRecord>() {
        let line = |e: &csv::Error| e.position().map_or(0, |p| p.line());
        let raw = rec.map_err(|e| Error::Input {
            line: line(&e),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        let bad = |message: String| Error::Input { line, message };
        let estimate: f64 = raw
            .estimate
            .parse()
            .map_err(|_| bad(format!("estimate `{}` is not a number", raw.estimate)))?;
        if !estimate.is_finite() {
            return Err(bad("estimate must be finite".into()));
        }
        let se: f64 = match raw.se.as_deref() {
            None | Some("") if !require_se => 1.0,
            None | Some("") => return Err(bad("se is required".into())),
            Some(s) => s
                .parse()
                .map_err(|_| bad(format!("se `{s}` is not a number")))?,
        };
        if !(se > 0.0 && se.is_finite()) {
            return Err(bad(format!("se must be positive, got {se}")));
        }
        out.push(BatchRecord {
            id: raw.id,
            estimate,
            se,
        });
    }
    Ok(out)
}

/// How a batch is turned into intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub entry: MethodEntry,
    /// Threshold on `|z|` for reporting. Conditional methods select at
    /// their own `c` and ignore this.
    pub select_c: Option<f64>,
    /// Parameters considered before selection; defaults to the batch size.
    pub m: Option<usize>,
    #[serde(default)]
    pub transform: Transform,
}

/// One output line of a batch run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRow {
    pub id: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
    pub sign: SignCall,
    /// Per-interval error level after adjustment.
    pub level: f64,
}

impl BatchRow {
    fn new(rec: &BatchRecord, z: f64, ci: &ConfidenceInterval, level: f64, t: Transform) -> Self {
        BatchRow {
            id: rec.id.clone(),
            estimate: rec.estimate,
            se: rec.se,
            z,
            lower: t.apply(ci.lower * rec.se),
            upper: t.apply(ci.upper * rec.se),
            lower_closed: ci.lower_closed,
            upper_closed: ci.upper_closed,
            sign: ci.sign_call(),
            level,
        }
    }
}

fn selection_threshold(cfg: &BatchConfig) -> Option<f64> {
    match cfg.entry.spec.setting {
        Setting::Conditional { c } => Some(c),
        Setting::Marginal => cfg.select_c,
    }
}

/// Standardizes, selects, inverts on the z scale and maps back, keeping
/// input order. Sign calls refer to the untransformed scale.
pub fn run_batch(
    family: &dyn LocationFamily,
    records: &[BatchRecord],
    cfg: &BatchConfig,
) -> Result<Vec<BatchRow>> {
    let m = cfg.m.unwrap_or(records.len());
    if m < records.len() {
        return Err(Error::parameter(format!(
            "m = {m} is smaller than the {} rows given",
            records.len()
        )));
    }
    let method = AdjustedMethod::new(family, cfg.entry.spec, cfg.entry.adjustment, m.max(1))?;
    let zs: Vec<f64> = records.iter().map(|r| r.estimate / r.se).collect();
    let rule = match (cfg.entry.spec.method, selection_threshold(cfg)) {
        (_, None) => None,
        (Method::OneSidedCond, Some(c)) => Some(SelectionRule::one_sided(c)?),
        (_, Some(c)) => Some(SelectionRule::two_sided(c)?),
    };
    let picked: Vec<usize> = (0..records.len())
        .filter(|&i| rule.is_none_or(|r| r.selects(zs[i])))
        .collect();
    let sel_z: Vec<f64> = picked.iter().map(|&i| zs[i]).collect();
    let cis = method.intervals(&sel_z)?;
    let level = if picked.is_empty() {
        cfg.entry.spec.alpha
    } else {
        method.level(picked.len())?
    };
    Ok(picked
        .iter()
        .zip(&cis)
        .map(|(&i, ci)| BatchRow::new(&records[i], zs[i], ci, level, cfg.transform))
        .collect())
}

/// Averages over the intervals of one method, as in a GWAS summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GwasSummary {
    /// `conditional`, `by05` or `unadjusted`.
    pub kind: String,
    pub method: String,
    pub sign_determined: usize,
    pub mean_length: f64,
    pub mean_lower: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GwasReport {
    pub m: usize,
    pub alpha: f64,
    /// Bonferroni selection threshold on `|z|`.
    pub c: f64,
    pub n_selected: usize,
    /// `(kind, method, row)` for every selected SNP and method.
    pub rows: Vec<(String, String, BatchRow)>,
    pub summary: Vec<GwasSummary>,
}

/// The six method/adjustment combinations of the GWAS table plus the
/// unadjusted shortest row, keyed by `(kind, method label)`.
pub fn gwas_entries(c: f64, alpha: f64, r: f64) -> Result<Vec<(String, String, MethodEntry)>> {
    let methods = [
        ("mp", Method::Mp { r }),
        ("pp", Method::Pp { r_minus: r }),
        ("shortest", Method::Shortest),
    ];
    let mut out = Vec::new();
    for (name, method) in methods {
        let spec = MethodSpec::conditional(method, c, alpha)?;
        out.push((
            "conditional".into(),
            label(name, r),
            MethodEntry::new(spec, Adjustment::None),
        ));
    }
    for (name, method) in methods {
        let spec = MethodSpec::marginal(method, alpha)?;
        out.push((
            "by05".into(),
            label(name, r),
            MethodEntry::new(spec, Adjustment::By05),
        ));
    }
    let plain = MethodSpec::marginal(Method::Shortest, alpha)?;
    out.push((
        "unadjusted".into(),
        "shortest".into(),
        MethodEntry::new(plain, Adjustment::None),
    ));
    Ok(out)
}

fn label(name: &str, r: f64) -> String {
    if name == "shortest" {
        name.into()
    } else {
        format!("{name}({r})")
    }
}

/// Bonferroni selection among `m` tests, then conditional and BY05
/// intervals for MP(r), PP(r) and shortest, plus unadjusted shortest.
pub fn gwas_report(
    family: &dyn LocationFamily,
    records: &[BatchRecord],
    m: usize,
    alpha: f64,
    r: f64,
    transform: Transform,
) -> Result<GwasReport> {
    let c = bonferroni_threshold(family, m, alpha)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut n_selected = 0;
    for (kind, method, entry) in gwas_entries(c, alpha, r)? {
        let cfg = BatchConfig {
            entry,
            select_c: Some(c),
            m: Some(m),
            transform,
        };
        let out = run_batch(family, records, &cfg)?;
        n_selected = out.len();
        let n = out.len().max(1) as f64;
        summary.push(GwasSummary {
            kind: kind.clone(),
            method: method.clone(),
            sign_determined: out.iter().filter(|r| r.sign.is_determined()).count(),
            mean_length: out.iter().map(|r| r.upper - r.lower).sum::<f64>() / n,
            mean_lower: out.iter().map(|r| r.lower).sum::<f64>() / n,
        });
        rows.extend(
            out.into_iter()
                .map(|row| (kind.clone(), method.clone(), row)),
        );
    }
    Ok(GwasReport {
        m,
        alpha,
        c,
        n_selected,
        rows,
        summary,
    })
}

/// Known effect behind a synthetic SNP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    /// True log odds ratio.
    pub effect: f64,
    pub se: f64,
}

/// Reads `id,effect,se`.
pub fn read_truth<R: Read>(input: R) -> Result<Vec<TruthRecord>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input)
        .deserialize()
        .map(|r| {
            r.map_err(|e: csv::Error| Error::Input {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Draws each estimate from its law given `|z| > c`, so every row of the
/// result is selected.
pub fn synthetic_selected(
    family: &dyn LocationFamily,
    truth: &[TruthRecord],
    c: f64,
    seed: u64,
    rep: u32,
) -> Result<Vec<BatchRecord>> {
    let rule = SelectionRule::two_sided(c)?.truncation()?;
    truth
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let trunc = Truncated::new(family, t.effect / t.se, rule)?;
            let u: f64 = stream_rng(seed, i as u32, rep).random_range(f64::EPSILON..1.0);
            Ok(BatchRecord {
                id: t.id.clone(),
                estimate: trunc.quantile(u) * t.se,
                se: t.se,
            })
        })
        .collect()
}
