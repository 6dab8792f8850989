//! Acceptance regions for every method and setting.
//!
//! A region at `theta` is described by its hull `(lower, upper)`; for
//! conditional methods the part inside `[-c, c]` is removed. The θ-axis is cut
//! into [`Piece`]s, each carrying one closed-form or solved branch, on which
//! both hull bounds are continuous. Marginal bounds are nondecreasing in θ.
//! Two-sided conditional bounds are not: near the θ where the region stops
//! straddling the gap, the upper bound rises, dips and rises again (and the
//! lower bound mirrors this). [`RegionFamily::turns`] locates those turning
//! points so inversion can work on monotone stretches.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dist::{LocationFamily, Truncated, TruncationKind, TruncationSpec};
use crate::error::{Error, Result};
use crate::solve::{
    self, check_alpha, check_inflation, inflated_bounds, region_measure, shortest_bounds,
    solve_beta, BoundPair, Side, ThresholdKind,
};

/// Interval construction rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Shortest,
    /// Modified Pratt with inflation factor `r`.
    Mp {
        r: f64,
    },
    /// Positive-preferring: inflated toward negative values for `theta <= 0`.
    Pp {
        r_minus: f64,
    },
    /// Negative-preferring, the mirror image of `Pp`.
    Np {
        r_minus: f64,
    },
    /// Fixed tail split: `beta_minus` below the region, `beta_plus` above.
    Equivariant {
        beta_minus: f64,
        beta_plus: f64,
    },
    /// Shortest region for the law of `Y` given `Y > c`.
    OneSidedCond,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Setting {
    Marginal,
    /// Conditional on selection with threshold `c`.
    Conditional {
        c: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub method: Method,
    pub setting: Setting,
    pub alpha: f64,
}

impl MethodSpec {
    pub fn new(method: Method, setting: Setting, alpha: f64) -> Result<Self> {
        let spec = MethodSpec {
            method,
            setting,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn marginal(method: Method, alpha: f64) -> Result<Self> {
        Self::new(method, Setting::Marginal, alpha)
    }

    pub fn conditional(method: Method, c: f64, alpha: f64) -> Result<Self> {
        Self::new(method, Setting::Conditional { c }, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        match self.method {
            Method::Shortest | Method::OneSidedCond => {}
            Method::Mp { r } | Method::Pp { r_minus: r } | Method::Np { r_minus: r } => {
                check_inflation(r)?
            }
            Method::Equivariant {
                beta_minus,
                beta_plus,
            } => {
                if !(beta_minus > 0.0 && beta_plus > 0.0)
                    || (beta_minus + beta_plus - self.alpha).abs() > 1e-12
                {
                    return Err(Error::parameter(format!(
                        "tail split ({beta_minus}, {beta_plus}) must be positive and sum to alpha"
                    )));
                }
                if self.setting != Setting::Marginal {
                    return Err(Error::parameter(
                        "the equivariant split is only defined in the marginal setting",
                    ));
                }
            }
        }
        match self.setting {
            Setting::Marginal => {
                if self.method == Method::OneSidedCond {
                    return Err(Error::parameter(
                        "one-sided conditional method needs a conditional setting",
                    ));
                }
            }
            Setting::Conditional { c } => {
                TruncationSpec::two_sided(c)?;
            }
        }
        Ok(())
    }

    /// The same method at another level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(self.method, self.setting, alpha)
    }

    /// The selection event the method conditions on, if any.
    pub fn truncation(&self) -> Option<TruncationSpec> {
        match self.setting {
            Setting::Marginal => None,
            Setting::Conditional { c } => Some(TruncationSpec {
                kind: if self.method == Method::OneSidedCond {
                    TruncationKind::UpperOneSided
                } else {
                    TruncationKind::TwoSided
                },
                c,
            }),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Method::Shortest => write!(f, "shortest"),
            Method::Mp { r } => write!(f, "mp({r})"),
            Method::Pp { r_minus } => write!(f, "pp({r_minus})"),
            Method::Np { r_minus } => write!(f, "np({r_minus})"),
            Method::Equivariant {
                beta_minus,
                beta_plus,
            } => write!(f, "equivariant({beta_minus:.6},{beta_plus:.6})"),
            Method::OneSidedCond => write!(f, "one_sided"),
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Setting::Marginal => write!(f, "marginal"),
            Setting::Conditional { c } => write!(f, "conditional({c})"),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.method, self.setting)
    }
}

/// Up to two disjoint open intervals of `y` values accepted at `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceRegion {
    pub intervals: Vec<(f64, f64)>,
    pub theta: f64,
    pub level: f64,
    pub method: MethodSpec,
}

impl AcceptanceRegion {
    fn from_bounds(b: BoundPair, theta: f64, method: MethodSpec) -> Self {
        let intervals = match method.truncation() {
            Some(t) if t.kind == TruncationKind::TwoSided && t.c > 0.0 => {
                let c = t.c;
                if b.lower < -c && b.upper > c {
                    vec![(b.lower, -c), (c, b.upper)]
                } else {
                    vec![(b.lower, b.upper)]
                }
            }
            _ => vec![(b.lower, b.upper)],
        };
        AcceptanceRegion {
            intervals,
            theta,
            level: 1.0 - method.alpha,
            method,
        }
    }

    pub fn lower(&self) -> f64 {
        self.intervals[0].0
    }

    pub fn upper(&self) -> f64 {
        self.intervals[self.intervals.len() - 1].1
    }

    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo < y && y < hi)
    }

    /// Total Lebesgue measure of the region.
    pub fn length(&self) -> f64 {
        self.intervals.iter().map(|&(lo, hi)| hi - lo).sum()
    }

    /// Probability of the region under the method's law at `theta`
    /// (conditional on selection where the method conditions).
    pub fn probability(&self, family: &dyn LocationFamily) -> Result<f64> {
        match self.method.truncation() {
            None => Ok(self
                .intervals
                .iter()
                .map(|&(lo, hi)| family.cdf0(hi - self.theta) - family.cdf0(lo - self.theta))
                .sum()),
            Some(spec) => {
                let t = Truncated::new(family, self.theta, spec)?;
                Ok(self
                    .intervals
                    .iter()
                    .map(|&(lo, hi)| t.mass_between(lo, hi))
                    .sum())
            }
        }
    }

    /// The region reflected through the origin, `-A`.
    pub fn mirrored(&self) -> Self {
        let intervals = self
            .intervals
            .iter()
            .rev()
            .map(|&(lo, hi)| (-hi, -lo))
            .collect();
        AcceptanceRegion {
            intervals,
            theta: -self.theta,
            level: self.level,
            method: self.method,
        }
    }
}

/// How the hull bounds are computed on a piece.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Branch {
    Shortest,
    /// Marginal `(theta - down, theta + up)`.
    Shifted {
        down: f64,
        up: f64,
    },
    /// Conditional region of `r` times the shortest measure.
    Inflated {
        side: Side,
        r: f64,
    },
}

/// A stretch of the θ-axis on which one branch applies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
    pub(crate) branch: Branch,
}

impl Piece {
    fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool, branch: Branch) -> Self {
        Piece {
            lo,
            hi,
            lo_closed,
            hi_closed,
            branch,
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        (theta > self.lo || (self.lo_closed && theta == self.lo))
            && (theta < self.hi || (self.hi_closed && theta == self.hi))
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    fn mirrored(&self) -> Self {
        Piece {
            lo: -self.hi,
            hi: -self.lo,
            lo_closed: self.hi_closed,
            hi_closed: self.lo_closed,
            branch: self.branch,
        }
    }
}

/// A method prepared for repeated evaluation: tail splits and regime
/// thresholds are solved once.
pub struct RegionFamily<'a> {
    family: &'a dyn LocationFamily,
    spec: MethodSpec,
    trunc: Option<TruncationSpec>,
    pieces: Vec<Piece>,
    /// Pieces and bounds are those of the mirrored method.
    mirror: bool,
    half: f64,
    threshold: Option<f64>,
    turns: OnceLock<Vec<Turns>>,
}

/// Interior θ values of a piece where a hull bound changes direction,
/// ascending.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Turns {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Grid step of the turning-point scan. The dips found so far are at least
/// 0.03 wide.
const TURN_STEP: f64 = 0.01;
/// The scan covers `|theta| <= c + TURN_MARGIN`; beyond it truncation on the
/// far side is negligible and the bounds are monotone.
const TURN_MARGIN: f64 = 6.0;

/// Extremum of `f` on `[a, b]` by golden-section search; `sign = 1` finds a
/// maximum, `-1` a minimum.
fn golden_extremum(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    sign: f64,
) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = sign * f(x1)?;
    let mut f2 = sign * f(x2)?;
    while b - a > 1e-10 * (1.0 + a.abs()) {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = sign * f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = sign * f(x2)?;
        }
    }
    Ok(0.5 * (a + b))
}

/// Turning points of `f` on the grid `ts`, refined.
fn turning_points(mut f: impl FnMut(f64) -> Result<f64>, ts: &[f64]) -> Result<Vec<f64>> {
    let vals = ts.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    // Direction and end index of the last step that was not flat.
    let mut last: Option<(f64, usize)> = None;
    for i in 1..vals.len() {
        let d = vals[i] - vals[i - 1];
        if d.abs() <= 1e-10 * (1.0 + vals[i].abs()) {
            continue;
        }
        if let Some((dir, j)) = last {
            if d.signum() != dir {
                out.push(golden_extremum(&mut f, ts[j - 1], ts[i], dir)?);
            }
        }
        last = Some((d.signum(), i));
    }
    Ok(out)
}

impl fmt::Debug for RegionFamily<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RegionFamily")
            .field("spec", &self.spec)
            .field("pieces", &self.pieces)
            .field("threshold", &self.threshold)
            .finish()
    }
}

const ALL: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

impl<'a> RegionFamily<'a> {
    pub fn new(family: &'a dyn LocationFamily, spec: MethodSpec) -> Result<Self> {
        spec.validate()?;
        if !family.is_symmetric() && spec.method != Method::Shortest {
            return Err(Error::parameter(
                "inflated and direction-preferring regions need a symmetric family",
            ));
        }
        let alpha = spec.alpha;
        let half = family.upper_quantile(0.5 * alpha);
        let trunc = spec.truncation();
        let whole = |b| vec![Piece::new(ALL.0, ALL.1, false, false, b)];
        let split_at_zero = |neg, pos| {
            vec![
                Piece::new(f64::NEG_INFINITY, 0.0, false, false, neg),
                Piece::new(0.0, 0.0, true, true, Branch::Shortest),
                Piece::new(0.0, f64::INFINITY, false, false, pos),
            ]
        };
        let mut threshold = None;
        let (method, mirror) = match spec.method {
            Method::Np { r_minus } => (Method::Pp { r_minus }, true),
            m => (m, false),
        };
        let pieces = match (method, trunc) {
            (Method::Shortest, _) | (Method::OneSidedCond, _) => whole(Branch::Shortest),
            (
                Method::Equivariant {
                    beta_minus,
                    beta_plus,
                },
                _,
            ) => whole(Branch::Shifted {
                down: family.upper_quantile(beta_minus),
                up: family.upper_quantile(beta_plus),
            }),
            (Method::Mp { r }, None) => {
                let s = solve_beta(family, alpha, r)?;
                let wide = family.upper_quantile(s.complement);
                let narrow = family.upper_quantile(s.beta);
                split_at_zero(
                    Branch::Shifted {
                        down: wide,
                        up: narrow,
                    },
                    Branch::Shifted {
                        down: narrow,
                        up: wide,
                    },
                )
            }
            (Method::Mp { r }, Some(_)) => split_at_zero(
                Branch::Inflated {
                    side: Side::Lower,
                    r,
                },
                Branch::Inflated {
                    side: Side::Upper,
                    r,
                },
            ),
            (Method::Pp { r_minus }, None) => {
                let s = solve_beta(family, alpha, r_minus)?;
                threshold = Some(-half);
                vec![
                    Piece::new(f64::NEG_INFINITY, -half, false, true, Branch::Shortest),
                    Piece::new(
                        -half,
                        0.0,
                        false,
                        true,
                        Branch::Shifted {
                            down: family.upper_quantile(s.complement),
                            up: family.upper_quantile(s.beta),
                        },
                    ),
                    Piece::new(0.0, f64::INFINITY, false, false, Branch::Shortest),
                ]
            }
            (Method::Pp { r_minus }, Some(t)) => {
                let th = solve::solve_theta_threshold(
                    ThresholdKind::ThetaMinus1,
                    family,
                    t.c,
                    alpha,
                    r_minus,
                )?;
                threshold = Some(th);
                vec![
                    Piece::new(f64::NEG_INFINITY, th, false, true, Branch::Shortest),
                    Piece::new(
                        th,
                        0.0,
                        false,
                        true,
                        Branch::Inflated {
                            side: Side::Lower,
                            r: r_minus,
                        },
                    ),
                    Piece::new(0.0, f64::INFINITY, false, false, Branch::Shortest),
                ]
            }
            (Method::Np { .. }, _) => unreachable!(),
        };
        let pieces = if mirror {
            pieces.iter().rev().map(Piece::mirrored).collect()
        } else {
            pieces
        };
        Ok(RegionFamily {
            family,
            spec,
            trunc,
            pieces,
            mirror,
            half,
            threshold: threshold.map(|t| if mirror { -t } else { t }),
            turns: OnceLock::new(),
        })
    }

    /// Turning points of both hull bounds, one entry per piece. Empty
    /// except for two-sided conditional methods; computed on first use.
    pub fn turns(&self) -> Result<&[Turns]> {
        if let Some(t) = self.turns.get() {
            return Ok(t);
        }
        let t = self.scan_turns()?;
        Ok(self.turns.get_or_init(|| t))
    }

    fn scan_turns(&self) -> Result<Vec<Turns>> {
        let c = match self.trunc {
            Some(t) if t.kind == TruncationKind::TwoSided && t.c > 0.0 => t.c,
            _ => return Ok(vec![Turns::default(); self.pieces.len()]),
        };
        let reach = c + TURN_MARGIN;
        self.pieces
            .iter()
            .map(|piece| {
                let (a, b) = (piece.lo.max(-reach), piece.hi.min(reach));
                if piece.is_point() || a >= b {
                    return Ok(Turns::default());
                }
                let n = ((b - a) / TURN_STEP).ceil().max(2.0) as usize;
                let ts: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
                let bounds = |t: f64| self.piece_bounds(piece, t);
                Ok(Turns {
                    lower: turning_points(|t| Ok(bounds(t)?.lower), &ts)?,
                    upper: turning_points(|t| Ok(bounds(t)?.upper), &ts)?,
                })
            })
            .collect()
    }

    pub fn spec(&self) -> MethodSpec {
        self.spec
    }

    pub fn family(&self) -> &'a dyn LocationFamily {
        self.family
    }

    pub fn truncation(&self) -> Option<TruncationSpec> {
        self.trunc
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// The θ where a direction-preferring method reverts to the shortest
    /// region (`-q(alpha/2)` marginally, `theta^-_1` conditionally; mirrored
    /// for NP).
    pub fn reversion_point(&self) -> Option<f64> {
        self.threshold
    }

    fn raw_bounds(&self, branch: Branch, theta: f64) -> Result<BoundPair> {
        let alpha = self.spec.alpha;
        match (branch, self.trunc) {
            (Branch::Shortest, None) => Ok(BoundPair {
                lower: theta - self.half,
                upper: theta + self.half,
            }),
            (Branch::Shifted { down, up }, _) => Ok(BoundPair {
                lower: theta - down,
                upper: theta + up,
            }),
            (Branch::Shortest, Some(spec)) => {
                let t = Truncated::new(self.family, theta, spec)?;
                Ok(shortest_bounds(&t, alpha))
            }
            (Branch::Inflated { side, r }, Some(spec)) => {
                let t = Truncated::new(self.family, theta, spec)?;
                let a = shortest_bounds(&t, alpha);
                let target = r * region_measure(spec, a.lower, a.upper);
                Ok(inflated_bounds(&t, alpha, target, side)?)
            }
            (Branch::Inflated { .. }, None) => unreachable!("inflated branch is conditional only"),
        }
    }

    /// Hull bounds of the branch belonging to `piece`, evaluated at any θ
    /// (including the piece's open ends, where they give one-sided limits).
    pub fn piece_bounds(&self, piece: &Piece, theta: f64) -> Result<BoundPair> {
        if self.mirror {
            let b = self.raw_bounds(piece.branch, -theta)?;
            Ok(BoundPair {
                lower: -b.upper,
                upper: -b.lower,
            })
        } else {
            self.raw_bounds(piece.branch, theta)
        }
    }

    pub fn piece_at(&self, theta: f64) -> &Piece {
        self.pieces
            .iter()
            .find(|p| p.contains(theta))
            .expect("pieces cover the real line")
    }

    /// Hull bounds of the region at `theta`.
    pub fn bounds(&self, theta: f64) -> Result<BoundPair> {
        self.piece_bounds(self.piece_at(theta), theta)
    }

    pub fn region(&self, theta: f64) -> Result<AcceptanceRegion> {
        if !theta.is_finite() {
            return Err(Error::parameter(format!(
                "theta must be finite, got {theta}"
            )));
        }
        Ok(AcceptanceRegion::from_bounds(
            self.bounds(theta)?,
            theta,
            self.spec,
        ))
    }
}

pub fn ar_marginal_shortest(
    family: &dyn LocationFamily,
    theta: f64,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    RegionFamily::new(family, MethodSpec::marginal(Method::Shortest, alpha)?)?.region(theta)
}

pub fn ar_marginal_mp(
    family: &dyn LocationFamily,
    theta: f64,
    r: f64,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    RegionFamily::new(family, MethodSpec::marginal(Method::Mp { r }, alpha)?)?.region(theta)
}

pub fn ar_marginal_pp(
    family: &dyn LocationFamily,
    theta: f64,
    r_minus: f64,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    RegionFamily::new(family, MethodSpec::marginal(Method::Pp { r_minus }, alpha)?)?.region(theta)
}

pub fn ar_cond_shortest(
    family: &dyn LocationFamily,
    theta: f64,
    c: f64,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    RegionFamily::new(family, MethodSpec::conditional(Method::Shortest, c, alpha)?)?.region(theta)
}

pub fn ar_cond_mp(
    family: &dyn LocationFamily,
    theta: f64,
    c: f64,
    r: f64,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    RegionFamily::new(family, MethodSpec::conditional(Method::Mp { r }, c, alpha)?)?.region(theta)
}

pub fn ar_cond_pp(
    family: &dyn LocationFamily,
    theta: f64,
    c: f64,
    r_minus: f64,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    RegionFamily::new(
        family,
        MethodSpec::conditional(Method::Pp { r_minus }, c, alpha)?,
    )?
    .region(theta)
}

pub fn ar_cond_one_sided(
    family: &dyn LocationFamily,
    theta: f64,
    c: f64,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    RegionFamily::new(
        family,
        MethodSpec::conditional(Method::OneSidedCond, c, alpha)?,
    )?
    .region(theta)
}

/// Negative-preferring region `-PP(-theta)` in either setting.
pub fn ar_negative_preferring(
    family: &dyn LocationFamily,
    theta: f64,
    r_minus: f64,
    setting: Setting,
    alpha: f64,
) -> Result<AcceptanceRegion> {
    RegionFamily::new(
        family,
        MethodSpec::new(Method::Np { r_minus }, setting, alpha)?,
    )?
    .region(theta)
}

pub fn ar_equivariant(
    family: &dyn LocationFamily,
    theta: f64,
    beta_minus: f64,
    beta_plus: f64,
) -> Result<AcceptanceRegion> {
    let spec = MethodSpec::marginal(
        Method::Equivariant {
            beta_minus,
            beta_plus,
        },
        beta_minus + beta_plus,
    )?;
    RegionFamily::new(family, spec)?.region(theta)
}
