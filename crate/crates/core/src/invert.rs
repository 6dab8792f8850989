//! Confidence intervals by inverting acceptance-region families.
//!
//! [`invert_generic`] works for every method. Each [`Piece`] of the θ-axis is
//! cut at the turning points of the hull bounds `L(θ)` and `U(θ)`; the lower
//! end of the interval is the first θ, scanning stretches in order, where
//! `U(θ) > y`, found by bracketed root finding, and the upper end mirrors
//! it. The marginal methods also have closed forms, which [`Inverter`] uses
//! when available.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::LocationFamily;
use crate::error::{Error, Result};
use crate::regions::{Method, MethodSpec, Piece, RegionFamily, Setting};
use crate::solve::{brent, solve_beta, Bracket};

/// Half-width of the default θ search window around `y`.
pub const SEARCH_HALF_WIDTH: f64 = 12.0;
/// Beyond this distance from `y` an endpoint is reported as infinite.
const SEARCH_LIMIT: f64 = 1e8;
const ROOT_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
    pub method: MethodSpec,
    pub y: f64,
}

/// What an interval says about the sign of θ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignCall {
    /// Interval inside `(0, inf)`.
    StrictPositive,
    /// Interval inside `[0, inf)` and containing 0.
    WeakPositive,
    StrictNegative,
    WeakNegative,
    Undetermined,
}

impl SignCall {
    pub fn is_strict(self) -> bool {
        matches!(self, SignCall::StrictPositive | SignCall::StrictNegative)
    }

    /// Strict or weak determination.
    pub fn is_determined(self) -> bool {
        self != SignCall::Undetermined
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignCall::StrictPositive => "strict_positive",
            SignCall::WeakPositive => "weak_positive",
            SignCall::StrictNegative => "strict_negative",
            SignCall::WeakNegative => "weak_negative",
            SignCall::Undetermined => "undetermined",
        }
    }
}

impl fmt::Display for SignCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl ConfidenceInterval {
    fn open(lower: f64, upper: f64, method: MethodSpec, y: f64) -> Self {
        ConfidenceInterval {
            lower,
            upper,
            lower_closed: false,
            upper_closed: false,
            method,
            y,
        }
    }

    pub fn contains(&self, theta: f64) -> bool {
        (theta > self.lower || (self.lower_closed && theta == self.lower))
            && (theta < self.upper || (self.upper_closed && theta == self.upper))
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn sign_call(&self) -> SignCall {
        sign_call(self)
    }

    /// `-CI`, with the closure flags following their endpoints.
    pub fn mirrored(&self) -> Self {
        // `0.0 - x` rather than `-x` keeps zero endpoints positive.
        ConfidenceInterval {
            lower: 0.0 - self.upper,
            upper: 0.0 - self.lower,
            lower_closed: self.upper_closed,
            upper_closed: self.lower_closed,
            method: self.method,
            y: -self.y,
        }
    }

    /// The bound nearer zero on the side the interval determines, if any.
    pub fn minimal_effect(&self) -> Option<f64> {
        match self.sign_call() {
            SignCall::StrictPositive | SignCall::WeakPositive => Some(self.lower),
            SignCall::StrictNegative | SignCall::WeakNegative => Some(self.upper),
            SignCall::Undetermined => None,
        }
    }
}

impl fmt::Display for ConfidenceInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lower_closed { '[' } else { '(' };
        let close = if self.upper_closed { ']' } else { ')' };
        write!(f, "{open}{:.4}, {:.4}{close}", self.lower, self.upper)
    }
}

pub fn sign_call(ci: &ConfidenceInterval) -> SignCall {
    if ci.lower > 0.0 || (ci.lower == 0.0 && !ci.lower_closed) {
        SignCall::StrictPositive
    } else if ci.upper < 0.0 || (ci.upper == 0.0 && !ci.upper_closed) {
        SignCall::StrictNegative
    } else if ci.lower == 0.0 && ci.upper > 0.0 {
        SignCall::WeakPositive
    } else if ci.upper == 0.0 && ci.lower < 0.0 {
        SignCall::WeakNegative
    } else {
        SignCall::Undetermined
    }
}

/// One end of the accepted θ set within a piece.
type End = (f64, bool);

/// `inf { t in piece : g(t) > 0 }` for `g` nondecreasing on the piece, with
/// the closure of that infimum. `None` when `g` never turns positive.
fn first_positive(
    mut g: impl FnMut(f64) -> Result<f64>,
    piece: &Piece,
    window: Bracket,
) -> Result<Option<End>> {
    let (a, b) = (piece.lo, piece.hi);
    let mut lo = if a.is_finite() {
        a
    } else {
        window.lo.min(b - 1.0)
    };
    let mut hi = if b.is_finite() {
        b
    } else {
        window.hi.max(a + 1.0)
    };
    let mut g_lo = g(lo)?;
    let mut g_hi;
    if g_lo > 0.0 {
        if a.is_finite() {
            return Ok(Some((a, piece.lo_closed)));
        }
        let mut step = hi - lo;
        loop {
            let next = lo - step;
            let g_next = g(next)?;
            if g_next <= 0.0 {
                hi = lo;
                g_hi = g_lo;
                lo = next;
                g_lo = g_next;
                break;
            }
            lo = next;
            g_lo = g_next;
            step *= 2.0;
            if step > SEARCH_LIMIT {
                return Ok(Some((f64::NEG_INFINITY, false)));
            }
        }
    } else {
        g_hi = g(hi)?;
        if g_hi <= 0.0 {
            if b.is_finite() {
                return Ok(None);
            }
            let mut step = hi - lo;
            loop {
                let next = hi + step;
                let g_next = g(next)?;
                if g_next > 0.0 {
                    lo = hi;
                    g_lo = g_hi;
                    hi = next;
                    g_hi = g_next;
                    break;
                }
                hi = next;
                g_hi = g_next;
                step *= 2.0;
                if step > SEARCH_LIMIT {
                    return Ok(None);
                }
            }
        }
    }
    // Brent needs a plain closure; park evaluation errors and report after
    let mut failure = None;
    let root = brent(
        |t| match g(t) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        lo,
        hi,
        g_lo,
        g_hi,
        ROOT_TOL * (1.0 + lo.abs().min(hi.abs())),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Some((root?, false)))
}

/// `first_positive` over consecutive stretches of `piece` split at `cuts`
/// (ascending), on each of which `g` is monotone.
fn first_positive_split(
    mut g: impl FnMut(f64) -> Result<f64>,
    piece: &Piece,
    cuts: &[f64],
    window: Bracket,
) -> Result<Option<End>> {
    let inner = cuts
        .iter()
        .copied()
        .filter(|&t| piece.lo < t && t < piece.hi);
    let edges: Vec<f64> = std::iter::once(piece.lo)
        .chain(inner)
        .chain([piece.hi])
        .collect();
    for w in edges.windows(2) {
        let part = Piece {
            lo: w[0],
            hi: w[1],
            lo_closed: w[0] == piece.lo && piece.lo_closed,
            hi_closed: w[1] == piece.hi && piece.hi_closed,
            branch: piece.branch,
        };
        if let Some(end) = first_positive(&mut g, &part, window)? {
            return Ok(Some(end));
        }
    }
    Ok(None)
}

fn mirror_piece(p: &Piece) -> Piece {
    Piece {
        lo: -p.hi,
        hi: -p.lo,
        lo_closed: p.hi_closed,
        hi_closed: p.lo_closed,
        branch: p.branch,
    }
}

/// Convex hull of `{theta : y in A(theta)}` over the default window
/// `y ± 12`, widened on demand.
pub fn invert(regions: &RegionFamily<'_>, y: f64) -> Result<ConfidenceInterval> {
    invert_generic(
        regions,
        y,
        Bracket::new(y - SEARCH_HALF_WIDTH, y + SEARCH_HALF_WIDTH),
    )
}

/// Convex hull of `{theta : y in A(theta)}`, starting the θ search from
/// `search` and widening it as needed.
pub fn invert_generic(
    regions: &RegionFamily<'_>,
    y: f64,
    search: Bracket,
) -> Result<ConfidenceInterval> {
    if !y.is_finite() {
        return Err(Error::parameter(format!(
            "estimate must be finite, got {y}"
        )));
    }
    if let Some(t) = regions.truncation() {
        if !t.admits(y) {
            return Err(Error::NotSelected { y });
        }
    }
    let turns = regions.turns()?;
    let mut best: Option<(End, End)> = None;
    for (piece, turn) in regions.pieces().iter().zip(turns) {
        let found = if piece.is_point() {
            let b = regions.piece_bounds(piece, piece.lo)?;
            (b.lower < y && y < b.upper).then_some(((piece.lo, true), (piece.lo, true)))
        } else {
            let lower = first_positive_split(
                |t| Ok(regions.piece_bounds(piece, t)?.upper - y),
                piece,
                &turn.upper,
                search,
            )?;
            let mirrored = mirror_piece(piece);
            let cuts: Vec<f64> = turn.lower.iter().rev().map(|t| -t).collect();
            let upper = first_positive_split(
                |t| Ok(y - regions.piece_bounds(piece, -t)?.lower),
                &mirrored,
                &cuts,
                Bracket::new(-search.hi, -search.lo),
            )?
            .map(|(t, closed)| (-t, closed));
            match (lower, upper) {
                (Some(l), Some(u)) if l.0 < u.0 || (l.0 == u.0 && l.1 && u.1) => Some((l, u)),
                _ => None,
            }
        };
        if let Some((l, u)) = found {
            best = Some(match best {
                None => (l, u),
                Some((bl, bu)) => (merge_lower(bl, l), merge_upper(bu, u)),
            });
        }
    }
    let ((lower, lower_closed), (upper, upper_closed)) =
        best.ok_or_else(|| Error::Numeric(format!("no parameter value accepts y = {y}")))?;
    Ok(ConfidenceInterval {
        lower,
        upper,
        lower_closed: lower_closed && lower.is_finite(),
        upper_closed: upper_closed && upper.is_finite(),
        method: regions.spec(),
        y,
    })
}

fn merge_lower(a: End, b: End) -> End {
    if a.0 < b.0 {
        a
    } else if b.0 < a.0 {
        b
    } else {
        (a.0, a.1 || b.1)
    }
}

fn merge_upper(a: End, b: End) -> End {
    if a.0 > b.0 {
        a
    } else if b.0 > a.0 {
        b
    } else {
        (a.0, a.1 || b.1)
    }
}

/// Hull of the grid points whose region contains `y`. Brute force, meant as
/// a test oracle.
pub fn oracle_invert_grid(
    regions: &RegionFamily<'_>,
    y: f64,
    theta_grid: &[f64],
) -> Result<Option<(f64, f64)>> {
    let mut hull: Option<(f64, f64)> = None;
    for &theta in theta_grid {
        if regions.region(theta)?.contains(y) {
            hull = Some(match hull {
                None => (theta, theta),
                Some((lo, hi)) => (lo.min(theta), hi.max(theta)),
            });
        }
    }
    Ok(hull)
}

/// Closed-form constants of the marginal methods.
#[derive(Debug, Clone, Copy)]
enum Closed {
    Shortest {
        q: f64,
    },
    Mp {
        q: f64,
        narrow: f64,
        wide: f64,
    },
    Pp {
        q: f64,
        narrow: f64,
        wide: f64,
        mirror: bool,
    },
    Equivariant {
        down: f64,
        up: f64,
    },
}

fn closed_form(closed: Closed, spec: MethodSpec, y: f64) -> ConfidenceInterval {
    match closed {
        Closed::Shortest { q } => ConfidenceInterval::open(y - q, y + q, spec, y),
        Closed::Equivariant { down, up } => ConfidenceInterval::open(y - up, y + down, spec, y),
        Closed::Mp { q, narrow, wide } => {
            if y < 0.0 {
                return closed_form(closed, spec, -y).mirrored();
            }
            let upper = y + narrow;
            let mut ci = ConfidenceInterval::open(y - narrow, upper, spec, y);
            if y >= narrow {
                ci.lower = if y > wide { y - wide } else { 0.0 };
                ci.lower_closed = y < q;
            }
            ci
        }
        Closed::Pp {
            q,
            narrow,
            wide,
            mirror,
        } => {
            if mirror {
                let pp = Closed::Pp {
                    q,
                    narrow,
                    wide,
                    mirror: false,
                };
                return closed_form(pp, spec, -y).mirrored();
            }
            if y >= 0.0 {
                let lower = if y < narrow {
                    y - narrow
                } else if y <= q {
                    0.0
                } else {
                    y - q
                };
                return ConfidenceInterval::open(lower, y + q, spec, y);
            }
            let mut ci = ConfidenceInterval::open(y - q, y + q, spec, y);
            if y <= -q {
                // reverted piece theta <= -q
                let (mut upper, mut closed_up) = if y <= -2.0 * q {
                    (y + q, false)
                } else {
                    (-q, true)
                };
                // inflated piece -q < theta <= 0
                let top = y + wide;
                if top > 0.0 {
                    upper = 0.0;
                    closed_up = true;
                } else if top > -q && top > upper {
                    upper = top;
                    closed_up = false;
                }
                ci.upper = upper;
                ci.upper_closed = closed_up;
            }
            ci
        }
    }
}

/// A method prepared for repeated inversion.
pub struct Inverter<'a> {
    regions: RegionFamily<'a>,
    closed: Option<Closed>,
}

impl fmt::Debug for Inverter<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Inverter")
            .field("regions", &self.regions)
            .field("closed", &self.closed)
            .finish()
    }
}

impl<'a> Inverter<'a> {
    pub fn new(family: &'a dyn LocationFamily, spec: MethodSpec) -> Result<Self> {
        let regions = RegionFamily::new(family, spec)?;
        let alpha = spec.alpha;
        let q = family.upper_quantile(0.5 * alpha);
        let closed = match (spec.setting, spec.method) {
            (Setting::Conditional { .. }, _) => None,
            (Setting::Marginal, Method::Shortest) => Some(Closed::Shortest { q }),
            (
                Setting::Marginal,
                Method::Equivariant {
                    beta_minus,
                    beta_plus,
                },
            ) => Some(Closed::Equivariant {
                down: family.upper_quantile(beta_minus),
                up: family.upper_quantile(beta_plus),
            }),
            (Setting::Marginal, Method::Mp { r }) => {
                let s = solve_beta(family, alpha, r)?;
                Some(Closed::Mp {
                    q,
                    narrow: family.upper_quantile(s.beta),
                    wide: family.upper_quantile(s.complement),
                })
            }
            (Setting::Marginal, Method::Pp { r_minus } | Method::Np { r_minus }) => {
                let s = solve_beta(family, alpha, r_minus)?;
                Some(Closed::Pp {
                    q,
                    narrow: family.upper_quantile(s.beta),
                    wide: family.upper_quantile(s.complement),
                    mirror: matches!(spec.method, Method::Np { .. }),
                })
            }
            (Setting::Marginal, Method::OneSidedCond) => unreachable!("rejected by validation"),
        };
        Ok(Inverter { regions, closed })
    }

    pub fn regions(&self) -> &RegionFamily<'a> {
        &self.regions
    }

    pub fn spec(&self) -> MethodSpec {
        self.regions.spec()
    }

    /// Closed form where one exists, otherwise the generic engine.
    pub fn interval(&self, y: f64) -> Result<ConfidenceInterval> {
        match self.closed {
            Some(c) if y.is_finite() => Ok(closed_form(c, self.spec(), y)),
            _ => invert(&self.regions, y),
        }
    }

    /// Always the generic engine.
    pub fn generic(&self, y: f64) -> Result<ConfidenceInterval> {
        invert(&self.regions, y)
    }
}

pub fn ci_marginal_shortest(
    family: &dyn LocationFamily,
    y: f64,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    Inverter::new(family, MethodSpec::marginal(Method::Shortest, alpha)?)?.interval(y)
}

pub fn ci_marginal_mp(
    family: &dyn LocationFamily,
    y: f64,
    r: f64,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    Inverter::new(family, MethodSpec::marginal(Method::Mp { r }, alpha)?)?.interval(y)
}

pub fn ci_marginal_pp(
    family: &dyn LocationFamily,
    y: f64,
    r_minus: f64,
    alpha: f64,
) -> Result<ConfidenceInterval> {
    Inverter::new(family, MethodSpec::marginal(Method::Pp { r_minus }, alpha)?)?.interval(y)
}

/// Interval for any conditional method. Fails with
/// [`Error::NotSelected`] when `y` could not have been selected.
pub fn ci_conditional(
    family: &dyn LocationFamily,
    spec: MethodSpec,
    y: f64,
) -> Result<ConfidenceInterval> {
    if spec.setting == Setting::Marginal {
        return Err(Error::parameter(
            "ci_conditional needs a conditional method",
        ));
    }
    Inverter::new(family, spec)?.interval(y)
}

/// Values of `y` where the interval starts to say something about the sign.
///
/// Each field is the switch point of a predicate that is monotone in `y`;
/// `None` means the predicate never holds within `|y| <= 1000`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignThresholds {
    /// Largest `y` with upper bound `< 0`.
    pub upper_below_zero: Option<f64>,
    /// Largest `y` with the interval inside `(-inf, 0]`.
    pub nonpositive: Option<f64>,
    /// Smallest `y` with the interval inside `(0, inf)`.
    pub positive: Option<f64>,
    /// Smallest `y` with lower bound `> 0`.
    pub lower_above_zero: Option<f64>,
}

/// Switch point of a predicate that holds for all large `y` past `start`.
fn switch_point(mut holds: impl FnMut(f64) -> Result<bool>, start: f64) -> Result<Option<f64>> {
    if holds(start)? {
        return Ok(Some(start));
    }
    let (mut lo, mut hi) = (start, start + 1.0);
    while !holds(hi)? {
        lo = hi;
        hi = start + 2.0 * (hi - start);
        if hi - start > 1000.0 {
            return Ok(None);
        }
    }
    while hi - lo > 1e-10 * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

pub fn sign_thresholds(inverter: &Inverter<'_>) -> Result<SignThresholds> {
    let start = inverter.regions().truncation().map_or(0.0, |t| t.c);
    let ci = |y: f64| inverter.interval(y);
    let neg = |f: fn(&ConfidenceInterval) -> bool| {
        switch_point(|y| Ok(f(&ci(-y)?)), start).map(|o| o.map(|y| -y))
    };
    let pos = |f: fn(&ConfidenceInterval) -> bool| switch_point(|y| Ok(f(&ci(y)?)), start);
    Ok(SignThresholds {
        upper_below_zero: neg(|c| c.upper < 0.0)?,
        nonpositive: neg(|c| c.upper <= 0.0)?,
        positive: pos(|c| c.sign_call() == SignCall::StrictPositive)?,
        lower_above_zero: pos(|c| c.lower > 0.0)?,
    })
}
