//! Scalar root finding and the bound systems behind the inflated regions.
//!
//! [`find_root`] is a Brent solver (inverse quadratic interpolation with a
//! bisection safeguard). Everything else in this module reduces one of the
//! region-defining equations to a bracketed scalar problem.

use thiserror::Error;

use crate::dist::{LocationFamily, Truncated, TruncationKind, TruncationSpec};
use crate::error::{Error, Result};

/// Largest accepted inflation factor.
pub const R_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("function is not finite at {x}")]
    NonFinite { x: f64 },
    #[error("no solution: {0}")]
    Infeasible(String),
    #[error("iteration limit reached")]
    IterationLimit,
}

/// A search interval for [`find_root`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Self {
        Bracket { lo, hi }
    }

    /// Widens `[lo, hi]` by repeatedly doubling its width on the side with
    /// the smaller `|f|` until `f` changes sign, giving up once the width
    /// passes `limit`.
    pub fn expand<F: FnMut(f64) -> f64>(
        mut f: F,
        mut lo: f64,
        mut hi: f64,
        limit: f64,
    ) -> std::result::Result<Bracket, SolveError> {
        let mut f_lo = f(lo);
        let mut f_hi = f(hi);
        while f_lo.signum() == f_hi.signum() && f_lo != 0.0 && f_hi != 0.0 {
            if !(f_lo.is_finite() && f_hi.is_finite()) {
                return Err(SolveError::NonFinite {
                    x: if f_lo.is_finite() { hi } else { lo },
                });
            }
            let w = hi - lo;
            if w > limit {
                return Err(SolveError::NoSignChange { lo, hi });
            }
            if f_lo.abs() < f_hi.abs() {
                lo -= w;
                f_lo = f(lo);
            } else {
                hi += w;
                f_hi = f(hi);
            }
        }
        Ok(Bracket { lo, hi })
    }
}

/// Finds a root of `f` inside `bracket` to within `tol` in `x`.
pub fn find_root<F: FnMut(f64) -> f64>(
    mut f: F,
    bracket: Bracket,
    tol: f64,
) -> std::result::Result<f64, SolveError> {
    let f_lo = f(bracket.lo);
    let f_hi = f(bracket.hi);
    brent(f, bracket.lo, bracket.hi, f_lo, f_hi, tol)
}

/// Brent's method with known end values.
pub(crate) fn brent<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_hi: f64,
    tol: f64,
) -> std::result::Result<f64, SolveError> {
    if !f_lo.is_finite() {
        return Err(SolveError::NonFinite { x: lo });
    }
    if !f_hi.is_finite() {
        return Err(SolveError::NonFinite { x: hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(SolveError::NoSignChange { lo, hi });
    }
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, f_lo, f_hi);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * q0 * (q0 - r) - (b - a) * (r - 1.0));
                q = (q0 - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(SolveError::NonFinite { x: b });
        }
    }
    Err(SolveError::IterationLimit)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::parameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

pub(crate) fn check_inflation(r: f64) -> Result<()> {
    if (1.0..=R_MAX).contains(&r) {
        Ok(())
    } else {
        Err(Error::parameter(format!(
            "inflation factor must lie in [1, {R_MAX}], got {r}"
        )))
    }
}

/// Tail masses `beta` and `alpha - beta` of an inflated marginal region.
///
/// `complement` is stored separately because it can be far smaller than
/// `beta` and would lose all precision as a difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSplit {
    pub beta: f64,
    pub complement: f64,
}

/// Solves `q(alpha - beta) + q(beta) = 2 r q(alpha / 2)` for `beta` in
/// `[alpha/2, alpha)`.
pub fn solve_beta(family: &dyn LocationFamily, alpha: f64, r: f64) -> Result<BetaSplit> {
    check_alpha(alpha)?;
    check_inflation(r)?;
    let half = 0.5 * alpha;
    if r == 1.0 {
        return Ok(BetaSplit {
            beta: half,
            complement: half,
        });
    }
    let target = 2.0 * r * family.upper_quantile(half);
    // unknown is ln(alpha - beta), which lives in (-inf, ln(alpha/2)]
    let g = |ln_d: f64| {
        let d = ln_d.exp();
        family.upper_quantile_ln0(ln_d) + family.upper_quantile(alpha - d) - target
    };
    let hi = half.ln();
    let mut lo = hi - 1.0;
    let mut width = 1.0;
    while g(lo) <= 0.0 {
        width *= 2.0;
        lo = hi - width;
        if width > 1e6 {
            return Err(Error::Numeric("beta equation has no bracket".into()));
        }
    }
    let ln_d = find_root(g, Bracket::new(lo, hi), 1e-14)?;
    let complement = ln_d.exp();
    Ok(BetaSplit {
        beta: alpha - complement,
        complement,
    })
}

/// Endpoints of a region `(lower, upper)` before removing the truncated gap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

/// Which end of an inflated region is pushed outward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Maximal solution: largest upper bound.
    Upper,
    /// Minimal solution: smallest lower bound.
    Lower,
}

/// Lebesgue measure of `(l, u)` minus the region removed by selection.
pub fn region_measure(spec: TruncationSpec, l: f64, u: f64) -> f64 {
    let c = spec.c;
    match spec.kind {
        TruncationKind::TwoSided => {
            let overlap = (u.min(c) - l.max(-c)).max(0.0);
            (u - l - overlap).max(0.0)
        }
        TruncationKind::UpperOneSided => (u - l.max(c)).max(0.0),
    }
}

/// Moves endpoints lying in the removed gap to the nearest edge that keeps
/// the region's infimum and supremum unchanged.
fn normalize(spec: TruncationSpec, l: f64, u: f64) -> BoundPair {
    let c = spec.c;
    match spec.kind {
        TruncationKind::TwoSided => {
            let mut lower = l;
            let mut upper = u;
            if upper > c && lower >= -c && lower < c {
                lower = c;
            }
            if lower < -c && upper <= c && upper > -c {
                upper = -c;
            }
            BoundPair { lower, upper }
        }
        TruncationKind::UpperOneSided => BoundPair {
            lower: l.max(c),
            upper: u,
        },
    }
}

/// The shortest region for the conditional law: the highest-density set
/// `(theta - h, theta + h)` intersected with the support.
///
/// Each of the possible shapes has a closed form; the one consistent with
/// its own assumptions is returned.
pub fn shortest_bounds(trunc: &Truncated<'_>, alpha: f64) -> BoundPair {
    let f = trunc.family();
    let theta = trunc.theta();
    let spec = trunc.spec();
    let c = spec.c;
    let eps = 1e-12 * (1.0 + theta.abs() + c);
    let ln_t = trunc.ln_selection_prob();

    if spec.kind == TruncationKind::TwoSided {
        // both ends free, straddling the gap
        let h = f.upper_quantile_ln0((0.5 * alpha).ln() + ln_t);
        if theta - h <= -c + eps && theta + h >= c - eps {
            return normalize(spec, theta - h, theta + h);
        }
    }
    // both ends free on a single branch
    let gap = match spec.kind {
        TruncationKind::TwoSided => {
            if theta >= 0.0 {
                f.sf0(-c - theta) - f.sf0(c - theta)
            } else {
                f.cdf0(c - theta) - f.cdf0(-c - theta)
            }
        }
        TruncationKind::UpperOneSided => f.cdf0(c - theta),
    };
    let a_prime = gap + alpha * trunc.selection_prob();
    if a_prime < 1.0 {
        let h = f.upper_quantile(0.5 * a_prime);
        let above = theta - h >= c - eps;
        let below = spec.kind == TruncationKind::TwoSided && theta + h <= -c + eps;
        if above || below {
            return normalize(spec, theta - h, theta + h);
        }
    }
    // lower end pinned at c
    let p_low = trunc.lower_branch_prob();
    if theta >= 0.0 || spec.kind == TruncationKind::UpperOneSided {
        let u = trunc.upper_quantile(alpha - p_low);
        return normalize(spec, c, u);
    }
    // upper end pinned at -c
    let p_up = trunc.upper_branch_prob();
    let l = trunc.quantile(alpha - p_up);
    normalize(spec, l, -c)
}

/// Inflated region of measure `target_len` carrying conditional mass
/// `1 - alpha`, with the given side pushed outward.
///
/// Along the curve of `(l, u)` pairs with the right mass, the measure is
/// smallest at the shortest region and grows in both directions, so each
/// side has exactly one solution.
pub fn inflated_bounds(
    trunc: &Truncated<'_>,
    alpha: f64,
    target_len: f64,
    side: Side,
) -> std::result::Result<BoundPair, SolveError> {
    let spec = trunc.spec();
    let hdr = shortest_bounds(trunc, alpha);
    let min_len = region_measure(spec, hdr.lower, hdr.upper);
    let slack = 1e-12 * min_len.max(1.0);
    if !(target_len >= min_len - slack) {
        return Err(SolveError::Infeasible(format!(
            "target length {target_len} below the shortest length {min_len}"
        )));
    }
    if target_len - min_len <= slack {
        return Ok(hdr);
    }
    let tol = 1e-13 * (1.0 + trunc.theta().abs() + target_len);
    match side {
        Side::Upper => {
            let lower_of = |u: f64| trunc.quantile(alpha - trunc.mass_above(u));
            let g = |u: f64| region_measure(spec, lower_of(u), u) - target_len;
            let lo = hdr.upper;
            let mut hi = lo + target_len;
            let mut g_hi = g(hi);
            let mut step = target_len;
            while g_hi <= 0.0 {
                step *= 2.0;
                hi = lo + step;
                g_hi = g(hi);
                if step > 1e9 {
                    return Err(SolveError::NoSignChange { lo, hi });
                }
            }
            let g_lo = min_len - target_len;
            let u = brent(g, lo, hi, g_lo, g_hi, tol)?;
            Ok(normalize(spec, lower_of(u), u))
        }
        Side::Lower => {
            if spec.kind == TruncationKind::UpperOneSided {
                return Err(SolveError::Infeasible(
                    "one-sided support cannot be extended downward".into(),
                ));
            }
            let upper_of = |l: f64| trunc.upper_quantile(alpha - trunc.mass_below(l));
            let g = |l: f64| region_measure(spec, l, upper_of(l)) - target_len;
            let hi = hdr.lower;
            let mut lo = hi - target_len;
            let mut g_lo = g(lo);
            let mut step = target_len;
            while g_lo <= 0.0 {
                step *= 2.0;
                lo = hi - step;
                g_lo = g(lo);
                if step > 1e9 {
                    return Err(SolveError::NoSignChange { lo, hi });
                }
            }
            let g_hi = min_len - target_len;
            let l = brent(g, lo, hi, g_lo, g_hi, tol)?;
            Ok(normalize(spec, l, upper_of(l)))
        }
    }
}

fn two_sided<'a>(family: &'a dyn LocationFamily, theta: f64, c: f64) -> Result<Truncated<'a>> {
    Truncated::new(family, theta, TruncationSpec::two_sided(c)?)
}

/// Inflated two-sided region whose bounds straddle the gap, `l < -c` and
/// `u > c`.
pub fn solve_straddling_bounds(
    family: &dyn LocationFamily,
    theta: f64,
    c: f64,
    alpha: f64,
    target_len: f64,
    side: Side,
) -> Result<BoundPair> {
    check_alpha(alpha)?;
    let trunc = two_sided(family, theta, c)?;
    let pair = inflated_bounds(&trunc, alpha, target_len, side)?;
    if pair.lower < -c && pair.upper > c {
        Ok(pair)
    } else {
        Err(SolveError::Infeasible(format!("no straddling solution at theta = {theta}")).into())
    }
}

/// Inflated two-sided region lying on one branch: above `c` for
/// `theta >= 0`, below `-c` otherwise.
pub fn solve_one_side_bounds(
    family: &dyn LocationFamily,
    theta: f64,
    c: f64,
    alpha: f64,
    target_len: f64,
) -> Result<BoundPair> {
    check_alpha(alpha)?;
    let trunc = two_sided(family, theta, c)?;
    let side = if theta >= 0.0 {
        Side::Upper
    } else {
        Side::Lower
    };
    let pair = inflated_bounds(&trunc, alpha, target_len, side)?;
    let ok = match side {
        Side::Upper => pair.lower >= c,
        Side::Lower => pair.upper <= -c,
    };
    if ok {
        Ok(pair)
    } else {
        Err(SolveError::Infeasible(format!("no one-side solution at theta = {theta}")).into())
    }
}

/// Two-sided shortest region when neither end is pinned to the gap, so
/// the conditional densities at both ends agree.
pub fn solve_equal_density_bounds(
    family: &dyn LocationFamily,
    theta: f64,
    c: f64,
    alpha: f64,
) -> Result<BoundPair> {
    check_alpha(alpha)?;
    let trunc = two_sided(family, theta, c)?;
    let pair = shortest_bounds(&trunc, alpha);
    let pinned = pair.lower == c || pair.upper == -c;
    let gap_edge = (theta - pair.lower - (pair.upper - theta)).abs() > 1e-9 * (1.0 + theta.abs());
    if (pinned && c > 0.0) || gap_edge {
        return Err(SolveError::Infeasible(format!(
            "shortest region at theta = {theta} ends at the selection threshold"
        ))
        .into());
    }
    Ok(pair)
}

/// Smallest point of `[lo, hi]` where a monotone predicate turns true. The
/// upper end is widened until the predicate holds there.
fn bisect_switch(
    mut pred: impl FnMut(f64) -> Result<bool>,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64> {
    let mut width = hi - lo;
    while !pred(hi)? {
        width *= 2.0;
        hi = lo + width;
        if width > 1e6 {
            return Err(SolveError::NoSignChange { lo, hi }.into());
        }
    }
    if pred(lo)? {
        return Ok(lo);
    }
    while hi - lo > tol * (1.0 + hi.abs()) {
        let mid = 0.5 * (lo + hi);
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdKind {
    /// Where the inflated upper-side region stops straddling the gap.
    ThetaStar,
    /// Where the inflated lower-side region stops straddling the gap.
    ThetaMinus1,
    /// Where the lower branch holds exactly `alpha / 2` of the mass.
    ThetaTilde1,
    /// Where the shortest region's lower end reaches `c`.
    ThetaTilde2,
    /// One-sided analogue of `ThetaTilde2`.
    ThetaTildeOs,
}

/// Solves one of the threshold equations in `theta`. `r` is only used by
/// `ThetaStar` and `ThetaMinus1`.
pub fn solve_theta_threshold(
    kind: ThresholdKind,
    family: &dyn LocationFamily,
    c: f64,
    alpha: f64,
    r: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if !c.is_finite() || c < 0.0 {
        return Err(Error::parameter(format!("invalid threshold c = {c}")));
    }
    let spec2 = TruncationSpec::two_sided(c)?;
    let law = |theta: f64, spec: TruncationSpec| Truncated::new(family, theta, spec);
    let shortest_len = |t: &Truncated<'_>| {
        let b = shortest_bounds(t, alpha);
        region_measure(t.spec(), b.lower, b.upper)
    };
    let tol = 1e-12;
    let limit = 1e4;
    // each residual is nonincreasing in theta on the search range
    let root = match kind {
        ThresholdKind::ThetaTilde1 => {
            let g = |th: f64| match law(th, spec2) {
                Ok(t) => t.lower_branch_prob() - 0.5 * alpha,
                Err(_) => f64::NAN,
            };
            let b = Bracket::expand(g, -1.0, 1.0, limit)?;
            find_root(g, b, tol)?
        }
        ThresholdKind::ThetaTilde2 => {
            let g = |th: f64| match law(th, spec2) {
                Ok(t) => t.mass_between(c, 2.0 * th - c) - (1.0 - alpha),
                Err(_) => f64::NAN,
            };
            let b = Bracket::expand(g, c, c + 1.0, limit)?;
            find_root(g, b, tol)?
        }
        ThresholdKind::ThetaTildeOs => {
            let spec = TruncationSpec::upper_one_sided(c)?;
            let g = |th: f64| match law(th, spec) {
                Ok(t) => t.mass_above(2.0 * th - c) - alpha,
                Err(_) => f64::NAN,
            };
            let b = Bracket::expand(g, c, c + 1.0, limit)?;
            find_root(g, b, tol)?
        }
        ThresholdKind::ThetaStar => {
            check_inflation(r)?;
            // first theta whose upper-side region no longer reaches below -c
            let clears = |th: f64| -> Result<bool> {
                let t = law(th, spec2)?;
                let len = r * shortest_len(&t);
                Ok(inflated_bounds(&t, alpha, len, Side::Upper)?.lower >= c)
            };
            let hi = c + 2.0 * r * family.upper_quantile(0.5 * alpha) + 1.0;
            bisect_switch(clears, 0.0, hi, tol)?
        }
        ThresholdKind::ThetaMinus1 => {
            check_inflation(r)?;
            let reaches = |th: f64| -> Result<bool> {
                let t = law(th, spec2)?;
                let len = r * shortest_len(&t);
                Ok(inflated_bounds(&t, alpha, len, Side::Lower)?.upper > -c)
            };
            let lo = -(c + 2.0 * r * family.upper_quantile(0.5 * alpha) + 1.0);
            bisect_switch(reaches, lo, 0.0, tol)?
        }
    };
    Ok(root)
}
