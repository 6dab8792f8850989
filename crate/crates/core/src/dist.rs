//! Location families and their truncations by a selection threshold.
//!
//! A [`LocationFamily`] describes the law of the centered error `Y - theta`.
//! Every probability the interval constructions need is expressed through it,
//! including the laws of `Y` given `|Y| > c` and given `Y > c`, which are
//! handled by [`Truncated`].
//!
//! Tail work is done in log space. Selection probabilities far below the
//! smallest positive double still produce usable conditional laws, which
//! matters for one-sided selection where the interesting parameter values lie
//! dozens of standard units below the threshold.

use std::f64::consts::SQRT_2;
use std::fmt;

use libm::erfc;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// `ln(sqrt(2 * pi))`
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// The standardized error law of a location family, `F(y - theta)`.
///
/// Implementors supply density, distribution and quantile functions of the
/// error at location zero. The log-space and upper-tail methods have default
/// implementations in terms of those three; families that can do better in
/// the tails (like [`Normal`]) override them.
pub trait LocationFamily: Send + Sync {
    fn pdf0(&self, x: f64) -> f64;
    fn cdf0(&self, x: f64) -> f64;
    /// Lower-tail quantile: `cdf0(quantile0(p)) == p`.
    fn quantile0(&self, p: f64) -> f64;
    fn is_symmetric(&self) -> bool;
    fn is_unimodal(&self) -> bool;

    fn sf0(&self, x: f64) -> f64 {
        if self.is_symmetric() {
            self.cdf0(-x)
        } else {
            1.0 - self.cdf0(x)
        }
    }

    fn ln_pdf0(&self, x: f64) -> f64 {
        self.pdf0(x).ln()
    }

    fn ln_cdf0(&self, x: f64) -> f64 {
        self.cdf0(x).ln()
    }

    fn ln_sf0(&self, x: f64) -> f64 {
        self.sf0(x).ln()
    }

    /// The `x` with `ln cdf0(x) == ln_p`.
    fn quantile_ln0(&self, ln_p: f64) -> f64 {
        self.quantile0(ln_p.exp())
    }

    /// The `x` with `ln sf0(x) == ln_s`.
    fn upper_quantile_ln0(&self, ln_s: f64) -> f64 {
        if self.is_symmetric() {
            -self.quantile_ln0(ln_s)
        } else {
            self.quantile0(-ln_s.exp_m1())
        }
    }

    /// Offset quantile `q(a) = quantile0(1 - a)`, the distance from the
    /// center that leaves upper-tail mass `a`.
    fn upper_quantile(&self, a: f64) -> f64 {
        self.upper_quantile_ln0(a.ln())
    }
}

/// The standard normal error law.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Normal;

/// Mills ratio `sf(x) / pdf(x)` by backward evaluation of its continued
/// fraction. Accurate to rounding for `x >= 20`.
fn mills_ratio(x: f64) -> f64 {
    let mut t = x;
    for k in (1..=60).rev() {
        t = x + k as f64 / t;
    }
    1.0 / t
}

impl Normal {
    fn ln_sf(x: f64) -> f64 {
        if x.is_nan() {
            f64::NAN
        } else if x < 0.0 {
            (-0.5 * erfc(-x / SQRT_2)).ln_1p()
        } else if x < 25.0 {
            (0.5 * erfc(x / SQRT_2)).ln()
        } else if x.is_infinite() {
            f64::NEG_INFINITY
        } else {
            -0.5 * x * x - LN_SQRT_2PI + mills_ratio(x).ln()
        }
    }

    fn upper_quantile_ln(ln_s: f64) -> f64 {
        if ln_s.is_nan() {
            return f64::NAN;
        }
        if ln_s >= 0.0 {
            return f64::NEG_INFINITY;
        }
        if ln_s == f64::NEG_INFINITY {
            return f64::INFINITY;
        }
        if ln_s > -std::f64::consts::LN_2 {
            // upper-tail mass above one half: mirror through the lower tail,
            // where the complement is still representable
            return -Self::upper_quantile_ln((-ln_s.exp_m1()).ln());
        }
        let mut x = if ln_s > -690.0 {
            SQRT_2 * erfc_inv(2.0 * ln_s.exp())
        } else {
            let target = -ln_s - LN_SQRT_2PI;
            let mut x = (2.0 * target).sqrt();
            for _ in 0..4 {
                x = (2.0 * (target - x.ln())).sqrt();
            }
            x
        };
        for _ in 0..8 {
            let ln_sf = Self::ln_sf(x);
            let hazard = (Self::ln_pdf(x) - ln_sf).exp();
            let step = (ln_sf - ln_s) / hazard;
            x += step;
            if step.abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
        x
    }

    fn ln_pdf(x: f64) -> f64 {
        -0.5 * x * x - LN_SQRT_2PI
    }
}

impl LocationFamily for Normal {
    fn pdf0(&self, x: f64) -> f64 {
        Self::ln_pdf(x).exp()
    }

    fn cdf0(&self, x: f64) -> f64 {
        0.5 * erfc(-x / SQRT_2)
    }

    fn sf0(&self, x: f64) -> f64 {
        0.5 * erfc(x / SQRT_2)
    }

    fn quantile0(&self, p: f64) -> f64 {
        if p.is_nan() {
            f64::NAN
        } else if p <= 0.0 {
            f64::NEG_INFINITY
        } else if p >= 1.0 {
            f64::INFINITY
        } else if p < 0.5 {
            -Self::upper_quantile_ln(p.ln())
        } else {
            Self::upper_quantile_ln((1.0 - p).ln())
        }
    }

    fn is_symmetric(&self) -> bool {
        true
    }

    fn is_unimodal(&self) -> bool {
        true
    }

    fn ln_pdf0(&self, x: f64) -> f64 {
        Self::ln_pdf(x)
    }

    fn ln_cdf0(&self, x: f64) -> f64 {
        Self::ln_sf(-x)
    }

    fn ln_sf0(&self, x: f64) -> f64 {
        Self::ln_sf(x)
    }

    fn quantile_ln0(&self, ln_p: f64) -> f64 {
        -Self::upper_quantile_ln(ln_p)
    }

    fn upper_quantile_ln0(&self, ln_s: f64) -> f64 {
        Self::upper_quantile_ln(ln_s)
    }
}

type RealFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A location family assembled from user-supplied closures.
///
/// Build one with [`FnFamily::register`], which runs [`validate_family`]
/// before handing the family out.
pub struct FnFamily {
    name: String,
    pdf: RealFn,
    cdf: RealFn,
    quantile: RealFn,
    symmetric: bool,
    unimodal: bool,
}

impl fmt::Debug for FnFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFamily")
            .field("name", &self.name)
            .field("symmetric", &self.symmetric)
            .field("unimodal", &self.unimodal)
            .finish()
    }
}

impl FnFamily {
    pub fn register(
        name: impl Into<String>,
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        quantile: impl Fn(f64) -> f64 + Send + Sync + 'static,
        symmetric: bool,
        unimodal: bool,
    ) -> Result<Self> {
        let family = FnFamily {
            name: name.into(),
            pdf: Box::new(pdf),
            cdf: Box::new(cdf),
            quantile: Box::new(quantile),
            symmetric,
            unimodal,
        };
        validate_family(&family)?;
        Ok(family)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl LocationFamily for FnFamily {
    fn pdf0(&self, x: f64) -> f64 {
        (self.pdf)(x)
    }

    fn cdf0(&self, x: f64) -> f64 {
        (self.cdf)(x)
    }

    fn quantile0(&self, p: f64) -> f64 {
        (self.quantile)(p)
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn is_unimodal(&self) -> bool {
        self.unimodal
    }
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Checks the contract every family must satisfy before it is used: density
/// nonnegative and integrating to one, nondecreasing cdf, quantile/cdf
/// roundtrip, and the symmetry identities when the family claims symmetry.
pub fn validate_family(family: &dyn LocationFamily) -> Result<()> {
    let lo = family.quantile0(1e-13);
    let hi = family.quantile0(1.0 - 1e-13);
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::parameter("family quantiles are not finite"));
    }
    let total = integrate(&|x| family.pdf0(x), lo, hi, 1e-12);
    if (total - 1.0).abs() > 1e-8 {
        return Err(Error::parameter(format!(
            "density integrates to {total}, not 1"
        )));
    }
    let mut prev = 0.0;
    for i in 0..=1000 {
        let x = lo + (hi - lo) * i as f64 / 1000.0;
        let d = family.pdf0(x);
        let p = family.cdf0(x);
        if !(d >= 0.0) {
            return Err(Error::parameter(format!("negative density at {x}")));
        }
        if p < prev {
            return Err(Error::parameter(format!("cdf decreases at {x}")));
        }
        prev = p;
        if family.is_symmetric()
            && ((family.pdf0(-x) - d).abs() > 1e-12 || (family.cdf0(-x) - (1.0 - p)).abs() > 1e-12)
        {
            return Err(Error::parameter(format!("family not symmetric at {x}")));
        }
    }
    for i in 1..1000 {
        let p = i as f64 / 1000.0;
        let back = family.cdf0(family.quantile0(p));
        if (back - p).abs() > 1e-10 {
            return Err(Error::parameter(format!(
                "quantile/cdf roundtrip fails at p = {p}"
            )));
        }
    }
    Ok(())
}

/// `F_theta(y) = F(y - theta)`.
pub fn loc_cdf(family: &dyn LocationFamily, theta: f64, y: f64) -> f64 {
    family.cdf0(y - theta)
}

/// `P(|Y| > c)` under location `theta`.
pub fn selection_prob(family: &dyn LocationFamily, theta: f64, c: f64) -> f64 {
    family.sf0(c - theta) + family.cdf0(-c - theta)
}

/// Which tail(s) of `Y` survive selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationKind {
    /// Keep `|Y| > c`.
    TwoSided,
    /// Keep `Y > c`.
    UpperOneSided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSpec {
    pub kind: TruncationKind,
    pub c: f64,
}

impl TruncationSpec {
    pub fn new(kind: TruncationKind, c: f64) -> Result<Self> {
        if !c.is_finite() || c < 0.0 {
            return Err(Error::parameter(format!(
                "truncation threshold must be finite and nonnegative, got {c}"
            )));
        }
        Ok(TruncationSpec { kind, c })
    }

    pub fn two_sided(c: f64) -> Result<Self> {
        Self::new(TruncationKind::TwoSided, c)
    }

    pub fn upper_one_sided(c: f64) -> Result<Self> {
        Self::new(TruncationKind::UpperOneSided, c)
    }

    /// Whether `y` can be observed after selection. The edges `±c` are
    /// accepted since they carry no mass.
    pub fn admits(&self, y: f64) -> bool {
        match self.kind {
            TruncationKind::TwoSided => y.abs() >= self.c,
            TruncationKind::UpperOneSided => y >= self.c,
        }
    }
}

/// `log(exp(a) + exp(b))`
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// The law of `Y` at location `theta` conditioned on selection.
///
/// For two-sided truncation the support is `(-inf, -c) ∪ (c, inf)`; for
/// upper one-sided truncation it is `(c, inf)`. Masses of the two branches
/// are kept as logarithms.
#[derive(Clone, Copy)]
pub struct Truncated<'a> {
    family: &'a dyn LocationFamily,
    theta: f64,
    spec: TruncationSpec,
    ln_lower: f64,
    ln_upper: f64,
    ln_mass: f64,
}

impl fmt::Debug for Truncated<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Truncated")
            .field("theta", &self.theta)
            .field("spec", &self.spec)
            .field("ln_mass", &self.ln_mass)
            .finish()
    }
}

impl<'a> Truncated<'a> {
    pub fn new(family: &'a dyn LocationFamily, theta: f64, spec: TruncationSpec) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::parameter(format!(
                "theta must be finite, got {theta}"
            )));
        }
        let c = spec.c;
        let ln_upper = family.ln_sf0(c - theta);
        let ln_lower = match spec.kind {
            TruncationKind::TwoSided => family.ln_cdf0(-c - theta),
            TruncationKind::UpperOneSided => f64::NEG_INFINITY,
        };
        let ln_mass = log_add_exp(ln_lower, ln_upper);
        if !(ln_mass > f64::NEG_INFINITY) {
            return Err(Error::Domain(format!(
                "selection probability vanishes at theta = {theta}, c = {c}"
            )));
        }
        Ok(Truncated {
            family,
            theta,
            spec,
            ln_lower,
            ln_upper,
            ln_mass,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn spec(&self) -> TruncationSpec {
        self.spec
    }

    pub fn c(&self) -> f64 {
        self.spec.c
    }

    pub fn family(&self) -> &'a dyn LocationFamily {
        self.family
    }

    /// Probability that `Y` is selected, `t_theta(c)`.
    pub fn selection_prob(&self) -> f64 {
        self.ln_mass.exp()
    }

    pub fn ln_selection_prob(&self) -> f64 {
        self.ln_mass
    }

    /// Conditional mass of the branch below `-c` (zero for one-sided).
    pub fn lower_branch_prob(&self) -> f64 {
        (self.ln_lower - self.ln_mass).exp()
    }

    /// Conditional mass of the branch above `c`.
    pub fn upper_branch_prob(&self) -> f64 {
        (self.ln_upper - self.ln_mass).exp()
    }

    fn check_support(&self, y: f64) -> Result<()> {
        if self.spec.admits(y)
            || y.is_infinite() && (y > 0.0 || self.spec.kind == TruncationKind::TwoSided)
        {
            Ok(())
        } else {
            Err(Error::NotSelected { y })
        }
    }

    /// `P(Y < y | selected)`, defined for every real `y`.
    pub fn mass_below(&self, y: f64) -> f64 {
        let c = self.spec.c;
        let f = self.family;
        match self.spec.kind {
            TruncationKind::TwoSided => {
                if y <= -c {
                    (f.ln_cdf0(y - self.theta) - self.ln_mass).exp()
                } else if y <= c {
                    self.lower_branch_prob()
                } else {
                    let inside = -(f.ln_sf0(y - self.theta) - self.ln_upper).exp_m1();
                    self.lower_branch_prob() + self.upper_branch_prob() * inside
                }
            }
            TruncationKind::UpperOneSided => {
                if y <= c {
                    0.0
                } else {
                    -(f.ln_sf0(y - self.theta) - self.ln_upper).exp_m1()
                }
            }
        }
    }

    /// `P(Y > y | selected)`, defined for every real `y`.
    pub fn mass_above(&self, y: f64) -> f64 {
        let c = self.spec.c;
        let f = self.family;
        if y >= c {
            return (f.ln_sf0(y - self.theta) - self.ln_mass).exp();
        }
        match self.spec.kind {
            TruncationKind::TwoSided => {
                if y >= -c {
                    self.upper_branch_prob()
                } else {
                    let inside = -(f.ln_cdf0(y - self.theta) - self.ln_lower).exp_m1();
                    self.upper_branch_prob() + self.lower_branch_prob() * inside
                }
            }
            TruncationKind::UpperOneSided => 1.0,
        }
    }

    /// Conditional mass of the open interval `(lo, hi)`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        (1.0 - self.mass_below(lo) - self.mass_above(hi)).max(0.0)
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.check_support(y)?;
        Ok(self.mass_below(y))
    }

    pub fn sf(&self, y: f64) -> Result<f64> {
        self.check_support(y)?;
        Ok(self.mass_above(y))
    }

    pub fn pdf(&self, y: f64) -> Result<f64> {
        self.check_support(y)?;
        Ok((self.family.ln_pdf0(y - self.theta) - self.ln_mass).exp())
    }

    /// Conditional density, zero off support.
    pub fn density(&self, y: f64) -> f64 {
        if self.spec.admits(y) {
            (self.family.ln_pdf0(y - self.theta) - self.ln_mass).exp()
        } else {
            0.0
        }
    }

    /// Lower-tail quantile: the `y` with `P(Y < y | selected) = p`.
    ///
    /// A `p` falling exactly on the mass of the lower branch resolves to
    /// `-c`, the left-continuous inverse.
    pub fn quantile(&self, p: f64) -> f64 {
        if p.is_nan() {
            return f64::NAN;
        }
        if p <= 0.0 {
            return match self.spec.kind {
                TruncationKind::TwoSided => f64::NEG_INFINITY,
                TruncationKind::UpperOneSided => self.spec.c,
            };
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        let c = self.spec.c;
        let split = self.lower_branch_prob();
        if self.spec.kind == TruncationKind::TwoSided && p == split {
            return -c;
        }
        if self.spec.kind == TruncationKind::TwoSided && p < split {
            let y = self.theta + self.family.quantile_ln0(p.ln() + self.ln_mass);
            y.min(-c)
        } else {
            let y = self.theta + self.family.upper_quantile_ln0((-p).ln_1p() + self.ln_mass);
            y.max(c)
        }
    }

    /// Upper-tail quantile: the `y` with `P(Y > y | selected) = s`.
    pub fn upper_quantile(&self, s: f64) -> f64 {
        if s.is_nan() {
            return f64::NAN;
        }
        if s <= 0.0 {
            return f64::INFINITY;
        }
        if s >= 1.0 {
            return self.quantile(0.0);
        }
        let c = self.spec.c;
        if self.spec.kind == TruncationKind::UpperOneSided || s < self.upper_branch_prob() {
            let y = self.theta + self.family.upper_quantile_ln0(s.ln() + self.ln_mass);
            y.max(c)
        } else {
            let y = self.theta + self.family.quantile_ln0((-s).ln_1p() + self.ln_mass);
            y.min(-c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent reference for the normal cdf: Taylor series of erf for
    /// small arguments, continued fraction for erfc beyond.
    fn phi_oracle(x: f64) -> f64 {
        let z = x.abs() / SQRT_2;
        let upper = if z < 2.0 {
            let mut term = z;
            let mut sum = z;
            let mut n = 0.0;
            while term.abs() > 1e-18 * sum.abs() {
                n += 1.0;
                term *= -z * z / n;
                sum += term / (2.0 * n + 1.0);
            }
            0.5 * (1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum)
        } else {
            let mut t = z;
            for k in (1..=200).rev() {
                t = z + (k as f64 / 2.0) / t;
            }
            0.5 * (-z * z).exp() / std::f64::consts::PI.sqrt() / t
        };
        if x >= 0.0 {
            1.0 - upper
        } else {
            upper
        }
    }

    /// Normal cdf at 40 significant digits (mpmath), rounded.
    const PHI_TABLE: [(f64, f64); 14] = [
        (-37.5, 4.605353009581954843828e-308),
        (-20.0, 2.753624118606233695076e-89),
        (-8.5, 9.479534822203318354151e-18),
        (-4.23, 1.16845655947074268306e-5),
        (-3.0, 1.349898031630094526652e-3),
        (-1.959964, 2.49999990964424043025e-2),
        (-1.0, 1.586552539314570514148e-1),
        (-0.25, 4.012936743170762757591e-1),
        (0.0, 0.5),
        (0.5, 6.914624612740131036377e-1),
        (1.5, 9.331927987311419339955e-1),
        (2.75, 9.970202367649454432457e-1),
        (4.94, 9.999996093871456816737e-1),
        (7.0, 9.999999999987201874561e-1),
    ];

    #[test]
    fn normal_cdf_matches_reference_table() {
        for &(x, want) in PHI_TABLE.iter() {
            let got = Normal.cdf0(x);
            let tail = want.min(1.0 - want);
            assert!(
                (got - want).abs() <= 1e-13 * tail.max(1e-3),
                "x={x}: {got} vs {want}"
            );
            assert!((Normal.ln_cdf0(x) - want.ln()).abs() < 1e-13 * want.ln().abs().max(1.0));
            assert!((Normal.sf0(-x) - want).abs() <= 1e-13 * tail.max(1e-3));
        }
        assert!((Normal.ln_cdf0(-60.0) + 1805.013560680567138701).abs() < 1e-9);
        assert!((Normal.ln_cdf0(-75.0) + 2817.736604345575624029).abs() < 1e-9);
        for i in -800..=800 {
            let x = i as f64 / 100.0;
            assert!((Normal.cdf0(x) - phi_oracle(x)).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn ln_sf_continuous_across_branch_switch() {
        for &x in &[24.999, 25.0, 25.001] {
            let direct = (0.5 * erfc(x / SQRT_2)).ln();
            assert!((Normal.ln_sf0(x) - direct).abs() < 1e-10, "x={x}");
        }
        // deep tail keeps relative accuracy
        let x = 40.0;
        let asymptotic = -0.5 * x * x - LN_SQRT_2PI - x.ln() + (1.0 - 1.0 / (x * x)).ln();
        assert!((Normal.ln_sf0(x) - asymptotic).abs() < 1e-5);
    }

    #[test]
    fn quantile_roundtrip_extreme_tails() {
        for &p in &[
            1e-300,
            1e-100,
            1e-12,
            1e-5,
            0.025,
            0.3,
            0.5,
            0.9,
            1.0 - 1e-12,
        ] {
            let x = Normal.quantile0(p);
            let back = Normal.cdf0(x);
            assert!(
                ((back - p) / p.min(1.0 - p).max(1e-300)).abs() < 1e-9 || (back - p).abs() < 1e-15,
                "p={p}: {back}"
            );
        }
        for &ln_s in &[-1e4, -2000.0, -700.0, -50.0, -1.0] {
            let x = Normal.upper_quantile_ln0(ln_s);
            assert!(
                (Normal.ln_sf0(x) - ln_s).abs() < 1e-9 * ln_s.abs(),
                "ln_s={ln_s}"
            );
        }
        assert_eq!(Normal.quantile0(0.0), f64::NEG_INFINITY);
        assert_eq!(Normal.quantile0(1.0), f64::INFINITY);
    }

    #[test]
    fn loc_cdf_examples() {
        assert_eq!(loc_cdf(&Normal, 0.0, 0.0), 0.5);
        assert_eq!(loc_cdf(&Normal, 2.0, 2.0), 0.5);
        assert!((loc_cdf(&Normal, 0.0, 1.959964) - 0.975).abs() < 1e-7);
    }

    #[test]
    fn selection_prob_examples() {
        assert!((selection_prob(&Normal, 0.0, 1.959964) - 0.05).abs() < 1e-7);
        assert_eq!(selection_prob(&Normal, 1.3, 0.0), 1.0);
        let want = 1.0 - phi_oracle(-1.04) + phi_oracle(-4.96);
        assert!((selection_prob(&Normal, 3.0, 1.96) - want).abs() < 1e-13);
        assert!((want - 0.851).abs() < 5e-4);
    }

    fn two_sided(theta: f64, c: f64) -> Truncated<'static> {
        Truncated::new(&Normal, theta, TruncationSpec::two_sided(c).unwrap()).unwrap()
    }

    #[test]
    fn trunc_cdf_examples() {
        let t = two_sided(0.0, 1.96);
        assert_eq!(t.cdf(f64::NEG_INFINITY).unwrap(), 0.0);
        assert!((t.cdf(-1.96).unwrap() - 0.5).abs() < 1e-15);
        // (Phi(3.0233) - 1 + t) / t via the oracle
        let mass = 2.0 * phi_oracle(-1.96);
        let want = (phi_oracle(3.0233) - 1.0 + mass) / mass;
        assert!((t.cdf(3.0233).unwrap() - want).abs() < 1e-12);
        assert!((want - 0.975).abs() < 1e-4);
    }

    #[test]
    fn trunc_cdf_rejects_gap() {
        let t = two_sided(0.5, 1.96);
        assert!(matches!(t.cdf(1.0), Err(Error::NotSelected { .. })));
        assert!(matches!(t.pdf(-0.3), Err(Error::NotSelected { .. })));
        let os =
            Truncated::new(&Normal, 0.0, TruncationSpec::upper_one_sided(1.96).unwrap()).unwrap();
        assert!(os.cdf(-2.5).is_err());
    }

    #[test]
    fn trunc_quantile_examples() {
        let t = two_sided(0.0, 1.96);
        // bisection oracle on the two-branch cdf
        let (mut lo, mut hi) = (1.96, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if t.cdf(mid).unwrap() < 0.975 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let q = t.quantile(0.975);
        assert!((q - lo).abs() < 1e-9);
        assert!((q - 3.0233).abs() < 1e-4);
        assert!((t.quantile(0.025) + q).abs() < 1e-9);
        // gap boundary goes to the negative branch
        assert_eq!(t.quantile(t.lower_branch_prob()), -1.96);
    }

    #[test]
    fn trunc_pdf_examples() {
        let t0 = two_sided(0.3, 0.0);
        for &y in &[-2.0, -0.1, 0.4, 3.0] {
            assert!((t0.pdf(y).unwrap() - Normal.pdf0(y - 0.3)).abs() < 1e-15);
        }
        let phi2 = (-2.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let t = two_sided(0.0, 1.96);
        let want = phi2 / (2.0 * phi_oracle(-1.96));
        assert!((t.pdf(2.0).unwrap() - want).abs() < 1e-12);
        assert!((want - 1.0798).abs() < 2e-3);
        let os =
            Truncated::new(&Normal, 0.0, TruncationSpec::upper_one_sided(1.96).unwrap()).unwrap();
        assert!((os.pdf(2.0).unwrap() - 2.0 * want).abs() < 1e-12);
    }

    #[test]
    fn trunc_pdf_integrates_to_one() {
        for &(theta, c) in &[(0.0, 1.96), (1.5, 1.0), (-3.0, 2.5)] {
            let t = two_sided(theta, c);
            let lo = theta - 14.0;
            let hi = theta + 14.0;
            let total = integrate(&|y| t.density(y), lo.min(-c), -c, 1e-13)
                + integrate(&|y| t.density(y), c, hi.max(c), 1e-13);
            assert!((total - 1.0).abs() < 1e-8, "theta={theta}: {total}");
        }
    }

    #[test]
    fn zero_threshold_reproduces_untruncated_law() {
        let t = two_sided(0.7, 0.0);
        for i in 1..200 {
            let p = i as f64 / 200.0;
            assert!((t.quantile(p) - (0.7 + Normal.quantile0(p))).abs() < 1e-12);
        }
        for i in -50..50 {
            let y = i as f64 / 10.0;
            assert!((t.cdf(y).unwrap() - Normal.cdf0(y - 0.7)).abs() < 1e-14);
        }
    }

    #[test]
    fn one_sided_far_below_threshold() {
        // selection probability ~ exp(-2800); log-space keeps the law usable
        let os = Truncated::new(
            &Normal,
            -73.0,
            TruncationSpec::upper_one_sided(1.96).unwrap(),
        )
        .unwrap();
        assert_eq!(os.selection_prob(), 0.0);
        let q = os.upper_quantile(0.05);
        assert!(q > 1.96 && q < 2.1, "{q}");
        assert!((os.mass_above(q) - 0.05).abs() < 1e-9);
    }

    #[test]
    fn registered_family_validation() {
        let logistic = FnFamily::register(
            "logistic",
            |x| {
                let e = (-x.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            },
            |x| 1.0 / (1.0 + (-x).exp()),
            |p| (p / (1.0 - p)).ln(),
            true,
            true,
        );
        assert!(logistic.is_ok());
        let bad = FnFamily::register(
            "half",
            |x| 0.5 * Normal.pdf0(x),
            |x| Normal.cdf0(x),
            |p| Normal.quantile0(p),
            true,
            true,
        );
        assert!(bad.is_err());
        assert!(validate_family(&Normal).is_ok());
    }
}
