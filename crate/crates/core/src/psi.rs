//! Generating functions of Grand Lebesgue spaces and their calculus.
//!
//! A [`PsiFunction`] is a positive function on an open interval `(A, B)` of
//! moment orders, `+inf` outside. The GLS norm of a random variable is
//! `sup_p |f|_p / psi(p)`; [`MomentCurve`] carries the `|f|_p` values it is
//! taken over.
//!
//! All extremizations over a continuous variable run on a log-spaced grid
//! with one golden-section refinement stage, see [`ExtremumOptions`].

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::numerics::{maximize_log_grid, minimize_log_grid, ExtremumOptions};

/// How `psi` is computed inside its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum PsiForm {
    /// `psi(p) = p^(1/q)`.
    ClosedPower { q: f64 },
    /// Log-log linear interpolation between tabulated nodes; no extrapolation.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
    /// `psi_r`: 1 at `p = r`, `+inf` elsewhere. Its GLS norm is the `L_r` norm.
    Degenerate { r: f64 },
    /// `factor * inner(p)`.
    Scaled { factor: f64, inner: Box<PsiFunction> },
    /// `(p / ln p) * inner(p)`.
    Rosenthal { inner: Box<PsiFunction> },
}

#[derive(Serialize, Deserialize)]
struct PsiRepr {
    #[serde(flatten)]
    form: PsiForm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support: Option<(f64, Option<f64>)>,
}

/// A generating function `psi` on the open support `(low, high)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PsiRepr", into = "PsiRepr")]
pub struct PsiFunction {
    low: f64,
    high: f64,
    form: PsiForm,
}

impl TryFrom<PsiRepr> for PsiFunction {
    type Error = Error;

    fn try_from(repr: PsiRepr) -> Result<Self> {
        let (low, high) = match (repr.support, &repr.form) {
            (Some((a, b)), _) => (a, b.unwrap_or(f64::INFINITY)),
            (None, PsiForm::Scaled { inner, .. } | PsiForm::Rosenthal { inner }) => {
                (inner.low, inner.high)
            }
            (None, _) => (2.0, f64::INFINITY),
        };
        Self::new(low, high, repr.form)
    }
}

impl From<PsiFunction> for PsiRepr {
    fn from(psi: PsiFunction) -> Self {
        let high = psi.high.is_finite().then_some(psi.high);
        PsiRepr {
            form: psi.form,
            support: Some((psi.low, high)),
        }
    }
}

impl PsiFunction {
    pub fn new(low: f64, high: f64, form: PsiForm) -> Result<Self> {
        if !(low >= 1.0) || !low.is_finite() {
            return Err(Error::InvalidSupport(format!("lower end {low} must be finite and >= 1")));
        }
        if !(high > low) {
            return Err(Error::InvalidSupport(format!("upper end {high} must exceed {low}")));
        }
        match &form {
            PsiForm::ClosedPower { q } => {
                if !(*q > 0.0 && q.is_finite()) {
                    return Err(Error::InvalidPsi(format!("closed_power needs q > 0, got {q}")));
                }
            }
            PsiForm::Tabulated { grid, values } => {
                if grid.is_empty() || grid.len() != values.len() {
                    return Err(Error::InvalidPsi(format!(
                        "tabulated psi needs matching nonempty grid/values, got {}/{}",
                        grid.len(),
                        values.len()
                    )));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::InvalidPsi("tabulated grid must be strictly ascending".into()));
                }
                if grid.iter().any(|&p| !(p > low && p < high)) {
                    return Err(Error::InvalidPsi(format!(
                        "tabulated grid must lie inside ({low}, {high})"
                    )));
                }
                if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidPsi("tabulated values must be positive and finite".into()));
                }
            }
            PsiForm::Degenerate { r } => {
                if !(*r > low && *r < high) {
                    return Err(Error::InvalidPsi(format!("degenerate r = {r} must lie in ({low}, {high})")));
                }
            }
            PsiForm::Scaled { factor, .. } => {
                if !(*factor > 0.0 && factor.is_finite()) {
                    return Err(Error::InvalidPsi(format!("scale factor must be positive, got {factor}")));
                }
            }
            PsiForm::Rosenthal { inner } => {
                if inner.low < 1.0 {
                    return Err(Error::InvalidSupport("Rosenthal transform needs support above 1".into()));
                }
            }
        }
        Ok(Self { low, high, form })
    }

    /// `p^(1/q)` on `(2, inf)`.
    pub fn closed_power(q: f64) -> Result<Self> {
        Self::new(2.0, f64::INFINITY, PsiForm::ClosedPower { q })
    }

    /// `psi_r` on `(2, inf)`.
    pub fn degenerate(r: f64) -> Result<Self> {
        Self::new(2.0, f64::INFINITY, PsiForm::Degenerate { r })
    }

    pub fn tabulated(low: f64, high: f64, grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(low, high, PsiForm::Tabulated { grid, values })
    }

    pub fn with_support(self, low: f64, high: f64) -> Result<Self> {
        Self::new(low, high, self.form)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.low,
            self.high,
            PsiForm::Scaled {
                factor,
                inner: Box::new(self.clone()),
            },
        )
    }

    pub fn support(&self) -> (f64, f64) {
        (self.low, self.high)
    }

    pub fn form(&self) -> &PsiForm {
        &self.form
    }

    pub fn contains(&self, p: f64) -> bool {
        p > self.low && p < self.high
    }

    /// `psi(p)`; `+inf` outside the open support.
    pub fn eval(&self, p: f64) -> f64 {
        if !self.contains(p) {
            return f64::INFINITY;
        }
        self.eval_extended(p)
    }

    /// The defining formula without the support check. On the closure of the
    /// support this is the continuous extension used by extremizations over
    /// the open interval.
    pub(crate) fn eval_extended(&self, p: f64) -> f64 {
        match &self.form {
            PsiForm::ClosedPower { q } => p.powf(1.0 / q),
            PsiForm::Tabulated { grid, values } => interpolate_log_log(grid, values, p),
            PsiForm::Degenerate { r } => {
                if p == *r {
                    1.0
                } else {
                    f64::INFINITY
                }
            }
            PsiForm::Scaled { factor, inner } => factor * inner.eval_extended(p),
            PsiForm::Rosenthal { inner } => p / p.ln() * inner.eval_extended(p),
        }
    }

    /// `p * ln psi(p)`.
    pub fn psi_bar(&self, p: f64) -> f64 {
        p * self.eval(p).ln()
    }

    /// The single point of finiteness for `psi_r` and wrappers of it.
    pub fn atom(&self) -> Option<f64> {
        match &self.form {
            PsiForm::Degenerate { r } => Some(*r),
            PsiForm::Scaled { inner, .. } | PsiForm::Rosenthal { inner } => inner.atom(),
            _ => None,
        }
    }

    /// Closed interval on which [`Self::eval_extended`] is finite, clipped to
    /// the closure of the support.
    fn finite_domain(&self) -> Option<(f64, f64)> {
        let own = (self.low, self.high);
        let inner = match &self.form {
            PsiForm::ClosedPower { .. } => own,
            PsiForm::Tabulated { grid, .. } => (grid[0], grid[grid.len() - 1]),
            PsiForm::Degenerate { r } => (*r, *r),
            PsiForm::Scaled { inner, .. } | PsiForm::Rosenthal { inner } => inner.finite_domain()?,
        };
        let lo = own.0.max(inner.0);
        let hi = own.1.min(inner.1);
        (lo <= hi).then_some((lo, hi))
    }

    /// Smallest value of psi over a grid of its finite domain.
    pub fn inf_on_grid(&self, opts: &ExtremumOptions) -> f64 {
        if let Some(r) = self.atom() {
            return self.eval(r);
        }
        match self.finite_domain() {
            Some((lo, hi)) => minimize_log_grid(|p| self.eval_extended(p), lo, hi.min(opts.p_max).max(lo), opts)
                .map_or(f64::INFINITY, |e| e.value),
            None => f64::INFINITY,
        }
    }
}

fn interpolate_log_log(grid: &[f64], values: &[f64], p: f64) -> f64 {
    let n = grid.len();
    if p < grid[0] || p > grid[n - 1] || p.is_nan() {
        return f64::INFINITY;
    }
    let j = grid.partition_point(|&g| g <= p);
    if j == 0 {
        return values[0];
    }
    if j >= n {
        return values[n - 1];
    }
    let (p0, p1) = (grid[j - 1], grid[j]);
    if p == p0 {
        return values[j - 1];
    }
    let w = (p.ln() - p0.ln()) / (p1.ln() - p0.ln());
    ((1.0 - w) * values[j - 1].ln() + w * values[j].ln()).exp()
}

/// Where a moment curve came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Analytic,
    MonteCarlo { seed: u64, replications: u64 },
}

#[derive(Serialize, Deserialize)]
struct CurveRepr {
    p_grid: Vec<f64>,
    norms: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    std_errors: Option<Vec<f64>>,
    provenance: Provenance,
}

/// The map `p -> |xi|_p` for one random quantity, on an ascending grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub struct MomentCurve {
    p_grid: Vec<f64>,
    norms: Vec<f64>,
    std_errors: Option<Vec<f64>>,
    provenance: Provenance,
}

impl TryFrom<CurveRepr> for MomentCurve {
    type Error = Error;

    fn try_from(r: CurveRepr) -> Result<Self> {
        Self::build(r.p_grid, r.norms, r.std_errors, r.provenance)
    }
}

impl From<MomentCurve> for CurveRepr {
    fn from(c: MomentCurve) -> Self {
        CurveRepr {
            p_grid: c.p_grid,
            norms: c.norms,
            std_errors: c.std_errors,
            provenance: c.provenance,
        }
    }
}

/// Standard errors allowed for a Monte Carlo Lyapunov violation.
pub const LYAPUNOV_SLACK_SE: f64 = 3.0;

impl MomentCurve {
    fn build(
        p_grid: Vec<f64>,
        norms: Vec<f64>,
        std_errors: Option<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if p_grid.is_empty() || p_grid.len() != norms.len() {
            return Err(Error::InvalidCurve(format!(
                "grid and norms must be nonempty with equal length, got {}/{}",
                p_grid.len(),
                norms.len()
            )));
        }
        if p_grid.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
            return Err(Error::InvalidCurve("p values must be finite and >= 1".into()));
        }
        if p_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidCurve("p grid must be strictly ascending".into()));
        }
        if norms.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidCurve("norms must be finite and nonnegative".into()));
        }
        if let Some(se) = &std_errors {
            if se.len() != norms.len() || se.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
                return Err(Error::InvalidCurve("standard errors must match norms and be finite".into()));
            }
        }
        for j in 1..norms.len() {
            let allowed = match &std_errors {
                Some(se) => LYAPUNOV_SLACK_SE * se[j].max(se[j - 1]),
                None => 0.0,
            } + 1e-12 * norms[j - 1];
            if norms[j] + allowed < norms[j - 1] {
                return Err(Error::InvalidCurve(format!(
                    "norms decrease from p = {} to p = {} ({} -> {}), violating Lyapunov's inequality",
                    p_grid[j - 1],
                    p_grid[j],
                    norms[j - 1],
                    norms[j]
                )));
            }
        }
        Ok(Self {
            p_grid,
            norms,
            std_errors,
            provenance,
        })
    }

    pub fn analytic(p_grid: Vec<f64>, norms: Vec<f64>) -> Result<Self> {
        Self::build(p_grid, norms, None, Provenance::Analytic)
    }

    pub fn monte_carlo(
        p_grid: Vec<f64>,
        norms: Vec<f64>,
        std_errors: Vec<f64>,
        seed: u64,
        replications: u64,
    ) -> Result<Self> {
        Self::build(
            p_grid,
            norms,
            Some(std_errors),
            Provenance::MonteCarlo { seed, replications },
        )
    }

    /// The zero variable.
    pub fn zero(p_grid: Vec<f64>) -> Result<Self> {
        let n = p_grid.len();
        Self::analytic(p_grid, vec![0.0; n])
    }

    /// `|sigma Z|_p` for standard Gaussian `Z`.
    pub fn gaussian(sigma: f64, p_grid: Vec<f64>) -> Result<Self> {
        let norms = p_grid.iter().map(|&p| sigma.abs() * gaussian_abs_norm(p)).collect();
        Self::analytic(p_grid, norms)
    }

    pub fn p_grid(&self) -> &[f64] {
        &self.p_grid
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    pub fn std_errors(&self) -> Option<&[f64]> {
        self.std_errors.as_deref()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Norm at a grid point (matched to 1e-12 relative).
    pub fn value_at(&self, p: f64) -> Option<f64> {
        self.p_grid
            .iter()
            .position(|&g| (g - p).abs() <= 1e-12 * p.abs().max(1.0))
            .map(|j| self.norms[j])
    }

    /// The curve of `c * xi`.
    pub fn scaled(&self, c: f64) -> Self {
        let c = c.abs();
        Self {
            p_grid: self.p_grid.clone(),
            norms: self.norms.iter().map(|v| v * c).collect(),
            std_errors: self.std_errors.as_ref().map(|s| s.iter().map(|v| v * c).collect()),
            provenance: self.provenance.clone(),
        }
    }
}

/// `|Z|_p = (2^(p/2) Gamma((p+1)/2) / sqrt(pi))^(1/p)` for standard Gaussian `Z`.
pub fn gaussian_abs_norm(p: f64) -> f64 {
    let ln_moment = 0.5 * p * std::f64::consts::LN_2 + ln_gamma(0.5 * (p + 1.0))
        - 0.5 * std::f64::consts::PI.ln();
    (ln_moment / p).exp()
}

/// GLS norm `sup_{p in (A,B)} |f|_p / psi(p)` over the curve's grid, with
/// `C / inf = 0`.
pub fn gls_norm(curve: &MomentCurve, psi: &PsiFunction) -> Result<f64> {
    let mut overlap = false;
    let mut sup = 0.0f64;
    for (&p, &v) in curve.p_grid.iter().zip(&curve.norms) {
        if !psi.contains(p) {
            continue;
        }
        overlap = true;
        let w = psi.eval(p);
        if w.is_finite() {
            sup = sup.max(v / w);
        }
    }
    if !overlap {
        let (low, high) = psi.support();
        return Err(Error::EmptySupportOverlap { low, high });
    }
    Ok(sup)
}

/// The sub-q norm `sup_{p >= 2} |f|_p / p^(1/q)` over the curve's grid.
pub fn subq_norm(curve: &MomentCurve, q: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("sub-q norm needs q > 0, got {q}")));
    }
    let mut any = false;
    let mut sup = 0.0f64;
    for (&p, &v) in curve.p_grid.iter().zip(&curve.norms) {
        if p >= 2.0 {
            any = true;
            sup = sup.max(v / p.powf(1.0 / q));
        }
    }
    if !any {
        return Err(Error::EmptySupportOverlap {
            low: 2.0,
            high: f64::INFINITY,
        });
    }
    Ok(sup)
}

/// `psi_R(p) = (p / ln p) psi(p)` on the same support.
pub fn rosenthal_transform(psi: &PsiFunction) -> Result<PsiFunction> {
    let (low, high) = psi.support();
    if low < 1.0 {
        return Err(Error::InvalidSupport(format!(
            "support ({low}, {high}) reaches p <= 1 where ln p <= 0"
        )));
    }
    PsiFunction::new(
        low,
        high,
        PsiForm::Rosenthal {
            inner: Box::new(psi.clone()),
        },
    )
}

/// `(1/q)(1 + ln(q x))`, the value of `psi_*` for `psi(p) = p^(1/q)` when the
/// stationary point `p = q x` lies inside the domain.
pub fn lower_star_closed_power(q: f64, x: f64) -> f64 {
    (1.0 + (q * x).ln()) / q
}

/// `psi_*(x) = inf_{y in (0,1), 1/y in supp psi} [x y + ln psi(1/y)]`.
///
/// For `psi = p^(1/q)` the closed form is returned on its validity region and
/// cross-checked against the numeric minimizer.
pub fn psi_lower_star(psi: &PsiFunction, x: f64, opts: &ExtremumOptions) -> Result<f64> {
    let numeric = psi_lower_star_numeric(psi, x, opts)?;
    if let PsiForm::ClosedPower { q } = psi.form() {
        let (lo, hi) = lower_star_domain(psi, opts)?;
        let p_star = q * x;
        if p_star > lo && p_star < hi {
            let closed = lower_star_closed_power(*q, x);
            if (closed - numeric).abs() > 1e-6 {
                log::warn!("psi_* closed form {closed} disagrees with minimizer {numeric} at x = {x}");
            }
            return Ok(closed);
        }
    }
    Ok(numeric)
}

fn lower_star_domain(psi: &PsiFunction, opts: &ExtremumOptions) -> Result<(f64, f64)> {
    let (lo, hi) = psi
        .finite_domain()
        .ok_or_else(|| Error::EmptyDomain("psi is nowhere finite".into()))?;
    let lo = lo.max(1.0);
    let hi = hi.min(opts.p_max);
    if hi < lo || (hi == lo && psi.atom().is_none()) {
        return Err(Error::EmptyDomain(format!(
            "no y in (0,1) with 1/y in the support below p_max = {}",
            opts.p_max
        )));
    }
    Ok((lo, hi))
}

/// Grid-plus-golden-section evaluation of `psi_*`, without the closed-form shortcut.
pub fn psi_lower_star_numeric(psi: &PsiFunction, x: f64, opts: &ExtremumOptions) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("psi_* needs x >= 0, got {x}")));
    }
    if let Some(r) = psi.atom() {
        if !(r > 1.0 && psi.contains(r)) {
            return Err(Error::EmptyDomain(format!("atom r = {r} gives no y in (0,1)")));
        }
        return Ok(x / r + psi.eval(r).ln());
    }
    let (lo, hi) = lower_star_domain(psi, opts)?;
    minimize_log_grid(|p| x / p + psi.eval_extended(p).ln(), lo, hi, opts)
        .map(|e| e.value)
        .ok_or_else(|| Error::EmptyDomain("psi is nowhere finite on the grid".into()))
}

/// The modified Legendre transform `g*(y) = sup_{x in [2, x_max]} (x y - g(x))`
/// with `x_max = opts.p_max`. Returns `-inf` when `g` is nowhere finite.
pub fn young_fenchel(g: impl Fn(f64) -> f64, y: f64, opts: &ExtremumOptions) -> f64 {
    conjugate_on(g, y, 2.0, opts.p_max, opts)
}

fn conjugate_on(g: impl Fn(f64) -> f64, y: f64, lo: f64, hi: f64, opts: &ExtremumOptions) -> f64 {
    if hi < lo {
        return f64::NEG_INFINITY;
    }
    maximize_log_grid(
        |x| {
            let gx = g(x);
            if gx.is_finite() {
                x * y - gx
            } else {
                f64::NEG_INFINITY
            }
        },
        lo,
        hi,
        opts,
    )
    .map_or(f64::NEG_INFINITY, |e| e.value)
}

/// `psi_bar*(y)` for `psi_bar(p) = p ln psi(p)`, over `p >= 2` in the support.
pub fn psi_bar_conjugate(psi: &PsiFunction, y: f64, opts: &ExtremumOptions) -> Result<f64> {
    if let Some(r) = psi.atom() {
        if r < 2.0 {
            return Err(Error::EmptyDomain(format!("atom r = {r} lies below 2")));
        }
        return Ok(r * y - psi.psi_bar(r));
    }
    let (lo, hi) = psi
        .finite_domain()
        .ok_or_else(|| Error::EmptyDomain("psi is nowhere finite".into()))?;
    let (lo, hi) = (lo.max(2.0), hi.min(opts.p_max));
    if hi < lo {
        return Err(Error::EmptyDomain("support has no p in [2, p_max]".into()));
    }
    Ok(conjugate_on(|p| p * psi.eval_extended(p).ln(), y, lo, hi, opts))
}

/// `min(1, 2 exp(-psi_bar*(ln(u / ||xi||))))`, the tail bound for a variable
/// with finite GLS norm.
pub fn gls_tail_bound(psi: &PsiFunction, gls_norm_value: f64, u: f64, opts: &ExtremumOptions) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::InvalidArgument(format!("tail bound needs u > 0, got {u}")));
    }
    if !(gls_norm_value > 0.0 && gls_norm_value.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tail bound needs a positive finite norm, got {gls_norm_value}"
        )));
    }
    let s = psi_bar_conjugate(psi, (u / gls_norm_value).ln(), opts)?;
    Ok((2.0 * (-s).exp()).min(1.0))
}

/// `ln N(u)` for the Orlicz N-function `N(u) = exp(psi_bar*(ln|u|))` when
/// `|u| > e^2` and `C u^2` below, with `C` fixed by continuity at `e^2`.
pub fn orlicz_log_n_function(psi: &PsiFunction, u: f64, opts: &ExtremumOptions) -> Result<f64> {
    let a = u.abs();
    if a > std::f64::consts::E.powi(2) {
        return psi_bar_conjugate(psi, a.ln(), opts);
    }
    if a == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let ln_c = psi_bar_conjugate(psi, 2.0, opts)? - 4.0;
    Ok(ln_c + 2.0 * a.ln())
}

/// `N(u)`; overflows to `+inf` for large conjugate values, see [`orlicz_log_n_function`].
pub fn orlicz_n_function(psi: &PsiFunction, u: f64, opts: &ExtremumOptions) -> Result<f64> {
    Ok(orlicz_log_n_function(psi, u, opts)?.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::E;

    fn opts() -> ExtremumOptions {
        ExtremumOptions::default()
    }

    #[test]
    fn closed_power_eval() {
        let psi = PsiFunction::closed_power(2.0).unwrap();
        assert_eq!(psi.eval(4.0), 2.0);
        let psi1 = PsiFunction::closed_power(1.0).unwrap();
        assert_eq!(psi1.eval(1.5), f64::INFINITY);
        assert_eq!(psi1.eval(2.0), f64::INFINITY);
    }

    #[test]
    fn degenerate_eval() {
        let psi = PsiFunction::degenerate(3.0).unwrap();
        assert_eq!(psi.eval(3.0), 1.0);
        assert_eq!(psi.eval(3.5), f64::INFINITY);
    }

    #[test]
    fn tabulated_interpolates_log_log_without_extrapolation() {
        let psi = PsiFunction::tabulated(1.0, f64::INFINITY, vec![2.0, 8.0], vec![1.0, 4.0]).unwrap();
        // log-log line through (2,1) and (8,4) is psi = p / 2
        assert_relative_eq!(psi.eval(4.0), 2.0, max_relative = 1e-12);
        assert_eq!(psi.eval(8.0), 4.0);
        assert_eq!(psi.eval(9.0), f64::INFINITY);
        assert_eq!(psi.eval(1.5), f64::INFINITY);
    }

    #[test]
    fn constructor_rejects_bad_input() {
        assert!(matches!(
            PsiFunction::closed_power(-1.0),
            Err(Error::InvalidPsi(_))
        ));
        assert!(matches!(
            PsiFunction::new(0.5, 3.0, PsiForm::ClosedPower { q: 1.0 }),
            Err(Error::InvalidSupport(_))
        ));
        assert!(PsiFunction::tabulated(1.0, 10.0, vec![3.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(PsiFunction::tabulated(1.0, 10.0, vec![2.0], vec![1.0, 1.0]).is_err());
        assert!(PsiFunction::tabulated(1.0, 10.0, vec![2.0, 3.0], vec![1.0, 0.0]).is_err());
        assert!(PsiFunction::degenerate(1.5).is_err());
    }

    #[test]
    fn json_round_trip_uses_null_for_infinity() {
        let psi = PsiFunction::closed_power(2.0).unwrap();
        let s = serde_json::to_string(&psi).unwrap();
        assert_eq!(s, r#"{"form":"closed_power","q":2.0,"support":[2.0,null]}"#);
        let back: PsiFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, psi);

        let nested = rosenthal_transform(&PsiFunction::degenerate(3.0).unwrap()).unwrap();
        let s = serde_json::to_string(&nested).unwrap();
        let back: PsiFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, nested);

        let bad = r#"{"form":"closed_power","q":-2.0}"#;
        assert!(serde_json::from_str::<PsiFunction>(bad).is_err());
    }

    #[test]
    fn gls_norm_of_degenerate_is_lr_norm() {
        let curve = MomentCurve::gaussian(1.7, vec![2.0, 3.0, 4.0]).unwrap();
        let psi = PsiFunction::degenerate(3.0).unwrap();
        assert_eq!(gls_norm(&curve, &psi).unwrap(), curve.value_at(3.0).unwrap());
    }

    #[test]
    fn gls_norm_zero_and_empty_overlap() {
        let zero = MomentCurve::zero(vec![3.0, 4.0]).unwrap();
        let psi = PsiFunction::closed_power(2.0).unwrap();
        assert_eq!(gls_norm(&zero, &psi).unwrap(), 0.0);
        let low = MomentCurve::zero(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            gls_norm(&low, &psi),
            Err(Error::EmptySupportOverlap { .. })
        ));
    }

    #[test]
    fn gls_norm_gaussian_against_moment_formula() {
        // E|Z|^p = (p-1)!! for even p: 1, 3, 15, 105.
        let grid = vec![2.0, 4.0, 6.0, 8.0];
        let oracle = [1f64, 3.0, 15.0, 105.0]
            .iter()
            .zip(&grid)
            .map(|(m, p)| m.powf(1.0 / p) / p.sqrt())
            .fold(0.0, f64::max);
        let curve = MomentCurve::gaussian(1.0, grid).unwrap();
        let psi = PsiFunction::closed_power(2.0).unwrap().with_support(1.0, f64::INFINITY).unwrap();
        assert_relative_eq!(gls_norm(&curve, &psi).unwrap(), oracle, max_relative = 1e-12);
    }

    #[test]
    fn subq_norm_cases() {
        let zero = MomentCurve::zero(vec![2.0, 4.0]).unwrap();
        assert_eq!(subq_norm(&zero, 2.0).unwrap(), 0.0);
        let q = 3.0;
        let lone = MomentCurve::analytic(vec![2.0], vec![2f64.powf(1.0 / q)]).unwrap();
        assert_relative_eq!(subq_norm(&lone, q).unwrap(), 1.0, max_relative = 1e-15);
        let below = MomentCurve::zero(vec![1.0, 1.5]).unwrap();
        assert!(subq_norm(&below, 2.0).is_err());
    }

    #[test]
    fn subq_norm_gaussian_matches_dense_oracle() {
        let dense: Vec<f64> = (0..=4000).map(|k| 2.0 + k as f64 * 0.01).collect();
        let oracle = dense
            .iter()
            .map(|&p| {
                // exact moments by quadrature-free recursion on Gamma via ln_gamma
                let m = (0.5 * p * 2f64.ln() + ln_gamma(0.5 * (p + 1.0)) - 0.5 * std::f64::consts::PI.ln()).exp();
                m.powf(1.0 / p) / p.sqrt()
            })
            .fold(0.0, f64::max);
        let curve = MomentCurve::gaussian(1.0, dense).unwrap();
        let v = subq_norm(&curve, 2.0).unwrap();
        assert!(v > 0.0 && v.is_finite());
        assert_relative_eq!(v, oracle, max_relative = 1e-12);
        // sup sits at p = 2: |Z|_2 / sqrt 2
        assert_relative_eq!(v, 0.5f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn rosenthal_values() {
        let psi = PsiFunction::closed_power(1.0).unwrap();
        let r = rosenthal_transform(&psi).unwrap();
        assert_relative_eq!(r.eval(4.0), 4.0 / 4f64.ln() * 4.0, max_relative = 1e-15);
        assert_abs_diff_eq!(r.eval(4.0), 11.541, epsilon = 1e-3);
        assert_relative_eq!(r.eval(E), E * psi.eval(E), max_relative = 1e-15);
    }

    #[test]
    fn rosenthal_dominates_on_grid() {
        for psi in [
            PsiFunction::closed_power(0.5).unwrap(),
            PsiFunction::closed_power(2.0).unwrap(),
            PsiFunction::tabulated(2.0, 50.0, vec![2.5, 10.0, 40.0], vec![1.0, 3.0, 4.0]).unwrap(),
        ] {
            let r = rosenthal_transform(&psi).unwrap();
            for k in 1..400 {
                let p = 2.0 + k as f64 * 0.1;
                let (a, b) = (psi.eval(p), r.eval(p));
                if a.is_finite() {
                    assert!(a <= E * b);
                    assert!(a <= b / E);
                    assert!(b / a > E);
                }
            }
        }
    }

    #[test]
    fn lower_star_examples() {
        let p1 = PsiFunction::closed_power(1.0).unwrap();
        let v = psi_lower_star(&p1, 10.0, &opts()).unwrap();
        assert_abs_diff_eq!(v, 1.0 + 10f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(v, 3.3026, epsilon = 1e-4);

        let p2 = PsiFunction::closed_power(2.0).unwrap();
        let v = psi_lower_star(&p2, 2.0, &opts()).unwrap();
        assert_abs_diff_eq!(v, 0.5 * (1.0 + 4f64.ln()), epsilon = 1e-9);
        assert_abs_diff_eq!(v, 1.1931, epsilon = 1e-4);
    }

    #[test]
    fn lower_star_closed_form_matches_brute_force_oracle() {
        // dense y-grid oracle, independent of the golden-section path
        let psi = PsiFunction::closed_power(2.0).unwrap();
        let x = 2.0;
        let oracle = (1..200_000)
            .map(|k| k as f64 / 200_000.0)
            .filter(|y| 1.0 / y > 2.0)
            .map(|y| x * y + (1.0 / y).ln() / 2.0)
            .fold(f64::INFINITY, f64::min);
        let v = psi_lower_star_numeric(&psi, x, &opts()).unwrap();
        assert_abs_diff_eq!(v, oracle, epsilon = 1e-8);
    }

    #[test]
    fn lower_star_at_zero_is_log_inf_psi() {
        let psi = PsiFunction::closed_power(2.0).unwrap();
        let v = psi_lower_star(&psi, 0.0, &opts()).unwrap();
        assert_abs_diff_eq!(v, psi.inf_on_grid(&opts()).ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(v, 0.5 * 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn lower_star_degenerate_and_empty_domain() {
        let psi = PsiFunction::degenerate(4.0).unwrap();
        assert_abs_diff_eq!(psi_lower_star(&psi, 8.0, &opts()).unwrap(), 2.0, epsilon = 1e-15);
        let far = PsiFunction::new(2000.0, f64::INFINITY, PsiForm::ClosedPower { q: 1.0 }).unwrap();
        assert!(matches!(
            psi_lower_star(&far, 1.0, &opts()),
            Err(Error::EmptyDomain(_))
        ));
    }

    #[test]
    fn young_fenchel_examples() {
        let g = |x: f64| 0.5 * x * x;
        assert_abs_diff_eq!(young_fenchel(g, 4.0, &opts()), 8.0, epsilon = 1e-9);
        assert_abs_diff_eq!(young_fenchel(g, 1.0, &opts()), 0.0, epsilon = 1e-12);
        let c = 3.0;
        assert_abs_diff_eq!(young_fenchel(|x| c * x, c, &opts()), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn tail_bound_clamps_below_norm() {
        let psi = PsiFunction::closed_power(2.0).unwrap();
        assert_eq!(gls_tail_bound(&psi, 2.0, 1.5, &opts()).unwrap(), 1.0);
        assert_eq!(gls_tail_bound(&psi, 2.0, 2.0, &opts()).unwrap(), 1.0);
        assert!(gls_tail_bound(&psi, 2.0, 0.0, &opts()).is_err());
    }

    #[test]
    fn tail_bound_matches_direct_grid_sup() {
        let psi = PsiFunction::closed_power(2.0).unwrap();
        let y = 8.0;
        // direct evaluation over a dense linear grid of [2, 1024]
        let oracle = (0..=1_000_000)
            .map(|k| 2.0 + 1022.0 * k as f64 / 1e6)
            .map(|p| p * y - 0.5 * p * p.ln())
            .fold(f64::NEG_INFINITY, f64::max);
        let s = psi_bar_conjugate(&psi, y, &opts()).unwrap();
        assert_relative_eq!(s, oracle, max_relative = 1e-9);
        let bound = gls_tail_bound(&psi, 1.0, y.exp(), &opts()).unwrap();
        assert_relative_eq!(bound, (2.0 * (-oracle).exp()).min(1.0), max_relative = 1e-6);
        let ln_n = orlicz_log_n_function(&psi, y.exp(), &opts()).unwrap();
        assert_relative_eq!(ln_n, oracle, max_relative = 1e-9);
    }

    #[test]
    fn orlicz_branches() {
        let psi = PsiFunction::closed_power(2.0).unwrap();
        assert_eq!(orlicz_n_function(&psi, 0.0, &opts()).unwrap(), 0.0);
        let e2 = E * E;
        let inner = orlicz_log_n_function(&psi, e2, &opts()).unwrap();
        let outer = psi_bar_conjugate(&psi, 2.0, &opts()).unwrap();
        assert_abs_diff_eq!(inner, outer, epsilon = 1e-12);
        let just_above = orlicz_log_n_function(&psi, e2 * (1.0 + 1e-9), &opts()).unwrap();
        assert_abs_diff_eq!(inner, just_above, epsilon = 1e-6);
        let n1 = orlicz_n_function(&psi, -3.0, &opts()).unwrap();
        let n2 = orlicz_n_function(&psi, 3.0, &opts()).unwrap();
        assert_eq!(n1, n2);
    }

    #[test]
    fn moment_curve_validation() {
        assert!(MomentCurve::analytic(vec![2.0, 4.0], vec![2.0, 1.0]).is_err());
        assert!(MomentCurve::analytic(vec![2.0, 4.0], vec![1.0]).is_err());
        assert!(MomentCurve::analytic(vec![0.5], vec![1.0]).is_err());
        assert!(MomentCurve::monte_carlo(vec![2.0, 4.0], vec![1.0, 0.99], vec![0.01, 0.01], 1, 10).is_ok());
        assert!(MomentCurve::monte_carlo(vec![2.0, 4.0], vec![1.0, 0.9], vec![0.01, 0.01], 1, 10).is_err());
        let json = serde_json::to_string(&MomentCurve::gaussian(1.0, vec![2.0, 4.0]).unwrap()).unwrap();
        let back: MomentCurve = serde_json::from_str(&json).unwrap();
        assert_eq!(back.norms().len(), 2);
    }

    #[test]
    fn gaussian_norms_match_even_moments() {
        for (p, m) in [(2.0, 1.0), (4.0, 3.0), (6.0, 15.0), (8.0, 105.0)] {
            assert_relative_eq!(gaussian_abs_norm(p), f64::powf(m, 1.0 / p), max_relative = 1e-12);
        }
    }
}
