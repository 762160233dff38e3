//! Covering integrals over entropy profiles and the hypothesis checks built
//! on them.
//!
//! Integrands are produced in log form, `ln f(eps)`, and integrated with the
//! trapezoid rule on log-spaced radii.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{diameter, entropy, fit_holder_constant, CoverMode, FiniteMetricSpace, GreedyEnvelope};
use crate::numerics::{fmt_f64, log_grid, pairwise_sum, ExtremumOptions};
use crate::psi::{psi_lower_star, rosenthal_transform, PsiFunction};

/// Default quadrature nodes between `eps_min` and `D`.
pub const DEFAULT_NODES: usize = 400;
/// Default `eps_min / D`.
pub const DEFAULT_EPS_FLOOR: f64 = 1e-4;
/// How far below `eps_min` (in e-folds) the tail slope of a model profile is probed.
const TAIL_PROBE_DEPTH: f64 = 40.0;
const SLOPE_STEP: f64 = 0.5;
/// Slopes within this distance above `-1` still count as divergent.
const SLOPE_MARGIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    Greedy,
    Exact,
    Model,
}

impl From<CoverMode> for ProfileMode {
    fn from(m: CoverMode) -> Self {
        match m {
            CoverMode::Greedy => ProfileMode::Greedy,
            CoverMode::Exact => ProfileMode::Exact,
        }
    }
}

/// `H(eps) = max(0, (dim / alpha) ln(c / eps))`, the log of `c2 eps^(-dim/alpha)`
/// with `c = c2^(alpha/dim)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderModel {
    pub dim: u32,
    pub alpha: f64,
    pub c2: f64,
}

impl HolderModel {
    pub fn new(dim: u32, alpha: f64, c2: f64) -> Result<Self> {
        if dim == 0 || !(alpha > 0.0 && alpha.is_finite()) || !(c2 > 0.0 && c2.is_finite()) {
            return Err(Error::InvalidProfile(format!(
                "Hölder model needs dim >= 1, alpha > 0, c2 > 0 (got {dim}, {alpha}, {c2})"
            )));
        }
        Ok(Self { dim, alpha, c2 })
    }

    pub fn exponent(&self) -> f64 {
        self.dim as f64 / self.alpha
    }

    /// Entropy at `eps = exp(t)`.
    pub fn entropy_at_log(&self, t: f64) -> f64 {
        (self.c2.ln() - self.exponent() * t).max(0.0)
    }
}

/// Entropy as a function of `eps` on `(0, D]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EntropyProfile {
    /// Step profile from covering numbers at finitely many radii; between
    /// nodes the value at the next smaller radius is used (an upper bound).
    Measured {
        /// Descending radii.
        eps_grid: Vec<f64>,
        h_values: Vec<f64>,
        mode: ProfileMode,
        diameter: f64,
    },
    Holder { model: HolderModel, diameter: f64 },
}

impl EntropyProfile {
    pub fn measured(eps_grid: Vec<f64>, h_values: Vec<f64>, mode: ProfileMode, diameter: f64) -> Result<Self> {
        if eps_grid.is_empty() || eps_grid.len() != h_values.len() {
            return Err(Error::InvalidProfile("radii and entropies must be nonempty and of equal length".into()));
        }
        if !(diameter >= 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidProfile(format!("diameter must be finite and >= 0, got {diameter}")));
        }
        if eps_grid.iter().any(|e| !(*e > 0.0 && e.is_finite())) || eps_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidProfile("radii must be positive, finite and strictly descending".into()));
        }
        if h_values.iter().any(|h| !(*h >= 0.0 && h.is_finite())) {
            return Err(Error::InvalidProfile("entropies must be finite and nonnegative".into()));
        }
        // descending eps => H must be nondecreasing along the grid
        if h_values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidProfile("entropy must be nonincreasing in eps".into()));
        }
        if eps_grid.iter().zip(&h_values).any(|(&e, &h)| e >= diameter && h > 0.0) {
            return Err(Error::InvalidProfile("entropy must vanish for eps >= diameter".into()));
        }
        Ok(Self::Measured {
            eps_grid,
            h_values,
            mode,
            diameter,
        })
    }

    pub fn holder(model: HolderModel, diameter: f64) -> Result<Self> {
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::InvalidProfile(format!("model diameter must be positive, got {diameter}")));
        }
        Ok(Self::Holder { model, diameter })
    }

    /// Covering entropies of `space` at `nodes` log-spaced radii from
    /// `eps_floor * D` to `D`.
    pub fn from_space(space: &FiniteMetricSpace, mode: CoverMode, nodes: usize, eps_floor: f64) -> Result<Self> {
        let d = diameter(space)?;
        if d == 0.0 {
            return Self::measured(vec![1.0], vec![0.0], mode.into(), 0.0);
        }
        let mut eps = log_grid(eps_floor * d, d, nodes.max(2));
        eps.reverse();
        let h = match mode {
            CoverMode::Greedy => {
                let env = GreedyEnvelope::new(space)?;
                eps.iter().map(|&e| Ok((env.count(e)? as f64).ln())).collect::<Result<Vec<f64>>>()?
            }
            CoverMode::Exact => eps
                .par_iter()
                .map(|&e| entropy(space, e, mode))
                .collect::<Result<Vec<f64>>>()?,
        };
        Self::measured(eps, h, mode.into(), d)
    }

    /// Hölder model with `c2` fitted so the bound dominates greedy counts of
    /// `space` at the given radii.
    pub fn holder_fit(space: &FiniteMetricSpace, dim: u32, alpha: f64, eps: &[f64]) -> Result<Self> {
        let d = diameter(space)?;
        let env = GreedyEnvelope::new(space)?;
        let measured = eps
            .iter()
            .map(|&e| Ok((e, env.count(e)?)))
            .collect::<Result<Vec<_>>>()?;
        let c2 = fit_holder_constant(&measured, dim, alpha);
        Self::holder(HolderModel::new(dim, alpha, c2)?, d)
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Self::Measured { diameter, .. } | Self::Holder { diameter, .. } => *diameter,
        }
    }

    pub fn mode(&self) -> ProfileMode {
        match self {
            Self::Measured { mode, .. } => *mode,
            Self::Holder { .. } => ProfileMode::Model,
        }
    }

    pub fn is_model(&self) -> bool {
        matches!(self, Self::Holder { .. })
    }

    /// `H(exp(t))`.
    pub fn entropy_at_log(&self, t: f64) -> f64 {
        let eps = t.exp();
        if eps >= self.diameter() {
            return 0.0;
        }
        match self {
            Self::Measured { eps_grid, h_values, .. } => {
                // largest grid radius <= eps; below the grid, the smallest radius
                let k = eps_grid.partition_point(|&g| g > eps);
                h_values[k.min(h_values.len() - 1)]
            }
            Self::Holder { model, .. } => model.entropy_at_log(t),
        }
    }

    pub fn entropy_at(&self, eps: f64) -> f64 {
        self.entropy_at_log(eps.ln())
    }

    /// Smallest radius the profile resolves (model: `1e-4 D`).
    pub fn eps_min(&self) -> f64 {
        match self {
            Self::Measured { eps_grid, .. } => *eps_grid.last().unwrap(),
            Self::Holder { diameter, .. } => DEFAULT_EPS_FLOOR * diameter,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegralVerdict {
    Finite,
    Divergent,
    FiniteAtResolution,
}

impl IntegralVerdict {
    pub fn is_finite(self) -> bool {
        !matches!(self, Self::Divergent)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub eps_min: f64,
    pub diameter: f64,
    pub nodes: usize,
    pub mode: ProfileMode,
}

/// One `(eps, H, integrand)` quadrature node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub eps: f64,
    pub entropy: f64,
    pub integrand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralReport {
    pub condition: String,
    /// `+inf` (JSON `null`) when the tail diverges.
    #[serde(with = "crate::numerics::ext_real")]
    pub value: f64,
    /// Quadrature over `[eps_min, D]` only.
    pub truncated_value: f64,
    pub verdict: IntegralVerdict,
    pub resolution: Resolution,
    /// `d ln f / d ln eps` at the tail probe; model profiles only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tail_slope: Option<f64>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl IntegralReport {
    pub fn write_trace_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_trace_csv(w, &self.trace)
    }
}

pub fn write_trace_csv<W: std::io::Write>(w: W, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["eps", "entropy", "integrand"])?;
    for r in trace {
        w.write_record([fmt_f64(r.eps), fmt_f64(r.entropy), fmt_f64(r.integrand)])?;
    }
    w.flush()?;
    Ok(())
}

/// Integrates `exp(log_integrand(H(eps)))` over `(0, D]`.
///
/// `log_integrand` maps an entropy value to `ln f`.
pub fn integrate_over_profile(
    condition: &str,
    profile: &EntropyProfile,
    log_integrand: &(dyn Fn(f64) -> Result<f64> + Sync),
    nodes: usize,
) -> Result<IntegralReport> {
    let d = profile.diameter();
    let eps_min = profile.eps_min().min(d);
    let resolution = Resolution {
        eps_min,
        diameter: d,
        nodes,
        mode: profile.mode(),
    };
    if d == 0.0 {
        return Ok(IntegralReport {
            condition: condition.into(),
            value: 0.0,
            truncated_value: 0.0,
            verdict: IntegralVerdict::FiniteAtResolution,
            resolution,
            tail_slope: None,
            notes: vec!["single-point space: zero diameter".into()],
            trace: Vec::new(),
        });
    }
    let ts: Vec<f64> = log_grid(eps_min, d, nodes.max(2)).iter().map(|e| e.ln()).collect();
    let rows: Vec<(f64, f64)> = ts
        .par_iter()
        .map(|&t| {
            let h = profile.entropy_at_log(t);
            Ok((h, log_integrand(h)?))
        })
        .collect::<Result<_>>()?;
    let eps: Vec<f64> = ts.iter().map(|t| t.exp()).collect();
    let values: Vec<f64> = rows.iter().map(|(_, lf)| lf.exp()).collect();
    let terms: Vec<f64> = eps
        .windows(2)
        .zip(values.windows(2))
        .map(|(e, y)| 0.5 * (e[1] - e[0]) * (y[0] + y[1]))
        .collect();
    let truncated = pairwise_sum(&terms);
    let trace = ts
        .iter()
        .zip(&rows)
        .map(|(&t, &(h, lf))| TraceRow {
            eps: t.exp(),
            entropy: h,
            integrand: lf.exp(),
        })
        .collect();

    let mut notes = Vec::new();
    let (value, verdict, tail_slope) = match profile {
        EntropyProfile::Measured { .. } => {
            notes.push(format!("quadrature truncated below eps = {}", fmt_f64(eps_min)));
            (truncated, IntegralVerdict::FiniteAtResolution, None)
        }
        EntropyProfile::Holder { .. } => {
            let probe = eps_min.ln() - TAIL_PROBE_DEPTH;
            let lf = |t: f64| log_integrand(profile.entropy_at_log(t));
            let slope = (lf(probe + SLOPE_STEP)? - lf(probe - SLOPE_STEP)?) / (2.0 * SLOPE_STEP);
            notes.push(format!("tail log-slope {slope:.6} at eps = exp({probe:.3})"));
            if slope > -1.0 + SLOPE_MARGIN {
                // power-law extrapolation of the integrand on (0, eps_min)
                let t0 = eps_min.ln();
                let s0 = (lf(t0)? - lf(t0 - SLOPE_STEP)?) / SLOPE_STEP;
                let s = if s0 > -1.0 + SLOPE_MARGIN { s0 } else { slope };
                let tail = (lf(t0)? + t0).exp() / (1.0 + s);
                (truncated + tail, IntegralVerdict::Finite, Some(slope))
            } else {
                (f64::INFINITY, IntegralVerdict::Divergent, Some(slope))
            }
        }
    };
    Ok(IntegralReport {
        condition: condition.into(),
        value,
        truncated_value: truncated,
        verdict,
        resolution,
        tail_slope,
        notes,
        trace,
    })
}

/// `J(psi, d) = int_0^D exp(psi_*(ln 2 + H(eps))) d eps`.
pub fn entropy_integral(profile: &EntropyProfile, psi: &PsiFunction, opts: &ExtremumOptions) -> Result<IntegralReport> {
    let f = |h: f64| psi_lower_star(psi, std::f64::consts::LN_2 + h, opts);
    integrate_over_profile("entropy-integral", profile, &f, DEFAULT_NODES)
}

/// `int_0^D H(eps)^k d eps`.
pub fn entropy_power_integral(profile: &EntropyProfile, k: f64, condition: &str) -> Result<IntegralReport> {
    let f = move |h: f64| Ok(if h > 0.0 { k * h.ln() } else if k == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    integrate_over_profile(condition, profile, &f, DEFAULT_NODES)
}

/// Verdict of a hypothesis check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub condition: String,
    #[serde(with = "crate::numerics::ext_real")]
    pub sigma2: f64,
    pub sigma2_finite: bool,
    pub integral: IntegralReport,
    pub conclusion: String,
    pub satisfied: bool,
    pub notes: Vec<String>,
}

pub const SATISFIED: &str = "hypotheses-satisfied-at-resolution";
pub const FAILED_VARIANCE: &str = "hypothesis-failed(variance-bound)";
pub const FAILED_INTEGRAL: &str = "hypothesis-failed(entropy-integral)";

fn conclude(condition: &str, sigma2: f64, integral: IntegralReport, mut notes: Vec<String>) -> CheckReport {
    let sigma2_finite = sigma2.is_finite();
    let conclusion = if !sigma2_finite {
        FAILED_VARIANCE
    } else if !integral.verdict.is_finite() {
        FAILED_INTEGRAL
    } else {
        SATISFIED
    };
    notes.push("suprema over n evaluated on a finite grid".into());
    CheckReport {
        condition: condition.into(),
        sigma2,
        sigma2_finite,
        integral,
        conclusion: conclusion.into(),
        satisfied: conclusion == SATISFIED,
        notes,
    }
}

/// Power-level check: `sigma^2 < inf` and `J(psi_R, d_bar) < inf`.
pub fn power_level_check(
    sigma2: f64,
    profile_under_dbar: &EntropyProfile,
    psi: &PsiFunction,
    opts: &ExtremumOptions,
) -> Result<CheckReport> {
    let psi_r = rosenthal_transform(psi)?;
    let integral = entropy_integral(profile_under_dbar, &psi_r, opts)?;
    Ok(conclude("power-level", sigma2, integral, vec!["integrand built from the Rosenthal transform of psi".into()]))
}

/// Exponent on `H` in the exponential-level condition, `(2 + q) / (2q)`.
pub fn exponential_level_exponent(q: f64) -> f64 {
    (2.0 + q) / (2.0 * q)
}

/// Exponential-level check: `sigma^2 < inf` and
/// `int_0^D H(rho_q, eps)^((2+q)/(2q)) d eps < inf`.
pub fn exponential_level_check(profile_under_rhoq: &EntropyProfile, q: f64, sigma2: f64) -> Result<CheckReport> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("q must be positive, got {q}")));
    }
    let k = exponential_level_exponent(q);
    let integral = entropy_power_integral(profile_under_rhoq, k, "exponential-level")?;
    Ok(conclude("exponential-level", sigma2, integral, vec![format!("entropy exponent {k}")]))
}

/// `int_0^D N(eps)^(1/r) d eps`.
pub fn pisier_condition(profile_under_dr: &EntropyProfile, r: f64) -> Result<IntegralReport> {
    if !(r >= 2.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("r must be >= 2, got {r}")));
    }
    let f = move |h: f64| Ok(h / r);
    integrate_over_profile("pisier", profile_under_dr, &f, DEFAULT_NODES)
}

/// Both candidate entropy exponents on one profile: `1/q` (independent case)
/// and `(2+q)/(2q)` (martingale case). Which one is sharp is not settled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentComparison {
    pub q: f64,
    pub independent: IntegralReport,
    pub martingale: IntegralReport,
}

pub fn exponent_comparison(profile: &EntropyProfile, q: f64) -> Result<ExponentComparison> {
    if !(q > 0.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("q must be positive, got {q}")));
    }
    Ok(ExponentComparison {
        q,
        independent: entropy_power_integral(profile, 1.0 / q, "independent-exponent")?,
        martingale: entropy_power_integral(profile, exponential_level_exponent(q), "martingale-exponent")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::Metric;
    use crate::psi::psi_lower_star;
    use approx::assert_relative_eq;

    fn opts() -> ExtremumOptions {
        ExtremumOptions::default()
    }

    #[test]
    fn constant_zero_entropy() {
        let p = EntropyProfile::measured(vec![2.0, 1.0, 1e-4], vec![0.0; 3], ProfileMode::Exact, 2.0).unwrap();
        let psi = PsiFunction::closed_power(2.0).unwrap();
        let j = entropy_integral(&p, &psi, &opts()).unwrap();
        let c = psi_lower_star(&psi, std::f64::consts::LN_2, &opts()).unwrap().exp();
        // truncated at eps_min = 1e-4
        assert_relative_eq!(j.value, (2.0 - 1e-4) * c, max_relative = 1e-12);
        assert_eq!(j.verdict, IntegralVerdict::FiniteAtResolution);

        let pis = pisier_condition(&p, 3.0).unwrap();
        assert_relative_eq!(pis.value, 2.0 - 1e-4, max_relative = 1e-12);
        let e = exponential_level_check(&p, 2.0, 1.0).unwrap();
        assert_eq!(e.integral.value, 0.0);
        assert!(e.satisfied);
    }

    #[test]
    fn single_point_space() {
        let s = FiniteMetricSpace::from_coords(vec![vec![0.5]], Metric::Euclidean).unwrap();
        let p = EntropyProfile::from_space(&s, CoverMode::Exact, 16, 1e-4).unwrap();
        let r = power_level_check(1.0, &p, &PsiFunction::degenerate(3.0).unwrap(), &opts()).unwrap();
        assert_eq!(r.conclusion, SATISFIED);
        assert_eq!(r.integral.value, 0.0);
    }

    #[test]
    fn holder_power_level_rule() {
        for dim in [1u32, 2] {
            for alpha in [0.5, 1.0] {
                for r in [2.5, 3.0, 5.0] {
                    let p = EntropyProfile::holder(HolderModel::new(dim, alpha, 1.0).unwrap(), 1.0).unwrap();
                    let psi = PsiFunction::degenerate(r).unwrap();
                    let chk = power_level_check(1.0, &p, &psi, &opts()).unwrap();
                    let expect = alpha * r > dim as f64;
                    assert_eq!(chk.integral.verdict.is_finite(), expect, "dim={dim} alpha={alpha} r={r}");
                    assert_eq!(chk.satisfied, expect);
                    assert_eq!(pisier_condition(&p, r).unwrap().verdict.is_finite(), expect);
                    assert_relative_eq!(chk.integral.tail_slope.unwrap(), -(dim as f64) / (alpha * r), max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn finite_model_integral_matches_closed_form() {
        // H = 0.5 ln(1/eps), integrand exp(H/r) with r = 2.5: eps^-0.2 on (0, 1]
        let p = EntropyProfile::holder(HolderModel::new(1, 2.0, 1.0).unwrap(), 1.0).unwrap();
        let rep = pisier_condition(&p, 2.5).unwrap();
        assert_relative_eq!(rep.value, 1.0 / 0.8, max_relative = 1e-4);
    }

    #[test]
    fn exponential_level_always_finite_on_holder() {
        assert_eq!(exponential_level_exponent(2.0), 1.0);
        for q in [0.5, 1.0, 2.0] {
            for dim in [1, 2] {
                for alpha in [0.5, 1.0] {
                    let p = EntropyProfile::holder(HolderModel::new(dim, alpha, 3.0).unwrap(), 1.0).unwrap();
                    let r = exponential_level_check(&p, q, 1.0).unwrap();
                    assert_eq!(r.integral.verdict, IntegralVerdict::Finite);
                    assert!(r.satisfied);
                }
            }
        }
    }

    #[test]
    fn variance_failure_dominates() {
        let p = EntropyProfile::measured(vec![1.0], vec![0.0], ProfileMode::Greedy, 1.0).unwrap();
        let r = power_level_check(f64::INFINITY, &p, &PsiFunction::degenerate(3.0).unwrap(), &opts()).unwrap();
        assert_eq!(r.conclusion, FAILED_VARIANCE);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["sigma2"].is_null());
    }

    #[test]
    fn measured_step_lookup_and_validation() {
        let p = EntropyProfile::measured(vec![1.0, 0.5, 0.1], vec![0.0, 1.0, 2.0], ProfileMode::Greedy, 1.0).unwrap();
        assert_eq!(p.entropy_at(0.7), 1.0);
        assert_eq!(p.entropy_at(0.5), 1.0);
        assert_eq!(p.entropy_at(0.2), 2.0);
        assert_eq!(p.entropy_at(0.01), 2.0);
        assert_eq!(p.entropy_at(1.5), 0.0);
        assert!(EntropyProfile::measured(vec![1.0, 0.5], vec![1.0, 0.5], ProfileMode::Greedy, 2.0).is_err());
        assert!(EntropyProfile::measured(vec![1.0], vec![1.0], ProfileMode::Greedy, 1.0).is_err());
    }

    #[test]
    fn comparison_reports_both_exponents() {
        let p = EntropyProfile::holder(HolderModel::new(1, 1.0, 2.0).unwrap(), 1.0).unwrap();
        let c = exponent_comparison(&p, 1.0).unwrap();
        assert!(c.independent.value.is_finite() && c.martingale.value.is_finite());
        // H^1 vs H^1.5 with H >= 0: larger exponent dominates where H > 1
        assert!(c.martingale.value > c.independent.value * 0.5);
    }

    #[test]
    fn trace_csv_has_header() {
        let p = EntropyProfile::holder(HolderModel::new(1, 1.0, 2.0).unwrap(), 1.0).unwrap();
        let rep = pisier_condition(&p, 3.0).unwrap();
        let mut buf = Vec::new();
        rep.write_trace_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("eps,entropy,integrand\n"));
        assert_eq!(s.lines().count(), DEFAULT_NODES + 1);
    }
}
