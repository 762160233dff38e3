//! Tail functions, the nonlinear tail operator `W[T]` and the stretched
//! exponential bounds for normalized martingale sums.
//!
//! `W[T](x) = min(1, inf_{v>0} [exp(-x^2 / (8 v^2)) + M2(v)])` where
//! `M2(v) = -int_v^inf y^2 dT(y)` is the second moment of the tail beyond `v`.

use serde::{Deserialize, Serialize};

use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::numerics::{minimize_log_grid, ExtremumOptions};

/// Largest admissible last value of a tabulated tail.
pub const TABULATED_END_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum TailForm {
    /// `T(x) = exp(-(x/K)^q)` for `x >= 0`.
    ClosedWeibull { k: f64, q: f64 },
    /// Right-continuous step function: `T = 1` left of `x_grid[0]`,
    /// `T = values[j]` on `[x_grid[j], x_grid[j+1])`.
    Tabulated { x_grid: Vec<f64>, values: Vec<f64> },
    /// Tail of the zero variable: no mass above `0`.
    DegenerateZero,
}

/// A validated tail function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TailForm", into = "TailForm")]
pub struct TailFunction {
    form: TailForm,
}

impl TryFrom<TailForm> for TailFunction {
    type Error = Error;

    fn try_from(form: TailForm) -> Result<Self> {
        match &form {
            TailForm::ClosedWeibull { k, q } => {
                if !(*k > 0.0 && k.is_finite() && *q > 0.0 && q.is_finite()) {
                    return Err(Error::InvalidTail(format!("Weibull tail needs K > 0 and q > 0, got K={k}, q={q}")));
                }
            }
            TailForm::Tabulated { x_grid, values } => {
                if x_grid.is_empty() || x_grid.len() != values.len() {
                    return Err(Error::InvalidTail("grid and values must be nonempty and of equal length".into()));
                }
                if !(x_grid[0] >= 0.0) || x_grid.windows(2).any(|w| !(w[1] > w[0])) || x_grid.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidTail("grid must be finite, nonnegative and strictly ascending".into()));
                }
                if values.iter().any(|v| !(0.0..=1.0).contains(v)) || values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidTail("values must lie in [0, 1] and be nonincreasing".into()));
                }
                if x_grid[0] == 0.0 && values[0] != 1.0 {
                    return Err(Error::InvalidTail("T(0) must equal 1".into()));
                }
                if *values.last().unwrap() > TABULATED_END_TOL {
                    return Err(Error::InvalidTail(format!(
                        "last tabulated value {} exceeds {TABULATED_END_TOL}",
                        values.last().unwrap()
                    )));
                }
            }
            TailForm::DegenerateZero => {}
        }
        Ok(Self { form })
    }
}

impl From<TailFunction> for TailForm {
    fn from(t: TailFunction) -> Self {
        t.form
    }
}

impl TailFunction {
    pub fn closed_weibull(k: f64, q: f64) -> Result<Self> {
        TailForm::ClosedWeibull { k, q }.try_into()
    }

    pub fn tabulated(x_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        TailForm::Tabulated { x_grid, values }.try_into()
    }

    pub fn degenerate_zero() -> Self {
        Self {
            form: TailForm::DegenerateZero,
        }
    }

    /// Tail of a variable bounded by `b`: one unit jump at `b`.
    pub fn bounded(b: f64) -> Result<Self> {
        Self::tabulated(vec![0.0, b], vec![1.0, 0.0])
    }

    pub fn form(&self) -> &TailForm {
        &self.form
    }

    /// `T(x)`; `1` for `x < 0`.
    pub fn eval(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match &self.form {
            TailForm::ClosedWeibull { k, q } => (-(x / k).powf(*q)).exp().min(1.0),
            TailForm::Tabulated { x_grid, values } => {
                let j = x_grid.partition_point(|&g| g <= x);
                if j == 0 {
                    1.0
                } else {
                    values[j - 1]
                }
            }
            TailForm::DegenerateZero => {
                if x > 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Jump locations and sizes of a tabulated tail, including the residual
    /// mass placed at the last grid point.
    fn jumps(x_grid: &[f64], values: &[f64]) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(x_grid.len());
        let mut prev = 1.0;
        for (&x, &v) in x_grid.iter().zip(values) {
            if prev > v {
                out.push((x, prev - v));
            }
            prev = v;
        }
        if prev > 0.0 {
            out.push((*x_grid.last().unwrap(), prev));
        }
        out
    }
}

/// `M2(v) = -int_v^inf y^2 dT(y)`, the second moment of the tail mass on `(v, inf)`.
///
/// Closed tails integrate by parts, `v^2 T(v) + int_v^inf 2 y T(y) dy`, and
/// the remaining integral is an upper incomplete gamma function. Tabulated
/// tails sum their jumps.
pub fn tail_second_moment(t: &TailFunction, v: f64) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(Error::InvalidArgument(format!("v must be >= 0, got {v}")));
    }
    match &t.form {
        TailForm::DegenerateZero => Ok(0.0),
        TailForm::Tabulated { x_grid, values } => Ok(TailFunction::jumps(x_grid, values)
            .into_iter()
            .filter(|&(x, _)| x > v)
            .map(|(x, m)| x * x * m)
            .sum()),
        TailForm::ClosedWeibull { k, q } => {
            // int_v^inf 2y exp(-(y/K)^q) dy = (2K^2/q) Gamma(2/q, (v/K)^q)
            let u = (v / k).powf(*q);
            let a = 2.0 / q;
            let upper = if u == 0.0 { 1.0 } else { gamma_ur(a, u) };
            let tail = if upper > 0.0 {
                (ln_gamma(a) + upper.ln()).exp() * 2.0 * k * k / q
            } else {
                0.0
            };
            let total = v * v * (-u).exp() + tail;
            if !total.is_finite() {
                return Err(Error::NonIntegrable(format!("tail second moment overflowed at v = {v}")));
            }
            Ok(total)
        }
    }
}

/// The bracket minimized by `W[T]`, at `v > 0`.
pub fn w_bracket(t: &TailFunction, x: f64, v: f64) -> Result<f64> {
    Ok((-(x * x) / (8.0 * v * v)).exp() + tail_second_moment(t, v)?)
}

/// `W[T](x)` with the default v-grid (512 nodes over `[1e-3 x, 1e3 x]`).
pub fn w_operator(t: &TailFunction, x: f64) -> Result<f64> {
    w_operator_with(t, x, &ExtremumOptions::default())
}

/// `W[T](x)` with an explicit v-grid size (`opts.grid_points`).
///
/// Step tails are minimized exactly: on each interval between jumps the tail
/// term is constant and the Gaussian term increases, so only jump locations
/// and the limit `v -> 0` are candidates.
pub fn w_operator_with(t: &TailFunction, x: f64, opts: &ExtremumOptions) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("x must be positive and finite, got {x}")));
    }
    let at_zero = tail_second_moment(t, 0.0)?;
    let best = match &t.form {
        TailForm::DegenerateZero => 0.0,
        TailForm::Tabulated { x_grid, values } => {
            let mut best = at_zero;
            for (v, _) in TailFunction::jumps(x_grid, values) {
                if v > 0.0 {
                    best = best.min(w_bracket(t, x, v)?);
                }
            }
            best
        }
        TailForm::ClosedWeibull { .. } => {
            let failure = std::cell::Cell::new(None);
            let f = |v: f64| match w_bracket(t, x, v) {
                Ok(val) => val,
                Err(e) => {
                    failure.set(Some(e.to_string()));
                    f64::INFINITY
                }
            };
            let ext = minimize_log_grid(f, 1e-3 * x, 1e3 * x, opts);
            if let Some(msg) = failure.take() {
                return Err(Error::NonIntegrable(msg));
            }
            ext.map_or(at_zero, |e| e.value.min(at_zero))
        }
    };
    Ok(best.min(1.0))
}

/// Uniform-in-`n` bound on the one-sided tails of `n^{-1/2} sum xi_i` (and of
/// `sum b_i xi_i` with `sum b_i^2 = 1`) when every summand's tail is
/// dominated by `T`. Requires `x > 1`.
pub fn martingale_tail_bound(t: &TailFunction, x: f64) -> Result<f64> {
    if !(x > 1.0) {
        return Err(Error::InvalidArgument(format!("the martingale tail bound needs x > 1, got {x}")));
    }
    w_operator(t, x)
}

/// Decay exponent `2q / (2 + q)` of sums of sub-q martingale differences.
pub fn sum_decay_exponent(q: f64) -> f64 {
    2.0 * q / (2.0 + q)
}

fn check_kq(k: f64, q: f64, c: f64) -> Result<()> {
    if !(k > 0.0 && q > 0.0 && c > 0.0) || !(k.is_finite() && q.is_finite() && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("K, q and c must be positive and finite (got {k}, {q}, {c})")));
    }
    Ok(())
}

/// `exp(-c (x/K)^(2q/(2+q)))`; the constant is supplied by the caller.
pub fn weibull_sum_bound(k: f64, q: f64, x: f64, c_fit: f64) -> Result<f64> {
    check_kq(k, q, c_fit)?;
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("x must be >= 0, got {x}")));
    }
    Ok((-c_fit * (x / k).powf(sum_decay_exponent(q))).exp())
}

/// `exp(-c (x/K)^q)` for `x > 1`: the tail of a variable with finite sub-q norm `K`.
pub fn subq_tail_bound(k: f64, q: f64, x: f64, c_fit: f64) -> Result<f64> {
    check_kq(k, q, c_fit)?;
    if !(x > 1.0) {
        return Err(Error::InvalidArgument(format!("x must exceed 1, got {x}")));
    }
    Ok((-c_fit * (x / k).powf(q)).exp())
}

/// One empirical tail point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTail {
    pub x: f64,
    pub tail: f64,
    pub std_error: f64,
}

/// Largest `c` with `exp(-c (x/K)^s) >= tail - 3 SE` at every point.
///
/// `None` when no point constrains `c` (every lower confidence limit is `<= 0`).
pub fn calibrate_constant(points: &[EmpiricalTail], k: f64, s: f64) -> Option<f64> {
    points
        .iter()
        .filter_map(|p| {
            let lower = p.tail - 3.0 * p.std_error;
            (lower > 0.0 && p.x > 0.0).then(|| -lower.min(1.0).ln() / (p.x / k).powf(s))
        })
        .reduce(f64::min)
}

/// Least-squares slope of `ln(-ln W[T](x))` against `ln x`.
pub fn decay_slope(t: &TailFunction, xs: &[f64]) -> Result<f64> {
    let pts = xs
        .iter()
        .map(|&x| {
            let w = w_operator(t, x)?;
            if !(w > 0.0 && w < 1.0) {
                return Err(Error::InvalidArgument(format!("W(x) = {w} at x = {x} has no finite log-log value")));
            }
            Ok((x.ln(), (-w.ln()).ln()))
        })
        .collect::<Result<Vec<_>>>()?;
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("slope needs at least two points".into()));
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
