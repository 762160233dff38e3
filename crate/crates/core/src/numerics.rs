//! One-dimensional extremization, quadrature and summation helpers shared by
//! the calculus modules.

use serde::{Deserialize, Serialize};

/// Knobs for the grid-plus-golden-section extremizers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremumOptions {
    /// Number of log-spaced grid nodes.
    pub grid_points: usize,
    /// Cap on p (and on the Young-Fenchel variable) when the support is unbounded.
    pub p_max: f64,
    /// Relative tolerance of the golden-section refinement.
    pub rel_tol: f64,
}

impl Default for ExtremumOptions {
    fn default() -> Self {
        Self {
            grid_points: 512,
            p_max: 1024.0,
            rel_tol: 1e-9,
        }
    }
}

/// `n` log-spaced nodes from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo, "log_grid needs 0 < lo <= hi");
    if n <= 1 || hi == lo {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect();
    out[0] = lo;
    out[n - 1] = hi;
    out
}

/// Result of a one-dimensional extremization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub arg: f64,
    pub value: f64,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, rel_tol: f64) -> Extremum {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..300 {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()).max(1e-300) * 1e-3 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        Extremum { arg: c, value: fc }
    } else {
        Extremum { arg: d, value: fd }
    }
}

/// Minimizes `f` over `[lo, hi]` (`0 < lo <= hi`) on a log-spaced grid, then
/// refines around the best node with golden-section search in `log p`.
///
/// Non-finite values are treated as `+inf`. Returns `None` when `f` is
/// nowhere finite on the grid.
pub fn minimize_log_grid(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    opts: &ExtremumOptions,
) -> Option<Extremum> {
    let clean = |p: f64| {
        let v = f(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if hi <= lo {
        let v = clean(lo);
        return v.is_finite().then_some(Extremum { arg: lo, value: v });
    }
    let grid = log_grid(lo, hi, opts.grid_points.max(3));
    let values: Vec<f64> = grid.iter().map(|&p| clean(p)).collect();
    let (best, &best_val) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))?;
    if !best_val.is_finite() {
        return None;
    }
    let left = grid[best.saturating_sub(1)].ln();
    let right = grid[(best + 1).min(grid.len() - 1)].ln();
    let g = |t: f64| clean(t.exp());
    let refined = golden_min(&g, left, right, opts.rel_tol);
    let mut out = Extremum {
        arg: grid[best],
        value: best_val,
    };
    if refined.value < out.value {
        out = Extremum {
            arg: refined.arg.exp(),
            value: refined.value,
        };
    }
    Some(out)
}

/// Maximizing counterpart of [`minimize_log_grid`]; `-inf`/NaN values are skipped.
pub fn maximize_log_grid(
    f: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    opts: &ExtremumOptions,
) -> Option<Extremum> {
    minimize_log_grid(
        |p| {
            let v = f(p);
            if v.is_nan() {
                f64::INFINITY
            } else {
                -v
            }
        },
        lo,
        hi,
        opts,
    )
    .map(|e| Extremum {
        arg: e.arg,
        value: -e.value,
    })
}

/// Adaptive Simpson quadrature on `[a, b]` with mixed absolute/relative tolerance.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        rel_tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let both = left + right;
        let err = both - whole;
        let allowed = tol.max(rel_tol * both.abs());
        if depth == 0 || err.abs() <= 15.0 * allowed {
            return both + err / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, rel_tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, rel_tol, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, abs_tol, rel_tol, 48)
}

/// Trapezoid rule over tabulated `(x, y)` nodes (ascending `x`).
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let terms: Vec<f64> = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .collect();
    pairwise_sum(&terms)
}

/// Pairwise (cascade) summation; the result depends only on the slice order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

/// Serde adapter for extended reals: `+inf` round-trips as JSON `null`.
pub mod ext_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_none()
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Formats a float for CSV output; infinities become `inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}
