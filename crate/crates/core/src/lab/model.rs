//! Martingale-difference field models and their path generator.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::tails::TailFunction;

fn one() -> f64 {
    1.0
}

/// Covariance kernel of a Gaussian field on `R^dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `variance * exp(-|x - y|^2 / (2 length^2))`
    SquaredExponential { variance: f64, length: f64 },
    /// `variance * exp(-|x - y| / length)`
    Exponential { variance: f64, length: f64 },
    /// `variance * prod_d min(x_d, y_d)`, nonnegative coordinates only.
    BrownianMin { variance: f64 },
    /// Explicit covariance matrix over the model points.
    Matrix { values: Vec<Vec<f64>> },
}

impl Kernel {
    fn validate(&self, points: &[Vec<f64>]) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self {
            Kernel::SquaredExponential { variance, length } | Kernel::Exponential { variance, length } => {
                if !positive(*variance) || !positive(*length) {
                    return Err(Error::InvalidModel("kernel variance and length must be positive".into()));
                }
            }
            Kernel::BrownianMin { variance } => {
                if !positive(*variance) {
                    return Err(Error::InvalidModel("kernel variance must be positive".into()));
                }
                if points.iter().flatten().any(|c| *c < 0.0) {
                    return Err(Error::InvalidModel("Brownian kernel needs nonnegative coordinates".into()));
                }
            }
            Kernel::Matrix { values } => {
                let m = points.len();
                if values.len() != m || values.iter().any(|r| r.len() != m) {
                    return Err(Error::InvalidModel(format!("kernel matrix must be {m} x {m}")));
                }
                for i in 0..m {
                    for j in 0..m {
                        if !values[i][j].is_finite() || (values[i][j] - values[j][i]).abs() > 1e-12 {
                            return Err(Error::InvalidModel("kernel matrix must be finite and symmetric".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Covariance between points `i` and `j`.
    pub fn eval(&self, points: &[Vec<f64>], i: usize, j: usize) -> f64 {
        let (a, b) = (&points[i], &points[j]);
        match self {
            Kernel::SquaredExponential { variance, length } => {
                let r = Metric::Euclidean.distance(a, b);
                variance * (-r * r / (2.0 * length * length)).exp()
            }
            Kernel::Exponential { variance, length } => {
                variance * (-Metric::Euclidean.distance(a, b) / length).exp()
            }
            Kernel::BrownianMin { variance } => variance * a.iter().zip(b).map(|(x, y)| x.min(*y)).product::<f64>(),
            Kernel::Matrix { values } => values[i][j],
        }
    }

    fn matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        let m = points.len();
        DMatrix::from_fn(m, m, |i, j| self.eval(points, i, j))
    }
}

/// Square-root factor `L` with `L L^T = K`: Cholesky when `K` is positive
/// definite, otherwise the symmetric eigen-factor with negative eigenvalues
/// clipped (rejecting clearly indefinite input).
fn covariance_factor(k: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = k.clone().cholesky() {
        return Ok(ch.l());
    }
    let scale = k.diagonal().abs().max().max(1e-300);
    let eig = SymmetricEigen::new(k);
    if eig.eigenvalues.iter().any(|&l| l < -1e-9 * scale) {
        return Err(Error::InvalidModel("kernel matrix is not positive semidefinite".into()));
    }
    let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * sqrt_l)
}

fn default_garch_omega() -> f64 {
    0.2
}
fn default_garch_alpha() -> f64 {
    0.3
}
fn default_garch_beta() -> f64 {
    0.5
}
fn default_sigma_low() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    /// `xi_i` iid centred Gaussian fields with the given kernel.
    IidGaussianField { kernel: Kernel },
    /// `xi_i(x) = sqrt(2) A_i cos(omega * sum_d x_d + Theta_i)` with
    /// `P(A_i > t) = exp(-(t/K)^q)` and uniform phase.
    IidWeibullField {
        q: f64,
        k: f64,
        #[serde(default = "one")]
        omega: f64,
    },
    /// `xi_i(x) = sigma_i(x) eps_i(x)` with Gaussian innovations `eps_i` and
    /// `sigma_i^2 = omega + alpha eps_{i-1}^2 + beta sigma_{i-1}^2`, clamped to `[0.5, 2]`.
    GarchLike {
        kernel: Kernel,
        #[serde(default = "default_garch_omega")]
        omega: f64,
        #[serde(default = "default_garch_alpha")]
        alpha: f64,
        #[serde(default = "default_garch_beta")]
        beta: f64,
    },
    /// `xi_i(x) = a_i s_i(x)` with independent fair signs and deterministic
    /// amplitudes `a_i = amplitude * sqrt(1 + swing * cos(2 pi i phi))`.
    BoundedSign {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        swing: f64,
    },
    /// `xi_i(x) = sigma_i(x) eps_i(x)`: symmetric Weibull(K, q) magnitudes
    /// truncated at `cap`, scale `sigma_i` a logistic function of `xi_{i-1}(x)`
    /// between `sigma_low` and `sigma_high`.
    TruncatedWeibullMd {
        q: f64,
        k: f64,
        cap: f64,
        #[serde(default = "default_sigma_low")]
        sigma_low: f64,
        #[serde(default = "one")]
        sigma_high: f64,
    },
}

/// Model configuration. `scale` multiplies the field; `variance_growth = g`
/// multiplies `xi_i` by `i^(g/2)`; `conditional_bias = b` adds
/// `b * sign(xi_{i-1}(x))`, which breaks the martingale-difference property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleFieldModel {
    pub name: String,
    pub points: Vec<Vec<f64>>,
    #[serde(default = "default_metric")]
    pub metric: Metric,
    pub kind: ModelKind,
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub variance_growth: f64,
    #[serde(default)]
    pub conditional_bias: f64,
}

fn default_metric() -> Metric {
    Metric::Euclidean
}

/// Golden-ratio rotation driving the bounded-sign amplitudes.
const AMPLITUDE_ROTATION: f64 = 0.618_033_988_749_894_9;

impl MartingaleFieldModel {
    /// Model on 1-d points with default options.
    pub fn new(name: &str, points: Vec<f64>, kind: ModelKind, horizon: usize, seed: u64) -> Result<Self> {
        let m = Self {
            name: name.into(),
            points: points.into_iter().map(|x| vec![x]).collect(),
            metric: Metric::Euclidean,
            kind,
            horizon,
            seed,
            scale: 1.0,
            variance_growth: 0.0,
            conditional_bias: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_scale(mut self, c: f64) -> Self {
        self.scale = c;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidModel(format!("{}: {s}", self.name)));
        if self.points.is_empty() {
            return bad("needs at least one point".into());
        }
        let dim = self.points[0].len();
        if dim == 0 || self.points.iter().any(|p| p.len() != dim || p.iter().any(|c| !c.is_finite())) {
            return bad("points must share a positive dimension and be finite".into());
        }
        if self.horizon == 0 {
            return bad("horizon must be positive".into());
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return bad(format!("scale must be positive, got {}", self.scale));
        }
        if !self.variance_growth.is_finite() || !self.conditional_bias.is_finite() {
            return bad("growth and bias must be finite".into());
        }
        let pos = |v: f64| v > 0.0 && v.is_finite();
        match &self.kind {
            ModelKind::IidGaussianField { kernel } => kernel.validate(&self.points)?,
            ModelKind::IidWeibullField { q, k, omega } => {
                if !pos(*q) || !pos(*k) || !omega.is_finite() {
                    return bad("Weibull field needs q > 0, K > 0 and finite omega".into());
                }
            }
            ModelKind::GarchLike { kernel, omega, alpha, beta } => {
                kernel.validate(&self.points)?;
                if !pos(*omega) || !(*alpha >= 0.0) || !(*beta >= 0.0) || !alpha.is_finite() || !beta.is_finite() {
                    return bad("GARCH parameters need omega > 0, alpha >= 0, beta >= 0".into());
                }
            }
            ModelKind::BoundedSign { amplitude, swing } => {
                if !pos(*amplitude) || !(0.0..1.0).contains(swing) {
                    return bad("bounded sign needs amplitude > 0 and swing in [0, 1)".into());
                }
            }
            ModelKind::TruncatedWeibullMd { q, k, cap, sigma_low, sigma_high } => {
                if !pos(*q) || !pos(*k) || !pos(*cap) || !pos(*sigma_low) || !(sigma_high >= sigma_low) || !sigma_high.is_finite() {
                    return bad("truncated Weibull needs q, K, cap > 0 and 0 < sigma_low <= sigma_high".into());
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `xi_i` has the same law for every `i`.
    pub fn is_index_stationary(&self) -> bool {
        self.variance_growth == 0.0
            && self.conditional_bias == 0.0
            && matches!(
                self.kind,
                ModelKind::IidGaussianField { .. }
                    | ModelKind::IidWeibullField { .. }
                    | ModelKind::BoundedSign { swing: 0.0, .. }
            )
    }

    /// The differences are independent across `i` (not just orthogonal).
    pub fn has_independent_increments(&self) -> bool {
        self.conditional_bias == 0.0
            && matches!(
                self.kind,
                ModelKind::IidGaussianField { .. } | ModelKind::IidWeibullField { .. } | ModelKind::BoundedSign { .. }
            )
    }

    fn growth(&self, i: usize) -> f64 {
        if self.variance_growth == 0.0 {
            1.0
        } else {
            (i as f64).powf(0.5 * self.variance_growth)
        }
    }

    /// Bounded-sign amplitude `a_i` before `scale` and growth.
    fn sign_amplitude(amplitude: f64, swing: f64, i: usize) -> f64 {
        if swing == 0.0 {
            return amplitude;
        }
        let frac = (i as f64 * AMPLITUDE_ROTATION).fract();
        amplitude * (1.0 + swing * (TAU * frac).cos()).sqrt()
    }

    /// `Var(xi_i(x))` when known in closed form.
    pub fn index_variance(&self, i: usize, x: usize) -> Option<f64> {
        if self.conditional_bias != 0.0 {
            return None;
        }
        let base = match &self.kind {
            ModelKind::IidGaussianField { kernel } => kernel.eval(&self.points, x, x),
            ModelKind::IidWeibullField { q, k, .. } => k * k * gamma(1.0 + 2.0 / q),
            ModelKind::BoundedSign { amplitude, swing } => Self::sign_amplitude(*amplitude, *swing, i).powi(2),
            _ => return None,
        };
        Some(base * (self.scale * self.growth(i)).powi(2))
    }

    /// `Var(eta_n(x)) = n^-1 sum_{i<=n} Var(xi_i(x))` when known.
    pub fn eta_variance(&self, n: usize, x: usize) -> Option<f64> {
        let mut s = 0.0;
        for i in 1..=n {
            s += self.index_variance(i, x)?;
        }
        Some(s / n as f64)
    }

    /// `Cov(eta_n(x), eta_n(y))` when known in closed form.
    pub fn eta_covariance(&self, n: usize, x: usize, y: usize) -> Option<f64> {
        if self.conditional_bias != 0.0 || self.variance_growth != 0.0 {
            return None;
        }
        let c2 = self.scale * self.scale;
        match &self.kind {
            ModelKind::IidGaussianField { kernel } => Some(c2 * kernel.eval(&self.points, x, y)),
            ModelKind::IidWeibullField { q, k, omega } => {
                let shift = omega * (self.points[x].iter().sum::<f64>() - self.points[y].iter().sum::<f64>());
                Some(c2 * k * k * gamma(1.0 + 2.0 / q) * shift.cos())
            }
            ModelKind::BoundedSign { .. } => Some(if x == y { self.eta_variance(n, x)? } else { 0.0 }),
            _ => None,
        }
    }

    /// One-sided tail `T` with `max(P(xi_i(x) > t), P(xi_i(x) < -t)) <= T(t)`
    /// for every `i` and `x`, for models where it is known.
    pub fn dominating_tail(&self) -> Option<TailFunction> {
        if self.variance_growth != 0.0 || self.conditional_bias != 0.0 {
            return None;
        }
        match &self.kind {
            ModelKind::BoundedSign { amplitude, swing } => {
                TailFunction::bounded(self.scale * amplitude * (1.0 + swing).sqrt()).ok()
            }
            ModelKind::TruncatedWeibullMd { q, k, cap, sigma_high, .. } => {
                // P(sigma eps > t) <= P(|eps| > t / sigma_high) / 2
                let top = self.scale * sigma_high * cap;
                let nodes = 400;
                let trunc_mass = 1.0 - (-(cap / k).powf(*q)).exp();
                let mut grid = vec![0.0];
                let mut vals = vec![1.0];
                for j in 1..=nodes {
                    let t = top * j as f64 / nodes as f64;
                    let u = t / (self.scale * sigma_high);
                    let exceed = if j == nodes {
                        0.0
                    } else {
                        ((-(u / k).powf(*q)).exp() - (-(cap / k).powf(*q)).exp()) / trunc_mass
                    };
                    grid.push(t);
                    vals.push(0.5 * exceed.max(0.0));
                }
                TailFunction::tabulated(grid, vals).ok()
            }
            _ => None,
        }
    }

    pub fn prepare(&self) -> Result<PreparedModel<'_>> {
        self.validate()?;
        let factor = match &self.kind {
            ModelKind::IidGaussianField { kernel } | ModelKind::GarchLike { kernel, .. } => {
                Some(covariance_factor(kernel.matrix(&self.points))?)
            }
            _ => None,
        };
        Ok(PreparedModel { model: self, factor })
    }
}

/// A validated model with its covariance factor, ready to generate paths.
pub struct PreparedModel<'a> {
    model: &'a MartingaleFieldModel,
    factor: Option<DMatrix<f64>>,
}

/// Per-replication scratch space.
#[derive(Default)]
pub struct PathScratch {
    z: Vec<f64>,
    eps: Vec<f64>,
    state: Vec<f64>,
    prev: Vec<f64>,
}

impl PreparedModel<'_> {
    pub fn model(&self) -> &MartingaleFieldModel {
        self.model
    }

    fn gaussian_vector(&self, rng: &mut ChaCha8Rng, s: &mut PathScratch) {
        let l = self.factor.as_ref().expect("Gaussian kinds carry a factor");
        let m = l.nrows();
        s.z.clear();
        s.z.extend((0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        s.eps.clear();
        for r in 0..m {
            let mut acc = 0.0;
            for c in 0..m {
                acc += l[(r, c)] * s.z[c];
            }
            s.eps.push(acc);
        }
    }

    /// Writes `xi_i(x)` for `i = 1..=n` into `out` (row `i - 1`, `n x m`).
    pub fn fill_path(&self, rng: &mut ChaCha8Rng, n: usize, out: &mut Vec<f64>, s: &mut PathScratch) -> Result<()> {
        let model = self.model;
        if n > model.horizon {
            return Err(Error::HorizonExceeded { n, horizon: model.horizon });
        }
        let m = model.len();
        out.clear();
        out.resize(n * m, 0.0);
        s.state.clear();
        s.state.resize(m, 1.0);
        s.prev.clear();
        s.prev.resize(m, 0.0);
        let mut last_final = vec![0.0; m];
        for i in 1..=n {
            let row = &mut out[(i - 1) * m..i * m];
            match &model.kind {
                ModelKind::IidGaussianField { .. } => {
                    self.gaussian_vector(rng, s);
                    row.copy_from_slice(&s.eps);
                }
                ModelKind::IidWeibullField { q, k, omega } => {
                    let u: f64 = rng.random();
                    let a = k * (-(1.0 - u).ln()).powf(1.0 / q);
                    let theta = TAU * rng.random::<f64>();
                    for (x, v) in row.iter_mut().enumerate() {
                        let phase = omega * model.points[x].iter().sum::<f64>() + theta;
                        *v = std::f64::consts::SQRT_2 * a * phase.cos();
                    }
                }
                ModelKind::GarchLike { omega, alpha, beta, .. } => {
                    self.gaussian_vector(rng, s);
                    for x in 0..m {
                        let sigma = if i == 1 {
                            1.0
                        } else {
                            let var = omega + alpha * s.prev[x] * s.prev[x] + beta * s.state[x] * s.state[x];
                            var.sqrt().clamp(0.5, 2.0)
                        };
                        s.state[x] = sigma;
                        s.prev[x] = s.eps[x];
                        row[x] = sigma * s.eps[x];
                    }
                }
                ModelKind::BoundedSign { amplitude, swing } => {
                    let a = MartingaleFieldModel::sign_amplitude(*amplitude, *swing, i);
                    let mut bits = 0u64;
                    for (x, v) in row.iter_mut().enumerate() {
                        if x % 64 == 0 {
                            bits = rng.random();
                        }
                        *v = if (bits >> (x % 64)) & 1 == 1 { a } else { -a };
                    }
                }
                ModelKind::TruncatedWeibullMd { q, k, cap, sigma_low, sigma_high } => {
                    let mass = 1.0 - (-(cap / k).powf(*q)).exp();
                    for x in 0..m {
                        let u: f64 = rng.random();
                        let w = k * (-(1.0 - u * mass).ln()).powf(1.0 / q);
                        let e = if rng.random::<bool>() { w } else { -w };
                        let sigma = sigma_low + (sigma_high - sigma_low) / (1.0 + (-s.prev[x]).exp());
                        s.prev[x] = sigma * e;
                        row[x] = sigma * e;
                    }
                }
            }
            let factor = model.scale * model.growth(i);
            for x in 0..m {
                let mut v = factor * row[x];
                if model.conditional_bias != 0.0 {
                    v += model.conditional_bias * signum0(last_final[x]);
                }
                row[x] = v;
                last_final[x] = v;
            }
        }
        Ok(())
    }
}

fn signum0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
