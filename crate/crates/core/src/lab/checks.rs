//! Monte Carlo checks on martingale-difference field models.

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::engine::{abs_pow, jackknife, replication_rng, run_blocks, Estimate, Stream, SumBlock};
use super::ks::{ks_critical_two_sample, ks_one_sample, ks_p_value, ks_two_sample};
use super::model::{MartingaleFieldModel, PathScratch, PreparedModel};
use crate::distances::{distance_bar, natural_function, IndexMoments, PairwiseMomentField};
use crate::error::{Error, Result};
use crate::psi::{rosenthal_transform, MomentCurve, PsiFunction};
use crate::tails::martingale_tail_bound;

/// Upper bound on the constant of the martingale moment inequality
/// `|n^-1/2 sum zeta_k|_p <= K (p / ln p) sqrt(n^-1 sum |zeta_k|_p^2)`.
pub const OSEKOWSKI_CONSTANT: f64 = 15.5879;
/// Constant of the same inequality for independent summands.
pub const ROSENTHAL_CONSTANT: f64 = 0.6535;

/// Replication budget and worker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabOptions {
    pub replications: u64,
    /// `0` lets the pool choose.
    pub threads: usize,
}

impl LabOptions {
    pub fn new(replications: u64, threads: usize) -> Self {
        Self { replications, threads }
    }
}

/// Identifies a simulation for provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub model: String,
    pub seed: u64,
    pub replications: u64,
}

fn info(model: &MartingaleFieldModel, opts: &LabOptions) -> RunInfo {
    RunInfo {
        model: model.name.clone(),
        seed: model.seed,
        replications: opts.replications,
    }
}

/// Summand sequence fed to the moment inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Target {
    /// `zeta_k = xi_k(x)`
    Point { x: usize },
    /// `zeta_k = xi_k(x1) - xi_k(x2)`
    Pair { x1: usize, x2: usize },
}

impl Target {
    fn value(&self, row: &[f64]) -> f64 {
        match *self {
            Target::Point { x } => row[x],
            Target::Pair { x1, x2 } => row[x1] - row[x2],
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Target::Point { x } => format!("x{x}"),
            Target::Pair { x1, x2 } => format!("x{x1}-x{x2}"),
        }
    }

    fn check(&self, m: usize) -> Result<()> {
        let ok = match *self {
            Target::Point { x } => x < m,
            Target::Pair { x1, x2 } => x1 < m && x2 < m,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("target {} outside the {m} model points", self.label())))
        }
    }
}

/// Per-replication sums over a path of length `n_path`.
fn run_sums(
    prep: &PreparedModel<'_>,
    stream: Stream,
    n_path: usize,
    opts: &LabOptions,
    width: usize,
    observe: impl Fn(&[f64], &mut [f64]) + Sync + Send,
) -> Result<Vec<SumBlock>> {
    let seed = prep.model().seed;
    run_blocks(opts.replications, opts.threads, |range| {
        let mut blk = SumBlock::new(width);
        let mut path = Vec::new();
        let mut scratch = PathScratch::default();
        for rep in range {
            let mut rng = replication_rng(seed, stream, rep);
            prep.fill_path(&mut rng, n_path, &mut path, &mut scratch)?;
            observe(&path, &mut blk.sums);
            blk.count += 1;
        }
        Ok(blk)
    })
}

/// Per-replication values of `eta_n(x)` (or any per-path vector).
fn run_collect(
    prep: &PreparedModel<'_>,
    stream: Stream,
    n_path: usize,
    opts: &LabOptions,
    extract: impl Fn(&[f64], &mut Vec<f64>) + Sync + Send,
) -> Result<Vec<f64>> {
    let seed = prep.model().seed;
    let blocks = run_blocks(opts.replications, opts.threads, |range| {
        let mut out = Vec::new();
        let mut path = Vec::new();
        let mut scratch = PathScratch::default();
        for rep in range {
            let mut rng = replication_rng(seed, stream, rep);
            prep.fill_path(&mut rng, n_path, &mut path, &mut scratch)?;
            extract(&path, &mut out);
        }
        Ok(out)
    })?;
    Ok(blocks.concat())
}

fn eta_into(path: &[f64], m: usize, n: usize, out: &mut Vec<f64>) {
    let norm = 1.0 / (n as f64).sqrt();
    for x in 0..m {
        let s: f64 = (0..n).map(|i| path[i * m + x]).sum();
        out.push(s * norm);
    }
}

/// Replications of `eta_n(x) = n^-1/2 sum_{i<=n} xi_i(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSamples {
    pub info: RunInfo,
    pub n: usize,
    pub points: usize,
    /// Row-major `replications x points`.
    pub values: Vec<f64>,
}

impl EtaSamples {
    pub fn replication(&self, r: usize) -> &[f64] {
        &self.values[r * self.points..(r + 1) * self.points]
    }

    pub fn point(&self, x: usize) -> Vec<f64> {
        self.values.iter().skip(x).step_by(self.points).copied().collect()
    }
}

pub fn simulate_eta(model: &MartingaleFieldModel, n: usize, opts: &LabOptions) -> Result<EtaSamples> {
    simulate_eta_stream(model, n, opts, Stream::Sums)
}

fn simulate_eta_stream(model: &MartingaleFieldModel, n: usize, opts: &LabOptions, stream: Stream) -> Result<EtaSamples> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if n > model.horizon {
        return Err(Error::HorizonExceeded { n, horizon: model.horizon });
    }
    let prep = model.prepare()?;
    let m = model.len();
    let values = run_collect(&prep, stream, n, opts, |path, out| eta_into(path, m, n, out))?;
    Ok(EtaSamples {
        info: info(model, opts),
        n,
        points: m,
        values,
    })
}

fn check_p_grid(p_grid: &[f64], min: f64) -> Result<()> {
    if p_grid.is_empty() || p_grid.iter().any(|&p| !(p >= min && p.is_finite())) || p_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!("p grid must be ascending, finite and >= {min}")));
    }
    Ok(())
}

fn all_pairs(m: usize) -> Vec<(usize, usize)> {
    (0..m).flat_map(|a| ((a + 1)..m).map(move |b| (a, b))).collect()
}

fn norm_estimate(blocks: &[SumBlock], col: usize, p: f64) -> Estimate {
    let mut e = jackknife(blocks, &[col], |v| v[0].max(0.0).powf(1.0 / p));
    e.value = e.value.max(0.0);
    e
}

/// Monte Carlo moment curves of `xi_i(x)` and of pair increments for indices
/// `1..=indices` (a single shared block for index-stationary models).
pub fn estimate_moment_curves(
    model: &MartingaleFieldModel,
    pairs: Option<&[(usize, usize)]>,
    p_grid: &[f64],
    indices: usize,
    opts: &LabOptions,
) -> Result<PairwiseMomentField> {
    check_p_grid(p_grid, 1.0)?;
    if indices == 0 {
        return Err(Error::InvalidArgument("need at least one index".into()));
    }
    if indices > model.horizon {
        return Err(Error::HorizonExceeded { n: indices, horizon: model.horizon });
    }
    let m = model.len();
    let pairs: Vec<(usize, usize)> = match pairs {
        Some(p) => p.iter().map(|&(a, b)| (a.min(b), a.max(b))).filter(|(a, b)| a != b).collect(),
        None => all_pairs(m),
    };
    if pairs.iter().any(|&(_, b)| b >= m) {
        return Err(Error::InvalidArgument("pair index outside the model points".into()));
    }
    let stationary = model.is_index_stationary();
    let n_blocks = if stationary { 1 } else { indices };
    let np = p_grid.len();
    let point_stride = 2 + np;
    let stride = m * point_stride + pairs.len() * np;
    let prep = model.prepare()?;
    let blocks = run_sums(&prep, Stream::Moments, n_blocks, opts, n_blocks * stride, |path, sums| {
        for k in 0..n_blocks {
            let row = &path[k * m..(k + 1) * m];
            let base = k * stride;
            for (x, &v) in row.iter().enumerate() {
                let o = base + x * point_stride;
                sums[o] += v;
                sums[o + 1] += v * v;
                for (j, &p) in p_grid.iter().enumerate() {
                    sums[o + 2 + j] += abs_pow(v, p);
                }
            }
            let o = base + m * point_stride;
            for (q, &(a, b)) in pairs.iter().enumerate() {
                let d = row[a] - row[b];
                for (j, &p) in p_grid.iter().enumerate() {
                    sums[o + q * np + j] += abs_pow(d, p);
                }
            }
        }
    })?;
    let curve = |cols: &dyn Fn(usize) -> usize| -> Result<MomentCurve> {
        let est: Vec<Estimate> = p_grid.iter().enumerate().map(|(j, &p)| norm_estimate(&blocks, cols(j), p)).collect();
        MomentCurve::monte_carlo(
            p_grid.to_vec(),
            est.iter().map(|e| e.value).collect(),
            est.iter().map(|e| e.std_error).collect(),
            model.seed,
            opts.replications,
        )
    };
    let mut out = Vec::with_capacity(n_blocks);
    for k in 0..n_blocks {
        let base = k * stride;
        let mut point_curves = Vec::with_capacity(m);
        let mut variances = Vec::with_capacity(m);
        for x in 0..m {
            let o = base + x * point_stride;
            point_curves.push(curve(&|j| o + 2 + j)?);
            variances.push(jackknife(&blocks, &[o, o + 1], |v| v[1] - v[0] * v[0]).value.max(0.0));
        }
        let mut increments = BTreeMap::new();
        let o = base + m * point_stride;
        for (q, &pair) in pairs.iter().enumerate() {
            increments.insert(pair, curve(&|j| o + q * np + j)?);
        }
        out.push(IndexMoments {
            point_curves,
            variances,
            increments,
        });
    }
    let index_map = if stationary { vec![0; indices] } else { (0..indices).collect() };
    PairwiseMomentField::new(model.points.clone(), p_grid.to_vec(), out, index_map)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsekowskiRow {
    pub target: String,
    pub p: f64,
    pub n: usize,
    /// `|n^-1/2 sum_{k<=n} zeta_k|_p`
    pub lhs: Estimate,
    /// `(p / ln p) sqrt(n^-1 sum_{k<=n} |zeta_k|_p^2)`
    pub rhs: Estimate,
    pub ratio: Estimate,
    /// `ratio + 3 SE <= K`
    pub pass: bool,
    /// For models with independent summands: `ratio <= 0.6535` within 3 SE.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rosenthal_regime: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsekowskiReport {
    pub info: RunInfo,
    pub constant: f64,
    pub rows: Vec<OsekowskiRow>,
}

impl OsekowskiReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Empirical ratios in the martingale moment inequality for every target,
/// `p` and `n`.
pub fn osekowski_check(
    model: &MartingaleFieldModel,
    targets: &[Target],
    p_grid: &[f64],
    n_grid: &[usize],
    opts: &LabOptions,
) -> Result<OsekowskiReport> {
    if !p_grid.iter().all(|&p| p > 1.0) {
        return Err(Error::InvalidArgument("the moment inequality needs p > 1".into()));
    }
    check_p_grid(p_grid, 1.0)?;
    for t in targets {
        t.check(model.len())?;
    }
    let n_max = *n_grid.iter().max().ok_or_else(|| Error::InvalidArgument("empty n grid".into()))?;
    if n_grid.contains(&0) {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if n_max > model.horizon {
        return Err(Error::HorizonExceeded { n: n_max, horizon: model.horizon });
    }
    let (np, nn, m) = (p_grid.len(), n_grid.len(), model.len());
    let per_p = n_max + nn;
    let per_target = np * per_p;
    let prep = model.prepare()?;
    let mut checkpoints = vec![usize::MAX; n_max + 1];
    for (j, &n) in n_grid.iter().enumerate() {
        checkpoints[n] = j;
    }
    let blocks = run_sums(&prep, Stream::Sums, n_max, opts, targets.len() * per_target, |path, sums| {
        for (t, target) in targets.iter().enumerate() {
            let mut s = 0.0;
            for k in 1..=n_max {
                let z = target.value(&path[(k - 1) * m..k * m]);
                s += z;
                for (j, &p) in p_grid.iter().enumerate() {
                    let o = t * per_target + j * per_p;
                    sums[o + k - 1] += abs_pow(z, p);
                    if checkpoints[k] != usize::MAX {
                        sums[o + n_max + checkpoints[k]] += abs_pow(s / (k as f64).sqrt(), p);
                    }
                }
            }
        }
    })?;
    let independent = model.has_independent_increments();
    let mut rows = Vec::new();
    for (t, target) in targets.iter().enumerate() {
        for (j, &p) in p_grid.iter().enumerate() {
            let o = t * per_target + j * per_p;
            for (c, &n) in n_grid.iter().enumerate() {
                let factor = p / p.ln();
                let mut cols: Vec<usize> = (0..n).map(|k| o + k).collect();
                cols.push(o + n_max + c);
                let rhs_of = |v: &[f64]| {
                    let s: f64 = v[..n].iter().map(|mk| mk.max(0.0).powf(2.0 / p)).sum();
                    factor * (s / n as f64).sqrt()
                };
                let lhs_of = |v: &[f64]| v[n].max(0.0).powf(1.0 / p);
                let lhs = jackknife(&blocks, &cols, lhs_of);
                let rhs = jackknife(&blocks, &cols, rhs_of);
                let ratio = jackknife(&blocks, &cols, |v| {
                    let r = rhs_of(v);
                    if r > 0.0 {
                        lhs_of(v) / r
                    } else {
                        0.0
                    }
                });
                rows.push(OsekowskiRow {
                    target: target.label(),
                    p,
                    n,
                    lhs,
                    rhs,
                    ratio,
                    pass: ratio.value + 3.0 * ratio.std_error <= OSEKOWSKI_CONSTANT,
                    rosenthal_regime: independent
                        .then_some(ratio.value - 3.0 * ratio.std_error <= ROSENTHAL_CONSTANT),
                });
            }
        }
    }
    Ok(OsekowskiReport {
        info: info(model, opts),
        constant: OSEKOWSKI_CONSTANT,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquicontinuityRow {
    pub x1: usize,
    pub x2: usize,
    /// `max_n || eta_n(x1) - eta_n(x2) ||` in the Rosenthal-transformed GLS norm.
    pub lhs: Estimate,
    pub dbar: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquicontinuityReport {
    pub info: RunInfo,
    pub psi: PsiFunction,
    pub rows: Vec<EquicontinuityRow>,
}

impl EquicontinuityReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Compares `sup_n ||eta_n(x1) - eta_n(x2)||_{G psi_R}` with `K d_bar(x1, x2)`.
/// Without `psi`, the natural function of the estimated moment field is used.
pub fn equicontinuity_check(
    model: &MartingaleFieldModel,
    psi: Option<&PsiFunction>,
    pairs: &[(usize, usize)],
    p_grid: &[f64],
    n_grid: &[usize],
    opts: &LabOptions,
) -> Result<EquicontinuityReport> {
    if !p_grid.iter().all(|&p| p > 1.0) {
        return Err(Error::InvalidArgument("p grid must lie above 1".into()));
    }
    let n_max = *n_grid.iter().max().ok_or_else(|| Error::InvalidArgument("empty n grid".into()))?;
    let field = estimate_moment_curves(model, Some(pairs), p_grid, n_max, opts)?;
    let psi = match psi {
        Some(p) => p.clone(),
        None => natural_function(&field, p_grid)?,
    };
    let psi_r = rosenthal_transform(&psi)?;
    let (np, nn, m) = (p_grid.len(), n_grid.len(), model.len());
    let per_pair = nn * np;
    let mut checkpoints = vec![usize::MAX; n_max + 1];
    for (j, &n) in n_grid.iter().enumerate() {
        checkpoints[n] = j;
    }
    let prep = model.prepare()?;
    let blocks = run_sums(&prep, Stream::Sums, n_max, opts, pairs.len() * per_pair, |path, sums| {
        for (q, &(a, b)) in pairs.iter().enumerate() {
            let mut s = 0.0;
            for k in 1..=n_max {
                s += path[(k - 1) * m + a] - path[(k - 1) * m + b];
                if checkpoints[k] != usize::MAX {
                    let d = s / (k as f64).sqrt();
                    for (j, &p) in p_grid.iter().enumerate() {
                        sums[q * per_pair + checkpoints[k] * np + j] += abs_pow(d, p);
                    }
                }
            }
        }
    })?;
    let weights: Vec<f64> = p_grid.iter().map(|&p| psi_r.eval(p)).collect();
    let mut rows = Vec::new();
    for (q, &(a, b)) in pairs.iter().enumerate() {
        let cols: Vec<usize> = (0..per_pair).map(|c| q * per_pair + c).collect();
        let lhs = jackknife(&blocks, &cols, |v| {
            let mut best = 0.0f64;
            for c in 0..nn {
                for (j, &p) in p_grid.iter().enumerate() {
                    if weights[j].is_finite() {
                        best = best.max(v[c * np + j].max(0.0).powf(1.0 / p) / weights[j]);
                    }
                }
            }
            best
        });
        let dbar = distance_bar(&field, a, b, &psi, n_grid)?;
        let bound = OSEKOWSKI_CONSTANT * dbar;
        rows.push(EquicontinuityRow {
            x1: a,
            x2: b,
            lhs,
            dbar,
            bound,
            pass: lhs.value - 3.0 * lhs.std_error.max(0.0) <= bound,
        });
    }
    Ok(EquicontinuityReport {
        info: info(model, opts),
        psi,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    pub info: RunInfo,
    pub n: usize,
    pub estimate: Vec<Vec<Estimate>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub analytic: Option<Vec<Vec<f64>>>,
}

/// Empirical covariance of `eta_n` over the model points.
pub fn covariance_estimate(model: &MartingaleFieldModel, n: usize, opts: &LabOptions) -> Result<CovarianceReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if n > model.horizon {
        return Err(Error::HorizonExceeded { n, horizon: model.horizon });
    }
    let m = model.len();
    let prep = model.prepare()?;
    // columns: means, then upper-triangular products
    let tri = |a: usize, b: usize| m + a * m - a * (a + 1) / 2 + b;
    let width = m + m * (m + 1) / 2;
    let blocks = run_sums(&prep, Stream::Sums, n, opts, width, |path, sums| {
        let mut eta = Vec::with_capacity(m);
        eta_into(path, m, n, &mut eta);
        for a in 0..m {
            sums[a] += eta[a];
            for b in a..m {
                sums[tri(a, b)] += eta[a] * eta[b];
            }
        }
    })?;
    let mut estimate = vec![vec![Estimate { value: 0.0, plug_in: 0.0, std_error: 0.0 }; m]; m];
    for a in 0..m {
        for b in a..m {
            let e = jackknife(&blocks, &[a, b, tri(a, b)], |v| v[2] - v[0] * v[1]);
            estimate[a][b] = e;
            estimate[b][a] = e;
        }
    }
    let analytic = (0..m)
        .map(|a| (0..m).map(|b| model.eta_covariance(n, a, b)).collect::<Option<Vec<f64>>>())
        .collect::<Option<Vec<_>>>();
    Ok(CovarianceReport {
        info: info(model, opts),
        n,
        estimate,
        analytic,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointKs {
    pub point: usize,
    pub n: usize,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub info: RunInfo,
    pub n_small: usize,
    pub n_large: usize,
    /// Two-sample KS between the laws of `sup_x |eta_n(x)|` at the two `n`.
    pub ks_stat_supnorm: f64,
    pub critical_value_05: f64,
    pub p_value: f64,
    /// Marginal KS against the Gaussian limit, where its variance is known.
    pub per_point_ks: Vec<PointKs>,
    pub notes: Vec<String>,
}

/// Distributional stabilization of `eta_n` between `n_small` and `n_large`,
/// using independent sample families for the two sizes.
pub fn clt_diagnostic(model: &MartingaleFieldModel, n_small: usize, n_large: usize, opts: &LabOptions) -> Result<CltReport> {
    if n_small == 0 || n_small > n_large {
        return Err(Error::InvalidArgument(format!("need 0 < n_small <= n_large, got ({n_small}, {n_large})")));
    }
    let small = simulate_eta_stream(model, n_small, opts, Stream::SmallN)?;
    let large = simulate_eta_stream(model, n_large, opts, Stream::LargeN)?;
    let sup = |s: &EtaSamples| -> Vec<f64> {
        s.values.chunks(s.points).map(|r| r.iter().fold(0.0f64, |a, v| a.max(v.abs()))).collect()
    };
    let (a, b) = (sup(&small), sup(&large));
    let ks = ks_two_sample(&a, &b);
    let r = opts.replications as usize;
    let mut per_point = Vec::new();
    let mut notes = vec!["KS stabilization is evidence of weak convergence, not a proof of it".to_string()];
    for s in [&small, &large] {
        for x in 0..model.len() {
            match model.eta_variance(s.n, x) {
                Some(v) if v > 0.0 => {
                    let normal = Normal::new(0.0, v.sqrt()).map_err(|e| Error::InvalidModel(e.to_string()))?;
                    per_point.push(PointKs {
                        point: x,
                        n: s.n,
                        ks: ks_one_sample(&s.point(x), |t| normal.cdf(t)),
                    });
                }
                Some(_) => notes.push(format!("point {x} has zero variance; marginal KS skipped")),
                None => {}
            }
        }
    }
    if per_point.is_empty() {
        notes.push("no closed-form limit variance for this model; marginal KS skipped".into());
    }
    Ok(CltReport {
        info: info(model, opts),
        n_small,
        n_large,
        ks_stat_supnorm: ks,
        critical_value_05: ks_critical_two_sample(r, r, 0.05),
        p_value: ks_p_value(ks, (r * r) as f64 / (2 * r) as f64),
        per_point_ks: per_point,
        notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdRow {
    pub point: usize,
    /// `constant`, `sign_prev` or `tanh_avg`.
    pub function: String,
    /// `E[n^-1 sum_i xi_i(x) g_i]`
    pub mean: f64,
    pub std_error: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdReport {
    pub info: RunInfo,
    pub n: usize,
    pub threshold: f64,
    pub rows: Vec<MdRow>,
    pub max_abs_t: f64,
    pub pass: bool,
}

/// Two-sided Gaussian level of a single 3-SE test.
const THREE_SIGMA_LEVEL: f64 = 0.002_699_796_063_260_207;

/// Martingale-difference test: `E[xi_i(x) g(past)] = 0` for bounded
/// predictable `g` (constant, sign of `xi_{i-1}(x)`, `tanh` of the running
/// normalized sum). The 3-SE level is Bonferroni-split over all tests.
pub fn md_check(model: &MartingaleFieldModel, n: usize, opts: &LabOptions) -> Result<MdReport> {
    if n < 2 {
        return Err(Error::InvalidArgument("the martingale-difference test needs n >= 2".into()));
    }
    if n > model.horizon {
        return Err(Error::HorizonExceeded { n, horizon: model.horizon });
    }
    const FUNCTIONS: [&str; 3] = ["constant", "sign_prev", "tanh_avg"];
    let m = model.len();
    let prep = model.prepare()?;
    let blocks = run_sums(&prep, Stream::Diagnostics, n, opts, m * 6, |path, sums| {
        for x in 0..m {
            let mut y = [0.0f64; 3];
            let mut s = 0.0;
            let mut prev = 0.0f64;
            for i in 1..=n {
                let v = path[(i - 1) * m + x];
                let g_sign = if prev > 0.0 {
                    1.0
                } else if prev < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                let g_tanh = if i > 1 { (s / ((i - 1) as f64).sqrt()).tanh() } else { 0.0 };
                y[0] += v;
                y[1] += v * g_sign;
                y[2] += v * g_tanh;
                s += v;
                prev = v;
            }
            for (f, yf) in y.iter().enumerate() {
                let yf = yf / n as f64;
                sums[x * 6 + 2 * f] += yf;
                sums[x * 6 + 2 * f + 1] += yf * yf;
            }
        }
    })?;
    let r = opts.replications as f64;
    let tests = (m * FUNCTIONS.len()) as f64;
    let threshold = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(1.0 - THREE_SIGMA_LEVEL / (2.0 * tests));
    let mut rows = Vec::new();
    for x in 0..m {
        for (f, name) in FUNCTIONS.iter().enumerate() {
            let c = x * 6 + 2 * f;
            let e = jackknife(&blocks, &[c, c + 1], |v| v[0]);
            let var = jackknife(&blocks, &[c, c + 1], |v| v[1] - v[0] * v[0]).plug_in.max(0.0);
            let se = (var / r).sqrt();
            let t = if se > 0.0 { e.plug_in / se } else if e.plug_in == 0.0 { 0.0 } else { f64::INFINITY };
            rows.push(MdRow {
                point: x,
                function: name.to_string(),
                mean: e.plug_in,
                std_error: se,
                t,
            });
        }
    }
    let max_abs_t = rows.iter().map(|r| r.t.abs()).fold(0.0, f64::max);
    Ok(MdReport {
        info: info(model, opts),
        n,
        threshold,
        rows,
        max_abs_t,
        pass: max_abs_t <= threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub n: usize,
    pub x: f64,
    /// `max(P(S > x), P(S < -x))` for the normalized (or weighted) sum `S`.
    pub empirical_tail: f64,
    pub std_error: f64,
    pub bound: f64,
    /// `empirical_tail <= bound + 3 SE`
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub info: RunInfo,
    pub point: usize,
    pub weighted: bool,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

/// Unit weight vector of length `n` drawn from the model seed.
pub fn random_unit_weights(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = replication_rng(seed, Stream::Weights, n as u64);
    let mut b: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    b.iter_mut().for_each(|v| *v /= norm);
    b
}

/// Empirical one-sided tails of `n^-1/2 sum_{i<=n} xi_i(x)` (or of
/// `sum b_i xi_i(x)` with random unit `b` when `weighted`) against the
/// martingale tail bound of the model's dominating tail function.
pub fn tail_domination(
    model: &MartingaleFieldModel,
    point: usize,
    n_grid: &[usize],
    xs: &[f64],
    weighted: bool,
    opts: &LabOptions,
) -> Result<TailReport> {
    let tail = model
        .dominating_tail()
        .ok_or_else(|| Error::InvalidModel(format!("{}: no known dominating tail function", model.name)))?;
    Target::Point { x: point }.check(model.len())?;
    let n_max = *n_grid.iter().max().ok_or_else(|| Error::InvalidArgument("empty n grid".into()))?;
    if n_grid.contains(&0) {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if n_max > model.horizon {
        return Err(Error::HorizonExceeded { n: n_max, horizon: model.horizon });
    }
    let bounds = xs.iter().map(|&x| martingale_tail_bound(&tail, x)).collect::<Result<Vec<_>>>()?;
    let weights: Vec<Vec<f64>> = n_grid
        .iter()
        .map(|&n| if weighted { random_unit_weights(model.seed, n) } else { vec![1.0 / (n as f64).sqrt(); n] })
        .collect();
    let m = model.len();
    let nx = xs.len();
    let prep = model.prepare()?;
    let blocks = run_sums(&prep, Stream::Tails, n_max, opts, n_grid.len() * nx * 2, |path, sums| {
        for (c, w) in weights.iter().enumerate() {
            let s: f64 = w.iter().enumerate().map(|(i, b)| b * path[i * m + point]).sum();
            for (j, &x) in xs.iter().enumerate() {
                let o = (c * nx + j) * 2;
                if s > x {
                    sums[o] += 1.0;
                }
                if s < -x {
                    sums[o + 1] += 1.0;
                }
            }
        }
    })?;
    let r = opts.replications as f64;
    let mut rows = Vec::new();
    for (c, &n) in n_grid.iter().enumerate() {
        for (j, &x) in xs.iter().enumerate() {
            let o = (c * nx + j) * 2;
            let est = jackknife(&blocks, &[o, o + 1], |v| v[0].max(v[1])).plug_in;
            let se = (est * (1.0 - est) / r).sqrt();
            rows.push(TailRow {
                n,
                x,
                empirical_tail: est,
                std_error: se,
                bound: bounds[j],
                pass: est <= bounds[j] + 3.0 * se,
            });
        }
    }
    Ok(TailReport {
        info: info(model, opts),
        point,
        weighted,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::model::{Kernel, ModelKind};
    use crate::psi::gaussian_abs_norm;

    fn gaussian(points: Vec<f64>, kernel: Kernel, horizon: usize) -> MartingaleFieldModel {
        MartingaleFieldModel::new("gauss", points, ModelKind::IidGaussianField { kernel }, horizon, 17).unwrap()
    }

    fn unit_gaussian(horizon: usize) -> MartingaleFieldModel {
        gaussian(vec![0.0, 1.0], Kernel::Exponential { variance: 1.0, length: 1.0 }, horizon)
    }

    fn sign(horizon: usize) -> MartingaleFieldModel {
        MartingaleFieldModel::new("sign", vec![0.0, 1.0], ModelKind::BoundedSign { amplitude: 1.0, swing: 0.0 }, horizon, 5)
            .unwrap()
    }

    #[test]
    fn eta_at_one_is_the_first_difference() {
        let m = unit_gaussian(4);
        let opts = LabOptions::new(50, 1);
        let s = simulate_eta(&m, 1, &opts).unwrap();
        let prep = m.prepare().unwrap();
        let mut path = Vec::new();
        prep.fill_path(&mut replication_rng(m.seed, Stream::Sums, 7), 1, &mut path, &mut PathScratch::default())
            .unwrap();
        assert_eq!(s.replication(7), &path[..]);
        assert!(matches!(simulate_eta(&m, 5, &opts), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn eta_variance_is_normalized() {
        let r = 20_000u64;
        let s = simulate_eta(&unit_gaussian(32), 32, &LabOptions::new(r, 0)).unwrap();
        let v: f64 = s.point(0).iter().map(|x| x * x).sum::<f64>() / r as f64;
        assert!((v - 1.0).abs() <= 3.0 * (2.0 / r as f64).sqrt());
    }

    #[test]
    fn sign_walk_fourth_moment() {
        let r = 200_000u64;
        for n in [4usize, 16] {
            let s = simulate_eta(&sign(16), n, &LabOptions::new(r, 0)).unwrap();
            let x = s.point(0);
            let m4: f64 = x.iter().map(|v| v.powi(4)).sum::<f64>() / r as f64;
            let m8: f64 = x.iter().map(|v| v.powi(8)).sum::<f64>() / r as f64;
            let se = ((m8 - m4 * m4) / r as f64).sqrt();
            let exact = 3.0 - 2.0 / n as f64;
            assert!((m4 - exact).abs() <= 4.0 * se, "n={n} m4={m4} exact={exact}");
        }
    }

    #[test]
    fn moment_curves_match_gaussian_increments() {
        let kernel = Kernel::Exponential { variance: 1.0, length: 0.5 };
        let m = gaussian(vec![0.0, 0.2, 1.0], kernel.clone(), 8);
        let p_grid = [2.0, 4.0];
        let f = estimate_moment_curves(&m, None, &p_grid, 4, &LabOptions::new(40_000, 0)).unwrap();
        assert_eq!(f.blocks().len(), 1);
        for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let c = f.increment(1, a, b).unwrap();
            let sd = (2.0 - 2.0 * kernel.eval(m.points.as_slice(), a, b)).sqrt();
            let (v, se) = (c.norms()[0], c.std_errors().unwrap()[0]);
            assert!((v - sd).abs() <= 3.5 * se, "pair ({a},{b}): {v} vs {sd} se {se}");
            let v4 = c.norms()[1];
            assert!((v4 - sd * gaussian_abs_norm(4.0)).abs() <= 3.5 * c.std_errors().unwrap()[1]);
        }
        assert!(f.increment(2, 1, 1).unwrap().norms().iter().all(|v| *v == 0.0));

        let f2 = estimate_moment_curves(&m.clone().with_scale(2.0), None, &p_grid, 4, &LabOptions::new(40_000, 0)).unwrap();
        for x in 0..3 {
            let (a, b) = (&f.index(1).unwrap().point_curves[x], &f2.index(1).unwrap().point_curves[x]);
            for j in 0..2 {
                assert!((2.0 * a.norms()[j] - b.norms()[j]).abs() < 1e-9 * b.norms()[j]);
            }
        }
    }

    #[test]
    fn osekowski_exact_cases() {
        let p_grid = [2.0, 3.0, 4.0];
        let rep = osekowski_check(&unit_gaussian(64), &[Target::Point { x: 0 }], &p_grid, &[1, 64], &LabOptions::new(20_000, 0))
            .unwrap();
        for row in &rep.rows {
            assert!(row.pass);
            if row.n == 1 {
                assert!((row.ratio.value - row.p.ln() / row.p).abs() < 1e-12);
            }
            if row.p == 2.0 && row.n == 64 {
                let exact = std::f64::consts::LN_2 / 2.0;
                assert!((row.ratio.value - exact).abs() <= 3.0 * row.ratio.std_error, "{row:?}");
            }
            assert_eq!(row.rosenthal_regime, Some(true));
        }
    }

    #[test]
    fn covariance_matches_kernel() {
        let kernel = Kernel::SquaredExponential { variance: 1.5, length: 0.7 };
        let m = gaussian(vec![0.0, 0.5, 1.5], kernel, 8);
        let rep = covariance_estimate(&m, 8, &LabOptions::new(20_000, 0)).unwrap();
        let exact = rep.analytic.clone().unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let e = rep.estimate[a][b];
                assert!((e.value - exact[a][b]).abs() <= 3.5 * e.std_error, "({a},{b}) {e:?} vs {}", exact[a][b]);
            }
        }
        let s = covariance_estimate(&sign(8), 8, &LabOptions::new(5_000, 0)).unwrap();
        assert_eq!(s.analytic.unwrap(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn clt_identical_sizes_and_gaussian_marginals() {
        let rep = clt_diagnostic(&unit_gaussian(16), 16, 16, &LabOptions::new(4_000, 0)).unwrap();
        assert!(rep.ks_stat_supnorm < rep.critical_value_05 * 1.5);
        assert_eq!(rep.per_point_ks.len(), 4);
        assert!(rep.per_point_ks.iter().all(|p| p.ks < 0.04));
        assert!(clt_diagnostic(&unit_gaussian(16), 8, 4, &LabOptions::new(10, 1)).is_err());
    }

    #[test]
    fn md_check_detects_bias() {
        let opts = LabOptions::new(4_000, 0);
        let clean = md_check(&sign(32), 32, &opts).unwrap();
        assert!(clean.pass, "{clean:?}");
        let mut biased = sign(32);
        biased.conditional_bias = 0.1;
        let bad = md_check(&biased, 32, &opts).unwrap();
        assert!(!bad.pass);
    }

    #[test]
    fn tail_domination_on_bounded_signs() {
        let rep = tail_domination(&sign(64), 0, &[16, 64], &[1.5, 2.0, 3.0], false, &LabOptions::new(20_000, 0)).unwrap();
        assert!(rep.all_pass());
        let w = tail_domination(&sign(64), 0, &[16], &[1.5, 2.0], true, &LabOptions::new(20_000, 0)).unwrap();
        assert!(w.all_pass());
        let b = random_unit_weights(3, 10);
        assert!((b.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(tail_domination(&unit_gaussian(4), 0, &[2], &[2.0], false, &LabOptions::new(10, 1)).is_err());
    }

    #[test]
    fn equicontinuity_on_brownian_kernel() {
        let kernel = Kernel::BrownianMin { variance: 1.0 };
        let m = gaussian(vec![0.1, 0.2, 0.5, 0.9], kernel, 16);
        let pairs = [(0, 1), (0, 3), (1, 1)];
        let rep = equicontinuity_check(&m, None, &pairs, &[2.0, 3.0, 4.0], &[1, 4, 16], &LabOptions::new(20_000, 0)).unwrap();
        assert!(rep.all_pass());
        let ratios: Vec<f64> = rep.rows.iter().filter(|r| r.x1 != r.x2).map(|r| r.lhs.value / r.dbar).collect();
        assert!((ratios[0] / ratios[1] - 1.0).abs() < 0.1, "{ratios:?}");
        let diag = rep.rows.iter().find(|r| r.x1 == r.x2).unwrap();
        assert_eq!((diag.lhs.value, diag.dbar), (0.0, 0.0));
    }
}
