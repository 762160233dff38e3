//! Finite (semi-)metric spaces standing in for a compact parameter set, with
//! covering numbers and metric entropy.
//!
//! Balls are closed (`d <= eps`) and centred at points of the space, so the
//! covering numbers computed here are internal covering numbers. A
//! discretized compact has covering numbers no larger than the continuum
//! set, so entropy conditions checked on grids are heuristic at the chosen
//! resolution.

use std::collections::HashSet;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default point cap for [`covering_number_exact`].
pub const EXACT_COVER_CAP: usize = 20;

/// Metric used when a space is built from coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Euclidean,
    Sup,
    /// `|x - y|^alpha` with the Euclidean norm.
    Holder { alpha: f64 },
}

impl Metric {
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => euclidean(a, b),
            Metric::Sup => a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max),
            Metric::Holder { alpha } => euclidean(a, b).powf(*alpha),
        }
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMode {
    Greedy,
    Exact,
}

/// A finite point set with a symmetric, nonnegative distance matrix.
/// Zero off-diagonal distances are allowed (semi-distances).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    coords: Option<Vec<Vec<f64>>>,
    dist: Vec<f64>,
    n: usize,
}

impl FiniteMetricSpace {
    pub fn from_matrix(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidMetric("distance matrix must be square".into()));
        }
        let mut dist = Vec::with_capacity(n * n);
        for row in &rows {
            dist.extend_from_slice(row);
        }
        for i in 0..n {
            if dist[i * n + i].abs() > 1e-12 {
                return Err(Error::InvalidMetric(format!("nonzero diagonal at {i}")));
            }
            dist[i * n + i] = 0.0;
            for j in 0..n {
                let (a, b) = (dist[i * n + j], dist[j * n + i]);
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(Error::InvalidMetric(format!("entry ({i},{j}) = {a} is not a finite nonnegative number")));
                }
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidMetric(format!("asymmetric entries at ({i},{j}): {a} vs {b}")));
                }
            }
        }
        let space = Self {
            labels: (0..n).map(|i| i.to_string()).collect(),
            coords: None,
            dist,
            n,
        };
        let violations = space.triangle_violations(1e-9);
        if violations > 0 {
            log::warn!("{violations} triangle-inequality violations in distance matrix");
        }
        Ok(space)
    }

    pub fn from_coords(coords: Vec<Vec<f64>>, metric: Metric) -> Result<Self> {
        if let Some(d) = coords.first().map(Vec::len) {
            if coords.iter().any(|c| c.len() != d) {
                return Err(Error::InvalidMetric("coordinates have mixed dimensions".into()));
            }
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMetric("coordinates must be finite".into()));
        }
        let n = coords.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = metric.distance(&coords[i], &coords[j]);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Ok(Self {
            labels: (0..n).map(|i| i.to_string()).collect(),
            coords: Some(coords),
            dist,
            n,
        })
    }

    /// Uniform grid of `count` points on `[lo, hi]`.
    pub fn uniform_grid(lo: f64, hi: f64, count: usize, metric: Metric) -> Result<Self> {
        let coords = (0..count)
            .map(|k| {
                let t = if count == 1 { 0.0 } else { k as f64 / (count - 1) as f64 };
                vec![lo + (hi - lo) * t]
            })
            .collect();
        Self::from_coords(coords, metric)
    }

    /// Reads an `n x n` distance matrix; a non-numeric first row is taken as a header.
    pub fn from_csv_matrix(reader: impl Read) -> Result<Self> {
        Self::from_matrix(read_numeric_rows(reader)?)
    }

    /// Reads one point per row (coordinates as columns).
    pub fn from_csv_coords(reader: impl Read, metric: Metric) -> Result<Self> {
        Self::from_coords(read_numeric_rows(reader)?, metric)
    }

    pub fn from_csv_matrix_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_matrix(std::fs::File::open(path)?)
    }

    pub fn from_csv_coords_path(path: impl AsRef<Path>, metric: Metric) -> Result<Self> {
        Self::from_csv_coords(std::fs::File::open(path)?, metric)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::InvalidMetric("label count differs from point count".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coords(&self) -> Option<&[Vec<f64>]> {
        self.coords.as_deref()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.dist.chunks(self.n.max(1))
    }

    /// Number of ordered triples violating `d(i,k) <= d(i,j) + d(j,k) + tol`.
    /// Skipped (returns 0) above 400 points.
    pub fn triangle_violations(&self, tol: f64) -> usize {
        if self.n > 400 {
            return 0;
        }
        let mut count = 0;
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    if self.dist(i, k) > self.dist(i, j) + self.dist(j, k) + tol {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Smallest positive off-diagonal distance.
    pub fn min_positive_distance(&self) -> Option<f64> {
        self.dist.iter().copied().filter(|&d| d > 0.0).reduce(f64::min)
    }

    fn ball(&self, center: usize, eps: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.dist(center, j) <= eps)
    }
}

fn read_numeric_rows(reader: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if k == 0 => continue,
            Err(e) => {
                return Err(Error::InvalidMetric(format!("row {}: {e}", k + 1)));
            }
        }
    }
    Ok(rows)
}

/// Largest off-diagonal distance.
pub fn diameter(space: &FiniteMetricSpace) -> Result<f64> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    Ok(space.dist.iter().copied().fold(0.0, f64::max))
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Greedy cover by closed `eps`-balls centred in the space: repeatedly take
/// the centre covering the most uncovered points, lowest index on ties.
/// Returns the chosen centres; its length is an upper bound on `N(eps)`.
pub fn greedy_cover(space: &FiniteMetricSpace, eps: f64) -> Result<Vec<usize>> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    check_eps(eps)?;
    let n = space.len();
    let balls: Vec<Vec<usize>> = (0..n).map(|c| space.ball(c, eps).collect()).collect();
    let mut uncovered = vec![true; n];
    let mut left = n;
    let mut centers = Vec::new();
    while left > 0 {
        let (best, gain) = balls
            .iter()
            .enumerate()
            .map(|(c, b)| (c, b.iter().filter(|&&j| uncovered[j]).count()))
            .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        debug_assert!(gain > 0);
        for &j in &balls[best] {
            if uncovered[j] {
                uncovered[j] = false;
                left -= 1;
            }
        }
        centers.push(best);
    }
    Ok(centers)
}

/// Candidate radii kept by [`GreedyEnvelope`]; beyond this many distinct
/// distances an evenly spaced subset (in rank) is used.
pub const GREEDY_RADII_CAP: usize = 4096;

/// Greedy covering counts made nonincreasing in `eps`.
///
/// Plain greedy is not monotone: a larger radius can lead it to a worse
/// cover. A cover at radius `r` also covers at every `eps >= r`, so the count
/// at `eps` is the smallest greedy cover found at any candidate radius
/// `r <= eps`. Candidates are the distinct positive distances of the space.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyEnvelope {
    /// Ascending candidate radii.
    radii: Vec<f64>,
    /// Running minimum of greedy counts over `radii`.
    counts: Vec<usize>,
    /// Count below the smallest positive distance (distinct points).
    separated: usize,
}

impl GreedyEnvelope {
    pub fn new(space: &FiniteMetricSpace) -> Result<Self> {
        if space.is_empty() {
            return Err(Error::EmptySpace);
        }
        let n = space.len();
        let mut radii: Vec<f64> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| space.dist(i, j))
            .filter(|&d| d > 0.0)
            .collect();
        radii.sort_by(f64::total_cmp);
        radii.dedup();
        if radii.len() > GREEDY_RADII_CAP {
            let last = radii.len() - 1;
            radii = (0..GREEDY_RADII_CAP)
                .map(|k| radii[k * last / (GREEDY_RADII_CAP - 1)])
                .collect();
        }
        // rows sorted by distance, so a ball is a prefix
        let sorted: Vec<Vec<(f64, usize)>> = (0..n)
            .map(|c| {
                let mut row: Vec<(f64, usize)> = (0..n).map(|j| (space.dist(c, j), j)).collect();
                row.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                row
            })
            .collect();
        let separated = sorted_greedy(&sorted, 0.0);
        let mut best = separated;
        let counts = radii
            .iter()
            .map(|&r| {
                best = best.min(sorted_greedy(&sorted, r));
                best
            })
            .collect();
        Ok(Self {
            radii,
            counts,
            separated,
        })
    }

    pub fn count(&self, eps: f64) -> Result<usize> {
        check_eps(eps)?;
        let k = self.radii.partition_point(|&r| r <= eps);
        Ok(if k == 0 { self.separated } else { self.counts[k - 1] })
    }
}

/// Greedy count at radius `r` over distance-sorted rows, with the same
/// lowest-index tie rule as [`greedy_cover`].
fn sorted_greedy(sorted: &[Vec<(f64, usize)>], r: f64) -> usize {
    let n = sorted.len();
    let ball = |c: usize| sorted[c].iter().take_while(move |(d, _)| *d <= r).map(|&(_, j)| j);
    let mut gain: Vec<usize> = (0..n).map(|c| ball(c).count()).collect();
    let mut uncovered = vec![true; n];
    let mut left = n;
    let mut size = 0;
    while left > 0 {
        let best = (0..n).fold(0, |b, c| if gain[c] > gain[b] { c } else { b });
        let members: Vec<usize> = ball(best).filter(|&j| uncovered[j]).collect();
        for j in members {
            uncovered[j] = false;
            left -= 1;
            // centres whose ball holds j are exactly the points within r of j
            for c in ball(j) {
                gain[c] -= 1;
            }
        }
        size += 1;
    }
    size
}

/// Monotone greedy upper bound on `N(eps)`, see [`GreedyEnvelope`].
pub fn covering_number_greedy(space: &FiniteMetricSpace, eps: f64) -> Result<usize> {
    GreedyEnvelope::new(space)?.count(eps)
}

/// Exact `N(eps)` by exhaustive search in increasing cover size, branching on
/// the lowest uncovered point. Spaces above `cap` points are rejected.
pub fn covering_number_exact_capped(space: &FiniteMetricSpace, eps: f64, cap: usize) -> Result<usize> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    check_eps(eps)?;
    let n = space.len();
    if n > cap || n > 63 {
        return Err(Error::TooLarge { n, cap: cap.min(63) });
    }
    let masks: Vec<u64> = (0..n)
        .map(|c| space.ball(c, eps).fold(0u64, |m, j| m | (1 << j)))
        .collect();
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };

    fn search(covered: u64, budget: usize, full: u64, masks: &[u64], failed: &mut HashSet<(u64, usize)>) -> bool {
        if covered == full {
            return true;
        }
        if budget == 0 || failed.contains(&(covered, budget)) {
            return false;
        }
        let first = (!covered & full).trailing_zeros() as usize;
        for &m in masks {
            if m & (1 << first) != 0 && search(covered | m, budget - 1, full, masks, failed) {
                return true;
            }
        }
        failed.insert((covered, budget));
        false
    }

    let mut failed = HashSet::new();
    for k in 1..=n {
        if search(0, k, full, &masks, &mut failed) {
            return Ok(k);
        }
    }
    unreachable!("n singleton balls always cover")
}

pub fn covering_number_exact(space: &FiniteMetricSpace, eps: f64) -> Result<usize> {
    covering_number_exact_capped(space, eps, EXACT_COVER_CAP)
}

/// Natural log of the covering number.
pub fn entropy(space: &FiniteMetricSpace, eps: f64, mode: CoverMode) -> Result<f64> {
    let n = match mode {
        CoverMode::Greedy => covering_number_greedy(space, eps)?,
        CoverMode::Exact => covering_number_exact(space, eps)?,
    };
    Ok((n as f64).ln())
}

/// `c2 * eps^(-dim/alpha)`, the covering bound for a bounded set in `R^dim`
/// under a distance dominated by `C1 |x1 - x2|^alpha`.
pub fn holder_covering_bound(dim: u32, alpha: f64, c2: f64, eps: f64) -> f64 {
    c2 * eps.powf(-(dim as f64) / alpha)
}

/// Smallest `c2` with `N(eps) <= c2 eps^(-dim/alpha)` at every measured point.
pub fn fit_holder_constant(measured: &[(f64, usize)], dim: u32, alpha: f64) -> f64 {
    measured
        .iter()
        .map(|&(eps, n)| n as f64 * eps.powf(dim as f64 / alpha))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_grid() -> FiniteMetricSpace {
        FiniteMetricSpace::uniform_grid(0.0, 1.0, 11, Metric::Euclidean).unwrap()
    }

    /// Minimum over all center subsets, smallest first.
    fn subset_oracle(space: &FiniteMetricSpace, eps: f64) -> usize {
        let n = space.len();
        (1u32..(1 << n))
            .filter(|set| {
                (0..n).all(|j| (0..n).any(|c| set & (1 << c) != 0 && space.dist(c, j) <= eps))
            })
            .map(|set| set.count_ones() as usize)
            .min()
            .unwrap()
    }

    fn equilateral(n: usize) -> FiniteMetricSpace {
        let rows = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
            .collect();
        FiniteMetricSpace::from_matrix(rows).unwrap()
    }

    #[test]
    fn diameter_cases() {
        let one = FiniteMetricSpace::from_matrix(vec![vec![0.0]]).unwrap();
        assert_eq!(diameter(&one).unwrap(), 0.0);
        let two = FiniteMetricSpace::from_matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(diameter(&two).unwrap(), 1.0);
        assert_relative_eq!(diameter(&unit_grid()).unwrap(), 1.0);
        let empty = FiniteMetricSpace::from_matrix(vec![]).unwrap();
        assert!(matches!(diameter(&empty), Err(Error::EmptySpace)));
    }

    #[test]
    fn matrix_validation() {
        assert!(FiniteMetricSpace::from_matrix(vec![vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(FiniteMetricSpace::from_matrix(vec![vec![1.0]]).is_err());
        assert!(FiniteMetricSpace::from_matrix(vec![vec![0.0, -1.0], vec![-1.0, 0.0]]).is_err());
        // semi-distance: zero off-diagonal is fine
        let semi = FiniteMetricSpace::from_matrix(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(covering_number_exact(&semi, 0.1).unwrap(), 1);
        // triangle violation only warns
        let bad = FiniteMetricSpace::from_matrix(vec![
            vec![0.0, 1.0, 5.0],
            vec![1.0, 0.0, 1.0],
            vec![5.0, 1.0, 0.0],
        ])
        .unwrap();
        assert!(bad.triangle_violations(1e-9) > 0);
    }

    #[test]
    fn covering_examples() {
        let g = unit_grid();
        assert_eq!(covering_number_greedy(&g, 1.0).unwrap(), 1);
        // a closed 0.25-ball holds at most five grid points
        assert_eq!(subset_oracle(&g, 0.25), 3);
        assert_eq!(covering_number_greedy(&g, 0.25).unwrap(), 3);
        assert_eq!(covering_number_exact(&g, 0.25).unwrap(), 3);
        assert_eq!(covering_number_exact(&g, 0.45).unwrap(), subset_oracle(&g, 0.45));
        let one = FiniteMetricSpace::from_matrix(vec![vec![0.0]]).unwrap();
        assert_eq!(covering_number_greedy(&one, 0.01).unwrap(), 1);
        assert_eq!(covering_number_exact(&one, 0.01).unwrap(), 1);
        assert_eq!(covering_number_exact(&equilateral(4), 0.5).unwrap(), 4);
        assert!(covering_number_greedy(&g, 0.0).is_err());
    }

    #[test]
    fn exact_cover_respects_cap() {
        let big = FiniteMetricSpace::uniform_grid(0.0, 1.0, 21, Metric::Euclidean).unwrap();
        assert!(matches!(
            covering_number_exact(&big, 0.1),
            Err(Error::TooLarge { n: 21, .. })
        ));
    }

    #[test]
    fn entropy_cases() {
        let g = unit_grid();
        assert_eq!(entropy(&g, 2.0, CoverMode::Greedy).unwrap(), 0.0);
        assert_relative_eq!(entropy(&g, 0.25, CoverMode::Exact).unwrap(), 3f64.ln());
        let mut prev = f64::INFINITY;
        for eps in [0.05, 0.1, 0.2, 0.3, 0.6] {
            let h = entropy(&g, eps, CoverMode::Exact).unwrap();
            assert!(h <= prev);
            prev = h;
        }
    }

    #[test]
    fn envelope_matches_raw_greedy_and_is_monotone() {
        let s = FiniteMetricSpace::from_coords(
            vec![vec![0.0], vec![0.0], vec![0.3], vec![1.0], vec![1.4], vec![2.9], vec![3.0]],
            Metric::Euclidean,
        )
        .unwrap();
        let env = GreedyEnvelope::new(&s).unwrap();
        assert_eq!(env.count(0.01).unwrap(), 6);
        let mut last = usize::MAX;
        for k in 1..400 {
            let eps = 0.01 * k as f64;
            let c = env.count(eps).unwrap();
            assert!(c <= greedy_cover(&s, eps).unwrap().len() && c <= last);
            assert!(c >= covering_number_exact(&s, eps).unwrap());
            last = c;
        }
        assert_eq!(env.count(3.0).unwrap(), 1);
    }

    #[test]
    fn holder_bound_arithmetic() {
        assert_relative_eq!(holder_covering_bound(1, 1.0, 1.0, 0.1), 10.0, max_relative = 1e-12);
        assert_relative_eq!(holder_covering_bound(2, 0.5, 1.0, 0.5), 16.0, max_relative = 1e-12);
    }

    #[test]
    fn holder_grid_measured_under_fitted_bound() {
        let space = FiniteMetricSpace::uniform_grid(0.0, 1.0, 101, Metric::Holder { alpha: 0.5 }).unwrap();
        let measured: Vec<(f64, usize)> = [0.1, 0.2, 0.3]
            .iter()
            .map(|&e| (e, covering_number_greedy(&space, e).unwrap()))
            .collect();
        let c2 = fit_holder_constant(&measured, 1, 0.5);
        for &(eps, n) in &measured {
            assert!(n as f64 <= holder_covering_bound(1, 0.5, c2, eps) * (1.0 + 1e-12));
        }
        assert!(c2 > 0.0);
    }

    #[test]
    fn csv_loading() {
        let m = "a,b\n0,2\n2,0\n";
        let s = FiniteMetricSpace::from_csv_matrix(m.as_bytes()).unwrap();
        assert_eq!(s.dist(0, 1), 2.0);
        let s = FiniteMetricSpace::from_csv_matrix("0,2\n2,0\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        let c = "x,y\n0,0\n3,4\n";
        let s = FiniteMetricSpace::from_csv_coords(c.as_bytes(), Metric::Euclidean).unwrap();
        assert_eq!(s.dist(0, 1), 5.0);
        let s = FiniteMetricSpace::from_csv_coords(c.as_bytes(), Metric::Sup).unwrap();
        assert_eq!(s.dist(0, 1), 4.0);
        assert!(FiniteMetricSpace::from_csv_matrix("0,1\nx,0\n".as_bytes()).is_err());
    }

    #[test]
    fn metric_json_forms() {
        let m: Metric = serde_json::from_str(r#"{"holder":{"alpha":0.5}}"#).unwrap();
        assert_eq!(m, Metric::Holder { alpha: 0.5 });
        let m: Metric = serde_json::from_str(r#""euclidean""#).unwrap();
        assert_eq!(m, Metric::Euclidean);
    }
}
