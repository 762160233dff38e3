//! Semi-distances on the parameter set built from moment data of a
//! martingale-difference field, plus the natural function and the averaged
//! variance functional.
//!
//! Suprema over all `n` are evaluated on a caller-supplied finite `n_grid`;
//! results are exact for the truncated problem only.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::FiniteMetricSpace;
use crate::numerics::fmt_f64;
use crate::psi::{gls_norm, subq_norm, MomentCurve, Provenance, PsiFunction};

/// Default `n_grid`: powers of two up to 1024.
pub fn dyadic_n_grid(max: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |n| n.checked_mul(2))
        .take_while(|&n| n <= max)
        .collect()
}

/// Moment data shared by one or more indices `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexMoments {
    /// `|xi_i(x)|_p` per point.
    pub point_curves: Vec<MomentCurve>,
    /// `Var(xi_i(x))` per point.
    pub variances: Vec<f64>,
    /// `|xi_i(x1) - xi_i(x2)|_p` keyed by `(x1, x2)` with `x1 < x2`.
    pub increments: BTreeMap<(usize, usize), MomentCurve>,
}

impl IndexMoments {
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            point_curves: self.point_curves.iter().map(|m| m.scaled(c)).collect(),
            variances: self.variances.iter().map(|v| v * c * c).collect(),
            increments: self.increments.iter().map(|(k, m)| (*k, m.scaled(c))).collect(),
        }
    }
}

/// Per-index moment curves of a field on a finite point set.
///
/// Indices `1..=horizon` map onto shared [`IndexMoments`] blocks, so a
/// stationary field stores one block.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMomentField {
    points: Vec<Vec<f64>>,
    p_grid: Vec<f64>,
    blocks: Vec<IndexMoments>,
    index_map: Vec<usize>,
}

impl PairwiseMomentField {
    pub fn new(
        points: Vec<Vec<f64>>,
        p_grid: Vec<f64>,
        blocks: Vec<IndexMoments>,
        index_map: Vec<usize>,
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 || index_map.is_empty() {
            return Err(Error::MissingData("field needs points and at least one index".into()));
        }
        if let Some(&b) = index_map.iter().find(|&&b| b >= blocks.len()) {
            return Err(Error::MissingData(format!("index map refers to missing block {b}")));
        }
        for (b, block) in blocks.iter().enumerate() {
            if block.point_curves.len() != n || block.variances.len() != n {
                return Err(Error::MissingData(format!(
                    "block {b} has {} point curves / {} variances for {n} points",
                    block.point_curves.len(),
                    block.variances.len()
                )));
            }
            if block.variances.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::MissingData(format!("block {b} has a negative or NaN variance")));
            }
            if let Some(&(a, c)) = block.increments.keys().find(|&&(a, c)| !(a < c && c < n)) {
                return Err(Error::MissingData(format!("block {b} has invalid pair key ({a}, {c})")));
            }
        }
        Ok(Self {
            points,
            p_grid,
            blocks,
            index_map,
        })
    }

    /// One block shared by indices `1..=horizon`.
    pub fn stationary(points: Vec<Vec<f64>>, p_grid: Vec<f64>, block: IndexMoments, horizon: usize) -> Result<Self> {
        Self::new(points, p_grid, vec![block], vec![0; horizon])
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn p_grid(&self) -> &[f64] {
        &self.p_grid
    }

    pub fn horizon(&self) -> usize {
        self.index_map.len()
    }

    pub fn blocks(&self) -> &[IndexMoments] {
        &self.blocks
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    /// Moments of index `i` (1-based).
    pub fn index(&self, i: usize) -> Result<&IndexMoments> {
        if i == 0 || i > self.horizon() {
            return Err(Error::MissingData(format!("index {i} outside 1..={}", self.horizon())));
        }
        Ok(&self.blocks[self.index_map[i - 1]])
    }

    fn check_point(&self, x: usize) -> Result<()> {
        if x >= self.points.len() {
            return Err(Error::MissingData(format!("point {x} outside the field's {} points", self.points.len())));
        }
        Ok(())
    }

    fn block_increment(&self, block: usize, x1: usize, x2: usize) -> Result<Cow<'_, MomentCurve>> {
        self.check_point(x1)?;
        self.check_point(x2)?;
        if x1 == x2 {
            return Ok(Cow::Owned(MomentCurve::zero(self.p_grid.clone())?));
        }
        let key = (x1.min(x2), x1.max(x2));
        self.blocks[block]
            .increments
            .get(&key)
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::MissingData(format!("no increment curve for pair {key:?}")))
    }

    /// Increment curve `|xi_i(x1) - xi_i(x2)|_p`; the zero curve on the diagonal.
    pub fn increment(&self, i: usize, x1: usize, x2: usize) -> Result<Cow<'_, MomentCurve>> {
        self.index(i)?;
        self.block_increment(self.index_map[i - 1], x1, x2)
    }

    /// Blocks referenced by indices `1..=n`.
    fn used_blocks(&self, n: usize) -> Vec<usize> {
        let mut used: Vec<usize> = self.index_map[..n.min(self.horizon())].to_vec();
        used.sort_unstable();
        used.dedup();
        used
    }

    /// The field of `c * xi`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            points: self.points.clone(),
            p_grid: self.p_grid.clone(),
            blocks: self.blocks.iter().map(|b| b.scaled(c)).collect(),
            index_map: self.index_map.clone(),
        }
    }

    /// Largest `|Var - |xi|_2^2|` relative to the variance, over all blocks
    /// and points where the grid contains `p = 2`.
    pub fn variance_norm_discrepancy(&self) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for b in &self.blocks {
            for (curve, &var) in b.point_curves.iter().zip(&b.variances) {
                if let Some(v2) = curve.value_at(2.0) {
                    let d = (var - v2 * v2).abs() / var.max(1e-300);
                    worst = Some(worst.map_or(d, |w: f64| w.max(d)));
                }
            }
        }
        worst
    }

    /// Writes one CSV per block plus `manifest.json` mapping indices to files.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        self.write_dir_annotated(dir, None)
    }

    /// As [`write_dir`](Self::write_dir), with `note` as a leading `# ` line
    /// in every CSV and a `note` field in the manifest.
    pub fn write_dir_annotated(&self, dir: impl AsRef<Path>, note: Option<&str>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut files = Vec::new();
        for (b, block) in self.blocks.iter().enumerate() {
            let name = format!("block_{b:04}.csv");
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
            if let Some(note) = note {
                writeln!(f, "# {note}")?;
            }
            let mut w = csv::Writer::from_writer(f);
            w.write_record(["kind", "x1", "x2", "p", "value", "std_error"])?;
            for (x, (curve, var)) in block.point_curves.iter().zip(&block.variances).enumerate() {
                w.write_record(["variance", &x.to_string(), "", "", &fmt_f64(*var), ""])?;
                write_curve(&mut w, "point", &x.to_string(), "", curve)?;
            }
            for (&(a, c), curve) in &block.increments {
                write_curve(&mut w, "increment", &a.to_string(), &c.to_string(), curve)?;
            }
            w.flush()?;
            let provenance = block
                .point_curves
                .first()
                .map(|c| c.provenance().clone())
                .unwrap_or(Provenance::Analytic);
            files.push(ManifestBlock { file: name, provenance });
        }
        let manifest = Manifest {
            points: self.points.clone(),
            p_grid: self.p_grid.clone(),
            blocks: files,
            index_blocks: self.index_map.clone(),
            note: note.map(String::from),
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json"))?)?;
        let n = manifest.points.len();
        let mut blocks = Vec::new();
        for mb in &manifest.blocks {
            blocks.push(read_block(&dir.join(&mb.file), n, &mb.provenance)?);
        }
        Self::new(manifest.points, manifest.p_grid, blocks, manifest.index_blocks)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestBlock {
    file: String,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    points: Vec<Vec<f64>>,
    p_grid: Vec<f64>,
    blocks: Vec<ManifestBlock>,
    /// Block number for each index `i = 1..=horizon`.
    index_blocks: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

fn write_curve<W: std::io::Write>(
    w: &mut csv::Writer<W>,
    kind: &str,
    x1: &str,
    x2: &str,
    curve: &MomentCurve,
) -> Result<()> {
    for (j, (&p, &v)) in curve.p_grid().iter().zip(curve.norms()).enumerate() {
        let se = curve.std_errors().map(|s| fmt_f64(s[j])).unwrap_or_default();
        w.write_record([kind, x1, x2, &fmt_f64(p), &fmt_f64(v), &se])?;
    }
    Ok(())
}

#[derive(Default)]
struct CurveRows {
    p: Vec<f64>,
    v: Vec<f64>,
    se: Vec<Option<f64>>,
}

impl CurveRows {
    fn finish(self, provenance: &Provenance) -> Result<MomentCurve> {
        match (provenance, self.se.iter().all(Option::is_some)) {
            (Provenance::MonteCarlo { seed, replications }, true) => MomentCurve::monte_carlo(
                self.p,
                self.v,
                self.se.into_iter().flatten().collect(),
                *seed,
                *replications,
            ),
            _ => MomentCurve::analytic(self.p, self.v),
        }
    }
}

fn read_block(path: &Path, n: usize, provenance: &Provenance) -> Result<IndexMoments> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let mut variances = vec![f64::NAN; n];
    let mut points: BTreeMap<usize, CurveRows> = BTreeMap::new();
    let mut pairs: BTreeMap<(usize, usize), CurveRows> = BTreeMap::new();
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|e| Error::MissingData(format!("{}: bad number {s:?}: {e}", path.display())))
    };
    let parse_ix = |s: &str| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|e| Error::MissingData(format!("{}: bad index {s:?}: {e}", path.display())))
    };
    for rec in rdr.records() {
        let rec = rec?;
        let get = |k: usize| rec.get(k).unwrap_or("");
        let se = if get(5).is_empty() { None } else { Some(parse(get(5))?) };
        match get(0) {
            "variance" => {
                let x = parse_ix(get(1))?;
                if x >= n {
                    return Err(Error::MissingData(format!("variance row for unknown point {x}")));
                }
                variances[x] = parse(get(4))?;
            }
            "point" => {
                let c = points.entry(parse_ix(get(1))?).or_default();
                c.p.push(parse(get(3))?);
                c.v.push(parse(get(4))?);
                c.se.push(se);
            }
            "increment" => {
                let c = pairs.entry((parse_ix(get(1))?, parse_ix(get(2))?)).or_default();
                c.p.push(parse(get(3))?);
                c.v.push(parse(get(4))?);
                c.se.push(se);
            }
            other => return Err(Error::MissingData(format!("unknown row kind {other:?}"))),
        }
    }
    if points.len() != n || variances.iter().any(|v| v.is_nan()) {
        return Err(Error::MissingData(format!("{} lacks point rows", path.display())));
    }
    Ok(IndexMoments {
        point_curves: points.into_values().map(|c| c.finish(provenance)).collect::<Result<_>>()?,
        variances,
        increments: pairs
            .into_iter()
            .map(|(k, c)| Ok((k, c.finish(provenance)?)))
            .collect::<Result<_>>()?,
    })
}

/// `psi(p) = max_{i, x} |xi_i(x)|_p`, tabulated on `p_grid` with support
/// `(1, inf)`.
pub fn natural_function(field: &PairwiseMomentField, p_grid: &[f64]) -> Result<PsiFunction> {
    if p_grid.iter().any(|&p| !(p > 1.0)) {
        return Err(Error::InvalidArgument("natural function grid must lie above p = 1".into()));
    }
    let used = field.used_blocks(field.horizon());
    let mut values = Vec::with_capacity(p_grid.len());
    for &p in p_grid {
        let mut best = 0.0f64;
        for &b in &used {
            for (x, curve) in field.blocks[b].point_curves.iter().enumerate() {
                let v = curve
                    .value_at(p)
                    .ok_or_else(|| Error::MissingData(format!("point {x} curve lacks p = {p}")))?;
                best = best.max(v);
            }
        }
        values.push(best);
    }
    PsiFunction::tabulated(1.0, f64::INFINITY, p_grid.to_vec(), values)
}

/// `d_i(x1, x2) = || xi_i(x1) - xi_i(x2) ||_{G psi}`.
pub fn distance_di(field: &PairwiseMomentField, i: usize, x1: usize, x2: usize, psi: &PsiFunction) -> Result<f64> {
    gls_norm(&*field.increment(i, x1, x2)?, psi)
}

/// `sup_{n in n_grid} sqrt(n^-1 sum_{i<=n} d_i^2)` for a given sequence `d_1, d_2, ...`.
pub fn cesaro_sup(d: &[f64], n_grid: &[usize]) -> Result<f64> {
    let mut prefix = Vec::with_capacity(d.len() + 1);
    prefix.push(0.0);
    for v in d {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    let mut sup = 0.0f64;
    for &n in n_grid {
        if n == 0 || n > d.len() {
            return Err(Error::MissingData(format!("n = {n} needs d_1..d_n, have {}", d.len())));
        }
        sup = sup.max((prefix[n] / n as f64).sqrt());
    }
    Ok(sup)
}

fn di_sequence(field: &PairwiseMomentField, x1: usize, x2: usize, psi: &PsiFunction, n_max: usize) -> Result<Vec<f64>> {
    if n_max > field.horizon() {
        return Err(Error::MissingData(format!(
            "n = {n_max} exceeds the field horizon {}",
            field.horizon()
        )));
    }
    let mut per_block = BTreeMap::new();
    for b in field.used_blocks(n_max) {
        per_block.insert(b, gls_norm(&*field.block_increment(b, x1, x2)?, psi)?);
    }
    Ok(field.index_map[..n_max].iter().map(|b| per_block[b]).collect())
}

/// `d_bar(x1, x2) = sup_n sqrt(n^-1 sum_{i<=n} d_i^2)` over `n_grid`.
pub fn distance_bar(
    field: &PairwiseMomentField,
    x1: usize,
    x2: usize,
    psi: &PsiFunction,
    n_grid: &[usize],
) -> Result<f64> {
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    cesaro_sup(&di_sequence(field, x1, x2, psi, n_max)?, n_grid)
}

/// Measured constant in `d_k <= C d_bar`: `max_{k <= max n_grid} d_k / d_bar`
/// (`0` when `d_bar = 0`). Always at most `sqrt(max n_grid)`.
pub fn di_to_bar_constant(
    field: &PairwiseMomentField,
    x1: usize,
    x2: usize,
    psi: &PsiFunction,
    n_grid: &[usize],
) -> Result<f64> {
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    let d = di_sequence(field, x1, x2, psi, n_max)?;
    let bar = cesaro_sup(&d, n_grid)?;
    if bar == 0.0 {
        return Ok(0.0);
    }
    Ok(d.iter().copied().fold(0.0, f64::max) / bar)
}

/// Pisier distance `d_r(x1, x2) = sup_k |xi_k(x1) - xi_k(x2)|_r`.
pub fn pisier_distance(field: &PairwiseMomentField, x1: usize, x2: usize, r: f64) -> Result<f64> {
    let mut sup = 0.0f64;
    for b in field.used_blocks(field.horizon()) {
        let curve = field.block_increment(b, x1, x2)?;
        let v = curve
            .value_at(r)
            .ok_or_else(|| Error::MissingData(format!("increment curve lacks p = {r}")))?;
        sup = sup.max(v);
    }
    Ok(sup)
}

/// `rho_q(x1, x2) = sup_k || xi_k(x1) - xi_k(x2) ||_(q)`.
pub fn rho_q_distance(field: &PairwiseMomentField, x1: usize, x2: usize, q: f64) -> Result<f64> {
    let mut sup = 0.0f64;
    for b in field.used_blocks(field.horizon()) {
        sup = sup.max(subq_norm(&*field.block_increment(b, x1, x2)?, q)?);
    }
    Ok(sup)
}

/// Growth factor between the last two `n_grid` averages that flags a
/// variance average as unbounded.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointVariance {
    /// `sup_{n in n_grid} n^-1 sum_{k<=n} Var(xi_k(x))`.
    pub sup_average: f64,
    pub divergence_suspected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaSquared {
    /// Infimum over points not flagged as divergent; `+inf` when every point is flagged.
    #[serde(with = "crate::numerics::ext_real")]
    pub value: f64,
    /// Infimum over all points of the truncated suprema.
    pub grid_value: f64,
    /// True when every point is flagged.
    pub divergence_suspected: bool,
    pub n_max: usize,
    pub per_point: Vec<PointVariance>,
}

impl SigmaSquared {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

/// `inf_x sup_n n^-1 sum_{k<=n} Var(xi_k(x))` with `n` on `n_grid` and the
/// divergence heuristic applied per point.
pub fn sigma_squared(field: &PairwiseMomentField, n_grid: &[usize], growth_factor: f64) -> Result<SigmaSquared> {
    let mut grid: Vec<usize> = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let n_max = *grid.last().ok_or_else(|| Error::MissingData("empty n_grid".into()))?;
    if grid[0] == 0 || n_max > field.horizon() {
        return Err(Error::MissingData(format!(
            "n_grid must lie in 1..={}, got max {n_max}",
            field.horizon()
        )));
    }
    let mut per_point = Vec::new();
    for x in 0..field.points.len() {
        let mut sum = 0.0;
        let mut averages = Vec::with_capacity(grid.len());
        let mut next = 0;
        for k in 1..=n_max {
            sum += field.blocks[field.index_map[k - 1]].variances[x];
            if k == grid[next] {
                averages.push(sum / k as f64);
                next += 1;
            }
        }
        let mut running = Vec::with_capacity(averages.len());
        let mut sup = 0.0f64;
        for a in &averages {
            sup = sup.max(*a);
            running.push(sup);
        }
        let suspected = running.len() >= 2 && {
            let (prev, last) = (running[running.len() - 2], running[running.len() - 1]);
            last > growth_factor * prev
        };
        per_point.push(PointVariance {
            sup_average: sup,
            divergence_suspected: suspected,
        });
    }
    let grid_value = per_point.iter().map(|p| p.sup_average).fold(f64::INFINITY, f64::min);
    let value = per_point
        .iter()
        .filter(|p| !p.divergence_suspected)
        .map(|p| p.sup_average)
        .fold(f64::INFINITY, f64::min);
    Ok(SigmaSquared {
        value,
        grid_value,
        divergence_suspected: value.is_infinite(),
        n_max,
        per_point,
    })
}

/// Which semi-distance to assemble into a matrix.
#[derive(Debug, Clone)]
pub enum DistanceKind {
    /// `d_i` for a single index.
    Index { i: usize, psi: PsiFunction },
    Bar { psi: PsiFunction, n_grid: Vec<usize> },
    Pisier { r: f64 },
    RhoQ { q: f64 },
}

/// Assembles the distance matrix over all point pairs (parallel over pairs;
/// entries do not depend on the schedule).
pub fn distance_matrix(field: &PairwiseMomentField, kind: &DistanceKind) -> Result<FiniteMetricSpace> {
    let n = field.points.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| match kind {
            DistanceKind::Index { i, psi } => distance_di(field, *i, a, b, psi),
            DistanceKind::Bar { psi, n_grid } => distance_bar(field, a, b, psi, n_grid),
            DistanceKind::Pisier { r } => pisier_distance(field, a, b, *r),
            DistanceKind::RhoQ { q } => rho_q_distance(field, a, b, *q),
        })
        .collect::<Result<_>>()?;
    let mut rows = vec![vec![0.0; n]; n];
    for (&(a, b), &v) in pairs.iter().zip(&values) {
        rows[a][b] = v;
        rows[b][a] = v;
    }
    FiniteMetricSpace::from_matrix(rows)
}
