//! Run configurations. Every block rejects unknown keys; value checks run
//! inside deserialization so errors carry the JSON line and column.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::{DeserializeOwned, Error as _};
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use uclt_core::lab::{MartingaleFieldModel, Target};
use uclt_core::metric::{CoverMode, Metric};
use uclt_core::tails::TailFunction;
use uclt_core::PsiFunction;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Overrides from the command line.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub reps: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Shared behaviour of the per-command configurations.
pub trait RunConfig: Serialize + DeserializeOwned {
    fn apply(&mut self, o: &Overrides);
    fn check(&self) -> Result<(), String> {
        Ok(())
    }
    fn seed(&self) -> u64;
    fn out(&self) -> Option<&Path>;
    fn clear_out(&mut self);
    /// Resolves relative input paths against the config directory.
    fn resolve(&mut self, _base: &Path) {}
}

/// Reads, validates and overrides a configuration file.
pub fn load<C: RunConfig>(path: &Path, o: &Overrides) -> Result<C, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let mut cfg: C = serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    cfg.apply(o);
    cfg.resolve(path.parent().unwrap_or(Path::new(".")));
    cfg.check().map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    Ok(cfg)
}

/// SHA-256 of the canonical JSON form, output directory excluded.
pub fn config_hash<C: RunConfig + Clone>(cfg: &C) -> String {
    let mut c = cfg.clone();
    c.clear_out();
    let canonical = serde_json::to_vec(&c).expect("config serializes");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

fn positive<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    let v = f64::deserialize(d)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(D::Error::custom(format!("expected a positive number, got {v}")))
    }
}

fn positive_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    positive(d).map(Some)
}

fn positive_u64<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    let v = u64::deserialize(d)?;
    if v == 0 {
        return Err(D::Error::custom("expected a positive integer"));
    }
    Ok(v)
}

fn positive_u64_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
    positive_u64(d).map(Some)
}

fn model<'de, D: Deserializer<'de>>(d: D) -> Result<MartingaleFieldModel, D::Error> {
    let m = MartingaleFieldModel::deserialize(d)?;
    m.validate().map_err(D::Error::custom)?;
    Ok(m)
}

fn models<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<MartingaleFieldModel>, D::Error> {
    let ms = Vec::<MartingaleFieldModel>::deserialize(d)?;
    if ms.is_empty() {
        return Err(D::Error::custom("at least one model is required"));
    }
    for m in &ms {
        m.validate().map_err(D::Error::custom)?;
    }
    Ok(ms)
}

fn p_grid<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let g = Vec::<f64>::deserialize(d)?;
    if g.is_empty() || g.iter().any(|p| !(*p > 1.0 && p.is_finite())) || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(D::Error::custom("p grid must be nonempty, ascending and above 1"));
    }
    Ok(g)
}

fn n_grid<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    let g = Vec::<usize>::deserialize(d)?;
    if g.is_empty() || g[0] == 0 || g.windows(2).any(|w| w[1] <= w[0]) {
        return Err(D::Error::custom("n grid must be nonempty, ascending and positive"));
    }
    Ok(g)
}

fn n_grid_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<usize>>, D::Error> {
    n_grid(d).map(Some)
}

fn default_reps() -> u64 {
    10_000
}

fn default_p_grid() -> Vec<f64> {
    vec![2.0, 3.0, 4.0, 6.0, 8.0]
}

fn models_within_horizon(models: &[MartingaleFieldModel], n: usize, what: &str) -> Result<(), String> {
    match models.iter().find(|m| m.horizon < n) {
        Some(m) => Err(format!("{what} needs n = {n} but model {} has horizon {}", m.name, m.horizon)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Power,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    Greedy,
    Exact,
    /// Hölder model fitted to greedy counts.
    Holder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyConfig {
    #[serde(default = "default_entropy_mode")]
    pub mode: EntropyMode,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_eps_floor", deserialize_with = "positive")]
    pub eps_floor: f64,
    /// Hölder mode: dimension of the parameter set.
    #[serde(default)]
    pub dim: Option<u32>,
    /// Hölder mode: exponent of the distance in the coordinates.
    #[serde(default, deserialize_with = "positive_opt")]
    pub alpha: Option<f64>,
    /// Hölder mode: radii, as fractions of the diameter, used to fit the constant.
    #[serde(default = "default_fit_fractions")]
    pub fit_fractions: Vec<f64>,
}

fn default_entropy_mode() -> EntropyMode {
    EntropyMode::Greedy
}

fn default_nodes() -> usize {
    uclt_core::integrals::DEFAULT_NODES
}

fn default_eps_floor() -> f64 {
    uclt_core::integrals::DEFAULT_EPS_FLOOR
}

fn default_fit_fractions() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.3, 0.5]
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            mode: default_entropy_mode(),
            nodes: default_nodes(),
            eps_floor: default_eps_floor(),
            dim: None,
            alpha: None,
            fit_fractions: default_fit_fractions(),
        }
    }
}

impl EntropyConfig {
    fn check(&self) -> Result<(), String> {
        if self.nodes < 2 {
            return Err("entropy.nodes must be at least 2".into());
        }
        if self.mode == EntropyMode::Holder && (self.dim.is_none() || self.alpha.is_none()) {
            return Err("entropy mode \"holder\" needs dim and alpha".into());
        }
        if self.fit_fractions.is_empty() || self.fit_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err("entropy.fit_fractions must lie in (0, 1]".into());
        }
        Ok(())
    }
}

/// `uclt check-theorem`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps", deserialize_with = "positive_u64")]
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(deserialize_with = "model")]
    pub model: MartingaleFieldModel,
    #[serde(default = "default_p_grid", deserialize_with = "p_grid")]
    pub p_grid: Vec<f64>,
    /// Defaults to powers of two up to the model horizon.
    #[serde(default, deserialize_with = "n_grid_opt")]
    pub n_grid: Option<Vec<usize>>,
    /// Generating function; the natural function of the simulated field when absent.
    #[serde(default)]
    pub psi: Option<PsiFunction>,
    #[serde(default = "default_levels")]
    pub levels: Vec<Level>,
    /// Exponential level: tail order of the increments.
    #[serde(default, deserialize_with = "positive_opt")]
    pub q: Option<f64>,
    #[serde(default)]
    pub entropy: EntropyConfig,
    #[serde(default = "default_divergence", deserialize_with = "positive")]
    pub divergence_factor: f64,
}

fn default_levels() -> Vec<Level> {
    vec![Level::Power]
}

fn default_divergence() -> f64 {
    uclt_core::distances::DEFAULT_DIVERGENCE_FACTOR
}

impl TheoremConfig {
    pub fn n_grid(&self) -> Vec<usize> {
        self.n_grid
            .clone()
            .unwrap_or_else(|| uclt_core::distances::dyadic_n_grid(self.model.horizon))
    }
}

impl RunConfig for TheoremConfig {
    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.reps {
            self.replications = r;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        self.model.seed = self.seed;
    }

    fn check(&self) -> Result<(), String> {
        if self.levels.is_empty() {
            return Err("levels must name at least one check".into());
        }
        if self.levels.contains(&Level::Exponential) && self.q.is_none() {
            return Err("the exponential level needs q".into());
        }
        if self.model.len() < 2 {
            return Err("the model needs at least two points".into());
        }
        models_within_horizon(std::slice::from_ref(&self.model), *self.n_grid().last().unwrap_or(&0), "n_grid")?;
        if let Some(psi) = &self.psi {
            if !self.p_grid.iter().any(|p| psi.contains(*p)) {
                return Err("psi is infinite on the whole p grid".into());
            }
        }
        self.entropy.check()
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn clear_out(&mut self) {
        self.out = None;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsekowskiSection {
    #[serde(default = "default_p_grid", deserialize_with = "p_grid")]
    pub p_grid: Vec<f64>,
    #[serde(default = "default_osekowski_n", deserialize_with = "n_grid")]
    pub n_grid: Vec<usize>,
    /// Defaults to the first point and the (first, last) pair.
    #[serde(default)]
    pub targets: Option<Vec<Target>>,
    #[serde(default, deserialize_with = "positive_u64_opt")]
    pub replications: Option<u64>,
}

fn default_osekowski_n() -> Vec<usize> {
    vec![8, 64, 512]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    #[serde(default)]
    pub point: usize,
    #[serde(default = "default_tail_n", deserialize_with = "n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_tail_x")]
    pub x: Vec<f64>,
    /// Random unit weights `b` instead of `n^-1/2`.
    #[serde(default)]
    pub weighted: bool,
    #[serde(default, deserialize_with = "positive_u64_opt")]
    pub replications: Option<u64>,
}

fn default_tail_n() -> Vec<usize> {
    vec![16, 256]
}

fn default_tail_x() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySection {
    /// Closed Weibull tails.
    pub tails: Vec<TailFunction>,
    #[serde(default = "default_decay_lo", deserialize_with = "positive")]
    pub x_min: f64,
    #[serde(default = "default_decay_hi", deserialize_with = "positive")]
    pub x_max: f64,
    #[serde(default = "default_decay_points")]
    pub points: usize,
    #[serde(default = "default_decay_tol")]
    pub tolerance: f64,
}

fn default_decay_lo() -> f64 {
    10.0
}

fn default_decay_hi() -> f64 {
    100.0
}

fn default_decay_points() -> usize {
    10
}

fn default_decay_tol() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdSection {
    #[serde(default = "default_md_n")]
    pub n: usize,
    #[serde(default, deserialize_with = "positive_u64_opt")]
    pub replications: Option<u64>,
}

fn default_md_n() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltSection {
    pub n_small: usize,
    pub n_large: usize,
    #[serde(default, deserialize_with = "positive_u64_opt")]
    pub replications: Option<u64>,
    /// Largest acceptable sup-norm KS statistic; the 5% two-sample critical
    /// value when absent.
    #[serde(default, deserialize_with = "positive_opt")]
    pub threshold: Option<f64>,
}

/// `uclt inequalities`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps", deserialize_with = "positive_u64")]
    pub replications: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(deserialize_with = "models")]
    pub models: Vec<MartingaleFieldModel>,
    #[serde(default)]
    pub osekowski: Option<OsekowskiSection>,
    #[serde(default)]
    pub tails: Option<TailSection>,
    #[serde(default)]
    pub decay: Option<DecaySection>,
    #[serde(default)]
    pub md: Option<MdSection>,
    #[serde(default)]
    pub clt: Option<CltSection>,
}

impl RunConfig for InequalityConfig {
    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.reps {
            self.replications = r;
            if let Some(s) = &mut self.osekowski {
                s.replications = None;
            }
            if let Some(s) = &mut self.tails {
                s.replications = None;
            }
            if let Some(s) = &mut self.md {
                s.replications = None;
            }
            if let Some(s) = &mut self.clt {
                s.replications = None;
            }
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
        for m in &mut self.models {
            m.seed = self.seed;
        }
    }

    fn check(&self) -> Result<(), String> {
        let mut names: Vec<&str> = self.models.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err("model names must be unique".into());
        }
        if let Some(s) = &self.osekowski {
            models_within_horizon(&self.models, *s.n_grid.last().unwrap(), "osekowski")?;
        }
        if let Some(s) = &self.tails {
            models_within_horizon(&self.models, *s.n_grid.last().unwrap(), "tails")?;
            if s.x.is_empty() || s.x.iter().any(|x| !(*x > 1.0 && x.is_finite())) {
                return Err("tails.x must be nonempty and above 1".into());
            }
            if let Some(m) = self.models.iter().find(|m| s.point >= m.len()) {
                return Err(format!("tails.point is outside model {}", m.name));
            }
        }
        if let Some(s) = &self.decay {
            if !(s.x_max > s.x_min) || s.points < 2 {
                return Err("decay needs x_max > x_min and at least 2 points".into());
            }
        }
        if let Some(s) = &self.md {
            if s.n < 2 {
                return Err("md.n must be at least 2".into());
            }
            models_within_horizon(&self.models, s.n, "md")?;
        }
        if let Some(s) = &self.clt {
            if s.n_small == 0 || s.n_small > s.n_large {
                return Err("clt needs 0 < n_small <= n_large".into());
            }
            models_within_horizon(&self.models, s.n_large, "clt")?;
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn clear_out(&mut self) {
        self.out = None;
    }
}

/// Where the finite metric space comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    /// `n x n` distance matrix, header optional.
    MatrixCsv { path: PathBuf },
    /// One point per row.
    CoordsCsv {
        path: PathBuf,
        #[serde(default = "euclidean")]
        metric: Metric,
    },
    Coords {
        coords: Vec<Vec<f64>>,
        #[serde(default = "euclidean")]
        metric: Metric,
    },
    /// Uniform grid on `[lo, hi]`.
    Grid {
        lo: f64,
        hi: f64,
        count: usize,
        #[serde(default = "euclidean")]
        metric: Metric,
    },
}

fn euclidean() -> Metric {
    Metric::Euclidean
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HolderSection {
    pub dim: u32,
    #[serde(deserialize_with = "positive")]
    pub alpha: f64,
}

/// `uclt covering`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub space: SpaceSpec,
    #[serde(default = "default_cover_mode")]
    pub mode: CoverMode,
    /// Radii listed in `covering.csv`; the profile nodes when absent.
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_eps_floor", deserialize_with = "positive")]
    pub eps_floor: f64,
    /// Fit `N(eps) <= c2 eps^(-dim/alpha)` and evaluate the integrals on the model too.
    #[serde(default)]
    pub holder: Option<HolderSection>,
    /// Entropy integral `J(psi, d)`.
    #[serde(default)]
    pub psi: Option<PsiFunction>,
    /// Exponents `r` of `int N^(1/r)`.
    #[serde(default)]
    pub pisier_r: Vec<f64>,
    /// Exponents `k` of `int H^k`.
    #[serde(default)]
    pub entropy_powers: Vec<f64>,
}

fn default_cover_mode() -> CoverMode {
    CoverMode::Greedy
}

impl RunConfig for CoveringConfig {
    fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = Some(out.clone());
        }
    }

    fn check(&self) -> Result<(), String> {
        if let Some(eps) = &self.eps {
            if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err("eps must be nonempty and positive".into());
            }
        }
        if self.nodes < 2 {
            return Err("nodes must be at least 2".into());
        }
        if self.pisier_r.iter().any(|r| !(*r >= 2.0 && r.is_finite())) {
            return Err("pisier_r values must be at least 2".into());
        }
        if self.entropy_powers.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return Err("entropy_powers must be positive".into());
        }
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }

    fn clear_out(&mut self) {
        self.out = None;
    }

    fn resolve(&mut self, base: &Path) {
        match &mut self.space {
            SpaceSpec::MatrixCsv { path } | SpaceSpec::CoordsCsv { path, .. } if path.is_relative() => {
                *path = base.join(&*path);
            }
            _ => {}
        }
    }
}
