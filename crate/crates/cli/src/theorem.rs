//! `uclt check-theorem`: simulate, estimate moments, build distances and
//! entropy profiles, then run the power- and exponential-level checks.

use anyhow::Result;
use serde::Serialize;
use uclt_core::distances::{distance_matrix, natural_function, sigma_squared, DistanceKind, SigmaSquared};
use uclt_core::integrals::{
    exponential_level_check, power_level_check, CheckReport, EntropyProfile, SATISFIED,
};
use uclt_core::lab::{estimate_moment_curves, LabOptions};
use uclt_core::metric::{diameter, CoverMode, FiniteMetricSpace};
use uclt_core::{ExtremumOptions, PsiFunction};

use crate::config::{EntropyConfig, EntropyMode, Level, TheoremConfig};
use crate::output::{num, RunDir};

#[derive(Debug, Serialize)]
pub struct TheoremReport {
    pub model: String,
    pub replications: u64,
    pub p_grid: Vec<f64>,
    pub n_grid: Vec<usize>,
    pub psi: PsiFunction,
    pub psi_source: &'static str,
    pub sigma_squared: SigmaSquared,
    pub checks: Vec<CheckReport>,
    pub conclusion: String,
    pub satisfied: bool,
}

pub fn profile_of(space: &FiniteMetricSpace, cfg: &EntropyConfig) -> uclt_core::Result<EntropyProfile> {
    match cfg.mode {
        EntropyMode::Greedy => EntropyProfile::from_space(space, CoverMode::Greedy, cfg.nodes, cfg.eps_floor),
        EntropyMode::Exact => EntropyProfile::from_space(space, CoverMode::Exact, cfg.nodes, cfg.eps_floor),
        EntropyMode::Holder => {
            let d = diameter(space)?;
            let eps: Vec<f64> = cfg.fit_fractions.iter().map(|f| f * d).collect();
            EntropyProfile::holder_fit(space, cfg.dim.unwrap_or(1), cfg.alpha.unwrap_or(1.0), &eps)
        }
    }
}

fn distance_rows(space: &FiniteMetricSpace) -> Vec<Vec<String>> {
    let n = space.len();
    (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .map(|(a, b)| vec![a.to_string(), b.to_string(), num(space.dist(a, b))])
        .collect()
}

pub fn run(cfg: &TheoremConfig, out: &mut RunDir, threads: usize) -> Result<bool> {
    let opts = LabOptions::new(cfg.replications, threads);
    let n_grid = cfg.n_grid();
    let n_max = *n_grid.last().expect("validated n grid");
    log::info!("estimating moment curves for {} up to n = {n_max}", cfg.model.name);
    let field = estimate_moment_curves(&cfg.model, None, &cfg.p_grid, n_max, &opts)?;
    let note = format!("config_hash={} seed={}", out.provenance().config_hash, out.provenance().seed);
    field.write_dir_annotated(out.path().join("moments"), Some(&note))?;
    out.record("moments/manifest.json");

    let sigma = sigma_squared(&field, &n_grid, cfg.divergence_factor)?;
    out.csv(
        "variance.csv",
        &["point", "sup_average", "divergence_suspected"],
        sigma
            .per_point
            .iter()
            .enumerate()
            .map(|(x, p)| vec![x.to_string(), num(p.sup_average), p.divergence_suspected.to_string()]),
    )?;

    let (psi, psi_source) = match &cfg.psi {
        Some(p) => (p.clone(), "config"),
        None => (natural_function(&field, &cfg.p_grid)?, "natural-function"),
    };
    let ext = ExtremumOptions::default();
    let mut checks = Vec::new();
    for level in &cfg.levels {
        let (tag, kind) = match level {
            Level::Power => (
                "power",
                DistanceKind::Bar {
                    psi: psi.clone(),
                    n_grid: n_grid.clone(),
                },
            ),
            Level::Exponential => ("exponential", DistanceKind::RhoQ { q: cfg.q.expect("validated q") }),
        };
        let space = distance_matrix(&field, &kind)?;
        out.csv(&format!("distances_{tag}.csv"), &["x1", "x2", "distance"], distance_rows(&space))?;
        let profile = profile_of(&space, &cfg.entropy)?;
        let report = match level {
            Level::Power => power_level_check(sigma.value, &profile, &psi, &ext)?,
            Level::Exponential => exponential_level_check(&profile, cfg.q.expect("validated q"), sigma.value)?,
        };
        out.csv(
            &format!("trace_{tag}.csv"),
            &["eps", "entropy", "integrand"],
            report.integral.trace.iter().map(|r| vec![num(r.eps), num(r.entropy), num(r.integrand)]),
        )?;
        checks.push(report);
    }
    let satisfied = checks.iter().all(|c| c.satisfied);
    let conclusion = checks
        .iter()
        .find(|c| !c.satisfied)
        .map_or_else(|| SATISFIED.to_string(), |c| c.conclusion.clone());
    let report = TheoremReport {
        model: cfg.model.name.clone(),
        replications: cfg.replications,
        p_grid: cfg.p_grid.clone(),
        n_grid,
        psi,
        psi_source,
        sigma_squared: sigma,
        checks,
        conclusion,
        satisfied,
    };
    out.json("report.json", "check-theorem", &report)?;
    eprintln!("{}: {}", report.model, report.conclusion);
    Ok(satisfied)
}
