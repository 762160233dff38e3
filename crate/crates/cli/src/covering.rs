//! `uclt covering`: covering numbers and entropy integrals of a finite space.

use anyhow::Result;
use serde::Serialize;
use uclt_core::integrals::{
    entropy_integral, entropy_power_integral, pisier_condition, EntropyProfile, IntegralReport, IntegralVerdict,
};
use uclt_core::metric::{
    covering_number_exact, diameter, CoverMode, FiniteMetricSpace, GreedyEnvelope,
};
use uclt_core::numerics::log_grid;
use uclt_core::ExtremumOptions;

use crate::config::{CoveringConfig, SpaceSpec};
use crate::output::{num, RunDir};

#[derive(Debug, Serialize)]
pub struct CoveringReport {
    pub points: usize,
    pub diameter: f64,
    pub mode: CoverMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holder_constant: Option<f64>,
    pub integrals: Vec<LabelledIntegral>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct LabelledIntegral {
    pub label: String,
    pub profile: &'static str,
    #[serde(flatten)]
    pub report: IntegralReport,
}

pub fn load_space(spec: &SpaceSpec) -> uclt_core::Result<FiniteMetricSpace> {
    match spec {
        SpaceSpec::MatrixCsv { path } => FiniteMetricSpace::from_csv_matrix_path(path),
        SpaceSpec::CoordsCsv { path, metric } => FiniteMetricSpace::from_csv_coords_path(path, *metric),
        SpaceSpec::Coords { coords, metric } => FiniteMetricSpace::from_coords(coords.clone(), *metric),
        SpaceSpec::Grid { lo, hi, count, metric } => FiniteMetricSpace::uniform_grid(*lo, *hi, *count, *metric),
    }
}

pub fn run(cfg: &CoveringConfig, out: &mut RunDir) -> Result<bool> {
    let space = load_space(&cfg.space)?;
    let d = diameter(&space)?;
    let eps = match &cfg.eps {
        Some(e) => e.clone(),
        None if d > 0.0 => log_grid(cfg.eps_floor * d, d, cfg.nodes).into_iter().rev().collect(),
        None => vec![1.0],
    };
    let counts: Vec<usize> = match cfg.mode {
        CoverMode::Greedy => {
            let env = GreedyEnvelope::new(&space)?;
            eps.iter().map(|&e| env.count(e)).collect::<uclt_core::Result<_>>()?
        }
        CoverMode::Exact => eps
            .iter()
            .map(|&e| covering_number_exact(&space, e))
            .collect::<uclt_core::Result<_>>()?,
    };
    out.csv(
        "covering.csv",
        &["eps", "covering_number", "entropy"],
        eps.iter()
            .zip(&counts)
            .map(|(&e, &n)| vec![num(e), n.to_string(), num((n as f64).ln())]),
    )?;

    let mut profiles = vec![("measured", EntropyProfile::from_space(&space, cfg.mode, cfg.nodes, cfg.eps_floor)?)];
    let mut holder_constant = None;
    if let Some(h) = &cfg.holder {
        let fit_eps: Vec<f64> = [0.05, 0.1, 0.2, 0.3, 0.5].iter().map(|f| f * d).collect();
        let p = EntropyProfile::holder_fit(&space, h.dim, h.alpha, &fit_eps)?;
        if let EntropyProfile::Holder { model, .. } = &p {
            holder_constant = Some(model.c2);
        }
        profiles.push(("holder", p));
    }

    let ext = ExtremumOptions::default();
    let mut integrals = Vec::new();
    for (name, profile) in &profiles {
        let mut add = |label: String, report: IntegralReport| -> Result<()> {
            out.csv(
                &format!("trace_{label}_{name}.csv"),
                &["eps", "entropy", "integrand"],
                report.trace.iter().map(|r| vec![num(r.eps), num(r.entropy), num(r.integrand)]),
            )?;
            integrals.push(LabelledIntegral {
                label,
                profile: name,
                report,
            });
            Ok(())
        };
        if let Some(psi) = &cfg.psi {
            add("psi".into(), entropy_integral(profile, psi, &ext)?)?;
        }
        for &r in &cfg.pisier_r {
            add(format!("pisier_r{r}"), pisier_condition(profile, r)?)?;
        }
        for &k in &cfg.entropy_powers {
            add(format!("power_k{k}"), entropy_power_integral(profile, k, "entropy-power")?)?;
        }
    }
    let pass = integrals.iter().all(|i| i.report.verdict != IntegralVerdict::Divergent);
    for i in &integrals {
        eprintln!("{} ({}): {:?}", i.label, i.profile, i.report.verdict);
    }
    let report = CoveringReport {
        points: space.len(),
        diameter: d,
        mode: cfg.mode,
        holder_constant,
        integrals,
        pass,
    };
    out.json("report.json", "covering", &report)?;
    Ok(pass)
}
