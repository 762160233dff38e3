//! `uclt inequalities`: moment inequality, tail domination, decay slopes,
//! martingale-difference and CLT diagnostics over a model suite.

use anyhow::{bail, Result};
use serde::Serialize;
use uclt_core::lab::checks::{CltReport, MdReport, OsekowskiReport, TailReport};
use uclt_core::lab::{clt_diagnostic, md_check, osekowski_check, tail_domination, LabOptions, Target};
use uclt_core::numerics::log_grid;
use uclt_core::tails::{decay_slope, sum_decay_exponent, w_operator, TailForm};

use crate::config::InequalityConfig;
use crate::output::{num, RunDir};

#[derive(Debug, Serialize)]
pub struct CltOutcome {
    #[serde(flatten)]
    pub report: CltReport,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Debug, Default, Serialize)]
pub struct ModelOutcome {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub osekowski: Option<OsekowskiReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tails: Option<TailReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub md: Option<MdReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clt: Option<CltOutcome>,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct DecayOutcome {
    pub k: f64,
    pub q: f64,
    pub slope: f64,
    /// `2q / (2 + q)`
    pub exponent: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct SuiteReport {
    pub models: Vec<ModelOutcome>,
    pub decay: Vec<DecayOutcome>,
    pub pass: bool,
}

pub fn run(cfg: &InequalityConfig, out: &mut RunDir, threads: usize) -> Result<bool> {
    let opts = |r: Option<u64>| LabOptions::new(r.unwrap_or(cfg.replications), threads);
    let mut models = Vec::new();
    let (mut osek_rows, mut tail_rows, mut md_rows, mut ks_rows, mut ks_point_rows) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for model in &cfg.models {
        log::info!("inequality suite on {}", model.name);
        let mut o = ModelOutcome {
            model: model.name.clone(),
            pass: true,
            ..Default::default()
        };
        if let Some(s) = &cfg.osekowski {
            let targets = s.targets.clone().unwrap_or_else(|| {
                let mut t = vec![Target::Point { x: 0 }];
                if model.len() > 1 {
                    t.push(Target::Pair { x1: 0, x2: model.len() - 1 });
                }
                t
            });
            let rep = osekowski_check(model, &targets, &s.p_grid, &s.n_grid, &opts(s.replications))?;
            for r in &rep.rows {
                osek_rows.push(vec![
                    model.name.clone(),
                    r.target.clone(),
                    num(r.p),
                    r.n.to_string(),
                    num(r.lhs.value),
                    num(r.lhs.std_error),
                    num(r.rhs.value),
                    num(r.rhs.std_error),
                    num(r.ratio.value),
                    num(r.ratio.std_error),
                    num(rep.constant),
                    r.pass.to_string(),
                ]);
            }
            o.pass &= rep.all_pass();
            o.osekowski = Some(rep);
        }
        if let Some(s) = &cfg.tails {
            if model.dominating_tail().is_some() {
                let rep = tail_domination(model, s.point, &s.n_grid, &s.x, s.weighted, &opts(s.replications))?;
                for r in &rep.rows {
                    tail_rows.push(vec![
                        model.name.clone(),
                        s.point.to_string(),
                        s.weighted.to_string(),
                        r.n.to_string(),
                        num(r.x),
                        num(r.empirical_tail),
                        num(r.std_error),
                        num(r.bound),
                        r.pass.to_string(),
                    ]);
                }
                o.pass &= rep.all_pass();
                o.tails = Some(rep);
            } else {
                o.skipped.push("tails: no known dominating tail function".into());
            }
        }
        if let Some(s) = &cfg.md {
            let rep = md_check(model, s.n, &opts(s.replications))?;
            for r in &rep.rows {
                md_rows.push(vec![
                    model.name.clone(),
                    r.point.to_string(),
                    r.function.clone(),
                    num(r.mean),
                    num(r.std_error),
                    num(r.t),
                    num(rep.threshold),
                    (r.t.abs() <= rep.threshold).to_string(),
                ]);
            }
            o.pass &= rep.pass;
            o.md = Some(rep);
        }
        if let Some(s) = &cfg.clt {
            let rep = clt_diagnostic(model, s.n_small, s.n_large, &opts(s.replications))?;
            let threshold = s.threshold.unwrap_or(rep.critical_value_05);
            let pass = rep.ks_stat_supnorm <= threshold;
            ks_rows.push(vec![
                model.name.clone(),
                s.n_small.to_string(),
                s.n_large.to_string(),
                num(rep.ks_stat_supnorm),
                num(rep.critical_value_05),
                num(rep.p_value),
                num(threshold),
                pass.to_string(),
            ]);
            for p in &rep.per_point_ks {
                ks_point_rows.push(vec![model.name.clone(), p.point.to_string(), p.n.to_string(), num(p.ks)]);
            }
            o.pass &= pass;
            o.clt = Some(CltOutcome { report: rep, threshold, pass });
        }
        models.push(o);
    }

    let mut decay = Vec::new();
    let mut decay_rows = Vec::new();
    if let Some(s) = &cfg.decay {
        let xs = log_grid(s.x_min, s.x_max, s.points);
        for t in &s.tails {
            let TailForm::ClosedWeibull { k, q } = *t.form() else {
                bail!("decay checks need closed Weibull tails");
            };
            for &x in &xs {
                let w = w_operator(t, x)?;
                decay_rows.push(vec![num(k), num(q), num(x), num(w), num(-w.ln())]);
            }
            let slope = decay_slope(t, &xs)?;
            let exponent = sum_decay_exponent(q);
            decay.push(DecayOutcome {
                k,
                q,
                slope,
                exponent,
                tolerance: s.tolerance,
                pass: slope >= exponent - s.tolerance,
            });
        }
    }

    if cfg.osekowski.is_some() {
        out.csv(
            "osekowski.csv",
            &["model", "target", "p", "n", "lhs", "lhs_se", "rhs", "rhs_se", "ratio", "ratio_se", "bound", "pass"],
            osek_rows,
        )?;
    }
    if cfg.tails.is_some() {
        out.csv(
            "tails.csv",
            &["model", "point", "weighted", "n", "x", "tail", "std_error", "bound", "pass"],
            tail_rows,
        )?;
    }
    if cfg.md.is_some() {
        out.csv(
            "md.csv",
            &["model", "point", "function", "mean", "std_error", "t", "threshold", "pass"],
            md_rows,
        )?;
    }
    if cfg.clt.is_some() {
        out.csv(
            "ks.csv",
            &["model", "n_small", "n_large", "ks", "critical_value", "p_value", "threshold", "pass"],
            ks_rows,
        )?;
        out.csv("ks_points.csv", &["model", "point", "n", "ks"], ks_point_rows)?;
    }
    if cfg.decay.is_some() {
        out.csv("decay.csv", &["k", "q", "x", "w", "neg_log_w"], decay_rows)?;
    }

    let pass = models.iter().all(|m| m.pass) && decay.iter().all(|d| d.pass);
    for m in &models {
        eprintln!("{}: {}", m.model, if m.pass { "pass" } else { "FAIL" });
    }
    for d in &decay {
        eprintln!("decay K={} q={}: slope {:.4} vs {:.4}: {}", d.k, d.q, d.slope, d.exponent, if d.pass { "pass" } else { "FAIL" });
    }
    out.json("report.json", "inequalities", &SuiteReport { models, decay, pass })?;
    Ok(pass)
}
