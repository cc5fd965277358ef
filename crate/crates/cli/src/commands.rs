use std::path::{Path, PathBuf};

use hmopt_core::capacity::{bit_mis_hp, bit_mis_lp, mc_bit_mi, ChannelSpec, Layer, QuadratureSpec};
use hmopt_core::constellation::Constellation;
use hmopt_core::coverage::{snr_at_coverage, snr_exceed_prob, CoverageParams};
use hmopt_core::optimizer::{self, GradientMode, ProblemSpec, SolveResult, SolverConfig, Symmetry};
use hmopt_core::rateregion::{
    convex_hull, default_thresholds, dominates, hm_frontier, hqam_frontier, td_frontier, RegionFrontier, Scheme,
    CSV_HEADER,
};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::Artifact;
use crate::{
    CapacityArgs, CoverageArgs, HqamArgs, OptimizeArgs, Outcome, RegionArgs, SchemeArg, SolverArgs, SymmetryArg,
};

fn params<T: Serialize>(args: &T) -> CliResult<serde_json::Value> {
    serde_json::to_value(args).map_err(|e| CliError::Internal(e.to_string()))
}

fn pretty(value: &serde_json::Value) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn symmetry(s: SymmetryArg) -> Symmetry {
    match s {
        SymmetryArg::None => Symmetry::None,
        SymmetryArg::Central => Symmetry::Central,
    }
}

fn solver_config(s: &SolverArgs) -> SolverConfig {
    SolverConfig {
        starts: s.starts,
        seed: s.seed,
        mu_factor: s.mu_factor,
        kkt_tol: s.kkt_tol,
        max_outer: s.max_outer,
        max_inner: s.max_inner,
        gradient: GradientMode::Analytic,
        hqam_warm_start: !s.no_warm_start,
        ..SolverConfig::default()
    }
}

fn quadrature(nodes: usize) -> CliResult<QuadratureSpec> {
    let q = QuadratureSpec::with_nodes(nodes);
    q.validate()?;
    Ok(q)
}

pub fn coverage(a: &CoverageArgs) -> CliResult<Outcome> {
    let p = CoverageParams::new(a.ps, a.pn, a.radius, a.sigma)?;
    let (value, doc) = match (a.percent, a.snr) {
        (Some(percent), None) => {
            let fraction = percent / 100.0;
            let snr = snr_at_coverage(fraction, &p)?;
            (format!("{snr:.4}"), json!({ "fraction": fraction, "snr_db": snr }))
        }
        (None, Some(snr)) => {
            if !snr.is_finite() {
                return Err(CliError::Usage("snr must be finite".into()));
            }
            let fraction = snr_exceed_prob(snr, &p);
            (format!("{fraction:.6}"), json!({ "snr_db": snr, "fraction": fraction }))
        }
        _ => return Err(CliError::Usage("give exactly one of --percent and --snr".into())),
    };
    let text = if a.json {
        pretty(&json!({ "params": p, "result": doc }))?
    } else {
        value + "\n"
    };
    Ok(Outcome {
        artifacts: vec![Artifact::stdout(text)],
        parameters: params(a)?,
        seed: None,
        exit: None,
    })
}

fn read_constellation(path: &Path) -> CliResult<Constellation> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("reading {}: {e}", path.display())))?;
    Constellation::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn capacity(a: &CapacityArgs) -> CliResult<Outcome> {
    let c = read_constellation(&a.constellation)?;
    let q = QuadratureSpec {
        nodes_per_dim: a.nodes,
        mc_samples: a.mc_samples,
        seed: a.seed,
    };
    q.validate()?;
    let power = c.average_power();
    let power_ref = a.power_ref.unwrap_or(power);
    let ch_h = ChannelSpec::new(a.snr_h, power_ref)?;
    let hp = bit_mis_hp(&c, &ch_h, &q)?;
    let ch_l = match a.snr_l {
        Some(s) => {
            if c.m_l() == 0 {
                return Err(CliError::Input("constellation carries no low-priority bits".into()));
            }
            Some(ChannelSpec::new(s, power_ref)?)
        }
        None => None,
    };
    let lp = match &ch_l {
        Some(ch) => bit_mis_lp(&c, ch, &q)?,
        None => Vec::new(),
    };
    let mut doc = json!({
        "r_h": hp.iter().sum::<f64>(),
        "r_l": ch_l.map(|_| lp.iter().sum::<f64>()),
        "per_bit_hp": hp,
        "per_bit_lp": lp,
        "power": power,
        "papr": c.papr()?,
        "nodes": a.nodes,
    });
    if a.mc_check {
        let check = |layer: Layer, ch: &ChannelSpec, quad: &[f64]| -> CliResult<Vec<serde_json::Value>> {
            quad.iter()
                .enumerate()
                .map(|(k, &qv)| {
                    let bit = k + 1;
                    let salt = match layer {
                        Layer::Hp => 0,
                        Layer::Lp => 1000,
                    };
                    let mc = mc_bit_mi(&c, ch, layer, bit, q.mc_samples, q.seed.wrapping_add(salt + bit as u64))?;
                    Ok(json!({
                        "bit": bit,
                        "quadrature": qv,
                        "estimate": mc.estimate,
                        "stderr": mc.stderr,
                        "within_3_stderr": (qv - mc.estimate).abs() < 3.0 * mc.stderr,
                    }))
                })
                .collect()
        };
        let hp_mc = check(Layer::Hp, &ch_h, &hp)?;
        let lp_mc = match &ch_l {
            Some(ch) => check(Layer::Lp, ch, &lp)?,
            None => Vec::new(),
        };
        doc["mc_check"] = json!({ "samples": q.mc_samples, "hp": hp_mc, "lp": lp_mc });
    }
    Ok(Outcome {
        artifacts: vec![Artifact::stdout(pretty(&doc)?)],
        parameters: params(a)?,
        seed: Some(a.seed),
        exit: None,
    })
}

fn result_doc(r: &SolveResult) -> serde_json::Value {
    json!({
        "r_h": r.r_h_achieved,
        "r_l": r.r_l_achieved,
        "power": r.power_used,
        "papr": r.papr_used,
        "kkt_residual": r.kkt_residual,
        "converged": r.converged,
        "best_start": r.best_start,
        "start_logs": r.start_logs,
    })
}

pub fn optimize(a: &OptimizeArgs) -> CliResult<Outcome> {
    let spec = ProblemSpec {
        m_h: a.mh,
        m_l: a.ml,
        snr_h_db: a.snr_h,
        snr_l_db: a.snr_l,
        r_star: a.rstar,
        power: a.power,
        papr_limit: a.papr,
        symmetry: symmetry(a.symmetry),
    };
    spec.validate()?;
    let cfg = solver_config(&a.solver);
    cfg.validate()?;
    let q = quadrature(a.solver.nodes)?;
    let r = optimizer::solve(&spec, &cfg, &q)?;
    let mut doc = result_doc(&r);
    doc["spec"] = json!(spec);
    doc["constellation_file"] = json!(a.out.to_string_lossy());
    Ok(Outcome {
        artifacts: vec![
            Artifact::file(&a.out, r.constellation.to_json() + "\n"),
            Artifact::stdout(pretty(&doc)?),
        ],
        parameters: params(a)?,
        seed: Some(a.solver.seed),
        exit: None,
    })
}

pub fn hqam(a: &HqamArgs) -> CliResult<Outcome> {
    let spec = ProblemSpec {
        m_h: 2,
        m_l: a.ml,
        snr_h_db: a.snr_h,
        snr_l_db: a.snr_l,
        r_star: a.rstar,
        power: a.power,
        papr_limit: a.papr,
        symmetry: Symmetry::None,
    };
    spec.validate()?;
    if !(2..=3).contains(&a.ml) {
        return Err(CliError::Input(format!("H-QAM needs m_l = 2 or 3, got {}", a.ml)));
    }
    let cfg = solver_config(&a.solver);
    cfg.validate()?;
    let q = quadrature(a.solver.nodes)?;
    let (p, r) = optimizer::optimize_hqam(&spec, &cfg, &q)?;
    let mut doc = result_doc(&r);
    doc["d1"] = json!(p.d1);
    doc["d2"] = json!(p.d2);
    doc["spec"] = json!(spec);
    let mut artifacts = Vec::new();
    if let Some(out) = &a.out {
        artifacts.push(Artifact::file(out, r.constellation.to_json() + "\n"));
    }
    artifacts.push(Artifact::stdout(pretty(&doc)?));
    Ok(Outcome {
        artifacts,
        parameters: params(a)?,
        seed: Some(a.solver.seed),
        exit: None,
    })
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "region".into());
    out.with_file_name(format!("{stem}_{suffix}"))
}

pub fn region(a: &RegionArgs) -> CliResult<Outcome> {
    let base = ProblemSpec {
        m_h: a.mh,
        m_l: a.ml,
        snr_h_db: a.snr_h,
        snr_l_db: a.snr_l,
        r_star: 0.0,
        power: a.power,
        papr_limit: a.papr,
        symmetry: symmetry(a.symmetry),
    };
    base.validate()?;
    let cfg = solver_config(&a.solver);
    cfg.validate()?;
    let q = quadrature(a.solver.nodes)?;
    let wants = |s: SchemeArg| a.schemes.contains(&s);
    if wants(SchemeArg::Hqam) && !(a.mh == 2 && (2..=3).contains(&a.ml)) {
        return Err(CliError::Input("the hqam scheme needs m_h = 2 and m_l in {2, 3}".into()));
    }
    let thresholds = match &a.thresholds {
        Some(t) => t.clone(),
        None => default_thresholds(&base, &q, a.points)?,
    };

    let mut frontiers: Vec<RegionFrontier> = Vec::new();
    if wants(SchemeArg::Hm) {
        frontiers.push(hm_frontier(&base, &thresholds, &cfg, &q)?);
    }
    if wants(SchemeArg::Hqam) {
        frontiers.push(hqam_frontier(&base, &thresholds, &cfg, &q)?);
    }
    if wants(SchemeArg::Td) {
        frontiers.push(td_frontier(a.snr_h, a.snr_l, a.power, a.td_points)?);
    }
    if wants(SchemeArg::Hull) {
        let hull = convex_hull(&frontiers).map_err(|_| {
            CliError::Usage("the hull scheme needs at least one other scheme with points".into())
        })?;
        frontiers.push(hull);
    }

    let find = |s: Scheme| frontiers.iter().find(|f| f.scheme == s);
    let witnesses: Vec<serde_json::Value> = match (find(Scheme::HmOptimized), find(Scheme::TdGaussian)) {
        (Some(hm), Some(td)) => hm
            .points
            .iter()
            .filter(|p| dominates((p.r_h, p.r_l), td, a.margin))
            .map(|p| {
                json!({
                    "r_star": p.r_star,
                    "r_h": p.r_h,
                    "r_l": p.r_l,
                    "td_r_l": td.interpolate(p.r_h),
                })
            })
            .collect(),
        _ => Vec::new(),
    };
    let sweeps: serde_json::Map<String, serde_json::Value> = frontiers
        .iter()
        .filter(|f| !f.sweep.is_empty())
        .map(|f| (f.scheme.as_str().to_string(), json!(f.sweep)))
        .collect();
    let summary = json!({
        "spec": base,
        "thresholds": thresholds,
        "margin": a.margin,
        "hm_points_dominating_td": witnesses,
        "sweeps": sweeps,
    });

    let mut combined = format!("{CSV_HEADER}\n");
    let mut artifacts = Vec::new();
    for f in &frontiers {
        combined.push_str(&f.csv_rows());
        artifacts.push(Artifact::file(sibling(&a.out, &format!("{}.csv", f.scheme.as_str())), f.to_csv()));
    }
    artifacts.insert(0, Artifact::file(&a.out, combined));
    artifacts.push(Artifact::file(sibling(&a.out, "summary.json"), pretty(&summary)?));

    // A sweep counts as failed when fewer than half of its thresholds solved.
    let mut exit = None;
    for f in frontiers.iter().filter(|f| !f.sweep.is_empty()) {
        let solved = f.sweep.iter().filter(|e| e.point.is_some()).count();
        if 2 * solved < f.sweep.len() {
            let infeasible = f.sweep.iter().filter(|e| e.best_r_h.is_some()).count();
            let msg = format!(
                "{} sweep solved only {solved} of {} thresholds",
                f.scheme.as_str(),
                f.sweep.len()
            );
            exit = Some(if solved + infeasible == f.sweep.len() {
                CliError::Infeasible(msg)
            } else {
                CliError::Internal(msg)
            });
        }
    }
    artifacts.push(Artifact::stdout(format!(
        "wrote {} ({} frontier(s), {} dominance witness(es))\n",
        a.out.display(),
        frontiers.len(),
        witnesses.len()
    )));
    Ok(Outcome {
        artifacts,
        parameters: params(a)?,
        seed: Some(a.solver.seed),
        exit,
    })
}
