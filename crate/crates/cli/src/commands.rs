//! Runs a resolved configuration and collects artifacts in memory.

use pmulap::analysis::{
    counterexample_probe, dimension_consistency_check, holder_bound, holder_exponent_fit, interior_balls, moser_epsilon,
    sup_bound_check, CounterexampleConfig, RegularityReport,
};
use pmulap::eigen::{check_sign, check_simplicity, lambda_lower_bound_seeded, minimize_rayleigh, EigenPair};
use pmulap::measure::{
    ball_mass, check_open_set_condition, coupling_warning, fit_growth_exponent, growth_setup, lebesgue_measure,
    log_cantor_measure, natural_measure, similarity_dimension, DiscreteMeasure, IfsSpec,
};
use pmulap::pde::{function_csv, solve_poisson};
use pmulap::{build_uniform_mesh, Mesh};
use serde_json::{json, Value};

use crate::config::{Command, MeasureConfig, RunConfig};
use crate::error::CliError;

pub struct RunOutput {
    pub artifacts: Vec<(String, String)>,
    pub converged: bool,
    pub notes: Vec<String>,
}

struct Setup {
    mesh: Mesh,
    mu: DiscreteMeasure,
    ifs: Option<IfsSpec>,
}

fn build_mesh(cfg: &RunConfig) -> Result<Mesh, CliError> {
    match &cfg.mesh_file {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            Ok(Mesh::from_text(&text)?)
        }
        None => Ok(build_uniform_mesh(&cfg.domain, cfg.resolution)?),
    }
}

fn build_measure(cfg: &RunConfig, mesh: &Mesh) -> Result<(DiscreteMeasure, Option<IfsSpec>), CliError> {
    match &cfg.measure {
        MeasureConfig::Lebesgue => Ok((lebesgue_measure(mesh), None)),
        MeasureConfig::Sierpinski { depth } => {
            let ifs = IfsSpec::sierpinski();
            Ok((natural_measure(&ifs, *depth, ifs.default_seed())?, Some(ifs)))
        }
        MeasureConfig::Ifs { path, depth } => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let ifs = IfsSpec::parse(&text)?;
            Ok((natural_measure(&ifs, *depth, ifs.default_seed())?, Some(ifs)))
        }
        MeasureConfig::LogCantor { q, level, r0, center } => {
            let center = center.unwrap_or_else(|| cfg.domain.polygon().centroid());
            let r0 = r0.unwrap_or(CounterexampleConfig::default().r0);
            Ok((log_cantor_measure(*q, *level, center, r0)?, None))
        }
    }
}

fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let mesh = build_mesh(cfg)?;
    let (mu, ifs) = build_measure(cfg, &mesh)?;
    Ok(Setup { mesh, mu, ifs })
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(v).map_err(|e| CliError::Numerical(format!("serialization failed: {e}")))
}

fn base_artifacts(s: &Setup) -> Result<Vec<(String, String)>, CliError> {
    Ok(vec![
        ("mesh.txt".into(), s.mesh.to_text()),
        ("measure.csv".into(), s.mu.to_csv()),
        ("measure.json".into(), to_json(&s.mu.header_json())?),
    ])
}

fn base_notes(cfg: &RunConfig, s: &Setup) -> Vec<String> {
    let mut notes = cfg.params.diagnostics();
    notes.extend(coupling_warning(&s.mesh, &s.mu));
    notes
}

pub fn run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    match cfg.command {
        Command::Poisson => poisson(cfg),
        Command::Eigen => eigen(cfg),
        Command::MeasureReport => measure_report(cfg),
        Command::Analyze => analyze(cfg),
        Command::Counterexample => counterexample(cfg),
    }
}

fn poisson(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let s = setup(cfg)?;
    let mut notes = base_notes(cfg, &s);
    let f: Vec<f64> = s.mu.atoms().iter().map(|a| cfg.forcing.eval(a.x)).collect();
    let sol = solve_poisson(&f, &s.mu, &s.mesh, &cfg.params)?;
    notes.extend(sol.notes.iter().cloned());
    let u_max = sol.u.coeffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let report = json!({
        "diagnostics": sol.diagnostics(),
        "max_u": u_max,
        "forcing": cfg.forcing,
    });
    let mut artifacts = base_artifacts(&s)?;
    artifacts.push(("solution.csv".into(), function_csv(&s.mesh, &sol.u)));
    artifacts.push(("poisson.json".into(), to_json(&report)?));
    Ok(RunOutput { artifacts, converged: sol.converged, notes })
}

/// One seed runs a single minimization; three or more also run the simplicity check.
fn solve_eigen(cfg: &RunConfig, s: &Setup) -> Result<(EigenPair, Value, bool), CliError> {
    let seeds = cfg.seeds();
    if seeds.len() >= 3 {
        let (report, pairs) = check_simplicity(&s.mu, &s.mesh, &cfg.params, &seeds)?;
        let pair = pairs
            .into_iter()
            .next()
            .ok_or_else(|| CliError::Numerical("no seed produced a converged eigenpair".into()))?;
        let ok = pair.converged && report.excluded.is_empty();
        Ok((pair, serde_json::to_value(&report).map_err(|e| CliError::Numerical(e.to_string()))?, ok))
    } else {
        let pair = minimize_rayleigh(&s.mu, &s.mesh, &cfg.params, seeds[0])?;
        let ok = pair.converged;
        Ok((pair, Value::Null, ok))
    }
}

fn eigen_summary(pair: &EigenPair) -> Value {
    json!({
        "lambda": pair.lambda,
        "iterations": pair.iterations,
        "polish_iterations": pair.polish_iterations,
        "residual": pair.residual_norm,
        "converged": pair.converged,
        "seed": pair.seed,
        "rayleigh_history": pair.rayleigh_history,
        "notes": pair.notes,
    })
}

fn eigen(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let s = setup(cfg)?;
    let mut notes = base_notes(cfg, &s);
    let (pair, simplicity, converged) = solve_eigen(cfg, &s)?;
    notes.extend(pair.notes.iter().cloned());
    let sign = check_sign(&s.mesh, &pair.u)?;
    let bound = lambda_lower_bound_seeded(&s.mu, &s.mesh, &cfg.params, cfg.seeds()[0])?;
    let spread = simplicity.get("lambda_spread").cloned().unwrap_or(json!(0.0));
    let lambdas = simplicity.get("lambdas").cloned().unwrap_or(json!([pair.lambda]));
    let mut report = eigen_summary(&pair);
    let obj = report.as_object_mut().expect("object");
    obj.insert("sign_report".into(), serde_json::to_value(&sign).map_err(|e| CliError::Numerical(e.to_string()))?);
    obj.insert("seeds".into(), json!(cfg.seeds()));
    obj.insert("lambdas".into(), lambdas);
    obj.insert("lambda_spread".into(), spread);
    obj.insert("lambda_lower_bound".into(), serde_json::to_value(&bound).map_err(|e| CliError::Numerical(e.to_string()))?);
    obj.insert("simplicity".into(), simplicity);
    let mut artifacts = base_artifacts(&s)?;
    artifacts.push(("eigenfunction.csv".into(), function_csv(&s.mesh, &pair.u)));
    artifacts.push(("eigen.json".into(), to_json(&report)?));
    Ok(RunOutput { artifacts, converged, notes })
}

fn measure_report(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let s = setup(cfg)?;
    let notes = base_notes(cfg, &s);
    let seed = cfg.seeds()[0];
    let (centers, radii) = growth_setup(&s.mu, cfg.analysis.growth_centers, seed)?;
    let growth = fit_growth_exponent(&s.mu, &centers, &radii)?;
    let dimension = dimension_consistency_check(&s.mu, &cfg.params, cfg.analysis.growth_centers, seed)?;
    let (sim_dim, osc) = match &s.ifs {
        Some(ifs) => {
            let candidate = match &cfg.measure {
                MeasureConfig::Sierpinski { .. } => pmulap::Polygon::unit_triangle(),
                _ => cfg.domain.polygon(),
            };
            (Some(similarity_dimension(ifs)), Some(check_open_set_condition(ifs, &candidate)?))
        }
        None => (None, None),
    };
    let report = json!({
        "growth": growth,
        "similarity_dimension": sim_dim,
        "open_set_condition": osc,
        "dimension_check": dimension,
        "total_mass": s.mu.total_mass(),
        "atoms": s.mu.len(),
    });
    let mut csv = String::from("r,mean_mass,min_mass,max_mass\n");
    for &r in &radii {
        let m: Vec<f64> = centers.iter().map(|&c| ball_mass(&s.mu, c, r)).collect();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        csv.push_str(&format!("{r:?},{mean:?},{lo:?},{hi:?}\n"));
    }
    let mut artifacts = base_artifacts(&s)?;
    artifacts.push(("growth.json".into(), to_json(&report)?));
    artifacts.push(("growth.csv".into(), csv));
    Ok(RunOutput { artifacts, converged: true, notes })
}

fn analyze(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let s = setup(cfg)?;
    let mut notes = base_notes(cfg, &s);
    let (pair, simplicity, converged) = solve_eigen(cfg, &s)?;
    notes.extend(pair.notes.iter().cloned());
    let domain = cfg.domain.polygon();
    let r = cfg.analysis.sup_radius.unwrap_or(domain.diameter() / 12.0);
    let balls = interior_balls(&domain, cfg.analysis.balls, r);
    let sup_check = sup_bound_check(&s.mesh, &domain, &pair.u, &balls, &cfg.analysis.sigmas, &cfg.params)?;
    notes.extend(sup_check.notes.iter().cloned());
    let holder_fit = holder_exponent_fit(&s.mesh, &pair.u, cfg.analysis.pair_budget, cfg.seeds()[0])?;
    let regularity = RegularityReport { sup_check, holder_fit, bound_alpha: holder_bound(&cfg.params).ok() };
    let dimension = match dimension_consistency_check(&s.mu, &cfg.params, cfg.analysis.growth_centers, cfg.seeds()[0]) {
        Ok(d) => serde_json::to_value(&d).map_err(|e| CliError::Numerical(e.to_string()))?,
        Err(e) => {
            notes.push(format!("dimension check skipped: {e}"));
            Value::Null
        }
    };
    let report = json!({
        "eigen": eigen_summary(&pair),
        "simplicity": simplicity,
        "regularity": regularity,
        "moser_epsilon": moser_epsilon(&cfg.params).ok(),
        "dimension_check": dimension,
        "sup_radius": r,
    });
    let mut artifacts = base_artifacts(&s)?;
    artifacts.push(("eigenfunction.csv".into(), function_csv(&s.mesh, &pair.u)));
    artifacts.push(("holder.csv".into(), regularity.holder_fit.to_csv()));
    artifacts.push(("analysis.json".into(), to_json(&report)?));
    Ok(RunOutput { artifacts, converged, notes })
}

fn counterexample(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    let cx = &cfg.counterexample;
    let config = CounterexampleConfig {
        r0: cx.r0,
        pair_budget: cx.pair_budget,
        seed: cfg.seeds()[0],
        mass_bound_samples: cx.mass_bound_samples,
        ..CounterexampleConfig::default()
    };
    let report = counterexample_probe(&cfg.params, cx.level, &cx.resolutions, &config)?;
    let finest = *cx.resolutions.iter().max().expect("validated non-empty");
    let mesh = build_uniform_mesh(&pmulap::Domain::UnitSquare, finest)?;
    let mu = log_cantor_measure(cfg.params.q, cx.level, config.center, config.r0)?;
    let s = Setup { mesh, mu, ifs: None };
    let mut notes = base_notes(cfg, &s);
    notes.extend(report.notes.iter().cloned());
    let mut csv = String::from("alpha,k,r_k,ratio,closed_form\n");
    for g in &report.growth {
        for (k, (ratio, closed)) in g.ratios.iter().zip(&g.closed_form).enumerate() {
            csv.push_str(&format!("{:?},{k},{:?},{ratio:?},{closed:?}\n", g.alpha, report.diameters[k]));
        }
    }
    let mut artifacts = base_artifacts(&s)?;
    artifacts.push(("counterexample.json".into(), to_json(&report)?));
    artifacts.push(("growth_ratios.csv".into(), csv));
    Ok(RunOutput { artifacts, converged: true, notes })
}
