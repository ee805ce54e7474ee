use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sisnet::dynamics::{harnack_ratio, integrate, Component, Trajectory};
use sisnet::limits::{
    compute_n_star, n_star_grid, predict_with, recover_lambda_star, verify, LambdaRecovery, PredictedLimit,
};
use sisnet::lyapunov::{lyapunov_derivative, lyapunov_value, monotonicity_report, LyapunovKind, MonotonicityReport};
use sisnet::model::{classify_with_band, EpidemicScenario, Mechanism};
use sisnet::netmat::{is_line_sum_symmetric, perron_vector, PerronPair};

use crate::config::ScenarioFile;
use crate::CliError;

/// Command-line settings that take precedence over the scenario file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub t_end: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Simulate,
    Verify,
    NStar,
}

/// What one scenario run printed and whether it counts as a success.
#[derive(Debug)]
pub struct Outcome {
    pub stdout: String,
    pub ok: bool,
}

/// A scenario file with the overrides applied.
pub struct Loaded {
    pub name: String,
    pub file: ScenarioFile,
}

impl Loaded {
    pub fn new(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let mut file = ScenarioFile::load(path)?;
        if let Some(t) = overrides.t_end {
            file.integration.t_end = t;
        }
        if let Some(tol) = overrides.tol {
            file.tolerances.verify = tol;
        }
        if let Some(seed) = overrides.seed {
            file.nstar.seed = seed;
        }
        if let Some(out) = &overrides.out {
            file.output.dir = Some(out.clone());
        }
        let name = file.name.clone().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into())
        });
        Ok(Self { name, file })
    }

    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self
            .file
            .output
            .dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(&self.name);
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
        Ok(dir)
    }

    fn write(&self, file_name: &Option<String>, default: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out_dir()?.join(file_name.as_deref().unwrap_or(default));
        fs::write(&path, contents).map_err(|e| CliError::Io(path.clone(), e))?;
        Ok(path)
    }
}

pub fn run(command: Command, loaded: &Loaded) -> Result<Outcome, CliError> {
    let scenario = loaded.file.scenario()?;
    let pair = perron_vector(&scenario.connectivity).map_err(CliError::Model)?;
    match command {
        Command::Validate => validate(loaded, &scenario, &pair),
        Command::Simulate => simulate(loaded, &scenario, &pair),
        Command::Verify => verify_cmd(loaded, &scenario, &pair),
        Command::NStar => nstar(loaded, &scenario),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize") + "\n"
}

fn regime_name(sc: &EpidemicScenario) -> &'static str {
    match (sc.mechanism, sc.d_s == 0.0, sc.d_i == 0.0) {
        (Mechanism::MassAction, false, true) => "mass action, immobile infected",
        (Mechanism::MassAction, true, false) => "mass action, immobile susceptibles",
        (Mechanism::StandardIncidence, false, true) => "standard incidence, immobile infected",
        (Mechanism::StandardIncidence, true, false) => "standard incidence, immobile susceptibles",
        (_, false, false) => "both classes disperse",
        (_, true, true) => "no dispersal",
    }
}

fn validate(loaded: &Loaded, sc: &EpidemicScenario, pair: &PerronPair) -> Result<Outcome, CliError> {
    let class = classify_with_band(sc, pair, loaded.file.tolerances.classification);
    let report = json!({
        "name": loaded.name,
        "n": sc.n(),
        "N": sc.total,
        "alpha": pair.alpha,
        "theta": pair.theta,
        "line_sum_symmetric": is_line_sum_symmetric(sc.connectivity.matrix(), loaded.file.tolerances.validation),
        "regime": regime_name(sc),
        "lyapunov": LyapunovKind::for_scenario(sc).map(LyapunovKind::name),
        "classification": class,
    });
    Ok(Outcome {
        stdout: to_json(&report),
        ok: true,
    })
}

fn lyapunov_summary(sc: &EpidemicScenario, pair: &PerronPair, traj: &Trajectory) -> Result<Option<Value>, CliError> {
    let Some(kind) = LyapunovKind::for_scenario(sc) else {
        return Ok(None);
    };
    let report: MonotonicityReport = monotonicity_report(kind, sc, pair, traj).map_err(CliError::Model)?;
    let bound = 1e-8 * sc.total * sc.total * (1.0 + sc.max_beta());
    Ok(Some(json!({
        "kind": kind.name(),
        "max_vdot": report.max_vdot,
        "max_increase": report.max_increase,
        "vdot_bound": bound,
        "monotone": report.max_vdot <= bound,
    })))
}

fn harnack(traj: &Trajectory, component: Component) -> Option<f64> {
    if traj.t_final() < 1.0 {
        return None;
    }
    harnack_ratio(traj, component, 1.0).ok()
}

fn simulate(loaded: &Loaded, sc: &EpidemicScenario, pair: &PerronPair) -> Result<Outcome, CliError> {
    let traj = integrate(sc, &loaded.file.integration).map_err(CliError::Model)?;
    let kind = LyapunovKind::for_scenario(sc);
    let n = sc.n();

    let mut csv = String::from("t");
    for prefix in ["S", "I"] {
        for k in 1..=n {
            write!(csv, ",{prefix}_{k}").unwrap();
        }
    }
    csv.push_str(",V,Vdot,conservation_error\n");
    for ((t, st), err) in traj.times.iter().zip(&traj.states).zip(&traj.conservation_error) {
        write!(csv, "{t}").unwrap();
        for v in st.s.iter().chain(&st.i) {
            write!(csv, ",{v}").unwrap();
        }
        match kind {
            Some(kind) => {
                let v = lyapunov_value(kind, sc, pair, st).map_err(CliError::Model)?;
                let vdot = lyapunov_derivative(kind, sc, pair, st).map_err(CliError::Model)?;
                write!(csv, ",{v},{vdot}").unwrap();
            }
            None => csv.push_str(",,"),
        }
        writeln!(csv, ",{err}").unwrap();
    }
    let csv_path = loaded.write(&loaded.file.output.trajectory, "trajectory.csv", &csv)?;

    let summary = json!({
        "name": loaded.name,
        "trajectory": csv_path,
        "t_final": traj.t_final(),
        "final_state": traj.final_state,
        "converged": traj.converged,
        "max_conservation_error": traj.max_conservation_error(),
        "clamp_events": traj.clamp_events,
        "min_component": traj.min_component,
        "accepted_steps": traj.accepted_steps,
        "rejected_steps": traj.rejected_steps,
        "harnack_ratio": { "S": harnack(&traj, Component::S), "I": harnack(&traj, Component::I) },
        "lyapunov": lyapunov_summary(sc, pair, &traj)?,
    });
    let text = to_json(&summary);
    loaded.write(&loaded.file.output.summary, "summary.json", &text)?;
    Ok(Outcome { stdout: text, ok: true })
}

fn verify_cmd(loaded: &Loaded, sc: &EpidemicScenario, pair: &PerronPair) -> Result<Outcome, CliError> {
    let class = classify_with_band(sc, pair, loaded.file.tolerances.classification);
    let predicted: PredictedLimit = predict_with(sc, pair, &class, &loaded.file.nstar).map_err(CliError::Model)?;
    let traj = integrate(sc, &loaded.file.integration).map_err(CliError::Model)?;
    let tol = loaded.file.tolerances.verify;
    let verdict = verify(&predicted, &traj.final_state, tol).map_err(CliError::Model)?;
    let lambda: Option<LambdaRecovery> = if sc.mechanism == Mechanism::MassAction && sc.d_s == 0.0 {
        Some(recover_lambda_star(sc, &traj).map_err(CliError::Model)?)
    } else {
        None
    };
    let report = json!({
        "name": loaded.name,
        "theorem": predicted.theorem.name(),
        "branch": verdict.branch.name(),
        "pass": verdict.pass,
        "tolerance": verdict.tolerance,
        "predicted": predicted,
        "observed": traj.final_state,
        "residuals": verdict.residuals,
        "notes": verdict.notes,
        "classification": class,
        "lyapunov": lyapunov_summary(sc, pair, &traj)?,
        "lambda_star": lambda,
        "integration": {
            "t_final": traj.t_final(),
            "converged": traj.converged,
            "max_conservation_error": traj.max_conservation_error(),
            "clamp_events": traj.clamp_events,
        },
    });
    let text = to_json(&report);
    loaded.write(&loaded.file.output.report, "report.json", &text)?;
    Ok(Outcome {
        stdout: text,
        ok: verdict.pass,
    })
}

fn nstar(loaded: &Loaded, sc: &EpidemicScenario) -> Result<Outcome, CliError> {
    let result = compute_n_star(sc, &loaded.file.nstar).map_err(CliError::Model)?;
    let grid = match sc.n() {
        2 => Some(n_star_grid(sc, 201, 4, loaded.file.nstar.feasibility_tol).map_err(CliError::Model)?),
        3 => Some(n_star_grid(sc, 51, 3, loaded.file.nstar.feasibility_tol).map_err(CliError::Model)?),
        _ => None,
    };
    let grid_gap = grid
        .as_ref()
        .map(|g| (result.value - g.value).abs() / g.value.abs().max(f64::MIN_POSITIVE));
    let report = json!({
        "name": loaded.name,
        "N": sc.total,
        "NStar": result.value,
        "NStar_upper": result.upper,
        "gap": result.gap,
        "sum_r": result.sum_r,
        "witness": result.witness,
        "N_exceeds_NStar": sc.total > result.upper,
        "grid": grid,
        "grid_relative_gap": grid_gap,
    });
    let text = to_json(&report);
    loaded.write(&None, "nstar.json", &text)?;
    Ok(Outcome { stdout: text, ok: true })
}
