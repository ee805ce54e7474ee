//! JSON-in, JSON-out entry points for the browser demo in `www/`.
//!
//! Each exported function takes a model description as JSON and returns a
//! JSON string. The `*_json` functions are plain Rust so they can be tested
//! natively; the `#[wasm_bindgen]` wrappers only convert errors.

use serde::{Deserialize, Serialize};
use serde_json::json;
use sisnet::dynamics::{integrate, IntegrationSettings};
use sisnet::limits::{compute_n_star, predict, verify, NStarSettings};
use sisnet::lyapunov::{lyapunov_value, LyapunovKind};
use sisnet::model::{classify, EpidemicScenario, Mechanism, State};
use sisnet::netmat::{perron_vector, spectral_bound, ConnectivityMatrix};
use wasm_bindgen::prelude::*;

/// Model description sent by the page.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelInput {
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(rename = "dS")]
    pub d_s: f64,
    #[serde(rename = "dI")]
    pub d_i: f64,
    pub mechanism: Mechanism,
    #[serde(rename = "S0")]
    pub s0: Vec<f64>,
    #[serde(rename = "I0")]
    pub i0: Vec<f64>,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
}

fn default_t_end() -> f64 {
    100.0
}

impl ModelInput {
    fn scenario(&self) -> Result<EpidemicScenario, String> {
        let l = ConnectivityMatrix::from_rows(&self.l).map_err(|e| e.to_string())?;
        EpidemicScenario::new(
            l,
            self.beta.clone(),
            self.gamma.clone(),
            (self.d_s, self.d_i),
            self.mechanism,
            State::new(self.s0.clone(), self.i0.clone()),
        )
        .map_err(|e| e.to_string())
    }
}

fn parse(input: &str) -> Result<ModelInput, String> {
    serde_json::from_str(input).map_err(|e| format!("bad input: {e}"))
}

fn to_string<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("outputs serialize")
}

/// Perron vector, risk sets and (when a limit theorem applies) the
/// predicted limit.
pub fn analyze_json(input: &str) -> Result<String, String> {
    let sc = parse(input)?.scenario()?;
    let pair = perron_vector(&sc.connectivity).map_err(|e| e.to_string())?;
    let class = classify(&sc, &pair);
    let prediction = predict(&sc, &pair, &class);
    Ok(to_string(&json!({
        "N": sc.total,
        "alpha": pair.alpha,
        "classification": class,
        "prediction": prediction.as_ref().ok(),
        "prediction_error": prediction.as_ref().err().map(|e| e.to_string()),
    })))
}

/// Integrates the model and returns sampled `S`, `I`, the Lyapunov value
/// when one applies, and the verdict against the predicted limit.
pub fn simulate_json(input: &str) -> Result<String, String> {
    let model = parse(input)?;
    let sc = model.scenario()?;
    let pair = perron_vector(&sc.connectivity).map_err(|e| e.to_string())?;
    let settings = IntegrationSettings {
        t_end: model.t_end,
        rel_tol: 1e-8,
        abs_tol: 1e-10,
        sample_interval: (model.t_end / 400.0).max(0.01),
        ..Default::default()
    };
    let traj = integrate(&sc, &settings).map_err(|e| e.to_string())?;
    let kind = LyapunovKind::for_scenario(&sc);
    let v: Option<Vec<f64>> = kind.map(|k| {
        traj.states
            .iter()
            .map(|st| lyapunov_value(k, &sc, &pair, st).unwrap_or(f64::NAN))
            .collect()
    });
    let class = classify(&sc, &pair);
    let verdict = predict(&sc, &pair, &class)
        .ok()
        .and_then(|p| verify(&p, &traj.final_state, 1e-3).ok().map(|v| (p, v)));
    Ok(to_string(&json!({
        "t": traj.times,
        "S": traj.states.iter().map(|s| &s.s).collect::<Vec<_>>(),
        "I": traj.states.iter().map(|s| &s.i).collect::<Vec<_>>(),
        "lyapunov": kind.map(LyapunovKind::name),
        "V": v,
        "converged": traj.converged,
        "max_conservation_error": traj.max_conservation_error(),
        "prediction": verdict.as_ref().map(|(p, _)| p),
        "verdict": verdict.as_ref().map(|(_, v)| v),
    })))
}

/// For a two-patch mass-action model with immobile susceptibles: the sign of
/// `s(dI L + diag(beta o lambda o (S0 - r)))` on a `resolution`-square grid of
/// `lambda`, plus `N*` and its maximizer.
pub fn nstar_region_json(input: &str, resolution: usize) -> Result<String, String> {
    let sc = parse(input)?.scenario()?;
    if sc.n() != 2 {
        return Err("the feasible-region map needs exactly two patches".into());
    }
    let result = compute_n_star(&sc, &NStarSettings::default()).map_err(|e| e.to_string())?;
    let k = resolution.clamp(2, 400);
    let w: Vec<f64> = (0..2).map(|i| sc.s0[i] - sc.gamma[i] / sc.beta[i]).collect();
    let base = sc.connectivity.matrix().scaled(sc.d_i);
    let mut feasible = Vec::with_capacity(k * k);
    for row in 0..k {
        for col in 0..k {
            let lambda = [col as f64 / (k - 1) as f64, row as f64 / (k - 1) as f64];
            let diag: Vec<f64> = (0..2).map(|i| sc.beta[i] * lambda[i] * w[i]).collect();
            let s = spectral_bound(&base.plus_diagonal(&diag), true).map_err(|e| e.to_string())?;
            feasible.push(s <= 1e-11);
        }
    }
    Ok(to_string(&json!({
        "resolution": k,
        "feasible": feasible,
        "weights": w,
        "NStar": result.value,
        "witness": result.witness,
        "sum_r": result.sum_r,
        "N": sc.total,
    })))
}

#[wasm_bindgen]
pub fn analyze(input: &str) -> Result<String, JsValue> {
    analyze_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(input: &str) -> Result<String, JsValue> {
    simulate_json(input).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn nstar_region(input: &str, resolution: usize) -> Result<String, JsValue> {
    nstar_region_json(input, resolution).map_err(|e| JsValue::from_str(&e))
}
