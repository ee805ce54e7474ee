use serde_json::Value;
use sisnet_web::{analyze_json, nstar_region_json, simulate_json};

const STANDARD: &str = r#"{
  "L": [[-1, 1], [1, -1]],
  "beta": [2, 1], "gamma": [1, 2],
  "dS": 1, "dI": 0,
  "mechanism": "standard_incidence",
  "S0": [4, 4], "I0": [1, 1],
  "t_end": 200
}"#;

const BAND: &str = r#"{
  "L": [[-1, 1], [1, -1]],
  "beta": [1, 4], "gamma": [2, 12],
  "dS": 0, "dI": 1,
  "mechanism": "mass_action",
  "S0": [5, 0], "I0": [0.05, 0.05]
}"#;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn analyze_reports_risk_and_prediction() {
    let v = parse(analyze_json(STANDARD).unwrap());
    assert_eq!(v["prediction"]["theorem"], "T41");
    assert_eq!(v["classification"]["h_plus"], serde_json::json!([0]));
}

#[test]
fn simulate_reaches_prediction() {
    let v = parse(simulate_json(STANDARD).unwrap());
    assert_eq!(v["verdict"]["pass"], Value::Bool(true));
    assert_eq!(v["lyapunov"], "StandardDI0");
    assert_eq!(v["t"].as_array().unwrap().len(), v["V"].as_array().unwrap().len());
}

#[test]
fn nstar_region_marks_origin_feasible() {
    let v = parse(nstar_region_json(BAND, 41).unwrap());
    let feasible = v["feasible"].as_array().unwrap();
    assert_eq!(feasible.len(), 41 * 41);
    assert_eq!(feasible[0], Value::Bool(true));
    assert!(v["NStar"].as_f64().unwrap() > 5.0);
}

#[test]
fn bad_input_is_an_error() {
    assert!(simulate_json("{}").is_err());
    assert!(nstar_region_json(STANDARD, 10).is_err());
    let unknown = STANDARD.replace("\"t_end\"", "\"tend\"");
    assert!(analyze_json(&unknown).is_err());
}
