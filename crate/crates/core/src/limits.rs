//! Predicted limit states for the four degenerate-dispersal regimes, the
//! threshold `N*`, recovery of `lambda*` from a trajectory, and verdicts
//! comparing predictions with simulated final states.

mod nstar;

use std::collections::BTreeMap;

use serde::Serialize;

pub use nstar::{compute_n_star, n_star_grid, GridCertificate, NStarResult, NStarSettings};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::model::{local_risk, rhs, sup_diff, sup_norm, EpidemicScenario, Mechanism, RiskClassification, State};
use crate::netmat::{spectral_bound, PerronPair, SquareMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Theorem {
    T31i,
    T31ii,
    T32i,
    T32ii,
    T32undetermined,
    T41,
    T42i,
    T42ii,
}

impl Theorem {
    pub fn name(self) -> &'static str {
        match self {
            Theorem::T31i => "T31i",
            Theorem::T31ii => "T31ii",
            Theorem::T32i => "T32i",
            Theorem::T32ii => "T32ii",
            Theorem::T32undetermined => "T32undetermined",
            Theorem::T41 => "T41",
            Theorem::T42i => "T42i",
            Theorem::T42ii => "T42ii",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum LimitVector {
    Pinned(Vec<f64>),
    Unpinned,
    Zero,
}

impl LimitVector {
    pub fn pinned(&self, n: usize) -> Option<Vec<f64>> {
        match self {
            LimitVector::Pinned(v) => Some(v.clone()),
            LimitVector::Zero => Some(vec![0.0; n]),
            LimitVector::Unpinned => None,
        }
    }
}

/// Claims about an unpinned limit that `verify` can still check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SideCondition {
    /// `sum I -> total`, the mass being carried by `patches`.
    InfectedMass { total: f64, patches: Vec<usize> },
    /// `S = lambda o S0 + (1 - lambda) o r` with `0 <= lambda <= 1`,
    /// `sum S = N` and `s(base + diag(beta o lambda o (S0 - r))) <= 0`.
    Representable {
        s0: Vec<f64>,
        r: Vec<f64>,
        beta: Vec<f64>,
        base: SquareMatrix,
    },
    /// `liminf S_j > 0` on `patches`.
    PositiveOn { patches: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedLimit {
    pub theorem: Theorem,
    pub s_star: LimitVector,
    pub i_star: LimitVector,
    pub scalars: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub side_conditions: Vec<SideCondition>,
    /// The two possible limits when the theorem leaves the branch open.
    pub candidates: Vec<PredictedLimit>,
    pub n: usize,
    pub total: f64,
}

impl PredictedLimit {
    fn new(theorem: Theorem, scenario: &EpidemicScenario, s_star: LimitVector, i_star: LimitVector) -> Self {
        Self {
            theorem,
            s_star,
            i_star,
            scalars: BTreeMap::new(),
            notes: Vec::new(),
            side_conditions: Vec::new(),
            candidates: Vec::new(),
            n: scenario.n(),
            total: scenario.total,
        }
    }

    fn scalar(mut self, name: &str, value: f64) -> Self {
        self.scalars.insert(name.to_string(), value);
        self
    }

    /// The limit point, when both components are pinned.
    pub fn state(&self) -> Option<State> {
        Some(State::new(self.s_star.pinned(self.n)?, self.i_star.pinned(self.n)?))
    }
}

fn regime(scenario: &EpidemicScenario, mechanism: Mechanism, ds_zero: bool) -> Result<()> {
    let (frozen, moving, frozen_name) = if ds_zero {
        (scenario.d_s, scenario.d_i, "dS")
    } else {
        (scenario.d_i, scenario.d_s, "dI")
    };
    if scenario.mechanism != mechanism || frozen != 0.0 || moving <= 0.0 {
        return Err(Error::RegimeMismatch(format!(
            "this prediction needs {mechanism:?} with {frozen_name} = 0 and the other rate positive"
        )));
    }
    Ok(())
}

/// Mass action with immobile infected.
pub fn predict_mass_action_di0(
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    class: &RiskClassification,
) -> Result<PredictedLimit> {
    regime(scenario, Mechanism::MassAction, false)?;
    let n = scenario.n();
    let total = scenario.total;
    let at_risk = class.th_plus.iter().any(|i| class.omega_plus.contains(i));
    if !at_risk {
        let s: Vec<f64> = pair.alpha.iter().map(|a| total * a).collect();
        let mut p = PredictedLimit::new(Theorem::T31i, scenario, LimitVector::Pinned(s), LimitVector::Zero);
        let omega = n as f64;
        p.notes.push(format!(
            "limit follows S -> N alpha; the invariant-set form (N/|Omega|) alpha would scale it by 1/{omega}"
        ));
        return Ok(p);
    }

    let rm = class.r_tilde_m;
    let s: Vec<f64> = pair.alpha.iter().map(|a| total * rm * a).collect();
    let infected = total * (1.0 - rm);
    let argmin = class.highest_risk();
    let i_star = if argmin.len() == 1 {
        let mut v = vec![0.0; n];
        v[argmin[0]] = infected;
        LimitVector::Pinned(v)
    } else {
        LimitVector::Unpinned
    };
    let mut p = PredictedLimit::new(Theorem::T31ii, scenario, LimitVector::Pinned(s), i_star)
        .scalar("rTildeM", rm)
        .scalar("Istar_total", infected);
    let printed = total - n as f64 * rm;
    p.notes.push(format!(
        "total infected uses N(1 - r_tilde_m) = {infected}; the theorem's printed N - |Omega| r_tilde_m = {printed} is inconsistent with conservation"
    ));
    if argmin.len() > 1 {
        p.notes.push(format!(
            "r_tilde_m is attained on patches {argmin:?}; only the total infected mass is determined"
        ));
        p.side_conditions.push(SideCondition::InfectedMass {
            total: infected,
            patches: argmin,
        });
    }
    Ok(p)
}

/// Mass action with immobile susceptibles, with default optimizer settings.
pub fn predict_mass_action_ds0(
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    class: &RiskClassification,
) -> Result<PredictedLimit> {
    predict_mass_action_ds0_with(scenario, pair, class, &NStarSettings::default())
}

pub fn predict_mass_action_ds0_with(
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    class: &RiskClassification,
    settings: &NStarSettings,
) -> Result<PredictedLimit> {
    regime(scenario, Mechanism::MassAction, true)?;
    let total = scenario.total;
    let sum_r: f64 = class.r.iter().sum();

    let mut extinct = PredictedLimit::new(Theorem::T32i, scenario, LimitVector::Unpinned, LimitVector::Zero);
    extinct.side_conditions.push(SideCondition::Representable {
        s0: scenario.s0.clone(),
        r: class.r.clone(),
        beta: scenario.beta.clone(),
        base: scenario.connectivity.matrix().scaled(scenario.d_i),
    });
    extinct = extinct.scalar("sum_r", sum_r);
    if total <= sum_r {
        return Ok(extinct);
    }

    let nstar = compute_n_star(scenario, settings)?;
    let i: Vec<f64> = pair.alpha.iter().map(|a| (total - sum_r) * a).collect();
    let endemic = PredictedLimit::new(
        Theorem::T32ii,
        scenario,
        LimitVector::Pinned(class.r.clone()),
        LimitVector::Pinned(i),
    )
    .scalar("sum_r", sum_r)
    .scalar("NStar", nstar.value)
    .scalar("NStar_upper", nstar.upper);
    if total > nstar.upper {
        return Ok(endemic);
    }
    let extinct = extinct.scalar("NStar", nstar.value).scalar("NStar_upper", nstar.upper);
    let mut p = PredictedLimit::new(Theorem::T32undetermined, scenario, LimitVector::Unpinned, LimitVector::Unpinned)
        .scalar("sum_r", sum_r)
        .scalar("NStar", nstar.value)
        .scalar("NStar_upper", nstar.upper);
    p.notes.push(format!(
        "sum r = {sum_r} < N = {total} <= N* = {}: either branch may occur",
        nstar.upper
    ));
    p.candidates = vec![extinct, endemic];
    Ok(p)
}

/// Standard incidence with immobile infected.
pub fn predict_standard_di0(
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    class: &RiskClassification,
) -> Result<PredictedLimit> {
    regime(scenario, Mechanism::StandardIncidence, false)?;
    let h2: Vec<usize> = class
        .h_plus
        .iter()
        .copied()
        .filter(|i| class.omega_plus.contains(i))
        .collect();
    let excess = |i: usize| (scenario.beta[i] - scenario.gamma[i]) / scenario.gamma[i];
    let k = scenario.total / (1.0 + h2.iter().map(|&i| excess(i) * pair.alpha[i]).sum::<f64>());
    let s: Vec<f64> = pair.alpha.iter().map(|a| k * a).collect();
    let i_star = if h2.is_empty() {
        LimitVector::Zero
    } else {
        let mut v = vec![0.0; scenario.n()];
        for &i in &h2 {
            v[i] = excess(i) * k * pair.alpha[i];
        }
        LimitVector::Pinned(v)
    };
    Ok(PredictedLimit::new(Theorem::T41, scenario, LimitVector::Pinned(s), i_star).scalar("k", k))
}

/// Standard incidence with immobile susceptibles.
pub fn predict_standard_ds0(
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    class: &RiskClassification,
) -> Result<PredictedLimit> {
    regime(scenario, Mechanism::StandardIncidence, true)?;
    if !class.h_minus.is_empty() || !class.h_zero.is_empty() {
        let mut patches: Vec<usize> = class.h_minus.iter().chain(&class.h_zero).copied().collect();
        patches.sort_unstable();
        let mut p = PredictedLimit::new(Theorem::T42i, scenario, LimitVector::Unpinned, LimitVector::Zero);
        p.side_conditions.push(SideCondition::PositiveOn { patches });
        return Ok(p);
    }
    let r = &class.r;
    let weight: f64 = pair.alpha.iter().zip(r).map(|(a, r)| a * r / (1.0 - r)).sum();
    let istar = scenario.total / (1.0 + weight);
    let s: Vec<f64> = pair.alpha.iter().zip(r).map(|(a, r)| istar * r * a / (1.0 - r)).collect();
    let i: Vec<f64> = pair.alpha.iter().map(|a| istar * a).collect();
    let printed = scenario.total / (1.0 + r.iter().map(|r| 1.0 / (1.0 - r)).sum::<f64>());
    let mut p = PredictedLimit::new(Theorem::T42ii, scenario, LimitVector::Pinned(s), LimitVector::Pinned(i))
        .scalar("Istar_total", istar);
    p.notes.push(format!(
        "I* uses N / (1 + sum alpha r/(1 - r)) = {istar}; the theorem's printed N / (1 + ||1/(1 - r)||_1) = {printed} is inconsistent with conservation"
    ));
    Ok(p)
}

/// Routes to the prediction of the scenario's regime.
pub fn predict(scenario: &EpidemicScenario, pair: &PerronPair, class: &RiskClassification) -> Result<PredictedLimit> {
    predict_with(scenario, pair, class, &NStarSettings::default())
}

pub fn predict_with(
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    class: &RiskClassification,
    settings: &NStarSettings,
) -> Result<PredictedLimit> {
    match (scenario.mechanism, scenario.d_s == 0.0, scenario.d_i == 0.0) {
        (Mechanism::MassAction, false, true) => predict_mass_action_di0(scenario, pair, class),
        (Mechanism::MassAction, true, false) => predict_mass_action_ds0_with(scenario, pair, class, settings),
        (Mechanism::StandardIncidence, false, true) => predict_standard_di0(scenario, pair, class),
        (Mechanism::StandardIncidence, true, false) => predict_standard_ds0(scenario, pair, class),
        _ => Err(Error::RegimeMismatch(format!(
            "no limit theorem for dS = {}, dI = {}; supported regimes are dS > 0 with dI = 0 and dS = 0 with dI > 0, under mass action or standard incidence",
            scenario.d_s, scenario.d_i
        ))),
    }
}

/// `||rhs(state)||_inf`.
pub fn equilibrium_residual(scenario: &EpidemicScenario, state: &State) -> Result<f64> {
    let (ds, di) = rhs(scenario, state)?;
    Ok(sup_norm(&ds).max(sup_norm(&di)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub pass: bool,
    pub residuals: BTreeMap<String, f64>,
    pub tolerance: f64,
    /// The branch the observation was checked against.
    pub branch: Theorem,
    pub notes: Vec<String>,
}

/// Compares `observed` with `prediction`. Every residual is a sup-norm gap
/// (or a violation amount) and the verdict passes iff all are `<= tol`.
pub fn verify(prediction: &PredictedLimit, observed: &State, tol: f64) -> Result<Verdict> {
    if observed.n() != prediction.n {
        return Err(Error::ScenarioMismatch(format!(
            "prediction has {} patches, observation {}",
            prediction.n,
            observed.n()
        )));
    }
    if prediction.theorem == Theorem::T32undetermined {
        let mut verdicts = prediction
            .candidates
            .iter()
            .map(|c| verify(c, observed, tol))
            .collect::<Result<Vec<_>>>()?;
        let worst = |v: &Verdict| v.residuals.values().copied().fold(0.0, f64::max);
        let pick = verdicts
            .iter()
            .position(|v| v.pass)
            .unwrap_or_else(|| {
                let mut best = 0;
                for (k, v) in verdicts.iter().enumerate() {
                    if worst(v) < worst(&verdicts[best]) {
                        best = k;
                    }
                }
                best
            });
        let mut chosen = verdicts.swap_remove(pick);
        let mut notes = prediction.notes.clone();
        notes.push(format!(
            "dynamics realized branch {}{}",
            chosen.branch.name(),
            if chosen.pass { "" } else { " (closest, not within tolerance)" }
        ));
        notes.append(&mut chosen.notes);
        chosen.notes = notes;
        return Ok(chosen);
    }

    let n = prediction.n;
    let mut residuals = BTreeMap::new();
    let mut check = |name: &str, value: f64| {
        residuals.insert(name.to_string(), value);
    };
    if let Some(s) = prediction.s_star.pinned(n) {
        check("S", sup_diff(&s, &observed.s));
    }
    if let Some(i) = prediction.i_star.pinned(n) {
        check("I", sup_diff(&i, &observed.i));
    }
    for side in &prediction.side_conditions {
        match side {
            SideCondition::InfectedMass { total, .. } => {
                check("infected_total", (observed.infected_total() - total).abs());
            }
            SideCondition::Representable { s0, r, beta, base } => {
                let sum_s: f64 = observed.s.iter().sum();
                check("mass", (sum_s - prediction.total).abs());
                let mut bound_violation = 0.0f64;
                for k in 0..n {
                    let w = s0[k] - r[k];
                    if w != 0.0 {
                        let lambda = (observed.s[k] - r[k]) / w;
                        bound_violation = bound_violation.max(-lambda).max(lambda - 1.0);
                    }
                }
                check("lambda_bounds", bound_violation);
                // beta o lambda o (S0 - r) = beta o (S - r)
                let diag: Vec<f64> = (0..n).map(|k| beta[k] * (observed.s[k] - r[k])).collect();
                let sb = spectral_bound(&base.plus_diagonal(&diag), true)?;
                check("s_bound", sb.max(0.0));
            }
            SideCondition::PositiveOn { patches } => {
                let min = patches.iter().map(|&k| observed.s[k]).fold(f64::INFINITY, f64::min);
                // passes exactly when min >= tol
                check("S_positive", (2.0 * tol - min).max(0.0));
            }
        }
    }
    let pass = residuals.values().all(|v| *v <= tol);
    Ok(Verdict {
        pass,
        residuals,
        tolerance: tol,
        branch: prediction.theorem,
        notes: prediction.notes.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaRecovery {
    pub lambda: Vec<f64>,
    /// `J_i(t_end) = integral of I_i`.
    pub j: Vec<f64>,
    /// `s(dI L + diag(beta o lambda o (S0 - r)))`.
    pub s_residual: f64,
    /// Largest deviation from `S_i(t) - r_i = (S0_i - r_i) exp(-beta_i J_i(t))`.
    pub sic_residual: f64,
}

/// Recovers `lambda* = exp(-beta J(t_end))` from a mass-action run with
/// immobile susceptibles. `J` is integrated over the samples with the
/// end-corrected trapezoid rule, using `I'` from the vector field.
pub fn recover_lambda_star(scenario: &EpidemicScenario, trajectory: &Trajectory) -> Result<LambdaRecovery> {
    regime(scenario, Mechanism::MassAction, true)?;
    let n = scenario.n();
    let r = local_risk(scenario);
    let first = trajectory
        .states
        .first()
        .ok_or_else(|| Error::ScenarioMismatch("empty trajectory".into()))?;
    if first.n() != n {
        return Err(Error::ScenarioMismatch(format!("trajectory has {} patches, scenario {n}", first.n())));
    }
    let s0 = first.s.clone();

    let mut j = vec![0.0; n];
    let mut sic = 0.0f64;
    let mut previous: Option<(f64, &State, Vec<f64>)> = None;
    for (t, state) in trajectory.times.iter().copied().zip(&trajectory.states) {
        let (_, di) = rhs(scenario, state)?;
        if let Some((tp, sp, dip)) = &previous {
            let h = t - tp;
            for k in 0..n {
                j[k] += 0.5 * h * (sp.i[k] + state.i[k]) + h * h / 12.0 * (dip[k] - di[k]);
            }
        }
        for k in 0..n {
            let predicted = r[k] + (s0[k] - r[k]) * (-scenario.beta[k] * j[k]).exp();
            sic = sic.max((state.s[k] - predicted).abs());
        }
        previous = Some((t, state, di));
    }

    let lambda: Vec<f64> = j.iter().zip(&scenario.beta).map(|(j, b)| (-b * j).exp()).collect();
    let diag: Vec<f64> = (0..n).map(|k| scenario.beta[k] * lambda[k] * (s0[k] - r[k])).collect();
    let base = scenario.connectivity.matrix().scaled(scenario.d_i);
    let s_residual = spectral_bound(&base.plus_diagonal(&diag), true)?;
    Ok(LambdaRecovery {
        lambda,
        j,
        s_residual,
        sic_residual: sic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegrationSettings};
    use crate::model::classify;
    use crate::netmat::{perron_vector, ConnectivityMatrix};

    fn sym2() -> ConnectivityMatrix {
        ConnectivityMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    fn two_patch(
        mechanism: Mechanism,
        dispersal: (f64, f64),
        beta: [f64; 2],
        gamma: [f64; 2],
        s0: [f64; 2],
        i0: [f64; 2],
    ) -> EpidemicScenario {
        EpidemicScenario::new(
            sym2(),
            beta.to_vec(),
            gamma.to_vec(),
            dispersal,
            mechanism,
            State::new(s0.to_vec(), i0.to_vec()),
        )
        .unwrap()
    }

    fn predicted(sc: &EpidemicScenario) -> PredictedLimit {
        let pair = perron_vector(&sc.connectivity).unwrap();
        predict(sc, &pair, &classify(sc, &pair)).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        sup_diff(a, b) <= tol
    }

    #[test]
    fn cycle_is_disease_free() {
        let l = ConnectivityMatrix::from_rows(&[
            vec![-1.0, 0.0, 1.0],
            vec![1.0, -1.0, 0.0],
            vec![0.0, 1.0, -1.0],
        ])
        .unwrap();
        let sc = EpidemicScenario::new(
            l,
            vec![1.0; 3],
            vec![2.0; 3],
            (1.0, 0.0),
            Mechanism::MassAction,
            State::new(vec![0.5, 1.0, 0.5], vec![0.5, 0.25, 0.25]),
        )
        .unwrap();
        let p = predicted(&sc);
        assert_eq!(p.theorem, Theorem::T31i);
        assert!(close(&p.s_star.pinned(3).unwrap(), &[1.0, 1.0, 1.0], 1e-12));
        assert_eq!(p.i_star, LimitVector::Zero);
    }

    #[test]
    fn mass_action_unique_argmin() {
        let sc = two_patch(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [1.0, 2.0], [3.0, 3.0], [1.0, 1.0]);
        let p = predicted(&sc);
        assert_eq!(p.theorem, Theorem::T31ii);
        assert!((p.scalars["rTildeM"] - 0.25).abs() < 1e-14);
        assert!(close(&p.s_star.pinned(2).unwrap(), &[1.0, 1.0], 1e-12));
        assert!(close(&p.i_star.pinned(2).unwrap(), &[6.0, 0.0], 1e-12));
        assert!(p.notes.iter().any(|n| n.contains("N(1 - r_tilde_m)")));
    }

    #[test]
    fn mass_action_tied_argmin_pins_only_the_total() {
        let sc = two_patch(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [1.0, 1.0], [3.0, 3.0], [1.0, 1.0]);
        let p = predicted(&sc);
        assert_eq!(p.i_star, LimitVector::Unpinned);
        let obs = State::new(vec![1.0, 1.0], vec![2.5, 3.5]);
        let v = verify(&p, &obs, 1e-9).unwrap();
        assert!(v.pass, "{v:?}");
        assert!(v.residuals.contains_key("infected_total"));
    }

    #[test]
    fn infection_only_on_low_risk_patch() {
        // patch 0 high risk, patch 1 low risk, infection starts on patch 1 only
        let sc = two_patch(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [1.0, 20.0], [3.0, 3.0], [0.0, 2.0]);
        let p = predicted(&sc);
        assert_eq!(p.theorem, Theorem::T31i);
        assert_eq!(p.i_star, LimitVector::Zero);
    }

    #[test]
    fn immobile_susceptibles_branches() {
        let low = two_patch(Mechanism::MassAction, (0.0, 1.0), [1.0, 1.0], [2.0, 3.0], [2.5, 0.5], [0.5, 0.5]);
        let p = predicted(&low);
        assert_eq!(p.theorem, Theorem::T32i);
        assert_eq!(p.i_star, LimitVector::Zero);

        let high = two_patch(Mechanism::MassAction, (0.0, 1.0), [1.0, 1.0], [2.0, 3.0], [20.0, 18.0], [1.0, 1.0]);
        let p = predicted(&high);
        assert_eq!(p.theorem, Theorem::T32ii);
        assert!(close(&p.s_star.pinned(2).unwrap(), &[2.0, 3.0], 0.0));
        assert!(close(&p.i_star.pinned(2).unwrap(), &[17.5, 17.5], 1e-12));
        assert!(p.scalars["NStar"] < 40.0);

        let at_risk_level = two_patch(Mechanism::MassAction, (0.0, 1.0), [1.0, 1.0], [2.0, 3.0], [2.0, 3.0], [1.0, 0.5]);
        let p = predicted(&at_risk_level);
        assert_eq!(p.theorem, Theorem::T32ii);
        assert_eq!(p.scalars["NStar"], 5.0);
    }

    #[test]
    fn standard_di0_formula() {
        let sc = two_patch(Mechanism::StandardIncidence, (1.0, 0.0), [2.0, 1.0], [1.0, 2.0], [4.0, 4.0], [1.0, 1.0]);
        let p = predicted(&sc);
        assert_eq!(p.theorem, Theorem::T41);
        assert!((p.scalars["k"] - 10.0 / 1.5).abs() < 1e-12);
        let third = 10.0 / 3.0;
        assert!(close(&p.s_star.pinned(2).unwrap(), &[third, third], 1e-12));
        assert!(close(&p.i_star.pinned(2).unwrap(), &[third, 0.0], 1e-12));

        // the only high-risk patch starts uninfected
        let sc = two_patch(Mechanism::StandardIncidence, (1.0, 0.0), [2.0, 1.0], [1.0, 2.0], [4.0, 4.0], [0.0, 2.0]);
        let p = predicted(&sc);
        assert_eq!(p.scalars["k"], 10.0);
        assert_eq!(p.i_star, LimitVector::Zero);
    }

    #[test]
    fn standard_ds0_endemic_limit_is_an_equilibrium() {
        let sc = two_patch(Mechanism::StandardIncidence, (0.0, 1.0), [2.0, 3.0], [1.0, 1.0], [2.0, 2.0], [1.0, 1.0]);
        let p = predicted(&sc);
        assert_eq!(p.theorem, Theorem::T42ii);
        let st = p.state().unwrap();
        assert!((st.total() - 6.0).abs() < 1e-12);
        assert!(close(&st.s, &[12.0 / 7.0, 6.0 / 7.0], 1e-12));
        assert!(close(&st.i, &[12.0 / 7.0, 12.0 / 7.0], 1e-12));
        assert!(equilibrium_residual(&sc, &st).unwrap() <= 1e-10 * 6.0 * 3.0);
        assert!(p.notes.iter().any(|n| n.contains("||1/(1 - r)||_1")));

        let sc = two_patch(Mechanism::StandardIncidence, (0.0, 1.0), [2.0, 1.0], [1.0, 1.0], [2.0, 2.0], [1.0, 1.0]);
        let p = predicted(&sc);
        assert_eq!(p.theorem, Theorem::T42i);
        assert_eq!(p.i_star, LimitVector::Zero);
    }

    #[test]
    fn pinned_predictions_conserve_mass() {
        let cases = [
            two_patch(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [1.0, 2.0], [3.0, 3.0], [1.0, 1.0]),
            two_patch(Mechanism::MassAction, (0.0, 1.0), [1.0, 1.0], [2.0, 3.0], [20.0, 18.0], [1.0, 1.0]),
            two_patch(Mechanism::StandardIncidence, (1.0, 0.0), [2.0, 1.0], [1.0, 2.0], [4.0, 4.0], [1.0, 1.0]),
            two_patch(Mechanism::StandardIncidence, (0.0, 1.0), [2.0, 3.0], [1.0, 1.0], [2.0, 2.0], [1.0, 1.0]),
        ];
        for sc in cases {
            let st = predicted(&sc).state().unwrap();
            assert!((st.total() - sc.total).abs() <= 1e-10 * sc.total);
            assert!(equilibrium_residual(&sc, &st).unwrap() <= 1e-10 * sc.total * sc.rate_scale());
        }
    }

    #[test]
    fn equilibrium_residual_examples() {
        let sc = two_patch(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [2.0, 2.0], [1.0, 1.0], [1.0, 1.0]);
        let dfe = State::new(vec![2.0, 2.0], vec![0.0, 0.0]);
        assert!(equilibrium_residual(&sc, &dfe).unwrap() <= 1e-12);
        let generic = State::new(vec![1.0, 3.0], vec![0.5, 0.5]);
        assert!(equilibrium_residual(&sc, &generic).unwrap() > 0.0);
    }

    #[test]
    fn verify_flags_perturbations() {
        let sc = two_patch(Mechanism::StandardIncidence, (1.0, 0.0), [2.0, 1.0], [1.0, 2.0], [4.0, 4.0], [1.0, 1.0]);
        let p = predicted(&sc);
        let exact = p.state().unwrap();
        let v = verify(&p, &exact, 1e-6).unwrap();
        assert!(v.pass);
        assert!(v.residuals.values().all(|r| *r == 0.0));

        let mut off = exact.clone();
        off.i[1] += 1e-5;
        let v = verify(&p, &off, 1e-6).unwrap();
        assert!(!v.pass);
        assert!((v.residuals["I"] - 1e-5).abs() < 1e-12);

        let wrong = State::new(vec![1.0; 3], vec![0.0; 3]);
        assert!(matches!(verify(&p, &wrong, 1e-6), Err(Error::ScenarioMismatch(_))));
    }

    #[test]
    fn regime_mismatch() {
        let sc = two_patch(Mechanism::MassAction, (1.0, 1.0), [1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]);
        let pair = perron_vector(&sc.connectivity).unwrap();
        let class = classify(&sc, &pair);
        let err = predict(&sc, &pair, &class).unwrap_err();
        assert!(matches!(&err, Error::RegimeMismatch(m) if m.contains("supported regimes")));
        assert!(predict_standard_ds0(&sc, &pair, &class).is_err());
    }

    #[test]
    fn lambda_recovery_at_risk_level_is_exact() {
        let sc = two_patch(Mechanism::MassAction, (0.0, 1.0), [1.0, 1.0], [2.0, 3.0], [2.0, 3.0], [1.0, 0.5]);
        let traj = integrate(&sc, &IntegrationSettings::default().with_t_end(20.0)).unwrap();
        let rec = recover_lambda_star(&sc, &traj).unwrap();
        assert!(rec.sic_residual <= 1e-9, "{}", rec.sic_residual);
    }

    #[test]
    fn lambda_recovery_on_extinction() {
        let sc = two_patch(Mechanism::MassAction, (0.0, 1.0), [1.0, 1.0], [2.0, 3.0], [2.5, 0.5], [0.5, 0.5]);
        let settings = IntegrationSettings {
            t_end: 200.0,
            sample_interval: 0.02,
            ..Default::default()
        };
        let traj = integrate(&sc, &settings).unwrap();
        let rec = recover_lambda_star(&sc, &traj).unwrap();
        assert!(rec.lambda.iter().all(|l| *l > 0.0 && *l < 1.0), "{:?}", rec.lambda);
        assert!(rec.s_residual <= 1e-6, "{}", rec.s_residual);
        assert!(rec.sic_residual <= 1e-6 * sc.total, "{}", rec.sic_residual);

        let p = predicted(&sc);
        let v = verify(&p, &traj.final_state, 1e-4).unwrap();
        assert!(v.pass, "{v:?}");
    }
}
