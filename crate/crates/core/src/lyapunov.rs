//! Lyapunov functions for the four degenerate-dispersal regimes.
//!
//! Each derivative is the closed form obtained by differentiating `V` along
//! the vector field; [`chain_rule_check`] compares it with `grad V . rhs`.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::model::{classify, local_risk, rhs, EpidemicScenario, Mechanism, State};
use crate::netmat::{weighted_quadratic_form, PerronPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LyapunovKind {
    /// Mass action, immobile infected: `sum theta_i (S_i^2/2 + r_i I_i)`.
    MassActionDI0,
    /// Mass action, immobile susceptible: `sum (beta_i S_i^2 / (2 gamma_i) + I_i)`.
    MassActionDS0,
    /// Standard incidence, immobile infected.
    StandardDI0,
    /// Standard incidence, immobile susceptible.
    StandardDS0,
}

impl LyapunovKind {
    pub const ALL: [LyapunovKind; 4] = [
        LyapunovKind::MassActionDI0,
        LyapunovKind::MassActionDS0,
        LyapunovKind::StandardDI0,
        LyapunovKind::StandardDS0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LyapunovKind::MassActionDI0 => "MassActionDI0",
            LyapunovKind::MassActionDS0 => "MassActionDS0",
            LyapunovKind::StandardDI0 => "StandardDI0",
            LyapunovKind::StandardDS0 => "StandardDS0",
        }
    }

    fn mechanism(self) -> Mechanism {
        match self {
            LyapunovKind::MassActionDI0 | LyapunovKind::MassActionDS0 => Mechanism::MassAction,
            LyapunovKind::StandardDI0 | LyapunovKind::StandardDS0 => Mechanism::StandardIncidence,
        }
    }

    fn immobile_infected(self) -> bool {
        matches!(self, LyapunovKind::MassActionDI0 | LyapunovKind::StandardDI0)
    }

    /// `Ok` iff the scenario has the matching mechanism, the matching
    /// dispersal rate equal to zero and the other one positive.
    pub fn check(self, scenario: &EpidemicScenario) -> Result<()> {
        let mismatch = |reason: String| Error::KindMismatch {
            kind: self.name(),
            reason,
        };
        if scenario.mechanism != self.mechanism() {
            return Err(mismatch(format!("mechanism is {:?}", scenario.mechanism)));
        }
        let (frozen, moving, frozen_name, moving_name) = if self.immobile_infected() {
            (scenario.d_i, scenario.d_s, "dI", "dS")
        } else {
            (scenario.d_s, scenario.d_i, "dS", "dI")
        };
        if frozen != 0.0 {
            return Err(mismatch(format!("{frozen_name} = {frozen}, expected 0")));
        }
        if moving <= 0.0 {
            return Err(mismatch(format!("{moving_name} = {moving}, expected > 0")));
        }
        Ok(())
    }

    /// The kind whose regime the scenario belongs to, if any.
    pub fn for_scenario(scenario: &EpidemicScenario) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.check(scenario).is_ok())
    }
}

/// Indicator of `H_2 = H^+ ∩ Omega^+` (high-risk patches with initial infection).
fn standard_h2(scenario: &EpidemicScenario, pair: &PerronPair) -> Vec<bool> {
    let c = classify(scenario, pair);
    let mut mask = vec![false; scenario.n()];
    for &i in &c.h_plus {
        mask[i] = scenario.i0[i] > 0.0;
    }
    mask
}

fn check_sizes(scenario: &EpidemicScenario, pair: &PerronPair, state: &State) -> Result<()> {
    let n = scenario.n();
    for got in [pair.n(), state.n()] {
        if got != n {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
    }
    Ok(())
}

pub fn lyapunov_value(
    kind: LyapunovKind,
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    state: &State,
) -> Result<f64> {
    kind.check(scenario)?;
    check_sizes(scenario, pair, state)?;
    let r = local_risk(scenario);
    let (s, i, th) = (&state.s, &state.i, &pair.theta);
    let (beta, gamma) = (&scenario.beta, &scenario.gamma);
    let n = scenario.n();
    let v = match kind {
        LyapunovKind::MassActionDI0 => (0..n)
            .map(|k| th[k] * (0.5 * s[k] * s[k] + r[k] * i[k]))
            .sum(),
        LyapunovKind::MassActionDS0 => (0..n)
            .map(|k| beta[k] * s[k] * s[k] / (2.0 * gamma[k]) + i[k])
            .sum(),
        LyapunovKind::StandardDI0 => {
            let h2 = standard_h2(scenario, pair);
            (0..n)
                .map(|k| {
                    let mut term = 0.5 * th[k] * s[k] * s[k];
                    if h2[k] {
                        term += 0.5 * th[k] * gamma[k] / (beta[k] - gamma[k]) * i[k] * i[k];
                    }
                    term
                })
                .sum()
        }
        LyapunovKind::StandardDS0 => (0..n)
            .map(|k| 0.5 * th[k] * ((1.0 - r[k]) / r[k] * s[k] * s[k] + i[k] * i[k]))
            .sum(),
    };
    Ok(v)
}

/// Closed-form `dV/dt` at `state`.
pub fn lyapunov_derivative(
    kind: LyapunovKind,
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    state: &State,
) -> Result<f64> {
    kind.check(scenario)?;
    check_sizes(scenario, pair, state)?;
    let r = local_risk(scenario);
    let (s, i, th) = (&state.s, &state.i, &pair.theta);
    let (beta, gamma) = (&scenario.beta, &scenario.gamma);
    let l = &scenario.connectivity;
    let n = scenario.n();
    // I_k / (S_k + I_k), zero on empty patches
    let share = |k: usize| {
        let total = s[k] + i[k];
        if total > 0.0 {
            i[k] / total
        } else {
            0.0
        }
    };
    let vdot = match kind {
        LyapunovKind::MassActionDI0 => {
            let sink: f64 = (0..n)
                .map(|k| th[k] * beta[k] * (s[k] - r[k]).powi(2) * i[k])
                .sum();
            scenario.d_s * weighted_quadratic_form(l, pair, s) - sink
        }
        LyapunovKind::MassActionDS0 => -(0..n)
            .map(|k| (beta[k] * s[k] - gamma[k]).powi(2) * i[k] / gamma[k])
            .sum::<f64>(),
        LyapunovKind::StandardDI0 => {
            let h2 = standard_h2(scenario, pair);
            let sink: f64 = (0..n)
                .map(|k| {
                    let excess = (beta[k] - gamma[k]) * s[k] - gamma[k] * i[k];
                    if h2[k] {
                        th[k] / (beta[k] - gamma[k]) * excess * excess * share(k)
                    } else {
                        th[k] * excess * s[k] * share(k)
                    }
                })
                .sum();
            scenario.d_s * weighted_quadratic_form(l, pair, s) - sink
        }
        LyapunovKind::StandardDS0 => {
            let sink: f64 = (0..n)
                .map(|k| {
                    let excess = (1.0 - r[k]) * s[k] - r[k] * i[k];
                    th[k] * beta[k] * beta[k] / gamma[k] * excess * excess * share(k)
                })
                .sum();
            scenario.d_i * weighted_quadratic_form(l, pair, i) - sink
        }
    };
    Ok(vdot)
}

/// `(dV/dS, dV/dI)` at `state`.
pub fn lyapunov_gradient(
    kind: LyapunovKind,
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    state: &State,
) -> Result<(Vec<f64>, Vec<f64>)> {
    kind.check(scenario)?;
    check_sizes(scenario, pair, state)?;
    let r = local_risk(scenario);
    let (s, i, th) = (&state.s, &state.i, &pair.theta);
    let (beta, gamma) = (&scenario.beta, &scenario.gamma);
    let n = scenario.n();
    let grad = match kind {
        LyapunovKind::MassActionDI0 => (
            (0..n).map(|k| th[k] * s[k]).collect(),
            (0..n).map(|k| th[k] * r[k]).collect(),
        ),
        LyapunovKind::MassActionDS0 => (
            (0..n).map(|k| beta[k] * s[k] / gamma[k]).collect(),
            vec![1.0; n],
        ),
        LyapunovKind::StandardDI0 => {
            let h2 = standard_h2(scenario, pair);
            (
                (0..n).map(|k| th[k] * s[k]).collect(),
                (0..n)
                    .map(|k| {
                        if h2[k] {
                            th[k] * gamma[k] / (beta[k] - gamma[k]) * i[k]
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            )
        }
        LyapunovKind::StandardDS0 => (
            (0..n).map(|k| th[k] * (1.0 - r[k]) / r[k] * s[k]).collect(),
            (0..n).map(|k| th[k] * i[k]).collect(),
        ),
    };
    Ok(grad)
}

/// Closed-form derivative next to `grad V . rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainRuleCheck {
    pub closed_form: f64,
    pub chain_rule: f64,
    /// `sum_k |dV/dx_k| m_k`, with `m_k` the sum of the absolute values of
    /// the dispersal, infection and recovery terms making up `x_k'`. Near an
    /// equilibrium `x_k'` cancels to almost nothing while its rounding error
    /// stays of order `m_k`.
    pub scale: f64,
}

impl ChainRuleCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.closed_form - self.chain_rule).abs() / self.scale.max(f64::MIN_POSITIVE)
    }
}

pub fn chain_rule_check(
    kind: LyapunovKind,
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    state: &State,
) -> Result<ChainRuleCheck> {
    let closed_form = lyapunov_derivative(kind, scenario, pair, state)?;
    let (gs, gi) = lyapunov_gradient(kind, scenario, pair, state)?;
    let (ds, di) = rhs(scenario, state)?;
    let chain_rule: f64 = gs.iter().zip(&ds).chain(gi.iter().zip(&di)).map(|(g, d)| g * d).sum();
    let (ms, mi) = flux_magnitudes(scenario, state);
    let scale = gs
        .iter()
        .zip(&ms)
        .chain(gi.iter().zip(&mi))
        .map(|(g, m)| g.abs() * m)
        .sum();
    Ok(ChainRuleCheck {
        closed_form,
        chain_rule,
        scale,
    })
}

fn flux_magnitudes(scenario: &EpidemicScenario, state: &State) -> (Vec<f64>, Vec<f64>) {
    let l = scenario.connectivity.matrix();
    let n = state.n();
    let spread = |d: f64, u: &[f64], k: usize| d * (0..n).map(|j| (l.get(k, j) * u[j]).abs()).sum::<f64>();
    let local: Vec<f64> = (0..n)
        .map(|k| {
            scenario.mechanism.incidence(scenario.beta[k], state.s[k], state.i[k]).abs()
                + (scenario.gamma[k] * state.i[k]).abs()
        })
        .collect();
    (
        (0..n).map(|k| spread(scenario.d_s, &state.s, k) + local[k]).collect(),
        (0..n).map(|k| spread(scenario.d_i, &state.i, k) + local[k]).collect(),
    )
}

fn rk4_step(scenario: &EpidemicScenario, state: &State, h: f64) -> Result<State> {
    let add = |base: &State, k: &(Vec<f64>, Vec<f64>), c: f64| {
        State::new(
            base.s.iter().zip(&k.0).map(|(a, b)| a + c * b).collect(),
            base.i.iter().zip(&k.1).map(|(a, b)| a + c * b).collect(),
        )
    };
    let k1 = rhs(scenario, state)?;
    let k2 = rhs(scenario, &add(state, &k1, 0.5 * h))?;
    let k3 = rhs(scenario, &add(state, &k2, 0.5 * h))?;
    let k4 = rhs(scenario, &add(state, &k3, h))?;
    let n = state.n();
    let combine = |a: &[f64], j: usize, part: fn(&(Vec<f64>, Vec<f64>)) -> &Vec<f64>| {
        a[j] + h / 6.0
            * (part(&k1)[j] + 2.0 * part(&k2)[j] + 2.0 * part(&k3)[j] + part(&k4)[j])
    };
    Ok(State::new(
        (0..n).map(|j| combine(&state.s, j, |k| &k.0)).collect(),
        (0..n).map(|j| combine(&state.i, j, |k| &k.1)).collect(),
    ))
}

/// `(V(x(t+h)) - V(x(t-h))) / 2h` with `x(t +- h)` from one classical
/// Runge-Kutta step of the vector field in each direction.
pub fn centered_difference(
    kind: LyapunovKind,
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    state: &State,
    h: f64,
) -> Result<f64> {
    let ahead = rk4_step(scenario, state, h)?;
    let behind = rk4_step(scenario, state, -h)?;
    let v_ahead = lyapunov_value(kind, scenario, pair, &ahead)?;
    let v_behind = lyapunov_value(kind, scenario, pair, &behind)?;
    Ok((v_ahead - v_behind) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub kind: LyapunovKind,
    /// Largest closed-form `dV/dt` over the samples.
    pub max_vdot: f64,
    /// Largest increase `V(t_{k+1}) - V(t_k)` between consecutive samples.
    pub max_increase: f64,
}

pub fn monotonicity_report(
    kind: LyapunovKind,
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    trajectory: &Trajectory,
) -> Result<MonotonicityReport> {
    kind.check(scenario)?;
    let mut max_vdot = f64::NEG_INFINITY;
    let mut max_increase = f64::NEG_INFINITY;
    let mut previous: Option<f64> = None;
    for state in &trajectory.states {
        max_vdot = max_vdot.max(lyapunov_derivative(kind, scenario, pair, state)?);
        let v = lyapunov_value(kind, scenario, pair, state)?;
        if let Some(p) = previous {
            max_increase = max_increase.max(v - p);
        }
        previous = Some(v);
    }
    Ok(MonotonicityReport {
        kind,
        max_vdot,
        max_increase: if max_increase.is_finite() { max_increase } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmat::{perron_vector, ConnectivityMatrix};

    fn sym2() -> ConnectivityMatrix {
        ConnectivityMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    fn scenario(
        mechanism: Mechanism,
        dispersal: (f64, f64),
        beta: [f64; 2],
        gamma: [f64; 2],
        initial: ([f64; 2], [f64; 2]),
    ) -> EpidemicScenario {
        EpidemicScenario::new(
            sym2(),
            beta.to_vec(),
            gamma.to_vec(),
            dispersal,
            mechanism,
            State::new(initial.0.to_vec(), initial.1.to_vec()),
        )
        .unwrap()
    }

    #[test]
    fn regime_gating() {
        let sc = scenario(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [1.0, 1.0], ([1.0, 1.0], [1.0, 1.0]));
        assert_eq!(LyapunovKind::for_scenario(&sc), Some(LyapunovKind::MassActionDI0));
        assert!(matches!(
            LyapunovKind::StandardDI0.check(&sc),
            Err(Error::KindMismatch { kind: "StandardDI0", .. })
        ));
        let both_frozen = scenario(Mechanism::MassAction, (0.0, 0.0), [1.0, 1.0], [1.0, 1.0], ([1.0, 1.0], [1.0, 1.0]));
        assert_eq!(LyapunovKind::for_scenario(&both_frozen), None);
        let both_moving = scenario(Mechanism::StandardIncidence, (1.0, 1.0), [1.0, 1.0], [1.0, 1.0], ([1.0, 1.0], [1.0, 1.0]));
        assert_eq!(LyapunovKind::for_scenario(&both_moving), None);
    }

    #[test]
    fn value_examples() {
        let sc = scenario(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [1.0, 1.0], ([1.0, 1.0], [1.0, 1.0]));
        let pair = perron_vector(&sc.connectivity).unwrap();
        let origin = State::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(lyapunov_value(LyapunovKind::MassActionDI0, &sc, &pair, &origin).unwrap(), 0.0);

        let sc = scenario(Mechanism::MassAction, (0.0, 1.0), [1.0, 1.0], [2.0, 3.0], ([2.0, 3.0], [1.0, 1.0]));
        let st = State::new(vec![2.0, 3.0], vec![0.0, 0.0]);
        let v = lyapunov_value(LyapunovKind::MassActionDS0, &sc, &pair, &st).unwrap();
        assert!((v - 2.5).abs() < 1e-14);

        let sc = scenario(Mechanism::StandardIncidence, (0.0, 1.0), [2.0, 3.0], [1.0, 1.0], ([1.0, 1.0], [1.0, 1.0]));
        let st = State::new(vec![1.0, 1.0], vec![1.0, 1.0]);
        let v = lyapunov_value(LyapunovKind::StandardDS0, &sc, &pair, &st).unwrap();
        assert!((v - 5.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn mass_action_ds0_strictly_decreases_off_the_risk_level() {
        let sc = scenario(Mechanism::MassAction, (0.0, 1.0), [1.0, 1.0], [2.0, 3.0], ([2.0, 3.0], [1.0, 1.0]));
        let pair = perron_vector(&sc.connectivity).unwrap();
        let st = State::new(vec![2.0, 1.0], vec![0.5, 1.5]);
        assert!(lyapunov_derivative(LyapunovKind::MassActionDS0, &sc, &pair, &st).unwrap() < 0.0);
        // S = r is a critical level
        let st = State::new(vec![2.0, 3.0], vec![0.5, 1.5]);
        assert_eq!(lyapunov_derivative(LyapunovKind::MassActionDS0, &sc, &pair, &st).unwrap(), 0.0);
    }

    #[test]
    fn derivative_vanishes_on_equilibria() {
        // standard incidence, dS = 0, all patches high risk: (S*, I*) equilibrium
        let sc = scenario(Mechanism::StandardIncidence, (0.0, 1.0), [2.0, 3.0], [1.0, 1.0], ([2.0, 2.0], [1.0, 1.0]));
        let pair = perron_vector(&sc.connectivity).unwrap();
        let istar = 6.0 / 1.75;
        let st = State::new(vec![istar * 0.5, istar * 0.25], vec![istar * 0.5, istar * 0.5]);
        let vdot = lyapunov_derivative(LyapunovKind::StandardDS0, &sc, &pair, &st).unwrap();
        assert!(vdot.abs() < 1e-10, "{vdot}");

        // mass action, dI = 0, disease free at N alpha
        let sc = scenario(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [2.0, 2.0], ([1.0, 1.0], [1.0, 0.0]));
        let st = State::new(vec![1.5, 1.5], vec![0.0, 0.0]);
        let vdot = lyapunov_derivative(LyapunovKind::MassActionDI0, &sc, &pair, &st).unwrap();
        assert!(vdot.abs() < 1e-12);
    }

    #[test]
    fn closed_forms_match_chain_rule() {
        let cases = [
            (LyapunovKind::MassActionDI0, Mechanism::MassAction, (1.3, 0.0)),
            (LyapunovKind::MassActionDS0, Mechanism::MassAction, (0.0, 0.7)),
            (LyapunovKind::StandardDI0, Mechanism::StandardIncidence, (0.9, 0.0)),
            (LyapunovKind::StandardDS0, Mechanism::StandardIncidence, (0.0, 1.1)),
        ];
        for (kind, mech, disp) in cases {
            let sc = scenario(mech, disp, [2.0, 0.8], [1.0, 1.3], ([1.0, 2.0], [0.5, 0.25]));
            let pair = perron_vector(&sc.connectivity).unwrap();
            let st = State::new(vec![0.3, 2.2], vec![1.7, 0.4]);
            let check = chain_rule_check(kind, &sc, &pair, &st).unwrap();
            assert!(check.relative_gap() < 1e-12, "{kind:?}: {check:?}");
            let fd = centered_difference(kind, &sc, &pair, &st, 1e-4).unwrap();
            assert!((fd - check.closed_form).abs() <= 1e-4 * (1.0 + check.closed_form.abs()));
        }
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let sc = scenario(Mechanism::MassAction, (1.0, 0.0), [1.0, 1.0], [1.0, 1.0], ([1.0, 1.0], [1.0, 1.0]));
        let pair = perron_vector(&sc.connectivity).unwrap();
        let st = sc.initial_state();
        assert!(lyapunov_derivative(LyapunovKind::StandardDS0, &sc, &pair, &st).is_err());
        assert!(lyapunov_value(LyapunovKind::MassActionDS0, &sc, &pair, &st).is_err());
    }
}
