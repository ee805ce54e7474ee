//! Epidemic parameters, the two incidence mechanisms, the vector field and
//! the risk classification of patches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmat::{ConnectivityMatrix, PerronPair};

/// Default relative band for deciding the "moderate risk" sets.
pub const DEFAULT_CLASSIFICATION_BAND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// New infections `beta_i S_i I_i`.
    MassAction,
    /// New infections `beta_i S_i I_i / (S_i + I_i)`.
    StandardIncidence,
}

impl Mechanism {
    #[inline]
    pub fn incidence(self, beta: f64, s: f64, i: f64) -> f64 {
        match self {
            Mechanism::MassAction => beta * s * i,
            Mechanism::StandardIncidence => {
                let total = s + i;
                if total > 0.0 {
                    beta * s * i / total
                } else {
                    0.0
                }
            }
        }
    }
}

/// Susceptible and infected counts per patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
}

impl State {
    pub fn new(s: Vec<f64>, i: Vec<f64>) -> Self {
        assert_eq!(s.len(), i.len(), "S and I must have the same length");
        Self { s, i }
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn total(&self) -> f64 {
        self.s.iter().sum::<f64>() + self.i.iter().sum::<f64>()
    }

    pub fn infected_total(&self) -> f64 {
        self.i.iter().sum()
    }

    /// Packs `(S, I)` into one vector `[S_1..S_n, I_1..I_n]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.s.clone();
        v.extend_from_slice(&self.i);
        v
    }

    pub fn from_flat(y: &[f64]) -> Self {
        let n = y.len() / 2;
        Self {
            s: y[..n].to_vec(),
            i: y[n..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(&self.i).all(|v| v.is_finite())
    }

    /// Largest absolute componentwise difference.
    pub fn sup_distance(&self, other: &State) -> f64 {
        sup_diff(&self.s, &other.s).max(sup_diff(&self.i, &other.i))
    }
}

pub(crate) fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// A fully specified patch model with its initial data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpidemicScenario {
    pub connectivity: ConnectivityMatrix,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub d_s: f64,
    pub d_i: f64,
    pub mechanism: Mechanism,
    pub s0: Vec<f64>,
    pub i0: Vec<f64>,
    /// Total population `N`.
    pub total: f64,
}

impl EpidemicScenario {
    /// Builds a scenario whose total population is read off the initial data.
    pub fn new(
        connectivity: ConnectivityMatrix,
        beta: Vec<f64>,
        gamma: Vec<f64>,
        dispersal: (f64, f64),
        mechanism: Mechanism,
        initial: State,
    ) -> Result<Self> {
        let total = initial.total();
        let scenario = Self {
            connectivity,
            beta,
            gamma,
            d_s: dispersal.0,
            d_i: dispersal.1,
            mechanism,
            s0: initial.s,
            i0: initial.i,
            total,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// Checks assumptions (A2) and (A3) and the vector lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.connectivity.n();
        for (name, v) in [
            ("beta", &self.beta),
            ("gamma", &self.gamma),
            ("S0", &self.s0),
            ("I0", &self.i0),
        ] {
            if v.len() != n {
                return Err(Error::InvalidScenario(format!(
                    "{name} has length {}, expected {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidScenario(format!("{name} has non-finite entries")));
            }
        }
        if self.beta.iter().any(|&b| b <= 0.0) || self.gamma.iter().any(|&g| g <= 0.0) {
            return Err(Error::InvalidScenario(
                "(A3) beta and gamma must be strictly positive in every patch".into(),
            ));
        }
        if !(self.d_s >= 0.0 && self.d_i >= 0.0 && self.d_s.is_finite() && self.d_i.is_finite()) {
            return Err(Error::InvalidScenario(
                "(A3) dispersal rates dS and dI must be finite and nonnegative".into(),
            ));
        }
        if self.s0.iter().chain(&self.i0).any(|&x| x < 0.0) {
            return Err(Error::InvalidScenario(
                "(A2) initial data S0 and I0 must be nonnegative".into(),
            ));
        }
        if !self.i0.iter().any(|&x| x > 0.0) {
            return Err(Error::InvalidScenario(
                "(A2) I0 must have at least one positive component".into(),
            ));
        }
        if !(self.total > 0.0 && self.total.is_finite()) {
            return Err(Error::InvalidScenario("(A2) total population N must be positive".into()));
        }
        let mass: f64 = self.s0.iter().chain(&self.i0).sum();
        if (mass - self.total).abs() > 1e-12 * self.total {
            return Err(Error::InvalidScenario(format!(
                "(A2) sum of S0 + I0 is {mass}, but N = {}",
                self.total
            )));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.connectivity.n()
    }

    pub fn initial_state(&self) -> State {
        State::new(self.s0.clone(), self.i0.clone())
    }

    pub fn max_beta(&self) -> f64 {
        self.beta.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_gamma(&self) -> f64 {
        self.gamma.iter().copied().fold(0.0, f64::max)
    }

    /// `max(beta, gamma, ||L||_inf)`, a rate scale for residual tolerances.
    pub fn rate_scale(&self) -> f64 {
        self.max_beta()
            .max(self.max_gamma())
            .max(self.connectivity.inf_norm())
    }
}

/// `r_j = gamma_j / beta_j`.
pub fn local_risk(scenario: &EpidemicScenario) -> Vec<f64> {
    scenario
        .gamma
        .iter()
        .zip(&scenario.beta)
        .map(|(g, b)| g / b)
        .collect()
}

/// Patch risk sets. Indices are zero-based.
///
/// The `h_*` sets compare `r_i` with 1 (standard incidence); the `th_*` sets
/// compare `r_i / (N alpha_i)` with 1 (mass action). `plus` means high risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskClassification {
    pub r: Vec<f64>,
    /// `r_i / (N alpha_i)`.
    pub r_scaled: Vec<f64>,
    pub h_minus: Vec<usize>,
    pub h_zero: Vec<usize>,
    pub h_plus: Vec<usize>,
    pub th_minus: Vec<usize>,
    pub th_zero: Vec<usize>,
    pub th_plus: Vec<usize>,
    pub omega_zero: Vec<usize>,
    pub omega_plus: Vec<usize>,
    /// `min over omega_plus of r_i / (N alpha_i)`.
    pub r_tilde_m: f64,
}

impl RiskClassification {
    /// Patches of `omega_plus` attaining `r_tilde_m`.
    pub fn highest_risk(&self) -> Vec<usize> {
        self.omega_plus
            .iter()
            .copied()
            .filter(|&i| self.r_scaled[i] == self.r_tilde_m)
            .collect()
    }
}

pub fn classify(scenario: &EpidemicScenario, pair: &PerronPair) -> RiskClassification {
    classify_with_band(scenario, pair, DEFAULT_CLASSIFICATION_BAND)
}

/// Exact comparisons against 1, except that values within the relative
/// `band` of 1 go to the moderate-risk set.
pub fn classify_with_band(
    scenario: &EpidemicScenario,
    pair: &PerronPair,
    band: f64,
) -> RiskClassification {
    let r = local_risk(scenario);
    let r_scaled: Vec<f64> = r
        .iter()
        .zip(&pair.alpha)
        .map(|(ri, a)| ri / (scenario.total * a))
        .collect();

    let split = |values: &[f64]| {
        let (mut minus, mut zero, mut plus) = (Vec::new(), Vec::new(), Vec::new());
        for (i, &v) in values.iter().enumerate() {
            if (v - 1.0).abs() <= band * v.max(1.0) {
                zero.push(i);
            } else if v > 1.0 {
                minus.push(i);
            } else {
                plus.push(i);
            }
        }
        (minus, zero, plus)
    };
    let (h_minus, h_zero, h_plus) = split(&r);
    let (th_minus, th_zero, th_plus) = split(&r_scaled);

    let (omega_plus, omega_zero): (Vec<usize>, Vec<usize>) =
        (0..scenario.n()).partition(|&i| scenario.i0[i] > 0.0);
    let r_tilde_m = omega_plus
        .iter()
        .map(|&i| r_scaled[i])
        .fold(f64::INFINITY, f64::min);

    RiskClassification {
        r,
        r_scaled,
        h_minus,
        h_zero,
        h_plus,
        th_minus,
        th_zero,
        th_plus,
        omega_zero,
        omega_plus,
        r_tilde_m,
    }
}

/// Time derivative `(S', I')` at `state`.
pub fn rhs(scenario: &EpidemicScenario, state: &State) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = scenario.n();
    if state.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: state.n(),
        });
    }
    let mut ds = vec![0.0; n];
    let mut di = vec![0.0; n];
    rhs_into(scenario, &state.s, &state.i, &mut ds, &mut di)?;
    Ok((ds, di))
}

/// Allocation-free form of [`rhs`] on split slices.
pub fn rhs_into(
    scenario: &EpidemicScenario,
    s: &[f64],
    i: &[f64],
    ds: &mut [f64],
    di: &mut [f64],
) -> Result<()> {
    if s.iter().chain(i).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState);
    }
    let l = &scenario.connectivity;
    l.mul_vec_into(s, ds);
    l.mul_vec_into(i, di);
    for k in 0..s.len() {
        let infection = scenario.mechanism.incidence(scenario.beta[k], s[k], i[k]);
        let recovery = scenario.gamma[k] * i[k];
        ds[k] = scenario.d_s * ds[k] - infection + recovery;
        di[k] = scenario.d_i * di[k] + infection - recovery;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym2() -> ConnectivityMatrix {
        ConnectivityMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
    }

    fn scenario(beta: [f64; 2], gamma: [f64; 2], s0: [f64; 2], i0: [f64; 2]) -> EpidemicScenario {
        EpidemicScenario::new(
            sym2(),
            beta.to_vec(),
            gamma.to_vec(),
            (1.0, 1.0),
            Mechanism::MassAction,
            State::new(s0.to_vec(), i0.to_vec()),
        )
        .unwrap()
    }

    fn half_pair() -> PerronPair {
        PerronPair {
            alpha: vec![0.5, 0.5],
            theta: vec![2.0, 2.0],
        }
    }

    #[test]
    fn local_risk_examples() {
        assert_eq!(local_risk(&scenario([2.0, 1.0], [1.0, 2.0], [1.0, 1.0], [1.0, 1.0])), vec![0.5, 2.0]);
        assert_eq!(local_risk(&scenario([3.0, 0.7], [3.0, 0.7], [1.0, 1.0], [1.0, 1.0])), vec![1.0, 1.0]);
    }

    #[test]
    fn classification_standard_sets() {
        let sc = scenario([2.0, 1.0], [1.0, 2.0], [1.0, 1.0], [1.0, 1.0]);
        let c = classify(&sc, &half_pair());
        assert_eq!(c.h_plus, vec![0]);
        assert_eq!(c.h_minus, vec![1]);
        assert!(c.h_zero.is_empty());
    }

    #[test]
    fn classification_mass_action_sets() {
        let sc = scenario([1.0, 1.0], [1.0, 2.0], [3.0, 3.0], [1.0, 1.0]);
        assert_eq!(sc.total, 8.0);
        let c = classify(&sc, &half_pair());
        assert_eq!(c.r_scaled, vec![0.25, 0.5]);
        assert_eq!(c.th_plus, vec![0, 1]);
        assert_eq!(c.r_tilde_m, 0.25);
        assert_eq!(c.highest_risk(), vec![0]);
    }

    #[test]
    fn omega_sets_follow_initial_infection() {
        let sc = scenario([1.0, 1.0], [1.0, 2.0], [3.0, 4.0], [1.0, 0.0]);
        let c = classify(&sc, &half_pair());
        assert_eq!(c.omega_zero, vec![1]);
        assert_eq!(c.omega_plus, vec![0]);
        assert_eq!(c.r_tilde_m, c.r_scaled[0]);
    }

    #[test]
    fn moderate_band_catches_rounding() {
        let sc = scenario([3.0, 1.0], [3.0 * (1.0 + 1e-15), 2.0], [1.0, 1.0], [1.0, 1.0]);
        let c = classify(&sc, &half_pair());
        assert_eq!(c.h_zero, vec![0]);
    }

    #[test]
    fn disease_free_direction() {
        let sc = scenario([1.0, 1.0], [1.0, 1.0], [3.0, 1.0], [1.0, 1.0]);
        let (ds, di) = rhs(&sc, &State::new(vec![3.0, 1.0], vec![0.0, 0.0])).unwrap();
        assert_eq!(ds, vec![-2.0, 2.0]);
        assert_eq!(di, vec![0.0, 0.0]);
    }

    #[test]
    fn balanced_state_is_stationary() {
        let sc = scenario([1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]);
        let (ds, di) = rhs(&sc, &State::new(vec![1.0, 1.0], vec![1.0, 1.0])).unwrap();
        assert_eq!(ds, vec![0.0, 0.0]);
        assert_eq!(di, vec![0.0, 0.0]);
    }

    #[test]
    fn standard_incidence_vanishes_on_empty_patch() {
        assert_eq!(Mechanism::StandardIncidence.incidence(2.0, 0.0, 0.0), 0.0);
        let mut sc = scenario([1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]);
        sc.mechanism = Mechanism::StandardIncidence;
        let (ds, di) = rhs(&sc, &State::new(vec![0.0, 2.0], vec![0.0, 2.0])).unwrap();
        assert!(ds.iter().chain(&di).all(|v| v.is_finite()));
        // patch 0 only receives movers
        assert_eq!(ds[0], 2.0);
        assert_eq!(di[0], 2.0);
    }

    #[test]
    fn rejects_non_finite_state() {
        let sc = scenario([1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]);
        let err = rhs(&sc, &State::new(vec![f64::NAN, 1.0], vec![1.0, 1.0])).unwrap_err();
        assert_eq!(err, Error::NonFiniteState);
    }

    #[test]
    fn scenario_validation_names_assumptions() {
        let mut sc = scenario([1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [1.0, 1.0]);
        sc.total = 5.0;
        assert!(matches!(sc.validate(), Err(Error::InvalidScenario(m)) if m.contains("(A2)")));
        sc.total = 4.0;
        sc.beta[1] = 0.0;
        assert!(matches!(sc.validate(), Err(Error::InvalidScenario(m)) if m.contains("(A3)")));
        sc.beta[1] = 1.0;
        sc.i0 = vec![0.0, 0.0];
        sc.s0 = vec![2.0, 2.0];
        assert!(matches!(sc.validate(), Err(Error::InvalidScenario(m)) if m.contains("I0")));
    }
}
