//! Time integration of the patch model.
//!
//! The integrator is the Dormand-Prince 5(4) embedded pair with adaptive
//! step control. Steps are shortened so that every output time is a step
//! endpoint, so samples carry the full order of the method and no
//! interpolant is involved.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{rhs_into, sup_norm, EpidemicScenario, State};
use crate::netmat::ConnectivityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub t_end: f64,
    pub max_step: f64,
    /// Steady state once `||rhs||_inf <= steady_tol * (1 + N)`.
    pub steady_tol: f64,
    pub sample_interval: f64,
    /// Stop as soon as the steady-state test held for
    /// [`STEADY_SAMPLES`] consecutive samples.
    pub stop_at_steady: bool,
}

/// Consecutive samples required to declare a steady state before `t_end`.
pub const STEADY_SAMPLES: usize = 10;

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            t_end: 200.0,
            max_step: 1.0,
            steady_tol: 1e-10,
            sample_interval: 0.05,
            stop_at_steady: true,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("t_end", self.t_end),
            ("max_step", self.max_step),
            ("steady_tol", self.steady_tol),
            ("sample_interval", self.sample_interval),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSettings(format!("{name} must be positive, got {v}")));
        }
        if self.rel_tol < 1e-14 {
            return Err(Error::InvalidSettings(format!(
                "rel_tol must be at least 1e-14, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }

    pub fn with_t_end(mut self, t_end: f64) -> Self {
        self.t_end = t_end;
        self
    }
}

/// Sampled solution of the patch model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// `|sum(S + I) - N|` at each sample.
    pub conservation_error: Vec<f64>,
    pub converged: bool,
    pub final_state: State,
    /// Steps whose small negative components were clamped to zero.
    pub clamp_events: usize,
    /// Smallest component produced by any accepted step, before clamping.
    pub min_component: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn max_conservation_error(&self) -> f64 {
        self.conservation_error.iter().copied().fold(0.0, f64::max)
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    /// Samples with `t >= t_min`.
    pub fn samples_from(&self, t_min: f64) -> impl Iterator<Item = (f64, &State)> {
        self.times
            .iter()
            .copied()
            .zip(&self.states)
            .filter(move |(t, _)| *t >= t_min)
    }
}

/// Dormand-Prince tableau.
mod tableau {
    pub const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    pub const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    /// Fifth-order weights minus embedded fourth-order weights.
    pub const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
}

/// Outcome of the post-step hook.
pub(crate) enum StepFix {
    Accept,
    Clamped,
    Reject,
}

pub(crate) struct DriveStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Adaptive Dormand-Prince integration from `t = 0` with a sample at every
/// multiple of `settings.sample_interval` and at `settings.t_end`.
pub(crate) fn drive<F, P, S>(
    mut field: F,
    mut y: Vec<f64>,
    settings: &IntegrationSettings,
    mut fix: P,
    mut on_sample: S,
) -> Result<DriveStats>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    P: FnMut(&mut [f64]) -> StepFix,
    S: FnMut(f64, &[f64]) -> ControlFlow<()>,
{
    use tableau::{A, C, E};

    settings.validate()?;
    let dim = y.len();
    let t_end = settings.t_end;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut stats = DriveStats {
        accepted: 0,
        rejected: 0,
    };

    let mut t = 0.0;
    field(t, &y, &mut k[0])?;
    if on_sample(t, &y).is_break() {
        return Ok(stats);
    }
    let mut sample_index = 1usize;
    let next_sample = |idx: usize| (idx as f64 * settings.sample_interval).min(t_end);
    let mut target = next_sample(sample_index);
    let mut h = settings.max_step.min(settings.sample_interval).min(1e-2);

    while t < t_end {
        let remaining = target - t;
        let clipped = h >= remaining;
        let h_try = if clipped { remaining } else { h };

        for s in 1..7 {
            for d in 0..dim {
                let mut acc = 0.0;
                for (j, a) in A[s][..s].iter().enumerate() {
                    acc += a * k[j][d];
                }
                stage[d] = y[d] + h_try * acc;
            }
            field(t + C[s] * h_try, &stage, &mut k[s])?;
        }
        // stage after the loop holds the fifth-order solution (row 7 = weights)
        y_new.copy_from_slice(&stage);

        let mut err = 0.0;
        for d in 0..dim {
            let mut e = 0.0;
            for (j, w) in E.iter().enumerate() {
                e += w * k[j][d];
            }
            let scale = settings.abs_tol + settings.rel_tol * y[d].abs().max(y_new[d].abs());
            let r = h_try * e / scale;
            err += r * r;
        }
        let err = (err / dim as f64).sqrt();

        if !err.is_finite() {
            return Err(Error::NonFiniteState);
        }
        if err <= 1.0 {
            let fixed = fix(&mut y_new);
            if matches!(fixed, StepFix::Reject) {
                stats.rejected += 1;
                h = 0.5 * h_try;
                check_underflow(t, h)?;
                continue;
            }
            stats.accepted += 1;
            t = if clipped { target } else { t + h_try };
            std::mem::swap(&mut y, &mut y_new);
            match fixed {
                StepFix::Clamped => field(t, &y, &mut k[0])?,
                _ => {
                    let last = k.pop().expect("seven stages");
                    k.insert(0, last);
                }
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let proposal = (h_try * factor).min(settings.max_step);
            h = if clipped { proposal.max(h.min(settings.max_step)) } else { proposal };
            if clipped {
                if on_sample(t, &y).is_break() {
                    break;
                }
                sample_index += 1;
                target = next_sample(sample_index);
            }
        } else {
            stats.rejected += 1;
            h = h_try * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            check_underflow(t, h)?;
        }
    }
    Ok(stats)
}

fn check_underflow(t: f64, h: f64) -> Result<()> {
    if h < 1e-14 * t.abs().max(1.0) {
        Err(Error::StepSizeUnderflow { t, h })
    } else {
        Ok(())
    }
}

/// Integrates the scenario from its initial data.
pub fn integrate(scenario: &EpidemicScenario, settings: &IntegrationSettings) -> Result<Trajectory> {
    integrate_from(scenario, &scenario.initial_state(), settings)
}

/// Integrates the scenario's vector field from an arbitrary state.
pub fn integrate_from(
    scenario: &EpidemicScenario,
    start: &State,
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    let n = scenario.n();
    if start.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: start.n(),
        });
    }
    if !start.is_finite() {
        return Err(Error::NonFiniteState);
    }
    let total = scenario.total;
    let abs_tol = settings.abs_tol;

    let field = |_t: f64, y: &[f64], out: &mut [f64]| {
        let (ds, di) = out.split_at_mut(n);
        rhs_into(scenario, &y[..n], &y[n..], ds, di)
    };

    let mut clamp_events = 0usize;
    let mut min_component = f64::INFINITY;
    let fix = |y: &mut [f64]| {
        let lowest = y.iter().copied().fold(f64::INFINITY, f64::min);
        min_component = min_component.min(lowest);
        if lowest >= 0.0 {
            return StepFix::Accept;
        }
        if lowest < -abs_tol {
            return StepFix::Reject;
        }
        for v in y.iter_mut() {
            *v = v.max(0.0);
        }
        let infected: f64 = y[n..].iter().sum();
        let susceptible: f64 = y[..n].iter().sum();
        if susceptible > 0.0 {
            let factor = (total - infected) / susceptible;
            for v in &mut y[..n] {
                *v *= factor;
            }
        }
        clamp_events += 1;
        StepFix::Clamped
    };

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut conservation_error = Vec::new();
    let mut steady_run = 0usize;
    let mut converged = false;
    let steady_threshold = settings.steady_tol * (1.0 + total);
    let mut deriv = vec![0.0; 2 * n];
    let mut sample_err = None;
    let on_sample = |t: f64, y: &[f64]| {
        times.push(t);
        let state = State::from_flat(y);
        conservation_error.push((state.total() - total).abs());
        states.push(state);
        let (ds, di) = deriv.split_at_mut(n);
        if let Err(e) = rhs_into(scenario, &y[..n], &y[n..], ds, di) {
            sample_err = Some(e);
            return ControlFlow::Break(());
        }
        if sup_norm(&deriv) <= steady_threshold {
            steady_run += 1;
        } else {
            steady_run = 0;
        }
        converged = steady_run >= STEADY_SAMPLES || (t >= settings.t_end && steady_run > 0);
        if settings.stop_at_steady && steady_run >= STEADY_SAMPLES {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };

    let stats = drive(field, start.to_flat(), settings, fix, on_sample)?;
    if let Some(e) = sample_err {
        return Err(e);
    }
    let final_state = states.last().cloned().expect("initial sample is always recorded");
    Ok(Trajectory {
        times,
        states,
        conservation_error,
        converged,
        final_state,
        clamp_events,
        min_component: min_component.min(start.s.iter().chain(&start.i).copied().fold(f64::INFINITY, f64::min)),
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
    })
}

/// Sampled solution of `X' = d L X`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

fn flow_settings(x0: &[f64], t_end: f64, sample_interval: f64) -> IntegrationSettings {
    let scale = sup_norm(x0).max(1.0);
    IntegrationSettings {
        rel_tol: 1e-13,
        abs_tol: 1e-15 * scale,
        t_end,
        max_step: 0.5,
        steady_tol: 1e-300,
        sample_interval,
        stop_at_steady: false,
    }
}

/// `X(t)` for `X' = d L X`, `X(0) = X0`.
pub fn linear_flow(d: f64, l: &ConnectivityMatrix, x0: &[f64], t: f64) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(x0.to_vec());
    }
    let path = linear_flow_path(d, l, x0, t, t)?;
    Ok(path.states.last().cloned().expect("final sample"))
}

/// Samples of `X' = d L X` every `sample_interval` up to `t_end`.
pub fn linear_flow_path(
    d: f64,
    l: &ConnectivityMatrix,
    x0: &[f64],
    t_end: f64,
    sample_interval: f64,
) -> Result<FlowPath> {
    if x0.len() != l.n() {
        return Err(Error::DimensionMismatch {
            expected: l.n(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState);
    }
    let settings = flow_settings(x0, t_end, sample_interval);
    let mut times = Vec::new();
    let mut states = Vec::new();
    let field = |_t: f64, x: &[f64], out: &mut [f64]| {
        l.mul_vec_into(x, out);
        out.iter_mut().for_each(|v| *v *= d);
        Ok(())
    };
    drive(
        field,
        x0.to_vec(),
        &settings,
        |_| StepFix::Accept,
        |t, x| {
            times.push(t);
            states.push(x.to_vec());
            ControlFlow::Continue(())
        },
    )?;
    Ok(FlowPath { times, states })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Component {
    S,
    I,
}

/// Empirical Harnack constant: the largest `max_j U_j / min_j U_j` over
/// samples with `t >= t_min`.
pub fn harnack_ratio(trajectory: &Trajectory, component: Component, t_min: f64) -> Result<f64> {
    harnack_over(
        trajectory.samples_from(t_min).map(|(t, st)| {
            let u = match component {
                Component::S => st.s.as_slice(),
                Component::I => st.i.as_slice(),
            };
            (t, u)
        }),
        t_min,
    )
}

/// [`harnack_ratio`] for a [`linear_flow_path`].
pub fn harnack_ratio_path(path: &FlowPath, t_min: f64) -> Result<f64> {
    harnack_over(
        path.times
            .iter()
            .copied()
            .zip(path.states.iter().map(Vec::as_slice))
            .filter(|(t, _)| *t >= t_min),
        t_min,
    )
}

fn harnack_over<'a>(samples: impl Iterator<Item = (f64, &'a [f64])>, t_min: f64) -> Result<f64> {
    if !(t_min >= 1.0) {
        return Err(Error::InvalidSettings(format!(
            "Harnack ratio needs t_min >= 1, got {t_min}"
        )));
    }
    let mut worst: Option<f64> = None;
    for (t, u) in samples {
        let (index, lo) = u
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (j, v)| if v < acc.1 { (j, v) } else { acc });
        if lo <= 0.0 {
            return Err(Error::ZeroComponent { t, index });
        }
        let hi = u.iter().copied().fold(f64::MIN, f64::max);
        let ratio = hi / lo;
        worst = Some(worst.map_or(ratio, |w: f64| w.max(ratio)));
    }
    worst.ok_or_else(|| Error::InvalidSettings(format!("no samples at or after t = {t_min}")))
}
