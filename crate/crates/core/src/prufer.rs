//! Phase–amplitude (Prüfer) integration of `(H_ξ − E)Ψ = 0`.
//!
//! With `Ψ = r sin θ`, `Ψ' = r cos θ` the equation becomes
//!
//! ```text
//! θ'      = cos²θ + (E − V(x+ξ)) sin²θ
//! (ln r)' = (1 − (E − V(x+ξ))) sin θ cos θ
//! ```
//!
//! θ is integrated as a real number, so the trace carries the continuous lift
//! of `arg(Ψ' + iΨ)` directly. Two auxiliary quadratures ride along, both
//! scaled by `r(x)²` so they never overflow at gap energies:
//!
//! ```text
//! Q(x) = |∫ Ψ²| / r(x)²          (norm ratio; equals ∂θ/∂E up to the seed term)
//! P(x) = ∫ Ψ² V'_ξ / r(x)²        (Hellmann–Feynman numerator)
//! ```
//!
//! where the integrals run from the start of the trace to `x`.

use std::f64::consts::{FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{self, ComponentTolerance, Magnitude, OdeSystem, StepOptions};
use crate::potentials::PotentialSpec;

/// Floor on the decay rate used to seed Ψ±.
pub const KAPPA_MIN: f64 = 1e-3;

/// Default half-line truncation length.
pub const DEFAULT_TRUNCATION: f64 = 60.0;

/// Width of the window used to average `V` near the truncation point.
const SEED_AVERAGE_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    /// Absolute tolerance on θ and ln r.
    pub atol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-11,
        }
    }
}

impl IntegratorConfig {
    fn max_step(&self, spec: &PotentialSpec, energy: f64) -> f64 {
        // |θ'| ≤ max(1, |E − V|), so this keeps every accepted Δθ below π/4.
        let rate = 1f64.max(energy.abs() + spec.amplitude_bound());
        let mut step = FRAC_PI_4 / rate;
        let f = spec.max_frequency();
        if f > 0.0 {
            step = step.min(0.25 / f);
        }
        step
    }

    fn options<const N: usize>(&self, spec: &PotentialSpec, energy: f64) -> StepOptions<N> {
        let mut tolerance = [ComponentTolerance {
            rtol: self.rtol,
            atol: self.atol,
            magnitude: Magnitude::State,
        }; N];
        // θ and ln r are additive quantities whose size carries no information
        tolerance[0].magnitude = Magnitude::Fixed(1.0);
        if N > 1 {
            tolerance[1].magnitude = Magnitude::Fixed(1.0);
        }
        let max_step = self.max_step(spec, energy);
        StepOptions {
            tolerance,
            max_step,
            min_step: 1e-10 * max_step,
            initial_step: 0.1 * max_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruferState {
    pub x: f64,
    /// Continuous lift of `arg(Ψ' + iΨ)`.
    pub theta: f64,
    pub log_amplitude: f64,
    /// `θ'(x)`, kept for Hermite interpolation of the lift.
    pub dtheta: f64,
}

/// A solution of `(H_ξ − E)Ψ = 0` sampled at the integrator's accepted steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionTrace {
    pub states: Vec<PruferState>,
    pub energy: f64,
    pub offset: f64,
    pub direction: Direction,
    /// `Q` at the last state.
    pub norm_ratio: f64,
    /// `P` at the last state.
    pub force_ratio: f64,
}

impl SolutionTrace {
    pub fn first(&self) -> &PruferState {
        &self.states[0]
    }

    pub fn last(&self) -> &PruferState {
        self.states.last().expect("trace has at least one state")
    }

    /// `(min x, max x)` covered by the trace.
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = (self.first().x, self.last().x);
        (a.min(b), a.max(b))
    }

    /// θ at `x` by cubic Hermite interpolation between accepted steps.
    pub fn theta_at(&self, x: f64) -> f64 {
        let states = &self.states;
        let n = states.len();
        if n == 1 {
            return states[0].theta;
        }
        // index of the first state past x in traversal order
        let ascending = states[n - 1].x > states[0].x;
        let idx = states.partition_point(|s| if ascending { s.x < x } else { s.x > x });
        if idx == 0 {
            return states[0].theta;
        }
        if idx >= n {
            return states[n - 1].theta;
        }
        let (s0, s1) = (&states[idx - 1], &states[idx]);
        if s1.x == x {
            return s1.theta;
        }
        let h = s1.x - s0.x;
        let t = (x - s0.x) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * s0.theta + h10 * h * s0.dtheta + h01 * s1.theta + h11 * h * s1.dtheta
    }
}

struct PruferSystem<'a> {
    spec: &'a PotentialSpec,
    energy: f64,
    offset: f64,
    sign: f64,
}

impl OdeSystem<4> for PruferSystem<'_> {
    #[inline]
    fn rhs(&self, x: f64, y: &[f64; 4]) -> [f64; 4] {
        let (v, dv) = self.spec.evaluate_with_derivative(x, self.offset);
        let k = self.energy - v;
        let (s, c) = y[0].sin_cos();
        let s2 = s * s;
        let dlr = (1.0 - k) * s * c;
        [
            c * c + k * s2,
            dlr,
            self.sign * s2 - 2.0 * dlr * y[2],
            self.sign * s2 * dv - 2.0 * dlr * y[3],
        ]
    }
}

struct AngleSystem<'a> {
    spec: &'a PotentialSpec,
    energy: f64,
    offset: f64,
}

impl OdeSystem<1> for AngleSystem<'_> {
    #[inline]
    fn rhs(&self, x: f64, y: &[f64; 1]) -> [f64; 1] {
        let k = self.energy - self.spec.evaluate(x, self.offset);
        let (s, c) = y[0].sin_cos();
        [c * c + k * s * s]
    }
}

fn check_inputs(energy: f64, x_start: f64, x_end: f64) -> Result<()> {
    if !energy.is_finite() {
        return Err(Error::InvalidInput(format!("energy {energy} is not finite")));
    }
    if !(x_start.is_finite() && x_end.is_finite()) || x_start == x_end {
        return Err(Error::InvalidInput(format!(
            "integration interval [{x_start}, {x_end}] is degenerate"
        )));
    }
    Ok(())
}

/// Full Prüfer trace from `x_start` to `x_end` (either direction) with
/// `θ(x_start) = theta_start` and `ln r(x_start) = 0`.
pub fn integrate(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    x_start: f64,
    x_end: f64,
    theta_start: f64,
) -> Result<SolutionTrace> {
    integrate_with(
        spec,
        energy,
        offset,
        x_start,
        x_end,
        theta_start,
        &IntegratorConfig::default(),
    )
}

pub fn integrate_with(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    x_start: f64,
    x_end: f64,
    theta_start: f64,
    config: &IntegratorConfig,
) -> Result<SolutionTrace> {
    check_inputs(energy, x_start, x_end)?;
    let direction = if x_end > x_start {
        Direction::Forward
    } else {
        Direction::Backward
    };
    let system = PruferSystem {
        spec,
        energy,
        offset,
        sign: direction.sign(),
    };
    let mut states = Vec::new();
    let end = ode::integrate(
        &system,
        x_start,
        x_end,
        [theta_start, 0.0, 0.0, 0.0],
        &config.options(spec, energy),
        |x, y, dy| {
            states.push(PruferState {
                x,
                theta: y[0],
                log_amplitude: y[1],
                dtheta: dy[0],
            })
        },
    )?;
    Ok(SolutionTrace {
        states,
        energy,
        offset,
        direction,
        norm_ratio: end[2],
        force_ratio: end[3],
    })
}

/// θ at `x_end` only, without storing the trace or the auxiliary quadratures.
pub fn theta_endpoint(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    x_start: f64,
    x_end: f64,
    theta_start: f64,
    config: &IntegratorConfig,
) -> Result<f64> {
    check_inputs(energy, x_start, x_end)?;
    let system = AngleSystem {
        spec,
        energy,
        offset,
    };
    let end = ode::integrate(
        &system,
        x_start,
        x_end,
        [theta_start],
        &config.options(spec, energy),
        |_, _, _| {},
    )?;
    Ok(end[0])
}

/// θ at each of the ascending `checkpoints`, from one forward integration.
pub fn theta_at_checkpoints(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    x_start: f64,
    theta_start: f64,
    checkpoints: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<f64>> {
    let system = AngleSystem {
        spec,
        energy,
        offset,
    };
    let options = config.options(spec, energy);
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut x = x_start;
    let mut theta = theta_start;
    for &c in checkpoints {
        if c < x {
            return Err(Error::InvalidInput(
                "checkpoints must be ascending and after the start".into(),
            ));
        }
        if c > x {
            theta = ode::integrate(&system, x, c, [theta], &options, |_, _, _| {})?[0];
            x = c;
        }
        out.push(theta);
    }
    Ok(out)
}

fn decay_rate(spec: &PotentialSpec, energy: f64, window_from: f64, offset: f64) -> f64 {
    let vbar = spec.window_average(window_from, SEED_AVERAGE_WIDTH, offset);
    (vbar - energy).max(0.0).sqrt().max(KAPPA_MIN)
}

/// Seed angle at `x = −L` for the solution decaying at −∞: `θ = atan(1/κ)`.
pub fn seed_decaying_left(spec: &PotentialSpec, energy: f64, offset: f64, truncation: f64) -> f64 {
    let kappa = decay_rate(spec, energy, -truncation, offset);
    (1.0 / kappa).atan()
}

/// Seed angle at `x = +L` for the solution decaying at +∞: `θ = −atan(1/κ)`.
pub fn seed_decaying_right(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    truncation: f64,
) -> f64 {
    let kappa = decay_rate(spec, energy, truncation - SEED_AVERAGE_WIDTH, offset);
    -(1.0 / kappa).atan()
}

/// Values of Ψ− (or Ψ+) at the boundary point `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryData {
    /// `sin θ(0)`; vanishes exactly at Dirichlet values.
    pub sin_theta: f64,
    /// Continuous lift `θ(0)`.
    pub theta: f64,
    /// `Ψ'(0)` for Ψ normalised to unit norm on the half-line window.
    pub dpsi_normalized: f64,
    /// `∫Ψ² / r(0)²`; equals `|∂θ(0)/∂E|` up to the exponentially small seed term.
    pub norm_ratio: f64,
    /// `∫Ψ² V'_ξ / ∫Ψ²`.
    pub force_expectation: f64,
    /// Share of `∫Ψ²` within a quarter of the truncation length of the
    /// boundary point.
    pub near_mass: f64,
}

/// Integrates from `start` through `start + 3(0 − start)/4` to 0 and
/// merges the auxiliary quadratures of the two legs.
fn boundary_split(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    start: f64,
    seed: f64,
    config: &IntegratorConfig,
) -> Result<BoundaryData> {
    check_inputs(energy, start, 0.0)?;
    let sign = if start < 0.0 { 1.0 } else { -1.0 };
    let system = PruferSystem {
        spec,
        energy,
        offset,
        sign,
    };
    let options = config.options(spec, energy);
    let split = 0.25 * start;
    let far = ode::integrate(&system, start, split, [seed, 0.0, 0.0, 0.0], &options, |_, _, _| {})?;
    let near = ode::integrate(&system, split, 0.0, [far[0], 0.0, 0.0, 0.0], &options, |_, _, _| {})?;
    // the far leg is scaled by r(split)², the near leg by r(0)²
    let rescale = (-2.0 * near[1]).exp();
    let far_q = far[2] * rescale;
    let q = far_q + near[2];
    let p = far[3] * rescale + near[3];
    let theta = near[0];
    Ok(BoundaryData {
        sin_theta: theta.sin(),
        theta,
        dpsi_normalized: theta.cos() / q.sqrt(),
        norm_ratio: q,
        force_expectation: p / q,
        near_mass: near[2] / q,
    })
}

/// Integrates Ψ− from `−L` to `0` and reports its boundary data.
pub fn boundary_data(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    truncation: f64,
) -> Result<BoundaryData> {
    boundary_data_with(spec, energy, offset, truncation, &IntegratorConfig::default())
}

pub fn boundary_data_with(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    truncation: f64,
    config: &IntegratorConfig,
) -> Result<BoundaryData> {
    let seed = seed_decaying_left(spec, energy, offset, truncation);
    boundary_split(spec, energy, offset, -truncation, seed, config)
}

/// Integrates Ψ+ backward from `+L` to `0` and reports its boundary data.
/// Here θ(0) is decreasing in E.
pub fn left_boundary_data(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    truncation: f64,
) -> Result<BoundaryData> {
    left_boundary_data_with(spec, energy, offset, truncation, &IntegratorConfig::default())
}

pub fn left_boundary_data_with(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    truncation: f64,
    config: &IntegratorConfig,
) -> Result<BoundaryData> {
    let seed = seed_decaying_right(spec, energy, offset, truncation);
    boundary_split(spec, energy, offset, truncation, seed, config)
}

/// `⌊θ/π⌋` with a relative snap so that angles a few ulps below `kπ` count as `kπ`.
pub fn crossings_below(theta: f64) -> i64 {
    (theta / PI + 1e-9).floor() as i64
}

/// Zeros of Ψ in `(x_from, x_to]`, read off the θ lift: θ crosses each
/// multiple of π exactly once and only upward.
pub fn count_zeros(trace: &SolutionTrace, x_from: f64, x_to: f64) -> u64 {
    let (lo, hi) = if x_from <= x_to {
        (x_from, x_to)
    } else {
        (x_to, x_from)
    };
    if lo == hi {
        return 0;
    }
    let n = crossings_below(trace.theta_at(hi)) - crossings_below(trace.theta_at(lo));
    n.max(0) as u64
}

/// Max relative spread of the Wronskian `Ψ+Ψ−' − Ψ+'Ψ−` over sample points in
/// `[−L/2, L/2]`, together with its mean value at unit amplitude at x = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WronskianReport {
    pub spread: f64,
    pub value: f64,
}

pub fn wronskian_check(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    truncation: f64,
) -> Result<WronskianReport> {
    const SAMPLES: usize = 9;
    let points: Vec<f64> = (0..SAMPLES)
        .map(|i| -0.5 * truncation + truncation * i as f64 / (SAMPLES - 1) as f64)
        .collect();
    let reversed: Vec<f64> = points.iter().rev().copied().collect();
    let config = IntegratorConfig::default();
    let minus = states_at_checkpoints(
        spec,
        energy,
        offset,
        -truncation,
        seed_decaying_left(spec, energy, offset, truncation),
        &points,
        &config,
    )?;
    let mut plus = states_at_checkpoints(
        spec,
        energy,
        offset,
        truncation,
        seed_decaying_right(spec, energy, offset, truncation),
        &reversed,
        &config,
    )?;
    plus.reverse();
    // normalise both amplitudes at the middle sample
    let mid = SAMPLES / 2;
    let (lm0, lp0) = (minus[mid].log_amplitude, plus[mid].log_amplitude);
    let values: Vec<f64> = minus
        .iter()
        .zip(&plus)
        .map(|(m, p)| {
            // W = r+ r− (sin θ+ cos θ− − cos θ+ sin θ−) = r+ r− sin(θ+ − θ−)
            let scale = ((m.log_amplitude - lm0) + (p.log_amplitude - lp0)).exp();
            scale * (p.theta - m.theta).sin()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / SAMPLES as f64;
    let spread = values
        .iter()
        .map(|w| ((w - mean) / mean).abs())
        .fold(0.0, f64::max);
    Ok(WronskianReport {
        spread,
        value: mean,
    })
}

/// Full Prüfer states at each checkpoint, visited in the given order starting
/// from `x_start` with `ln r = 0`.
pub fn states_at_checkpoints(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    x_start: f64,
    theta_start: f64,
    checkpoints: &[f64],
    config: &IntegratorConfig,
) -> Result<Vec<PruferState>> {
    let mut x = x_start;
    let mut y = [theta_start, 0.0, 0.0, 0.0];
    let options = config.options(spec, energy);
    let mut out = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        let sign = if c >= x { 1.0 } else { -1.0 };
        let system = PruferSystem {
            spec,
            energy,
            offset,
            sign,
        };
        let mut dtheta = system.rhs(x, &y)[0];
        if c != x {
            y = ode::integrate(&system, x, c, y, &options, |_, _, dy| dtheta = dy[0])?;
            x = c;
        }
        out.push(PruferState {
            x,
            theta: y[0],
            log_amplitude: y[1],
            dtheta,
        });
    }
    Ok(out)
}
