//! Right and left Dirichlet values in a gap, their spectral flow in ξ, the
//! circle map μ̃ and the Dirichlet rotation number β.
//!
//! A right Dirichlet value of `H_ξ` is an energy `μ` in the gap with
//! `Ψ−(0) = 0`, i.e. `θ−(0; μ, ξ) ∈ πℤ`; left values use Ψ+ instead.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{PotentialSpec, WindowChain};
use crate::prufer::{self, crossings_below, IntegratorConfig};
use crate::rotation::{self, LambdaMean};
use crate::spectrum::Gap;

/// Largest curve displacement per ξ step, as a fraction of the gap width.
pub const MAX_STEP_FRACTION: f64 = 0.2;

/// Curves may appear or vanish only this close to an edge (fraction of the
/// gap width).
pub const EDGE_EVENT_FRACTION: f64 = 0.1;

/// Step halvings tried before a continuation failure is reported.
pub const MAX_HALVINGS: usize = 10;

/// Consecutive lift samples may differ by at most this much.
pub const MAX_PHASE_JUMP: f64 = 0.8 * PI;

/// Roots whose Ψ keeps less than this share of its mass within a quarter of
/// the truncation length of the boundary are artefacts of the truncation.
pub const SPURIOUS_MASS: f64 = 0.5;

const SPURIOUS_SINE: f64 = 1e-8;
const ROOT_FTOL: f64 = 1e-11;
const ROOT_XTOL: f64 = 1e-12;
const CHUNK: usize = 64;
const JUMP_BRACKET: f64 = 0.05;
const JUMP_RESIDUAL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Ψ− on `(−∞, 0]`.
    Right,
    /// Ψ+ on `[0, ∞)`.
    Left,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Right => "right",
            Side::Left => "left",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowEvent {
    EntersFromUpperEdge,
    EntersFromLowerEdge,
    ExitsLowerEdge,
    ExitsUpperEdge,
    /// Alive at the start or end of the sweep.
    Persists,
}

/// A Dirichlet value with its flow velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletValue {
    pub mu: f64,
    /// `∓|Ψ'(0)|²` with Ψ normalised on the half-line window.
    pub slope: f64,
    /// `⟨Ψ, V'_ξ Ψ⟩ / ⟨Ψ, Ψ⟩`.
    pub force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowPoint {
    pub xi: f64,
    pub mu: f64,
    pub slope: f64,
    pub force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCurve {
    pub id: usize,
    pub side: Side,
    pub gap: Gap,
    pub samples: Vec<FlowPoint>,
    pub entry: FlowEvent,
    pub exit: FlowEvent,
    /// Linear extension of the curve to the edge it entered through.
    pub entry_edge: Option<(f64, f64)>,
    /// Linear extension of the curve to the edge it left through.
    pub exit_edge: Option<(f64, f64)>,
}

impl DirichletCurve {
    /// Samples with the edge extensions prepended and appended.
    pub fn extended(&self) -> Vec<(f64, f64)> {
        self.entry_edge
            .into_iter()
            .chain(self.samples.iter().map(|p| (p.xi, p.mu)))
            .chain(self.exit_edge)
            .collect()
    }

    /// `[ξ_first, ξ_last]` of the extended curve.
    pub fn extent(&self) -> (f64, f64) {
        let ext = self.extended();
        (ext[0].0, ext[ext.len() - 1].0)
    }

    /// μ on the extended curve by linear interpolation, `None` outside it.
    pub fn mu_at(&self, xi: f64) -> Option<f64> {
        interpolate(&self.extended(), xi)
    }

    pub fn is_monotone(&self) -> bool {
        self.samples.windows(2).all(|w| match self.side {
            Side::Right => w[1].mu < w[0].mu,
            Side::Left => w[1].mu > w[0].mu,
        })
    }
}

fn interpolate(points: &[(f64, f64)], xi: f64) -> Option<f64> {
    let n = points.len();
    if n == 0 || xi < points[0].0 || xi > points[n - 1].0 {
        return None;
    }
    let k = points.partition_point(|p| p.0 < xi);
    if k == 0 {
        return Some(points[0].1);
    }
    let (x0, y0) = points[k - 1];
    let (x1, y1) = points[k];
    if x1 == x0 {
        return Some(y1);
    }
    Some(y0 + (y1 - y0) * (xi - x0) / (x1 - x0))
}

/// All Dirichlet values of one side at one ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub xi: f64,
    pub values: Vec<DirichletValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub side: Side,
    pub gap: Gap,
    pub truncation: f64,
    pub xi_from: f64,
    pub xi_to: f64,
    /// Nominal step; refined locally where needed.
    pub dxi: f64,
    pub samples: Vec<FlowSample>,
    pub curves: Vec<DirichletCurve>,
    /// Largest number of values seen at one ξ.
    pub max_values: usize,
}

impl Flow {
    pub fn curves_of(&self) -> &[DirichletCurve] {
        &self.curves
    }
}

fn boundary(
    spec: &PotentialSpec,
    side: Side,
    energy: f64,
    xi: f64,
    truncation: f64,
    config: &IntegratorConfig,
) -> Result<prufer::BoundaryData> {
    match side {
        Side::Right => prufer::boundary_data_with(spec, energy, xi, truncation, config),
        Side::Left => prufer::left_boundary_data_with(spec, energy, xi, truncation, config),
    }
}

/// Boundary angle only, increasing in E for either side (Ψ+'s angle negated).
fn oriented_angle(
    spec: &PotentialSpec,
    side: Side,
    energy: f64,
    xi: f64,
    truncation: f64,
    config: &IntegratorConfig,
) -> Result<f64> {
    Ok(match side {
        Side::Right => {
            let seed = prufer::seed_decaying_left(spec, energy, xi, truncation);
            prufer::theta_endpoint(spec, energy, xi, -truncation, 0.0, seed, config)?
        }
        Side::Left => {
            let seed = prufer::seed_decaying_right(spec, energy, xi, truncation);
            -prufer::theta_endpoint(spec, energy, xi, truncation, 0.0, seed, config)?
        }
    })
}

/// Dirichlet values in `[lower + δ, upper − δ]`, ascending. Ascending
/// `guesses` seed the Newton iterations.
pub fn dirichlet_values_near(
    spec: &PotentialSpec,
    side: Side,
    gap: &Gap,
    xi: f64,
    truncation: f64,
    guesses: &[f64],
) -> Result<Vec<DirichletValue>> {
    let config = IntegratorConfig::default();
    let (e_lo, e_hi) = gap.interior();
    let eval = |e: f64| boundary(spec, side, e, xi, truncation, &config);
    let orient = match side {
        Side::Right => 1.0,
        Side::Left => -1.0,
    };
    let b_lo = eval(e_lo)?;
    let b_hi = eval(e_hi)?;
    let first = crossings_below(orient * b_lo.theta) + 1;
    let last = crossings_below(orient * b_hi.theta);
    let count = (last - first + 1).max(0) as usize;
    let mut out = Vec::with_capacity(count);
    let mut pending = guesses.iter().copied().peekable();
    let mut lo = (e_lo, b_lo);
    for k in first..=last {
        while pending.next_if(|&g| g <= lo.0).is_some() {}
        let crossing = solve_crossing(
            &eval,
            orient,
            k as f64 * PI,
            lo,
            (e_hi, b_hi),
            pending.peek().copied(),
            gap.width(),
        )
        .map_err(|e| e.context(format!("{} Dirichlet value at xi = {xi}", side.as_str())))?;
        let (mu, b) = match crossing {
            Crossing::Root(mu, b) => (mu, b),
            Crossing::Jump(above) => {
                lo = above;
                continue;
            }
        };
        lo = (mu, b);
        // crossings of the truncated problem that live at the far end
        if b.near_mass < SPURIOUS_MASS || b.sin_theta.abs() > SPURIOUS_SINE {
            continue;
        }
        pending.next();
        let psi2 = b.dpsi_normalized * b.dpsi_normalized;
        out.push(DirichletValue {
            mu,
            slope: -orient * psi2,
            force: b.force_expectation,
        });
    }
    Ok(out)
}

enum Crossing {
    Root(f64, prufer::BoundaryData),
    /// The angle passes the target by a jump narrower than the energy
    /// resolution; carries the bracket end above it.
    Jump((f64, prufer::BoundaryData)),
}

/// Locates the energy where `orient·θ(0)` passes `target` inside `(lo, hi)`.
fn solve_crossing<F>(
    eval: &F,
    orient: f64,
    target: f64,
    mut lo: (f64, prufer::BoundaryData),
    mut hi: (f64, prufer::BoundaryData),
    guess: Option<f64>,
    scale: f64,
) -> Result<Crossing>
where
    F: Fn(f64) -> Result<prufer::BoundaryData>,
{
    let g = |b: &prufer::BoundaryData| orient * b.theta - target;
    let newton_from = |p: &(f64, prufer::BoundaryData)| p.0 - g(&p.1) / p.1.norm_ratio;
    let mut x = match guess {
        Some(x) if x > lo.0 && x < hi.0 => x,
        _ => 0.5 * (lo.0 + hi.0),
    };
    let mut last_step = hi.0 - lo.0;
    for _ in 0..200 {
        let width = hi.0 - lo.0;
        // both one-sided Newton predictions overshoot the bracket: the angle
        // is flat on either side and the crossing is a jump
        if width < JUMP_BRACKET * scale
            && newton_from(&lo) > hi.0 + width
            && newton_from(&hi) < lo.0 - width
        {
            return Ok(Crossing::Jump(hi));
        }
        let b = eval(x)?;
        let gx = g(&b);
        if gx.abs() <= ROOT_FTOL {
            return Ok(Crossing::Root(x, b));
        }
        let newton = if b.norm_ratio > 0.0 { x - gx / b.norm_ratio } else { f64::NAN };
        if gx < 0.0 {
            lo = (x, b);
        } else {
            hi = (x, b);
        }
        if hi.0 - lo.0 <= ROOT_XTOL {
            let (lo_g, hi_g) = (g(&lo.1).abs(), g(&hi.1).abs());
            if lo_g.min(hi_g) > JUMP_RESIDUAL {
                return Ok(Crossing::Jump(hi));
            }
            return Ok(if lo_g < hi_g {
                Crossing::Root(lo.0, lo.1)
            } else {
                Crossing::Root(hi.0, hi.1)
            });
        }
        let step = (newton - x).abs();
        x = if newton > lo.0 && newton < hi.0 && step <= 0.5 * last_step {
            newton
        } else {
            0.5 * (lo.0 + hi.0)
        };
        last_step = step.min(hi.0 - lo.0);
    }
    Err(Error::Refinement {
        lo: lo.0,
        hi: hi.0,
        reason: "no convergence after 200 iterations".into(),
    })
}

/// Energies with `Ψ−(0) = 0` inside the gap interior, ascending.
pub fn right_dirichlet_values(
    spec: &PotentialSpec,
    xi: f64,
    gap: &Gap,
    truncation: f64,
) -> Result<Vec<f64>> {
    Ok(dirichlet_values_near(spec, Side::Right, gap, xi, truncation, &[])?
        .into_iter()
        .map(|v| v.mu)
        .collect())
}

/// Energies with `Ψ+(0) = 0` inside the gap interior, ascending.
pub fn left_dirichlet_values(
    spec: &PotentialSpec,
    xi: f64,
    gap: &Gap,
    truncation: f64,
) -> Result<Vec<f64>> {
    Ok(dirichlet_values_near(spec, Side::Left, gap, xi, truncation, &[])?
        .into_iter()
        .map(|v| v.mu)
        .collect())
}

struct Builder {
    id: usize,
    samples: Vec<FlowPoint>,
    entry: FlowEvent,
    entry_edge: Option<(f64, f64)>,
    exit: Option<(FlowEvent, Option<(f64, f64)>)>,
}

/// Why a step could not be continued.
enum StepIssue {
    Ambiguous,
    TooFar,
    Unexplained,
}

struct Tracer<'a> {
    spec: &'a PotentialSpec,
    side: Side,
    gap: Gap,
    truncation: f64,
}

impl Tracer<'_> {
    fn solve(&self, xi: f64, guesses: &[f64]) -> Result<FlowSample> {
        let values =
            dirichlet_values_near(self.spec, self.side, &self.gap, xi, self.truncation, guesses)?;
        Ok(FlowSample { xi, values })
    }

    fn predictions(prev: &FlowSample, xi: f64) -> Vec<f64> {
        prev.values
            .iter()
            .map(|v| v.mu + v.slope * (xi - prev.xi))
            .collect()
    }

    fn near_entry_edge(&self, mu: f64) -> bool {
        let w = self.gap.width();
        match self.side {
            Side::Right => self.gap.upper - mu <= EDGE_EVENT_FRACTION * w,
            Side::Left => mu - self.gap.lower <= EDGE_EVENT_FRACTION * w,
        }
    }

    fn near_exit_edge(&self, mu: f64) -> bool {
        let w = self.gap.width();
        match self.side {
            Side::Right => mu - self.gap.lower <= EDGE_EVENT_FRACTION * w,
            Side::Left => self.gap.upper - mu <= EDGE_EVENT_FRACTION * w,
        }
    }

    /// Order-preserving match of `prev` values to `next` values; `None` marks
    /// an exited curve.
    fn match_step(
        &self,
        prev: &FlowSample,
        next: &FlowSample,
    ) -> std::result::Result<Vec<Option<usize>>, StepIssue> {
        let w = self.gap.width();
        let dxi = next.xi - prev.xi;
        let pred = Self::predictions(prev, next.xi);
        let tol: Vec<f64> = prev
            .values
            .iter()
            .map(|v| (4.0 * (v.slope * dxi).abs()).max(1e-3 * w).min(MAX_STEP_FRACTION * w))
            .collect();
        let mut assignment = vec![None; prev.values.len()];
        let mut taken = vec![false; next.values.len()];
        for (i, p) in pred.iter().enumerate() {
            let candidates: Vec<usize> = (0..next.values.len())
                .filter(|&j| (next.values[j].mu - p).abs() <= tol[i])
                .collect();
            let monotone = |j: &usize| {
                let (old, new) = (prev.values[i].mu, next.values[*j].mu);
                match self.side {
                    Side::Right => new < old,
                    Side::Left => new > old,
                }
            };
            let chosen = match candidates.len() {
                0 => None,
                1 => Some(candidates[0]),
                _ => {
                    let good: Vec<usize> = candidates.iter().copied().filter(monotone).collect();
                    if good.len() != 1 {
                        return Err(StepIssue::Ambiguous);
                    }
                    Some(good[0])
                }
            };
            match chosen {
                Some(j) => {
                    if taken[j] || !monotone(&j) {
                        return Err(StepIssue::Ambiguous);
                    }
                    if (next.values[j].mu - prev.values[i].mu).abs() > MAX_STEP_FRACTION * w {
                        return Err(StepIssue::TooFar);
                    }
                    taken[j] = true;
                    assignment[i] = Some(j);
                }
                None => {
                    if !self.near_exit_edge(prev.values[i].mu) {
                        return Err(StepIssue::Unexplained);
                    }
                }
            }
        }
        let order_kept = assignment
            .iter()
            .flatten()
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[0] < w[1]);
        if !order_kept {
            return Err(StepIssue::Ambiguous);
        }
        for (j, used) in taken.iter().enumerate() {
            if !used && !self.near_entry_edge(next.values[j].mu) {
                return Err(StepIssue::Unexplained);
            }
        }
        Ok(assignment)
    }

    /// Continues from `prev` to `target`, halving the step where needed.
    /// Returns the accepted samples after `prev` with their assignments.
    fn advance(
        &self,
        prev: &FlowSample,
        target: FlowSample,
        depth: usize,
        out: &mut Vec<(FlowSample, Vec<Option<usize>>)>,
    ) -> Result<()> {
        match self.match_step(prev, &target) {
            Ok(assignment) => {
                out.push((target, assignment));
                Ok(())
            }
            Err(issue) => {
                if depth >= MAX_HALVINGS {
                    return Err(match issue {
                        StepIssue::Ambiguous | StepIssue::TooFar | StepIssue::Unexplained => {
                            Error::AmbiguousContinuation {
                                xi: target.xi,
                                halvings: depth,
                            }
                        }
                    });
                }
                let mid_xi = 0.5 * (prev.xi + target.xi);
                let mid = self.solve(mid_xi, &Self::predictions(prev, mid_xi))?;
                self.advance(prev, mid, depth + 1, out)?;
                let last = out.last().expect("just pushed").0.clone();
                self.advance(&last, target, depth + 1, out)
            }
        }
    }
}

/// Traces the Dirichlet values of one side through `[xi_from, xi_to]` and
/// assembles them into monotone curves.
pub fn trace_flow(
    spec: &PotentialSpec,
    gap: &Gap,
    xi_from: f64,
    xi_to: f64,
    dxi: f64,
    truncation: f64,
    side: Side,
) -> Result<Flow> {
    if !(xi_to > xi_from) || !(dxi > 0.0) || !(truncation > 0.0) {
        return Err(Error::InvalidInput(format!(
            "flow sweep [{xi_from}, {xi_to}] with step {dxi} and truncation {truncation}"
        )));
    }
    let tracer = Tracer {
        spec,
        side,
        gap: *gap,
        truncation,
    };
    let steps = ((xi_to - xi_from) / dxi).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|k| {
            if k == steps {
                xi_to
            } else {
                xi_from + k as f64 * dxi
            }
        })
        .collect();

    // independent chunks, warm-started within each chunk
    let nominal: Vec<FlowSample> = grid
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut out: Vec<FlowSample> = Vec::with_capacity(chunk.len());
            for &xi in chunk {
                let guesses = out
                    .last()
                    .map(|p| Tracer::predictions(p, xi))
                    .unwrap_or_default();
                out.push(tracer.solve(xi, &guesses)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let mut samples = vec![nominal[0].clone()];
    let mut curves: Vec<Builder> = Vec::new();
    let mut active: Vec<usize> = Vec::new();
    for v in &nominal[0].values {
        active.push(curves.len());
        curves.push(Builder {
            id: curves.len(),
            samples: vec![point(nominal[0].xi, v)],
            entry: FlowEvent::Persists,
            entry_edge: None,
            exit: None,
        });
    }

    let edge_point = |p: &FlowPoint, edge: f64, bound: f64| -> (f64, f64) {
        let xi = if p.slope != 0.0 {
            p.xi + (edge - p.mu) / p.slope
        } else {
            bound
        };
        let xi = if bound > p.xi {
            xi.clamp(p.xi, bound)
        } else {
            xi.clamp(bound, p.xi)
        };
        (xi, edge)
    };
    let (entry_level, exit_level) = match side {
        Side::Right => (gap.upper, gap.lower),
        Side::Left => (gap.lower, gap.upper),
    };

    let mut max_values = nominal[0].values.len();
    for target in nominal.into_iter().skip(1) {
        let mut accepted = Vec::new();
        let prev = samples.last().expect("non-empty").clone();
        tracer.advance(&prev, target, 0, &mut accepted)?;
        for (next, assignment) in accepted {
            let prev = samples.last().expect("non-empty");
            let mut next_active = vec![usize::MAX; next.values.len()];
            for (i, a) in assignment.iter().enumerate() {
                let c = active[i];
                match a {
                    Some(j) => {
                        curves[c].samples.push(point(next.xi, &next.values[*j]));
                        next_active[*j] = c;
                    }
                    None => {
                        let last = *curves[c].samples.last().expect("non-empty");
                        let event = match side {
                            Side::Right => FlowEvent::ExitsLowerEdge,
                            Side::Left => FlowEvent::ExitsUpperEdge,
                        };
                        curves[c].exit = Some((event, Some(edge_point(&last, exit_level, next.xi))));
                    }
                }
            }
            for (j, slot) in next_active.iter_mut().enumerate() {
                if *slot == usize::MAX {
                    let p = point(next.xi, &next.values[j]);
                    let event = match side {
                        Side::Right => FlowEvent::EntersFromUpperEdge,
                        Side::Left => FlowEvent::EntersFromLowerEdge,
                    };
                    *slot = curves.len();
                    curves.push(Builder {
                        id: curves.len(),
                        samples: vec![p],
                        entry: event,
                        entry_edge: Some(edge_point(&p, entry_level, prev.xi)),
                        exit: None,
                    });
                }
            }
            max_values = max_values.max(next.values.len());
            active = next_active;
            samples.push(next);
        }
    }

    let curves = curves
        .into_iter()
        .map(|b| {
            let (exit, exit_edge) = b.exit.unwrap_or((FlowEvent::Persists, None));
            DirichletCurve {
                id: b.id,
                side,
                gap: *gap,
                samples: b.samples,
                entry: b.entry,
                exit,
                entry_edge: b.entry_edge,
                exit_edge,
            }
        })
        .collect();
    Ok(Flow {
        side,
        gap: *gap,
        truncation,
        xi_from,
        xi_to,
        dxi,
        samples,
        curves,
        max_values,
    })
}

fn point(xi: f64, v: &DirichletValue) -> FlowPoint {
    FlowPoint {
        xi,
        mu: v.mu,
        slope: v.slope,
        force: v.force,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub xi: f64,
    pub mu: f64,
    /// Three-point difference of the curve samples.
    pub finite_difference: f64,
    /// `∓|Ψ'(0)|²`.
    pub analytic: f64,
    /// `⟨V'_ξ⟩`.
    pub hellmann_feynman: f64,
}

impl DerivativeCheck {
    pub fn relative_error(&self) -> f64 {
        ((self.finite_difference - self.analytic) / self.analytic).abs()
    }
}

/// Compares the curve's difference quotient at an interior sample with the
/// boundary-derivative formula, re-evaluated at `(ξ, μ)`.
pub fn flow_derivative_check(
    spec: &PotentialSpec,
    curve: &DirichletCurve,
    index: usize,
    truncation: f64,
) -> Result<DerivativeCheck> {
    if index == 0 || index + 1 >= curve.samples.len() {
        return Err(Error::InvalidInput(format!(
            "sample {index} is not interior to a curve of {} samples",
            curve.samples.len()
        )));
    }
    let (a, b, c) = (
        curve.samples[index - 1],
        curve.samples[index],
        curve.samples[index + 1],
    );
    let (h1, h2) = (b.xi - a.xi, c.xi - b.xi);
    let fd = -h2 / (h1 * (h1 + h2)) * a.mu + (h2 - h1) / (h1 * h2) * b.mu
        + h1 / (h2 * (h1 + h2)) * c.mu;
    let data = boundary(
        spec,
        curve.side,
        b.mu,
        b.xi,
        truncation,
        &IntegratorConfig::default(),
    )?;
    let psi2 = data.dpsi_normalized * data.dpsi_normalized;
    Ok(DerivativeCheck {
        xi: b.xi,
        mu: b.mu,
        finite_difference: fd,
        analytic: match curve.side {
            Side::Right => -psi2,
            Side::Left => psi2,
        },
        hellmann_feynman: data.force_expectation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuTildeVariant {
    RightOnly,
    TwoSided,
}

impl MuTildeVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            MuTildeVariant::RightOnly => "right_only",
            MuTildeVariant::TwoSided => "two_sided",
        }
    }
}

fn phase_contribution(gap: &Gap, side: Side, mu: f64, variant: MuTildeVariant) -> f64 {
    let x = (mu - gap.base()) / gap.width();
    match (variant, side) {
        (MuTildeVariant::RightOnly, Side::Right) => TAU * x,
        (MuTildeVariant::RightOnly, Side::Left) => 0.0,
        (MuTildeVariant::TwoSided, Side::Right) => PI * x,
        (MuTildeVariant::TwoSided, Side::Left) => -PI * x,
    }
}

/// μ̃ from given right and left Dirichlet values.
pub fn mu_tilde_from_values(
    gap: &Gap,
    right: &[f64],
    left: &[f64],
    variant: MuTildeVariant,
) -> Complex64 {
    let phase: f64 = right
        .iter()
        .map(|&m| phase_contribution(gap, Side::Right, m, variant))
        .chain(
            left.iter()
                .map(|&m| phase_contribution(gap, Side::Left, m, variant)),
        )
        .sum();
    Complex64::from_polar(1.0, phase)
}

/// μ̃(ξ) from freshly computed Dirichlet values.
pub fn mu_tilde(
    spec: &PotentialSpec,
    gap: &Gap,
    xi: f64,
    truncation: f64,
    variant: MuTildeVariant,
) -> Result<Complex64> {
    let right = right_dirichlet_values(spec, xi, gap, truncation)?;
    let left = match variant {
        MuTildeVariant::RightOnly => Vec::new(),
        MuTildeVariant::TwoSided => left_dirichlet_values(spec, xi, gap, truncation)?,
    };
    Ok(mu_tilde_from_values(gap, &right, &left, variant))
}

/// One point of the continuous lift of `arg μ̃`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleSample {
    pub xi: f64,
    pub phase: f64,
}

/// Curves of the other side whose edge event is within `window` of this
/// one's are moved to the common mean, so that paired events (a right value
/// entering where a left value leaves) change μ̃ at a single ξ.
fn paired_curves(
    right: &[DirichletCurve],
    left: &[DirichletCurve],
    window: f64,
) -> (Vec<DirichletCurve>, Vec<DirichletCurve>) {
    let mut right = right.to_vec();
    let mut left = left.to_vec();
    let mut used = vec![false; left.len()];
    for r in right.iter_mut() {
        let Some((xr, _)) = r.entry_edge else { continue };
        let best = left
            .iter()
            .enumerate()
            .filter(|(k, l)| !used[*k] && l.exit == FlowEvent::ExitsUpperEdge)
            .filter_map(|(k, l)| l.exit_edge.map(|(xl, _)| (k, xl)))
            .filter(|(_, xl)| (xl - xr).abs() <= window)
            .min_by(|a, b| (a.1 - xr).abs().total_cmp(&(b.1 - xr).abs()));
        if let Some((k, xl)) = best {
            let m = 0.5 * (xl + xr);
            used[k] = true;
            r.entry_edge = r.entry_edge.map(|(_, mu)| (m.min(r.samples[0].xi), mu));
            let l = &mut left[k];
            let last = l.samples[l.samples.len() - 1].xi;
            l.exit_edge = l.exit_edge.map(|(_, mu)| (m.max(last), mu));
        }
    }
    let mut used = vec![false; right.len()];
    for l in left.iter_mut() {
        let Some((xl, _)) = l.entry_edge else { continue };
        let best = right
            .iter()
            .enumerate()
            .filter(|(k, r)| !used[*k] && r.exit == FlowEvent::ExitsLowerEdge)
            .filter_map(|(k, r)| r.exit_edge.map(|(xr, _)| (k, xr)))
            .filter(|(_, xr)| (xr - xl).abs() <= window)
            .min_by(|a, b| (a.1 - xl).abs().total_cmp(&(b.1 - xl).abs()));
        if let Some((k, xr)) = best {
            let m = 0.5 * (xl + xr);
            used[k] = true;
            l.entry_edge = l.entry_edge.map(|(_, mu)| (m.min(l.samples[0].xi), mu));
            let r = &mut right[k];
            let last = r.samples[r.samples.len() - 1].xi;
            r.exit_edge = r.exit_edge.map(|(_, mu)| (m.max(last), mu));
        }
    }
    (right, left)
}

/// Wrapped phase of μ̃ at `xi` from the extended curves alive there.
fn wrapped_phase(
    gap: &Gap,
    curves: &[&DirichletCurve],
    xi: f64,
    variant: MuTildeVariant,
) -> f64 {
    curves
        .iter()
        .filter_map(|c| c.mu_at(xi).map(|mu| phase_contribution(gap, c.side, mu, variant)))
        .sum()
}

/// Continuous lift of `arg μ̃` over the sweep, assembled sample to sample
/// with minimal jumps. Edge events are placed on the linear extensions of
/// the curves.
pub fn phase_lift(
    right: &Flow,
    left: Option<&Flow>,
    variant: MuTildeVariant,
) -> Result<Vec<CircleSample>> {
    let gap = right.gap;
    let (rc, lc) = match (variant, left) {
        (MuTildeVariant::RightOnly, _) => (right.curves.clone(), Vec::new()),
        (MuTildeVariant::TwoSided, Some(l)) => paired_curves(&right.curves, &l.curves, 4.0 * right.dxi.max(l.dxi)),
        (MuTildeVariant::TwoSided, None) => {
            return Err(Error::InvalidInput(
                "the two-sided lift needs the left flow".into(),
            ))
        }
    };
    let curves: Vec<&DirichletCurve> = rc.iter().chain(lc.iter()).collect();

    let mut xs: Vec<f64> = right.samples.iter().map(|s| s.xi).collect();
    if let (MuTildeVariant::TwoSided, Some(l)) = (variant, left) {
        xs.extend(l.samples.iter().map(|s| s.xi));
    }
    for c in &curves {
        for (x, _) in c.entry_edge.iter().chain(c.exit_edge.iter()) {
            // just inside and outside each event
            let eps = 1e-9 * right.dxi;
            xs.push(x - eps);
            xs.push(x + eps);
        }
    }
    xs.retain(|x| *x >= right.xi_from && *x <= right.xi_to);
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let mut out: Vec<CircleSample> = Vec::with_capacity(xs.len());
    for xi in xs {
        let wrapped = wrapped_phase(&gap, &curves, xi, variant);
        let phase = match out.last() {
            None => wrapped,
            Some(prev) => {
                let d = (wrapped - prev.phase).rem_euclid(TAU);
                let step = if d > PI { d - TAU } else { d };
                if step.abs() >= MAX_PHASE_JUMP {
                    return Err(Error::LiftDiscontinuity { xi, jump: step });
                }
                prev.phase + step
            }
        };
        out.push(CircleSample { xi, phase });
    }
    Ok(out)
}

pub(crate) fn lift_at(lift: &[CircleSample], xi: f64) -> f64 {
    let pts: Vec<(f64, f64)> = lift.iter().map(|s| (s.xi, s.phase)).collect();
    interpolate(&pts, xi).unwrap_or_else(|| {
        if xi < pts[0].0 {
            pts[0].1
        } else {
            pts[pts.len() - 1].1
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    pub variant: MuTildeVariant,
    pub per_window: LambdaMean,
    pub value: f64,
    pub error_estimate: f64,
    pub lift: Vec<CircleSample>,
}

/// β from a lift: `−(lift(b) − lift(a)) / (2π|Λ|)` on each ξ window.
pub fn beta_from_lift(
    lift: Vec<CircleSample>,
    chain: &WindowChain,
    variant: MuTildeVariant,
) -> BetaEstimate {
    let per_window = rotation::rotation_number(|xi| -lift_at(&lift, xi) / TAU, chain);
    let floor = 1.0 / chain.largest().length();
    let error_estimate = per_window.error_estimate.max(floor);
    BetaEstimate {
        variant,
        value: per_window.value,
        error_estimate,
        per_window,
        lift,
    }
}

/// β over the ξ windows of `chain`, tracing the flow over the largest one.
pub fn beta(
    spec: &PotentialSpec,
    gap: &Gap,
    chain: &WindowChain,
    dxi: f64,
    truncation: f64,
    variant: MuTildeVariant,
) -> Result<BetaEstimate> {
    let w = chain.largest();
    let right = trace_flow(spec, gap, w.a, w.b, dxi, truncation, Side::Right)?;
    let left = match variant {
        MuTildeVariant::RightOnly => None,
        MuTildeVariant::TwoSided => Some(trace_flow(spec, gap, w.a, w.b, dxi, truncation, Side::Left)?),
    };
    let lift = phase_lift(&right, left.as_ref(), variant)?;
    Ok(beta_from_lift(lift, chain, variant))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterlacingReport {
    pub mu: f64,
    pub xi_from: f64,
    pub xi_to: f64,
    /// ξ with μ a right Dirichlet value of `H_ξ`.
    pub right_points: Vec<f64>,
    /// ξ with μ a left Dirichlet value of `H_ξ`.
    pub left_points: Vec<f64>,
    /// Zeros of one long Ψ− trajectory at energy μ.
    pub zeros: Vec<f64>,
    /// `(ξ_k, ξ_{k+1}, left points strictly between)` for each offending pair.
    pub violations: Vec<(f64, f64, usize)>,
    /// Largest distance between matched right points and zeros.
    pub zero_mismatch: f64,
    pub passed: bool,
}

const INTERLACE_GRID: f64 = 0.02;

/// ξ in `[from, to]` where the oriented angle of `side` crosses `πℤ`.
fn crossing_points(
    spec: &PotentialSpec,
    side: Side,
    mu: f64,
    from: f64,
    to: f64,
    truncation: f64,
) -> Result<Vec<f64>> {
    let config = IntegratorConfig::default();
    let angle = |xi: f64| oriented_angle(spec, side, mu, xi, truncation, &config);
    let n = ((to - from) / INTERLACE_GRID).ceil().max(1.0) as usize;
    let xs: Vec<f64> = (0..=n)
        .map(|k| from + (to - from) * k as f64 / n as f64)
        .collect();
    let values = xs
        .par_iter()
        .map(|&x| angle(x))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for k in 0..n {
        collect_crossings(&angle, xs[k], values[k], xs[k + 1], values[k + 1], 0, &mut out)?;
    }
    Ok(out)
}

fn collect_crossings<F: Fn(f64) -> Result<f64>>(
    angle: &F,
    a: f64,
    ga: f64,
    b: f64,
    gb: f64,
    depth: usize,
    out: &mut Vec<f64>,
) -> Result<()> {
    let (ka, kb) = (crossings_below(ga), crossings_below(gb));
    if ka == kb {
        return Ok(());
    }
    if (ka - kb).abs() > 1 {
        if depth > 30 {
            return Err(Error::Refinement {
                lo: a,
                hi: b,
                reason: "several boundary zeros in one cell".into(),
            });
        }
        let m = 0.5 * (a + b);
        let gm = angle(m)?;
        collect_crossings(angle, a, ga, m, gm, depth + 1, out)?;
        return collect_crossings(angle, m, gm, b, gb, depth + 1, out);
    }
    let (mut lo, mut hi, mut glo, mut ghi) = (a, b, ga, gb);
    while hi - lo > 1e-12 * (1.0 + hi.abs()) {
        let m = 0.5 * (lo + hi);
        let gm = angle(m)?;
        if crossings_below(gm) == ka {
            lo = m;
            glo = gm;
        } else {
            hi = m;
            ghi = gm;
        }
    }
    // a genuine crossing has unit speed; an unresolved jump of the lift
    // belongs to a state at the far end of the truncation
    if (ghi - glo).abs() < 1e-6 {
        out.push(0.5 * (lo + hi));
    }
    Ok(())
}

/// Checks that exactly one left point lies between consecutive right points
/// at energy `mu`, and that the right points are the zeros of Ψ−.
pub fn interlacing_check(
    spec: &PotentialSpec,
    gap: &Gap,
    mu: f64,
    xi_from: f64,
    xi_to: f64,
    truncation: f64,
) -> Result<InterlacingReport> {
    if !gap.contains(mu) {
        return Err(Error::InvalidInput(format!(
            "energy {mu} is not inside the gap ({}, {})",
            gap.lower, gap.upper
        )));
    }
    if !(xi_to > xi_from) {
        return Err(Error::InvalidInput(format!(
            "empty xi range [{xi_from}, {xi_to}]"
        )));
    }
    let right_points = crossing_points(spec, Side::Right, mu, xi_from, xi_to, truncation)?;
    let left_points = crossing_points(spec, Side::Left, mu, xi_from, xi_to, truncation)?;

    // Ψ− of the untranslated operator vanishes at η exactly when μ is a
    // right Dirichlet value of H_η
    let start = xi_from - truncation;
    let seed = prufer::seed_decaying_left(spec, mu, 0.0, -start);
    let trace = prufer::integrate(spec, mu, 0.0, start, xi_to, seed)?;
    let mut zeros = Vec::new();
    let config = IntegratorConfig::default();
    for pair in trace.states.windows(2) {
        let (s0, s1) = (&pair[0], &pair[1]);
        let (k0, k1) = (crossings_below(s0.theta), crossings_below(s1.theta));
        for k in k0 + 1..=k1 {
            let target = k as f64 * PI;
            let (mut lo, mut hi) = (s0.x, s1.x);
            while hi - lo > 1e-13 * (1.0 + hi.abs()) {
                let m = 0.5 * (lo + hi);
                let th = prufer::theta_endpoint(spec, mu, 0.0, s0.x, m, s0.theta, &config)
                    .unwrap_or_else(|_| trace.theta_at(m));
                if th < target {
                    lo = m;
                } else {
                    hi = m;
                }
            }
            let z = 0.5 * (lo + hi);
            if z >= xi_from && z <= xi_to {
                zeros.push(z);
            }
        }
    }

    let mut violations = Vec::new();
    for pair in right_points.windows(2) {
        let between = left_points
            .iter()
            .filter(|&&x| x > pair[0] && x < pair[1])
            .count();
        if between != 1 {
            violations.push((pair[0], pair[1], between));
        }
    }
    let zero_mismatch = if zeros.len() == right_points.len() {
        zeros
            .iter()
            .zip(&right_points)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let passed = violations.is_empty();
    Ok(InterlacingReport {
        mu,
        xi_from,
        xi_to,
        right_points,
        left_points,
        zeros,
        violations,
        zero_mismatch,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::Confidence;

    fn mathieu_gap1() -> Gap {
        Gap::new(-1.064796, 0.579502, Confidence::Confirmed).unwrap()
    }

    #[test]
    fn free_below_spectrum_has_no_values() {
        let g = Gap::new(-3.0, -0.5, Confidence::Confirmed).unwrap();
        let z = PotentialSpec::Zero;
        assert!(right_dirichlet_values(&z, 0.3, &g, 40.0).unwrap().is_empty());
        assert!(left_dirichlet_values(&z, 0.3, &g, 40.0).unwrap().is_empty());
    }

    #[test]
    fn mathieu_values_are_roots() {
        let v = PotentialSpec::mathieu(2.0);
        let g = mathieu_gap1();
        let mut seen = 0;
        for k in 0..12 {
            let xi = k as f64 * 0.5;
            for side in [Side::Right, Side::Left] {
                let vals = dirichlet_values_near(&v, side, &g, xi, 60.0, &[]).unwrap();
                assert!(vals.len() <= 1);
                for val in vals {
                    seen += 1;
                    let b = boundary(&v, side, val.mu, xi, 60.0, &IntegratorConfig::default())
                        .unwrap();
                    assert!(b.sin_theta.abs() < 1e-10);
                    match side {
                        Side::Right => assert!(val.slope < 0.0),
                        Side::Left => assert!(val.slope > 0.0),
                    }
                }
            }
        }
        assert!(seen > 6);
    }

    #[test]
    fn reflection_symmetry_at_zero() {
        // 2cos(x) is even: left values of H_0 are right values of the reflection
        let v = PotentialSpec::mathieu(2.0);
        let g = mathieu_gap1();
        for xi in [0.7, 2.0] {
            let right = right_dirichlet_values(&v, -xi, &g, 60.0).unwrap();
            let left = left_dirichlet_values(&v, xi, &g, 60.0).unwrap();
            assert_eq!(right.len(), left.len());
            for (a, b) in right.iter().zip(&left) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn translation_covariance() {
        let v = PotentialSpec::mathieu(2.0);
        let g = mathieu_gap1();
        let shifted = PotentialSpec::cosine_sum(vec![crate::potentials::CosineTerm::new(
            2.0,
            1.0 / TAU,
            1.3 / 1.0,
        )]);
        let a = right_dirichlet_values(&v, 1.3 + 0.4, &g, 60.0).unwrap();
        let b = right_dirichlet_values(&shifted, 0.4, &g, 60.0).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn mu_tilde_examples() {
        let g = Gap::new(1.0, 3.0, Confidence::Confirmed).unwrap();
        let one = mu_tilde_from_values(&g, &[], &[], MuTildeVariant::RightOnly);
        assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let at_base = mu_tilde_from_values(&g, &[1.0], &[], MuTildeVariant::RightOnly);
        assert!((at_base - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let half = mu_tilde_from_values(&g, &[2.0], &[], MuTildeVariant::RightOnly);
        assert!((half - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let two = mu_tilde_from_values(&g, &[2.3], &[1.7], MuTildeVariant::TwoSided);
        assert!((two.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_pass_per_period() {
        let v = PotentialSpec::mathieu(2.0);
        let g = mathieu_gap1();
        let flow = trace_flow(&v, &g, 0.0, TAU, 0.05, 60.0, Side::Right).unwrap();
        assert!(flow.curves.iter().all(|c| c.is_monotone()));
        for s in &flow.samples {
            for val in &s.values {
                assert!(val.mu > g.lower && val.mu < g.upper);
            }
        }
        let level = g.midpoint();
        let passes: usize = flow
            .curves
            .iter()
            .map(|c| {
                c.extended()
                    .windows(2)
                    .filter(|w| (w[0].1 - level) * (w[1].1 - level) < 0.0)
                    .count()
            })
            .sum();
        assert_eq!(passes, 1);
    }

    #[test]
    fn lift_is_continuous_and_winds_once() {
        let v = PotentialSpec::mathieu(2.0);
        let g = mathieu_gap1();
        let right = trace_flow(&v, &g, 0.0, 2.0 * TAU, 0.05, 60.0, Side::Right).unwrap();
        let lift = phase_lift(&right, None, MuTildeVariant::RightOnly).unwrap();
        let turn = (lift.last().unwrap().phase - lift[0].phase) / TAU;
        assert!((turn + 2.0).abs() < 0.05, "{turn}");
        let left = trace_flow(&v, &g, 0.0, 2.0 * TAU, 0.05, 60.0, Side::Left).unwrap();
        let lift2 = phase_lift(&right, Some(&left), MuTildeVariant::TwoSided).unwrap();
        let turn2 = (lift2.last().unwrap().phase - lift2[0].phase) / TAU;
        assert!((turn2 + 2.0).abs() < 0.05, "{turn2}");
    }

    #[test]
    fn interlacing_two_periods() {
        let v = PotentialSpec::mathieu(2.0);
        let g = mathieu_gap1();
        let r = interlacing_check(&v, &g, g.midpoint(), 0.0, 2.0 * TAU, 60.0).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.right_points.len(), 2, "{r:?}");
        assert!(r.zero_mismatch < 1e-8, "{}", r.zero_mismatch);
    }
}
