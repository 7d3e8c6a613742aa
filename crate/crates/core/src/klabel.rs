//! The odd K-gap label Π: the trace formula for the edge unitary on a
//! truncated half-line matrix, the curve formula, and the boundary force per
//! unit energy.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::{self, phase_lift, Flow, MuTildeVariant, Side};
use crate::error::{Error, Result};
use crate::potentials::{PotentialSpec, WindowChain};
use crate::rotation::LambdaMean;
use crate::spectrum::{Confidence, Gap};
use crate::tridiag::{FiniteDifferenceBox, SymTridiagonal};

pub const DEFAULT_MASS_THRESHOLD: f64 = 0.5;
pub const MASS_SWEEP: [f64; 3] = [0.3, 0.5, 0.7];
pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const DEFAULT_DERIVATIVE_STEP: f64 = 1e-3;
pub const DEFAULT_DIM_CAP: usize = 400_000;
const EIGEN_TOL: f64 = 1e-12;
/// Edge states carry their mass within this fraction of `L` of the boundary.
const NEAR_FRACTION: f64 = 0.25;
const IMAG_FLOOR: f64 = 1e-9;

/// `−∂² + V_ξ` on `[−L, 0]`, Dirichlet at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct HalflineOperator {
    pub offset: f64,
    pub truncation: f64,
    pub step: f64,
    pub grid: FiniteDifferenceBox,
}

impl HalflineOperator {
    pub fn dim(&self) -> usize {
        self.grid.nodes.len()
    }

    pub fn matrix(&self) -> &SymTridiagonal {
        &self.grid.matrix
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }
}

pub fn build_halfline(spec: &PotentialSpec, xi: f64, truncation: f64, step: f64) -> Result<HalflineOperator> {
    build_halfline_capped(spec, xi, truncation, step, DEFAULT_DIM_CAP)
}

pub fn build_halfline_capped(
    spec: &PotentialSpec,
    xi: f64,
    truncation: f64,
    step: f64,
    cap: usize,
) -> Result<HalflineOperator> {
    if !(truncation > 0.0) || !(step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "half-line truncation {truncation} and step {step} must be positive"
        )));
    }
    let f = spec.max_frequency();
    let max_step = 0.01 * if f > 1.0 { 1.0 / f } else { 1.0 };
    if step > max_step * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "grid step {step} exceeds {max_step} for this potential"
        )));
    }
    let cells = truncation / step;
    if (cells - cells.round()).abs() > 1e-6 * cells.max(1.0) {
        return Err(Error::InvalidInput(format!(
            "truncation {truncation} is not a multiple of the step {step}"
        )));
    }
    let dim = (cells.round() as usize).saturating_sub(1);
    if dim > cap {
        return Err(Error::ResourceLimit { dim, cap });
    }
    Ok(HalflineOperator {
        offset: xi,
        truncation,
        step,
        grid: FiniteDifferenceBox::new(spec, -truncation, 0.0, xi, step)?,
    })
}

/// Unit eigenvector of the half-line matrix with eigenvalue in a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeState {
    pub energy: f64,
    /// Share of the squared amplitude on `[−L/4, 0]`.
    pub near_mass: f64,
    pub vector: Vec<f64>,
}

/// All eigenpairs with eigenvalue in the closed gap, with their near masses.
pub fn gap_eigenpairs(op: &HalflineOperator, gap: &Gap) -> Vec<EdgeState> {
    let cut = -NEAR_FRACTION * op.truncation;
    let first_near = op.nodes().partition_point(|&x| x < cut);
    op.matrix()
        .eigenpairs_in(gap.lower, gap.upper, EIGEN_TOL)
        .into_iter()
        .map(|(energy, vector)| EdgeState {
            energy,
            near_mass: vector[first_near..].iter().map(|v| v * v).sum(),
            vector,
        })
        .collect()
}

/// Eigenpairs in the gap holding at least `mass_threshold` of their weight
/// near the boundary point.
pub fn edge_projector(op: &HalflineOperator, gap: &Gap, mass_threshold: f64) -> Result<Vec<EdgeState>> {
    check_projector_input(gap, mass_threshold)?;
    Ok(filter_states(gap_eigenpairs(op, gap), mass_threshold))
}

fn check_projector_input(gap: &Gap, mass_threshold: f64) -> Result<()> {
    if gap.confidence != Confidence::Confirmed {
        return Err(Error::InvalidInput(format!(
            "edge projector needs a confirmed gap, got ({}, {})",
            gap.lower, gap.upper
        )));
    }
    if !(mass_threshold > 0.0 && mass_threshold < 1.0) {
        return Err(Error::InvalidInput(format!(
            "mass threshold {mass_threshold} outside (0, 1)"
        )));
    }
    Ok(())
}

fn filter_states(states: Vec<EdgeState>, mass_threshold: f64) -> Vec<EdgeState> {
    states
        .into_iter()
        .filter(|s| s.near_mass >= mass_threshold)
        .collect()
}

/// `𝒰_ξ = P e^{2πi(Ĥ_ξ − E₀)/|Δ|} + 1 − P` represented by the retained
/// eigenpairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeUnitary {
    pub energies: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub phases: Vec<Complex64>,
}

impl EdgeUnitary {
    pub fn new(gap: &Gap, states: &[EdgeState]) -> Self {
        EdgeUnitary {
            energies: states.iter().map(|s| s.energy).collect(),
            basis: states.iter().map(|s| s.vector.clone()).collect(),
            phases: states
                .iter()
                .map(|s| Complex64::from_polar(1.0, TAU * (s.energy - gap.base()) / gap.width()))
                .collect(),
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    fn coefficients(&self) -> impl Iterator<Item = Complex64> + '_ {
        self.phases.iter().map(|p| p - 1.0)
    }

    /// Largest entry of `Vᵀ(𝒰𝒰* − 1)V` with `V` the retained basis.
    pub fn unitarity_defect(&self) -> f64 {
        let m = self.rank();
        let c: Vec<Complex64> = self.coefficients().collect();
        let gram: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..m).map(|k| dot(&self.basis[j], &self.basis[k])).collect())
            .collect();
        // 𝒰 = 1 + VCVᵀ, so 𝒰𝒰* − 1 = V(C + C̄ + C G C̄)Vᵀ
        let inner: Vec<Vec<Complex64>> = (0..m)
            .map(|j| {
                (0..m)
                    .map(|k| {
                        let diag = if j == k { c[j] + c[j].conj() } else { Complex64::new(0.0, 0.0) };
                        diag + c[j] * gram[j][k] * c[k].conj()
                    })
                    .collect()
            })
            .collect();
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for d in 0..m {
                let mut s = Complex64::new(0.0, 0.0);
                for j in 0..m {
                    for k in 0..m {
                        s += gram[a][j] * inner[j][k] * gram[k][d];
                    }
                }
                worst = worst.max(s.norm());
            }
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Tr[(𝒰*_ξ − 1)(𝒰_{ξ+s/2} − 𝒰_{ξ−s/2})] / s`.
pub fn trace_integrand(center: &EdgeUnitary, plus: &EdgeUnitary, minus: &EdgeUnitary, step: f64) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for (v, c) in center.basis.iter().zip(center.coefficients()) {
        let mut d = Complex64::new(0.0, 0.0);
        for (u, cp) in plus.basis.iter().zip(plus.coefficients()) {
            d += cp * dot(v, u).powi(2);
        }
        for (w, cm) in minus.basis.iter().zip(minus.coefficients()) {
            d -= cm * dot(v, w).powi(2);
        }
        total += c.conj() * d;
    }
    total / step
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSettings {
    pub truncation: f64,
    pub grid_step: f64,
    /// Spacing of the ξ quadrature grid.
    pub dxi: f64,
    /// Step of the central difference in ξ.
    pub derivative_step: f64,
    pub mass_thresholds: Vec<f64>,
    /// Compare the retained count with the shooting count at each grid point.
    pub cross_check: bool,
    pub dim_cap: usize,
}

impl Default for TraceSettings {
    fn default() -> Self {
        TraceSettings {
            truncation: 60.0,
            grid_step: DEFAULT_GRID_STEP,
            dxi: 0.01,
            derivative_step: DEFAULT_DERIVATIVE_STEP,
            mass_thresholds: vec![DEFAULT_MASS_THRESHOLD],
            cross_check: true,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

/// `10⁻³ · |Δ| / max|μ'|` from the slopes seen on a flow.
pub fn derivative_step_from_flow(flow: &Flow) -> f64 {
    let fastest = flow
        .curves
        .iter()
        .flat_map(|c| c.samples.iter())
        .map(|p| p.slope.abs())
        .fold(0.0, f64::max);
    if fastest > 0.0 {
        1e-3 * flow.gap.width() / fastest
    } else {
        DEFAULT_DERIVATIVE_STEP
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub xi: f64,
    pub integrand_re: f64,
    pub integrand_im: f64,
    /// Retained eigenpairs at ξ.
    pub retained: usize,
    /// Right Dirichlet values from shooting at ξ, when cross-checked.
    pub shooting: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiTrace {
    pub mass_threshold: f64,
    pub xi_from: f64,
    pub xi_to: f64,
    pub value: f64,
    /// Imaginary part of the normalised integral.
    pub imag: f64,
    /// Same quadrature on every other grid point.
    pub coarse_value: f64,
    pub error_estimate: f64,
    pub samples: Vec<TraceSample>,
    /// ξ where the retained count inside the gap interior disagrees with
    /// the shooting count, which is taken as authoritative.
    pub count_mismatches: Vec<f64>,
    pub max_unitarity_defect: f64,
}

/// Π over `window` with the default mass threshold and derivative step.
pub fn pi_trace(
    spec: &PotentialSpec,
    gap: &Gap,
    window: (f64, f64),
    dxi: f64,
    truncation: f64,
    grid_step: f64,
) -> Result<PiTrace> {
    let settings = TraceSettings {
        truncation,
        grid_step,
        dxi,
        ..TraceSettings::default()
    };
    Ok(pi_trace_sweep(spec, gap, window, &settings)?.remove(0))
}

struct PointResult {
    integrands: Vec<Complex64>,
    retained: Vec<usize>,
    interior: Vec<usize>,
    shooting: Option<usize>,
    defect: f64,
}

/// Π over `window` for each mass threshold in `settings`, sharing the
/// eigenpair computations.
pub fn pi_trace_sweep(
    spec: &PotentialSpec,
    gap: &Gap,
    window: (f64, f64),
    settings: &TraceSettings,
) -> Result<Vec<PiTrace>> {
    let (a, b) = window;
    if !(b > a) || !(settings.dxi > 0.0) || !(settings.derivative_step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "trace window ({a}, {b}) with dxi {} and derivative step {}",
            settings.dxi, settings.derivative_step
        )));
    }
    if settings.mass_thresholds.is_empty() {
        return Err(Error::InvalidInput("no mass thresholds given".into()));
    }
    for &t in &settings.mass_thresholds {
        check_projector_input(gap, t)?;
    }
    let half = ((b - a) / (2.0 * settings.dxi)).ceil().max(1.0) as usize;
    let n = 2 * half;
    let h = (b - a) / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| if i == n { b } else { a + i as f64 * h }).collect();
    let (interior_lo, interior_hi) = gap.interior();

    let points: Vec<PointResult> = grid
        .par_iter()
        .map(|&xi| -> Result<PointResult> {
            let states = |x: f64| -> Result<Vec<EdgeState>> {
                let op = build_halfline_capped(spec, x, settings.truncation, settings.grid_step, settings.dim_cap)?;
                Ok(gap_eigenpairs(&op, gap))
            };
            let s = 0.5 * settings.derivative_step;
            let (minus, center, plus) = (states(xi - s)?, states(xi)?, states(xi + s)?);
            let shooting = if settings.cross_check {
                Some(
                    dirichlet::dirichlet_values_near(spec, Side::Right, gap, xi, settings.truncation, &[])?
                        .len(),
                )
            } else {
                None
            };
            let mut out = PointResult {
                integrands: Vec::new(),
                retained: Vec::new(),
                interior: Vec::new(),
                shooting,
                defect: 0.0,
            };
            for &t in &settings.mass_thresholds {
                let keep = |v: &[EdgeState]| EdgeUnitary::new(gap, &filter_states(v.to_vec(), t));
                let (um, uc, up) = (keep(&minus), keep(&center), keep(&plus));
                out.integrands.push(trace_integrand(&uc, &up, &um, settings.derivative_step));
                out.retained.push(uc.rank());
                out.interior.push(
                    uc.energies
                        .iter()
                        .filter(|&&e| e >= interior_lo && e <= interior_hi)
                        .count(),
                );
                out.defect = out.defect.max(uc.unitarity_defect());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let normalise = |integral: Complex64| integral * Complex64::i() / (TAU * (b - a));
    let trapezoid = |values: &[Complex64], step: f64| -> Complex64 {
        let m = values.len();
        let inner: Complex64 = values[1..m - 1].iter().sum();
        (inner + 0.5 * (values[0] + values[m - 1])) * step
    };
    let max_unitarity_defect = points.iter().map(|p| p.defect).fold(0.0, f64::max);
    let window_term = window_term(spec, b - a);
    let mut out = Vec::with_capacity(settings.mass_thresholds.len());
    for (k, &threshold) in settings.mass_thresholds.iter().enumerate() {
        let values: Vec<Complex64> = points.iter().map(|p| p.integrands[k]).collect();
        let coarse: Vec<Complex64> = values.iter().step_by(2).copied().collect();
        let fine = normalise(trapezoid(&values, h));
        let coarse = normalise(trapezoid(&coarse, 2.0 * h));
        let quadrature = (fine - coarse).norm();
        if fine.im.abs() > 10.0 * quadrature.max(IMAG_FLOOR) {
            return Err(Error::TraceInconsistent {
                imag: fine.im,
                estimate: quadrature,
            });
        }
        let samples: Vec<TraceSample> = grid
            .iter()
            .zip(&points)
            .map(|(&xi, p)| TraceSample {
                xi,
                integrand_re: p.integrands[k].re,
                integrand_im: p.integrands[k].im,
                retained: p.retained[k],
                shooting: p.shooting,
            })
            .collect();
        let count_mismatches = grid
            .iter()
            .zip(&points)
            .filter(|(_, p)| p.shooting.is_some_and(|s| s != p.interior[k]))
            .map(|(&xi, _)| xi)
            .collect();
        out.push(PiTrace {
            mass_threshold: threshold,
            xi_from: a,
            xi_to: b,
            value: fine.re,
            imag: fine.im,
            coarse_value: coarse.re,
            error_estimate: fine.im.abs() + quadrature + window_term,
            samples,
            count_mismatches,
            max_unitarity_defect,
        });
    }
    Ok(out)
}

/// Zero over whole periods; otherwise the `1/|window|` bound on the
/// contribution of partially covered passages.
fn window_term(spec: &PotentialSpec, length: f64) -> f64 {
    match spec.common_period() {
        Some(t) if ((length / t) - (length / t).round()).abs() < 1e-9 * (length / t).max(1.0) => 0.0,
        None if spec.is_zero() => 0.0,
        _ => 1.0 / length,
    }
}

/// A Λ-mean label with the imaginary residue of its largest window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveLabel {
    pub value: f64,
    pub imag: f64,
    pub error_estimate: f64,
    pub per_window: LambdaMean,
}

fn check_coverage(flow: &Flow, chain: &WindowChain) -> Result<()> {
    let w = chain.largest();
    let slack = 1e-9 * (1.0 + w.length());
    if w.a < flow.xi_from - slack || w.b > flow.xi_to + slack {
        return Err(Error::InvalidInput(format!(
            "flow over [{}, {}] does not cover the window [{}, {}]",
            flow.xi_from, flow.xi_to, w.a, w.b
        )));
    }
    Ok(())
}

/// `−(1/2πi) Λ(conj(μ̃)μ̃' − μ̃')` evaluated segment by segment on the phase lift.
pub fn pi_curves(
    right: &Flow,
    left: Option<&Flow>,
    chain: &WindowChain,
    variant: MuTildeVariant,
) -> Result<CurveLabel> {
    check_coverage(right, chain)?;
    let lift = phase_lift(right, left, variant)?;
    let per_window_complex: Vec<Complex64> = chain
        .windows()
        .iter()
        .map(|w| {
            let (pa, pb) = (dirichlet::lift_at(&lift, w.a), dirichlet::lift_at(&lift, w.b));
            // ∫ (e^{−iΦ} − 1) d e^{iΦ} = iΔΦ − Δe^{iΦ}
            let integral = Complex64::i() * (pb - pa)
                - (Complex64::from_polar(1.0, pb) - Complex64::from_polar(1.0, pa));
            integral * Complex64::i() / (TAU * w.length())
        })
        .collect();
    let imag = per_window_complex.last().map_or(0.0, |z| z.im);
    let per_window = LambdaMean::from_values(per_window_complex.iter().map(|z| z.re).collect(), 0.0);
    let floor = 1.0 / chain.largest().length();
    Ok(CurveLabel {
        value: per_window.value,
        imag,
        error_estimate: per_window.error_estimate.max(floor) + imag.abs(),
        per_window,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryForce {
    pub value: f64,
    pub error_estimate: f64,
    pub per_window: LambdaMean,
    pub max_values: usize,
    /// More than one right Dirichlet value was seen at some ξ.
    pub outside_hypothesis: bool,
}

/// Λ-mean of `−μ'·|D_ξ|/|Δ|`: the energy swept downward by the right curves,
/// per unit gap width and unit length.
pub fn boundary_force(flow: &Flow, chain: &WindowChain) -> Result<BoundaryForce> {
    if flow.side != Side::Right {
        return Err(Error::InvalidInput("boundary force needs the right flow".into()));
    }
    check_coverage(flow, chain)?;
    let values = chain
        .windows()
        .iter()
        .map(|w| {
            let swept: f64 = flow
                .curves
                .iter()
                .filter_map(|c| {
                    let (s, e) = c.extent();
                    let (s, e) = (s.max(w.a), e.min(w.b));
                    if s >= e {
                        return None;
                    }
                    Some(c.mu_at(s)? - c.mu_at(e)?)
                })
                .sum();
            swept / (flow.gap.width() * w.length())
        })
        .collect();
    let per_window = LambdaMean::from_values(values, 0.0);
    Ok(BoundaryForce {
        value: per_window.value,
        error_estimate: per_window.error_estimate.max(1.0 / chain.largest().length()),
        per_window,
        max_values: flow.max_values,
        outside_hypothesis: flow.max_values > 1,
    })
}
