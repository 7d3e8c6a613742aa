//! Λ-means, rotation numbers of lifts, and the Johnson–Moser rotation number.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{PotentialSpec, WindowChain};
use crate::prufer::{self, crossings_below, IntegratorConfig, DEFAULT_TRUNCATION};
use crate::spectrum::spread;

/// Relative tolerance of the per-panel adaptive Simpson quadrature.
const QUADRATURE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaMean {
    /// `(window index, value)`.
    pub per_window: Vec<(usize, f64)>,
    pub value: f64,
    pub error_estimate: f64,
    /// Per-window magnitudes grew steadily over the last windows.
    pub diverging: bool,
}

impl LambdaMean {
    pub fn from_values(values: Vec<f64>, floor: f64) -> Self {
        let n = values.len();
        let last3 = &values[n.saturating_sub(3)..];
        let error_estimate = spread(last3).max(floor);
        let diverging = n >= 3 && {
            let (a, b, c) = (values[n - 3].abs(), values[n - 2].abs(), values[n - 1].abs());
            a < b && b < c && c > 1.5 * a + floor
        };
        LambdaMean {
            value: values[n - 1],
            per_window: values.into_iter().enumerate().collect(),
            error_estimate,
            diverging,
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.per_window.iter().map(|&(_, v)| v)
    }
}

fn simpson_panel<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_panel(f, a, fa, lm, flm, m, fm, left, 0.5 * tol, depth - 1)
        + simpson_panel(f, m, fm, rm, frm, b, fb, right, 0.5 * tol, depth - 1)
}

/// `∫_a^b f` by adaptive Simpson on unit panels.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let panels = ((b - a).ceil() as usize).max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|k| {
            let lo = a + k as f64 * h;
            let hi = if k + 1 == panels { b } else { lo + h };
            let mid = 0.5 * (lo + hi);
            let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
            let whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
            let tol = QUADRATURE_TOLERANCE * (hi - lo) * (flo.abs() + fhi.abs() + 1.0);
            simpson_panel(f, lo, flo, mid, fmid, hi, fhi, whole, tol, 24)
        })
        .sum()
}

/// Window averages `∫_Λ f / |Λ|` along the chain.
pub fn lambda_mean<F: Fn(f64) -> f64>(f: F, chain: &WindowChain) -> LambdaMean {
    let values = chain
        .windows()
        .iter()
        .map(|w| integrate_adaptive(&f, w.a, w.b) / w.length())
        .collect();
    LambdaMean::from_values(values, 0.0)
}

/// Endpoint quotients `(lift(b) − lift(a)) / |Λ|` along the chain.
pub fn rotation_number<F: Fn(f64) -> f64>(lift: F, chain: &WindowChain) -> LambdaMean {
    let values = chain
        .windows()
        .iter()
        .map(|w| (lift(w.b) - lift(w.a)) / w.length())
        .collect();
    LambdaMean::from_values(values, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    pub energy: f64,
    pub offset: f64,
    /// `Δθ / (π|Λ|)` per window.
    pub lift: LambdaMean,
    /// Zeros of Ψ− per unit length.
    pub zero_density: LambdaMean,
    pub value: f64,
    pub error_estimate: f64,
    /// Set for energies not known to lie in a gap or below the spectrum.
    pub heuristic: bool,
}

/// α(E) from the θ-lift of Ψ−, seeded `truncation` to the left of the
/// largest window and cross-checked against the zero count of Ψ−.
pub fn johnson_moser_alpha(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    chain: &WindowChain,
) -> Result<AlphaEstimate> {
    johnson_moser_alpha_with(
        spec,
        energy,
        offset,
        chain,
        DEFAULT_TRUNCATION,
        &IntegratorConfig::default(),
    )
}

pub fn johnson_moser_alpha_with(
    spec: &PotentialSpec,
    energy: f64,
    offset: f64,
    chain: &WindowChain,
    truncation: f64,
    config: &IntegratorConfig,
) -> Result<AlphaEstimate> {
    if !(truncation > 0.0) {
        return Err(Error::InvalidInput(format!(
            "truncation must be positive (got {truncation})"
        )));
    }
    let windows = chain.windows();
    let n = windows.len();
    // a_N < … < a_1 < b_1 < … < b_N
    let checkpoints: Vec<f64> = windows
        .iter()
        .rev()
        .map(|w| w.a)
        .chain(windows.iter().map(|w| w.b))
        .collect();
    let start = windows[n - 1].a - truncation;
    let seed = prufer::seed_decaying_left(spec, energy, offset, -start);
    let theta = prufer::theta_at_checkpoints(spec, energy, offset, start, seed, &checkpoints, config)?;
    let at_a = |k: usize| theta[n - 1 - k];
    let at_b = |k: usize| theta[n + k];

    let floor = 1.0 / windows[n - 1].length();
    let lift = LambdaMean::from_values(
        (0..n)
            .map(|k| (at_b(k) - at_a(k)) / (PI * windows[k].length()))
            .collect(),
        0.0,
    );
    let zero_density = LambdaMean::from_values(
        (0..n)
            .map(|k| {
                (crossings_below(at_b(k)) - crossings_below(at_a(k))) as f64 / windows[k].length()
            })
            .collect(),
        0.0,
    );
    let error_estimate = lift
        .error_estimate
        .max(zero_density.error_estimate)
        .max(floor);
    if (lift.value - zero_density.value).abs() > 3.0 * error_estimate {
        return Err(Error::AlphaInconsistent {
            energy,
            lift: lift.value,
            count: zero_density.value,
            tolerance: 3.0 * error_estimate,
        });
    }
    Ok(AlphaEstimate {
        energy,
        offset,
        value: lift.value,
        error_estimate,
        lift,
        zero_density,
        heuristic: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chain400() -> WindowChain {
        WindowChain::geometric(0.0, 25.0, 1.6, 5).unwrap()
    }

    #[test]
    fn constant_mean_is_exact() {
        let m = lambda_mean(|_| 0.7, &chain400());
        assert!(m.values().all(|v| (v - 0.7).abs() < 1e-14));
        assert!(m.error_estimate < 1e-14);
    }

    #[test]
    fn oscillation_averages_out() {
        let c = chain400();
        let m = lambda_mean(f64::sin, &c);
        assert!(m.value.abs() < 1e-9, "{}", m.value);
        let c400 = WindowChain::geometric(200.0, 25.0, 2.0, 4).unwrap();
        assert_eq!(c400.largest().length(), 400.0);
        let m = lambda_mean(|x: f64| x.cos().powi(2), &c400);
        assert!((m.value - 0.5).abs() < 1e-3);
        assert!(!m.diverging);
    }

    #[test]
    fn growth_is_flagged() {
        let m = lambda_mean(|x: f64| x * x, &chain400());
        assert!(m.diverging);
    }

    #[test]
    fn linear_lift() {
        let r = rotation_number(|x| 0.3 * x, &chain400());
        assert!(r.values().all(|v| (v - 0.3).abs() < 1e-14));
    }

    #[test]
    fn free_theta_lift_at_four() {
        let z = PotentialSpec::Zero;
        let c = WindowChain::geometric(0.0, 25.0, 1.6, 3).unwrap();
        let cfg = IntegratorConfig::default();
        let lift = |x: f64| {
            prufer::theta_endpoint(&z, 4.0, 0.0, -100.0, x, 0.3, &cfg).unwrap()
        };
        let r = rotation_number(lift, &c);
        assert!((r.value - 2.0).abs() < 0.02, "{}", r.value);
    }

    #[test]
    fn free_alpha() {
        let a = johnson_moser_alpha(&PotentialSpec::Zero, 1.0, 0.0, &WindowChain::default()).unwrap();
        assert!((a.value - 1.0 / PI).abs() < 2e-3, "{a:?}");
        assert!(a.error_estimate < 2e-3);
    }

    #[test]
    fn alpha_below_spectrum_vanishes() {
        let v = PotentialSpec::mathieu(2.0);
        let a = johnson_moser_alpha(&v, -3.0, 0.4, &chain400()).unwrap();
        assert_eq!(a.zero_density.value, 0.0);
        assert!(a.value.abs() < 1e-3);
    }

    #[test]
    fn mathieu_alpha_in_first_gap() {
        let v = PotentialSpec::mathieu(2.0);
        let a = johnson_moser_alpha(&v, -0.24, 0.0, &WindowChain::default()).unwrap();
        assert!((a.value - 1.0 / (2.0 * PI)).abs() < 1e-3, "{a:?}");
    }

    proptest! {
        #[test]
        fn rotation_ignores_bounded_perturbations(slope in -2.0f64..2.0, amp in 0.0f64..3.0, k in 0.1f64..5.0) {
            let c = WindowChain::default();
            let r = rotation_number(|x| slope * x + amp * (k * x).sin(), &c);
            prop_assert!((r.value - slope).abs() <= 2.0 * amp / c.largest().length() + 1e-12);
        }
    }
}
