//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.
//!
//! Steps are taken with the fifth-order solution (local extrapolation) and the
//! embedded fourth-order solution drives the step-size controller, following
//! Hairer, Nørsett & Wanner, *Solving ODEs I*, II.4.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth minus fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// How a component's magnitude enters its error scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Magnitude {
    /// `atol + rtol · max(|y|, |y_new|)`.
    State,
    /// `atol + rtol · m` with a fixed reference magnitude `m` (angles, logs).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentTolerance {
    pub rtol: f64,
    pub atol: f64,
    pub magnitude: Magnitude,
}

#[derive(Debug, Clone, Copy)]
pub struct StepOptions<const N: usize> {
    pub tolerance: [ComponentTolerance; N],
    pub max_step: f64,
    pub min_step: f64,
    pub initial_step: f64,
}

pub trait OdeSystem<const N: usize> {
    fn rhs(&self, x: f64, y: &[f64; N]) -> [f64; N];
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Integrates from `x0` to `x1` (either direction). `observe(x, y, dy)` is
/// called at the start point and after every accepted step; the last call is
/// at exactly `x1`.
pub fn integrate<const N: usize, S, F>(
    system: &S,
    x0: f64,
    x1: f64,
    y0: [f64; N],
    options: &StepOptions<N>,
    mut observe: F,
) -> Result<[f64; N]>
where
    S: OdeSystem<N>,
    F: FnMut(f64, &[f64; N], &[f64; N]),
{
    let dir = if x1 >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    let mut k1 = system.rhs(x, &y);
    observe(x, &y, &k1);
    if x0 == x1 {
        return Ok(y);
    }
    let mut h = options.initial_step.min(options.max_step).min((x1 - x0).abs());
    let mut rejected_last = false;

    loop {
        let remaining = (x1 - x).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let hs = dir * h;

        let k2 = system.rhs(x + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = system.rhs(x + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = system.rhs(
            x + C4 * hs,
            &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = system.rhs(
            x + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = system.rhs(
            x + hs,
            &axpy(
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            hs,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let x_new = if last { x1 } else { x + hs };
        let k7 = system.rhs(x_new, &y_new);

        let mut err = 0.0;
        for i in 0..N {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let tol = &options.tolerance[i];
            let mag = match tol.magnitude {
                Magnitude::State => y[i].abs().max(y_new[i].abs()),
                Magnitude::Fixed(m) => m,
            };
            let sc = tol.atol + tol.rtol * mag;
            err += (e / sc) * (e / sc);
        }
        let err = (err / N as f64).sqrt();

        if err <= 1.0 {
            x = x_new;
            y = y_new;
            k1 = k7;
            observe(x, &y, &k1);
            if last {
                return Ok(y);
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            let factor = if rejected_last { factor.min(1.0) } else { factor };
            h = (h * factor).min(options.max_step);
            rejected_last = false;
        } else {
            let factor = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.1
            };
            h *= factor;
            rejected_last = true;
            if h < options.min_step {
                return Err(Error::StepUnderflow { x, step: h });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Oscillator;

    impl OdeSystem<2> for Oscillator {
        fn rhs(&self, _x: f64, y: &[f64; 2]) -> [f64; 2] {
            [y[1], -y[0]]
        }
    }

    struct Stiffish;

    impl OdeSystem<1> for Stiffish {
        fn rhs(&self, _x: f64, y: &[f64; 1]) -> [f64; 1] {
            [-1e12 * y[0]]
        }
    }

    fn opts<const N: usize>(rtol: f64) -> StepOptions<N> {
        StepOptions {
            tolerance: [ComponentTolerance {
                rtol,
                atol: rtol * 1e-2,
                magnitude: Magnitude::State,
            }; N],
            max_step: 1.0,
            min_step: 1e-14,
            initial_step: 1e-3,
        }
    }

    #[test]
    fn harmonic_oscillator_accuracy() {
        let y = integrate(&Oscillator, 0.0, 10.0, [0.0, 1.0], &opts(1e-10), |_, _, _| {}).unwrap();
        assert!((y[0] - 10f64.sin()).abs() < 1e-8);
        assert!((y[1] - 10f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn backward_integration_and_endpoint() {
        let mut last_x = f64::NAN;
        let mut monotone = true;
        let mut prev = 3.0;
        let y = integrate(&Oscillator, 3.0, -2.0, [3f64.sin(), 3f64.cos()], &opts(1e-10), |x, _, _| {
            monotone &= x <= prev;
            prev = x;
            last_x = x;
        })
        .unwrap();
        assert!(monotone);
        assert_eq!(last_x, -2.0);
        assert!((y[0] - (-2f64).sin()).abs() < 1e-8);
    }

    #[test]
    fn underflow_is_reported() {
        let mut o = opts::<1>(1e-10);
        o.min_step = 1e-6;
        o.initial_step = 1.0;
        let r = integrate(&Stiffish, 0.0, 1.0, [1.0], &o, |_, _, _| {});
        assert!(matches!(r, Err(Error::StepUnderflow { .. })));
    }
}
