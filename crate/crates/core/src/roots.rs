//! Safeguarded Newton iteration for monotone increasing functions.

use crate::error::{Error, Result};

pub(crate) struct Bracket {
    pub lo: f64,
    pub hi: f64,
}

/// Solves `g(x) = 0` for increasing `g` on `[lo, hi]` with `g(lo) < 0 < g(hi)`.
/// `eval` returns `(g(x), g'(x))`. Newton steps that leave the current bracket
/// or stall are replaced by bisection.
pub(crate) fn newton_increasing<F>(
    mut eval: F,
    bracket: Bracket,
    guess: f64,
    ftol: f64,
    xtol: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    if !(hi > lo) {
        return Err(Error::Refinement {
            lo,
            hi,
            reason: "empty bracket".into(),
        });
    }
    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    // rtsafe: accept a Newton step only while it stays inside the bracket and
    // shrinks at least as fast as bisection would
    let mut last_step = hi - lo;
    for _ in 0..200 {
        let (g, dg) = eval(x)?;
        if g.abs() <= ftol {
            return Ok(x);
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= xtol {
            return Ok(0.5 * (lo + hi));
        }
        let newton = if dg > 0.0 { x - g / dg } else { f64::NAN };
        let step = (newton - x).abs();
        let next = if newton > lo && newton < hi && step <= 0.5 * last_step {
            newton
        } else {
            0.5 * (lo + hi)
        };
        last_step = (next - x).abs();
        if last_step <= 0.25 * xtol {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Refinement {
        lo,
        hi,
        reason: "no convergence after 200 iterations".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cubic_root() {
        let r = newton_increasing(
            |x| Ok((x * x * x - 2.0, 3.0 * x * x)),
            Bracket { lo: 0.0, hi: 3.0 },
            0.1,
            1e-14,
            1e-15,
        )
        .unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn survives_useless_derivative() {
        let r = newton_increasing(
            |x| Ok((x.atan() - 0.5, 0.0)),
            Bracket { lo: -10.0, hi: 10.0 },
            9.0,
            1e-13,
            1e-14,
        )
        .unwrap();
        assert!((r - 0.5f64.tan()).abs() < 1e-12);
    }
}
