//! Potentials and window chains.
//!
//! A [`PotentialSpec`] is the single source of truth for the operator family
//! `H_ξ = -∂² + V(· + ξ)`. Only finite cosine sums (and the zero potential) are
//! supported, which makes boundedness and differentiability hold by
//! construction.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One term `amplitude · cos(2π·frequency·x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub amplitude: f64,
    /// Cycles per unit length.
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl CosineTerm {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            amplitude,
            frequency,
            phase,
        }
    }

    fn angular(&self) -> f64 {
        TAU * self.frequency
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialSpec {
    #[default]
    Zero,
    CosineSum { terms: Vec<CosineTerm> },
}

impl PotentialSpec {
    pub fn cosine_sum(terms: Vec<CosineTerm>) -> Self {
        PotentialSpec::CosineSum { terms }
    }

    /// `V(x) = amplitude · cos(x)`, period 2π.
    pub fn mathieu(amplitude: f64) -> Self {
        Self::cosine_sum(vec![CosineTerm::new(amplitude, 1.0 / TAU, 0.0)])
    }

    /// `V(x) = cos(2πx) + cos(2πγx)` with γ the golden mean.
    pub fn golden() -> Self {
        let gamma = 0.5 * (1.0 + 5f64.sqrt());
        Self::cosine_sum(vec![
            CosineTerm::new(1.0, 1.0, 0.0),
            CosineTerm::new(1.0, gamma, 0.0),
        ])
    }

    pub fn terms(&self) -> &[CosineTerm] {
        match self {
            PotentialSpec::Zero => &[],
            PotentialSpec::CosineSum { terms } => terms,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms().iter().all(|t| t.amplitude == 0.0)
    }

    /// `V(x + ξ)`. The argument is formed as `x + ξ` before anything else so
    /// that `evaluate(x, ξ) == evaluate(x + ξ, 0)` bit for bit.
    #[inline]
    pub fn evaluate(&self, x: f64, xi: f64) -> f64 {
        let y = x + xi;
        self.terms()
            .iter()
            .map(|t| t.amplitude * (t.angular() * y + t.phase).cos())
            .sum()
    }

    /// `V'(x + ξ)`.
    #[inline]
    pub fn derivative(&self, x: f64, xi: f64) -> f64 {
        let y = x + xi;
        self.terms()
            .iter()
            .map(|t| -t.amplitude * t.angular() * (t.angular() * y + t.phase).sin())
            .sum()
    }

    /// Value and derivative with one `sin_cos` per term.
    #[inline]
    pub fn evaluate_with_derivative(&self, x: f64, xi: f64) -> (f64, f64) {
        let y = x + xi;
        let mut v = 0.0;
        let mut dv = 0.0;
        for t in self.terms() {
            let w = t.angular();
            let (s, c) = (w * y + t.phase).sin_cos();
            v += t.amplitude * c;
            dv -= t.amplitude * w * s;
        }
        (v, dv)
    }

    /// `Σ|amplitude|`, a bound on `|V|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.terms().iter().map(|t| t.amplitude.abs()).sum()
    }

    /// `Σ|amplitude · 2π · frequency|`, a bound on `|V'|`.
    pub fn derivative_bound(&self) -> f64 {
        self.terms()
            .iter()
            .map(|t| (t.amplitude * t.angular()).abs())
            .sum()
    }

    pub fn max_frequency(&self) -> f64 {
        self.terms()
            .iter()
            .filter(|t| t.amplitude != 0.0)
            .map(|t| t.frequency.abs())
            .fold(0.0, f64::max)
    }

    /// Mean of `V_ξ` over `[from, from + width]` by the composite trapezoid rule.
    pub fn window_average(&self, from: f64, width: f64, xi: f64) -> f64 {
        const PANELS: usize = 128;
        if self.is_zero() {
            return 0.0;
        }
        let h = width / PANELS as f64;
        let mut acc = 0.5 * (self.evaluate(from, xi) + self.evaluate(from + width, xi));
        for i in 1..PANELS {
            acc += self.evaluate(from + i as f64 * h, xi);
        }
        acc * h / width
    }

    /// Common period when every frequency is an integer multiple of the
    /// smallest one (up to `1e-12` relative); `None` otherwise.
    pub fn common_period(&self) -> Option<f64> {
        let active: Vec<f64> = self
            .terms()
            .iter()
            .filter(|t| t.amplitude != 0.0 && t.frequency != 0.0)
            .map(|t| t.frequency.abs())
            .collect();
        let base = active.iter().copied().fold(f64::INFINITY, f64::min);
        if !base.is_finite() {
            return None;
        }
        let commensurate = active.iter().all(|f| {
            let ratio = f / base;
            (ratio - ratio.round()).abs() <= 1e-12 * ratio
        });
        commensurate.then(|| 1.0 / base)
    }
}

impl fmt::Display for PotentialSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PotentialSpec::Zero => write!(f, "zero"),
            PotentialSpec::CosineSum { terms } => {
                let parts: Vec<String> = terms
                    .iter()
                    .map(|t| format!("{},{},{}", t.amplitude, t.frequency, t.phase))
                    .collect();
                write!(f, "{}", parts.join(";"))
            }
        }
    }
}

/// Parses `zero`, `mathieu`, `mathieu:<amplitude>`, `golden`, or a list of
/// `amplitude,frequency[,phase]` terms separated by `;`.
impl FromStr for PotentialSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |msg: &str| Error::Config(format!("potential `{s}`: {msg}"));
        match s {
            "zero" | "0" => return Ok(PotentialSpec::Zero),
            "mathieu" => return Ok(PotentialSpec::mathieu(2.0)),
            "golden" => return Ok(PotentialSpec::golden()),
            _ => {}
        }
        if let Some(amp) = s.strip_prefix("mathieu:") {
            let a: f64 = amp.trim().parse().map_err(|_| bad("bad amplitude"))?;
            return Ok(PotentialSpec::mathieu(a));
        }
        let mut terms = Vec::new();
        for part in s.split(';').filter(|p| !p.trim().is_empty()) {
            let nums: std::result::Result<Vec<f64>, _> =
                part.split(',').map(|v| v.trim().parse::<f64>()).collect();
            let nums = nums.map_err(|_| bad("expected numbers"))?;
            match nums.as_slice() {
                [a, f] => terms.push(CosineTerm::new(*a, *f, 0.0)),
                [a, f, p] => terms.push(CosineTerm::new(*a, *f, *p)),
                _ => return Err(bad("each term needs 2 or 3 numbers")),
            }
        }
        if terms.is_empty() {
            return Err(bad("no terms"));
        }
        Ok(PotentialSpec::CosineSum { terms })
    }
}

/// A compact interval `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub a: f64,
    pub b: f64,
}

impl Window {
    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Growth {
    Geometric {
        center: f64,
        scale: f64,
        ratio: f64,
    },
    Explicit,
}

/// Increasing chain of windows `Λ_0 ⊂ Λ_1 ⊂ …` used for Λ-means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowChain {
    windows: Vec<Window>,
    growth: Growth,
}

impl Default for WindowChain {
    fn default() -> Self {
        Self::geometric(0.0, 25.0, 1.6, 8).expect("default chain parameters are valid")
    }
}

impl WindowChain {
    /// `[center - c·rⁿ, center + c·rⁿ]` for `n = 0..count`.
    pub fn geometric(center: f64, scale: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(scale > 0.0) || !(ratio > 1.0) || count == 0 {
            return Err(Error::Config(format!(
                "window chain needs scale > 0, ratio > 1, count ≥ 1 (got {scale}, {ratio}, {count})"
            )));
        }
        let windows = (0..count)
            .map(|n| {
                let half = scale * ratio.powi(n as i32);
                Window {
                    a: center - half,
                    b: center + half,
                }
            })
            .collect();
        Ok(Self {
            windows,
            growth: Growth::Geometric {
                center,
                scale,
                ratio,
            },
        })
    }

    pub fn from_windows(windows: Vec<Window>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Config("window chain is empty".into()));
        }
        for w in &windows {
            if !(w.b > w.a) {
                return Err(Error::Config(format!(
                    "window [{}, {}] is degenerate",
                    w.a, w.b
                )));
            }
        }
        for pair in windows.windows(2) {
            if pair[1].a > pair[0].a || pair[1].b < pair[0].b {
                return Err(Error::Config("windows must be nested and increasing".into()));
            }
        }
        Ok(Self {
            windows,
            growth: Growth::Explicit,
        })
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn largest(&self) -> Window {
        *self.windows.last().expect("chain is never empty")
    }

    /// Same chain with the first `count` windows only.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        let count = count.min(self.windows.len());
        let mut windows = self.windows.clone();
        windows.truncate(count);
        let mut chain = Self::from_windows(windows)?;
        chain.growth = self.growth;
        Ok(chain)
    }

    /// Same chain translated by `shift`.
    pub fn shifted(&self, shift: f64) -> Self {
        let windows = self
            .windows
            .iter()
            .map(|w| Window {
                a: w.a + shift,
                b: w.b + shift,
            })
            .collect();
        let growth = match self.growth {
            Growth::Geometric {
                center,
                scale,
                ratio,
            } => Growth::Geometric {
                center: center + shift,
                scale,
                ratio,
            },
            Growth::Explicit => Growth::Explicit,
        };
        Self { windows, growth }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_potential_vanishes() {
        assert_eq!(PotentialSpec::Zero.evaluate(3.7, 1.2), 0.0);
        assert_eq!(PotentialSpec::Zero.derivative(3.7, 1.2), 0.0);
    }

    #[test]
    fn cosine_at_origin() {
        let v = PotentialSpec::mathieu(2.0);
        assert_eq!(v.evaluate(0.0, 0.0), 2.0);
        assert_eq!(v.derivative(0.0, 0.0), 0.0);
    }

    #[test]
    fn translate_identity_example() {
        let v = PotentialSpec::cosine_sum(vec![CosineTerm::new(1.0, 0.5, 0.3)]);
        assert_eq!(v.evaluate(1.1, 0.4), v.evaluate(1.5, 0.0));
    }

    #[test]
    fn derivative_matches_central_difference() {
        let v = PotentialSpec::cosine_sum(vec![CosineTerm::new(1.0, 0.5, 0.3)]);
        let h = 1e-5;
        let fd = (v.evaluate(0.9 + h, 0.0) - v.evaluate(0.9 - h, 0.0)) / (2.0 * h);
        let exact = v.derivative(0.9, 0.0);
        assert!(((fd - exact) / exact).abs() < 1e-8, "{fd} vs {exact}");
    }

    #[test]
    fn periodic_when_commensurate() {
        let v = PotentialSpec::cosine_sum(vec![
            CosineTerm::new(1.0, 0.5, 0.3),
            CosineTerm::new(0.7, 1.5, -1.0),
        ]);
        let period = v.common_period().unwrap();
        assert!((period - 2.0).abs() < 1e-14);
        for i in 0..200 {
            let x = -20.0 + 0.2 * i as f64;
            assert!((v.evaluate(x + period, 0.0) - v.evaluate(x, 0.0)).abs() < 1e-12);
        }
        assert!(PotentialSpec::golden().common_period().is_none());
    }

    #[test]
    fn parse_forms() {
        assert_eq!("zero".parse::<PotentialSpec>().unwrap(), PotentialSpec::Zero);
        assert_eq!(
            "mathieu".parse::<PotentialSpec>().unwrap(),
            PotentialSpec::mathieu(2.0)
        );
        let v: PotentialSpec = "1,0.5,0.3; 2,1".parse().unwrap();
        assert_eq!(v.terms().len(), 2);
        assert_eq!(v.terms()[1].phase, 0.0);
        assert!("1".parse::<PotentialSpec>().is_err());
        assert!("cos".parse::<PotentialSpec>().is_err());
    }

    #[test]
    fn default_chain_is_nested() {
        let chain = WindowChain::default();
        assert_eq!(chain.len(), 8);
        for pair in chain.windows().windows(2) {
            assert!(pair[1].a <= pair[0].a && pair[0].b <= pair[1].b);
        }
        assert!((chain.windows()[0].b - 25.0).abs() < 1e-12);
        assert!(WindowChain::geometric(0.0, 1.0, 0.9, 3).is_err());
        assert!(WindowChain::from_windows(vec![
            Window { a: -2.0, b: 2.0 },
            Window { a: -1.0, b: 3.0 }
        ])
        .is_err());
    }

    fn any_potential() -> impl Strategy<Value = PotentialSpec> {
        prop::collection::vec((-3.0..3.0f64, 0.01..2.0f64, -3.2..3.2f64), 1..4).prop_map(
            |terms| {
                PotentialSpec::cosine_sum(
                    terms
                        .into_iter()
                        .map(|(a, f, p)| CosineTerm::new(a, f, p))
                        .collect(),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn translate_identity_is_exact(v in any_potential(), x in -1e3..1e3f64, xi in -1e3..1e3f64) {
            prop_assert_eq!(v.evaluate(x, xi), v.evaluate(x + xi, 0.0));
            prop_assert_eq!(v.derivative(x, xi), v.derivative(x + xi, 0.0));
        }

        #[test]
        fn bounded_and_lipschitz(v in any_potential(), x in -1e3..1e3f64) {
            prop_assert!(v.evaluate(x, 0.0).abs() <= v.amplitude_bound() + 1e-12);
            prop_assert!(v.derivative(x, 0.0).abs() <= v.derivative_bound() + 1e-12);
            let (val, der) = v.evaluate_with_derivative(x, 0.0);
            prop_assert!((val - v.evaluate(x, 0.0)).abs() < 1e-12);
            prop_assert!((der - v.derivative(x, 0.0)).abs() < 1e-12);
        }
    }
}
