//! Dirichlet box spectra by Prüfer shooting: eigenvalue counts, eigenvalues,
//! the integrated density of states and gap detection.
//!
//! On a box `[a, b]` with `θ(a) = 0`, the number of Dirichlet eigenvalues
//! below `E` is `⌊θ(b; E)/π⌋` (Sturm oscillation).

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::{PotentialSpec, WindowChain};
use crate::prufer::{self, crossings_below, IntegratorConfig};
use crate::roots::{newton_increasing, Bracket};

/// θ(b) closer than this to a multiple of π marks the count as ambiguous.
pub const AMBIGUITY_WINDOW: f64 = 1e-7;

/// IDS variation tolerated across a plateau, in states of the largest box.
pub const PLATEAU_STATES: u64 = 2;

/// States the two neighbourhoods of a plateau, each as wide as the plateau,
/// must hold together.
pub const MIN_FLANK_STATES: u64 = 12;

/// Minimum number of scan cells a plateau has to span.
pub const MIN_PLATEAU_CELLS: usize = 3;

/// Default fraction of the gap width excluded at each edge for label
/// evaluations.
pub const EDGE_MARGIN_FRACTION: f64 = 0.01;

fn default_margin_fraction() -> f64 {
    EDGE_MARGIN_FRACTION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    /// Flat at the two largest window scales.
    Confirmed,
    Heuristic,
}

/// Open interval `(lower, upper)` disjoint from the computed spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub lower: f64,
    pub upper: f64,
    pub confidence: Confidence,
    #[serde(default = "default_margin_fraction")]
    pub margin_fraction: f64,
}

impl Gap {
    pub fn new(lower: f64, upper: f64, confidence: Confidence) -> Result<Self> {
        if !(upper > lower) {
            return Err(Error::InvalidInput(format!(
                "gap needs lower < upper (got {lower}, {upper})"
            )));
        }
        Ok(Self {
            lower,
            upper,
            confidence,
            margin_fraction: EDGE_MARGIN_FRACTION,
        })
    }

    pub fn with_margin(self, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction < 0.5) {
            return Err(Error::InvalidInput(format!(
                "edge margin fraction {fraction} outside (0, 0.5)"
            )));
        }
        Ok(Self {
            margin_fraction: fraction,
            ..self
        })
    }

    /// `|Δ|`.
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    /// `E₀ = inf Δ`.
    pub fn base(&self) -> f64 {
        self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// δ, the edge margin.
    pub fn margin(&self) -> f64 {
        self.margin_fraction * self.width()
    }

    /// `[lower + δ, upper − δ]`.
    pub fn interior(&self) -> (f64, f64) {
        (self.lower + self.margin(), self.upper - self.margin())
    }

    pub fn contains(&self, energy: f64) -> bool {
        energy > self.lower && energy < self.upper
    }
}

/// Eigenvalue count with the angle it was read from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenCount {
    pub count: u64,
    pub theta: f64,
    /// `E` is within integrator resolution of a box eigenvalue.
    pub ambiguous: bool,
}

pub fn eigenvalue_count(
    spec: &PotentialSpec,
    a: f64,
    b: f64,
    offset: f64,
    energy: f64,
) -> Result<EigenCount> {
    eigenvalue_count_with(spec, a, b, offset, energy, &IntegratorConfig::default())
}

pub fn eigenvalue_count_with(
    spec: &PotentialSpec,
    a: f64,
    b: f64,
    offset: f64,
    energy: f64,
    config: &IntegratorConfig,
) -> Result<EigenCount> {
    if !(b > a) {
        return Err(Error::InvalidInput(format!("box [{a}, {b}] is empty")));
    }
    let theta = prufer::theta_endpoint(spec, energy, offset, a, b, 0.0, config)?;
    let ratio = theta / PI;
    let ambiguous = (ratio - ratio.round()).abs() * PI < AMBIGUITY_WINDOW && ratio.round() >= 1.0;
    Ok(EigenCount {
        count: crossings_below(theta).max(0) as u64,
        theta,
        ambiguous,
    })
}

/// All box eigenvalues in `[e_min, e_max]`, ascending, refined to `1e-9`
/// absolute or better.
pub fn dirichlet_eigenvalues(
    spec: &PotentialSpec,
    a: f64,
    b: f64,
    offset: f64,
    e_min: f64,
    e_max: f64,
) -> Result<Vec<f64>> {
    if !(e_max > e_min) {
        return Err(Error::InvalidInput(format!(
            "energy range [{e_min}, {e_max}] is empty"
        )));
    }
    let config = IntegratorConfig::default();
    let lo = eigenvalue_count_with(spec, a, b, offset, e_min, &config)?;
    let hi = eigenvalue_count_with(spec, a, b, offset, e_max, &config)?;
    let first = crossings_below(lo.theta) + 1;
    let last = crossings_below(hi.theta);
    let mut out = Vec::new();
    let mut left = e_min;
    for k in first..=last {
        let root = box_eigenvalue(spec, a, b, offset, k as u64, left, e_max, &config)?;
        out.push(root);
        left = root;
    }
    Ok(out)
}

/// The `k`-th box eigenvalue (1-based), known to lie in `[lo, hi]`.
#[allow(clippy::too_many_arguments)]
fn box_eigenvalue(
    spec: &PotentialSpec,
    a: f64,
    b: f64,
    offset: f64,
    k: u64,
    lo: f64,
    hi: f64,
    config: &IntegratorConfig,
) -> Result<f64> {
    let target = k as f64 * PI;
    let eval = |e: f64| -> Result<(f64, f64)> {
        let trace = prufer::integrate_with(spec, e, offset, a, b, 0.0, config)?;
        Ok((trace.last().theta - target, trace.norm_ratio))
    };
    newton_increasing(eval, Bracket { lo, hi }, 0.5 * (lo + hi), 1e-12, 1e-11)
        .map_err(|e| e.context(format!("box eigenvalue #{k}")))
}

/// One window's entry of an IDS sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdsSample {
    pub length: f64,
    pub count: u64,
    pub value: f64,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsEstimate {
    pub per_window: Vec<IdsSample>,
    pub value: f64,
    pub error_estimate: f64,
    /// Spread of the last three values did not shrink relative to the three
    /// before them.
    pub non_convergent: bool,
}

pub(crate) fn spread(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if values.is_empty() {
        0.0
    } else {
        max - min
    }
}

/// Integrated density of states `N_n / |Λ_n|` over the chain.
pub fn ids(
    spec: &PotentialSpec,
    energy: f64,
    chain: &WindowChain,
    offset: f64,
) -> Result<IdsEstimate> {
    let config = IntegratorConfig::default();
    let per_window = chain
        .windows()
        .par_iter()
        .map(|w| {
            let c = eigenvalue_count_with(spec, w.a, w.b, offset, energy, &config)?;
            Ok(IdsSample {
                length: w.length(),
                count: c.count,
                value: c.count as f64 / w.length(),
                ambiguous: c.ambiguous,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_ids(per_window))
}

fn summarize_ids(per_window: Vec<IdsSample>) -> IdsEstimate {
    let values: Vec<f64> = per_window.iter().map(|s| s.value).collect();
    let n = values.len();
    let last3 = &values[n.saturating_sub(3)..];
    let resolution = 1.0 / per_window[n - 1].length;
    let error_estimate = spread(last3).max(resolution);
    let non_convergent = n >= 6 && spread(last3) > spread(&values[n - 6..n - 3]) + resolution;
    IdsEstimate {
        value: values[n - 1],
        per_window,
        error_estimate,
        non_convergent,
    }
}

/// One point of an IDS scan at the two largest window scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub energy: f64,
    pub count_large: u64,
    pub count_small: u64,
    pub ids: f64,
}

/// Counts on an energy grid for the two largest windows of `chain`.
pub fn ids_scan(
    spec: &PotentialSpec,
    e_min: f64,
    e_max: f64,
    resolution: f64,
    chain: &WindowChain,
    offset: f64,
) -> Result<Vec<ScanPoint>> {
    if !(resolution > 0.0) || !(e_max > e_min) {
        return Err(Error::InvalidInput(format!(
            "scan [{e_min}, {e_max}] at resolution {resolution}"
        )));
    }
    let windows = chain.windows();
    let large = windows[windows.len() - 1];
    let small = windows[windows.len().saturating_sub(2)];
    let cells = ((e_max - e_min) / resolution).ceil() as usize;
    let config = IntegratorConfig::default();
    (0..=cells)
        .into_par_iter()
        .map(|k| {
            let energy = (e_min + k as f64 * resolution).min(e_max);
            let cl = eigenvalue_count_with(spec, large.a, large.b, offset, energy, &config)?;
            let cs = eigenvalue_count_with(spec, small.a, small.b, offset, energy, &config)?;
            Ok(ScanPoint {
                energy,
                count_large: cl.count,
                count_small: cs.count,
                ids: cl.count as f64 / large.length(),
            })
        })
        .collect()
}

/// Scans the IDS on a grid and returns bounded plateaus as gaps, with edges
/// refined by bisection on the box counts.
pub fn detect_gaps(
    spec: &PotentialSpec,
    e_min: f64,
    e_max: f64,
    resolution: f64,
    chain: &WindowChain,
    offset: f64,
) -> Result<Vec<Gap>> {
    let scan = ids_scan(spec, e_min, e_max, resolution, chain, offset)?;
    gaps_from_scan(spec, &scan, chain, offset)
}

pub fn gaps_from_scan(
    spec: &PotentialSpec,
    scan: &[ScanPoint],
    chain: &WindowChain,
    offset: f64,
) -> Result<Vec<Gap>> {
    let large = chain.largest();
    let config = IntegratorConfig::default();
    let last = scan.len().saturating_sub(1);
    // the k-th large-box eigenvalue, bracketed by the scan
    let lambda = |k: u64| -> Result<f64> {
        let p = scan.partition_point(|q| q.count_large < k);
        if p == 0 || p > last {
            return Err(Error::Refinement {
                lo: scan[0].energy,
                hi: scan[last].energy,
                reason: format!("box eigenvalue #{k} is not inside the scan"),
            });
        }
        box_eigenvalue(spec, large.a, large.b, offset, k, scan[p - 1].energy, scan[p].energy, &config)
    };
    // box eigenvalues crowd towards a band edge, edge states stand apart
    let band_top = |deepest: u64, highest: u64| -> Result<f64> {
        let mut prev = lambda(deepest - 1)?;
        let mut top = lambda(deepest)?;
        for k in deepest + 1..=highest {
            let next = lambda(k)?;
            if next - top > top - prev {
                break;
            }
            prev = top;
            top = next;
        }
        Ok(top)
    };
    let band_bottom = |deepest: u64, lowest: u64| -> Result<f64> {
        let mut prev = lambda(deepest + 1)?;
        let mut bottom = lambda(deepest)?;
        for k in (lowest..deepest).rev() {
            let next = lambda(k)?;
            if bottom - next > prev - bottom {
                break;
            }
            prev = bottom;
            bottom = next;
        }
        Ok(bottom)
    };

    // for every right end, the furthest left start with few new states
    let mut reach = Vec::with_capacity(scan.len());
    let mut i = 0;
    for j in 0..=last {
        while scan[j].count_large - scan[i].count_large > PLATEAU_STATES {
            i += 1;
        }
        reach.push(i);
    }
    let count_near = |e: f64| scan[scan.partition_point(|p| p.energy < e).min(last)].count_large;
    let mut candidates: Vec<(usize, usize)> = (0..=last)
        .filter(|&j| j < last && reach[j + 1] > reach[j])
        .map(|j| (reach[j], j))
        .filter(|&(i, j)| {
            // bounded by spectrum on both sides, and clearly emptier than
            // equally wide neighbourhoods
            let width = scan[j].energy - scan[i].energy;
            let below = scan[i].count_large - count_near(scan[i].energy - width);
            let above = count_near(scan[j].energy + width) - scan[j].count_large;
            i > 0 && j - i >= MIN_PLATEAU_CELLS && below + above >= MIN_FLANK_STATES
        })
        .collect();
    candidates.sort_by_key(|&(i, j)| (std::cmp::Reverse(j - i), i));
    let mut plateaus: Vec<(usize, usize)> = Vec::new();
    for (i, j) in candidates {
        if plateaus.iter().all(|&(a, b)| j < a || i > b) {
            plateaus.push((i, j));
        }
    }
    plateaus.sort();

    let mut gaps = Vec::new();
    for (i, j) in plateaus {
        let confirmed = scan[j].count_small - scan[i].count_small <= PLATEAU_STATES;
        // a gap holds at most PLATEAU_STATES box edge states; the states not
        // seen on the plateau may sit on either side of it
        let inside = scan[j].count_large - scan[i].count_large;
        let spare = PLATEAU_STATES - inside;
        let deepest = scan[i].count_large.saturating_sub(spare);
        if deepest < 2 {
            continue;
        }
        let lower = band_top(deepest, scan[i].count_large)?;
        let upper = band_bottom(scan[j].count_large + spare + 1, scan[j].count_large + 1)?;
        let confidence = if confirmed {
            Confidence::Confirmed
        } else {
            Confidence::Heuristic
        };
        if upper > lower {
            gaps.push(Gap::new(lower, upper, confidence)?);
        }
    }
    Ok(gaps)
}
