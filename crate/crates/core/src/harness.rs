//! Experiment configuration, orchestration of all label computations per
//! gap, cross-label verdicts, convergence sweeps and persistence.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dirichlet::{self, phase_lift, trace_flow, CircleSample, Flow, MuTildeVariant, Side};
use crate::error::{Error, Result};
use crate::klabel::{self, PiTrace, TraceSettings};
use crate::potentials::{PotentialSpec, WindowChain};
use crate::prufer::IntegratorConfig;
use crate::rotation;
use crate::spectrum::{self, Gap, ScanPoint};
use crate::tridiag::FiniteDifferenceBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// `zero`, `mathieu[:a]`, `golden`, or `a,f[,φ];…` cosine terms.
    pub spec: String,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        PotentialConfig {
            spec: "mathieu:2".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub energy_min: f64,
    pub energy_max: f64,
    pub resolution: f64,
    /// ξ of the operator whose boxes are counted.
    pub offset: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            energy_min: -2.0,
            energy_max: 4.0,
            resolution: 0.01,
            offset: 0.0,
        }
    }
}

/// Windows `[center − scale·ratioⁿ, center + scale·ratioⁿ]`, `n < count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    pub center: f64,
    pub scale: f64,
    pub ratio: f64,
    pub count: usize,
}

impl ChainConfig {
    pub fn build(&self) -> Result<WindowChain> {
        WindowChain::geometric(self.center, self.scale, self.ratio, self.count)
    }

    fn space_default() -> Self {
        ChainConfig {
            center: 0.0,
            scale: 25.0,
            ratio: 1.6,
            count: 8,
        }
    }

    fn xi_default() -> Self {
        ChainConfig {
            center: 0.0,
            scale: 20.0,
            ratio: 1.6,
            count: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    /// Half-line truncation `L`.
    pub truncation: f64,
    /// Matrix grid step `h`.
    pub grid_step: f64,
    /// ξ step of the Dirichlet flows.
    pub dxi: f64,
    /// ξ spacing of the trace quadrature.
    pub trace_dxi: f64,
    /// Central-difference step in ξ; estimated from the flow when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivative_step: Option<f64>,
    /// Fraction of the gap width kept clear of each edge.
    pub edge_margin: f64,
    pub mass_threshold: f64,
    pub mass_sweep: Vec<f64>,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            truncation: 60.0,
            grid_step: klabel::DEFAULT_GRID_STEP,
            dxi: 0.05,
            trace_dxi: 0.01,
            derivative_step: None,
            edge_margin: spectrum::EDGE_MARGIN_FRACTION,
            mass_threshold: klabel::DEFAULT_MASS_THRESHOLD,
            mass_sweep: klabel::MASS_SWEEP.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelConfig {
    /// Gaps, lowest first, that receive the full set of labels.
    pub max_gaps: usize,
    /// ξ window of the trace formula; one period (or the smallest ξ window)
    /// when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_from: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_to: Option<f64>,
    /// Energy for single-energy commands and sweeps; the first gap's
    /// midpoint when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_energy: Option<f64>,
    pub probe_xi: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        LabelConfig {
            max_gaps: 1,
            trace_from: None,
            trace_to: None,
            probe_energy: None,
            probe_xi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialConfig,
    pub scan: ScanConfig,
    pub chain: ChainConfig,
    pub xi_chain: ChainConfig,
    pub numerics: NumericsConfig,
    pub labels: LabelConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            potential: PotentialConfig::default(),
            scan: ScanConfig::default(),
            chain: ChainConfig::space_default(),
            xi_chain: ChainConfig::xi_default(),
            numerics: NumericsConfig::default(),
            labels: LabelConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Command-line values that replace configuration entries when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub potential: Option<String>,
    pub energy_min: Option<f64>,
    pub energy_max: Option<f64>,
    pub resolution: Option<f64>,
    pub xi_range: Option<(f64, f64)>,
    pub truncation: Option<f64>,
    pub grid_step: Option<f64>,
    pub dxi: Option<f64>,
    pub mass_threshold: Option<f64>,
    pub energy: Option<f64>,
    pub out: Option<String>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_toml(&text).map_err(|e| e.context(format!("config {}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(p) = &o.potential {
            self.potential.spec = p.clone();
        }
        if let Some(v) = o.energy_min {
            self.scan.energy_min = v;
        }
        if let Some(v) = o.energy_max {
            self.scan.energy_max = v;
        }
        if let Some(v) = o.resolution {
            self.scan.resolution = v;
        }
        if let Some((a, b)) = o.xi_range {
            self.labels.trace_from = Some(a);
            self.labels.trace_to = Some(b);
        }
        if let Some(v) = o.truncation {
            self.numerics.truncation = v;
        }
        if let Some(v) = o.grid_step {
            self.numerics.grid_step = v;
        }
        if let Some(v) = o.dxi {
            self.numerics.dxi = v;
        }
        if let Some(v) = o.mass_threshold {
            self.numerics.mass_threshold = v;
        }
        if let Some(v) = o.energy {
            self.labels.probe_energy = Some(v);
        }
        if let Some(v) = &o.out {
            self.output.dir = v.clone();
        }
        self.validate()
    }

    pub fn potential(&self) -> Result<PotentialSpec> {
        self.potential.spec.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.potential()?;
        let positive = [
            ("scan.resolution", self.scan.resolution),
            ("numerics.truncation", self.numerics.truncation),
            ("numerics.grid_step", self.numerics.grid_step),
            ("numerics.dxi", self.numerics.dxi),
            ("numerics.trace_dxi", self.numerics.trace_dxi),
            ("numerics.derivative_step", self.numerics.derivative_step.unwrap_or(1.0)),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive (got {v})"));
            }
        }
        if !(self.scan.energy_max > self.scan.energy_min) {
            return bad(format!(
                "empty energy range [{}, {}]",
                self.scan.energy_min, self.scan.energy_max
            ));
        }
        self.chain.build().map_err(|e| e.context("chain"))?;
        self.xi_chain.build().map_err(|e| e.context("xi_chain"))?;
        if !(self.numerics.edge_margin > 0.0 && self.numerics.edge_margin < 0.5) {
            return bad(format!("edge margin {} outside (0, 0.5)", self.numerics.edge_margin));
        }
        for &t in std::iter::once(&self.numerics.mass_threshold).chain(&self.numerics.mass_sweep) {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("mass threshold {t} outside (0, 1)"));
            }
        }
        match (self.labels.trace_from, self.labels.trace_to) {
            (Some(a), Some(b)) if !(b > a) => return bad(format!("empty trace window ({a}, {b})")),
            (Some(_), None) | (None, Some(_)) => {
                return bad("trace_from and trace_to go together".into())
            }
            _ => {}
        }
        if self.output.dir.is_empty() {
            return bad("output.dir is empty".into());
        }
        Ok(())
    }

    fn trace_window(&self, spec: &PotentialSpec, xi_chain: &WindowChain) -> (f64, f64) {
        if let (Some(a), Some(b)) = (self.labels.trace_from, self.labels.trace_to) {
            return (a, b);
        }
        match spec.common_period() {
            Some(t) => (self.xi_chain.center, self.xi_chain.center + t),
            None => {
                let w = xi_chain.windows()[0];
                (w.a, w.b)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub first: String,
    pub second: String,
    pub difference: f64,
    /// `err_first + err_second`.
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub mass_threshold: f64,
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapLabelReport {
    pub index: usize,
    pub gap: Gap,
    /// Energy at which IDS and α are evaluated.
    pub energy: f64,
    pub ids: Estimate,
    /// Finite-difference matrix count on the largest window.
    pub ids_matrix: Estimate,
    /// θ-lift of Ψ−.
    pub alpha: Estimate,
    /// Zero density of Ψ−.
    pub alpha_zeros: Estimate,
    pub beta_right_only: Estimate,
    pub beta_two_sided: Estimate,
    pub pi_trace: Estimate,
    pub pi_curves: Estimate,
    pub boundary_force: Estimate,
    pub max_dirichlet_values: usize,
    /// More than one right Dirichlet value at some ξ.
    pub outside_hypothesis: bool,
    pub trace_window: (f64, f64),
    pub derivative_step: f64,
    pub mass_sweep: Vec<SweepEntry>,
    pub count_mismatches: usize,
    pub unitarity_defect: f64,
    pub discrepancies: Vec<Discrepancy>,
    pub passed: bool,
}

impl GapLabelReport {
    pub fn labels(&self) -> Vec<(&'static str, Estimate)> {
        vec![
            ("ids", self.ids),
            ("ids_matrix", self.ids_matrix),
            ("alpha", self.alpha),
            ("alpha_zeros", self.alpha_zeros),
            ("beta_right_only", self.beta_right_only),
            ("beta_two_sided", self.beta_two_sided),
            ("pi_trace", self.pi_trace),
            ("pi_curves", self.pi_curves),
            ("boundary_force", self.boundary_force),
        ]
    }

    pub fn discrepancy(&self, first: &str, second: &str) -> Option<&Discrepancy> {
        self.discrepancies.iter().find(|d| {
            (d.first == first && d.second == second) || (d.first == second && d.second == first)
        })
    }
}

/// All pairs of labels; a pair passes when it agrees within the sum of the
/// two error estimates.
pub fn discrepancy_matrix(labels: &[(&str, Estimate)]) -> Vec<Discrepancy> {
    let mut out = Vec::new();
    for (i, (a, ea)) in labels.iter().enumerate() {
        for (b, eb) in &labels[i + 1..] {
            let difference = (ea.value - eb.value).abs();
            let tolerance = ea.error + eb.error;
            out.push(Discrepancy {
                first: a.to_string(),
                second: b.to_string(),
                difference,
                tolerance,
                pass: difference <= tolerance,
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub potential: String,
    pub gaps_detected: Vec<Gap>,
    pub reports: Vec<GapLabelReport>,
    pub passed: bool,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Everything a run produces: the report and the raw data behind it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub scan: Vec<ScanPoint>,
    pub flows: Vec<(usize, Flow)>,
    pub lifts: Vec<(usize, MuTildeVariant, Vec<CircleSample>)>,
    pub traces: Vec<(usize, PiTrace)>,
}

/// Detects gaps and evaluates every label on the first `max_gaps` of them.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let spec = config.potential()?;
    let chain = config.chain.build()?;
    let xi_chain = config.xi_chain.build()?;
    let scan = spectrum::ids_scan(
        &spec,
        config.scan.energy_min,
        config.scan.energy_max,
        config.scan.resolution,
        &chain,
        config.scan.offset,
    )?;
    let gaps: Vec<Gap> = spectrum::gaps_from_scan(&spec, &scan, &chain, config.scan.offset)?
        .into_iter()
        .map(|g| g.with_margin(config.numerics.edge_margin))
        .collect::<Result<_>>()?;
    let mut out = RunOutput {
        report: RunReport {
            config: config.clone(),
            potential: spec.to_string(),
            gaps_detected: gaps.clone(),
            reports: Vec::new(),
            passed: true,
        },
        scan,
        flows: Vec::new(),
        lifts: Vec::new(),
        traces: Vec::new(),
    };
    for (index, gap) in gaps.iter().enumerate().take(config.labels.max_gaps) {
        let r = gap_report(config, &spec, &chain, &xi_chain, index, gap, &mut out)
            .map_err(|e| e.context(format!("gap {index} ({}, {})", gap.lower, gap.upper)))?;
        out.report.passed &= r.passed;
        out.report.reports.push(r);
    }
    Ok(out)
}

fn gap_report(
    config: &ExperimentConfig,
    spec: &PotentialSpec,
    chain: &WindowChain,
    xi_chain: &WindowChain,
    index: usize,
    gap: &Gap,
    out: &mut RunOutput,
) -> Result<GapLabelReport> {
    let n = &config.numerics;
    let energy = gap.midpoint();
    let offset = config.scan.offset;

    let ids = spectrum::ids(spec, energy, chain, offset)?;
    let large = chain.largest();
    let matrix = FiniteDifferenceBox::new(spec, large.a, large.b, offset, n.grid_step)?;
    let ids_matrix = Estimate::new(
        matrix.count_below(energy) as f64 / large.length(),
        1.0 / large.length(),
    );
    let alpha = rotation::johnson_moser_alpha_with(
        spec,
        energy,
        offset,
        chain,
        n.truncation,
        &IntegratorConfig::default(),
    )?;

    let w = xi_chain.largest();
    let right = trace_flow(spec, gap, w.a, w.b, n.dxi, n.truncation, Side::Right)?;
    let left = trace_flow(spec, gap, w.a, w.b, n.dxi, n.truncation, Side::Left)?;
    let lift_r = phase_lift(&right, None, MuTildeVariant::RightOnly)?;
    let lift_t = phase_lift(&right, Some(&left), MuTildeVariant::TwoSided)?;
    let beta_r = dirichlet::beta_from_lift(lift_r.clone(), xi_chain, MuTildeVariant::RightOnly);
    let beta_t = dirichlet::beta_from_lift(lift_t.clone(), xi_chain, MuTildeVariant::TwoSided);
    let pi_curves = klabel::pi_curves(&right, None, xi_chain, MuTildeVariant::RightOnly)?;
    let force = klabel::boundary_force(&right, xi_chain)?;

    let trace_window = config.trace_window(spec, xi_chain);
    let derivative_step = n
        .derivative_step
        .unwrap_or_else(|| klabel::derivative_step_from_flow(&right));
    let mut thresholds = vec![n.mass_threshold];
    thresholds.extend(n.mass_sweep.iter().copied().filter(|&t| t != n.mass_threshold));
    let settings = TraceSettings {
        truncation: n.truncation,
        grid_step: n.grid_step,
        dxi: n.trace_dxi,
        derivative_step,
        mass_thresholds: thresholds,
        cross_check: true,
        dim_cap: klabel::DEFAULT_DIM_CAP,
    };
    let mut traces = klabel::pi_trace_sweep(spec, gap, trace_window, &settings)?;
    let mut mass_sweep: Vec<SweepEntry> = traces
        .iter()
        .map(|t| SweepEntry {
            mass_threshold: t.mass_threshold,
            value: t.value,
            error: t.error_estimate,
        })
        .collect();
    mass_sweep.sort_by(|a, b| a.mass_threshold.total_cmp(&b.mass_threshold));
    let trace = traces.swap_remove(0);

    let mut report = GapLabelReport {
        index,
        gap: *gap,
        energy,
        ids: Estimate::new(ids.value, ids.error_estimate),
        ids_matrix,
        alpha: Estimate::new(alpha.value, alpha.error_estimate),
        alpha_zeros: Estimate::new(alpha.zero_density.value, alpha.error_estimate),
        beta_right_only: Estimate::new(beta_r.value, beta_r.error_estimate),
        beta_two_sided: Estimate::new(beta_t.value, beta_t.error_estimate),
        pi_trace: Estimate::new(trace.value, trace.error_estimate),
        pi_curves: Estimate::new(pi_curves.value, pi_curves.error_estimate),
        boundary_force: Estimate::new(force.value, force.error_estimate),
        max_dirichlet_values: right.max_values,
        outside_hypothesis: force.outside_hypothesis,
        trace_window,
        derivative_step,
        mass_sweep,
        count_mismatches: trace.count_mismatches.len(),
        unitarity_defect: trace.max_unitarity_defect,
        discrepancies: Vec::new(),
        passed: false,
    };
    report.discrepancies = discrepancy_matrix(&report.labels());
    report.passed = report.discrepancies.iter().all(|d| d.pass);

    out.flows.push((index, right));
    out.flows.push((index, left));
    out.lifts.push((index, MuTildeVariant::RightOnly, lift_r));
    out.lifts.push((index, MuTildeVariant::TwoSided, lift_t));
    out.traces.push((index, trace));
    Ok(report)
}

#[derive(Serialize)]
struct FlowRow<'a> {
    gap: usize,
    xi: f64,
    mu: f64,
    side: &'a str,
    curve_id: usize,
}

#[derive(Serialize)]
struct LiftRow<'a> {
    gap: usize,
    variant: &'a str,
    xi: f64,
    phase: f64,
}

#[derive(Serialize)]
struct TraceRow {
    gap: usize,
    xi: f64,
    integrand_re: f64,
    integrand_im: f64,
    retained: usize,
    shooting: Option<usize>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::from(e).context(format!("writing {}", path.display())))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scan_csv(path: &Path, scan: &[ScanPoint]) -> Result<()> {
    write_csv(path, scan)
}

pub fn write_flow_csv(path: &Path, flows: &[(usize, Flow)]) -> Result<()> {
    write_csv(
        path,
        flows.iter().flat_map(|(gap, flow)| {
            flow.curves.iter().flat_map(move |c| {
                c.extended().into_iter().map(move |(xi, mu)| FlowRow {
                    gap: *gap,
                    xi,
                    mu,
                    side: c.side.as_str(),
                    curve_id: c.id,
                })
            })
        }),
    )
}

pub fn write_lift_csv(path: &Path, lifts: &[(usize, MuTildeVariant, Vec<CircleSample>)]) -> Result<()> {
    write_csv(
        path,
        lifts.iter().flat_map(|(gap, variant, lift)| {
            lift.iter().map(move |s| LiftRow {
                gap: *gap,
                variant: variant.as_str(),
                xi: s.xi,
                phase: s.phase,
            })
        }),
    )
}

pub fn write_trace_csv(path: &Path, traces: &[(usize, PiTrace)]) -> Result<()> {
    write_csv(
        path,
        traces.iter().flat_map(|(gap, t)| {
            t.samples.iter().map(move |s| TraceRow {
                gap: *gap,
                xi: s.xi,
                integrand_re: s.integrand_re,
                integrand_im: s.integrand_im,
                retained: s.retained,
                shooting: s.shooting,
            })
        }),
    )
}

/// Writes `report.json`, `ids_scan.csv`, `flow_curves.csv`, `phase_lift.csv`
/// and `trace_integrand.csv` into `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    fs::write(dir.join("report.json"), out.report.to_json()?)?;
    write_scan_csv(&dir.join("ids_scan.csv"), &out.scan)?;
    write_flow_csv(&dir.join("flow_curves.csv"), &out.flows)?;
    write_lift_csv(&dir.join("phase_lift.csv"), &out.lifts)?;
    write_trace_csv(&dir.join("trace_integrand.csv"), &out.traces)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Truncation,
    GridStep,
    Dxi,
    Chain,
}

impl FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L" | "truncation" => Ok(Parameter::Truncation),
            "h" | "grid_step" => Ok(Parameter::GridStep),
            "dxi" => Ok(Parameter::Dxi),
            "chain" => Ok(Parameter::Chain),
            _ => Err(Error::Config(format!(
                "unknown sweep parameter `{s}` (expected L, h, dxi or chain)"
            ))),
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Parameter::Truncation => "L",
            Parameter::GridStep => "h",
            Parameter::Dxi => "dxi",
            Parameter::Chain => "chain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceColumn {
    pub name: String,
    pub values: Vec<f64>,
    /// `q_{k+1} − q_k`.
    pub differences: Vec<f64>,
    /// `d_{k+1} / d_k`.
    pub ratios: Vec<f64>,
    /// `ln|d_k/d_{k+1}| / ln|p_k/p_{k+1}|` for parameter values `p`.
    pub orders: Vec<f64>,
}

impl ConvergenceColumn {
    fn new(name: &str, params: &[f64], values: Vec<f64>) -> Self {
        let differences: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        let ratios = differences.windows(2).map(|d| d[1] / d[0]).collect();
        let orders = differences
            .windows(2)
            .zip(params.windows(2))
            .map(|(d, p)| (d[0] / d[1]).abs().ln() / (p[0] / p[1]).abs().ln())
            .collect();
        ConvergenceColumn {
            name: name.into(),
            values,
            differences,
            ratios,
            orders,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub parameter: Parameter,
    /// Swept values; for the chain, the largest window length.
    pub values: Vec<f64>,
    pub columns: Vec<ConvergenceColumn>,
}

impl ConvergenceTable {
    pub fn column(&self, name: &str) -> Option<&ConvergenceColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            parameter: String,
            value: f64,
            label: &'a str,
            result: f64,
        }
        write_csv(
            path,
            self.columns.iter().flat_map(|c| {
                self.values.iter().zip(&c.values).map(move |(&value, &result)| Row {
                    parameter: self.parameter.to_string(),
                    value,
                    label: &c.name,
                    result,
                })
            }),
        )
    }
}

fn first_gap(config: &ExperimentConfig, spec: &PotentialSpec) -> Result<Option<Gap>> {
    let chain = config.chain.build()?;
    let gaps = spectrum::detect_gaps(
        spec,
        config.scan.energy_min,
        config.scan.energy_max,
        config.scan.resolution,
        &chain,
        config.scan.offset,
    )?;
    gaps.into_iter()
        .next()
        .map(|g| g.with_margin(config.numerics.edge_margin))
        .transpose()
}

/// Probe energy from the config, else the first gap's midpoint.
pub fn probe_energy(config: &ExperimentConfig, spec: &PotentialSpec) -> Result<f64> {
    if let Some(e) = config.labels.probe_energy {
        return Ok(e);
    }
    first_gap(config, spec)?
        .map(|g| g.midpoint())
        .ok_or_else(|| Error::Config("no gap detected and no probe_energy given".into()))
}

/// Labels as functions of one numerical parameter, others held at the
/// config values. For `chain`, the values are window counts.
pub fn convergence_study(
    config: &ExperimentConfig,
    parameter: Parameter,
    values: &[f64],
) -> Result<ConvergenceTable> {
    if values.is_empty() {
        return Err(Error::InvalidInput("empty sweep".into()));
    }
    config.validate()?;
    let spec = config.potential()?;
    let n = &config.numerics;
    let xi = config.labels.probe_xi;
    let offset = config.scan.offset;
    let needs_gap = matches!(parameter, Parameter::Truncation | Parameter::Dxi)
        || config.labels.probe_energy.is_none();
    let gap = if needs_gap { first_gap(config, &spec)? } else { None };
    let energy = config.labels.probe_energy.or(gap.map(|g| g.midpoint()));
    let mut params = values.to_vec();
    let mut columns: Vec<(&str, Vec<f64>)> = Vec::new();
    let need_energy = || energy.ok_or_else(|| Error::Config("no gap detected and no probe_energy given".into()));
    match parameter {
        Parameter::Truncation => {
            let chain = config.chain.build()?;
            let e = need_energy()?;
            let mut alpha = Vec::new();
            let mut mu = Vec::new();
            for &l in values {
                alpha.push(
                    rotation::johnson_moser_alpha_with(&spec, e, offset, &chain, l, &IntegratorConfig::default())?
                        .value,
                );
                if let Some(g) = &gap {
                    let v = dirichlet::right_dirichlet_values(&spec, xi, g, l)?;
                    mu.push(v.first().copied().unwrap_or(f64::NAN));
                }
            }
            columns.push(("alpha", alpha));
            if gap.is_some() {
                columns.push(("dirichlet_value", mu));
            }
        }
        Parameter::GridStep => {
            let mut ground = Vec::new();
            let mut edge = Vec::new();
            for &h in values {
                let op = klabel::build_halfline(&spec, xi, n.truncation, h)?;
                ground.push(op.matrix().lowest_eigenvalue(1e-13));
                if let Some(g) = &gap {
                    let kept = klabel::edge_projector(&op, g, n.mass_threshold)?;
                    edge.push(kept.first().map_or(f64::NAN, |s| s.energy));
                }
            }
            columns.push(("halfline_ground", ground));
            if gap.is_some() {
                columns.push(("edge_energy", edge));
            }
        }
        Parameter::Dxi => {
            let g = gap.ok_or_else(|| Error::Config("no gap detected for the dxi sweep".into()))?;
            let xi_chain = config.xi_chain.build()?;
            let beta = values
                .iter()
                .map(|&d| {
                    dirichlet::beta(&spec, &g, &xi_chain, d, n.truncation, MuTildeVariant::RightOnly)
                        .map(|b| b.value)
                })
                .collect::<Result<Vec<_>>>()?;
            columns.push(("beta_right_only", beta));
        }
        Parameter::Chain => {
            let full = config.chain.build()?;
            let e = need_energy()?;
            let mut ids = Vec::new();
            let mut alpha = Vec::new();
            params.clear();
            for &count in values {
                if !(count >= 1.0 && count.fract() == 0.0) {
                    return Err(Error::Config(format!("window count {count} is not a positive integer")));
                }
                let chain = full.truncated(count as usize)?;
                params.push(chain.largest().length());
                ids.push(spectrum::ids(&spec, e, &chain, offset)?.value);
                alpha.push(
                    rotation::johnson_moser_alpha_with(&spec, e, offset, &chain, n.truncation, &IntegratorConfig::default())?
                        .value,
                );
            }
            columns.push(("ids", ids));
            columns.push(("alpha", alpha));
        }
    }
    Ok(ConvergenceTable {
        parameter,
        columns: columns
            .into_iter()
            .map(|(name, v)| ConvergenceColumn::new(name, &params, v))
            .collect(),
        values: params,
    })
}
