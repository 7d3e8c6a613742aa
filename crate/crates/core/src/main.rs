use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gaplab::dirichlet::{self, MuTildeVariant, Side};
use gaplab::harness::{self, ExperimentConfig, Overrides, Parameter};
use gaplab::klabel::{self, TraceSettings};
use gaplab::spectrum::{self, Gap};
use gaplab::{rotation, Error, Result};

#[derive(Parser)]
#[command(name = "gaplab", version, about = "Gap labels of 1D Schrödinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML experiment config; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `zero`, `mathieu[:a]`, `golden`, or `a,f[,phase];...`
    #[arg(long, global = true)]
    potential: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    energy_min: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    energy_max: Option<f64>,
    /// Energy grid step of the IDS scan.
    #[arg(long, global = true)]
    resolution: Option<f64>,
    /// ξ interval `a:b`.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_range)]
    xi_range: Option<(f64, f64)>,
    /// Half-line truncation length.
    #[arg(long = "L", global = true)]
    truncation: Option<f64>,
    /// Matrix grid step.
    #[arg(long = "h", global = true)]
    grid_step: Option<f64>,
    #[arg(long, global = true)]
    dxi: Option<f64>,
    #[arg(long, global = true)]
    mass_threshold: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// IDS scan and gap detection.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// IDS at one energy.
    Ids {
        #[arg(long, allow_hyphen_values = true)]
        energy: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Johnson-Moser rotation number at one energy.
    Rotation {
        #[arg(long, allow_hyphen_values = true)]
        energy: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Dirichlet flow through a gap.
    Flow {
        /// Index of the detected gap, lowest first.
        #[arg(long, default_value_t = 0)]
        gap: usize,
        #[arg(long, value_enum, default_value_t = SideArg::Right)]
        side: SideArg,
        #[command(flatten)]
        common: Common,
    },
    /// Trace, curve and boundary-force forms of the odd K-label.
    Klabel {
        #[arg(long, default_value_t = 0)]
        gap: usize,
        #[command(flatten)]
        common: Common,
    },
    /// All labels on the detected gaps, with verdicts.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// Labels as one numerical parameter varies.
    Converge {
        /// `L`, `h`, `dxi` or `chain` (window counts).
        #[arg(long)]
        parameter: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Right,
    Left,
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected a:b, got `{s}`"))?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    if b > a {
        Ok((a, b))
    } else {
        Err(format!("empty range {a}:{b}"))
    }
}

fn load(common: &Common, energy: Option<f64>) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    config.apply(&Overrides {
        potential: common.potential.clone(),
        energy_min: common.energy_min,
        energy_max: common.energy_max,
        resolution: common.resolution,
        xi_range: common.xi_range,
        truncation: common.truncation,
        grid_step: common.grid_step,
        dxi: common.dxi,
        mass_threshold: common.mass_threshold,
        energy,
        out: common.out.as_ref().map(|p| p.display().to_string()),
    })?;
    Ok(config)
}

fn detected_gap(config: &ExperimentConfig, index: usize) -> Result<Gap> {
    let spec = config.potential()?;
    let gaps = spectrum::detect_gaps(
        &spec,
        config.scan.energy_min,
        config.scan.energy_max,
        config.scan.resolution,
        &config.chain.build()?,
        config.scan.offset,
    )?;
    let count = gaps.len();
    gaps.into_iter()
        .nth(index)
        .ok_or_else(|| Error::Config(format!("gap {index} requested, {count} detected")))?
        .with_margin(config.numerics.edge_margin)
}

fn xi_range(config: &ExperimentConfig) -> Result<(f64, f64)> {
    match (config.labels.trace_from, config.labels.trace_to) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => {
            let w = config.xi_chain.build()?.largest();
            Ok((w.a, w.b))
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Spectrum { common } => {
            let config = load(&common, None)?;
            let spec = config.potential()?;
            let chain = config.chain.build()?;
            let scan = spectrum::ids_scan(
                &spec,
                config.scan.energy_min,
                config.scan.energy_max,
                config.scan.resolution,
                &chain,
                config.scan.offset,
            )?;
            let gaps = spectrum::gaps_from_scan(&spec, &scan, &chain, config.scan.offset)?;
            let dir = Path::new(&config.output.dir);
            harness::write_json(&dir.join("gaps.json"), &gaps)?;
            harness::write_scan_csv(&dir.join("ids_scan.csv"), &scan)?;
            for g in &gaps {
                println!("{:.6} {:.6} {:?}", g.lower, g.upper, g.confidence);
            }
            Ok(true)
        }
        Command::Ids { energy, common } => {
            let config = load(&common, energy)?;
            let spec = config.potential()?;
            let e = harness::probe_energy(&config, &spec)?;
            print_json(&spectrum::ids(&spec, e, &config.chain.build()?, config.scan.offset)?)?;
            Ok(true)
        }
        Command::Rotation { energy, common } => {
            let config = load(&common, energy)?;
            let spec = config.potential()?;
            let e = harness::probe_energy(&config, &spec)?;
            let alpha = rotation::johnson_moser_alpha_with(
                &spec,
                e,
                config.scan.offset,
                &config.chain.build()?,
                config.numerics.truncation,
                &Default::default(),
            )?;
            print_json(&alpha)?;
            Ok(true)
        }
        Command::Flow { gap, side, common } => {
            let config = load(&common, None)?;
            let spec = config.potential()?;
            let g = detected_gap(&config, gap)?;
            let (a, b) = xi_range(&config)?;
            let side = match side {
                SideArg::Right => Side::Right,
                SideArg::Left => Side::Left,
            };
            let flow = dirichlet::trace_flow(&spec, &g, a, b, config.numerics.dxi, config.numerics.truncation, side)?;
            let dir = Path::new(&config.output.dir);
            std::fs::create_dir_all(dir)?;
            harness::write_flow_csv(&dir.join("flow_curves.csv"), &[(gap, flow.clone())])?;
            if side == Side::Right {
                let lift = dirichlet::phase_lift(&flow, None, MuTildeVariant::RightOnly)?;
                harness::write_lift_csv(&dir.join("phase_lift.csv"), &[(gap, MuTildeVariant::RightOnly, lift)])?;
            }
            println!(
                "{} curves, at most {} values at one xi",
                flow.curves.len(),
                flow.max_values
            );
            Ok(true)
        }
        Command::Klabel { gap, common } => {
            let config = load(&common, None)?;
            let spec = config.potential()?;
            let g = detected_gap(&config, gap)?;
            let (a, b) = match (config.labels.trace_from, config.labels.trace_to) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    let t = spec.common_period().unwrap_or(2.0 * config.xi_chain.scale);
                    (config.xi_chain.center, config.xi_chain.center + t)
                }
            };
            let n = &config.numerics;
            let flow = dirichlet::trace_flow(&spec, &g, a, b, n.dxi, n.truncation, Side::Right)?;
            let window = gaplab::WindowChain::from_windows(vec![gaplab::Window { a, b }])?;
            let curves = klabel::pi_curves(&flow, None, &window, MuTildeVariant::RightOnly)?;
            let force = klabel::boundary_force(&flow, &window)?;
            let mut thresholds = vec![n.mass_threshold];
            thresholds.extend(n.mass_sweep.iter().copied().filter(|&t| t != n.mass_threshold));
            let settings = TraceSettings {
                truncation: n.truncation,
                grid_step: n.grid_step,
                dxi: n.trace_dxi,
                derivative_step: n.derivative_step.unwrap_or_else(|| klabel::derivative_step_from_flow(&flow)),
                mass_thresholds: thresholds,
                ..TraceSettings::default()
            };
            let traces = klabel::pi_trace_sweep(&spec, &g, (a, b), &settings)?;
            let dir = Path::new(&config.output.dir);
            std::fs::create_dir_all(dir)?;
            harness::write_trace_csv(&dir.join("trace_integrand.csv"), &[(gap, traces[0].clone())])?;
            for t in &traces {
                println!(
                    "pi_trace (mass {}) = {:.9} ± {:.2e}",
                    t.mass_threshold, t.value, t.error_estimate
                );
            }
            println!("pi_curves = {:.9} ± {:.2e}", curves.value, curves.error_estimate);
            println!("boundary_force = {:.9} ± {:.2e}", force.value, force.error_estimate);
            let t = &traces[0];
            Ok((t.value - curves.value).abs() <= t.error_estimate + curves.error_estimate)
        }
        Command::Report { common } => {
            let config = load(&common, None)?;
            let out = harness::run(&config)?;
            harness::write_outputs(&out, Path::new(&config.output.dir))?;
            for r in &out.report.reports {
                println!("gap {} ({:.6}, {:.6}):", r.index, r.gap.lower, r.gap.upper);
                for (name, e) in r.labels() {
                    println!("  {name:<16} {:.9} ± {:.2e}", e.value, e.error);
                }
                for d in r.discrepancies.iter().filter(|d| !d.pass) {
                    println!("  FAIL {} vs {}: {:.3e} > {:.3e}", d.first, d.second, d.difference, d.tolerance);
                }
            }
            println!("{}", if out.report.passed { "all verdicts pass" } else { "some verdicts fail" });
            Ok(out.report.passed)
        }
        Command::Converge {
            parameter,
            values,
            common,
        } => {
            let config = load(&common, None)?;
            let parameter: Parameter = parameter.parse()?;
            let table = harness::convergence_study(&config, parameter, &values)?;
            let dir = Path::new(&config.output.dir);
            harness::write_json(&dir.join("convergence.json"), &table)?;
            table.write_csv(&dir.join("convergence.csv"))?;
            print_json(&table)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
