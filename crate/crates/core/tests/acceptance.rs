use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use gaplab::dirichlet::{self, flow_derivative_check, trace_flow, MuTildeVariant, Side};
use gaplab::harness::{self, ExperimentConfig};
use gaplab::klabel::{self, TraceSettings};
use gaplab::rotation::johnson_moser_alpha;
use gaplab::spectrum::{self, Confidence, Gap};
use gaplab::tridiag::FiniteDifferenceBox;
use gaplab::{PotentialSpec, WindowChain};

fn verdict(criterion: u32, pass: bool, elapsed: Duration, detail: String) -> bool {
    println!(
        "criterion {criterion}: {} ({:.1} s) {detail}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    pass
}

fn mathieu() -> PotentialSpec {
    PotentialSpec::mathieu(2.0)
}

fn mathieu_gaps() -> Vec<Gap> {
    spectrum::detect_gaps(&mathieu(), -2.0, 4.0, 0.01, &WindowChain::default(), 0.0).unwrap()
}

fn first_gap() -> Gap {
    Gap::new(-1.0647960185960668, 0.5795069873897563, Confidence::Confirmed).unwrap()
}

fn xi_chain() -> WindowChain {
    ExperimentConfig::default().xi_chain.build().unwrap()
}

fn matrix_ids(spec: &PotentialSpec, energy: f64, chain: &WindowChain, step: f64) -> f64 {
    let w = chain.largest();
    let b = FiniteDifferenceBox::new(spec, w.a, w.b, 0.0, step).unwrap();
    b.count_below(energy) as f64 / w.length()
}

#[test]
fn criterion_01_free_ids_and_rotation() {
    let t = Instant::now();
    let chain = WindowChain::default();
    let ids = spectrum::ids(&PotentialSpec::Zero, 1.0, &chain, 0.0).unwrap();
    let alpha = johnson_moser_alpha(&PotentialSpec::Zero, 1.0, 0.0, &chain).unwrap();
    let target = 1.0 / PI;
    let elapsed = t.elapsed();
    let pass = (ids.value - target).abs() <= 2e-3
        && (alpha.value - target).abs() <= 2e-3
        && elapsed < Duration::from_secs(10);
    assert!(verdict(
        1,
        pass,
        elapsed,
        format!("ids {:.6}, alpha {:.6}, target {target:.6}", ids.value, alpha.value)
    ));
}

#[test]
fn criterion_02_sturm_counts_match_matrix() {
    let t = Instant::now();
    let v = mathieu();
    let mut rng = StdRng::seed_from_u64(2);
    let mut mismatches = Vec::new();
    for _ in 0..50 {
        let a = rng.gen_range(-30.0..0.0);
        let b = a + rng.gen_range(5.0..40.0);
        let offset = rng.gen_range(0.0..TAU);
        let e = rng.gen_range(-1.5..5.0);
        let shooting = spectrum::eigenvalue_count(&v, a, b, offset, e).unwrap().count;
        let oracle = FiniteDifferenceBox::new(&v, a, b, offset, 0.005).unwrap().count_below(e) as u64;
        if shooting != oracle {
            mismatches.push((a, b, offset, e, shooting, oracle));
        }
    }
    let elapsed = t.elapsed();
    let pass = mismatches.is_empty() && elapsed < Duration::from_secs(60);
    assert!(verdict(2, pass, elapsed, format!("50 instances, mismatches {mismatches:?}")));
}

#[test]
fn criterion_03_alpha_equals_ids_on_mathieu_gaps() {
    let t = Instant::now();
    let v = mathieu();
    let chain = WindowChain::default();
    let gaps = mathieu_gaps();
    let mut pass = gaps.len() >= 2;
    let mut detail = String::new();
    for (n, g) in gaps.iter().take(2).enumerate() {
        let label = (n + 1) as f64 / TAU;
        let e = g.midpoint();
        let ids = spectrum::ids(&v, e, &chain, 0.0).unwrap();
        let alpha = johnson_moser_alpha(&v, e, 0.0, &chain).unwrap();
        let oracle = matrix_ids(&v, e, &chain, 0.005);
        pass &= g.confidence == Confidence::Confirmed
            && (alpha.value - ids.value).abs() <= alpha.error_estimate + ids.error_estimate
            && (ids.value - label).abs() <= 1e-3
            && (oracle - label).abs() <= 1e-3;
        detail += &format!(
            "gap {} ({:.4}, {:.4}): ids {:.6} ± {:.1e}, alpha {:.6} ± {:.1e}, matrix {:.6}, n/2pi {:.6}; ",
            n + 1,
            g.lower,
            g.upper,
            ids.value,
            ids.error_estimate,
            alpha.value,
            alpha.error_estimate,
            oracle,
            label
        );
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    assert!(verdict(3, pass, elapsed, detail));
}

#[test]
fn criterion_04_flow_derivative_identity() {
    let t = Instant::now();
    let v = mathieu();
    let gap = first_gap();
    let coarse = trace_flow(&v, &gap, 0.0, TAU, 0.05, 60.0, Side::Right).unwrap();
    let mid = coarse.curves[0]
        .samples
        .iter()
        .min_by(|a, b| (a.mu - gap.midpoint()).abs().total_cmp(&(b.mu - gap.midpoint()).abs()))
        .unwrap()
        .xi;
    let fine = trace_flow(&v, &gap, mid - 0.03, mid + 0.03, 1e-3, 60.0, Side::Right).unwrap();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut negative = true;
    for c in &fine.curves {
        for i in 1..c.samples.len() - 1 {
            let d = flow_derivative_check(&v, c, i, 60.0).unwrap();
            checked += 1;
            worst = worst.max(d.relative_error());
            negative &= d.analytic < 0.0 && d.finite_difference < 0.0;
        }
    }
    let elapsed = t.elapsed();
    let pass = checked >= 20 && worst < 1e-2 && negative && elapsed < Duration::from_secs(120);
    assert!(verdict(
        4,
        pass,
        elapsed,
        format!("{checked} points near xi = {mid:.3}, worst relative error {worst:.2e}, all negative {negative}")
    ));
}

#[test]
fn criterion_05_interlacing() {
    let t = Instant::now();
    let gap = first_gap();
    let r = dirichlet::interlacing_check(&mathieu(), &gap, gap.midpoint(), 0.0, 2.0 * TAU, 60.0).unwrap();
    let elapsed = t.elapsed();
    let pass = r.passed
        && r.violations.is_empty()
        && r.right_points.len() >= 2
        && elapsed < Duration::from_secs(60);
    assert!(verdict(
        5,
        pass,
        elapsed,
        format!(
            "right {:?}, left {:?}, violations {}",
            r.right_points,
            r.left_points,
            r.violations.len()
        )
    ));
}

#[test]
fn criterion_06_beta_equals_alpha() {
    let t = Instant::now();
    let v = mathieu();
    let gap = first_gap();
    let chain = xi_chain();
    let alpha = johnson_moser_alpha(&v, gap.midpoint(), 0.0, &WindowChain::default()).unwrap();
    let right = dirichlet::beta(&v, &gap, &chain, 0.05, 60.0, MuTildeVariant::RightOnly).unwrap();
    let both = dirichlet::beta(&v, &gap, &chain, 0.05, 60.0, MuTildeVariant::TwoSided).unwrap();
    let elapsed = t.elapsed();
    let agree = |a: f64, ea: f64, b: f64, eb: f64| (a - b).abs() <= ea + eb;
    let pass = right.error_estimate <= 1e-2
        && both.error_estimate <= 1e-2
        && agree(right.value, right.error_estimate, alpha.value, alpha.error_estimate)
        && agree(both.value, both.error_estimate, alpha.value, alpha.error_estimate)
        && agree(both.value, both.error_estimate, right.value, right.error_estimate)
        && elapsed < Duration::from_secs(120);
    assert!(verdict(
        6,
        pass,
        elapsed,
        format!(
            "alpha {:.6} ± {:.1e}, beta right_only {:.6} ± {:.1e}, two_sided {:.6} ± {:.1e}",
            alpha.value,
            alpha.error_estimate,
            right.value,
            right.error_estimate,
            both.value,
            both.error_estimate
        )
    ));
}

#[test]
fn criteria_07_08_odd_k_label() {
    let t = Instant::now();
    let v = mathieu();
    let gap = first_gap();
    let chain = xi_chain();
    let w = chain.largest();
    let flow = trace_flow(&v, &gap, w.a, w.b, 0.05, 60.0, Side::Right).unwrap();
    let lift = dirichlet::phase_lift(&flow, None, MuTildeVariant::RightOnly).unwrap();
    let beta = dirichlet::beta_from_lift(lift, &chain, MuTildeVariant::RightOnly);
    let curves = klabel::pi_curves(&flow, None, &chain, MuTildeVariant::RightOnly).unwrap();
    let settings = TraceSettings {
        truncation: 60.0,
        grid_step: 0.01,
        dxi: 0.01,
        derivative_step: klabel::derivative_step_from_flow(&flow),
        mass_thresholds: vec![0.5, 0.3, 0.7],
        ..TraceSettings::default()
    };
    let sweep = klabel::pi_trace_sweep(&v, &gap, (0.0, TAU), &settings).unwrap();
    let trace = &sweep[0];
    let elapsed = t.elapsed();
    let agree = |a: f64, ea: f64, b: f64, eb: f64| (a - b).abs() <= ea + eb;
    let sweep_shift = sweep[1..]
        .iter()
        .map(|s| (s.value - trace.value).abs())
        .fold(0.0, f64::max);
    let pass7 = agree(trace.value, trace.error_estimate, curves.value, curves.error_estimate)
        && agree(trace.value, trace.error_estimate, beta.value, beta.error_estimate)
        && agree(curves.value, curves.error_estimate, beta.value, beta.error_estimate)
        && sweep_shift < trace.error_estimate
        && elapsed < Duration::from_secs(300);
    let ok7 = verdict(
        7,
        pass7,
        elapsed,
        format!(
            "pi_trace {:.8} ± {:.1e}, pi_curves {:.6} ± {:.1e}, beta {:.6} ± {:.1e}, mass sweep shift {sweep_shift:.1e}",
            trace.value, trace.error_estimate, curves.value, curves.error_estimate, beta.value, beta.error_estimate
        ),
    );

    let t = Instant::now();
    let force = klabel::boundary_force(&flow, &chain).unwrap();
    let elapsed = t.elapsed();
    let pass8 = (force.value - curves.value).abs() <= 1e-3 && elapsed < Duration::from_secs(1);
    let ok8 = verdict(
        8,
        pass8,
        elapsed,
        format!("boundary_force {:.6}, pi_curves {:.6}", force.value, curves.value),
    );
    assert!(ok7 && ok8);
}

#[test]
fn criterion_09_quasiperiodic_labels() {
    let t = Instant::now();
    let v = PotentialSpec::golden();
    let gamma = 0.5 * (1.0 + 5f64.sqrt());
    let chain = WindowChain::geometric(0.0, 25.0, 1.6, 6).unwrap();
    let gaps = spectrum::detect_gaps(&v, -2.0, 30.0, 0.02, &chain, 0.0).unwrap();
    let mut pass = !gaps.is_empty();
    let mut detail = String::new();
    for g in &gaps {
        let e = g.midpoint();
        let ids = spectrum::ids(&v, e, &chain, 0.0).unwrap().value;
        let oracle = matrix_ids(&v, e, &chain, 0.005);
        let (m, n, label) = (-5i32..=5)
            .flat_map(|m| (-5i32..=5).map(move |n| (m, n, m as f64 + n as f64 * gamma)))
            .min_by(|a, b| (a.2 - ids).abs().total_cmp(&(b.2 - ids).abs()))
            .unwrap();
        pass &= (ids - label).abs() <= 1e-2 && (oracle - label).abs() <= 1e-2;
        detail += &format!(
            "gap ({:.3}, {:.3}): ids {ids:.5}, matrix {oracle:.5}, label {m}+{n}g = {label:.5}; ",
            g.lower, g.upper
        );
    }
    let elapsed = t.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    assert!(verdict(9, pass, elapsed, detail));
}

#[test]
fn criterion_10_deterministic_reports() {
    let t = Instant::now();
    let config = ExperimentConfig::from_toml(
        r#"
[potential]
spec = "mathieu:2"

[scan]
energy_min = -2.0
energy_max = 1.0
resolution = 0.02

[chain]
center = 0.0
scale = 25.0
ratio = 1.6
count = 5

[xi_chain]
center = 0.0
scale = 3.141592653589793
ratio = 2.0
count = 2

[numerics]
truncation = 40.0
dxi = 0.05
trace_dxi = 0.05
"#,
    )
    .unwrap();
    let base = std::env::temp_dir().join(format!("gaplab-determinism-{}", std::process::id()));
    let mut bytes = Vec::new();
    for k in 0..2 {
        let dir = base.join(k.to_string());
        let out = harness::run(&config).unwrap();
        harness::write_outputs(&out, &dir).unwrap();
        bytes.push(std::fs::read(dir.join("report.json")).unwrap());
    }
    std::fs::remove_dir_all(&base).ok();
    let elapsed = t.elapsed();
    let pass = !bytes[0].is_empty() && bytes[0] == bytes[1];
    assert!(verdict(10, pass, elapsed, format!("{} bytes per report", bytes[0].len())));
}
