use std::f64::consts::TAU;

use gaplab::harness::{self, ExperimentConfig, Parameter};
use gaplab::spectrum;
use gaplab::tridiag::FiniteDifferenceBox;
use gaplab::{PotentialSpec, WindowChain};

const GAP_EDGES: [(f64, f64); 2] = [
    (-1.0647960185960668, 0.5795069873897563),
    (0.686720, 1.707269),
];

fn mathieu_config() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.scan.energy_max = 1.0;
    c.labels.probe_xi = 3.76;
    c
}

#[test]
fn free_box_eigenvalues_converge_at_second_order() {
    let steps = [0.02, 0.01, 0.005];
    let errors: Vec<f64> = steps
        .iter()
        .map(|&h| {
            let b = FiniteDifferenceBox::new(&PotentialSpec::Zero, 0.0, std::f64::consts::PI, 0.0, h).unwrap();
            (b.eigenvalues_in(0.5, 1.5)[0] - 1.0).abs()
        })
        .collect();
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() < 0.1, "{errors:?}");
    }
}

#[test]
fn edge_state_converges_in_grid_step() {
    let t = harness::convergence_study(&mathieu_config(), Parameter::GridStep, &[0.01, 0.005, 0.0025]).unwrap();
    let edge = t.column("edge_energy").unwrap();
    assert!(edge.values.iter().all(|v| v.is_finite()));
    let order = edge.orders[0];
    assert!((order - 2.0).abs() < 0.3, "{edge:?}");
}

#[test]
fn dirichlet_value_converges_in_truncation() {
    let t = harness::convergence_study(&mathieu_config(), Parameter::Truncation, &[8.0, 12.0, 16.0]).unwrap();
    let mu = t.column("dirichlet_value").unwrap();
    assert!(mu.ratios[0].abs() < 0.2, "{mu:?}");
    let alpha = t.column("alpha").unwrap();
    assert!(alpha.differences.iter().all(|d| d.abs() < 1e-3), "{alpha:?}");
}

#[test]
fn chain_error_scales_like_inverse_length() {
    let t = harness::convergence_study(&mathieu_config(), Parameter::Chain, &[2.0, 4.0, 6.0, 8.0]).unwrap();
    for name in ["ids", "alpha"] {
        let c = t.column(name).unwrap();
        for (v, len) in c.values.iter().zip(&t.values) {
            assert!((v - 1.0 / TAU).abs() * len <= 2.0, "{name}: {c:?}");
        }
    }
}

#[test]
fn mathieu_gap_edges() {
    let gaps = spectrum::detect_gaps(&PotentialSpec::mathieu(2.0), -2.0, 4.0, 0.01, &WindowChain::default(), 0.0).unwrap();
    assert!(gaps.len() >= 2);
    for (g, (lo, hi)) in gaps.iter().zip(GAP_EDGES) {
        assert!((g.lower - lo).abs() <= 0.01 && (g.upper - hi).abs() <= 0.01, "{g:?}");
    }
}
