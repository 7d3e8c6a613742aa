use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use gaplab::dirichlet::{self, right_dirichlet_values, trace_flow, MuTildeVariant, Side};
use gaplab::klabel;
use gaplab::prufer;
use gaplab::rotation::johnson_moser_alpha;
use gaplab::spectrum::{self, Confidence, Gap};
use gaplab::tridiag::FiniteDifferenceBox;
use gaplab::{PotentialSpec, WindowChain};

fn mathieu() -> PotentialSpec {
    PotentialSpec::mathieu(2.0)
}

fn first_gap() -> Gap {
    Gap::new(-1.0647960185960668, 0.5795069873897563, Confidence::Confirmed).unwrap()
}

fn small_chain() -> WindowChain {
    WindowChain::geometric(0.0, 25.0, 1.6, 5).unwrap()
}

fn cheap() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cheap())]

    #[test]
    fn zeros_match_eigenvalue_count(
        a in -20.0..0.0f64,
        len in 3.0..30.0f64,
        offset in 0.0..TAU,
        e in -1.5..6.0f64,
    ) {
        let v = mathieu();
        let b = a + len;
        let trace = prufer::integrate(&v, e, offset, a, b, 0.0).unwrap();
        let count = spectrum::eigenvalue_count(&v, a, b, offset, e).unwrap();
        prop_assume!(!count.ambiguous);
        prop_assert_eq!(prufer::count_zeros(&trace, a, b), count.count);
    }

    #[test]
    fn shooting_count_is_complete(
        a in -20.0..0.0f64,
        len in 3.0..20.0f64,
        offset in 0.0..TAU,
        e in -1.5..4.0f64,
    ) {
        let v = PotentialSpec::golden();
        let b = a + len;
        let count = spectrum::eigenvalue_count(&v, a, b, offset, e).unwrap();
        prop_assume!(!count.ambiguous);
        let oracle = FiniteDifferenceBox::new(&v, a, b, offset, 0.005).unwrap().count_below(e) as u64;
        prop_assert_eq!(count.count, oracle);
    }

    #[test]
    fn ids_is_monotone(e in -1.5..4.0f64, de in 0.01..1.0f64) {
        let v = mathieu();
        let chain = small_chain();
        let lo = spectrum::ids(&v, e, &chain, 0.0).unwrap();
        let hi = spectrum::ids(&v, e + de, &chain, 0.0).unwrap();
        for (p, q) in lo.per_window.iter().zip(&hi.per_window) {
            prop_assert!(p.count <= q.count);
        }
    }

    #[test]
    fn ids_forgets_the_origin(e in -1.5..4.0f64, offset in 0.0..TAU) {
        let v = mathieu();
        let chain = small_chain();
        let a = spectrum::ids(&v, e, &chain, 0.0).unwrap();
        let b = spectrum::ids(&v, e, &chain, offset).unwrap();
        let n = chain.largest().length();
        prop_assert!((a.value - b.value).abs() <= a.error_estimate + b.error_estimate + 2.0 / n);
    }

    #[test]
    fn alpha_is_monotone_and_origin_free(e in -1.5..4.0f64, de in 0.05..1.0f64, offset in 0.0..TAU) {
        let v = mathieu();
        let chain = small_chain();
        let lo = johnson_moser_alpha(&v, e, 0.0, &chain).unwrap();
        let hi = johnson_moser_alpha(&v, e + de, 0.0, &chain).unwrap();
        let shifted = johnson_moser_alpha(&v, e, offset, &chain).unwrap();
        let tol = lo.error_estimate + hi.error_estimate;
        prop_assert!(hi.value >= lo.value - tol);
        prop_assert!((shifted.value - lo.value).abs() <= lo.error_estimate + shifted.error_estimate);
    }

    #[test]
    fn alpha_is_constant_in_a_gap(s in 0.05..0.95f64, t in 0.05..0.95f64) {
        let v = mathieu();
        let g = first_gap();
        let chain = small_chain();
        let a = johnson_moser_alpha(&v, g.lower + s * g.width(), 0.0, &chain).unwrap();
        let b = johnson_moser_alpha(&v, g.lower + t * g.width(), 0.0, &chain).unwrap();
        prop_assert!((a.value - b.value).abs() <= a.error_estimate + b.error_estimate);
    }

    #[test]
    fn dirichlet_values_survive_longer_truncation(xi in 0.0..TAU) {
        let v = mathieu();
        let g = first_gap();
        let short = right_dirichlet_values(&v, xi, &g, 40.0).unwrap();
        let long = right_dirichlet_values(&v, xi, &g, 60.0).unwrap();
        prop_assert_eq!(short.len(), long.len());
        for (p, q) in short.iter().zip(&long) {
            prop_assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn dirichlet_values_are_periodic(xi in 0.0..TAU) {
        let v = mathieu();
        let g = first_gap();
        let here = right_dirichlet_values(&v, xi, &g, 60.0).unwrap();
        let there = right_dirichlet_values(&v, xi + TAU, &g, 60.0).unwrap();
        prop_assert_eq!(here.len(), there.len());
        for (p, q) in here.iter().zip(&there) {
            prop_assert!((p - q).abs() < 1e-8);
        }
    }
}

#[test]
fn flow_is_monotone_without_crossings() {
    let v = mathieu();
    let g = first_gap();
    for side in [Side::Right, Side::Left] {
        let flow = trace_flow(&v, &g, 0.0, 2.0 * TAU, 0.05, 60.0, side).unwrap();
        assert!(!flow.curves.is_empty());
        assert!(flow.curves.iter().all(|c| c.is_monotone()), "{side:?}");
        for s in &flow.samples {
            assert!(s.values.windows(2).all(|w| w[1].mu > w[0].mu));
        }
    }
}

#[test]
fn beta_forgets_the_origin() {
    let v = mathieu();
    let g = first_gap();
    let chain = WindowChain::geometric(0.0, 2.0 * PI, 2.0, 2).unwrap();
    let base = dirichlet::beta(&v, &g, &chain, 0.1, 60.0, MuTildeVariant::RightOnly).unwrap();
    let moved = dirichlet::beta(&v, &g, &chain.shifted(1.3), 0.1, 60.0, MuTildeVariant::RightOnly).unwrap();
    assert!(
        (base.value - moved.value).abs() <= base.error_estimate + moved.error_estimate,
        "{} vs {}",
        base.value,
        moved.value
    );
}

#[test]
fn pi_trace_is_stable_under_grid_refinement() {
    let v = mathieu();
    let g = first_gap();
    let coarse = klabel::pi_trace(&v, &g, (0.0, TAU), 0.05, 40.0, 0.01).unwrap();
    let fine = klabel::pi_trace(&v, &g, (0.0, TAU), 0.05, 40.0, 0.005).unwrap();
    assert!(
        (coarse.value - fine.value).abs() <= coarse.error_estimate + fine.error_estimate + 1e-4,
        "{} vs {}",
        coarse.value,
        fine.value
    );
    assert!((fine.value - 1.0 / TAU).abs() <= fine.error_estimate + 1e-4);
}

#[test]
fn gap_edges_do_not_depend_on_the_box() {
    let v = mathieu();
    let a = spectrum::detect_gaps(&v, -2.0, 1.0, 0.01, &small_chain(), 0.0).unwrap();
    let b = spectrum::detect_gaps(&v, -2.0, 1.0, 0.01, &WindowChain::default(), 0.0).unwrap();
    assert_eq!(a.len(), b.len());
    for (p, q) in a.iter().zip(&b) {
        assert!((p.lower - q.lower).abs() <= 0.02 && (p.upper - q.upper).abs() <= 0.02);
    }
}
