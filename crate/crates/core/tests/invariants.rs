use declab_core::envariance::{self, Weight};
use declab_core::hilbert::{self, Observable, PureState, SpaceLayout};
use declab_core::histories::{self, ConsistencyMode, HistorySpace, Picture, ProjectorFamily};
use declab_core::linalg::{self, CVector};
use declab_core::measurement::{self, MeasurementSetup};
use declab_core::random;
use declab_core::C64;
use proptest::prelude::*;

fn layout(dims: &[usize]) -> SpaceLayout {
    SpaceLayout::new(dims.iter().enumerate().map(|(i, &d)| (format!("F{i}"), d))).unwrap()
}

fn unit(n: usize, i: usize) -> CVector {
    CVector::from_fn(n, |k, _| C64::new(if k == i { 1.0 } else { 0.0 }, 0.0))
}

fn amplitudes(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n)
        .prop_filter("nonzero", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3)
        .prop_map(|v| v.into_iter().map(|(a, b)| C64::new(a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Tracing out B then C equals tracing out both at once, and traces stay 1.
    #[test]
    fn partial_trace_composes(seed in any::<u64>(), da in 2usize..4, db in 2usize..4, dc in 1usize..3) {
        let mut rng = random::stream(seed, 0);
        let rho = random::random_density(layout(&[da, db, dc]), &mut rng);
        let ab = hilbert::partial_trace(&rho, &["F0", "F1"]).unwrap();
        let a_twice = hilbert::partial_trace(&ab, &["F0"]).unwrap();
        let a_once = hilbert::partial_trace(&rho, &["F0"]).unwrap();
        prop_assert!(linalg::max_abs_diff(a_twice.matrix(), a_once.matrix()) < 1e-12);
        prop_assert!((linalg::trace(a_once.matrix()).re - 1.0).abs() < 1e-12);
        prop_assert!(linalg::hermiticity_residual(a_once.matrix()) < 1e-12);
    }

    // Both reduced states of a pure bipartite state share their nonzero spectrum
    // with the squared Schmidt coefficients.
    #[test]
    fn reduced_spectra_match_schmidt(seed in any::<u64>(), da in 2usize..5, db in 2usize..5) {
        let mut rng = random::stream(seed, 1);
        let psi = random::haar_state(layout(&[da, db]), &mut rng);
        let dec = hilbert::schmidt(&psi, &["F0"], &["F1"]).unwrap();
        let mut expect: Vec<f64> = dec.coefficients.iter().map(|c| c * c).collect();
        expect.sort_by(|a, b| b.total_cmp(a));
        for side in ["F0", "F1"] {
            let mut spec = psi.reduced(&[side]).unwrap().spectrum();
            spec.sort_by(|a, b| b.total_cmp(a));
            for (k, e) in expect.iter().enumerate() {
                prop_assert!((spec[k] - e).abs() < 1e-10, "{side} {k}: {} vs {e}", spec[k]);
            }
            for s in &spec[expect.len()..] {
                prop_assert!(s.abs() < 1e-10);
            }
        }
        prop_assert!((psi.amplitudes() - dec.reconstruct()).norm() < 1e-10);
        prop_assert!((expect.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    // Ideal premeasurement of Σ c_n |s_n⟩ gives Schmidt coefficients |c_n|.
    #[test]
    fn premeasurement_schmidt_is_amplitude_modulus(amps in amplitudes(3)) {
        let b: Vec<CVector> = (0..3).map(|i| unit(3, i)).collect();
        let setup = MeasurementSetup::new(
            SpaceLayout::single("S", 3).unwrap(), b.clone(),
            SpaceLayout::single("A", 3).unwrap(), b[0].clone(), b,
        ).unwrap();
        let system = PureState::normalized(setup.system_layout.clone(), CVector::from_vec(amps)).unwrap();
        let sa = measurement::premeasure(&system, &setup).unwrap();
        let dec = hilbert::schmidt(&sa, &["S"], &["A"]).unwrap();
        let mut moduli: Vec<f64> = system.amplitudes().iter().map(|c| c.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        let mut got = dec.coefficients.clone();
        got.resize(3, 0.0);
        for (g, m) in got.iter().zip(&moduli) {
            prop_assert!((g - m).abs() < 1e-10, "{got:?} vs {moduli:?}");
        }
    }

    // Counting equal branches reproduces the rational weights exactly.
    #[test]
    fn fine_grain_counts_are_exact(nums in prop::collection::vec(1u64..12, 2..5)) {
        let total: u64 = nums.iter().sum();
        let weights: Vec<Weight> = nums.iter().map(|&n| Weight::new(n, total)).collect();
        let fg = envariance::fine_grain(&weights).unwrap();
        prop_assert_eq!(&fg.probabilities, &weights);
        prop_assert_eq!(fg.multiplicities.iter().sum::<u64>(), fg.denominator);
        let mut counts = vec![0u64; weights.len()];
        for b in 0..fg.denominator as usize {
            counts[fg.branch_outcome(b)] += 1;
        }
        for (c, w) in counts.iter().zip(&weights) {
            prop_assert_eq!(Weight::new(*c, fg.denominator), *w);
        }
    }

    // Coarse-grained probability equals the member sum exactly when the
    // member pairs have vanishing real interference.
    #[test]
    fn coarse_graining_is_additive_iff_weakly_consistent(seed in any::<u64>(), t2 in 0.1f64..3.0) {
        let mut rng = random::stream(seed, 2);
        let l = SpaceLayout::single("Q", 3).unwrap();
        let h = random::random_hermitian(l.clone(), &mut rng);
        let rho = random::random_density(l.clone(), &mut rng);
        let fams = vec![
            ProjectorFamily::computational(0.5, &l).unwrap(),
            ProjectorFamily::computational(0.5 + t2, &l).unwrap(),
        ];
        let space = HistorySpace::fixed(fams).unwrap();
        let props = histories::propagators_from_hamiltonian(&h, 0.0, space.times());
        let d = histories::decoherence_functional(&space, &rho, &props, Picture::Schrodinger).unwrap();
        prop_assert!((d.total().re - 1.0).abs() < 1e-10);
        prop_assert!(d.hermiticity_residual() < 1e-12);
        for a in 0..3 {
            for b in a + 1..3 {
                let cg = histories::coarse_grain(&d, &[vec![0], vec![a, b]]).unwrap();
                let cross = d.value(&[0, a], &[0, b]).unwrap().re;
                prop_assert!((cg.violation - 2.0 * cross).abs() < 1e-12);
                prop_assert!((cg.probability - cg.member_sum - cg.violation).abs() < 1e-12);
            }
        }
        let report = histories::check_consistency(&d, ConsistencyMode::Weak, 1e-9);
        if report.pass {
            let cg = histories::coarse_grain(&d, &[vec![0, 1, 2], vec![0, 1, 2]]).unwrap();
            prop_assert!(cg.violation.abs() < 1e-8);
        }
    }

    // Unitary evolution preserves purity and the Schrödinger and Heisenberg
    // functionals agree.
    #[test]
    fn pictures_agree(seed in any::<u64>()) {
        let mut rng = random::stream(seed, 3);
        let l = SpaceLayout::single("Q", 2).unwrap();
        let h = random::random_hermitian(l.clone(), &mut rng);
        let rho = random::random_density(l.clone(), &mut rng);
        let p0 = Observable::projector(&PureState::basis(l.clone(), 0).unwrap());
        let p1 = Observable::projector(&PureState::basis(l.clone(), 1).unwrap());
        let fams: Vec<ProjectorFamily> = [0.3, 1.1, 2.0]
            .iter()
            .map(|&t| ProjectorFamily::new(t, vec![p0.clone(), p1.clone()]).unwrap())
            .collect();
        let space = HistorySpace::fixed(fams).unwrap();
        let props = histories::propagators_from_hamiltonian(&h, 0.0, space.times());
        let s = histories::decoherence_functional(&space, &rho, &props, Picture::Schrodinger).unwrap();
        let hz = histories::decoherence_functional(&space, &rho, &props, Picture::Heisenberg).unwrap();
        prop_assert!(linalg::max_abs_diff(&s.values, &hz.values) < 1e-10);
        let evolved = hilbert::evolve(&rho, &h, 1.7).unwrap();
        prop_assert!((hilbert::purity(&evolved) - hilbert::purity(&rho)).abs() < 1e-10);
    }
}
