use std::collections::BTreeMap;

use nalgebra::DMatrix;
use proptest::prelude::*;

use switched_growth::dynamics::{integrate_projected, Control, ControlSignal, Piece, SimplexPoint};
use switched_growth::hj::{solve_ergodic, SimplexGrid, SolverOptions};
use switched_growth::matrices::{ControlSet, MetzlerMatrix, ModelFile, Segment};
use switched_growth::models::{classify_pmca, preset, PmcaRegime};
use switched_growth::spectral_derivatives::{find_alpha_star, perron_derivative};

fn metzler(n: usize) -> impl Strategy<Value = MetzlerMatrix> {
    prop::collection::vec(0.05f64..1.5, n * n).prop_map(move |v| {
        let m = DMatrix::from_fn(n, n, |i, j| if i == j { v[i * n + j] - 1.0 } else { v[i * n + j] });
        MetzlerMatrix::new(m).unwrap()
    })
}

fn simplex_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_filter_map("positive mass", |v| {
        let s: f64 = v.iter().sum();
        (s > 1e-3).then(|| v.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projected_flow_stays_on_simplex(
        a in metzler(3),
        b in metzler(3),
        y in simplex_point(3),
        dwell in 0.1f64..2.0,
    ) {
        let cs = ControlSet::from_vertices(vec![a, b]).unwrap();
        let pieces: Vec<Piece> = (0..6).map(|k| Piece { duration: dwell, control: Control::Vertex(k % 2) }).collect();
        let sig = ControlSignal::new(pieces).unwrap();
        let traj = integrate_projected(&SimplexPoint::new(y).unwrap(), &cs, &sig, 0.01).unwrap();
        for s in &traj.states {
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn interpolation_is_exact_on_affine_functions(
        c in prop::collection::vec(-3.0f64..3.0, 3),
        y in simplex_point(3),
        n in 2usize..30,
    ) {
        let grid = SimplexGrid::new(3, n).unwrap();
        let f = |p: &[f64]| c[0] * p[0] + c[1] * p[1] + c[2] * p[2];
        let values: Vec<f64> = grid.nodes().iter().map(|p| f(p)).collect();
        prop_assert!((grid.interpolate(&values, &y) - f(&y)).abs() < 1e-12);
        let (_, w) = grid.locate(&y);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|v| *v >= -1e-12));
    }

    #[test]
    fn model_file_round_trip(a in metzler(3), b in metzler(3), c in metzler(3)) {
        let cs = ControlSet::from_vertices(vec![a, b, c]).unwrap();
        let file = ModelFile::from_control_set(&cs);
        let back = ModelFile::parse(&file.to_json()).unwrap().to_control_set().unwrap();
        prop_assert_eq!(ModelFile::from_control_set(&back), file);
    }

    #[test]
    fn perron_derivative_matches_difference(alpha in 0.1f64..0.9) {
        let g = vec![vec![-0.3, 0.8, 0.2], vec![0.5, -0.1, 0.6], vec![0.4, 0.9, -0.7]];
        let f = vec![vec![0.2, -0.3, 0.1], vec![0.4, -0.5, -0.2], vec![-0.1, 0.3, 0.6]];
        let seg = Segment::from_rows(&g, &f, 0.0, 1.0).unwrap();
        let h = 1e-5;
        let fd = (seg.lambda(alpha + h).unwrap() - seg.lambda(alpha - h).unwrap()) / (2.0 * h);
        prop_assert!((fd - perron_derivative(&seg, alpha).unwrap()).abs() < 1e-7);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pmca_dichotomy(tau1 in 0.01f64..1.0, ratio in 0.2f64..6.0) {
        let tau2 = tau1 * ratio;
        prop_assume!((ratio - 2.0).abs() > 0.2);
        let overrides: BTreeMap<String, f64> =
            [("tau1", tau1), ("tau2", tau2), ("a", 1e-3), ("A", 1e4)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        let p = preset("pmca", &overrides).unwrap();
        let star = find_alpha_star(p.segment().unwrap()).unwrap();
        match classify_pmca(tau1, tau2) {
            PmcaRegime::InteriorMax => prop_assert!(!star.boundary, "{tau1} {tau2}: {star:?}"),
            PmcaRegime::Monotone => prop_assert!(star.boundary && star.alpha == 1e4, "{tau1} {tau2}: {star:?}"),
        }
    }

    #[test]
    fn hj_value_dominates_each_vertex(a in metzler(3), b in metzler(3)) {
        let cs = ControlSet::from_vertices(vec![a, b]).unwrap();
        let sol = solve_ergodic(&cs, SimplexGrid::new(3, 24).unwrap(), &SolverOptions::default()).unwrap();
        let best = cs.max_vertex_lambda().unwrap();
        // First-order scheme: the discrete value may trail by O(h).
        prop_assert!(sol.lambda >= best - 0.05 * (1.0 + best.abs()), "{} vs {}", sol.lambda, best);
    }
}
