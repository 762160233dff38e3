use std::collections::BTreeMap;

use proptest::prelude::*;
use uclt_core::distances::{
    distance_bar, distance_di, distance_matrix, natural_function, pisier_distance, rho_q_distance, DistanceKind,
    IndexMoments, PairwiseMomentField,
};
use uclt_core::psi::{MomentCurve, PsiFunction};

const P_GRID: [f64; 5] = [2.0, 3.0, 4.0, 6.0, 8.0];

/// Brownian-type Gaussian field with index-dependent scales `c_k`.
fn brownian_field(points: &[f64], scales: &[f64]) -> PairwiseMomentField {
    let grid = P_GRID.to_vec();
    let blocks = scales
        .iter()
        .map(|&c| {
            let mut increments = BTreeMap::new();
            for a in 0..points.len() {
                for b in a + 1..points.len() {
                    let sd = c * (points[a] - points[b]).abs().sqrt();
                    increments.insert((a, b), MomentCurve::gaussian(sd, grid.clone()).unwrap());
                }
            }
            IndexMoments {
                point_curves: points.iter().map(|x| MomentCurve::gaussian(c * x.sqrt(), grid.clone()).unwrap()).collect(),
                variances: points.iter().map(|x| c * c * x).collect(),
                increments,
            }
        })
        .collect();
    let coords = points.iter().map(|&x| vec![x]).collect();
    PairwiseMomentField::new(coords, grid, blocks, (0..scales.len()).collect()).unwrap()
}

fn field() -> impl Strategy<Value = PairwiseMomentField> {
    (
        prop::collection::vec(0.05f64..2.0, 3..6),
        prop::collection::vec(0.2f64..3.0, 8),
    )
        .prop_map(|(p, s)| brownian_field(&p, &s))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn distances_are_symmetric_and_homogeneous(f in field(), c in 0.1f64..10.0) {
        let psi = PsiFunction::closed_power(2.0).unwrap();
        let n_grid = [1usize, 2, 4, 8];
        let g = f.scaled(c);
        let m = f.points().len();
        for a in 0..m {
            prop_assert_eq!(distance_bar(&f, a, a, &psi, &n_grid).unwrap(), 0.0);
            for b in 0..m {
                let d = distance_bar(&f, a, b, &psi, &n_grid).unwrap();
                prop_assert!((d - distance_bar(&f, b, a, &psi, &n_grid).unwrap()).abs() <= 1e-12 * d);
                let dc = distance_bar(&g, a, b, &psi, &n_grid).unwrap();
                prop_assert!((dc - c * d).abs() <= 1e-9 * dc.max(1e-300));
                let r = pisier_distance(&f, a, b, 3.0).unwrap();
                prop_assert!((pisier_distance(&g, a, b, 3.0).unwrap() - c * r).abs() <= 1e-9 * (c * r).max(1e-300));
                let rq = rho_q_distance(&f, a, b, 2.0).unwrap();
                prop_assert!((rho_q_distance(&g, a, b, 2.0).unwrap() - c * rq).abs() <= 1e-9 * (c * rq).max(1e-300));
                for i in 1..=8 {
                    prop_assert!(distance_di(&f, i, a, b, &psi).unwrap() <= (8f64).sqrt() * d * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn natural_function_dominates_point_curves(f in field()) {
        let psi = natural_function(&f, &P_GRID).unwrap();
        for block in f.blocks() {
            for curve in &block.point_curves {
                for (p, v) in curve.p_grid().iter().zip(curve.norms()) {
                    prop_assert!(psi.eval(*p) >= *v * (1.0 - 1e-12));
                }
            }
        }
    }

    #[test]
    fn matrices_are_semimetric(f in field()) {
        let psi = PsiFunction::closed_power(2.0).unwrap();
        for kind in [
            DistanceKind::Index { i: 3, psi: psi.clone() },
            DistanceKind::Bar { psi: psi.clone(), n_grid: vec![1, 2, 4, 8] },
            DistanceKind::Pisier { r: 4.0 },
            DistanceKind::RhoQ { q: 1.0 },
        ] {
            let s = distance_matrix(&f, &kind).unwrap();
            for a in 0..s.len() {
                prop_assert_eq!(s.dist(a, a), 0.0);
                for b in 0..s.len() {
                    prop_assert_eq!(s.dist(a, b), s.dist(b, a));
                }
            }
        }
    }
}
