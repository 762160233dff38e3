use proptest::prelude::*;
use uclt_core::tails::{sum_decay_exponent, tail_second_moment, w_operator, w_operator_with, TailFunction};
use uclt_core::ExtremumOptions;

fn weibull() -> impl Strategy<Value = TailFunction> {
    (0.3f64..3.0, 0.5f64..4.0).prop_map(|(k, q)| TailFunction::closed_weibull(k, q).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn w_is_nonincreasing(t in weibull(), x in 0.1f64..30.0, dx in 0.01f64..10.0) {
        let a = w_operator(&t, x).unwrap();
        let b = w_operator(&t, x + dx).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b <= a * (1.0 + 1e-9));
    }

    #[test]
    fn w_is_stable_under_grid_refinement(t in weibull(), x in 1.0f64..30.0) {
        let base = ExtremumOptions::default();
        let fine = ExtremumOptions { grid_points: 2 * base.grid_points, ..base };
        let a = w_operator_with(&t, x, &base).unwrap();
        let b = w_operator_with(&t, x, &fine).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * a.max(b), "{} vs {}", a, b);
    }

    #[test]
    fn second_moment_is_nonincreasing(t in weibull(), v in 0.0f64..20.0, dv in 0.0f64..5.0) {
        let a = tail_second_moment(&t, v).unwrap();
        let b = tail_second_moment(&t, v + dv).unwrap();
        prop_assert!(b <= a * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn step_tails_give_nonincreasing_w(values in prop::collection::vec(0.0f64..1.0, 2..8), x in 0.1f64..10.0, dx in 0.01f64..5.0) {
        let mut v = values;
        v.sort_by(|a, b| b.total_cmp(a));
        v.push(0.0);
        let grid: Vec<f64> = (0..v.len()).map(|k| 0.5 * (k + 1) as f64).collect();
        let t = TailFunction::tabulated(grid, v).unwrap();
        prop_assert!(w_operator(&t, x + dx).unwrap() <= w_operator(&t, x).unwrap() + 1e-12);
    }
}

#[test]
fn second_moment_is_continuous_in_v() {
    let t = TailFunction::closed_weibull(1.0, 1.5).unwrap();
    let vs: Vec<f64> = (0..=2000).map(|k| k as f64 * 0.005).collect();
    let m: Vec<f64> = vs.iter().map(|&v| tail_second_moment(&t, v).unwrap()).collect();
    assert!(m.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-2));
}

#[test]
fn decay_exponent_identities() {
    for q in [0.1, 0.5, 1.0, 2.0, 7.0] {
        let s = sum_decay_exponent(q);
        assert!(s < q && s < 2.0);
    }
    assert!((sum_decay_exponent(1e9) - 2.0).abs() < 1e-8);
}
