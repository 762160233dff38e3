use proptest::prelude::*;
use uclt_core::integrals::{entropy_integral, entropy_power_integral, EntropyProfile, ProfileMode};
use uclt_core::psi::PsiFunction;
use uclt_core::ExtremumOptions;

fn profile(raw: &[f64], diameter: f64, nodes: usize, floor: f64) -> EntropyProfile {
    let eps: Vec<f64> = (0..nodes)
        .map(|k| diameter * floor.powf(1.0 - k as f64 / (nodes - 1) as f64))
        .rev()
        .collect();
    let mut acc = 0.0;
    let mut h: Vec<f64> = eps
        .iter()
        .enumerate()
        .map(|(k, _)| {
            acc += raw[k % raw.len()];
            acc
        })
        .collect();
    // descending radii: entropy grows along the grid and vanishes at the diameter
    h[0] = 0.0;
    EntropyProfile::measured(eps, h, ProfileMode::Greedy, diameter).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn larger_entropy_gives_larger_integrals(raw in prop::collection::vec(0.0f64..0.2, 5), bump in 0.0f64..0.5) {
        let a = profile(&raw, 1.0, 60, 1e-3);
        let bumped: Vec<f64> = raw.iter().map(|r| r + bump).collect();
        let b = profile(&bumped, 1.0, 60, 1e-3);
        let psi = PsiFunction::degenerate(3.0).unwrap();
        let opts = ExtremumOptions::default();
        let (ja, jb) = (entropy_integral(&a, &psi, &opts).unwrap(), entropy_integral(&b, &psi, &opts).unwrap());
        prop_assert!(ja.value >= 0.0 && jb.value >= ja.value * (1.0 - 1e-12));
        let (pa, pb) = (entropy_power_integral(&a, 1.5, "power").unwrap(), entropy_power_integral(&b, 1.5, "power").unwrap());
        prop_assert!(pa.value >= 0.0 && pb.value >= pa.value * (1.0 - 1e-12));
    }

    #[test]
    fn finer_resolution_never_shrinks_truncated_value(raw in prop::collection::vec(0.01f64..0.2, 5)) {
        let coarse = profile(&raw, 2.0, 80, 1e-2);
        let fine = profile(&raw, 2.0, 160, 1e-4);
        let a = entropy_power_integral(&coarse, 1.0, "power").unwrap();
        let b = entropy_power_integral(&fine, 1.0, "power").unwrap();
        prop_assert!(b.truncated_value >= a.truncated_value * (1.0 - 1e-3));
    }
}
