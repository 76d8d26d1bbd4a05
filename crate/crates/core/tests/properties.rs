use std::sync::Arc;

use bnspde::boundary::{BoundaryKind, BoundaryMap};
use bnspde::config::{parse_and_validate, validate};
use bnspde::diagnostics::{holder_exponent, regularity_cap, CapTerms, HolderOptions};
use bnspde::elliptic::{Coefficients, OperatorFamily};
use bnspde::noise::{IncrementStream, NoiseTarget};
use bnspde::{Anchor, Error, Grid};
use proptest::prelude::*;

const BASE: &str = r#"
seed = 1
paths = 2
[grid]
dimension = 1
n = 16
[lattice]
horizon = 0.5
steps = 32
[operator]
shift = 1.0
coefficients = { kind = "constant", a = 1.0 }
[exponents]
p = VAL_P
alpha = VAL_ALPHA
theta_c = VAL_THETA_C
theta_g = 0.9
"#;

fn config(p: f64, alpha: f64, theta_c: f64) -> String {
    BASE.replace("VAL_P", &format!("{p:?}"))
        .replace("VAL_ALPHA", &format!("{alpha:?}"))
        .replace("VAL_THETA_C", &format!("{theta_c:?}"))
}

const ANCHORS: [Anchor; 12] = [
    Anchor::RegularityHypotheses,
    Anchor::RegularityCap,
    Anchor::LqEmbedding,
    Anchor::SmoothedForcingRange,
    Anchor::SummableBoundaryCovariance,
    Anchor::RkhsBoundaryNoise,
    Anchor::InteriorNoiseLr,
    Anchor::WhiteNoiseOneDim,
    Anchor::DirichletExcluded,
    Anchor::Ellipticity,
    Anchor::ShiftedSpectrum,
    Anchor::ExperimentSetup,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn admissible_configs_round_trip(p in 2.0f64..8.0, a in 0.01f64..0.99, t in 0.01f64..0.99) {
        let alpha = 1.0 + a / p;
        let lo = 1.0 - alpha / 2.0;
        let theta_c = lo + t * (0.5 - lo);
        let cfg = parse_and_validate(&config(p, alpha, theta_c)).unwrap();
        let again = parse_and_validate(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(cfg.fingerprint(), again.fingerprint());
    }

    #[test]
    fn every_violation_names_one_anchor(p in 0.5f64..8.0, alpha in 0.5f64..2.0, theta_c in -0.2f64..0.8) {
        match parse_and_validate(&config(p, alpha, theta_c)) {
            Ok(cfg) => prop_assert!(validate(&cfg).is_empty()),
            Err(Error::Config(v)) => {
                prop_assert!(!v.is_empty());
                for x in v {
                    let hits = ANCHORS.iter().filter(|a| x.message.contains(a.as_str())).count();
                    prop_assert!(hits <= 1, "{}", x.message);
                    prop_assert!(ANCHORS.contains(&x.anchor));
                }
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn coarse_increments_are_block_sums(seed in any::<u64>(), path in 0u64..1000, k in 0usize..8) {
        let s = IncrementStream::new(seed, path, 64, 1.0).unwrap();
        let coarse = s.increments(NoiseTarget::Boundary, 8, k, 3).unwrap();
        let mut sum = [0.0; 3];
        for j in 8 * k..8 * (k + 1) {
            let fine = s.increments(NoiseTarget::Boundary, 64, j, 3).unwrap();
            for (a, b) in sum.iter_mut().zip(fine) {
                *a += b;
            }
        }
        for (a, b) in coarse.iter().zip(sum) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn boundary_forcing_is_linear(y0 in -5.0f64..5.0, y1 in -5.0f64..5.0, c in -3.0f64..3.0) {
        let grid = Arc::new(Grid::new(1, 24).unwrap());
        let fam = Arc::new(OperatorFamily::new(grid, Arc::new(Coefficients::constant(1.3, 0.2)), 1.0).unwrap());
        let mut m = BoundaryMap::new(fam, BoundaryKind::Neumann).unwrap();
        m.prepare(&[0.0]).unwrap();
        let a = m.lambda_values(0.0, &[y0, y1]).unwrap();
        let b = m.lambda_values(0.0, &[c * y0, c * y1]).unwrap();
        for (x, z) in a.iter().zip(b) {
            prop_assert!((c * x - z).abs() <= 1e-9 * (1.0 + z.abs()));
        }
    }

    #[test]
    fn cap_is_the_smallest_active_term(g in proptest::option::of(0.0f64..1.0), b in proptest::option::of(0.0f64..0.5), c in proptest::option::of(0.0f64..0.5)) {
        let (cap, _) = regularity_cap(CapTerms { theta_g: g, theta_b: b, theta_c: c });
        let mut expected = 1.0f64;
        if let Some(t) = g { expected = expected.min(1.0 - t); }
        if let Some(t) = b { expected = expected.min(0.5 - t); }
        if let Some(t) = c { expected = expected.min(0.5 - t); }
        prop_assert_eq!(cap, expected);
    }

    #[test]
    fn holder_exponent_is_scale_invariant(scale in 0.01f64..100.0) {
        let dt = 1.0 / 256.0;
        let path: Vec<f64> = (0..=256).map(|k| (k as f64 * dt).sqrt()).collect();
        let scaled: Vec<f64> = path.iter().map(|v| scale * v).collect();
        let a = holder_exponent(&path, dt, HolderOptions::default()).unwrap().exponent.unwrap();
        let b = holder_exponent(&scaled, dt, HolderOptions::default()).unwrap().exponent.unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}
