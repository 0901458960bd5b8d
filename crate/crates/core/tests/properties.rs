use lpvred::analysis::{grid_worst_hinf, hinf_norm, spectral_abscissa};
use lpvred::bench::{build_msd, MsdConfig};
use lpvred::certify::certify_bound;
use lpvred::io::{model_from_json, model_to_json};
use lpvred::model::{difference, generalized_plant, lower_lft};
use lpvred::reduction::Parameterization;
use lpvred::testing::{randn, random_quadratically_stable, random_stable};
use lpvred::{AffineMatrix, LpvModel, ParameterBox, StructureMask};
use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_box(rng: &mut ChaCha8Rng, n_rho: usize) -> ParameterBox<f64> {
    ParameterBox::new(
        (0..n_rho)
            .map(|_| {
                let lo = rng.random_range(-2.0..0.5);
                (lo, lo + rng.random_range(0.1..3.0))
            })
            .collect(),
    )
    .unwrap()
}

fn random_affine(rng: &mut ChaCha8Rng, r: usize, c: usize, n_rho: usize, scale: f64) -> AffineMatrix<f64> {
    AffineMatrix::new(
        randn(rng, r, c),
        (0..n_rho).map(|_| randn(rng, r, c) * scale).collect(),
    )
    .unwrap()
}

/// Random affine model; not necessarily stable.
fn random_model(seed: u64, n: usize, n_u: usize, n_y: usize, n_rho: usize) -> LpvModel<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_box(&mut rng, n_rho);
    LpvModel::new(
        random_affine(&mut rng, n, n, n_rho, 1.0),
        random_affine(&mut rng, n, n_u, n_rho, 1.0),
        random_affine(&mut rng, n_y, n, n_rho, 1.0),
        random_affine(&mut rng, n_y, n_u, n_rho, 1.0),
        params,
    )
    .unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, p: &ParameterBox<f64>) -> Vec<f64> {
    p.bounds().iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()
}

fn max_diff(a: &DMatrix<Complex<f64>>, b: &DMatrix<Complex<f64>>) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn lft_round_trip_matches_freeze(seed in any::<u64>(), n in 1usize..6, n_u in 1usize..3, n_y in 1usize..3, n_rho in 0usize..3) {
        let m = random_model(seed, n, n_u, n_y, n_rho);
        let lft = m.to_lft();
        prop_assert!(lft.q() <= n_rho * (n + n_u.max(n_y)));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for _ in 0..5 {
            let rho = random_point(&mut rng, &m.params);
            let a = lft.eval(&lft.normalize(&rho)).unwrap();
            let b = m.freeze(&rho).unwrap();
            for (x, y) in [(&a.a, &b.a), (&a.b, &b.b), (&a.c, &b.c), (&a.d, &b.d)] {
                prop_assert!((x - y).amax() <= 1e-12 * (1.0 + y.amax()), "{}", (x - y).amax());
            }
        }
    }

    #[test]
    fn difference_is_response_difference(seed in any::<u64>(), n1 in 1usize..5, n2 in 1usize..4, n_rho in 0usize..3) {
        let g = random_model(seed, n1, 2, 1, n_rho);
        let mut h = random_model(seed.wrapping_add(7), n2, 2, 1, n_rho);
        h.params = g.params.clone();
        let e = difference(&g, &h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_point(&mut rng, &g.params);
        let (ef, gf, hf) = (e.freeze(&rho).unwrap(), g.freeze(&rho).unwrap(), h.freeze(&rho).unwrap());
        for k in 0..50 {
            let w = 10f64.powf(-2.0 + 4.0 * k as f64 / 49.0);
            let (Ok(ge), Ok(gg), Ok(gh)) = (ef.freq_response(w), gf.freq_response(w), hf.freq_response(w)) else {
                continue;
            };
            let scale = 1.0 + gg.iter().chain(gh.iter()).map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(max_diff(&ge, &(gg - gh)) <= 1e-10 * scale);
        }
    }

    #[test]
    fn reduction_plant_closes_to_difference(seed in any::<u64>(), n1 in 1usize..5, n2 in 1usize..4) {
        let g = random_model(seed, n1, 1, 2, 1);
        let mut k = random_model(seed.wrapping_add(3), n2, 1, 2, 1);
        k.params = g.params.clone();
        let cl = lower_lft(&generalized_plant(&g), &k).unwrap();
        let e = difference(&g, &k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_point(&mut rng, &g.params);
        let (cf, ef) = (cl.freeze(&rho).unwrap(), e.freeze(&rho).unwrap());
        for w in [0.01, 0.3, 1.0, 7.0, 50.0] {
            let (Ok(a), Ok(b)) = (cf.freq_response(w), ef.freq_response(w)) else { continue };
            let scale = 1.0 + b.iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(max_diff(&a, &b) <= 1e-10 * scale);
        }
    }

    #[test]
    fn pack_unpack_identity(seed in any::<u64>(), n in 1usize..6, n_rho in 0usize..3, density in 0.0f64..1.0) {
        let template = random_model(seed, n, 2, 2, n_rho);
        let other = random_model(seed.wrapping_add(11), n, 2, 2, n_rho);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mask = StructureMask::full(n, 2, 2, n_rho);
        for terms in [&mut mask.a, &mut mask.b, &mut mask.c, &mut mask.d] {
            for t in terms.iter_mut() {
                t.apply(|b| *b = rng.random_bool(density));
            }
        }
        let p = Parameterization::new(mask.clone(), template).unwrap();
        let m = p.project(&other).unwrap();
        let theta = p.pack(&m).unwrap();
        prop_assert_eq!(theta.len(), mask.n_free());
        prop_assert_eq!(p.unpack(&theta), m);
    }

    #[test]
    fn model_json_round_trip_is_bit_exact(seed in any::<u64>(), n in 0usize..5, n_rho in 0usize..3) {
        let m = random_model(seed, n, 1, 2, n_rho);
        let back: LpvModel<f64> = model_from_json(&model_to_json(&m)).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn benchmark_is_dissipative(n in 1usize..9, n_rho_raw in 1usize..4, mass in 0.2f64..5.0, damping in 0.05f64..3.0, k0 in 0.1f64..4.0, frac in 0.0f64..0.95) {
        let n_rho = n_rho_raw.min(n);
        let cfg = MsdConfig { n_blocks: n, n_rho, mass, damping, k0, k_rho: frac * k0 };
        let g = build_msd::<f64>(&cfg).unwrap();
        prop_assert_eq!(g.n_x(), 2 * n);
        for rho in g.params.grid(3) {
            let sys = g.freeze(&rho).unwrap();
            prop_assert!(spectral_abscissa(&sys.a).unwrap() < 0.0);
            let stiff = sys.a.view((n, 0), (n, n)).into_owned();
            prop_assert!((&stiff - stiff.transpose()).amax() < 1e-12);
            prop_assert!(sys.dc_gain().unwrap()[(0, 0)] > 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn certified_bound_dominates_grid(seed in any::<u64>(), n in 1usize..4, n_rho in 1usize..3) {
        let m = random_quadratically_stable(&mut ChaCha8Rng::seed_from_u64(seed), n, 1, 1, n_rho);
        let grid = m.params.grid(5);
        let lower = grid_worst_hinf(&m, &grid, 1e-8).unwrap().gamma;
        let cert = certify_bound(&m, 1e-3, &m.params.vertices().unwrap()).unwrap();
        prop_assert!(cert.certified_bound >= lower * (1.0 - 1e-8), "{} < {}", cert.certified_bound, lower);
        prop_assert!(cert.is_monotone());
    }
}

#[test]
fn lti_certificates_match_hinf() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let n = rng.random_range(1..5);
        let sys = random_stable(&mut rng, n, 1, 1);
        let m = LpvModel::from_lti(&sys, ParameterBox::unit(0));
        let exact = hinf_norm(&sys, 1e-9).unwrap().gamma;
        let cert = certify_bound(&m, 1e-3, &[vec![]]).unwrap().certified_bound;
        assert!(cert >= exact * (1.0 - 1e-8) && cert <= exact * (1.0 + 1e-3) + 1e-6, "{cert} vs {exact}");
    }
}
