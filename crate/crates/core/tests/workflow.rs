use lpvred::analysis::grid_worst_hinf;
use lpvred::bench::{build_msd, MsdConfig};
use lpvred::closedloop::{mixed_sensitivity_plant, synthesize_controller, validate, ValidationOptions, Weights};
use lpvred::model::difference;
use lpvred::reduction::modal_blocks;
use lpvred::{reduce, ReductionConfig, ReductionReport, StructureMask};

fn small_run(mask: &StructureMask, certify: bool) -> ReductionReport<f64> {
    let g = build_msd::<f64>(&MsdConfig::new(4, 1)).unwrap();
    let mut cfg = ReductionConfig::new(mask.order(), g.params.grid(3));
    cfg.multistart = 2;
    cfg.max_iterations = 40;
    cfg.certify = certify;
    reduce(&g, &cfg, mask).unwrap()
}

fn nonincreasing(h: &[f64]) -> bool {
    h.windows(2).all(|w| w[1] <= w[0])
}

#[test]
fn full_reduction_descends_and_certifies() {
    let r = small_run(&StructureMask::full(2, 1, 1, 1), true);
    assert!(nonincreasing(&r.history));
    assert!(r.grid_error <= r.baseline_grid_error.unwrap());
    let bound = r.certified_bound().expect("certified");
    assert!(bound >= r.grid_error * (1.0 - 1e-6), "{bound} vs {}", r.grid_error);
    // grid error is the reported objective
    let g = build_msd::<f64>(&MsdConfig::new(4, 1)).unwrap();
    let err = difference(&g, &r.g_red).unwrap();
    let again = grid_worst_hinf(&err, &g.params.grid(3), 1e-6).unwrap().gamma;
    assert!((again - r.grid_error).abs() <= 1e-5 * r.grid_error);
}

#[test]
fn modal_reduction_is_block_diagonal() {
    let r = small_run(&StructureMask::modal(3, 1, 1, 1), false);
    let blocks = modal_blocks(3);
    let inside = |i: usize, j: usize| blocks.iter().any(|&(s, k)| i >= s && i < s + k && j >= s && j < s + k);
    for term in r.g_red.a.terms() {
        for i in 0..3 {
            for j in 0..3 {
                if !inside(i, j) {
                    assert_eq!(term[(i, j)].to_bits(), 0.0f64.to_bits());
                }
            }
        }
    }
    assert!(nonincreasing(&r.history));
}

#[test]
fn reports_are_deterministic() {
    let mask = StructureMask::full(2, 1, 1, 1);
    let a = small_run(&mask, false).to_json();
    let b = small_run(&mask, false).to_json();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn controller_designed_on_reduction_stabilizes_full_model() {
    let g = build_msd::<f64>(&MsdConfig::new(4, 1)).unwrap();
    let grid = g.params.grid(3);
    let red = small_run(&StructureMask::full(2, 1, 1, 1), false).g_red;
    let w = Weights::default();
    let plant = mixed_sensitivity_plant(&red, &w).unwrap();
    let mut cfg = ReductionConfig::new(3, grid.clone());
    cfg.multistart = 1;
    cfg.max_iterations = 30;
    let (s, _) = synthesize_controller(&plant, &StructureMask::full(3, 1, 1, 1), &cfg, None).unwrap();
    let rep = validate(&g, &s.k, &w, &grid, &ValidationOptions::default()).unwrap();
    assert!(rep.stable_on_grid());
    assert!(rep.max_steady_state_error().unwrap() < 0.02);
}
