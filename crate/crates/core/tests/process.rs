use std::sync::Arc;

use gen2sat::branching::{coupled_run, estimate_extinction, extinction_fixed_point, FBranchingConfig, NodeType, simulate_traversal};
use gen2sat::exploration::{run_round, DigraphSource, LazySource, RoundConfig, RoundVerdict, VarSet};
use gen2sat::digraph::build_digraph;
use gen2sat::formula::sample_formula;
use gen2sat::{seed, Literal, ModelParams};

#[test]
fn lazy_rounds_keep_examined_clauses_disjoint() {
    let grid = [(2.0, 2.0, 2.0), (4.0, 0.0, 4.0), (1.0, 3.0, 0.5), (0.3, 0.4, 0.5)];
    let n = 2500;
    let full = Arc::new(VarSet::full(n));
    let mut completed = 0;
    for (i, &(a0, a1, a2)) in grid.iter().enumerate() {
        let params = ModelParams::new(a0, a1, a2).unwrap();
        let cfg = RoundConfig::new(n, &params, 0.2, Literal::negative(3)).unwrap();
        for s in 0..250u64 {
            let mut src = LazySource::new(n, params, seed::rng_for(s, &[i as u64])).unwrap();
            let out = run_round(&mut src, full.clone(), &cfg, &mut seed::rng_for(s, &[9])).unwrap();
            assert!(out.clauses_disjoint(), "{params:?} seed {s}");
            assert!(out.first.u0 - out.first.u_at(out.first.tau) <= (2.0 * cfg.alpha_max * cfg.horizon as f64) as usize);
            if out.verdict == RoundVerdict::Completed {
                completed += 1;
            }
        }
    }
    assert!(completed > 500);
}

#[test]
fn formula_rounds_are_reproducible() {
    let params = ModelParams::uniform(2.5).unwrap();
    let f = sample_formula(4000, &params, 3).unwrap();
    let g = build_digraph(&f);
    let cfg = RoundConfig::new(4000, &params, 0.3, Literal::positive(7)).unwrap();
    let run = || {
        let out = run_round(&mut DigraphSource::new(&g), Arc::new(VarSet::full(4000)), &cfg, &mut seed::rng_for(1, &[])).unwrap();
        (out.first.steps.clone(), out.second.map(|s| s.steps))
    };
    assert_eq!(run(), run());
}

#[test]
fn traversal_is_reproducible_and_conserves() {
    let cfg = FBranchingConfig::auto(&ModelParams::new(1.0, 2.0, 3.0).unwrap()).unwrap();
    let a = simulate_traversal(&cfg, NodeType::Two, 500, 12).unwrap();
    assert_eq!(a, simulate_traversal(&cfg, NodeType::Two, 500, 12).unwrap());
    for w in a.windows(2) {
        let visited_one = w[0].x1 > 0;
        let (d1, d2) = if visited_one { cfg.children(NodeType::One) } else { cfg.children(NodeType::Two) };
        let k1 = w[1].x1 + u64::from(visited_one) - w[0].x1;
        let k2 = w[1].x2 + u64::from(!visited_one) - w[0].x2;
        assert!(k1 as usize <= d1.cutoff && k2 as usize <= d2.cutoff);
    }
}

#[test]
fn even_step_reduction_matches_simulation() {
    let cfg = FBranchingConfig::auto(&ModelParams::new(5.0, 0.0, 3.0).unwrap()).unwrap();
    let est = estimate_extinction(&cfg, 5000, 1000, 21).unwrap();
    let even = est.even_step.expect("alpha1 = 0");
    let fp = extinction_fixed_point(&cfg);
    assert!((even[0] - fp[0]).abs() < 1e-9 && (even[1] - fp[1]).abs() < 1e-9);
    assert!(est.q1.agrees_with(even[0], 3.0), "{est:?}");
    assert!(est.q2.agrees_with(even[1], 3.0), "{est:?}");
}

#[test]
fn coupling_from_negative_start_dominates() {
    let params = ModelParams::new(1.0, 2.0, 4.0).unwrap();
    let cfg = FBranchingConfig::auto(&params).unwrap();
    let n = 20_000;
    let full = Arc::new(VarSet::full(n));
    for s in 0..200 {
        let r = coupled_run(n, &cfg, full.clone(), Literal::negative(5), 141, s).unwrap();
        assert!(r.dominated, "seed {s}: {:?}", r.violation);
        assert_eq!(r.trajectory.len(), r.trace.steps.len() + 1);
    }
}
