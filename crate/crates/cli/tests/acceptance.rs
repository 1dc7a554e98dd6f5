//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use gen2sat::analysis::{estimate_path_counts, find_hooked_chain, path_count_bound};
use gen2sat::branching::{
    coupled_run, dominance_pmf_check, estimate_extinction, linear_growth_check, FBranchingConfig, NodeType,
};
use gen2sat::digraph::{brute_force_satisfiable, is_satisfiable};
use gen2sat::experiments::{bootstrap_rounds, fit_threshold, BootstrapVerdict, LogisticThreshold};
use gen2sat::exploration::{run_round, LazySource, RoundConfig, VarSet};
use gen2sat::formula::sample_formula;
use gen2sat::{seed, Literal, ModelParams};

struct Report {
    failures: usize,
}

impl Report {
    fn record(&mut self, id: u32, name: &str, pass: bool, detail: String, started: Instant) {
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id:>2}] {name}: {detail} ({:.1}s)", started.elapsed().as_secs_f64());
        if !pass {
            self.failures += 1;
        }
    }
}

fn p(a0: f64, a1: f64, a2: f64) -> ModelParams {
    ModelParams::new(a0, a1, a2).unwrap()
}

fn oracle_equivalence(r: &mut Report) {
    let t = Instant::now();
    let grid = [p(1.0, 1.0, 1.0), p(3.0, 0.0, 3.0), p(0.5, 4.0, 2.0), p(6.0, 6.0, 6.0), p(2.0, 0.5, 8.0), p(0.0, 5.0, 5.0)];
    let mismatches: usize = (0..10_000u64)
        .into_par_iter()
        .filter(|&i| {
            let params = &grid[(i % grid.len() as u64) as usize];
            let n = 4 + ((i / 6) % 12) as usize;
            let f = sample_formula(n, params, seed::derive(1, &[i])).unwrap();
            is_satisfiable(&f).satisfiable != brute_force_satisfiable(&f).unwrap()
        })
        .count();
    let secs = t.elapsed().as_secs_f64();
    r.record(1, "oracle equivalence", mismatches == 0 && secs < 60.0, format!("{mismatches} mismatches in 10000 formulas, 4 <= n <= 15"), t);
}

fn thresholds(r: &mut Report) {
    let t = Instant::now();
    let rays = [p(1.0, 1.0, 1.0), p(4.0, 0.0, 4.0), p(1.0, 2.0, 1.0), p(0.25, 1.5, 0.25)];
    let fits: Vec<LogisticThreshold> = rays.iter().map(|d| fit_threshold(d, 20_000, 200, 42).unwrap()).collect();
    let std = &fits[0];
    let at = |rho: f64| std.rows.iter().find(|row| (row.rho - rho).abs() < 1e-9).unwrap().p_hat;
    let (lo, hi) = (at(0.8), at(1.2));
    let ok = lo >= 0.95 && hi <= 0.30 && (std.lambda - 1.0).abs() <= 0.05;
    r.record(
        2,
        "standard-model threshold",
        ok,
        format!("p_hat(0.8) = {lo}, p_hat(1.2) = {hi}, lambda* = {:.4}", std.lambda),
        t,
    );
    let t = Instant::now();
    let worst = fits.iter().map(|f| (f.rho_at_crossing - 1.0).abs()).fold(0.0, f64::max);
    let detail = rays
        .iter()
        .zip(&fits)
        .map(|(d, f)| format!("({},{},{}) -> {:.4}", d.alpha0, d.alpha1, d.alpha2, f.rho_at_crossing))
        .collect::<Vec<_>>()
        .join(", ");
    r.record(3, "generalized threshold at rho = 1", worst <= 0.08, format!("rho(lambda*): {detail}"), t);
}

fn degenerate(r: &mut Report) {
    let t = Instant::now();
    let n = 1000;
    let bad: usize = (0..1000u64)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = seed::rng_for(4, &[i]);
            use rand::Rng;
            let (x, y): (f64, f64) = (rng.random_range(0.0..=20.0), rng.random_range(0.0..=20.0));
            let f0 = sample_formula(n, &p(0.0, x, y), seed::derive(4, &[i, 0])).unwrap();
            let f2 = sample_formula(n, &p(y, x, 0.0), seed::derive(4, &[i, 2])).unwrap();
            let ok = is_satisfiable(&f0).satisfiable
                && f0.evaluate(&vec![true; n]).unwrap()
                && is_satisfiable(&f2).satisfiable
                && f2.evaluate(&vec![false; n]).unwrap();
            !ok
        })
        .count();
    r.record(4, "degenerate satisfiability", bad == 0, format!("{bad} failures over 1000 pairs, n = {n}"), t);
}

fn hooked_chains(r: &mut Report) {
    let t = Instant::now();
    let grid = [p(2.0, 2.0, 2.0), p(5.0, 0.0, 5.0), p(4.0, 4.0, 1.0), p(8.0, 1.0, 8.0), p(3.0, 6.0, 3.0)];
    let results: Vec<Option<bool>> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let f = sample_formula(5 + (i % 11) as usize, &grid[(i % 5) as usize], seed::derive(5, &[i])).unwrap();
            if is_satisfiable(&f).satisfiable {
                return None;
            }
            Some(find_hooked_chain(&f, 3).unwrap().is_some_and(|c| c.len() >= 3))
        })
        .collect();
    let unsat = results.iter().flatten().count();
    let missing = results.iter().flatten().filter(|&&found| !found).count();
    r.record(5, "hooked-chain necessity", missing == 0 && unsat > 0, format!("{unsat} UNSAT of 1000, {missing} without a chain"), t);
}

fn first_moment(r: &mut Report) {
    let t = Instant::now();
    let grid = [p(1.0, 1.0, 1.0), p(2.0, 0.0, 2.0), p(0.0, 2.0, 3.0), p(3.0, 0.5, 0.0), p(0.5, 0.5, 4.0), p(0.0, 1.5, 0.0)];
    let mut worst = f64::NEG_INFINITY;
    let mut checks = 0;
    for (i, params) in grid.iter().enumerate() {
        for s in 1..=6 {
            let est = estimate_path_counts(params, 80, s, 300, seed::derive(6, &[i as u64, s as u64])).unwrap();
            let bound = path_count_bound(params, s);
            for (mean, se, b) in [(est.plus_mean, est.plus_se, bound[0]), (est.minus_mean, est.minus_se, bound[1])] {
                // excess in standard errors; zero-variance cases compare exactly
                let z = if se > 0.0 { (mean - b) / se } else if mean > b + 1e-12 { f64::INFINITY } else { f64::NEG_INFINITY };
                worst = worst.max(z);
                checks += 1;
            }
        }
    }
    r.record(6, "first-moment consistency", worst <= 3.0, format!("{checks} comparisons, max excess {worst:.2} se"), t);
}

fn tau_tail(r: &mut Report) {
    let t = Instant::now();
    let params = p(2.0, 2.0, 2.0);
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [10_000usize, 40_000] {
        let cfg = RoundConfig::new(n, &params, 0.25, Literal::positive(1)).unwrap();
        let full = Arc::new(VarSet::full(n));
        let (stopped, disjoint) = (0..10_000u64)
            .into_par_iter()
            .map(|s| {
                let mut src = LazySource::new(n, params, seed::rng_for(7, &[n as u64, s, 0])).unwrap();
                let out = run_round(&mut src, full.clone(), &cfg, &mut seed::rng_for(7, &[n as u64, s, 1])).unwrap();
                (u64::from(out.first.stopped_early), u64::from(out.clauses_disjoint()))
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        let rate = stopped as f64 / 1e4;
        let sigma = (rate * (1.0 - rate) / 1e4).sqrt();
        let bound = 2.0 * (-params.alpha_max() * cfg.horizon as f64 / 2.0).exp();
        ok &= rate <= bound + 3.0 * sigma && disjoint == 10_000;
        parts.push(format!("n = {n}: P(tau < T) = {rate} vs {bound:.3e}, disjoint {disjoint}/10000"));
    }
    r.record(7, "tau tail bound", ok, parts.join("; "), t);
}

fn coupling(r: &mut Report) {
    let t = Instant::now();
    let n = 10_000;
    let full = Arc::new(VarSet::full(n));
    let mut parts = Vec::new();
    let mut ok = true;
    for params in [p(2.0, 2.0, 2.0), p(4.0, 0.0, 4.0)] {
        let cfg = FBranchingConfig::auto(&params).unwrap();
        let horizon = gen2sat::exploration::horizon_for(n);
        let good = (0..10_000u64)
            .into_par_iter()
            .filter(|&s| coupled_run(n, &cfg, full.clone(), Literal::positive(1), horizon, seed::derive(8, &[s])).unwrap().dominated)
            .count();
        ok &= good == 10_000;
        parts.push(format!("({},{},{}): {good}/10000", params.alpha0, params.alpha1, params.alpha2));
    }
    r.record(8, "dominance coupling", ok, parts.join(", "), t);
}

fn offspring(r: &mut Report) {
    let t = Instant::now();
    let vals = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0];
    let mut configs = 0;
    let mut bad = Vec::new();
    for &a0 in &vals {
        for &a1 in &[0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            for &a2 in &vals {
                let params = p(a0, a1, a2);
                if params.rho() <= 1.0 {
                    continue;
                }
                configs += 1;
                let cfg = FBranchingConfig::auto(&params).unwrap();
                let normalized = cfg.offspring.iter().all(|d| (d.pmf.iter().sum::<f64>() - 1.0).abs() <= 1e-12 && d.pmf.iter().all(|&x| x >= 0.0));
                let means = cfg.offspring.iter().all(|d| d.gamma == 0.0 || d.mean > (1.0 - cfg.beta) * d.gamma);
                let floor = (1.0 - cfg.delta) * (1.0 - cfg.beta) * params.rho();
                let rho0 = cfg.rho0 >= floor && floor > 1.0;
                let dom = cfg.dominance_threshold().is_ok_and(|n0| {
                    (0..3).all(|i| dominance_pmf_check(&cfg.offspring[i], n0, params.alpha(i), cfg.delta))
                });
                if !(normalized && means && rho0 && dom) {
                    bad.push(format!("({a0},{a1},{a2})"));
                }
            }
        }
    }
    r.record(9, "offspring construction", bad.is_empty(), format!("{configs} configs, failing: {bad:?}"), t);
}

fn growth(r: &mut Report) {
    let t = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, params) in [p(2.0, 2.0, 2.0), p(4.0, 0.0, 4.0), p(1.0, 2.0, 3.0)].iter().enumerate() {
        let cfg = FBranchingConfig::auto(params).unwrap();
        let ext = estimate_extinction(&cfg, 10_000, 1000, seed::derive(10, &[i as u64, 0])).unwrap();
        let target = 0.9 * (1.0 - ext.max_q_hat());
        let g1 = linear_growth_check(&cfg, NodeType::One, 1000, 10_000, seed::derive(10, &[i as u64, 1])).unwrap();
        let g2 = linear_growth_check(&cfg, NodeType::Two, 1000, 10_000, seed::derive(10, &[i as u64, 2])).unwrap();
        let fp = ext.fixed_point;
        let mut agree = ext.q1.agrees_with(fp[0], 3.0) && ext.q2.agrees_with(fp[1], 3.0);
        if let Some(e) = ext.even_step {
            agree &= ext.q1.agrees_with(e[0], 3.0) && ext.q2.agrees_with(e[1], 3.0);
        }
        let grows = g1.estimate.p_hat >= target && g2.estimate.p_hat >= target;
        ok &= agree && grows;
        parts.push(format!(
            "({},{},{}): growth {:.4}/{:.4} vs {:.4}, q_hat {:.4}/{:.4} vs fixed point {:.4}/{:.4}{}",
            params.alpha0,
            params.alpha1,
            params.alpha2,
            g1.estimate.p_hat,
            g2.estimate.p_hat,
            target,
            ext.q1.p_hat,
            ext.q2.p_hat,
            fp[0],
            fp[1],
            if ext.even_step.is_some() { " (even-step checked)" } else { "" }
        ));
    }
    r.record(10, "linear growth", ok, parts.join("; "), t);
}

fn bootstrap(r: &mut Report) {
    let t = Instant::now();
    let params = p(3.0, 3.0, 3.0);
    let outs: Vec<_> = (0..100u64).into_par_iter().map(|s| bootstrap_rounds(10_000, &params, seed::derive(11, &[s])).unwrap()).collect();
    let cycles = outs.iter().filter(|o| o.verdict == BootstrapVerdict::ContradictoryCycle).count();
    let stopped = outs.iter().filter(|o| o.verdict == BootstrapVerdict::RoundStopped).count();
    let disjoint = outs.iter().all(|o| o.rounds_disjoint && o.rounds_run <= o.budget);
    r.record(
        11,
        "round bootstrap",
        cycles >= 99 && disjoint,
        format!("{cycles}/100 contradictory cycles, {stopped} stopped, budget {} round(s) at delta = {:.4}", outs[0].budget, outs[0].delta),
        t,
    );
}

fn determinism(r: &mut Report) {
    let t = Instant::now();
    let bin = env!("CARGO_BIN_EXE_gen2sat");
    let dir = std::env::temp_dir().join(format!("gen2sat-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cnf = dir.join("f.cnf");
    let status = Command::new(bin)
        .args(["gen", "--n", "3000", "--alphas", "1.5,1,1.5", "--seed", "5", "--out"])
        .arg(&cnf)
        .status()
        .unwrap();
    assert!(status.success());
    let cnf = cnf.to_str().unwrap().to_owned();
    let commands: Vec<Vec<&str>> = vec![
        vec!["gen", "--n", "2000", "--alphas", "1,2,3", "--seed", "9"],
        vec!["bounds", "--alphas", "1,0.5,2", "--n", "10000"],
        vec!["explore", "--n", "10000", "--alphas", "2,2,2", "--seed", "4", "--policy", "uniform"],
        vec!["explore", "--n", "3000", "--alphas", "1.5,1,1.5", "--seed", "4", "--formula", &cnf],
        vec!["branch", "--alphas", "2,1,3", "--trials", "2000", "--horizon", "300", "--seed", "2"],
        vec!["sweep", "--n", "500,1000", "--ray", "1,1,1", "--lambdas", "0.5,1,1.5", "--trials", "40", "--seed", "3"],
        vec!["threshold", "--ray", "1,1,1", "--n", "1000", "--trials", "40", "--tol", "0.1", "--seed", "6"],
        vec!["rounds", "--n", "10000", "--alphas", "3,3,3", "--reps", "8", "--seed", "1"],
    ];
    let mut mismatched = Vec::new();
    for args in &commands {
        let outputs: Vec<Vec<u8>> = [1, 4, 16]
            .iter()
            .map(|w| {
                let o = Command::new(bin).arg("--workers").arg(w.to_string()).args(args).output().unwrap();
                assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
                [o.stdout, o.stderr].concat()
            })
            .collect();
        if outputs.windows(2).any(|w| w[0] != w[1]) {
            mismatched.push(args[0]);
        }
    }
    std::fs::remove_dir_all(&dir).ok();
    r.record(
        12,
        "determinism across workers",
        mismatched.is_empty(),
        format!("{} seeded invocations x workers 1/4/16, mismatched: {mismatched:?}", commands.len()),
        t,
    );
}

fn main() {
    let mut r = Report { failures: 0 };
    oracle_equivalence(&mut r);
    thresholds(&mut r);
    degenerate(&mut r);
    hooked_chains(&mut r);
    first_moment(&mut r);
    tau_tail(&mut r);
    coupling(&mut r);
    offspring(&mut r);
    growth(&mut r);
    bootstrap(&mut r);
    determinism(&mut r);
    println!("{} of 12 criteria failed", r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}
