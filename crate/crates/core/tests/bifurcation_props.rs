//! Randomized certification of the extension construction: arbitrary
//! strictly-positive targets on seeded random MDPs must be realized by the
//! extended soft optimum while plain greedy sets stay identical, and the
//! trap chain's return gap must match brute-force policy enumeration.

use entropy_trap_core::envs::{
    build_toy, build_trap_chain, misleading_reward_interval, random_deterministic_mdp,
    random_positive_target,
};
use entropy_trap_core::solvers::{
    plain_value_iteration, soft_value_iteration, DEFAULT_MAX_ITER, DEFAULT_TIE_TOL, DEFAULT_TOL,
};
use entropy_trap_core::{
    build_extension, verify_extension, BifurcationOptions, Mdp, PiecewisePolicy,
};

#[test]
fn random_extensions_verify_and_preserve_greedy_sets() {
    let opts = BifurcationOptions::default();
    for seed in 0..25 {
        let mdp = random_deterministic_mdp(seed, 6, 4);
        let target = random_positive_target(&mdp, seed);
        let (ext, params) = build_extension(&mdp, &target, &opts)
            .unwrap_or_else(|e| panic!("seed {}: {}", seed, e));
        assert!(ext.validate().is_valid(), "seed {}", seed);
        assert_eq!(params.len(), mdp.states[&target.state_id].atoms.len());

        let report = verify_extension(&mdp, &ext, &target, DEFAULT_TOL).unwrap();
        assert!(report.kl_at_target < 1e-6, "seed {}: kl {}", seed, report.kl_at_target);
        assert!(
            report.plain_q_residual < 1e-8,
            "seed {}: residual {}",
            seed,
            report.plain_q_residual
        );
        assert!(report.soft_v_residual < 1e-8, "seed {}", seed);
        assert!(
            report.trap_avoidance_margin >= opts.margin - 1e-9,
            "seed {}: margin {}",
            seed,
            report.trap_avoidance_margin
        );

        // Exact greedy-set equality on every original state.
        let before = plain_value_iteration(&mdp, DEFAULT_TOL, DEFAULT_TIE_TOL).unwrap();
        let after = plain_value_iteration(&ext, DEFAULT_TOL, DEFAULT_TIE_TOL).unwrap();
        for (sid, _) in mdp.non_terminal_states() {
            assert_eq!(before.greedy[sid], after.greedy[sid], "seed {} state {}", seed, sid);
        }

        // The realized Boltzmann masses at the target state match the target.
        let soft = soft_value_iteration(&ext, ext.alpha, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let masses = soft.policy.masses_at(&target.state_id).unwrap();
        for (k, (&got, &want)) in masses.iter().zip(&target.masses).enumerate() {
            assert!(
                (got - want).abs() < 1e-6,
                "seed {} atom {}: {} vs {}",
                seed,
                k,
                got,
                want
            );
        }
    }
}

/// Every deterministic stationary policy of a chain MDP, evaluated exactly.
fn enumerate_policy_returns(mdp: &Mdp) -> Vec<f64> {
    let states: Vec<&String> = mdp.non_terminal_states().map(|(id, _)| id).collect();
    let counts: Vec<usize> = states
        .iter()
        .map(|sid| mdp.states[*sid].atoms.len())
        .collect();
    let total: usize = counts.iter().product();
    let mut returns = Vec::with_capacity(total);
    for mut code in 0..total {
        let mut choices = std::collections::BTreeMap::new();
        for (sid, &n) in states.iter().zip(&counts) {
            choices.insert((*sid).clone(), code % n);
            code /= n;
        }
        let policy = PiecewisePolicy::deterministic(mdp, &choices);
        let eval = entropy_trap_core::policy_evaluation(mdp, &policy, 0.5, false, DEFAULT_TOL)
            .unwrap();
        returns.push(eval.j);
    }
    returns
}

#[test]
fn trap_chain_gap_matches_brute_force_enumeration() {
    let chain = build_trap_chain(3, 1.0, -1.0, 17).unwrap();
    let returns = enumerate_policy_returns(&chain.original);
    assert_eq!(returns.len(), 8);
    let best = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let worst = returns.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((best - chain.report.j_plus.unwrap()).abs() < 1e-9);
    assert!((worst - chain.report.j_minus.unwrap()).abs() < 1e-9);
    assert!((best - 2.9701).abs() < 1e-9);
    assert!((worst + 2.9701).abs() < 1e-9);

    // eta = 0.99: the restricted MaxEnt policy sits within the mass-bound
    // of the worst return.
    let j_maxent = chain.report.j_maxent.unwrap();
    let bound = (1.0 - 0.99) * (best - worst) + 1e-6;
    assert!(
        (j_maxent - worst).abs() <= bound,
        "j_maxent {} worst {} bound {}",
        j_maxent,
        worst,
        bound
    );
}

#[test]
fn near_unit_concentration_approaches_the_worst_return() {
    let chain = build_trap_chain(3, 1.0, -1.0, 3).unwrap();
    let eta = 1.0 - 1e-6;
    let wc = entropy_trap_core::worst_case_transform(&chain.original, eta).unwrap();
    let j_maxent = wc.report.j_maxent.unwrap();
    let j_minus = wc.report.j_minus.unwrap();
    assert!(
        (j_maxent - j_minus).abs() < 1e-3,
        "j_maxent {} vs j_minus {}",
        j_maxent,
        j_minus
    );
}

#[test]
fn misleading_interval_flips_soft_preference_only() {
    let toy = build_toy();
    let (lo, hi) = misleading_reward_interval(&toy, 1.0).unwrap();
    assert!((lo - -1.3026).abs() < 1e-3);
    assert!((hi - 1.0).abs() < 1e-12);

    for i in 0..5 {
        let r_b = lo + (hi - lo) * (i as f64 + 0.5) / 5.0;
        let mut mdp = build_toy();
        mdp.states.get_mut("s_bT_minus").unwrap().terminal_reward = r_b;
        let soft = soft_value_iteration(&mdp, 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(
            soft.q["s_0"][1] > soft.q["s_0"][0],
            "r_b = {} does not mislead",
            r_b
        );
        let plain = plain_value_iteration(&mdp, DEFAULT_TOL, DEFAULT_TIE_TOL).unwrap();
        assert_eq!(plain.greedy["s_0"], vec![0], "r_b = {}", r_b);
    }

    // Just inside the lower endpoint the soft margin vanishes.
    let mut mdp = build_toy();
    mdp.states.get_mut("s_bT_minus").unwrap().terminal_reward = lo + 1e-9;
    let soft = soft_value_iteration(&mdp, 1.0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let margin = soft.q["s_0"][1] - soft.q["s_0"][0];
    assert!(margin.abs() < 1e-6, "margin {}", margin);
}

#[test]
fn misleading_interval_general_alpha() {
    let toy = build_toy();
    for alpha in [0.5, 2.0, 10.0] {
        let (lo, hi) = misleading_reward_interval(&toy, alpha).unwrap();
        assert!(lo < hi, "alpha {}: empty interval ({}, {})", alpha, lo, hi);
        let r_b = lo + (hi - lo) * 0.5;
        let mut mdp = build_toy();
        mdp.alpha = alpha;
        mdp.states.get_mut("s_bT_minus").unwrap().terminal_reward = r_b;
        let soft = soft_value_iteration(&mdp, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(soft.q["s_0"][1] > soft.q["s_0"][0], "alpha {}", alpha);
    }
}

#[test]
fn alpha_scaling_preserves_the_misleading_argmax() {
    for alpha in [0.1, 0.5, 2.0, 10.0] {
        let mdp = entropy_trap_core::envs::alpha_scaled_toy(alpha);
        let soft = soft_value_iteration(&mdp, alpha, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(
            soft.q["s_0"][1] > soft.q["s_0"][0],
            "alpha {}: ordering lost",
            alpha
        );
    }
}
