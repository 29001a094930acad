use proptest::prelude::*;

use ruelle_core::gibbs::{entropy_cylinder, entropy_markov, solve_gibbs, InvariantMeasure, Mixture};
use ruelle_core::involution::{involution_system, COCYCLE_TOLERANCE};
use ruelle_core::numeric::{max_abs_diff, max_of};
use ruelle_core::orbits::{birkhoff_sup, birkhoff_sup_series};
use ruelle_core::potential::{birkhoff_sum, holder_of_values, normalization_residual, Potential, PotentialTable};
use ruelle_core::space::{truncated_metric, AprioriMeasure, ConfigurationGrid, StateSpace};
use ruelle_core::transfer::{
    default_schedule, eigenpair_contraction, normalize_potential, SolverOptions, TransferOperator,
};
use ruelle_core::zerotemp::{beta_sweep, laplace_gap, max_mean_cycle, subaction_of};

fn opts() -> SolverOptions {
    SolverOptions::default()
}

/// Random weights and a random table over `d ∈ {2,3}` atoms of range `k ∈ {2,3}`.
fn system() -> impl Strategy<Value = (AprioriMeasure, PotentialTable)> {
    (2usize..=3, 2usize..=3).prop_flat_map(|(d, k)| {
        (
            prop::collection::vec(0.05f64..1.0, d),
            prop::collection::vec(-1.5f64..1.5, d.pow(k as u32)),
        )
            .prop_map(move |(w, vals)| {
                let nu = AprioriMeasure::new(StateSpace::finite(d).unwrap(), w, true).unwrap();
                (nu, PotentialTable::new(d, k, vals).unwrap())
            })
    })
}

fn same_alphabet_pair() -> impl Strategy<Value = (AprioriMeasure, PotentialTable, PotentialTable)> {
    (2usize..=3).prop_flat_map(|d| {
        (
            prop::collection::vec(0.05f64..1.0, d),
            prop::collection::vec(-1.5f64..1.5, d * d),
            prop::collection::vec(-1.5f64..1.5, d * d * d),
        )
            .prop_map(move |(w, a, b)| {
                let nu = AprioriMeasure::new(StateSpace::finite(d).unwrap(), w, true).unwrap();
                (nu, PotentialTable::new(d, 2, a).unwrap(), PotentialTable::new(d, 3, b).unwrap())
            })
    })
}

fn tuple_of(grid: &ConfigurationGrid, i: usize) -> Vec<usize> {
    grid.tuple(i % grid.size())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn apriori_weights_are_probabilities(w in prop::collection::vec(1e-3f64..10.0, 1..12)) {
        let n = w.len();
        let nu = AprioriMeasure::new(StateSpace::finite(n).unwrap(), w, true).unwrap();
        prop_assert!((nu.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(nu.min_weight() > 0.0);
    }

    #[test]
    fn truncated_metric_is_a_metric(
        n in 3usize..40,
        kind in 0usize..3,
        seeds in prop::collection::vec(0usize..10_000, 12),
        depth in 1usize..=4,
    ) {
        let space = match kind {
            0 => StateSpace::finite(n),
            1 => StateSpace::circle(n),
            _ => StateSpace::truncated_countable(n),
        }.unwrap();
        let x: Vec<usize> = seeds[0..4].iter().map(|s| s % n).collect();
        let y: Vec<usize> = seeds[4..8].iter().map(|s| s % n).collect();
        let z: Vec<usize> = seeds[8..12].iter().map(|s| s % n).collect();
        let dxy = truncated_metric(&space, &x, &y, depth).unwrap();
        let dyx = truncated_metric(&space, &y, &x, depth).unwrap();
        let dxz = truncated_metric(&space, &x, &z, depth).unwrap();
        let dzy = truncated_metric(&space, &z, &y, depth).unwrap();
        prop_assert_eq!(dxy, dyx);
        prop_assert!(dxy <= dxz + dzy + 1e-15);
        prop_assert_eq!(truncated_metric(&space, &x, &x, depth).unwrap(), 0.0);
    }

    #[test]
    fn grid_round_trip(n in 1usize..=10, rank in 1usize..=4) {
        let grid = ConfigurationGrid::new(n, rank).unwrap();
        prop_assume!(grid.size() <= 10_000);
        for i in 0..grid.size() {
            prop_assert_eq!(grid.index_of(&grid.tuple(i)), i);
        }
    }

    #[test]
    fn birkhoff_sum_scales_and_is_local(
        (nu, table) in system(),
        beta in -4.0f64..4.0,
        word in prop::collection::vec(0usize..3, 12),
        tail in prop::collection::vec(0usize..3, 6),
        n in 1usize..=6,
    ) {
        let d = nu.len();
        let k = table.range();
        let space = nu.space();
        let a = Potential::table(d, k, table.values().to_vec()).unwrap();
        let word: Vec<usize> = word.iter().map(|c| c % d).collect();
        let base = birkhoff_sum(&a, space, &word, n).unwrap();
        let scaled = birkhoff_sum(&a.scaled(beta), space, &word, n).unwrap();
        prop_assert!((scaled - beta * base).abs() <= 1e-12 * (1.0 + (beta * base).abs()));
        // only the first n + k − 1 symbols matter
        let mut other = word[..n + k - 1].to_vec();
        other.extend(tail.iter().map(|c| c % d));
        prop_assert_eq!(birkhoff_sum(&a, space, &other, n).unwrap(), base);
    }

    #[test]
    fn transfer_is_linear_and_positive(
        (nu, table) in system(),
        phi in prop::collection::vec(-2.0f64..2.0, 9),
        chi in prop::collection::vec(-2.0f64..2.0, 9),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let op = TransferOperator::new(&table, &nu).unwrap();
        let nb = op.n_blocks();
        let phi: Vec<f64> = (0..nb).map(|i| phi[i % 9]).collect();
        let chi: Vec<f64> = (0..nb).map(|i| chi[i % 9]).collect();
        let mix: Vec<f64> = phi.iter().zip(&chi).map(|(p, c)| a * p + b * c).collect();
        let lhs = op.apply(&mix);
        let lp = op.apply(&phi);
        let lc = op.apply(&chi);
        for i in 0..nb {
            let rhs = a * lp[i] + b * lc[i];
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * (1.0 + rhs.abs() + (a * lp[i]).abs() + (b * lc[i]).abs()));
        }
        let pos: Vec<f64> = phi.iter().map(|v| v.abs()).collect();
        prop_assert!(op.apply(&pos).iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn transfer_preserves_holder_bound((nu, table) in system(), phi in prop::collection::vec(-2.0f64..2.0, 9)) {
        // Hol(Lφ) ≤ 2^{−α}·Hol(e^A φ) with α = 1
        let op = TransferOperator::new(&table, &nu).unwrap();
        let space = nu.space();
        let nb = op.n_blocks();
        let phi: Vec<f64> = (0..nb).map(|i| phi[i % 9]).collect();
        let lifted: Vec<f64> = (0..table.values().len())
            .map(|t| table.get(t).exp() * phi[table.head(t)])
            .collect();
        let tuples = ConfigurationGrid::new(nu.len(), table.range()).unwrap();
        let bound = holder_of_values(space, &tuples, &lifted, 1.0).unwrap();
        let out = holder_of_values(space, &op.grid(), &op.apply(&phi), 1.0).unwrap();
        prop_assert!(out <= 0.5 * bound * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn power_and_contraction_agree((nu, table) in system()) {
        let op = TransferOperator::new(&table, &nu).unwrap();
        let pow = op.principal(&opts()).unwrap();
        let con = eigenpair_contraction(&table, &nu, &default_schedule(), &opts()).unwrap();
        prop_assert!((pow.log_lambda - con.best_log_lambda()).exp_m1().abs() <= 1e-5);
        let a: Vec<f64> = pow.log_psi.iter().map(|v| v.exp()).collect();
        let b: Vec<f64> = con.best_log_psi().iter().map(|v| v.exp()).collect();
        prop_assert!(max_abs_diff(&a, &b) <= 1e-4);
        let norm = table.sup_norm();
        for step in &con.schedule {
            let v = (1.0 - step.s) * step.max_u;
            prop_assert!(-norm - 1e-12 <= v && v <= norm + 1e-12);
        }
    }

    #[test]
    fn normalized_operator_contracts((nu, table) in system(), w in prop::collection::vec(-1.0f64..1.0, 9)) {
        let op = TransferOperator::new(&table, &nu).unwrap();
        let eig = op.principal(&opts()).unwrap();
        let bar = normalize_potential(&table, &eig).unwrap().table;
        prop_assert!(normalization_residual(&bar, &nu) <= 1e-10);
        let nop = TransferOperator::new(&bar, &nu).unwrap();
        let space = nu.space();
        let grid = nop.grid();
        let nb = nop.n_blocks();
        let mut v: Vec<f64> = (0..nb).map(|i| w[i % 9]).collect();
        let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let c_w = holder_of_values(space, &grid, &v, 1.0).unwrap();
        let tuples = ConfigurationGrid::new(nu.len(), bar.range()).unwrap();
        let exp_bar: Vec<f64> = bar.values().iter().map(|x| x.exp()).collect();
        let c_e = holder_of_values(space, &tuples, &exp_bar, 1.0).unwrap();
        let mut geometric = 0.0;
        for n in 1..=6 {
            v = nop.apply(&v);
            geometric += 0.5f64.powi(n);
            let now = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(now <= sup * (1.0 + 1e-12));
            let bound = c_e * sup * geometric + c_w * 0.5f64.powi(n);
            prop_assert!(holder_of_values(space, &grid, &v, 1.0).unwrap() <= bound * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn entropy_is_nonpositive_and_variational((nu, a, b) in same_alphabet_pair()) {
        let sol_a = solve_gibbs(&a, &nu, &opts()).unwrap();
        let sol_b = solve_gibbs(&b, &nu, &opts()).unwrap();
        for sol in [&sol_a, &sol_b] {
            let h = entropy_markov(&sol.gibbs).value.finite().unwrap();
            prop_assert!(h <= 1e-12);
        }
        let h_b = entropy_markov(&sol_b.gibbs).value.finite().unwrap();
        let h_a = entropy_markov(&sol_a.gibbs).value.finite().unwrap();
        prop_assert!(h_b + sol_b.gibbs.integrate(&a) <= sol_a.eig.log_lambda + 1e-8);
        prop_assert!(h_a + sol_a.gibbs.integrate(&b) <= sol_b.eig.log_lambda + 1e-8);
        prop_assert!((h_a + sol_a.gibbs.integrate(&a) - sol_a.eig.log_lambda).abs() <= 1e-8);
    }

    #[test]
    fn classical_and_relative_entropy_differ_by_weights((nu, table) in system()) {
        let mu = solve_gibbs(&table, &nu, &opts()).unwrap().gibbs;
        let rep = entropy_cylinder(&mu, &nu, 6).unwrap();
        let shift: f64 = (0..nu.len()).map(|i| nu.log_weights()[i] * mu.cylinder_mass(&[i])).sum();
        let h_nu = rep.conditional.unwrap();
        let h_cl = rep.classical_conditional.unwrap();
        prop_assert!((h_cl - (h_nu - shift)).abs() <= 1e-9);
        prop_assert!((rep.classical.unwrap() - (rep.value.finite().unwrap() - shift)).abs() <= 1e-9);
    }

    #[test]
    fn cylinder_entropy_is_concave_on_mixtures((nu, a, b) in same_alphabet_pair(), eps in 0.05f64..0.95) {
        let m1 = solve_gibbs(&a, &nu, &opts()).unwrap().gibbs;
        let m2 = solve_gibbs(&b, &nu, &opts()).unwrap().gibbs;
        let mix = Mixture::new(vec![(eps, &m1 as &dyn InvariantMeasure), (1.0 - eps, &m2)]).unwrap();
        let n = 6;
        let rate = |mu: &dyn InvariantMeasure| entropy_cylinder(mu, &nu, n).unwrap().value.finite().unwrap();
        prop_assert!(rate(&mix) >= eps * rate(&m1) + (1.0 - eps) * rate(&m2) - 2.0 / n as f64);
    }

    #[test]
    fn birkhoff_sup_brackets_the_ergodic_maximum((_nu, table) in system()) {
        let mm = max_mean_cycle(&table).unwrap();
        let len = mm.cycle.len();
        let series = birkhoff_sup_series(&table, 12).unwrap();
        for v in &series {
            prop_assert!(*v <= table.max() + 1e-12);
            prop_assert!(*v <= mm.m + 1e-12);
        }
        prop_assert!(birkhoff_sup(&table, len).unwrap() >= mm.m - 1e-12);
        if let Some(e) = mm.exhaustive {
            prop_assert!((e - mm.m).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_temperature_bounds((nu, table) in system()) {
        let betas = [1.0, 8.0, 64.0, 512.0];
        let sweep = beta_sweep(&table, &nu, &betas, &opts()).unwrap();
        prop_assert!(sweep.pressure_bound_holds());
        let last = sweep.last();
        let (gap, bound) = laplace_gap(&table, &nu, &last.v, last.beta);
        prop_assert!(gap <= bound + 1e-12);
        // subactions scale with the potential
        let m = max_mean_cycle(&table).unwrap().m;
        let beta = 3.5;
        let base = subaction_of(&table, &last.v, m).unwrap();
        let v_scaled: Vec<f64> = last.v.iter().map(|x| beta * x).collect();
        let scaled = subaction_of(&table.scaled(beta), &v_scaled, beta * m).unwrap();
        prop_assert!(scaled.calibration_error <= beta * base.calibration_error * (1.0 + 1e-9) + 1e-12);
        prop_assert!(max_of(&scaled.residual) <= beta * base.max_residual.max(0.0) + 1e-12);
    }

    #[test]
    fn involution_invariants((nu, table) in system()) {
        let sys = involution_system(&table, &nu, None, &opts()).unwrap();
        let nb = sys.kernel.n_blocks();
        for y in 0..nb {
            prop_assert_eq!(sys.kernel.get(y, 0), 0.0);
        }
        prop_assert!(sys.dual.cocycle_residual <= COCYCLE_TOLERANCE);
        prop_assert!(sys.lambda_gap() <= 1e-8);
        let m = max_mean_cycle(&table).unwrap().m;
        let m_star = max_mean_cycle(&sys.dual.table).unwrap().m;
        prop_assert!((m - m_star).abs() <= 1e-12);
    }
}

#[test]
fn grid_round_trip_is_exhaustive_at_ten_thousand() {
    let grid = ConfigurationGrid::new(10, 4).unwrap();
    assert_eq!(grid.size(), 10_000);
    assert!((0..grid.size()).all(|i| grid.index_of(&tuple_of(&grid, i)) == i));
}
