mod common;

use common::{kkt_oracle, planted_qp, rel_inf};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uav_cloudlet::solver::{solve, IpmOptions};

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn matches_direct_kkt_solution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let qp = planted_qp(&mut rng);
        let (x, lam) = kkt_oracle(&qp);
        // Multipliers are only as accurate as complementarity allows.
        let opts = IpmOptions { tol: 1e-11, ..IpmOptions::default() };
        let sol = solve(&qp.program, &opts).unwrap();
        prop_assert!(rel_inf(&sol.x, &x) <= 1e-6, "x error {:e}", rel_inf(&sol.x, &x));
        let active: Vec<f64> = qp.active.iter().map(|&i| sol.lambda[i]).collect();
        prop_assert!(rel_inf(&active, &lam) <= 1e-6, "multiplier error {:e}", rel_inf(&active, &lam));
        let inactive = (0..qp.ineq.len()).filter(|i| !qp.active.contains(i));
        for i in inactive {
            prop_assert!(sol.lambda[i] <= 1e-6);
        }
    }
}

#[test]
fn unconstrained_quadratic_is_one_newton_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut qp = planted_qp(&mut rng);
    qp.program.inequalities.clear();
    qp.program.equalities.clear();
    qp.active.clear();
    qp.ineq.clear();
    qp.eq.clear();
    let (x, _) = kkt_oracle(&qp);
    let sol = solve(&qp.program, &IpmOptions::default()).unwrap();
    assert!(rel_inf(&sol.x, &x) <= 1e-9);
    assert!(sol.iterations <= 2, "{} iterations", sol.iterations);
}
