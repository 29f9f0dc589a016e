use adalloc_core::optimizer::{
    brute_force_solve, export_mps_to_string, import_mps, solve, solve_lp_relaxation,
    INTEGRALITY_TOL,
};
use adalloc_core::pipeline::allocate;
use adalloc_core::synth::{random_group_model, random_small_instance};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn mps_round_trips(seed in any::<u64>(), floors in any::<bool>()) {
        let model = random_group_model(&mut ChaCha8Rng::seed_from_u64(seed), floors);
        let text = export_mps_to_string(&model);
        let back = import_mps(&text).unwrap();
        prop_assert_eq!(&back, &model);
        prop_assert_eq!(export_mps_to_string(&back), text);
    }

    #[test]
    fn relaxation_without_floors_is_integral(seed in any::<u64>()) {
        let model = random_group_model(&mut ChaCha8Rng::seed_from_u64(seed), false);
        let lp = solve_lp_relaxation(&model).unwrap();
        prop_assert!(lp.max_integrality_gap() <= INTEGRALITY_TOL, "gap {}", lp.max_integrality_gap());
    }

    #[test]
    fn integer_solution_is_feasible_and_below_bound(seed in any::<u64>(), floors in any::<bool>()) {
        let model = random_group_model(&mut ChaCha8Rng::seed_from_u64(seed), floors);
        if let Ok(sol) = solve(&model) {
            prop_assert_eq!(model.check_feasible(&sol.counts), Ok(()));
            prop_assert_eq!(model.objective_of(&sol.counts), sol.objective);
            prop_assert!(sol.objective.micros() as f64 <= sol.root_bound + 1e-3);
        }
    }

    #[test]
    fn grouped_pipeline_matches_enumeration(seed in any::<u64>()) {
        let instance = random_small_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let oracle = brute_force_solve(&instance);
        match allocate(&instance) {
            Ok(solved) => prop_assert_eq!(solved.result.objective, oracle.unwrap().objective),
            Err(e) => prop_assert!(oracle.is_err(), "pipeline failed ({}) but oracle solved", e),
        }
    }
}
