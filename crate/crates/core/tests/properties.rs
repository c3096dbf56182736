use std::collections::HashSet;

use proptest::prelude::*;

use confopt::backends::SliResult;
use confopt::harness::{nearest_rank, Dataset, DatasetRow};
use confopt::optim::{Observation, OptimizerKind, OptimizerSession, StrategyOptions};
use confopt::screening::{generate_trajectories, planned_evaluations};
use confopt::space::{ParameterSpec, SearchSpace};

fn space_strategy(max_dims: usize) -> impl Strategy<Value = SearchSpace> {
    prop::collection::vec((-50i64..50, 2i64..6, 1i64..5), 1..=max_dims).prop_map(|dims| {
        SearchSpace::new(
            dims.into_iter()
                .enumerate()
                .map(|(i, (min, levels, g))| {
                    ParameterSpec::new(format!("p{i}"), min, min + (levels - 1) * g, g, "").unwrap()
                })
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ordinals_enumerate_the_space(space in space_strategy(4)) {
        let all: Vec<_> = space.enumerate().collect();
        prop_assert_eq!(all.len() as u64, space.size_u64().unwrap());
        for (i, c) in all.iter().enumerate() {
            prop_assert_eq!(space.ordinal(c).unwrap(), i as u64);
            prop_assert_eq!(&space.at_ordinal(i as u64), c);
            prop_assert_eq!(&space.parse_key(&space.config_key(c)).unwrap(), c);
        }
    }

    #[test]
    fn trajectories_move_one_dimension_per_step(space in space_strategy(6), r in 1usize..8, seed in any::<u64>()) {
        let plans = generate_trajectories(&space, r, 4, seed).unwrap();
        prop_assert_eq!(planned_evaluations(&plans), r * (space.dims() + 1));
        for plan in &plans {
            let mut moved = HashSet::new();
            for (step, pair) in plan.points.windows(2).enumerate() {
                let changed: Vec<usize> = (0..space.dims())
                    .filter(|&d| pair[0].coords()[d] != pair[1].coords()[d])
                    .collect();
                prop_assert_eq!(changed.len(), 1);
                let d = changed[0];
                prop_assert_eq!(d, plan.perturbed[step]);
                prop_assert!(((pair[1].coords()[d] - pair[0].coords()[d]).abs() - plan.delta).abs() < 1e-12);
                prop_assert!(moved.insert(d));
            }
            prop_assert!(plan.points.iter().flat_map(|p| p.coords()).all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn sessions_never_repeat_a_configuration(
        space in space_strategy(3),
        kind in prop::sample::select(vec![
            OptimizerKind::Random,
            OptimizerKind::RandomInc,
            OptimizerKind::Exhaustive,
            OptimizerKind::BestConfig,
            OptimizerKind::BayesianEi,
        ]),
        budget in 1usize..40,
        batch in 1usize..7,
        seed in any::<u64>(),
    ) {
        let mut session = OptimizerSession::new(space.clone(), kind, budget, batch, seed, &StrategyOptions::default()).unwrap();
        let mut seen = HashSet::new();
        while let Ok(proposed) = session.ask() {
            prop_assert!(!proposed.is_empty() && proposed.len() <= batch);
            let obs = proposed
                .iter()
                .map(|c| {
                    prop_assert!(space.contains(c));
                    prop_assert!(seen.insert(c.clone()));
                    let u = c.settings().iter().map(|v| (v * v) as f64).sum::<f64>();
                    Ok(Observation::new(c.clone(), Default::default(), u, true, false))
                })
                .collect::<Result<Vec<_>, TestCaseError>>()?;
            session.tell(obs).unwrap();
        }
        let expected = budget.min(space.size_u64().unwrap() as usize);
        prop_assert_eq!(seen.len(), expected);
    }

    #[test]
    fn nearest_rank_matches_sorted_index(mut values in prop::collection::vec(-1e6f64..1e6, 1..200), q in 0.01f64..=1.0) {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((q * sorted.len() as f64).ceil() as usize).max(1);
        prop_assert_eq!(nearest_rank(&mut values, q), sorted[rank - 1]);
    }

    #[test]
    fn dataset_round_trips_through_csv(
        space in space_strategy(3),
        seed in any::<u64>(),
    ) {
        let rows: Vec<DatasetRow> = space
            .enumerate()
            .enumerate()
            .map(|(i, config)| {
                let x = (seed.wrapping_mul(i as u64 + 1) % 1000) as f64 / 7.0;
                let sli = if i % 5 == 3 { SliResult::failure("crashed") } else { SliResult::ok(x, 1.0 + x / 3.0) };
                DatasetRow { config, utility: x / 100.0, feasible: x < 50.0, sli }
            })
            .collect();
        let dataset = Dataset::new(space, rows, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        dataset.write(&path).unwrap();
        let back = Dataset::read(&path).unwrap();
        // reasons are not stored; the failed flag is
        let strip = |rows: &[DatasetRow]| {
            rows.iter().cloned().map(|mut r| { r.sli.failure_reason = None; r }).collect::<Vec<_>>()
        };
        prop_assert_eq!(strip(back.rows()), strip(dataset.rows()));
        prop_assert_eq!(back.space(), dataset.space());
    }
}
