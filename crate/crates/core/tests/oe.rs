use msoe_core::experiments::Scenario;
use msoe_core::intensity::StateId;
use msoe_core::oe::{aggregate_1d, aggregate_2d, oe_rates, IntervalScale, Layout, TimeDurationGrid, TimeGrid};
use msoe_core::sim::simulate_cohort;
use proptest::prelude::*;

#[test]
fn exposure_and_censored_time_fill_the_window() {
    for (scenario, seed) in [(Scenario::paper_markov(), 3), (Scenario::paper_semi_markov(), 4)] {
        let n = 5_000;
        let cohort = simulate_cohort(&scenario.sim_config(n, seed)).unwrap();
        let layout = Layout::from_model(&scenario.model);
        let table = aggregate_1d(&cohort, TimeGrid::new(0.0, 40.0, 37).unwrap(), &layout).unwrap();
        let exposure: f64 = (0..layout.n_states()).flat_map(|s| table.exposures(StateId(s))).sum();
        let after: f64 = cohort.iter().map(|t| 40.0 - t.censor_time).sum();
        let total = n as f64 * 40.0;
        assert!(((exposure + after) - total).abs() <= 1e-9 * total, "{} vs {total}", exposure + after);
    }
}

#[test]
fn time_by_duration_table_marginalises_to_the_time_table() {
    let s = Scenario::paper_semi_markov();
    let cohort = simulate_cohort(&s.sim_config(3_000, 8)).unwrap();
    let layout = Layout::from_model(&s.model);
    let time = TimeGrid::new(0.0, 40.0, 20).unwrap();
    let two = aggregate_2d(&cohort, TimeDurationGrid::new(time, TimeGrid::new(0.0, 40.0, 13).unwrap()), &layout)
        .unwrap()
        .marginalize_duration()
        .unwrap();
    let one = aggregate_1d(&cohort, time, &layout).unwrap();
    for tr in 0..layout.transitions.len() {
        assert_eq!(two.occurrences(tr), one.occurrences(tr));
    }
    for s in 0..layout.n_states() {
        for (a, b) in two.exposures(StateId(s)).iter().zip(one.exposures(StateId(s))) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rates_scale_inversely_with_exposure(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let s = Scenario::paper_markov();
        let cohort = simulate_cohort(&s.sim_config(200, seed)).unwrap();
        let mut table = aggregate_1d(&cohort, TimeGrid::new(0.0, 40.0, 10).unwrap(), &Layout::from_model(&s.model)).unwrap();
        let before = oe_rates(&table, 0.95, IntervalScale::Raw).unwrap();
        table.scale_exposure(c);
        let after = oe_rates(&table, 0.95, IntervalScale::Raw).unwrap();
        for (x, y) in before.transitions.iter().zip(&after.transitions) {
            for (a, b) in x.bins.iter().zip(&y.bins) {
                match (a, b) {
                    (Some(a), Some(b)) => prop_assert!((a.rate / c - b.rate).abs() <= 1e-12 * a.rate.max(1e-300) / c),
                    (None, None) => {}
                    _ => prop_assert!(false, "definedness changed"),
                }
            }
        }
    }
}
