use std::path::Path;

use msoe_core::experiments::Scenario;
use msoe_core::io::{ingest_events, write_events, AppConfig};
use msoe_core::sim::simulate_cohort;
use proptest::prelude::*;

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 5e-9 * b.abs().max(1.0)
}

#[test]
fn shipped_configs_load() {
    for name in ["markov_sim.cfg", "semimarkov_sim.cfg", "paper_sweep.cfg", "disability.cfg"] {
        let cfg = AppConfig::load(&configs().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        cfg.model().unwrap_or_else(|e| panic!("{name}: {e}"));
        cfg.sim_config().unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn export_then_ingest_preserves_trajectories(seed in any::<u64>(), semi in any::<bool>()) {
        let s = if semi { Scenario::paper_semi_markov() } else { Scenario::paper_markov() };
        let cohort = simulate_cohort(&s.sim_config(150, seed)).unwrap();
        let labels = s.model.states().to_vec();
        let mut buf = Vec::new();
        write_events(&cohort, &labels, &mut buf).unwrap();
        let back = ingest_events(buf.as_slice(), Some(&labels)).unwrap();
        prop_assert_eq!(back.trajectories.len(), cohort.len());
        for (a, b) in back.trajectories.iter().zip(&cohort) {
            prop_assert_eq!(a.subject_id, b.subject_id);
            prop_assert_eq!(a.initial_state, b.initial_state);
            prop_assert!(close(a.censor_time, b.censor_time));
            prop_assert_eq!(a.jumps.len(), b.jumps.len());
            for (x, y) in a.jumps.iter().zip(&b.jumps) {
                prop_assert_eq!((x.from, x.to), (y.from, y.to));
                prop_assert!(close(x.time, y.time), "{} vs {}", x.time, y.time);
            }
        }
    }
}
