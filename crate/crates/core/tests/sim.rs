use msoe_core::experiments::Scenario;
use msoe_core::intensity::{IntensityExpr, IntensityModel, ModelKind, StateId};
use msoe_core::sim::{simulate_cohort, CensoringSpec, Purpose, SimConfig, Simulator, SubjectStreams, ThinningStats};
use proptest::prelude::*;

fn model(kind: ModelKind, rates: &[(&str, &str, &str)], absorbing: &[&str]) -> IntensityModel {
    let transitions =
        rates.iter().map(|(a, b, r)| (a.to_string(), b.to_string(), IntensityExpr::parse(r).unwrap())).collect();
    IntensityModel::new(kind, &["1", "2", "3"], absorbing, transitions).unwrap()
}

fn config(model: IntensityModel, n: usize, horizon: f64, censoring: CensoringSpec, seed: u64) -> SimConfig {
    SimConfig { model, initial_state: StateId(0), n, horizon, censoring, master_seed: seed, window: 1.0 }
}

/// `exp(A t)` for a 2x2 matrix with distinct real eigenvalues, via its
/// spectral projectors.
fn expm_2x2(a: [[f64; 2]; 2], t: f64) -> [[f64; 2]; 2] {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (tr * tr / 4.0 - det).sqrt();
    let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
    // P1 = (A - l2 I)/(l1 - l2), P2 = (A - l1 I)/(l2 - l1).
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { 1.0 } else { 0.0 };
            let p1 = (a[i][j] - l2 * id) / (l1 - l2);
            let p2 = (a[i][j] - l1 * id) / (l2 - l1);
            out[i][j] = (l1 * t).exp() * p1 + (l2 * t).exp() * p2;
        }
    }
    out
}

#[test]
fn homogeneous_markov_matches_matrix_exponential() {
    let (m12, m13, m21, m23) = (0.3, 0.1, 0.2, 0.15);
    let rates = [("1", "2", "0.3"), ("1", "3", "0.1"), ("2", "1", "0.2"), ("2", "3", "0.15")];
    let mdl = model(ModelKind::Markov, &rates, &["3"]);
    let n = 100_000;
    let t = 5.0;
    let cohort = simulate_cohort(&config(mdl, n, 10.0, CensoringSpec::None { horizon: 10.0 }, 31)).unwrap();
    let p = expm_2x2([[-(m12 + m13), m12], [m21, -(m21 + m23)]], t);
    let expected = [p[0][0], p[0][1], 1.0 - p[0][0] - p[0][1]];
    for (j, &pj) in expected.iter().enumerate() {
        let hits = cohort.iter().filter(|tr| tr.state_at(t) == StateId(j)).count() as f64 / n as f64;
        let se = (pj * (1.0 - pj) / n as f64).sqrt();
        assert!((hits - pj).abs() < 3.0 * se, "state {j}: {hits} vs {pj} (se {se})");
    }
}

#[test]
fn thinning_ratio_never_exceeds_one() {
    for scenario in [Scenario::paper_markov(), Scenario::paper_semi_markov()] {
        let sim = Simulator::new(&scenario.model, scenario.horizon, scenario.window).unwrap();
        let streams = SubjectStreams::new(77);
        let mut stats = ThinningStats::default();
        let mut subject = 0;
        while stats.proposals < 1_000_000 {
            let mut rng = streams.stream(subject, Purpose::Path);
            sim.simulate_path_with_stats(subject, scenario.initial_state, &mut rng, &mut stats).unwrap();
            subject += 1;
        }
        assert!(stats.max_ratio <= 1.0, "max ratio {}", stats.max_ratio);
        assert!(stats.accepted > 0);
    }
}

fn jump_count_hist(kind: ModelKind, seed: u64) -> [f64; 11] {
    let rates = [
        ("1", "2", "0.09 + 0.0018*t + 0.045*sin(t/2)"),
        ("1", "3", "0.01 + 0.0002*t + 0.005*sin(t/2)"),
        ("2", "1", "0.05 + 0.001*t"),
        ("2", "3", "0.06 + 0.002*t + 0.05*sin(t/2)"),
    ];
    let n = 100_000;
    let cfg = config(model(kind, &rates, &["3"]), n, 40.0, CensoringSpec::Uniform { lo: 10.0, hi: 40.0 }, seed);
    let mut h = [0.0; 11];
    for tr in simulate_cohort(&cfg).unwrap() {
        h[tr.jumps.len().min(10)] += 1.0 / n as f64;
    }
    h
}

#[test]
fn markov_and_semi_markov_agree_without_duration() {
    let a = jump_count_hist(ModelKind::Markov, 1);
    let b = jump_count_hist(ModelKind::SemiMarkov, 2);
    let tv = 0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn first_jumps_split_nine_to_one() {
    let s = Scenario::paper_markov();
    let cohort = simulate_cohort(&s.sim_config(10_000, 5)).unwrap();
    let firsts: Vec<StateId> = cohort.iter().filter_map(|t| t.jumps.first().map(|j| j.to)).collect();
    let frac = firsts.iter().filter(|&&s| s == StateId(1)).count() as f64 / firsts.len() as f64;
    assert!((frac - 0.9).abs() < 0.01, "{frac}");
}

#[test]
fn survival_in_the_initial_state_matches_closed_form() {
    let s = Scenario::paper_markov();
    let n = 100_000;
    let cohort = simulate_cohort(&s.sim_config(n, 11)).unwrap();
    let truth = (-(2.4 + 0.1 * (1.0 - 10f64.cos()))).exp() * 2.0 / 3.0;
    let hits = cohort.iter().filter(|t| t.occupies(StateId(0), 20.0)).count() as f64 / n as f64;
    assert!((hits - truth).abs() < 0.003, "{hits} vs {truth}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn emitted_trajectories_are_valid(seed in any::<u64>(), semi in any::<bool>(), n in 1usize..300) {
        let s = if semi { Scenario::paper_semi_markov() } else { Scenario::paper_markov() };
        let cohort = simulate_cohort(&s.sim_config(n, seed)).unwrap();
        prop_assert_eq!(cohort.len(), n);
        for (i, tr) in cohort.iter().enumerate() {
            prop_assert_eq!(tr.subject_id, i as u64);
            prop_assert!(tr.validate(Some(&s.model)).is_ok(), "{:?}", tr.validate(Some(&s.model)));
            prop_assert!((10.0..=40.0).contains(&tr.censor_time));
        }
    }

    #[test]
    fn cohorts_are_reproducible(seed in any::<u64>()) {
        let cfg = Scenario::paper_semi_markov().sim_config(50, seed);
        prop_assert_eq!(simulate_cohort(&cfg).unwrap(), simulate_cohort(&cfg).unwrap());
    }
}
