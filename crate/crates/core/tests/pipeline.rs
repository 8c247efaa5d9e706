use std::collections::BTreeSet;

use teleo::agent::{agent_action_rate, agent_action_rate_given, bind_agent, AgentPolicy, TeleologicalModel};
use teleo::classify::classify_effects;
use teleo::fixtures;
use teleo::graph::{Assignment, Intention};
use teleo::infer::{
    arms_from_dataset, arms_from_results, enumerate_hypotheses, full_battery, identify, oracle_identify,
    predicted_rates, score_hypotheses, ArmObservation, Identification, ScoreVerdict, ScoringConfig,
};
use teleo::io::{parse_graph_spec, GraphSpec};
use teleo::lab::{plan, run_battery, run_randomized, Lever, Verdict, DEFAULT_ALPHA};
use teleo::observe::{
    observational_battery, simulate_observational, stratified_action_comparison, Contrast, ObservationalConfig,
    ObservationalOutcome,
};
use teleo::scm::Regime;
use teleo::stats::binomial_log_pmf;

fn sport() -> GraphSpec {
    parse_graph_spec(fixtures::SPORT).unwrap()
}

fn bound(spec: &GraphSpec, truth: &str) -> TeleologicalModel {
    let policy = AgentPolicy::with_defaults([Intention::attains(truth)]).unwrap();
    bind_agent(&spec.graph, "practice", policy).unwrap()
}

fn obs_config() -> ObservationalConfig {
    ObservationalConfig {
        alpha: DEFAULT_ALPHA,
        p_base: 0.05,
    }
}

#[test]
fn randomized_enroll_verdicts() {
    let spec = sport();
    let c = classify_effects(&spec.graph, "practice", "be_fit").unwrap();
    let p = plan(&spec.graph, &c, &spec.levers).unwrap();
    let enroll = &p.experiments[0];
    assert_eq!(enroll.lever, Lever::new("enroll", false));
    // No change is a null result, so about alpha of the seeds reject.
    let mut no_change = 0;
    for seed in 0..40 {
        let fit = run_randomized(&bound(&spec, "be_fit"), enroll, 2000, seed, DEFAULT_ALPHA).unwrap();
        no_change += (fit.verdict == Verdict::NoChange) as usize;
        let medals = run_randomized(&bound(&spec, "win_medals"), enroll, 2000, seed, DEFAULT_ALPHA).unwrap();
        assert_eq!(medals.verdict, Verdict::Change);
        assert!(medals.z_statistic > 0.0);
    }
    assert!(no_change >= 34, "{no_change}/40");
}

#[test]
fn observational_enroll_verdicts() {
    let spec = sport();
    let levers = vec![Lever::new("enroll", false), Lever::new("smoke", true), Lever::new("protein_diet", false)];
    let c = classify_effects(&spec.graph, "practice", "be_fit").unwrap();
    let experiments = plan(&spec.graph, &c, &spec.levers).unwrap().experiments;
    let no_adjustment = BTreeSet::new();

    for (truth, expected, needed) in [("be_fit", Verdict::NoChange, 16), ("win_medals", Verdict::Change, 20)] {
        let mut hits = 0;
        for seed in 0..20 {
            let data = simulate_observational(&bound(&spec, truth), &levers, 20_000, seed).unwrap();
            let out =
                observational_battery(&data, &spec.graph, "practice", &experiments, &no_adjustment, obs_config())
                    .unwrap();
            let enroll = out.iter().find(|e| e.experiment.target == "win_medals").unwrap();
            match &enroll.outcome {
                ObservationalOutcome::Analyzed { verdict, .. } => hits += (*verdict == expected) as usize,
                other => panic!("{other:?}"),
            }
            assert!(!enroll.potentially_confounded());
        }
        assert!(hits >= needed, "{truth}: {hits}/20");
    }
}

#[test]
fn missing_regime_is_no_data() {
    let spec = sport();
    let model = bound(&spec, "be_fit");
    let data = simulate_observational(&model, &[Lever::new("enroll", false)], 5_000, 3).unwrap();
    let c = classify_effects(&spec.graph, "practice", "be_fit").unwrap();
    let experiments = plan(&spec.graph, &c, &spec.levers).unwrap().experiments;
    let out = observational_battery(&data, &spec.graph, "practice", &experiments, &BTreeSet::new(), obs_config()).unwrap();
    assert_eq!(out.len(), 3);
    let smoke = out.iter().find(|e| e.experiment.target == "live_longer").unwrap();
    assert!(matches!(smoke.outcome, ObservationalOutcome::NoData { .. }));
    assert!(matches!(out[0].outcome, ObservationalOutcome::Analyzed { .. }));
}

#[test]
fn age_adjustment_tracks_stratum_rates() {
    let spec = parse_graph_spec(fixtures::SPORT_AGE).unwrap();
    let t = spec.tagging.as_ref().unwrap();
    let model = bind_agent(&spec.graph, &t.action, t.policy()).unwrap();
    let lever = Lever::new("enroll", false);
    let data = simulate_observational(&model, std::slice::from_ref(&lever), 50_000, 41).unwrap();
    let contrast = Contrast::against_natural(&lever.regime());
    let adj: BTreeSet<String> = ["age".to_string()].into();
    let c = stratified_action_comparison(&data, "practice", &contrast, &adj).unwrap();

    let mut truth = 0.0;
    for s in &c.strata {
        let given: Assignment = s.key.clone();
        let d = agent_action_rate_given(&model, &Regime::natural(), &given).unwrap()
            - agent_action_rate_given(&model, &lever.regime(), &given).unwrap();
        truth += s.weight * d;
    }
    assert!((c.pooled_difference - truth).abs() <= 2.0 * c.pooled_se, "{} vs {truth}", c.pooled_difference);

    let raw = stratified_action_comparison(&data, "practice", &contrast, &BTreeSet::new()).unwrap();
    assert!((raw.pooled_difference - 0.24).abs() < 4.0 * raw.pooled_se);
    assert!((raw.pooled_difference - truth).abs() > 2.0 * raw.pooled_se);

    let battery = observational_battery(
        &data,
        &spec.graph,
        "practice",
        &plan(&spec.graph, &classify_effects(&spec.graph, "practice", "be_fit").unwrap(), &spec.levers)
            .unwrap()
            .experiments[..1],
        &BTreeSet::new(),
        obs_config(),
    )
    .unwrap();
    assert_eq!(battery[0].missing_adjustment, vec!["age".to_string()]);
}

#[test]
fn identical_regimes_show_no_difference() {
    let spec = sport();
    let model = bound(&spec, "be_fit");
    let mut data = model.sample(&Regime::natural(), 5000, 1, 0).unwrap();
    let copy = teleo::scm::sample_labeled(&model.effective_graph(&Regime::natural()).unwrap(), 5000, 1, 1, "x=0");
    data.extend(copy).unwrap();
    let c = Contrast {
        column: "regime".into(),
        control: "natural".into(),
        treated: "x=0".into(),
    };
    let r = stratified_action_comparison(&data, "practice", &c, &BTreeSet::new()).unwrap();
    assert!(r.pooled_difference.abs() < 4.0 * r.pooled_se);
    assert!(r.pooled_p > 1e-4);
}

#[test]
fn sport_battery_scores() {
    let spec = sport();
    let model = bound(&spec, "be_fit");
    let experiments = full_battery(&spec.graph, "practice", &spec.levers).unwrap();
    let results: Vec<_> = run_battery(&model, &experiments, 2000, 99, DEFAULT_ALPHA)
        .unwrap()
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    let hyps = enumerate_hypotheses(&spec.graph, "practice", 1, 100).unwrap();
    let s = score_hypotheses(
        &arms_from_results(&results),
        &spec.graph,
        "practice",
        model.policy(),
        &hyps,
        ScoringConfig::default(),
    )
    .unwrap();
    let best = s
        .scores
        .iter()
        .max_by(|a, b| a.log_likelihood.total_cmp(&b.log_likelihood))
        .unwrap();
    assert_eq!(best.hypothesis, [Intention::attains("be_fit")].into());
    let medals = s.scores.iter().find(|x| x.hypothesis.contains(&Intention::attains("win_medals"))).unwrap();
    assert_eq!(medals.verdict, ScoreVerdict::Refuted);
    assert_eq!(
        identify(&s.scores),
        Identification::Unique([Intention::attains("be_fit")].into())
    );
}

#[test]
fn natural_only_gives_candidates() {
    let spec = sport();
    let model = bound(&spec, "be_fit");
    let data = model.sample(&Regime::natural(), 10_000, 5, 0).unwrap();
    let arms = arms_from_dataset(&data, "practice", &BTreeSet::new()).unwrap();
    let hyps = enumerate_hypotheses(&spec.graph, "practice", 1, 100).unwrap();
    let s = score_hypotheses(&arms, &spec.graph, "practice", model.policy(), &hyps, ScoringConfig::default()).unwrap();
    assert_eq!(identify(&s.scores), Identification::Candidates(hyps));
}

#[test]
fn misfit_agent_is_indeterminate() {
    let spec = sport();
    let generating = AgentPolicy::new([Intention::attains("be_fit")], 0.4, 0.05, 0.1).unwrap();
    let model = bind_agent(&spec.graph, "practice", generating).unwrap();
    let experiments = full_battery(&spec.graph, "practice", &spec.levers).unwrap();
    let results: Vec<_> = run_battery(&model, &experiments, 2000, 7, DEFAULT_ALPHA)
        .unwrap()
        .into_iter()
        .map(|(r, _)| r)
        .collect();
    let scoring_policy = AgentPolicy::with_defaults([Intention::attains("be_fit")]).unwrap();
    let hyps = enumerate_hypotheses(&spec.graph, "practice", 1, 100).unwrap();
    let s = score_hypotheses(
        &arms_from_results(&results),
        &spec.graph,
        "practice",
        &scoring_policy,
        &hyps,
        ScoringConfig::default(),
    )
    .unwrap();
    assert!(s.misfit);
    assert_eq!(identify(&s.scores), Identification::Indeterminate);
}

#[test]
fn diet_experiment_separates_lose_weight_from_be_fit() {
    let spec = sport();
    let policy = AgentPolicy::with_defaults([Intention::attains("lose_weight")]).unwrap();
    let run = oracle_identify(&spec.graph, "practice", &policy, &spec.levers, 2000, 5).unwrap();
    assert!(run.agreement);
    let diet = run
        .results
        .iter()
        .find(|r| r.treated_regime == Regime::interference("protein_diet", false))
        .unwrap();
    assert_eq!(diet.verdict, Verdict::NoChange);
    for truth in ["be_fit", "win_medals"] {
        let policy = AgentPolicy::with_defaults([Intention::attains(truth)]).unwrap();
        assert!(oracle_identify(&spec.graph, "practice", &policy, &spec.levers, 2000, 5).unwrap().agreement);
    }
}

#[test]
fn extra_arm_never_raises_expected_likelihood_of_a_mismatch() {
    // Expected log likelihood of an arm under generating rate q and predicted
    // rate p is sum_k Binom(k; n, q) ln Binom(k; n, p), always <= 0.
    let spec = sport();
    let truth = bound(&spec, "be_fit");
    let hyps = enumerate_hypotheses(&spec.graph, "practice", 1, 100).unwrap();
    let n = 200u64;
    for regime in [
        Regime::interference("enroll", false),
        Regime::interference("smoke", true),
        Regime::interference("protein_diet", false),
    ] {
        let q = agent_action_rate(&truth, &regime).unwrap();
        let arm = ArmObservation::new(regime.clone(), n, 0);
        let rates = predicted_rates(&spec.graph, "practice", truth.policy(), &hyps, &[arm]).unwrap();
        for r in rates {
            let p = r[0];
            if (p - q).abs() < 1e-12 {
                continue;
            }
            let expected: f64 = (0..=n)
                .map(|k| binomial_log_pmf(k, n, q).exp() * binomial_log_pmf(k, n, p))
                .sum();
            let matched: f64 = (0..=n)
                .map(|k| binomial_log_pmf(k, n, q).exp() * binomial_log_pmf(k, n, q))
                .sum();
            assert!(expected <= 0.0);
            assert!(expected < matched);
        }
    }
}
