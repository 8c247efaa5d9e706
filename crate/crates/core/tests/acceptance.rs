//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teleo::agent::{agent_action_rate, bind_agent, AgentPolicy, TeleologicalModel};
use teleo::classify::classify_effects;
use teleo::cli::run_command;
use teleo::fixtures;
use teleo::graph::{CausalGraph, Intention, Variable};
use teleo::infer::{
    arms_from_dataset, enumerate_hypotheses, oracle_identify, predicted_rates, score_hypotheses, ScoreVerdict,
    ScoringConfig,
};
use teleo::io::parse_graph_spec;
use teleo::lab::{
    battery_pattern_check, plan, run_battery, run_randomized, two_proportion_test, InterferenceExperiment, Lever,
    DEFAULT_ALPHA,
};
use teleo::observe::{simulate_observational, stratified_action_comparison, Contrast};
use teleo::scm::{self, joint_enumerate, Regime};

type Outcome = (bool, String);

fn set(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn sport_model(truth: &str) -> (CausalGraph, TeleologicalModel) {
    let spec = parse_graph_spec(fixtures::SPORT).unwrap();
    let policy = AgentPolicy::with_defaults([Intention::attains(truth)]).unwrap();
    let model = bind_agent(&spec.graph, "practice", policy).unwrap();
    (spec.graph, model)
}

fn criterion_1() -> Outcome {
    let g = parse_graph_spec(fixtures::SPORT).unwrap().graph;
    let start = Instant::now();
    let c = classify_effects(&g, "practice", "be_fit").unwrap();
    let elapsed = start.elapsed();
    let sets_ok = c.mediating == set(&["lose_weight"])
        && c.further == set(&["live_longer"])
        && c.parallel == set(&["win_medals"]);
    let ok = sets_ok && elapsed < Duration::from_millis(1);
    (
        ok,
        format!(
            "mediating={:?} further={:?} parallel={:?} in {:?}",
            c.mediating, c.further, c.parallel, elapsed
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (g, model) = sport_model("be_fit");
    let c = classify_effects(&g, "practice", "be_fit").unwrap();
    let levers = parse_graph_spec(fixtures::SPORT).unwrap().levers;
    let p = plan(&g, &c, &levers).unwrap();
    let runs = run_battery(&model, &p.experiments, 2000, 20240501, DEFAULT_ALPHA).unwrap();

    let table1 = [("practice", true), ("lose_weight", true), ("be_fit", true), ("win_medals", false), ("enroll", false)];
    let table2 = [("practice", true), ("lose_weight", true), ("be_fit", true), ("live_longer", false), ("smoke", true)];
    let table3 = [("practice", true), ("lose_weight", true), ("be_fit", false), ("protein_diet", false)];
    let as_pattern = |rows: &[(&str, bool)]| rows.iter().map(|&(k, v)| (k.to_string(), v)).collect();

    let mut ok = true;
    let mut detail = Vec::new();
    for ((e, (_, arms)), (name, table)) in p.experiments.iter().zip(&runs).zip([
        ("a", &table1[..]),
        ("b", &table2[..]),
        ("c", &table3[..]),
    ]) {
        let pattern_matches = e.expected_pattern == as_pattern(table);
        let check = battery_pattern_check(&arms.treated, e, 0.05).unwrap();
        let rate = arms.treated.frequency("practice").unwrap().unwrap();
        ok &= pattern_matches && check.passed;
        detail.push(format!(
            "({name}) {} {} count={} threshold={} practice_rate={rate:.4}",
            e.lever, e.mode, check.count, check.threshold
        ));
        if name == "c" {
            let n = arms.treated.len() as f64;
            let sigma = (0.05 * 0.95 / n).sqrt();
            let collapsed = (rate - 0.05).abs() <= 3.0 * sigma;
            ok &= collapsed;
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(5);
    (ok, format!("{} in {:?}", detail.join("; "), elapsed))
}

fn criterion_3() -> Outcome {
    let (g, _) = sport_model("be_fit");
    let hyps = enumerate_hypotheses(&g, "practice", 1, 100).unwrap();
    let policy = AgentPolicy::with_defaults([Intention::attains("be_fit")]).unwrap();
    let natural = teleo::infer::ArmObservation::new(Regime::natural(), 1, 1);
    let rates = predicted_rates(&g, "practice", &policy, &hyps, &[natural]).unwrap();
    let equal = rates.iter().all(|r| r[0] == rates[0][0]);

    let mut hits = 0;
    for seed in 0..100u64 {
        let (_, model) = sport_model("be_fit");
        let data = model.sample(&Regime::natural(), 10_000, 3_000 + seed, 0).unwrap();
        let arms = arms_from_dataset(&data, "practice", &BTreeSet::new()).unwrap();
        let s = score_hypotheses(&arms, &g, "practice", &policy, &hyps, ScoringConfig::default()).unwrap();
        if s.scores.iter().all(|x| x.verdict == ScoreVerdict::Indistinguishable) {
            hits += 1;
        }
    }
    (
        equal && hits >= 95,
        format!(
            "natural rates {:?} equal={equal}; all four indistinguishable in {hits}/100 seeds",
            rates.iter().map(|r| r[0]).collect::<Vec<_>>()
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let spec = parse_graph_spec(fixtures::SPORT).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for truth in ["lose_weight", "be_fit", "live_longer", "win_medals"] {
        let policy = AgentPolicy::with_defaults([Intention::attains(truth)]).unwrap();
        let agree = (0..100u64)
            .filter(|&seed| {
                oracle_identify(&spec.graph, "practice", &policy, &spec.levers, 2000, 7_000 + seed)
                    .unwrap()
                    .agreement
            })
            .count();
        ok &= agree >= 99;
        detail.push(format!("{truth} {agree}/100"));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    (ok, format!("{} in {:?}", detail.join(", "), elapsed))
}

fn criterion_5() -> Outcome {
    let spec = parse_graph_spec(fixtures::STOVE).unwrap();
    let g = &spec.graph;
    let stove_on = [("stove".to_string(), true)].into();
    let before = joint_enumerate(g).unwrap().marginal(&stove_on).unwrap();
    let clamped = scm::mutilate(g, &Regime::interference("water", false)).unwrap();
    let after = joint_enumerate(&clamped).unwrap().marginal(&stove_on).unwrap();

    let model = bind_agent(g, "stove", spec.tagging.unwrap().policy()).unwrap();
    let natural = agent_action_rate(&model, &Regime::natural()).unwrap();
    let interfered = agent_action_rate(&model, &Regime::interference("water", false)).unwrap();
    let ok = before == after && natural == 0.8 && interfered == 0.05;
    (
        ok,
        format!("no agent: {before} -> {after}; agent intending water=1: {natural} -> {interfered}"),
    )
}

fn criterion_6() -> Outcome {
    let g = CausalGraph::new(vec![Variable::root("act", 0.8)]).unwrap();
    let acts = |seed: u64, stream: u64| {
        let d = scm::sample_labeled(&g, 2000, seed, stream, "natural");
        d.count_matching(&[("act".to_string(), true)].into()).unwrap() as u64
    };
    let rejections = (0..1000u64)
        .filter(|&i| {
            let (_, p) = two_proportion_test(acts(60_000 + i, 0), 2000, acts(60_000 + i, 1), 2000).unwrap();
            p < 0.05
        })
        .count();
    let rate = rejections as f64 / 1000.0;
    ((0.03..=0.07).contains(&rate), format!("type-I rate {rate:.3} over 1000 null replications"))
}

fn random_dag(seed: u64) -> CausalGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=8);
    let vars = (0..n)
        .map(|i| {
            let parents: Vec<String> = (0..i).filter(|_| rng.gen_bool(0.35)).map(|j| format!("v{j}")).collect();
            let refs: Vec<&str> = parents.iter().map(String::as_str).collect();
            let cpt = (0..1usize << parents.len())
                .map(|_| match rng.gen_range(0..5) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.gen::<f64>(),
                })
                .collect();
            Variable::new(format!("v{i}"), &refs, cpt)
        })
        .collect();
    CausalGraph::new(vars).unwrap()
}

fn criterion_7() -> Outcome {
    let n = 50_000;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for seed in 0..20u64 {
        let g = random_dag(900 + seed);
        let joint = joint_enumerate(&g).unwrap();
        let data = scm::sample(&g, n, 1_000 + seed);
        for v in g.names() {
            let p = joint.marginal(&[(v.to_string(), true)].into()).unwrap();
            let freq = data.frequency(v).unwrap().unwrap();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            if se == 0.0 {
                ok &= (freq - p).abs() < 1e-12;
            } else {
                let z = (freq - p).abs() / se;
                worst = worst.max(z);
                ok &= z <= 4.0;
            }
        }
    }
    (ok, format!("20 DAGs, worst marginal deviation {worst:.2} standard errors"))
}

fn criterion_8() -> Outcome {
    let spec = parse_graph_spec(fixtures::SPORT_AGE).unwrap();
    let t = spec.tagging.as_ref().unwrap();
    let model = bind_agent(&spec.graph, &t.action, t.policy()).unwrap();
    let lever = Lever::new("enroll", false);
    let truth = agent_action_rate(&model, &Regime::natural()).unwrap()
        - agent_action_rate(&model, &lever.regime()).unwrap();

    let data = simulate_observational(&model, std::slice::from_ref(&lever), 100_000, 8_008).unwrap();
    let contrast = Contrast::against_natural(&lever.regime());
    let adjusted = stratified_action_comparison(&data, "practice", &contrast, &set(&["age"])).unwrap();
    let raw = stratified_action_comparison(&data, "practice", &contrast, &BTreeSet::new()).unwrap();

    let experiment = InterferenceExperiment {
        target: "win_medals".into(),
        lever: lever.clone(),
        rationale: teleo::lab::Rationale::Parallel,
        expected_pattern: Default::default(),
        mode: teleo::lab::PatternMode::MustObserve,
    };
    let r = run_randomized(&model, &experiment, 50_000, 8_009, DEFAULT_ALPHA).unwrap();
    let (pc, pt) = (r.control_acts as f64 / r.control_n as f64, r.treated_acts as f64 / r.treated_n as f64);
    let randomized = pc - pt;
    let se_rand = (pc * (1.0 - pc) / r.control_n as f64 + pt * (1.0 - pt) / r.treated_n as f64).sqrt();
    let se_both = (adjusted.pooled_se.powi(2) + se_rand.powi(2)).sqrt();

    let (_, treated_n) = adjusted.treated_totals();
    let (_, control_n) = adjusted.control_totals();
    let agrees = (adjusted.pooled_difference - randomized).abs() <= 3.0 * se_both;
    let biased = (raw.pooled_difference - truth).abs() > 2.0 * raw.pooled_se;
    (
        agrees && biased && control_n >= 45_000 && treated_n >= 45_000,
        format!(
            "truth {truth:.4}; adjusted {:.4} (se {:.4}) vs randomized {randomized:.4} (se {se_rand:.4}); unadjusted {:.4} (se {:.4}); arms {control_n}/{treated_n}",
            adjusted.pooled_difference, adjusted.pooled_se, raw.pooled_difference, raw.pooled_se
        ),
    )
}

fn run_cli(args: &[&str]) -> (i32, Vec<u8>) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut argv = vec!["teleo"];
    argv.extend_from_slice(args);
    let code = run_command(argv, &mut out, &mut err);
    (code, out)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let sport = path("sport.spec");
    let age = path("sport_age.spec");
    std::fs::write(&sport, fixtures::SPORT).unwrap();
    std::fs::write(&age, fixtures::SPORT_AGE).unwrap();
    let (sim, obs) = (path("sim.csv"), path("obs.csv"));

    let pipelines: Vec<(&str, Vec<String>, Option<String>)> = vec![
        ("validate", vec!["validate".into(), "--graph".into(), sport.clone()], None),
        ("classify", vec!["classify".into(), "--graph".into(), sport.clone(), "--hypothesis".into(), "be_fit".into()], None),
        ("plan", vec!["plan".into(), "--graph".into(), sport.clone()], None),
        (
            "simulate",
            vec!["simulate", "--graph", &sport, "--seed", "5", "--n", "2000", "--out", &sim]
                .into_iter()
                .map(String::from)
                .collect(),
            Some(sim.clone()),
        ),
        (
            "simulate --observational",
            vec!["simulate", "--graph", &age, "--seed", "5", "--n", "20000", "--observational", "--out", &obs]
                .into_iter()
                .map(String::from)
                .collect(),
            Some(obs.clone()),
        ),
        (
            "experiment",
            vec!["experiment", "--graph", &sport, "--seed", "5", "--n", "2000"]
                .into_iter()
                .map(String::from)
                .collect(),
            None,
        ),
        (
            "analyze",
            vec!["analyze", "--graph", &age, "--data", &obs].into_iter().map(String::from).collect(),
            None,
        ),
        (
            "infer",
            vec!["infer", "--graph", &sport, "--data", &sim].into_iter().map(String::from).collect(),
            None,
        ),
    ];

    let mut ok = true;
    let mut failed = Vec::new();
    for (name, mut args, file) in pipelines {
        args.extend(["--format".to_string(), "machine".to_string()]);
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let (c1, r1) = run_cli(&argv);
        let f1 = file.as_ref().map(|f| std::fs::read(f).unwrap());
        let (c2, r2) = run_cli(&argv);
        let f2 = file.as_ref().map(|f| std::fs::read(f).unwrap());
        let same = c1 == 0 && c2 == 0 && r1 == r2 && f1 == f2 && !r1.is_empty();
        if !same {
            failed.push(name);
        }
        ok &= same;
    }
    (
        ok,
        if failed.is_empty() {
            "8 pipelines, byte-identical machine reports and datasets".to_string()
        } else {
            format!("differing or failing: {failed:?}")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("classification fidelity", criterion_1),
        ("table-pattern reproduction", criterion_2),
        ("fundamental problem", criterion_3),
        ("identification power", criterion_4),
        ("no reverse causation", criterion_5),
        ("statistical calibration", criterion_6),
        ("sampler-enumerator agreement", criterion_7),
        ("observational adjustment", criterion_8),
        ("reproducibility", criterion_9),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {} {name}: {} ({detail})",
            i + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("{} of 9 criteria passed", 9 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
