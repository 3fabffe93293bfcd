use std::collections::BTreeSet;

use proptest::prelude::{any, prop, prop_assert, proptest};

use super::*;
use crate::world::{shortest_path_length, AttributeValue};

fn result(strategy: Strategy, id: &str, success: bool, p: f64, l: f64) -> EpisodeResult {
    EpisodeResult {
        scenario_id: id.into(),
        strategy,
        success,
        agent_path_length: p,
        shortest_path_length: l,
        questions: 2,
        response_tokens: 2,
        steps: 40,
        termination: Termination::Stop,
        wall_times: StageTimes::default(),
    }
}

#[test]
fn spl_examples() {
    let c = Strategy::Comparative;
    assert_eq!(compute_spl(&[result(c, "s-0", true, 4.0, 4.0)]), 100.0);
    assert_eq!(compute_spl(&[result(c, "s-0", false, 4.0, 4.0)]), 0.0);
    assert_eq!(compute_spl(&[result(c, "s-0", true, 8.0, 4.0)]), 50.0);
    assert_eq!(compute_spl(&[]), 0.0);
}

#[test]
fn aggregate_averages_over_every_episode() {
    let c = Strategy::Comparative;
    let mut a = result(c, "s-0", true, 4.0, 4.0);
    a.questions = 3;
    a.response_tokens = 3;
    let mut b = result(c, "s-1", false, 9.0, 3.0);
    b.questions = 1;
    b.response_tokens = 1;
    let m = aggregate(&[a, b]);
    assert_eq!(m.sr, 50.0);
    assert_eq!(m.spl, 50.0);
    assert_eq!(m.nq_mean, 2.0);
    assert_eq!(m.rl_mean, 2.0);
    assert_eq!(m.episodes, 2);
}

proptest! {
    #[test]
    fn spl_never_exceeds_sr(eps in prop::collection::vec((any::<bool>(), 0.0f64..50.0, 0.0f64..50.0), 1..30)) {
        let rs: Vec<EpisodeResult> = eps
            .iter()
            .enumerate()
            .map(|(i, &(s, p, l))| result(Strategy::Pooled, &format!("x-{i}"), s, p, l))
            .collect();
        let m = aggregate(&rs);
        prop_assert!(0.0 <= m.spl && m.spl <= m.sr + 1e-9 && m.sr <= 100.0);
    }
}

#[test]
fn suite_names() {
    assert_eq!(suite_of("partial-0007"), "partial");
    assert_eq!(suite_of("plain"), "plain");
}

fn summary_rows(dir: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(dir.join(SUMMARY_FILE)).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["strategy", "suite", "episodes", "SR", "SPL", "RL", "NQ"]
    );
    r.records().map(|x| x.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn results_files() {
    let dir = tempfile::tempdir().unwrap();
    let rs: Vec<EpisodeResult> = [Strategy::Comparative, Strategy::Independent, Strategy::Pooled]
        .iter()
        .flat_map(|&s| [result(s, "partial-0000", true, 6.0, 3.0), result(s, "partial-0001", false, 5.0, 5.0)])
        .collect();
    write_results(&rs, dir.path()).unwrap();
    let rows = summary_rows(dir.path());
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0], ["comparative", "partial", "2", "50.0", "25.0", "2.0", "2.00"]);

    let path = dir.path().join(RESULTS_FILE);
    assert_eq!(read_results(&path).unwrap(), rs);
    let first = fs::read(&path).unwrap();
    write_results(&rs, dir.path()).unwrap();
    assert_eq!(fs::read(&path).unwrap(), first);
    let text = String::from_utf8(first).unwrap();
    assert!(!text.contains("wall_times"));

    let empty = tempfile::tempdir().unwrap();
    write_results(&[], empty.path()).unwrap();
    assert!(summary_rows(empty.path()).is_empty());
    assert!(fs::read(empty.path().join(RESULTS_FILE)).unwrap().is_empty());
}

#[test]
fn mode_presets() {
    let coin = Mode::InteractiveSim.preset();
    assert_eq!((coin.horizon, coin.fallback_step, coin.budget), (500, 400, Some(4)));
    let tn = Mode::Textnav.preset();
    assert_eq!((tn.horizon, tn.fallback_step, tn.budget), (1000, 600, None));
    assert_eq!("coin".parse::<Mode>().unwrap(), Mode::InteractiveSim);
    assert!("walk".parse::<Mode>().is_err());
    assert_eq!("pooled".parse::<Strategy>().unwrap(), Strategy::Pooled);
}

fn small(kind: SuiteKind, count: usize) -> Vec<Scenario> {
    generate_scenarios(&GeneratorConfig::preset(kind, count), 3).unwrap()
}

#[test]
fn generation_is_reproducible() {
    let cfg = GeneratorConfig::preset(SuiteKind::Partial, 6);
    let a: Vec<String> = generate_scenarios(&cfg, 11).unwrap().iter().map(|s| s.to_json()).collect();
    let b: Vec<String> = generate_scenarios(&cfg, 11).unwrap().iter().map(|s| s.to_json()).collect();
    assert_eq!(a, b);
    let c: Vec<String> = generate_scenarios(&cfg, 12).unwrap().iter().map(|s| s.to_json()).collect();
    assert_ne!(a, c);
    // Any prefix regenerates identically.
    let short = GeneratorConfig { count: 2, ..cfg };
    let d: Vec<String> = generate_scenarios(&short, 11).unwrap().iter().map(|s| s.to_json()).collect();
    assert_eq!(d[..], a[..2]);
}

fn attribute_sets(s: &Scenario) -> Vec<BTreeSet<AttributeValue>> {
    s.same_category().map(|(_, i)| i.attribute_values().cloned().collect()).collect()
}

#[test]
fn separable_sets_are_unique_and_reachable() {
    let cfg = GeneratorConfig {
        min_instances: 5,
        max_instances: 5,
        ..GeneratorConfig::preset(SuiteKind::Separable, 10)
    };
    for s in generate_scenarios(&cfg, 5).unwrap() {
        let sets = attribute_sets(&s);
        assert_eq!(sets.len(), 5);
        assert_eq!(sets.iter().collect::<BTreeSet<_>>().len(), 5, "{}", s.id());
        assert_eq!(s.instances().iter().filter(|i| i.is_target).count(), 1);
        for (_, inst) in s.same_category() {
            shortest_path_length(&s, &s.start(), inst).unwrap();
        }
    }
}

#[test]
fn zero_separability_makes_clones() {
    let cfg = GeneratorConfig {
        min_instances: 2,
        max_instances: 2,
        share_min: 1.0,
        ..GeneratorConfig::preset(SuiteKind::Separable, 3)
    };
    for s in generate_scenarios(&cfg, 1).unwrap() {
        let sets = attribute_sets(&s);
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0], sets[1]);
    }
}

#[test]
fn partial_distractors_share_enough() {
    for s in small(SuiteKind::Partial, 10) {
        let target: BTreeSet<AttributeValue> = s.target().attribute_values().cloned().collect();
        for (_, inst) in s.same_category().filter(|(_, i)| !i.is_target) {
            let shared = inst.attribute_values().filter(|a| target.contains(a)).count();
            assert!(shared as f64 >= 0.6 * target.len() as f64, "{}", s.id());
            assert!(shared < target.len());
        }
    }
}

#[test]
fn trap_distractors_share_nothing() {
    for s in small(SuiteKind::Trap, 5) {
        let target: BTreeSet<AttributeValue> = s.target().attribute_values().cloned().collect();
        for (_, inst) in s.same_category().filter(|(_, i)| !i.is_target) {
            assert!(inst.attribute_values().all(|a| !target.contains(a)));
        }
    }
}

#[test]
fn scenarios_survive_a_save_load_cycle() {
    let dir = tempfile::tempdir().unwrap();
    for s in small(SuiteKind::Separable, 3) {
        let path = dir.path().join(format!("{}.json", s.id()));
        s.save(&path).unwrap();
        assert_eq!(Scenario::load(&path).unwrap().to_json(), s.to_json());
    }
}

#[test]
fn infeasible_configs_are_rejected() {
    let crowded = GeneratorConfig {
        max_instances: 60,
        ..GeneratorConfig::preset(SuiteKind::Separable, 1)
    };
    assert!(matches!(generate_scenarios(&crowded, 0), Err(HarnessError::Infeasible(_))));
    let empty = GeneratorConfig {
        min_instances: 4,
        max_instances: 3,
        ..GeneratorConfig::preset(SuiteKind::Separable, 1)
    };
    assert!(matches!(generate_scenarios(&empty, 0), Err(HarnessError::Infeasible(_))));
}

#[test]
fn baselines_do_not_run_without_questions() {
    let s = small(SuiteKind::Separable, 1);
    let err = run_benchmark(&s, &[Strategy::Independent], Mode::Textnav, &Config::default(), None).unwrap_err();
    assert!(matches!(err, HarnessError::InvalidCombination(Strategy::Independent, Mode::Textnav)));
}

#[test]
fn user_seed_depends_on_scenario_and_config() {
    let s = small(SuiteKind::Separable, 2);
    let mut cfg = Config::default();
    assert_ne!(user_seed(&s[0], &cfg), user_seed(&s[1], &cfg));
    let before = user_seed(&s[0], &cfg);
    cfg.harness.seed = 9;
    assert_ne!(user_seed(&s[0], &cfg), before);
}

#[test]
fn textnav_asks_nothing() {
    let s = small(SuiteKind::Textnav, 4);
    let b = run_benchmark(&s, &[Strategy::Comparative], Mode::Textnav, &Config::default(), None).unwrap();
    assert!(b.results().iter().all(|r| r.questions == 0 && r.response_tokens == 0));
    assert!(b.results().iter().all(|r| !r.success || r.termination == Termination::Stop));
}

fn timeless(r: &EpisodeResult) -> EpisodeResult {
    EpisodeResult {
        wall_times: StageTimes::default(),
        ..r.clone()
    }
}

/// Replays the simulated user's answers as terminal input.
fn scripted_input(o: &EpisodeOutput, noise: bool) -> String {
    let mut text = String::new();
    for r in &o.trace.rounds {
        if let Some(a) = &r.answer {
            if noise {
                text.push_str("maybe\n");
            }
            text.push_str(if a == "yes" { "y\n" } else { "n\n" });
        }
    }
    text
}

#[test]
fn terminal_answers_match_the_simulated_user() {
    let cfg = Config::default();
    for s in small(SuiteKind::Separable, 4) {
        let sim = run_episode(&s, Strategy::Comparative, Mode::InteractiveSim, &cfg).unwrap();
        for noise in [false, true] {
            let input = scripted_input(&sim, noise);
            let mut out = Vec::new();
            let human = interactive_session(&s, &cfg, input.as_bytes(), &mut out).unwrap();
            assert_eq!(human.trace.chosen, sim.trace.chosen);
            assert_eq!(timeless(&human.result), timeless(&sim.result));
            if noise && sim.result.questions > 0 {
                assert!(String::from_utf8(out).unwrap().contains("[y/n]"));
            }
        }
    }
}

#[test]
fn end_of_input_aborts_as_failure() {
    let cfg = Config::default();
    let s = small(SuiteKind::Partial, 6)
        .into_iter()
        .find(|s| {
            run_episode(s, Strategy::Comparative, Mode::InteractiveSim, &cfg)
                .unwrap()
                .result
                .questions
                > 0
        })
        .unwrap();
    let o = interactive_session(&s, &cfg, "".as_bytes(), Vec::new()).unwrap();
    assert!(!o.result.success);
    assert_eq!(o.result.questions, 0);
}

#[test]
fn no_answer_with_everyone_matching_reexplores_visibly() {
    let cfg = Config::default();
    let s = &small(SuiteKind::Trap, 1)[0];
    let mut out = Vec::new();
    let o = interactive_session(s, &cfg, "n\nn\nn\nn\n".as_bytes(), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("re-exploring"), "{text}");
    assert!(o.trace.reexplorations.iter().all(|r| r.added.len() == 1));
    assert!(!o.trace.reexplorations.is_empty());
}
