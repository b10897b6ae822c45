use cim_core::causesel::CauseSet;
use cim_core::control::ControllerGains;
use cim_core::harness::*;
use cim_core::simworld::TownConfig;

fn log_bytes(demos: &Demonstrations) -> Vec<Vec<u8>> {
    demos
        .logs
        .iter()
        .map(|l| {
            let mut buf = Vec::new();
            l.write_binary(&mut buf).unwrap();
            buf
        })
        .collect()
}

#[test]
fn single_demonstration_is_reproducible() {
    let town = TownConfig::town_a();
    let a = collect_demonstrations(&town, 1, 5, 0.8).unwrap();
    let b = collect_demonstrations(&town, 1, 5, 0.8).unwrap();
    assert_eq!(a.logs.len(), 1);
    assert_eq!(log_bytes(&a), log_bytes(&b));
}

#[test]
fn two_hundred_demonstrations_split_160_40() {
    let demos = collect_demonstrations(&TownConfig::town_a(), 200, 5, 0.8).unwrap();
    let m = demos.manifest(5);
    assert_eq!((m.train.len(), m.test.len()), (160, 40));
    let mut seeds = m.task_seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), 200);
    assert!(demos.logs.iter().all(|l| !l.collided()));
}

#[test]
fn towns_differ_under_the_same_seeds() {
    let a = collect_demonstrations(&TownConfig::town_a(), 3, 9, 0.8).unwrap();
    let b = collect_demonstrations(&TownConfig::town_b(), 3, 9, 0.8).unwrap();
    assert_ne!(log_bytes(&a), log_bytes(&b));
}

fn lead_stop_tasks(town: &TownConfig, want: usize) -> Vec<cim_core::simworld::TaskSpec> {
    let tasks: Vec<_> = task_suite(town, 80, 21)
        .into_iter()
        .filter(|t| expert_stops_behind_lead(&trial_task(t, 0)).unwrap())
        .take(want)
        .collect();
    assert_eq!(tasks.len(), want, "suite too small to find {want} lead-stop tasks");
    tasks
}

#[test]
fn constant_speed_hits_every_stopping_lead() {
    let town = TownConfig::town_a();
    let tasks = lead_stop_tasks(&town, 12);
    let r = evaluate(Variant::Cs, Driver::Cs, &tasks, 1, 0, &ControllerGains::default(), "").unwrap();
    assert_eq!(r.collision_rate(), 100.0);
    assert_eq!(r.inertia_rate(), 0.0);
}

#[test]
fn expert_makes_no_errors() {
    for town in [TownConfig::town_a(), TownConfig::town_c()] {
        let tasks = task_suite(&town, 15, 4);
        let r = evaluate(Variant::Expert, Driver::Expert, &tasks, 2, 4, &ControllerGains::default(), "").unwrap();
        assert_eq!(r.error_rate(), 0.0, "{}", town.town_id);
    }
}

#[test]
fn same_seed_gives_identical_report_files() {
    let config = RunConfig { eval_tasks: 8, trials: 2, seed: 3, ..RunConfig::default() };
    let town = config.town(&config.train_town).unwrap();
    let a = evaluate_variant(&config, Variant::Cs, None, &town).unwrap();
    let b = evaluate_variant(&config, Variant::Cs, None, &town).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let other = evaluate_variant(&RunConfig { seed: 4, ..config.clone() }, Variant::Cs, None, &town).unwrap();
    assert_ne!(a.outcomes, other.outcomes);
}

#[test]
fn empty_cause_set_aborts_with_report() {
    let mut config = RunConfig {
        demo_tasks: 4,
        eval_tasks: 1,
        trials: 1,
        alpha: 0.0,
        screen_uninformative: false,
        ..RunConfig::default()
    };
    config.vae.epochs = 1;
    let dir = tempfile::tempdir().unwrap();
    match run_pipeline(&config, dir.path()) {
        Err(HarnessError::NoCauses { report }) => {
            let set = CauseSet::from_json(&report).unwrap();
            assert!(set.selected.is_empty());
            assert_eq!(set.results.len(), config.vae.latent_dim);
        }
        other => panic!("expected NoCauses, got {:?}", other.map(|r| r.report.variant)),
    }
    config.variant = Variant::CimMlp;
    assert!(run_pipeline(&config, dir.path()).is_ok());
}

#[test]
fn config_round_trips_through_json() {
    let config = RunConfig { seed: 17, demo_tasks: 12, ..RunConfig::default() };
    let text = serde_json::to_string(&config).unwrap();
    let back: RunConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(back.fingerprint(), config.fingerprint());
    let partial: RunConfig = serde_json::from_str(r#"{"seed": 17, "demo_tasks": 12}"#).unwrap();
    assert_eq!(partial.fingerprint(), config.fingerprint());
}
