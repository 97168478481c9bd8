use std::fs;
use std::path::Path;

use stiffsim_core::harness::{self, BatchSummary, HarnessConfig, SCHEMA_VERSION};
use stiffsim_core::render::ConditionMode;
use stiffsim_core::session::{run_condition, ExperimentConfig};
use stiffsim_core::{rng, Error, ObserverModel, StepPair};

fn config_in(dir: &Path, batch: usize) -> HarnessConfig {
    HarnessConfig {
        batch,
        base_seed: 12,
        output_dir: dir.to_path_buf(),
        ..Default::default()
    }
}

#[test]
fn single_replicate_batch_writes_one_session() {
    let dir = tempfile::tempdir().unwrap();
    let (summary, artifacts) = harness::run_batch(&config_in(dir.path(), 1)).unwrap();
    assert_eq!(summary.batch, 1);
    assert_eq!(summary.converged_replicates + summary.non_converged_replicates, 1);

    let traces: Vec<_> = fs::read_dir(dir.path().join("traces")).unwrap().collect();
    assert_eq!(traces.len(), 1);
    assert!(dir.path().join("traces/replicate_00000.csv").exists());
    // 1 log + 1 trace + matrix + summary
    assert_eq!(artifacts.files.len(), 4);

    let log = harness::read_log(&dir.path().join(harness::TRIALS_FILE)).unwrap();
    assert!(log.iter().all(|l| l.replicate == 0 && l.schema_version == SCHEMA_VERSION));

    let matrix = fs::read_to_string(dir.path().join(harness::JND_MATRIX_FILE)).unwrap();
    let rows: Vec<_> = matrix.lines().collect();
    assert_eq!(rows[0], "# schema_version=1");
    assert_eq!(rows[1], "condition,rep_00000");
    let names: Vec<_> = rows[2..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(names, ["C1", "C2L", "C2R", "C3L", "C3R", "C4L", "C4R"]);

    let summary_json = fs::read_to_string(dir.path().join(harness::SUMMARY_FILE)).unwrap();
    let parsed: BatchSummary = serde_json::from_str(&summary_json).unwrap();
    assert_eq!(parsed, summary);
    assert_eq!(parsed.schema_version, 1);
}

#[test]
fn trial_log_schema_is_pinned() {
    let dir = tempfile::tempdir().unwrap();
    harness::run_batch(&config_in(dir.path(), 1)).unwrap();
    let text = fs::read_to_string(dir.path().join(harness::TRIALS_FILE)).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["schema_version"], 1);
    assert_eq!(first["event"], "session_start");
    let trial = text
        .lines()
        .find(|l| l.contains(r#""event":"trial""#))
        .unwrap();
    let keys = [
        "schema_version",
        "replicate",
        "event",
        "condition",
        "trial_index",
        "s_test",
        "test_interval",
        "response",
        "correct",
        "scale_after",
        "reversal",
        "step_pair_active",
    ];
    let positions: Vec<usize> = keys
        .iter()
        .map(|k| trial.find(&format!("\"{k}\":")).unwrap_or_else(|| panic!("missing {k}")))
        .collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{trial}");
    let parsed: serde_json::Value = serde_json::from_str(trial).unwrap();
    assert_eq!(parsed.as_object().unwrap().len(), keys.len());
    let cue_events: Vec<String> = text
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["event"] == "audio_cue")
        .take(2)
        .map(|v| v["cue"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(cue_events, ["interval 1", "interval 2"]);
    let trace = fs::read_to_string(dir.path().join("traces/replicate_00000.csv")).unwrap();
    assert!(trace.starts_with("# schema_version=1 non_converged="));
    assert_eq!(trace.lines().nth(1).unwrap(), "condition,trial_index,scale_percent,reversal");
}

#[test]
fn unwritable_output_fails_before_simulating() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    // a huge batch would take ages if it ran
    let cfg = HarnessConfig {
        batch: 1_000_000,
        output_dir: blocker.join("out"),
        ..Default::default()
    };
    let started = std::time::Instant::now();
    assert!(matches!(harness::run_batch(&cfg), Err(Error::Io { .. })));
    assert!(started.elapsed().as_secs() < 5);
}

#[test]
fn invalid_config_is_rejected_with_all_violations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config_in(dir.path(), 0);
    cfg.staircase.down_step_initial = 0.0;
    match harness::run_batch(&cfg) {
        Err(Error::Config(v)) => {
            let fields: Vec<_> = v.iter().map(|v| v.field.as_str()).collect();
            assert_eq!(fields, ["batch", "staircase.down_step_initial"]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn converged_trace_marks_ten_reversals() {
    let cfg = ExperimentConfig::default();
    let mut r = rng::stream(3, rng::TRIAL_STREAM);
    let (outcome, records) = run_condition(ConditionMode::C2L, &cfg, &mut r).unwrap();
    assert!(outcome.is_converged());
    let text = harness::trace_export(&records, &[]);
    let rows: Vec<_> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), records.len());
    assert_eq!(rows[0], "C2L,0,150.0000,0");
    assert_eq!(rows.iter().filter(|r| r.ends_with(",1")).count(), 10);
}

#[test]
fn non_converged_trace_is_flagged() {
    let cfg = ExperimentConfig {
        observer: ObserverModel::ConstantP { p: 0.0 },
        ..Default::default()
    };
    let mut r = rng::stream(3, rng::TRIAL_STREAM);
    let (outcome, records) = run_condition(ConditionMode::C3R, &cfg, &mut r).unwrap();
    assert!(!outcome.is_converged());
    let text = harness::trace_export(&records, &[ConditionMode::C3R]);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# schema_version=1 non_converged=C3R");
    assert_eq!(lines.count(), 1 + 400);
}

#[test]
fn trace_subcommand_equivalent_matches_written_trace() {
    let dir = tempfile::tempdir().unwrap();
    harness::run_batch(&config_in(dir.path(), 3)).unwrap();
    let lines = harness::read_log(&dir.path().join(harness::TRIALS_FILE)).unwrap();
    for rep in 0..3u64 {
        let from_log = harness::trace_from_log(&lines, Some(rep));
        let written = fs::read_to_string(dir.path().join(format!("traces/replicate_{rep:05}.csv"))).unwrap();
        assert_eq!(from_log, written);
    }
}

#[test]
fn single_run_writes_session_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = HarnessConfig::default();
    let (result, artifacts) = harness::run_single(&cfg, 5, dir.path()).unwrap();
    assert_eq!(artifacts.files.len(), 3);
    let summary: harness::SessionSummary =
        serde_json::from_str(&fs::read_to_string(dir.path().join(harness::SESSION_FILE)).unwrap()).unwrap();
    assert_eq!(summary.seed, 5);
    assert_eq!(summary.conditions.len(), 7);
    assert_eq!(summary.condition_order, result.condition_order);
}

/// Pooled proportion correct inside the JND window lands near the
/// staircase's equilibrium for the default psychometric observer.
#[test]
fn window_proportion_correct_near_equilibrium() {
    let cfg = HarnessConfig {
        batch: 1000,
        base_seed: 2,
        ..Default::default()
    };
    let (summary, _) = harness::simulate_batch(&cfg).unwrap();
    let eq = cfg.staircase.equilibrium_proportion(StepPair::Late);
    let p = summary.window_proportion_correct.unwrap();
    assert!((p - eq).abs() <= 0.015, "window p {p} vs equilibrium {eq}");
    assert_eq!(summary.converged_replicates + summary.non_converged_replicates, 1000);
}
