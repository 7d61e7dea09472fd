use std::path::Path;

use newsalign::config::{HeatmapTarget, PipelineConfig};
use newsalign::pipeline::{artifacts, run, Manifest, Stage, StageStatus, MANIFEST_FILE};
use newsalign::report::read_heatmap;
use newsalign::synth::{generate_corpus, write_corpus, SynthConfig};
use newsalign::Error;

fn small_synth() -> SynthConfig {
    SynthConfig {
        seed: 5,
        stocks: 24,
        years: 3,
        days_per_year: 25,
        ..SynthConfig::default()
    }
}

fn config(data: &Path, out: &Path) -> PipelineConfig {
    let synth = small_synth();
    let mut cfg = PipelineConfig {
        dim: synth.dim,
        workers: Some(2),
        ..PipelineConfig::default()
    };
    cfg.paths.articles = Some(data.join("articles.jsonl"));
    cfg.paths.embeddings = Some(data.join("embeddings.jsonl"));
    cfg.paths.returns = Some(data.join("returns.csv"));
    cfg.paths.calendar = Some(data.join("calendar.toml"));
    cfg.paths.output_dir = out.to_path_buf();
    cfg.scoring.first_train_year = synth.start_year;
    cfg
}

fn setup() -> (tempfile::TempDir, tempfile::TempDir, PipelineConfig) {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    write_corpus(data.path(), &generate_corpus(&small_synth()).unwrap()).unwrap();
    let cfg = config(data.path(), out.path());
    (data, out, cfg)
}

fn statuses(summary: &newsalign::pipeline::RunSummary) -> Vec<StageStatus> {
    summary.outcomes.iter().map(|(_, s)| *s).collect()
}

#[test]
fn full_run_then_rerun_skips_then_force_reruns() {
    let (_data, out, cfg) = setup();
    let first = run(&cfg, &Stage::ALL, false).unwrap();
    let order: Vec<Stage> = first.outcomes.iter().map(|(s, _)| *s).collect();
    assert_eq!(order, Stage::ALL.to_vec());
    assert!(statuses(&first).iter().all(|s| *s == StageStatus::Ran));
    for name in [artifacts::SCORES, artifacts::SUMMARY, artifacts::DAILY_LS, artifacts::CORRELATIONS] {
        assert!(out.path().join(name).is_file(), "{name} missing");
    }
    let manifest = Manifest::load(out.path()).unwrap().unwrap();
    assert_eq!(manifest.stages.len(), 6);

    let second = run(&cfg, &Stage::ALL, false).unwrap();
    assert!(statuses(&second).iter().all(|s| *s == StageStatus::Skipped));
    assert_eq!(second.manifest, manifest);

    let forced = run(&cfg, &[Stage::Backtest], true).unwrap();
    assert_eq!(statuses(&forced), vec![StageStatus::Ran]);
}

#[test]
fn deleted_artifact_is_rebuilt_identically() {
    let (_data, out, cfg) = setup();
    run(&cfg, &Stage::ALL, false).unwrap();
    let path = out.path().join(artifacts::SCORES);
    let before = std::fs::read(&path).unwrap();
    let manifest = std::fs::read(out.path().join(MANIFEST_FILE)).unwrap();
    std::fs::remove_file(&path).unwrap();

    let again = run(&cfg, &Stage::ALL, false).unwrap();
    let ran: Vec<Stage> = again
        .outcomes
        .iter()
        .filter(|(_, s)| *s == StageStatus::Ran)
        .map(|(s, _)| *s)
        .collect();
    assert_eq!(ran, vec![Stage::Score]);
    assert_eq!(std::fs::read(&path).unwrap(), before);
    assert_eq!(std::fs::read(out.path().join(MANIFEST_FILE)).unwrap(), manifest);
}

#[test]
fn changed_parameters_rerun_downstream_only() {
    let (_data, _out, mut cfg) = setup();
    run(&cfg, &Stage::ALL, false).unwrap();
    cfg.backtest.n_quantiles = 4;
    let again = run(&cfg, &Stage::ALL, false).unwrap();
    let expected: Vec<StageStatus> = Stage::ALL
        .iter()
        .map(|s| if *s == Stage::Backtest { StageStatus::Ran } else { StageStatus::Skipped })
        .collect();
    assert_eq!(statuses(&again), expected);
}

#[test]
fn missing_upstream_artifact_is_a_dependency_error() {
    let (_data, _out, cfg) = setup();
    match run(&cfg, &[Stage::Score], false) {
        Err(Error::StageDependency { stage, missing }) => {
            assert_eq!(stage, "score");
            assert!(missing.contains(artifacts::AGGREGATES), "{missing}");
        }
        other => panic!("expected a dependency error, got {other:?}"),
    }
}

#[test]
fn missing_input_path_names_the_config_key() {
    let (_data, _out, mut cfg) = setup();
    cfg.paths.returns = None;
    match run(&cfg, &Stage::ALL, false) {
        Err(Error::StageDependency { missing, .. }) => assert!(missing.contains("paths.returns"), "{missing}"),
        other => panic!("expected a dependency error, got {other:?}"),
    }
}

#[test]
fn heatmap_targets_are_dumped() {
    let (_data, out, mut cfg) = setup();
    let corpus = generate_corpus(&small_synth()).unwrap();
    let target = &corpus.truth[0];
    cfg.report.heatmaps = vec![
        HeatmapTarget { ticker: target.ticker.clone(), date: target.trading_day },
        HeatmapTarget { ticker: "NOPE".into(), date: target.trading_day },
    ];
    run(&cfg, &Stage::ALL, false).unwrap();
    let name = format!("{}/{}_{}.json", artifacts::HEATMAP_DIR, target.ticker, target.trading_day);
    let bundle = read_heatmap(&out.path().join(name)).unwrap();
    assert_eq!(bundle.xi.len(), target.n);
    assert_eq!(bundle.xi[0].len(), target.m);
    assert_eq!(bundle.english_text.len(), target.n);
}
