mod common;

use std::path::PathBuf;

use common::quick_config;
use fg_sfrql::metrics::{
    compare_summary, emit_plots, load_run, run_suite, write_run, ExperimentSuite, LoadedRun,
    PlotKind, PlotSpec, SuiteRun, CHECKPOINT_DIR, STEPS_FILE, SUMMARY_FILE,
};
use fg_sfrql::train::{train, Algorithm, ConfigOverrides};

fn written_runs(root: &std::path::Path, algos: &[Algorithm], seeds: &[u64]) -> Vec<LoadedRun> {
    let mut out = Vec::new();
    for &algo in algos {
        for &seed in seeds {
            let mut cfg = quick_config(algo, seed);
            cfg.num_tasks = 2;
            cfg.steps_per_task = 150;
            let dir = root.join(format!("{}_{seed}", algo.name()));
            write_run(&dir, &train(&cfg).unwrap(), algo.name()).unwrap();
            out.push(load_run(&dir).unwrap());
        }
    }
    out
}

#[test]
fn run_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_config(Algorithm::FgSfdqnAlg3, 3);
    let rec = train(&cfg).unwrap();
    let summary = write_run(dir.path(), &rec, "alg3").unwrap();
    for f in [STEPS_FILE, SUMMARY_FILE, CHECKPOINT_DIR] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let loaded = load_run(dir.path()).unwrap();
    assert_eq!(loaded.rows, rec.rows);
    assert_eq!(loaded.summary, summary);
    assert_eq!(loaded.summary.config, cfg);
    assert_eq!(loaded.summary.skip_rate, rec.skip_rate);
    let by_task: f64 = loaded.summary.reward_by_task.iter().sum();
    assert!((by_task - loaded.summary.total_reward).abs() < 1e-9);
}

#[test]
fn missing_run_files_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_run(dir.path()), Err(fg_sfrql::Error::Input(_))));
}

#[test]
fn plots_are_deterministic_svg() {
    let dir = tempfile::tempdir().unwrap();
    let runs = written_runs(dir.path(), &[Algorithm::FgSfdqnAlg1, Algorithm::Sfdqn], &[1, 2]);
    for kind in [PlotKind::Cumulative, PlotKind::Ablation, PlotKind::FinalEvalBars] {
        let a = dir.path().join("a.svg");
        let b = dir.path().join("b.svg");
        emit_plots(&runs, kind, &a).unwrap();
        emit_plots(&runs, kind, &b).unwrap();
        let bytes = std::fs::read(&a).unwrap();
        assert_eq!(bytes, std::fs::read(&b).unwrap(), "{kind:?}");
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("<svg") || text.starts_with("<?xml"));
        assert!(text.trim_end().ends_with("</svg>"));
        // Fixed legend colors for the two algorithms drawn.
        assert!(text.contains(Algorithm::FgSfdqnAlg1.color()));
        assert!(text.contains(Algorithm::Sfdqn.color()));
    }
}

#[test]
fn empty_plot_input_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("none.svg");
    assert!(matches!(emit_plots(&[], PlotKind::Cumulative, &out), Err(fg_sfrql::Error::Input(_))));
    assert!(!out.exists());
}

#[test]
fn comparison_covers_labels_and_differences() {
    let dir = tempfile::tempdir().unwrap();
    let runs = written_runs(dir.path(), &Algorithm::ALL, &[4]);
    let summaries: Vec<_> = runs.iter().map(|r| r.summary.clone()).collect();
    let c = compare_summary(&summaries).unwrap();
    for algo in Algorithm::ALL {
        assert!(c.rows.iter().any(|r| r.label == algo.name() && r.task_id.is_none()));
    }
    assert_eq!(c.pairwise.len(), 15);
    let text = c.to_text();
    assert!(text.contains("fg_sfdqn_alg1 - sfdqn") || text.contains("sfdqn - fg_sfdqn_alg1"));
    let mut csv = Vec::new();
    c.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + c.rows.len());

    let mut twin = summaries[0].clone();
    twin.label = "twin".into();
    let dup = compare_summary(&[summaries[0].clone(), twin]).unwrap();
    assert_eq!(dup.pairwise[0].eval_diff, 0.0);
    assert_eq!(dup.pairwise[0].train_diff, 0.0);

    assert!(matches!(
        compare_summary(&summaries[..1]),
        Err(fg_sfrql::Error::Usage(_))
    ));
}

#[test]
fn suite_trains_plots_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let run = |id: &str, algo| SuiteRun {
        id: id.into(),
        label: None,
        config: ConfigOverrides {
            env: Some(fg_sfrql::env::EnvKind::ChainTest),
            algorithm: Some(algo),
            steps_per_task: Some(100),
            ..Default::default()
        },
    };
    let suite = ExperimentSuite {
        output_dir: dir.path().to_path_buf(),
        seeds: vec![1, 2],
        runs: vec![run("fg", Algorithm::FgSfdqnAlg1), run("semi", Algorithm::Sfdqn)],
        plots: vec![PlotSpec {
            kind: PlotKind::Cumulative,
            runs: vec!["fg".into(), "semi".into()],
            out: PathBuf::from("cumulative.svg"),
        }],
    };
    let outcome = run_suite(&suite, &ConfigOverrides::default()).unwrap();
    assert_eq!(outcome.summaries.len(), 4);
    assert!(outcome.comparison.is_some());
    for f in ["cumulative.svg", "compare.txt", "compare.csv", "fg/seed_1/steps.csv", "semi/seed_2/summary.toml"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    let mut bad = suite.clone();
    bad.plots[0].runs.push("ghost".into());
    assert!(matches!(bad.validate(), Err(fg_sfrql::Error::Config(_))));
}

#[test]
fn suite_file_parses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("suite.toml");
    std::fs::write(
        &path,
        r#"
output_dir = "out"
seeds = [1, 2, 3]

[[runs]]
id = "alg3_n5"
label = "N=5"
config = { env = "four_rooms", algorithm = "fg_sfdqn_alg3", averaging_n = 5 }

[[plots]]
kind = "ablation"
runs = ["alg3_n5"]
out = "ablation.svg"
"#,
    )
    .unwrap();
    let suite = ExperimentSuite::from_file(&path).unwrap();
    assert_eq!(suite.runs[0].config.averaging_n, Some(5));
    assert_eq!(suite.plots[0].kind, PlotKind::Ablation);

    std::fs::write(&path, "output_dir = \"o\"\nseeds = [1]\nbogus = 3\n[[runs]]\nid = \"x\"\n").unwrap();
    assert!(ExperimentSuite::from_file(&path).is_err());
}

#[test]
fn shipped_configs_parse() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for suite in ["suite_four_rooms.toml", "suite_ablation.toml"] {
        ExperimentSuite::from_file(&root.join(suite)).unwrap();
    }
    let single = ConfigOverrides::from_file(&root.join("four_rooms_fg.toml")).unwrap();
    let cfg = ConfigOverrides::resolve(&[&single]).unwrap();
    assert_eq!(cfg.algorithm, Algorithm::FgSfdqnAlg1);
    assert_eq!((cfg.steps_per_task, cfg.num_tasks), (10_000, 6));
}
