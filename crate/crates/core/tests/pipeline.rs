mod common;

use std::collections::BTreeSet;

use common::{planted_study, snapshot_dir, PlantedParams};
use spillnet::pipeline::{
    classify, run_pipeline, run_stage, PipelineConfig, Specification, Stage, LOCK_FILE, METRICS_FILE, REPORT_FILE,
    TARGETS_FILE,
};
use spillnet::{Error, ErrorKind};

fn small() -> PlantedParams {
    PlantedParams {
        firms: 20,
        relays: 4,
        hubs: 6,
        max_hub_degree: 6,
        ..PlantedParams::default()
    }
}

#[test]
fn end_to_end_runs_are_byte_identical() {
    let study = planted_study(71, &small());
    let a = study.with_output("a");
    let b = study.with_output("b");
    run_pipeline(&a).unwrap();
    run_pipeline(&b).unwrap();
    let sa = snapshot_dir(&a.paths.output_dir);
    let sb = snapshot_dir(&b.paths.output_dir);
    let names: Vec<String> = sa.iter().map(|(p, _)| p.display().to_string()).collect();
    assert!(names.contains(&REPORT_FILE.to_string()));
    assert!(names.iter().any(|n| n.starts_with("table_")));
    assert!(!names.contains(&LOCK_FILE.to_string()));
    assert_eq!(sa, sb);
}

#[test]
fn missing_sector_file_fails_in_the_loading_stage() {
    let study = planted_study(72, &small());
    let mut cfg = study.with_output("out");
    cfg.paths.sectors = study.dir.path().join("absent.csv");
    let err = run_pipeline(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(*stage, "panel_io"),
        other => panic!("unexpected error {other:?}"),
    }
    assert_eq!(err.kind(), ErrorKind::Config);
    assert_eq!(err.kind().exit_code(), 1);
    assert!(snapshot_dir(&cfg.paths.output_dir).is_empty());
}

#[test]
fn invalid_config_is_a_config_error() {
    let study = planted_study(73, &small());
    let mut cfg = study.with_output("out");
    cfg.regression.alphas.clear();
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
    assert_eq!(err.kind().exit_code(), 1);
}

#[test]
fn regress_stage_reproduces_the_report() {
    let study = planted_study(74, &small());
    let cfg = study.with_output("out");
    let first = run_pipeline(&cfg).unwrap();
    let bytes = std::fs::read(cfg.paths.output_dir.join(REPORT_FILE)).unwrap();
    let again = run_stage(&cfg, Stage::Regress).unwrap().unwrap();
    assert_eq!(again, first);
    assert_eq!(std::fs::read(cfg.paths.output_dir.join(REPORT_FILE)).unwrap(), bytes);
}

#[test]
fn regress_needs_earlier_stages() {
    let study = planted_study(75, &small());
    let cfg = study.with_output("out");
    let err = run_stage(&cfg, Stage::Regress).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
}

#[test]
fn stages_compose_into_a_run() {
    let study = planted_study(76, &small());
    let staged = study.with_output("staged");
    for stage in [Stage::Network, Stage::Communities, Stage::Metrics, Stage::Targets] {
        assert!(run_stage(&staged, stage).unwrap().is_none());
    }
    assert!(staged.paths.output_dir.join(METRICS_FILE).exists());
    assert!(staged.paths.output_dir.join(TARGETS_FILE).exists());
    run_stage(&staged, Stage::Regress).unwrap();
    let whole = study.with_output("whole");
    run_pipeline(&whole).unwrap();
    assert_eq!(snapshot_dir(&staged.paths.output_dir), snapshot_dir(&whole.paths.output_dir));
}

#[test]
fn report_respects_specifications_and_classification() {
    let study = planted_study(77, &small());
    let cfg = study.with_output("out");
    let report = run_pipeline(&cfg).unwrap();
    assert_eq!(report.dependent_variables, cfg.dependent_variables());
    assert_eq!(report.alphas, cfg.regression.alphas);
    assert_eq!(report.firms.len(), 20);
    for dep in &report.dependent_variables {
        for &alpha in &report.alphas {
            let mut candidates = Vec::new();
            for spec in Specification::ALL {
                let fit = report.fit(spec, dep, alpha).expect("every combination is fitted");
                assert!(fit.selected.iter().all(|s| spec.includes(s.level)));
                assert!(fit.selected.iter().all(|s| s.coefficient != 0.0));
                candidates.push(fit.candidates + fit.dropped_constant.len());
            }
            assert!(candidates.windows(2).all(|w| w[0] <= w[1]));
        }
        let full = report.fit(Specification::Full, dep, report.alphas[0]).unwrap();
        assert_eq!(report.hypotheses[dep], classify(full.selected.iter().map(|s| s.level)));
    }
}

#[test]
fn tables_list_the_selected_signs() {
    let study = planted_study(78, &small());
    let cfg = study.with_output("out");
    let report = run_pipeline(&cfg).unwrap();
    let primary = report.alphas[0];
    for spec in Specification::ALL {
        let path = cfg.paths.output_dir.join(format!("table_{spec}.csv"));
        let mut reader = csv::Reader::from_path(&path).unwrap();
        let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header[..2], ["variable", "level"]);
        assert_eq!(header[2..], report.dependent_variables[..]);
        let mut cells = BTreeSet::new();
        for rec in reader.records() {
            let rec = rec.unwrap();
            for (dep, cell) in report.dependent_variables.iter().zip(rec.iter().skip(2)) {
                if !cell.is_empty() {
                    cells.insert((rec[0].to_string(), rec[1].to_string(), dep.clone(), cell.to_string()));
                }
            }
        }
        let expected: BTreeSet<_> = report
            .dependent_variables
            .iter()
            .flat_map(|dep| {
                report
                    .fit(spec, dep, primary)
                    .unwrap()
                    .selected
                    .iter()
                    .map(move |s| (s.variable.clone(), s.level.tag().to_string(), dep.clone(), s.sign.symbol().to_string()))
            })
            .collect();
        assert_eq!(cells, expected);
    }
    assert!(cfg.paths.output_dir.join("table_full_alpha0.5.csv").exists());
}

#[test]
fn config_file_round_trip() {
    let study = planted_study(79, &small());
    let text = serde_json::to_string_pretty(&study.config).unwrap();
    let path = study.dir.path().join("config.json");
    std::fs::write(&path, &text).unwrap();
    assert_eq!(PipelineConfig::load(&path).unwrap(), study.config);
    assert_eq!(PipelineConfig::load(study.dir.path().join("nope.json")).unwrap_err().kind(), ErrorKind::Config);
}

#[test]
fn busy_output_directory_is_refused() {
    let study = planted_study(80, &small());
    let cfg = study.with_output("out");
    std::fs::create_dir_all(&cfg.paths.output_dir).unwrap();
    std::fs::write(cfg.paths.output_dir.join(LOCK_FILE), "1\n").unwrap();
    assert_eq!(run_pipeline(&cfg).unwrap_err().kind(), ErrorKind::Config);
}

#[test]
fn full_config_example_parses() {
    let text = r#"{
      "paths": {"prices": "m.csv", "target_prices": "d.csv", "sectors": "s.csv", "output_dir": "out"},
      "crisis_windows": [
        {"label": "12m", "start": "2008-01-01", "end": "2008-12-31"},
        {"label": "18m", "start": "2007-07-01", "end": "2008-12-31"}
      ],
      "sample": {"min_consecutive": 36},
      "network": {"window": 36, "step": 1, "lag": 1, "significance": 0.05, "fdr": false},
      "communities": {"resolution": 1.0, "seed": 0, "shuffle": false},
      "metrics": {"m": 2, "katz_attenuation": 0.1, "ratio_cap": 1000000.0},
      "regression": {"alphas": [1.0, 0.5], "folds": 10, "seed": 0, "rule": "min"}
    }"#;
    let cfg = PipelineConfig::from_json(text, std::path::Path::new("/data")).unwrap();
    cfg.validate().unwrap();
    let defaults = PipelineConfig::new(cfg.paths.clone());
    assert_eq!(cfg, defaults);
    assert_eq!(cfg.paths.target_prices, Some("/data/d.csv".into()));
}
