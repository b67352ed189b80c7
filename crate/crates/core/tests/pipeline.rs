mod common;

use std::path::Path;
use std::process::Command;

use geoattract::covariates::Axis;
use geoattract::ingest::PruneStats;
use geoattract::pipeline::{self, PipelineError, Problem, Stage};
use geoattract::scaling::{FitError, RegionFitOutcome};
use geoattract::synth::{generate_world, SynthConfig, SynthPaths};

fn small_world(dir: &Path) -> SynthPaths {
    let cfg = SynthConfig {
        seed: 21,
        n_users: 150,
        non_geotag_rate: 0.2,
        bad_date_rate: 0.05,
        ..SynthConfig::default()
    };
    generate_world(&cfg).unwrap().write_files(&dir.join("in")).unwrap()
}

fn stage_cached(report: &pipeline::RunReport, stage: Stage) -> bool {
    report.runtime.stages.iter().find(|s| s.stage == stage.name()).unwrap().cached
}

#[test]
fn empty_metadata_gives_zero_stats_and_unfittable_fits() {
    let dir = tempfile::tempdir().unwrap();
    let paths = small_world(dir.path());
    std::fs::write(&paths.metadata, "").unwrap();
    let cfg = common::config_for(&paths, &dir.path().join("out"), 2);
    let report = pipeline::run(&cfg).unwrap();
    assert_eq!(report.prune, Some(PruneStats::default()));
    let geo = report.geocode.unwrap();
    assert_eq!((geo.records, geo.assigned, geo.unassigned, geo.epsilon_rescued), (0, 0, 0, 0));
    assert_eq!(report.homes.as_ref().unwrap().users, 0);
    let table = report.attractiveness.as_ref().unwrap();
    assert_eq!(table.rows.len(), 40);
    assert!(table.rows.iter().all(|r| r.foreign_object_count == 0 && r.fraction_of_total.is_none()));
    for axis in Axis::BOTH {
        assert_eq!(report.world_fit(axis).unwrap().error, Some(FitError::InsufficientPoints(0)));
        for r in &report.region_fits(axis).unwrap().regions {
            assert_eq!(r.outcome, RegionFitOutcome::Unfittable { n_points: 0 });
        }
    }
    assert!(report.failure.is_none());
    let fit_line = std::fs::read_to_string(dir.path().join("out/plots/fig3_fit_population.tsv")).unwrap();
    assert_eq!(fit_line, "scope\tx\ty\n");
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_geoattract");
    let dir = tempfile::tempdir().unwrap();
    let paths = small_world(dir.path());
    std::fs::write(&paths.metadata, "").unwrap();
    let cfg = common::config_for(&paths, &dir.path().join("out"), 1);
    let cfg_path = dir.path().join("pipeline.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).unwrap();

    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    let c = cfg_path.to_str().unwrap();
    assert_eq!(status(&["validate", "-c", c]), Some(0));
    assert_eq!(status(&["run", "-c", c]), Some(0));
    assert_eq!(status(&["fit", "-c", c, "--classify-tolerance", "0.1"]), Some(0));
    assert_eq!(status(&["report", "--output-dir", dir.path().join("out").to_str().unwrap()]), Some(0));
    assert_eq!(status(&["run", "-c", c, "--workers", "0"]), Some(1));
    assert_eq!(status(&["run", "-c", c, "--boundaries", "/no/such/file.geojson"]), Some(1));

    // A malformed covariate value fails the covariates stage.
    std::fs::write(&paths.population, "country,2010\nAAA,-5\n").unwrap();
    assert_eq!(status(&["run", "-c", c]), Some(2));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["failure"]["stage"], "covariates");
    assert!(report["prune"].is_object());
}

#[test]
fn validate_reports_problems() {
    let dir = tempfile::tempdir().unwrap();
    let paths = small_world(dir.path());
    let mut cfg = common::config_for(&paths, &dir.path().join("out"), 1);
    assert_eq!(pipeline::validate(&cfg), vec![]);

    cfg.inputs.boundaries = dir.path().join("missing.geojson");
    cfg.columns.lat = 40;
    cfg.workers = 0;
    let problems = pipeline::validate(&cfg);
    assert!(problems.contains(&Problem::MissingPath {
        input: "boundaries".into(),
        path: dir.path().join("missing.geojson"),
    }));
    assert!(problems.contains(&Problem::BadColumn {
        field: "lat".into(),
        index: 40,
        columns: 23,
    }));
    assert!(problems.iter().any(|p| matches!(p, Problem::InvalidSetting { name, .. } if name == "workers")));

    let mut cfg = common::config_for(&paths, &dir.path().join("out"), 1);
    let aliases = dir.path().join("aliases.csv");
    std::fs::write(&aliases, "alias,code\nFreedonia,ZZZ\nAlpha,AAA\n").unwrap();
    cfg.inputs.aliases = Some(aliases);
    cfg.tables.region_column = "continent".into();
    let problems = pipeline::validate(&cfg);
    assert_eq!(
        problems,
        vec![
            Problem::MissingTableColumn {
                input: "regions".into(),
                column: "continent".into(),
            },
            Problem::UnknownAliasTarget {
                alias: "Freedonia".into(),
                code: "ZZZ".into(),
            },
        ]
    );
}

#[test]
fn stages_are_cached_and_invalidated_by_config() {
    let dir = tempfile::tempdir().unwrap();
    let paths = small_world(dir.path());
    let out = dir.path().join("out");
    let mut cfg = common::config_for(&paths, &out, 1);

    let first = pipeline::run(&cfg).unwrap();
    assert!(Stage::ALL.iter().all(|&s| !stage_cached(&first, s)));
    let second = pipeline::run(&cfg).unwrap();
    assert!(Stage::ALL.iter().all(|&s| stage_cached(&second, s)));
    assert_eq!(first.without_runtime(), second.without_runtime());

    cfg.analysis.epsilon = 0.5;
    let third = pipeline::run(&cfg).unwrap();
    assert!(stage_cached(&third, Stage::Ingest));
    assert!(!stage_cached(&third, Stage::Geocode));
    // Geocoded output is unchanged, so downstream keys still match.
    assert!(stage_cached(&third, Stage::Home));

    // Tampering with an intermediate forces that stage to recompute.
    std::fs::write(out.join("fits/fits.json"), "{}").unwrap();
    let fourth = pipeline::run(&cfg).unwrap();
    assert!(!stage_cached(&fourth, Stage::Fits));
    assert_eq!(fourth.world_fits, first.world_fits);
}

#[test]
fn refit_uses_persisted_tables() {
    let dir = tempfile::tempdir().unwrap();
    let paths = small_world(dir.path());
    let mut cfg = common::config_for(&paths, &dir.path().join("out"), 1);
    let base = pipeline::run(&cfg).unwrap();
    let beta_b = base
        .region_fits(Axis::Population)
        .unwrap()
        .get("Region B")
        .unwrap()
        .outcome
        .fit()
        .unwrap()
        .beta;
    assert!((beta_b - 1.2).abs() < 1e-9);

    cfg.analysis.classify_tolerance = 0.25;
    // Earlier stages come from disk even when their inputs changed.
    std::fs::write(&paths.metadata, "").unwrap();
    let refit = pipeline::refit(&cfg).unwrap();
    assert_eq!(refit.prune, base.prune);
    let fit = refit.region_fits(Axis::Population).unwrap().get("Region B").unwrap().outcome.fit().unwrap();
    assert_eq!(fit.regime.to_string(), "linear");

    let missing = tempfile::tempdir().unwrap();
    let mut cfg = common::config_for(&paths, missing.path(), 1);
    cfg.output_dir = missing.path().join("never-run");
    match pipeline::refit(&cfg) {
        Err(PipelineError::Stage { error, .. }) => assert_eq!(error.stage, "ingest"),
        other => panic!("expected a stage failure, got {other:?}"),
    }
}

#[test]
fn region_table_sorted_by_r_squared() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        seed: 8,
        noise_sigma: 0.4,
        regions: (0..4)
            .map(|i| geoattract::synth::PlantedRegion {
                name: format!("R{i}"),
                countries: 12,
                beta: 0.5 + 0.2 * i as f64,
            })
            .collect(),
        ..SynthConfig::default()
    };
    let paths = generate_world(&cfg).unwrap().write_files(&dir.path().join("in")).unwrap();
    let pcfg = common::config_for(&paths, &dir.path().join("out"), 1);
    pipeline::run(&pcfg).unwrap();
    let text = std::fs::read_to_string(dir.path().join("out/plots/table1_population.tsv")).unwrap();
    let r2: Vec<f64> = text.lines().skip(1).map(|l| l.split('\t').nth(7).unwrap().parse().unwrap()).collect();
    assert_eq!(r2.len(), 4);
    assert!(r2.windows(2).all(|w| w[0] >= w[1]), "{r2:?}");
}
