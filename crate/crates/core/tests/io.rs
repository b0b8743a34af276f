use std::path::{Path, PathBuf};

use motoplace::io::pipeline::{self, build, refinements, render, run_all, run_solve, run_verify};
use motoplace::io::{ConfigError, Project, ProjectConfig};
use motoplace::verifier::objective_of;

const TOPOLOGY: &str = r#"
format_version = 1
name = "small"
synthetic = true

[[element]]
name = "WL_rear"
kind = "WL"
mass = 10.0
fixed = [0.0, 0.3]
shape = { type = "circle", radius = 0.3 }

[[element]]
name = "WL_front"
kind = "WL"
mass = 10.0
fixed = [1.4, 0.3]
shape = { type = "circle", radius = 0.3 }

[[element]]
name = "BP"
kind = "BP"
mass = 20.0
shape = { type = "modules", count = 4, width = 0.2, height = 0.1, mass = 5.0 }

[[element]]
name = "INV"
kind = "INV"
mass = 4.0
angle = 0.0
shape = { type = "rect", width = 0.2, height = 0.1 }
"#;

const MINIMAL: &str = r#"format_version = 1
topology = "topology.toml"

[design_space]
x_min = 0.35
x_max = 1.05
y_min = 0.2
y_max = 0.6

[objective]
ideal = [0.7, 0.3]

[vehicle]
chassis = { mass = 50.0, at = [0.7, 0.5] }
rider = { mass = 0.0, at = [0.7, 0.9] }
"#;

const CYCLE: &str = "# format_version: 1\ntime_s,speed_mps\n0,0\n1,2\n2,4\n3,4\n4,1\n5,0\n";

/// Writes a project directory and returns the configuration path.
fn project_dir(dir: &Path, config: &str) -> PathBuf {
    std::fs::write(dir.join("topology.toml"), TOPOLOGY).unwrap();
    std::fs::write(dir.join("cycle.csv"), CYCLE).unwrap();
    let path = dir.join("config.toml");
    std::fs::write(&path, config).unwrap();
    path
}

fn load_err(config: &str) -> ConfigError {
    let dir = tempfile::tempdir().unwrap();
    Project::load(&project_dir(dir.path(), config)).unwrap_err()
}

fn line_of(text: &str, needle: &str) -> usize {
    text.lines().position(|l| l.contains(needle)).unwrap() + 1
}

#[test]
fn omitted_keys_take_their_defaults() {
    let c = ProjectConfig::from_toml(MINIMAL, Path::new("config.toml")).unwrap();
    assert_eq!(c.output_dir, PathBuf::from("out"));
    assert_eq!((c.angles.rect, c.angles.projected), (4, 3));
    assert_eq!(c.epsilon, 1e-3);
    assert!(c.clusters.is_empty());
    assert_eq!((c.objective.l_n, c.objective.l_n_mm), (1.0, 1.0));
    assert_eq!((c.vehicle.mu_front, c.vehicle.mu_rear, c.vehicle.gravity), (0.9, 0.9, 9.81));
    assert_eq!(c.solver.gap_tol, 0.0);
    assert!(c.solver.time_limit_s.is_none() && c.region.is_none());
}

#[test]
fn configuration_round_trips_through_toml() {
    let text = MINIMAL.replace("[vehicle]", "[clusters]\nBP = 2\n\n[vehicle]\nwheelbase = 1.4\ndrive = { type = \"split\", front_share = 0.3 }");
    let c = ProjectConfig::from_toml(&text, Path::new("config.toml")).unwrap();
    let back = ProjectConfig::from_toml(&c.to_toml(), Path::new("config.toml")).unwrap();
    assert_eq!(c, back);
}

#[test]
fn too_many_clusters_is_reported_at_its_line() {
    let text = MINIMAL.replace("[vehicle]", "[clusters]\nBP = 7\n\n[vehicle]");
    let e = load_err(&text);
    assert_eq!(e.line, Some(line_of(&text, "BP = 7")), "{e}");
    assert!(e.message.contains("N_com"), "{e}");
}

#[test]
fn unknown_key_is_reported_at_its_line() {
    let text = MINIMAL.replace("y_max = 0.6", "y_max = 0.6\nz_max = 1.0");
    let e = load_err(&text);
    assert_eq!(e.line, Some(line_of(&text, "z_max")), "{e}");
    assert!(e.message.contains("z_max"), "{e}");
}

#[test]
fn ideal_and_region_are_exclusive() {
    let both = format!("{MINIMAL}\n[region]\ncycle = \"cycle.csv\"\n");
    assert!(load_err(&both).message.contains("not both"));
    let neither = MINIMAL.replace("ideal = [0.7, 0.3]", "");
    assert!(load_err(&neither).message.contains("required"));
}

#[test]
fn out_of_range_values_are_rejected() {
    for (from, to, key) in [
        ("x_max = 1.05", "x_max = 0.1", "design_space"),
        ("[vehicle]", "[vehicle]\nmu_rear = 2.0", "mu_rear"),
        ("format_version = 1", "format_version = 9", "format_version"),
    ] {
        let e = load_err(&MINIMAL.replacen(from, to, 1));
        assert!(e.line.is_some(), "{key}: {e}");
    }
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let text = MINIMAL.replace("ideal = [0.7, 0.3]", "") + "\n[region]\ncycle = \"cycle.csv\"\nstep = 0.05\n";
    let project = Project::load(&project_dir(dir.path(), &text)).unwrap();
    let out = dir.path().join("out");
    let run = run_all(&project, &out).unwrap();
    assert!(run.report.succeeded());
    assert!(run.verification.as_ref().unwrap().feasible);
    let a = &run.artifacts;
    for p in [&a.region, &a.lp, &a.mps, &a.result, &a.verification, &a.svg] {
        let p = p.as_ref().expect("artifact written");
        let text = std::fs::read_to_string(p).unwrap();
        assert!(text.contains("format_version"), "{}", p.display());
    }
    assert!(out.join(pipeline::RESOLVED_CONFIG_FILE).exists());
    let placement = pipeline::parse_placement(&std::fs::read_to_string(a.result.as_ref().unwrap()).unwrap()).unwrap();
    assert_eq!(Some(&placement), run.report.placement.as_ref());
}

#[test]
fn rendering_is_deterministic_and_draws_every_body() {
    let dir = tempfile::tempdir().unwrap();
    let project = Project::load(&project_dir(dir.path(), MINIMAL)).unwrap();
    let (opts, model) = build(&project, [0.7, 0.3]).unwrap();
    let report = run_solve(&project, &opts, &model, None).unwrap();
    let placement = report.placement.unwrap();
    let a = render(&project, &opts, Some(&placement), None).unwrap();
    let b = render(&project, &opts, Some(&placement), None).unwrap();
    assert_eq!(a, b);
    // two wheels, the inverter and one body per battery cluster
    let clusters = placement.element("BP").unwrap().clusters.len();
    assert_eq!(a.matches(r#"class="body""#).count(), 3 + clusters);
    assert_eq!(a.matches(r#"class="element""#).count(), 4);
    assert_eq!(a.matches(r#"class="cog""#).count(), 1);

    let empty = render(&project, &opts, None, None).unwrap();
    assert_eq!(empty.matches(r#"class="body""#).count(), 0);
    assert!(empty.contains(r#"class="design-space""#));
}

#[test]
fn split_warm_starts_keep_the_design() {
    let dir = tempfile::tempdir().unwrap();
    let project = Project::load(&project_dir(dir.path(), MINIMAL)).unwrap();
    let (opts, model) = build(&project, [0.7, 0.3]).unwrap();
    let one = run_solve(&project, &opts, &model, None).unwrap();
    let placement = one.placement.unwrap();
    let j = objective_of(&project.topology, &opts, &placement).unwrap().total;

    let mut two = project.clone();
    two.set_clusters("BP", 2).unwrap();
    let (opts2, model2) = build(&two, [0.7, 0.3]).unwrap();
    let cuts = refinements(&two, &opts2, &placement);
    assert!(!cuts.is_empty());
    for p in &cuts {
        assert_eq!(p.element("BP").unwrap().clusters.len(), 2);
        let mut p = p.clone();
        p.objective = None;
        let v = run_verify(&two, &opts2, &p).unwrap();
        assert!(v.feasible, "{:?}", v.violations);
        assert!((v.objective.total - j).abs() < 1e-9);
    }
    let warm = run_solve(&two, &opts2, &model2, Some(&placement)).unwrap();
    assert!(warm.objective.unwrap() <= j + 1e-6);
}
