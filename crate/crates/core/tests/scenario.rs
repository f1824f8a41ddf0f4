use std::fs;
use std::path::Path;

use dtqw::scenario::{list_presets, preset, preset_source, Manifest, Scenario};

const TRAJECTORIES: &str = r#"
name = "small_trajectories"
protocol = "split_step_1d"
steps = 30
seed = 7

[geometry]
extents = [41]
boundary = "periodic"

[field]
kind = "ring_walls"
left = ["-pi/2", "pi/4"]
right = ["-pi/2", "3pi/4"]

[initial]
kind = "site"
site = [0]
spin = "down"

[decoherence]
channel = "position"
p = 0.2
trajectories = 64

[[observers]]
kind = "site"
name = "origin"
site = [0]

[[observers]]
kind = "distribution"
every = 10
"#;

fn read(dir: &Path, file: &str) -> String {
    fs::read_to_string(dir.join(file)).unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&read(dir, "manifest.json")).unwrap()
}

#[test]
fn every_preset_parses_and_validates() {
    let names: Vec<_> = list_presets().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["fig1", "fig2a", "fig2b", "fig3b", "fig3c", "fig4", "fig5a", "fig5b", "fig6", "fig7"]);
    for n in names {
        let s = preset(n).unwrap();
        assert_eq!(s.name(), n);
        assert!(preset_source(n).is_some());
    }
    assert!(preset("fig8").is_err());
}

#[test]
fn band_preset_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let s = preset("fig1").unwrap();
    let m = s.run(dir.path(), None).unwrap();
    assert_eq!(m.config_sha256, s.config_hash());
    assert_eq!(m.config_sha256.len(), 64);
    for f in &m.outputs {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let on_disk = manifest(dir.path());
    assert_eq!(on_disk.name, "fig1");
    assert_eq!(on_disk.config_source, "preset:fig1");
    assert!(read(dir.path(), "bands.csv").starts_with("k,"));
    assert_eq!(on_disk.summary["windings"]["frame_prime"], 1);
    assert_eq!(on_disk.summary["windings"]["frame_double_prime"], 0);
}

#[test]
fn trajectory_runs_are_reproducible_across_thread_counts() {
    let s = Scenario::parse(TRAJECTORIES, "inline").unwrap();
    let mut outs = Vec::new();
    for threads in [1, 3, 1] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| s.run(dir.path(), None)).unwrap();
        outs.push((read(dir.path(), "observables.csv"), read(dir.path(), "distribution.csv")));
    }
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);
    assert!(outs[0].0.starts_with("n,observable_name,value,stderr"));

    let dir = tempfile::tempdir().unwrap();
    let m = s.run(dir.path(), Some(8)).unwrap();
    assert_eq!(m.seed, 8);
    assert_ne!(read(dir.path(), "observables.csv"), outs[0].0);
}

#[test]
fn dense_runs_are_deterministic() {
    let src = TRAJECTORIES.replace("trajectories = 64\n", "");
    let s = Scenario::parse(&src, "inline").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    s.run(a.path(), None).unwrap();
    s.run(b.path(), Some(99)).unwrap();
    assert_eq!(read(a.path(), "observables.csv"), read(b.path(), "observables.csv"));
    assert!(read(a.path(), "observables.csv").starts_with("n,observable_name,value\n"));
}

#[test]
fn observer_intervals_are_respected() {
    let src = TRAJECTORIES.replace("name = \"origin\"", "name = \"origin\"\nevery = 4");
    let s = Scenario::parse(&src, "inline").unwrap();
    let dir = tempfile::tempdir().unwrap();
    s.run(dir.path(), None).unwrap();
    let steps: Vec<u32> = read(dir.path(), "observables.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(steps, [0, 4, 8, 12, 16, 20, 24, 28, 30]);
    let dist_steps: std::collections::BTreeSet<u32> = read(dir.path(), "distribution.csv")
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(dist_steps.into_iter().collect::<Vec<_>>(), [0, 10, 20, 30]);
}

#[test]
fn no_observers_writes_only_the_manifest() {
    let cut = TRAJECTORIES.find("[[observers]]").unwrap();
    let s = Scenario::parse(&TRAJECTORIES[..cut], "inline").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let m = s.run(dir.path(), None).unwrap();
    assert!(m.outputs.is_empty());
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files, ["manifest.json"]);
}

#[test]
fn config_errors_name_the_line() {
    let bad = TRAJECTORIES.replace("steps = 30", "step = 30");
    let err = Scenario::parse(&bad, "bad.toml").unwrap_err().to_string();
    assert!(err.contains("bad.toml:4"), "{err}");

    let bad = TRAJECTORIES.replace("site = [0]\n\n[[observers]]", "site = [50]\n\n[[observers]]");
    let err = Scenario::parse(&bad, "bad.toml").unwrap_err().to_string();
    assert!(err.contains("bad.toml:"), "{err}");

    let bad = TRAJECTORIES.replace("p = 0.2", "p = 1.5");
    assert!(Scenario::parse(&bad, "bad.toml").is_err());

    let bad = TRAJECTORIES.replace("\"3pi/4\"", "\"3pie/4\"");
    assert!(Scenario::parse(&bad, "bad.toml").is_err());
}
