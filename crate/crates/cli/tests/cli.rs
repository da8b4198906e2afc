use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_SPEC: &str = "\
[trajectory]
frames = 3

[camera]
width = 24
height = 18
focal = 20.0
";

fn evidmap(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evidmap")).args(args).current_dir(cwd).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("spec.toml"), SMALL_SPEC).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        evidmap(args, self.dir.path())
    }

    fn simulate(&self, out: &str) {
        let o = self.run(&["simulate", "--spec", "spec.toml", "--out", out]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
}

#[test]
fn version_lists_formats() {
    let w = Work::new();
    let o = w.run(&["--version"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("EVCL v1") && text.contains("EVVX v1"), "{text}");
}

#[test]
fn help_documents_every_subcommand() {
    let w = Work::new();
    let text = stdout(&w.run(&["--help"]));
    for sub in ["simulate", "integrate", "eval-map", "loss-eval", "export-ply", "ablate"] {
        assert!(text.contains(sub), "{sub} missing from help");
        assert!(w.run(&[sub, "--help"]).status.success());
    }
}

#[test]
fn unknown_flag_rejected() {
    let w = Work::new();
    let o = w.run(&["simulate", "--out", "x", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!w.path("x").exists());
}

#[test]
fn simulate_writes_clouds_and_manifest() {
    let w = Work::new();
    w.simulate("sim");
    let manifest = fs::read_to_string(w.path("sim/manifest.txt")).unwrap();
    let rows: Vec<&str> = manifest.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3);
    for i in 0..3 {
        for ext in ["evcl", "gt", "pred"] {
            assert!(w.path(&format!("sim/frame_{i:04}.{ext}")).is_file());
        }
    }
    let mut entries: Vec<String> = fs::read_dir(w.dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    entries.sort();
    assert_eq!(entries, ["sim", "spec.toml"]);
}

#[test]
fn malformed_spec_names_key_and_line() {
    let w = Work::new();
    fs::write(w.path("bad.toml"), "[camera]\nwidth = 24\nfocal = \"wide\"\n").unwrap();
    let o = w.run(&["simulate", "--spec", "bad.toml", "--out", "sim"]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("camera.focal") && msg.contains("line 3"), "{msg}");

    fs::write(w.path("bad.toml"), "[fusion]\ntau = 1.5\n").unwrap();
    let o = w.run(&["simulate", "--spec", "bad.toml", "--out", "sim"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("fusion.tau (line 2)"), "{}", stderr(&o));
}

#[test]
fn missing_spec_is_io_error() {
    let w = Work::new();
    let o = w.run(&["simulate", "--spec", "nope.toml", "--out", "sim"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nope.toml"));
}

#[test]
fn seed_override_changes_output() {
    let w = Work::new();
    w.simulate("a");
    let o = w.run(&["simulate", "--spec", "spec.toml", "--out", "b", "--seed", "99"]);
    assert!(o.status.success());
    let a = fs::read(w.path("a/frame_0000.evcl")).unwrap();
    let b = fs::read(w.path("b/frame_0000.evcl")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn integrate_single_cloud() {
    let w = Work::new();
    w.simulate("sim");
    fs::create_dir(w.path("one")).unwrap();
    fs::copy(w.path("sim/frame_0000.evcl"), w.path("one/frame_0000.evcl")).unwrap();
    let o = w.run(&["integrate", "--clouds", "one", "--config", "spec.toml", "--out", "maps/one.evvx"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = stdout(&o);
    for key in ["voxels", "blocks", "wall_ms"] {
        assert!(summary.contains(key), "{summary}");
    }
    let voxels: usize = summary.split_whitespace().skip_while(|t| *t != "voxels").nth(1).unwrap().parse().unwrap();
    assert!(voxels > 0);
    assert!(fs::metadata(w.path("maps/one.evvx")).unwrap().len() > 0);
}

#[test]
fn weight_mode_changes_map() {
    let w = Work::new();
    w.simulate("sim");
    for (mode, out) in [("uncertainty", "u.evvx"), ("distance", "d.evvx")] {
        let o = w.run(&["integrate", "--clouds", "sim", "--config", "spec.toml", "--out", out, "--weight-mode", mode]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_ne!(fs::read(w.path("u.evvx")).unwrap(), fs::read(w.path("d.evvx")).unwrap());
    let o = w.run(&["integrate", "--clouds", "sim", "--out", "x.evvx", "--weight-mode", "loud"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn corrupted_cloud_magic() {
    let w = Work::new();
    w.simulate("sim");
    let path = w.path("sim/frame_0001.evcl");
    let mut bytes = fs::read(&path).unwrap();
    bytes[..4].copy_from_slice(b"JUNK");
    fs::write(&path, bytes).unwrap();
    let o = w.run(&["integrate", "--clouds", "sim", "--out", "m.evvx"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("frame_0001.evcl"), "{}", stderr(&o));
    assert!(!w.path("m.evvx").exists());
}

#[test]
fn eval_map_and_export() {
    let w = Work::new();
    w.simulate("sim");
    let o = w.run(&["integrate", "--clouds", "sim", "--config", "spec.toml", "--out", "m.evvx"]);
    assert!(o.status.success());
    let o = w.run(&["eval-map", "--map", "m.evvx", "--scene", "spec.toml", "--tau", "0.5", "--out", "eval"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = fs::read_to_string(w.path("eval/metrics.csv")).unwrap();
    for key in ["miou_3d", "voxel_acc", "voxel_ece", "abstention_rate"] {
        assert!(metrics.contains(key), "{metrics}");
    }
    assert!(fs::read_to_string(w.path("eval/calibration.csv")).unwrap().lines().count() > 1);

    fs::write(w.path("wall.toml"), "[scene]\npreset = \"single_wall\"\n").unwrap();
    let o = w.run(&["eval-map", "--map", "m.evvx", "--scene", "wall.toml"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = w.run(&["export-ply", "--map", "m.evvx", "--out", "ply/m.ply", "--coloring", "uncertainty"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(w.path("ply/m.ply")).unwrap().starts_with("ply\n"));
}

#[test]
fn loss_eval_reports_terms_and_gradchecks() {
    let w = Work::new();
    w.simulate("sim");
    let o = w.run(&["loss-eval", "--pred", "sim/frame_0000.pred", "--gt", "sim/frame_0000.gt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for key in ["depth_silog", "depth_unc", "depth_reg", "seg_ece", "seg_kl"] {
        assert!(text.contains(key), "{text}");
    }
    for op in ["silog", "unc", "kl_nig", "ece", "dirichlet_kl"] {
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(op)).unwrap();
        assert!(line.ends_with("pass"), "{op}: {text}");
    }

    fs::write(w.path("loss.toml"), "[depth]\nprior_kind = \"reg\"\n[gradcheck]\nmax_pixels = 8\n").unwrap();
    let o = w.run(&["loss-eval", "--pred", "sim/frame_0000.pred", "--gt", "sim/frame_0000.gt", "--config", "loss.toml"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn loss_eval_shape_mismatch_exits_2() {
    let w = Work::new();
    w.simulate("sim");
    fs::write(w.path("small.gt"), "EVGT 1\nsize 1 1\n2.0 0\n").unwrap();
    let o = w.run(&["loss-eval", "--pred", "sim/frame_0000.pred", "--gt", "small.gt"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    fs::write(w.path("broken.gt"), "EVGT 1\nsize 1 1\nabc 0\n").unwrap();
    let o = w.run(&["loss-eval", "--pred", "sim/frame_0000.pred", "--gt", "broken.gt"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn ablate_writes_table() {
    let w = Work::new();
    let o = w.run(&["ablate", "--spec", "spec.toml", "--out", "abl", "--variant", "strict:tau=0.8", "--variant", "loose:tau=0.3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(w.path("abl/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("strict,"));
    let o = w.run(&["ablate", "--spec", "spec.toml", "--variant", "x:color=red"]);
    assert_eq!(o.status.code(), Some(2));
}
