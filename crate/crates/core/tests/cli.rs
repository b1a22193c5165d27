mod common;

use std::path::Path;
use std::process::{Command, Output};

use panoscene::pipeline::{read_manifest, verify_manifest, Stage};

const SMALL_CONFIG: &str = r#"{
  "plan": {
    "prompt": "a greenhouse full of ferns",
    "resolution": 48,
    "pano_width": 192,
    "superres": false,
    "schedule": [
      {"yaw_deg": 0, "pitch_deg": 0},
      {"yaw_deg": 90, "pitch_deg": 0},
      {"yaw_deg": 180, "pitch_deg": 0},
      {"yaw_deg": 270, "pitch_deg": 0}
    ]
  },
  "cameras": {"count": 6, "resolution": 32},
  "moving": [{"initial_view": 1, "trajectory": [{"position": [0.1, 0, 0.3], "yaw_deg": -15}], "frame_count": 5, "sample_count": 3}],
  "render": {"views": [0, 3]},
  "generators": {"backend": "stub", "pano_depth": 3.0}
}"#;

fn panoscene(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panoscene"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("config.json"), SMALL_CONFIG).unwrap();
    dir
}

#[test]
fn stub_run_succeeds_with_verified_manifests() {
    let dir = setup();
    let out = panoscene(&["run", "--config", "config.json", "--out", "out", "--stub", "--progress-json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let events: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(events.len(), 2 * Stage::ALL.len());
    assert_eq!(events[0]["stage"], "compose");
    assert_eq!(events[0]["status"], "start");
    assert_eq!(events.last().unwrap()["stage"], "export");

    let root = dir.path().join("out");
    for stage in Stage::ALL {
        let m = read_manifest(&root, stage).unwrap();
        assert!(!m.outputs.is_empty(), "{stage:?} wrote nothing");
        assert!(verify_manifest(&root, &m).unwrap());
    }
    assert!(!root.join(".panoscene.lock").exists());
}

#[test]
fn render_without_fuse_exits_2() {
    let dir = setup();
    let out = panoscene(&["render", "--config", "config.json", "--out", "out"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage_manifest.json"), "stderr names the artifact: {err}");
}

#[test]
fn missing_config_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(panoscene(&["lift"], dir.path()).status.code(), Some(5));
}

#[test]
fn invalid_config_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{"plan":{"prompt":"x","schedule":[]}}"#).unwrap();
    assert_eq!(panoscene(&["compose", "--config", "bad.json"], dir.path()).status.code(), Some(5));
}

#[test]
fn unreachable_endpoint_exits_3() {
    let dir = setup();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    let out = panoscene(&["compose", "--config", "config.json", "--endpoint", &url, "--timeout", "5"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn rerunning_a_stage_is_a_no_op() {
    let dir = setup();
    for cmd in ["compose", "lift"] {
        let out = panoscene(&[cmd, "--config", "config.json", "--out", "out", "--stub"], dir.path());
        assert_eq!(out.status.code(), Some(0));
    }
    let root = dir.path().join("out");
    let before = common::tree_bytes(&root);
    let out = panoscene(&["lift", "--config", "config.json", "--out", "out", "--stub", "--progress-json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let line: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(line["status"], "skipped");
    assert_eq!(common::tree_bytes(&root), before);

    // touching an output forces the stage to run again
    std::fs::write(root.join("lift/depth.pfm"), b"garbage").unwrap();
    let out = panoscene(&["lift", "--config", "config.json", "--out", "out", "--stub"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(common::tree_bytes(&root), before);
}

#[test]
fn concurrent_run_is_refused() {
    let dir = setup();
    let root = dir.path().join("out");
    std::fs::create_dir_all(&root).unwrap();
    std::fs::write(root.join(".panoscene.lock"), b"").unwrap();
    let out = panoscene(&["compose", "--config", "config.json", "--out", "out", "--stub"], dir.path());
    assert_ne!(out.status.code(), Some(0));
}
