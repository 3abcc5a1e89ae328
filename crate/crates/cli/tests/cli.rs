use std::path::Path;
use std::process::{Command, Output};

fn pinning(args: &[&str], config: Option<(&Path, &str)>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pinning"));
    cmd.args(args).env_remove("PINNING_OUT");
    if let Some((path, text)) = config {
        std::fs::write(path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

#[test]
fn list_prints_every_experiment() {
    let out = pinning(&["list"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 7);
    for name in ["wick_check", "chernoff_check", "hessian_limit", "normalization_check", "sample_pinned", "compare_density", "bridge_stat"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn writes_stamped_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("hessian");
    let o = pinning(&["hessian-limit", "--strict", "--out", out.to_str().unwrap()], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let hash = summary["stamp"]["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    assert_eq!(summary["experiment"], "hessian_limit");
    let csv = std::fs::read_to_string(out.join("defect.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains(&hash));
    assert_eq!(csv.lines().nth(1).unwrap(), "s,defect,predicted,abs_error");
}

#[test]
fn bad_config_exits_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    let out = tmp.path().join("o");
    for text in ["[mc]\nno_such_field = 1\n", "experiment = \"bridge_stat\"\n", "t_grid = [0.1, 0.01]\n", "not toml ["] {
        let o = pinning(&["chernoff-check", "--out", out.to_str().unwrap()], Some((&cfg, text)));
        assert_eq!(o.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = pinning(&["hessian-limit", "--threads", "0", "--out", out.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(2));
}

#[cfg(not(feature = "curved-ambient"))]
#[test]
fn curved_ambient_without_feature_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sphere.toml");
    let out = tmp.path().join("o");
    let text = "[manifold]\nkind = \"sphere2\"\nradius = 1.0\nambient = { kind = \"itself\" }\n\
                [family]\nkind = \"heat_restricted\"\nnormalization = \"raw_s\"\n";
    let o = pinning(&["normalization-check", "--out", out.to_str().unwrap()], Some((&cfg, text)));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unsupported_family_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("ellipse.toml");
    let out = tmp.path().join("o");
    let text = "[manifold]\nkind = \"ellipse\"\nsemi_axis_a = 1.0\nsemi_axis_b = 0.5\nambient = { kind = \"itself\" }\n";
    let o = pinning(&["chernoff-check", "--out", out.to_str().unwrap()], Some((&cfg, text)));
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn strict_mode_reports_misses() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("tight.toml");
    let out = tmp.path().join("o");
    // No grid can meet a zero tolerance at s = 0.1.
    let text = "[hessian]\ns_values = [0.1]\ntolerance = 0.0\n";
    let o = pinning(&["hessian-limit", "--out", out.to_str().unwrap()], Some((&cfg, text)));
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
    let o = pinning(&["hessian-limit", "--strict", "--out", out.to_str().unwrap()], Some((&cfg, text)));
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn seed_flag_changes_the_stamp_only_through_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(pinning(&["sample-pinned", "--seed", "5", "--out", a.to_str().unwrap()], None).status.success());
    assert!(pinning(&["sample-pinned", "--seed", "6", "--out", b.to_str().unwrap()], None).status.success());
    let read = |d: &Path| std::fs::read_to_string(d.join("paths.csv")).unwrap();
    assert!(read(&a).starts_with("# config_hash="));
    assert!(read(&a).lines().next().unwrap().ends_with(&format!("seed=5 version={}", env!("CARGO_PKG_VERSION"))));
    assert_ne!(read(&a), read(&b));
}
