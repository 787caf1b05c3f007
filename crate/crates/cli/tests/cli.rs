use std::process::Command;

fn quenchlab(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_quenchlab")).args(args).output().expect("binary runs");
    (
        out.status.success(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn exact_prints_variance() {
    let (ok, out, _) = quenchlab(&["exact", "--model", "gff", "--beta", "1", "--l", "0"]);
    assert!(ok);
    let var: f64 = out.split_whitespace().next().unwrap().trim_start_matches("var=").parse().unwrap();
    // A single site joined to the boundary by four edges of weight e^{-h²/2}.
    let w = |h: i64| (-2.0 * (h * h) as f64).exp();
    let z: f64 = (-30..=30).map(w).sum();
    let m2: f64 = (-30..=30).map(|h| (h * h) as f64 * w(h)).sum();
    assert!((var - m2 / z).abs() < 1e-9, "{out}");
}

#[test]
fn duality_sides_agree() {
    let (ok, out, _) = quenchlab(&["duality", "--d", "2", "--l", "0", "--n", "1"]);
    assert!(ok, "{out}");
    let field = |k: &str| -> f64 {
        out.split_whitespace().find_map(|t| t.strip_prefix(k)).unwrap().parse().unwrap()
    };
    assert!((field("var_height=") - field("spin=")).abs() < 1e-6);
}

#[test]
fn renorm_chain_reports_order() {
    let (ok, out, _) = quenchlab(&["renorm", "--seed", "3"]);
    assert!(ok);
    assert!(out.contains("non_increasing=true"), "{out}");
}

#[test]
fn scan_writes_csv_and_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, "scenario = \"annealed-villain\"\nbeta = [0.5, 1.0]\n").unwrap();
    let out = dir.path().join("out");
    let (ok, _, err) = quenchlab(&["scan", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(ok, "{err}");
    let text = std::fs::read_to_string(out.join("annealed-villain.csv")).unwrap();
    assert_eq!(text.lines().count(), 3);

    std::fs::write(&cfg, "scenario = \"deloc-gff\"\nbeta = [1.0]\n").unwrap();
    let (ok, _, _) = quenchlab(&["scan", "--config", cfg.to_str().unwrap()]);
    assert!(!ok);
}

#[test]
fn tampered_acceptance_fails() {
    let (ok, out, _) = quenchlab(&["accept", "--only", "1", "--tamper"]);
    assert!(!ok);
    assert!(out.contains("[FAIL] criterion  1"), "{out}");
}
