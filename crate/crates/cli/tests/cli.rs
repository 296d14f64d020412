use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kafgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kafgp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Rows of a CSV grouped by the first column, header and comments skipped.
fn rows_by_algorithm(path: &Path) -> BTreeMap<String, Vec<Vec<String>>> {
    let mut out: BTreeMap<String, Vec<Vec<String>>> = BTreeMap::new();
    for line in fs::read_to_string(path).unwrap().lines().skip_while(|l| l.starts_with('#')).skip(1) {
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        out.entry(fields[0].clone()).or_default().push(fields[1..].to_vec());
    }
    out
}

#[test]
fn compare_writes_one_curve_per_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let out = kafgp(&[
        "compare", "--algs", "beta:0,beta:1,klms,knlms", "--gen", "kin-like", "--n", "300",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let path = dir.path().join("learning_curve.csv");
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("algorithm,step,nmse_db\n"));
    let rows = rows_by_algorithm(&path);
    assert_eq!(rows.keys().collect::<Vec<_>>(), ["beta:0", "beta:1", "klms", "knlms"]);
    assert_eq!(rows["beta:0"].len(), 3);
    // β = 0 is KLMS with the noise-matched step size.
    assert_eq!(rows["beta:0"], rows["klms"]);
}

#[test]
fn missing_csv_is_a_usage_error_naming_the_path() {
    let out = kafgp(&["compare", "--csv", "/no/such/data.csv", "--dim", "3"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("/no/such/data.csv"));
}

#[test]
fn compare_on_a_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    let mut text = String::from("x,y\n");
    for i in 0..40 {
        let x = i as f64 * 0.25 - 5.0;
        text.push_str(&format!("{x},{}\n", x.sin()));
    }
    fs::write(&csv, &text).unwrap();
    let out_dir = dir.path().join("out");
    let out = kafgp(&[
        "compare", "--csv", csv.to_str().unwrap(), "--dim", "1", "--header", "--eval-every", "5",
        "--algs", "gp,beta:1", "--kernel-lengthscale", "1", "--noise-var", "0.01",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = rows_by_algorithm(&out_dir.join("learning_curve.csv"));
    assert_eq!(rows["gp"].len(), 4);
    let final_gp: f64 = rows["gp"][3][1].parse().unwrap();
    assert!(final_gp < -10.0, "gp final nmse {final_gp}");
    // The input file is left alone.
    assert_eq!(fs::read_to_string(&csv).unwrap(), text);

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "1,2\n1,x\n").unwrap();
    let out = kafgp(&["compare", "--csv", bad.to_str().unwrap(), "--dim", "1"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("row 2"));
}

#[test]
fn reconverge_has_metadata_row_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = kafgp(&[
            "reconverge", "--seeds", "1", "--algs", "beta:1,klms", "--out", dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let text = fs::read_to_string(a.path().join("reconvergence.csv")).unwrap();
    assert!(text.starts_with("# switch_at=500\nalgorithm,step,mean_sq_error_db\n"));
    assert_eq!(text, fs::read_to_string(b.path().join("reconvergence.csv")).unwrap());
    let rows = rows_by_algorithm(&a.path().join("reconvergence.csv"));
    assert_eq!(rows["beta:1"].len(), 1000);
}

#[test]
fn reconverge_rejects_data_flags() {
    let out = kafgp(&["reconverge", "--gen", "sine"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn uncertainty_covers_three_models_and_three_prefixes() {
    let dir = tempfile::tempdir().unwrap();
    let out = kafgp(&["uncertainty", "--grid", "-6:6:61", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let path = dir.path().join("uncertainty.csv");
    assert!(fs::read_to_string(&path).unwrap().starts_with("algorithm,prefix,x,mean,std\n"));
    let rows = rows_by_algorithm(&path);
    assert_eq!(rows.keys().collect::<Vec<_>>(), ["beta:0", "beta:1", "gp"]);
    for (alg, r) in &rows {
        assert_eq!(r.len(), 3 * 61, "{alg}");
        let prefixes: std::collections::BTreeSet<&str> = r.iter().map(|f| f[0].as_str()).collect();
        assert_eq!(prefixes.into_iter().collect::<Vec<_>>(), ["25", "3", "8"]);
    }
    let beta0: std::collections::BTreeSet<&str> = rows["beta:0"].iter().map(|f| f[3].as_str()).collect();
    assert_eq!(beta0.len(), 1, "β = 0 std must be constant");
    // All three traces carry the GP mean.
    assert_eq!(
        rows["gp"].iter().map(|f| &f[2]).collect::<Vec<_>>(),
        rows["beta:1"].iter().map(|f| &f[2]).collect::<Vec<_>>()
    );

    let out = kafgp(&["uncertainty", "--algs", "klms"]);
    assert_eq!(code(&out), 2);
    let out = kafgp(&["uncertainty", "--gen", "kin-like", "--dim", "3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn verify_passes_by_default_and_fails_on_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = kafgp(&["verify", "--out", d]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let table = String::from_utf8_lossy(&out.stdout);
    assert_eq!(table.matches(" pass").count(), 8, "{table}");
    let csv = fs::read_to_string(dir.path().join("verify.csv")).unwrap();
    assert!(csv.starts_with("check,max_abs_diff,tolerance,passed\n"));

    let out = kafgp(&["verify", "--noise-mismatch", "0.05", "--out", d]);
    assert_eq!(code(&out), 1);
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    let failing: Vec<&str> = table.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert_eq!(failing.len(), 1, "{table}");
    assert!(failing[0].starts_with("identity-b"));

    // Identity C holds to rounding error, not to 1e-15.
    let out = kafgp(&["verify", "--tol", "1e-15", "--out", d]);
    assert_eq!(code(&out), 1);
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(table.lines().any(|l| l.starts_with("identity-c ") && l.ends_with("FAIL")), "{table}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out_dir = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# stationary run\nalgs = beta:0,klms\nn = 50\neval_every = 10\nout = {}\n",
            out_dir.display()
        ),
    )
    .unwrap();
    let out = kafgp(&["compare", "--config", cfg.to_str().unwrap(), "--eval-every", "25"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rows = rows_by_algorithm(&out_dir.join("learning_curve.csv"));
    assert_eq!(rows.keys().collect::<Vec<_>>(), ["beta:0", "klms"]);
    let steps: Vec<&str> = rows["klms"].iter().map(|f| f[0].as_str()).collect();
    assert_eq!(steps, ["25", "50"]);

    fs::write(&cfg, "no_such_flag = 1\n").unwrap();
    assert_eq!(code(&kafgp(&["compare", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn dump_state_writes_parseable_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let out = kafgp(&[
        "compare", "--algs", "gp,beta:1", "--n", "40", "--dump-state", "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for name in ["state_gp.txt", "state_beta_1.txt"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        let snap = kafgp::Snapshot::parse(&text).unwrap();
        assert_eq!(snap.to_text(), text);
    }
}

#[test]
fn usage_and_io_errors() {
    assert_eq!(code(&kafgp(&[])), 2);
    assert_eq!(code(&kafgp(&["compare", "--noise-var", "-1"])), 2);
    assert_eq!(code(&kafgp(&["compare", "--algs", "rls"])), 2);
    assert_eq!(code(&kafgp(&["compare", "--seeds", "0"])), 2);
    assert_eq!(code(&kafgp(&["compare", "--gen", "sine", "--csv", "x.csv"])), 2);
    assert_eq!(code(&kafgp(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = kafgp(&["uncertainty", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}
