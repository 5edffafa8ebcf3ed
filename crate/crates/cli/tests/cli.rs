use std::path::Path;

use perc_cli::manifest::{read_manifest, write_manifest, RunManifest};
use perc_cli::results::{read_results, write_results, ResultRow, HEADER};
use perc_cli::run_command;

fn argv(out: &Path, args: &[&str]) -> Vec<String> {
    let mut v: Vec<String> = std::iter::once("perc").chain(args.iter().copied()).map(String::from).collect();
    v.extend(["--out".into(), out.display().to_string()]);
    v
}

fn row(i: u64) -> ResultRow {
    ResultRow {
        run_id: "r".into(),
        graph: "hypercubic".into(),
        d: 2,
        k: None,
        geometry: "ball".into(),
        p: Some(0.5),
        m: Some(1),
        n: if i % 2 == 0 { Some(2) } else { None },
        event: format!("E1(1,{i})"),
        estimator: "mc".into(),
        mean: 0.25 + i as f64 * 1e-4,
        stderr: 0.01,
        ci_lo: 0.2,
        ci_hi: 0.5,
        n_samples: 1000 + i,
        n_accepted: 1000,
        seed: i,
        wallclock_s: 0.125,
    }
}

fn manifests(out: &Path) -> Vec<std::path::PathBuf> {
    let mut v: Vec<_> = std::fs::read_dir(out.join("manifests")).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn golden_header() {
    assert_eq!(
        HEADER.join(","),
        "run_id,graph,d,k,geometry,p,m,n,event,estimator,mean,stderr,ci_lo,ci_hi,n_samples,n_accepted,seed,wallclock_s"
    );
}

#[test]
fn zero_rows_give_header_only_and_append_adds_no_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    write_results(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{}\n", HEADER.join(",")));
    write_results(&[row(1)], &path).unwrap();
    write_results(&[row(2), row(3)], &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.matches("run_id").count(), 1);
    assert_eq!(read_results(&path).unwrap(), vec![row(1), row(2), row(3)]);
}

#[test]
fn thousand_rows_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.csv");
    let rows: Vec<ResultRow> = (0..1000).map(row).collect();
    write_results(&rows, &path).unwrap();
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert_eq!(rdr.records().count(), 1000);
    assert_eq!(read_results(&path).unwrap(), rows);
}

#[test]
fn row_checks() {
    assert!(row(0).check().is_ok());
    let mut r = row(0);
    r.mean = f64::NAN;
    assert!(r.check().is_err());
    let mut r = row(0);
    r.ci_lo = 0.3;
    assert!(r.check().is_err());
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = RunManifest::new("estimate", vec!["perc".into(), "estimate".into()], 7, 2);
    m.parameters = serde_json::json!({ "p": 0.5 });
    m.pc_provenance = Some("user".into());
    m.finished = Some(chrono::Utc::now());
    m.exit_code = Some(0);
    let path = dir.path().join("m.json");
    write_manifest(&m, &path).unwrap();
    assert_eq!(read_manifest(&path).unwrap(), m);
    assert!(m.run_id.ends_with(&format!("{:08x}", perc_core::rng::mix64(7) as u32)));
}

#[test]
fn missing_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_command(argv(dir.path(), &["estimate", "--event", "e1", "--m", "1", "--n", "2"])), 1);
    assert_eq!(run_command(argv(dir.path(), &["estimate", "--p", "0.5"])), 1);
    assert_eq!(run_command(argv(dir.path(), &["no-such-command"])), 1);
    assert_eq!(run_command(argv(dir.path(), &["estimate", "--event", "bogus", "--n", "2", "--p", "0.5"])), 1);
}

#[test]
fn oracle_refuses_large_regions() {
    let dir = tempfile::tempdir().unwrap();
    // B(0,3) in the plane has 40 edges.
    assert_eq!(run_command(argv(dir.path(), &["oracle", "--event", "e1:1,3", "--n", "3"])), 1);
    assert_eq!(run_command(argv(dir.path(), &["oracle", "--event", "e1:1,2", "--n", "2"])), 0);
    let rows = read_results(&dir.path().join("oracle.csv")).unwrap();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        let p = r.p.unwrap();
        assert!((r.mean - (1.0 - (1.0 - p).powi(12))).abs() < 1e-12);
    }
}

#[test]
fn starvation_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_command(argv(
        dir.path(),
        &["conditional", "--target", "sure", "--condition", "impossible", "--n", "2", "--p", "0.5", "--budget", "1000"],
    ));
    assert_eq!(code, 3);
}

#[test]
fn exact_subcommands_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_command(argv(dir.path(), &["bk"])), 0);
    assert_eq!(run_command(argv(dir.path(), &["factorize", "--event", "edge"])), 0);
    assert_eq!(run_command(argv(dir.path(), &["suite", "--quick"])), 0);
    let m = manifests(dir.path());
    assert_eq!(m.len(), 3);
    for path in &m {
        let man = read_manifest(path).unwrap();
        assert_eq!(man.exit_code, Some(0));
        assert!(man.outputs.iter().all(|o| o.exists()), "{:?}", man.outputs);
        assert!(man.argv.windows(2).any(|w| w[0] == "--seed"));
    }
}

#[test]
fn config_file_is_merged_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# estimate defaults\np = 0.3\nn = 2\nbudget = 500\nseed = 11\n").unwrap();
    let code = run_command(argv(
        dir.path(),
        &["estimate", "--event", "e1:1,2", "--p", "0.6", "--config", cfg.to_str().unwrap()],
    ));
    assert_eq!(code, 0);
    let rows = read_results(&dir.path().join("estimate.csv")).unwrap();
    assert_eq!(rows[0].p, Some(0.6));
    assert_eq!(rows[0].n_samples, 500);
    assert_eq!(rows[0].seed, 11);
}

#[test]
fn replay_is_worker_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let args = ["iic-first", "--n-list", "4,8", "--p", "0.5", "--budget", "3000", "--seed", "5", "--workers", "1"];
    assert_eq!(run_command(argv(&a, &args)), 0);
    let manifest = manifests(&a).pop().unwrap();
    let mut outs = Vec::new();
    for w in ["1", "4"] {
        let out = dir.path().join(format!("w{w}"));
        let code = run_command(vec![
            "perc".into(),
            "replay".into(),
            "--manifest".into(),
            manifest.display().to_string(),
            "--workers".into(),
            w.into(),
            "--out".into(),
            out.display().to_string(),
        ]);
        assert_eq!(code, 0);
        outs.push(out);
    }
    let fields = |d: &Path| -> Vec<String> {
        read_results(&d.join("iic-first.csv")).unwrap().iter().map(|r| r.reproducible_fields()).collect()
    };
    let base = fields(&a);
    assert_eq!(base.len(), 2);
    for o in &outs {
        assert_eq!(fields(o), base);
    }
    let replayed = read_manifest(&manifests(&outs[1]).pop().unwrap()).unwrap();
    assert_eq!(replayed.workers, 4);
    assert_eq!(replayed.seed, 5);
}

#[test]
fn slab_verify_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let code = run_command(argv(
        dir.path(),
        &["slab-verify", "--graph", "slab", "--d", "3", "--k", "1", "--p", "0.45", "--hits", "20", "--budget", "200000"],
    ));
    assert_eq!(code, 0);
    let rows = read_results(&dir.path().join("slab-verify.csv")).unwrap();
    assert_eq!(rows[0].event, "modification");
    assert_eq!(rows[0].mean, 1.0);
    assert!(rows[0].n_accepted >= 20);
}
