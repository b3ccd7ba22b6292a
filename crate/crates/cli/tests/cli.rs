use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn msoe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msoe")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copies a shipped config into `dir`, appending `extra` TOML.
fn config_with(dir: &Path, base: &str, extra: &str) -> PathBuf {
    let text = std::fs::read_to_string(configs().join(base)).unwrap();
    let path = dir.join(base);
    std::fs::write(&path, format!("{text}\n{extra}\n")).unwrap();
    path
}

fn run_ok(args: &[&str]) -> String {
    let o = msoe(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn estimate_writes_fit_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = configs().join("markov_sim.cfg");
    let listed = run_ok(&["estimate", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
    for name in ["oe_table.csv", "fit.csv", "truth.csv", "manifest.json"] {
        assert!(listed.contains(name), "{name} not echoed");
    }
    let fit = read(&out, "fit.csv");
    assert!(fit.starts_with("transition,bin,t_lo,t_hi,rate,variance,ci_lo,ci_hi\n"));
    assert_eq!(fit.lines().count(), 1 + 3 * 40);
    assert!(!fit.contains('\r'));
    let manifest = read(&out, "manifest.json");
    assert!(manifest.contains("\"master_seed\": 20240611"));
    assert!(manifest.contains("\"config_sha256\""));
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let o = msoe(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));

    let tmp = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("markov_sim.cfg")).unwrap().replace("master_seed = 20240611\n", "");
    let cfg = tmp.path().join("c.cfg");
    std::fs::write(&cfg, text).unwrap();
    let o = msoe(&["estimate", "-c", cfg.to_str().unwrap(), "-o", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("master_seed"));
}

#[test]
fn help_documents_config_keys() {
    let o = msoe(&["--help"]);
    assert!(o.status.success());
    let help = stdout(&o);
    for key in ["master_seed", "interval_scale", "min_exposure", "MSOE_LOG", "paper-scale"] {
        assert!(help.contains(key) || stdout(&msoe(&["estimate", "--help"])).contains(key), "{key}");
    }
}

#[test]
fn events_round_trip_and_bad_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("disability.cfg");
    let sim = tmp.path().join("sim");
    run_ok(&["simulate", "-c", cfg.to_str().unwrap(), "-o", sim.to_str().unwrap()]);
    let events = sim.join("events.csv");

    let from_file = tmp.path().join("file");
    let direct = tmp.path().join("direct");
    run_ok(&["estimate", "-c", cfg.to_str().unwrap(), "-o", from_file.to_str().unwrap(), "--events", events.to_str().unwrap()]);
    run_ok(&["estimate", "-c", cfg.to_str().unwrap(), "-o", direct.to_str().unwrap()]);
    // Occurrence columns agree exactly; exposures up to the printed precision.
    let a = read(&from_file, "oe_table.csv");
    let b = read(&direct, "oe_table.csv");
    for (la, lb) in a.lines().zip(b.lines()).skip(1) {
        let fa: Vec<&str> = la.split(',').collect();
        let fb: Vec<&str> = lb.split(',').collect();
        assert_eq!(fa[..5], fb[..5]);
        let (ea, eb): (f64, f64) = (fa[5].parse().unwrap(), fb[5].parse().unwrap());
        assert!((ea - eb).abs() <= 1e-6 * eb.max(1.0), "{la} vs {lb}");
    }

    let text = read(&sim, "events.csv");
    let broken = text.replacen("disabled,reactivated", "active,reactivated", 1);
    assert_ne!(broken, text);
    let bad = tmp.path().join("bad.csv");
    std::fs::write(&bad, &broken).unwrap();
    let o = msoe(&["estimate", "-c", cfg.to_str().unwrap(), "-o", tmp.path().join("x").to_str().unwrap(), "--events", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    let line = broken.lines().position(|l| l.contains("active,reactivated")).unwrap() + 1;
    assert!(err.contains(&format!("line {line}: id ")), "{err}");
}

#[test]
fn same_seed_gives_identical_bytes_and_override_changes_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("markov_sim.cfg");
    let dirs: Vec<PathBuf> = (0..3).map(|i| tmp.path().join(i.to_string())).collect();
    run_ok(&["simulate", "-c", cfg.to_str().unwrap(), "-o", dirs[0].to_str().unwrap()]);
    run_ok(&["simulate", "-c", cfg.to_str().unwrap(), "-o", dirs[1].to_str().unwrap()]);
    run_ok(&["simulate", "-c", cfg.to_str().unwrap(), "-o", dirs[2].to_str().unwrap(), "--seed", "99"]);
    assert_eq!(read(&dirs[0], "events.csv"), read(&dirs[1], "events.csv"));
    assert_ne!(read(&dirs[0], "events.csv"), read(&dirs[2], "events.csv"));
    assert!(read(&dirs[2], "manifest.json").contains("\"master_seed\": 99"));
}

#[test]
fn regularised_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("disability.cfg");
    let lasso = tmp.path().join("lasso");
    let tree = tmp.path().join("tree");
    run_ok(&["lasso", "-c", cfg.to_str().unwrap(), "-o", lasso.to_str().unwrap()]);
    run_ok(&["tree", "-c", cfg.to_str().unwrap(), "-o", tree.to_str().unwrap()]);
    let path = read(&lasso, "lasso_path.csv");
    assert!(path.starts_with("lambda,objective,df\n"));
    assert_eq!(path.lines().count(), 9);
    assert!(read(&lasso, "lasso_fit_000.csv").lines().next().unwrap().ends_with(",method,lambda"));
    let fit = read(&tree, "tree_fit.csv");
    assert!(fit.lines().next().unwrap().ends_with(",method,leaf_id"));
    assert!(fit.lines().nth(1).unwrap().contains(",tree,0"));
}

#[test]
fn studies_run_at_small_scale() {
    let tmp = tempfile::tempdir().unwrap();
    let small = "[experiment]\nn = 200\nreps = 20\nmeshes = [5, 10]\nm = 10\ndelta = 0.5";
    let cfg = config_with(tmp.path(), "markov_sim.cfg", small);
    let c = cfg.to_str().unwrap();
    for (cmd, files) in [
        ("sweep", vec!["sweep.csv"]),
        ("clt", vec!["clt_z.csv", "clt_summary.csv"]),
        ("independence", vec!["independence.csv"]),
        ("lemma-check", vec!["lemma.csv"]),
    ] {
        let out = tmp.path().join(cmd);
        run_ok(&[cmd, "-c", c, "-o", out.to_str().unwrap()]);
        for f in files {
            assert!(read(&out, f).lines().count() > 1, "{cmd}: {f} empty");
        }
    }
    let sweep = read(&tmp.path().join("sweep"), "sweep.csv");
    assert!(sweep.starts_with("m,delta,n,reps,dropped,truth,mean_rate,var_z,var_z_alt,scaled_abs_bias\n"));
    assert_eq!(sweep.lines().count(), 3);
}

#[test]
fn surface_and_slices() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_with(tmp.path(), "semimarkov_sim.cfg", "n = 2000").to_string_lossy().into_owned();
    let surface = tmp.path().join("surface");
    let listed = run_ok(&["surface", "-c", &cfg, "-o", surface.to_str().unwrap()]);
    assert_eq!(listed.lines().filter(|l| l.contains("slice_")).count(), 6);
    let truth = read(&surface, "surface_truth.csv");
    let row = truth.lines().find(|l| l.starts_with("2->3,5,2,")).unwrap();
    assert!(row.contains(",11.0,5.0,"));

    let slice = tmp.path().join("slice");
    let listed = run_ok(&["slice", "-c", &cfg, "-o", slice.to_str().unwrap()]);
    assert_eq!(listed.lines().filter(|l| l.contains("slice_")).count(), 6);
    let s = read(&slice, "slice_2_3_d5.csv");
    assert!(s.starts_with("transition,d,t,u,fitted,truth,exposure\n"));
}

#[test]
fn runtime_failures_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let cfg = configs().join("markov_sim.cfg");
    let o = msoe(&["simulate", "-c", cfg.to_str().unwrap(), "-o", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
