use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn stereokit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stereokit"))
        .args(args)
        .env("STEREOKIT_THREADS", "1")
        .output()
        .expect("spawn stereokit")
}

fn ok(args: &[&str]) -> String {
    let out = stereokit(args);
    assert!(
        out.status.success(),
        "stereokit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sample_ids(root: &Path) -> Vec<String> {
    fs::read_to_string(root.join("manifest.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect()
}

fn gen(root: &Path, seed: &str, count: &str) {
    ok(&["gen-data", "--seed", seed, "--count", count, "--out", s(root)]);
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_and_usage_errors() {
    assert!(stereokit(&["--help"]).status.success());
    assert!(stereokit(&["train", "--help"]).status.success());
    assert_eq!(stereokit(&["--no-such-flag"]).status.code(), Some(2));
    assert_eq!(stereokit(&["bench", "--variants", "huge"]).status.code(), Some(2));
    assert_eq!(stereokit(&["eval"]).status.code(), Some(2));
}

#[test]
fn gen_data_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    gen(a.path(), "7", "3");
    gen(b.path(), "7", "3");
    gen(c.path(), "8", "3");
    assert_eq!(tree(a.path()), tree(b.path()));
    assert_ne!(tree(a.path()), tree(c.path()));
    let ids = sample_ids(a.path());
    assert_eq!(ids.len(), 3);
    for id in &ids {
        for f in ["left.ppm", "right.ppm", "disp_left.pgm16", "disp_right.pgm16", "lidar_left.pgm16"] {
            assert!(a.path().join(id).join(f).is_file(), "{id}/{f}");
        }
    }
}

#[test]
fn gen_data_zero_count_writes_empty_manifest() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "0", "0");
    assert!(sample_ids(d.path()).is_empty());
    let out = tempfile::tempdir().unwrap();
    let r = stereokit(&["train", "--data", s(d.path()), "--out", s(out.path()), "--steps", "1"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no samples"));
}

#[test]
fn gen_data_rejects_oversized_disparity() {
    let d = tempfile::tempdir().unwrap();
    let r = stereokit(&["gen-data", "--count", "1", "--width", "64", "--max-disparity", "40", "--out", s(d.path())]);
    assert!(!r.status.success());
}

#[test]
fn train_infer_eval_round_trip() {
    let data = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    gen(data.path(), "1", "2");
    ok(&[
        "train",
        "--data",
        s(data.path()),
        "--out",
        s(run.path()),
        "--steps",
        "3",
        "--features",
        "4",
        "--max-disparity",
        "16",
    ]);
    let log = fs::read_to_string(run.path().join("train.log")).unwrap();
    let rows: Vec<_> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 4, "header plus one row per step:\n{log}");
    let ckpt = run.path().join("checkpoint.sdnn");
    assert!(ckpt.is_file());

    let resumed = tempfile::tempdir().unwrap();
    ok(&[
        "train",
        "--data",
        s(data.path()),
        "--out",
        s(resumed.path()),
        "--steps",
        "1",
        "--resume",
        s(&ckpt),
    ]);

    let id = &sample_ids(data.path())[0];
    let sample = data.path().join(id);
    let est = tempfile::tempdir().unwrap();
    fs::create_dir(est.path().join(id)).unwrap();
    let disp = est.path().join(id).join("disp_left.pgm16");
    ok(&[
        "infer",
        "--checkpoint",
        s(&ckpt),
        "--left",
        s(&sample.join("left.ppm")),
        "--right",
        s(&sample.join("right.ppm")),
        "--out-disparity",
        s(&disp),
        "--out-right",
        s(&est.path().join("right.pgm16")),
        "--colorize",
        "0",
        "12",
    ]);
    assert!(disp.is_file());
    assert!(est.path().join("right.pgm16").is_file());
    let color = fs::read(disp.with_extension("ppm")).unwrap();
    assert!(color.starts_with(b"P6"));

    let csv = ok(&[
        "eval",
        "--est-dir",
        s(est.path()),
        "--gt-dir",
        s(data.path()),
        "--gt-name",
        "disp_left.pgm16",
    ]);
    assert!(csv.lines().any(|l| l.starts_with("all,")), "{csv}");
}

#[test]
fn infer_rejects_bad_colorize_range() {
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("missing");
    let r = stereokit(&[
        "infer",
        "--checkpoint",
        s(&missing),
        "--left",
        s(&missing),
        "--right",
        s(&missing),
        "--out-disparity",
        s(&d.path().join("o.pgm16")),
        "--colorize",
        "5",
        "1",
    ]);
    assert!(!r.status.success());
}

#[test]
fn eval_of_ground_truth_against_itself_is_zero() {
    let d = tempfile::tempdir().unwrap();
    gen(d.path(), "3", "2");
    for rule in ["or", "and"] {
        let csv = ok(&[
            "eval",
            "--est-dir",
            s(d.path()),
            "--gt-dir",
            s(d.path()),
            "--gt-name",
            "disp_left.pgm16",
            "--rule",
            rule,
        ]);
        let all = csv.lines().find(|l| l.starts_with("all,")).expect("summary row");
        let f: Vec<&str> = all.split(',').collect();
        assert_eq!(f[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(f[2].parse::<f64>().unwrap(), 0.0);
        assert_eq!(f[4], "0");
    }
}

#[test]
fn eval_with_no_estimates_fails() {
    let gt = tempfile::tempdir().unwrap();
    let est = tempfile::tempdir().unwrap();
    gen(gt.path(), "3", "1");
    let r = stereokit(&["eval", "--est-dir", s(est.path()), "--gt-dir", s(gt.path())]);
    assert_eq!(r.status.code(), Some(1));
}

#[test]
fn bench_reports_each_variant() {
    let csv = ok(&[
        "bench",
        "--variants",
        "tiny,small",
        "--height",
        "32",
        "--width",
        "64",
        "--max-disparity",
        "8",
        "--features",
        "4",
        "--repeat",
        "1",
    ]);
    let rows: Vec<_> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2, "{csv}");
    assert!(rows[0].starts_with("tiny,") && rows[0].ends_with(",ok"));
    assert!(rows[1].starts_with("small,"));
}

#[test]
fn bench_reports_out_of_memory() {
    let csv = ok(&[
        "bench",
        "--variants",
        "baseline",
        "--height",
        "64",
        "--width",
        "128",
        "--max-disparity",
        "32",
        "--repeat",
        "1",
        "--memory-limit-mb",
        "1",
    ]);
    assert!(csv.contains("OOM"), "{csv}");
}

#[test]
fn gradcheck_passes_and_detects_fault() {
    let out = ok(&["gradcheck", "--seeds", "1"]);
    assert!(out.lines().skip(1).all(|l| l.ends_with(",pass")), "{out}");
    let r = stereokit(&["gradcheck", "--seeds", "1", "--inject-fault", "elu-backward"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stdout).contains("FAIL"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("gen.conf");
    fs::write(&cfg, "# synthetic set\ncount = 2\nseed = 5\nscene = fronto_planes\n").unwrap();
    let a = d.path().join("a");
    ok(&["gen-data", "--config", s(&cfg), "--out", s(&a)]);
    let ids = sample_ids(&a);
    assert_eq!(ids.len(), 2);
    assert!(ids.iter().all(|id| id.starts_with("fronto_planes_")));

    let b = d.path().join("b");
    ok(&["--config", s(&cfg), "gen-data", "--count", "1", "--out", s(&b)]);
    assert_eq!(sample_ids(&b).len(), 1);

    fs::write(&cfg, "count 2\n").unwrap();
    assert_eq!(stereokit(&["gen-data", "--config", s(&cfg), "--out", s(&a)]).status.code(), Some(2));
}
