use std::path::Path;
use std::process::{Command, Output};

use ccc_core::dataio::{load_camera_metadata, load_manifest, read_pfm, read_pfm_gray, write_manifest, ManifestEntry};
use ccc_core::estimator::{angular_error, estimate_illuminant, load_checkpoint};
use ccc_core::eval::{compute_stats, gray_world};

const SMALL_MODEL: [&str; 10] =
    ["--bins", "16", "--widths", "2,2,2,2", "--cfe-bins", "32", "--cfe-widths", "2,2,2,2", "--hidden", "4"];

fn ccc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccc")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ccc(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn train_args<'a>(out: &'a str, seed: &'a str, mode: &'a str) -> Vec<&'a str> {
    let mut a = vec![
        "train", "--manifest", "d/manifest.txt", "--out", out, "--epochs", "2", "--batch", "4", "--seed", seed,
        "--alpha-mode", mode, "--aug-count", "4",
    ];
    a.extend(SMALL_MODEL);
    a
}

fn dataset(dir: &Path) {
    ok(dir, &["synth", "--cameras", "2", "--scenes", "4", "--seed", "3", "--out", "d"]);
}

#[test]
fn train_is_deterministic_and_writes_readable_files() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    ok(dir, &train_args("a.ckpt", "7", "uniform"));
    ok(dir, &train_args("b.ckpt", "7", "uniform"));
    let a = std::fs::read(dir.join("a.ckpt")).unwrap();
    assert_eq!(a, std::fs::read(dir.join("b.ckpt")).unwrap());
    assert_eq!(
        std::fs::read(dir.join("a.loss.csv")).unwrap(),
        std::fs::read(dir.join("b.loss.csv")).unwrap()
    );
    ok(dir, &train_args("c.ckpt", "8", "uniform"));
    assert_ne!(a, std::fs::read(dir.join("c.ckpt")).unwrap());

    let model = load_checkpoint(dir.join("a.ckpt")).unwrap();
    assert_eq!(model.config.backbone.bins, 16);
    let csv = std::fs::read_to_string(dir.join("a.loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,loss"));
    for (i, line) in lines.enumerate() {
        let (e, l) = line.split_once(',').unwrap();
        assert_eq!(e.parse::<usize>().unwrap(), i);
        assert_eq!(l.split_once('.').unwrap().1.len(), 6);
        assert!(l.parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn infer_heatmap_and_fingerprint_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    ok(dir, &train_args("m.ckpt", "1", "none"));
    let img = "d/images/cam01_0002.pfm";
    let cam = "d/cameras/cam01.txt";
    let out = ok(dir, &["infer", "--image", img, "--camera", cam, "--model", "m.ckpt", "--heatmap", "h.pfm"]);
    let (w, h, p) = read_pfm_gray(dir.join("h.pfm")).unwrap();
    assert_eq!((w, h), (16, 16));
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-5);

    let model = load_checkpoint(dir.join("m.ckpt")).unwrap();
    let cal = load_camera_metadata(dir.join(cam)).unwrap();
    let est = estimate_illuminant(&read_pfm(dir.join(img)).unwrap(), &cal, &model).unwrap();
    let want = format!(
        "rgb {:.6} {:.6} {:.6}\nuv {:.6} {:.6}\n",
        est.rgb.r, est.rgb.g, est.rgb.b, est.uv.u, est.uv.v
    );
    assert_eq!(out, want);
    for (a, b) in p.iter().zip(&est.heatmap.data) {
        assert_eq!(*a, *b as f32 as f64);
    }

    let out = ok(dir, &["heatmap", "--image", img, "--camera", cam, "--model", "m.ckpt", "--out", "h2.pfm"]);
    assert!(out.contains(&format!("centroid u {:.6} v {:.6}", est.uv.u, est.uv.v)));
    assert_eq!(std::fs::read(dir.join("h.pfm")).unwrap(), std::fs::read(dir.join("h2.pfm")).unwrap());

    let out = ok(dir, &["fingerprint", "--camera", cam, "--model", "m.ckpt", "--csv", "f.csv"]);
    let fp = model.fingerprint(&cal).unwrap();
    let printed: Vec<f64> = out.split_whitespace().map(|x| x.parse().unwrap()).collect();
    assert_eq!(printed.len(), 8);
    for (a, b) in printed.iter().zip(fp.values()) {
        assert!((a - b).abs() <= 5e-7);
    }
    let csv = std::fs::read_to_string(dir.join("f.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("iu,iv,u,v,weight"));
    assert_eq!(csv.lines().count(), 1 + 32 * 32);
    let mass: f64 = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-3);
}

#[test]
fn eval_matches_library_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    ok(dir, &train_args("m.ckpt", "2", "one"));
    let out = ok(dir, &[
        "eval", "--manifest", "d/manifest.txt", "--model", "m.ckpt", "--baseline", "gray-world", "--csv", "s.csv",
        "--errors", "e.csv",
    ]);
    assert!(out.starts_with("method"));
    assert_eq!(out.lines().count(), 3);

    let m = load_manifest(dir.join("d/manifest.txt")).unwrap();
    let model = load_checkpoint(dir.join("m.ckpt")).unwrap();
    let (mut errs, mut gw) = (Vec::new(), Vec::new());
    for (i, e) in m.entries.iter().enumerate() {
        let img = m.load_image(i).unwrap();
        let est = estimate_illuminant(&img, m.calibration(&e.camera_id).unwrap(), &model).unwrap();
        errs.push(angular_error(est.rgb, e.gt).unwrap());
        gw.push(angular_error(gray_world(&img).unwrap(), e.gt).unwrap());
    }
    let report = ccc_cli::evaluate(&dir.join("d/manifest.txt"), Some(&dir.join("m.ckpt")), true).unwrap();
    assert_eq!(report.methods[0].1, errs);
    assert_eq!(report.methods[0].2, compute_stats(&errs).unwrap());
    assert_eq!(report.methods[1].2, compute_stats(&gw).unwrap());
    let csv = std::fs::read_to_string(dir.join("s.csv")).unwrap();
    assert_eq!(csv, ccc_cli::format_stats_csv(&report.methods));
    assert!(csv.starts_with("method,mean,median,trimean,best25,worst25\nmodel,"));
    let per_image = std::fs::read_to_string(dir.join("e.csv")).unwrap();
    assert_eq!(per_image.lines().count(), 1 + 2 * m.len());
}

#[test]
fn gray_world_eval_of_one_image_reports_its_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    let full = load_manifest(dir.join("d/manifest.txt")).unwrap();
    let e = full.entries[5].clone();
    let one = dir.join("one.txt");
    write_manifest(
        &one,
        &[ManifestEntry { image_path: e.image_path.clone(), gt: e.gt, camera_id: e.camera_id.clone() }],
        &full.camera_files,
    )
    .unwrap();
    ok(dir, &["eval", "--manifest", "one.txt", "--baseline", "gray-world", "--csv", "s.csv"]);
    let err = angular_error(gray_world(&full.load_image(5).unwrap()).unwrap(), e.gt).unwrap();
    let csv = std::fs::read_to_string(dir.join("s.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let want = format!("{err:.6}");
    assert_eq!(row, format!("gray-world,{want},{want},{want},{want},{want}"));
}

#[test]
fn augment_writes_a_loadable_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    let args = ["augment", "--manifest", "d/manifest.txt", "--seed", "4", "--alpha", "uniform", "--count", "5"];
    ok(dir, &[&args[..], &["--out", "a"]].concat());
    ok(dir, &[&args[..], &["--out", "b"]].concat());
    let a = load_manifest(dir.join("a/manifest.txt")).unwrap();
    assert_eq!(a.len(), 5);
    for i in 0..a.len() {
        a.load_image(i).unwrap();
        a.calibration(&a.entries[i].camera_id).unwrap();
    }
    for f in ["manifest.txt", "provenance.csv", "images/aug00003.pfm", "cameras/aug00003.txt"] {
        assert_eq!(std::fs::read(dir.join("a").join(f)).unwrap(), std::fs::read(dir.join("b").join(f)).unwrap());
    }
    let prov = std::fs::read_to_string(dir.join("a/provenance.csv")).unwrap();
    assert_eq!(prov.lines().count(), 6);
}

#[test]
fn failures_map_to_exit_codes_with_one_line_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    dataset(dir);
    ok(dir, &train_args("m.ckpt", "1", "none"));
    std::fs::write(dir.join("bad.pfm"), b"PF\n2 2\n-1.0\n").unwrap();
    std::fs::write(dir.join("dark.pfm"), [&b"PF\n1 1\n-1.0\n"[..], &[0u8; 12]].concat()).unwrap();
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["frobnicate"], 1),
        (vec!["synth", "--cameras", "2"], 1),
        (vec!["train", "--manifest", "d/manifest.txt", "--out", "x", "--alpha-mode", "half"], 1),
        (vec!["train", "--manifest", "d/manifest.txt", "--out", "x", "--widths", "1,2"], 1),
        (vec!["synth", "--cameras", "0", "--scenes", "1", "--out", "z"], 1),
        (vec!["eval", "--manifest", "d/manifest.txt"], 1),
        (vec!["infer", "--image", "missing.pfm", "--camera", "d/cameras/cam00.txt", "--model", "m.ckpt"], 2),
        (vec!["infer", "--image", "bad.pfm", "--camera", "d/cameras/cam00.txt", "--model", "m.ckpt"], 2),
        (vec!["infer", "--image", "dark.pfm", "--camera", "d/cameras/cam00.txt", "--model", "m.ckpt"], 2),
        (vec!["eval", "--manifest", "d/manifest.txt", "--model", "d/manifest.txt"], 2),
        ([train_args("n.ckpt", "1", "none"), vec!["--lr", "1e300"]].concat(), 3),
    ];
    for (args, code) in cases {
        let out = ccc(dir, &args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("ccc: "));
    }
    assert!(ccc(dir, &["--help"]).status.success());
}
