mod common;

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use annotkit::backend::Polarity;
use annotkit::dataset::VideoDataset;
use annotkit::metrics::read_report;
use annotkit::session::{create_session, save_session, BackendRegistry, ExportManifest};
use annotkit::training::{read_checkpoint, CheckpointManifest};

fn run(args: &[&str]) -> Output {
    Command::new(common::bin()).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_then_evaluate_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scene.toml");
    std::fs::write(&spec, common::three_object_scene("case_07", 5).to_toml()).unwrap();
    let data = dir.path().join("data");
    let out = run(&["synth", "--spec", s(&spec), "--out", s(&data)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let video = VideoDataset::load(&data.join("case_07")).unwrap();
    assert_eq!((video.frame_count(), video.ground_truth().len()), (5, 5));

    // Ground truth merged to binary is a perfect prediction.
    let pred = dir.path().join("pred").join("case_07");
    std::fs::create_dir_all(&pred).unwrap();
    for (i, labels) in video.ground_truth() {
        annotkit::dataset::merge_to_binary(labels, None).save_png(&pred.join(format!("{i:05}.png"))).unwrap();
    }
    let csv = dir.path().join("report.csv");
    let plot = dir.path().join("report.png");
    let out = run(&[
        "evaluate",
        "--pred",
        s(&dir.path().join("pred")),
        "--gt",
        s(&data),
        "--out",
        s(&csv),
        "--plot",
        s(&plot),
        "--empty",
        "skip",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rows = read_report(&csv).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].iou_mean, rows[0].iou_std, rows[0].pac_mean), (1.0, 0.0, 1.0));
    assert!(image::open(&plot).is_ok());

    // Restricting to class 2 makes the full-foreground prediction over-segment.
    let out = run(&["evaluate", "--pred", s(&dir.path().join("pred")), "--gt", s(&data), "--out", s(&csv), "--classes", "2"]);
    assert!(out.status.success());
    assert!(read_report(&csv).unwrap()[0].iou_mean < 1.0);
}

#[test]
fn split_from_an_id_file() {
    let dir = tempfile::tempdir().unwrap();
    let ids = dir.path().join("ids.txt");
    let list: Vec<String> = (0..10).map(|i| format!("case_{i}")).collect();
    std::fs::write(&ids, format!("# cases\n{}\n", list.join("\n"))).unwrap();
    let out_file = dir.path().join("split.toml");
    let out = run(&["split", "--ids", s(&ids), "--fraction", "0.7", "--seed", "3", "--out", s(&out_file)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table: toml::Table = toml::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert_eq!(table["seed"].as_integer(), Some(3));
    assert_eq!(table["train"].as_array().unwrap().len(), 7);
    assert_eq!(table["test"].as_array().unwrap().len(), 3);
}

#[test]
fn train_ref_writes_checkpoint_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("scene.toml");
    let scene = annotkit::dataset::SceneSpec::new("tiny", 20, 16, 6)
        .with_shape(annotkit::dataset::ShapeSpec::ellipse(1, [200, 50, 50], [8.0, 8.0], [4.0, 3.0]));
    std::fs::write(&spec, scene.to_toml()).unwrap();
    let cfg = dir.path().join("train.toml");
    std::fs::write(&cfg, "learning_rate = 0.01\nwarmup_frames = 1\n").unwrap();
    let ckpt = dir.path().join("out").join("toy.ckpt");
    std::fs::create_dir_all(ckpt.parent().unwrap()).unwrap();
    let out = run(&["train-ref", "--config", s(&cfg), "--scene", s(&spec), "--max-steps", "5", "--out", s(&ckpt)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let params = read_checkpoint(&ckpt).unwrap();
    assert_eq!(params.groups.len(), 3);
    let manifest = CheckpointManifest::read(&ckpt.with_extension("ckpt.toml")).unwrap();
    assert_eq!(manifest.metrics.optimizer_steps, 5);
    assert_eq!(manifest.config.learning_rate, 0.01);
    assert_eq!(manifest.frozen, ["image_encoder"]);
}

#[test]
fn export_propagates_a_saved_session() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::three_object_fixture(4);
    let video_dir = fx.dataset.write(dir.path()).unwrap();
    let mut session = create_session(&video_dir, "reference", &BackendRegistry::with_reference()).unwrap();
    for k in 0..3 {
        let id = session.add_object(0, k as u32 + 1, common::CLASS_NAMES[k]).unwrap();
        let (x, y) = fx.interior_point(0, k).unwrap();
        session.add_point(id, 0, x, y, Polarity::Positive).unwrap();
    }
    let file = dir.path().join("session.json");
    save_session(&session, &file).unwrap();

    let out_dir = dir.path().join("masks");
    let out = run(&["export", "--session", s(&file), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[invalid_state]"), "{}", stderr(&out));

    let out = run(&["export", "--session", s(&file), "--out", s(&out_dir), "--propagate", "--no-merged"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = ExportManifest::read(&out_dir).unwrap();
    assert_eq!(manifest.entries.len(), 12);
    assert_eq!(manifest.merged().count(), 0);
    for e in &manifest.entries {
        let mask = annotkit::mask::BinaryMask::load_png(&manifest.path_of(e)).unwrap();
        assert_eq!(mask, fx.shape_mask(e.frame, e.object_id.unwrap() as usize - 1));
    }
}

#[test]
fn usage_and_runtime_errors_have_distinct_exit_codes() {
    let out = run(&["split", "--n", "5", "--nope"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["split", "--n", "5", "--fraction", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error[invalid_fraction]"), "{}", stderr(&out));
    let out = run(&["synth", "--spec", "/definitely/missing.toml", "--out", "/tmp"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("error[not_found]"), "{}", stderr(&out));
    for sub in ["evaluate", "split", "synth", "train-ref", "serve", "export"] {
        assert!(run(&[sub, "--help"]).status.success(), "{sub} --help");
    }
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut text = String::new();
    stream.read_to_string(&mut text).ok()?;
    Some(text)
}

#[test]
fn serve_answers_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = Command::new(common::bin())
        .args(["serve", "--port", &port.to_string()])
        .env("ANNOTKIT_DATASET_ROOT", dir.path())
        .env("ANNOTKIT_EXPORT_ROOT", dir.path().join("exports"))
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let reply = loop {
        if let Some(r) = http_get(port, "/jobs/missing") {
            break r;
        }
        assert!(Instant::now() < deadline, "server never came up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().ok();
    child.wait().ok();
    assert!(reply.starts_with("HTTP/1.1 404"), "{reply}");
    assert!(reply.contains("unknown_job"));
}
