//! One check per acceptance criterion. Prints a PASS/FAIL line for each
//! and exits non-zero when any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, ensure, Context, Result};
use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

use annotkit::backend::{Polarity, ReferenceBackend, ThrottledBackend};
use annotkit::dataset::{generate_synthetic_video, split_videos, SceneSpec, ShapeSpec};
use annotkit::mask::{BinaryMask, Rle};
use annotkit::metrics::{self, read_report, Confusion, ThroughputRecord, AGGREGATE_ROW_ID, REPORT_HEADER};
use annotkit::service::{router, AppState, ServiceConfig};
use annotkit::session::{
    export_masks, load_session_with_video, propagate_session, save_session, BackendRegistry, ExportManifest,
    SessionFile,
};
use annotkit::training::{
    build_samples, group_values, lr_at, train_reference, LossWeights, ParamPartition, QuadraticBatch, QuadraticToy,
    ToySegmenter, TrainState, TrainableModel, TrainingConfig,
};

use common::{clicked_session, random_mask, three_object_fixture};

fn metric_oracle() -> Result<String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let pred = random_mask(&mut rng, 64);
        let density: f64 = rng.gen();
        let gt = BinaryMask::from_fn(pred.width(), pred.height(), |_, _| rng.gen_bool(density));
        let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
        for y in 0..pred.height() {
            for x in 0..pred.width() {
                match (pred.get(x, y), gt.get(x, y)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
        }
        let c = Confusion::count(&pred, &gt)?;
        ensure!(
            (c.true_positive, c.false_positive, c.false_negative, c.true_negative) == (tp, fp, fn_, tn),
            "pair {i}: counts differ"
        );
        let iou_oracle = if tp + fp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fp + fn_) as f64 };
        let pac_oracle = (tp + tn) as f64 / (tp + fp + fn_ + tn) as f64;
        let di = (metrics::iou(&pred, &gt)? - iou_oracle).abs();
        let dp = (metrics::pac(&pred, &gt)? - pac_oracle).abs();
        worst = worst.max(di).max(dp);
        ensure!(di <= 1e-12 && dp <= 1e-12, "pair {i}: iou diff {di}, pac diff {dp}");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!("1000 pairs, counts exact, max diff {worst:e}, {secs:.2} s"))
}

fn split_reproduction() -> Result<String> {
    let ids: Vec<String> = (1..=30).map(|i| format!("video_{i:02}")).collect();
    let a = split_videos(&ids, 0.8, 42)?;
    let b = split_videos(&ids, 0.8, 42)?;
    ensure!(a == b, "same seed gave different splits");
    ensure!((a.train_ids.len(), a.test_ids.len()) == (24, 6), "{} / {}", a.train_ids.len(), a.test_ids.len());
    ensure!(a.train_ids.is_disjoint(&a.test_ids), "train and test overlap");
    let all: BTreeSet<String> = a.train_ids.union(&a.test_ids).cloned().collect();
    ensure!(all == ids.iter().cloned().collect(), "split lost ids");

    let run = || -> Result<Value> {
        let out = Command::new(common::bin()).args(["split", "--n", "30", "--fraction", "0.8", "--seed", "42"]).output()?;
        ensure!(out.status.success(), "split exited {:?}", out.status);
        let table: toml::Table = toml::from_str(std::str::from_utf8(&out.stdout)?)?;
        Ok(serde_json::to_value(table)?)
    };
    let (first, second) = (run()?, run()?);
    ensure!(first == second, "CLI output differs between runs");
    let len = |k: &str| first[k].as_array().map_or(0, Vec::len);
    ensure!((len("train"), len("test")) == (24, 6), "CLI gave {} / {}", len("train"), len("test"));
    let cli_test: BTreeSet<String> =
        first["test"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    ensure!(cli_test == a.test_ids, "CLI and library disagree");
    Ok(format!("24 train / 6 test, deterministic, test = {:?}", a.test_ids))
}

fn end_to_end() -> Result<String> {
    let start = Instant::now();
    let fx = three_object_fixture(30);
    let mut s = clicked_session(&fx);
    propagate_session(&mut s)?;
    let dir = tempfile::tempdir()?;
    let manifest = export_masks(&s, dir.path(), true)?;
    let reread = ExportManifest::read(dir.path())?;
    ensure!(reread.entries == manifest.entries, "manifest on disk differs");
    ensure!(manifest.per_object().count() == 90, "{} per-object files", manifest.per_object().count());
    ensure!(manifest.merged().count() == 30, "{} merged files", manifest.merged().count());

    let mut min_iou = f64::INFINITY;
    let mut unions: BTreeMap<usize, BinaryMask> = BTreeMap::new();
    for e in manifest.per_object() {
        let mask = BinaryMask::load_png(&manifest.path_of(e))?;
        let shape = e.object_id.context("per-object row without object id")? as usize - 1;
        let iou = metrics::iou(&mask, &fx.shape_mask(e.frame, shape))?;
        min_iou = min_iou.min(iou);
        ensure!(iou >= 0.95, "frame {} object {}: IoU {iou:.4}", e.frame, shape + 1);
        unions
            .entry(e.frame)
            .or_insert_with(|| BinaryMask::new(mask.width(), mask.height()))
            .union_with(&mask)?;
    }
    for e in manifest.merged() {
        let merged = BinaryMask::load_png(&manifest.path_of(e))?;
        ensure!(merged == unions[&e.frame], "frame {}: merged is not the OR of objects", e.frame);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.2} s");
    Ok(format!("min IoU {min_iou:.4} over 90 masks, merged = OR on 30 frames, {secs:.2} s"))
}

fn training_contract() -> Result<String> {
    let scene = SceneSpec::new("toy", 24, 18, 8)
        .with_background([20, 20, 30])
        .with_shape(ShapeSpec::ellipse(1, [220, 60, 40], [7.0, 8.0], [4.0, 3.5]).moving([0.4, 0.1]))
        .with_shape(ShapeSpec::rectangle(2, [40, 200, 90], [17.0, 10.0], [3.0, 4.0]).moving([-0.3, 0.0]));
    let data = [generate_synthetic_video(&scene)?.dataset];
    let mut notes = Vec::new();

    // (a)
    let mut model = ToySegmenter::new(3);
    let before = group_values(&model);
    let cfg = TrainingConfig { learning_rate: 1e-2, max_steps: 200, warmup_frames: 2, ..TrainingConfig::default() };
    let dir = tempfile::tempdir()?;
    let out = train_reference(&mut model, &data, &cfg, &dir.path().join("ck.bin"))?;
    ensure!(out.state.optimizer_step == 200, "ran {} steps", out.state.optimizer_step);
    let after = group_values(&model);
    for name in &cfg.partition.frozen {
        let same = before[name].iter().zip(&after[name]).all(|(x, y)| x.to_bits() == y.to_bits());
        ensure!(same, "(a) frozen group {name} changed");
    }
    for name in &cfg.partition.trainable {
        ensure!(before[name] != after[name], "(a) trainable group {name} never moved");
    }
    notes.push("(a) frozen bit-identical after 200 steps");

    // (b)
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = TrainingConfig::default();
    let batch = QuadraticBatch { rows: vec![vec![1.0, -0.5]], targets: vec![0.25] };
    for _ in 0..25 {
        let micro: u64 = rng.gen_range(0..300);
        let mut toy = QuadraticToy::new(vec![0.2, 0.1]);
        let mut state = TrainState::new(&toy, &cfg);
        for _ in 0..micro {
            let (_, g) = toy.loss_and_grad(&batch);
            state.accumulate_and_step(&mut toy, &g, &cfg)?;
        }
        ensure!(state.optimizer_step == micro / 4, "(b) {micro} micro steps gave {}", state.optimizer_step);
    }
    notes.push("(b) optimizer_step = floor(micro/4) on 25 runs");

    // (c)
    ensure!(lr_at(0, &cfg) == 1e-4, "(c) lr(0) = {}", lr_at(0, &cfg));
    for step in 1..5000u64 {
        let changed = lr_at(step, &cfg) != lr_at(step - 1, &cfg);
        ensure!(changed == (step % 500 == 0), "(c) lr changes at step {step}: {changed}");
        ensure!(lr_at(step, &cfg) == 1e-4 * 0.5f64.powi((step / 500) as i32), "(c) lr({step})");
    }
    notes.push("(c) breakpoints only at multiples of 500");

    // (d)
    let rows: Vec<Vec<f64>> = (0..16).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let targets: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let full = QuadraticBatch { rows: rows.clone(), targets: targets.clone() };
    let cfg = TrainingConfig { learning_rate: 0.05, ..TrainingConfig::default() };
    let one = TrainingConfig { accumulation_steps: 1, ..cfg.clone() };
    let mut whole = QuadraticToy::new(vec![0.1, -0.2, 0.3, 0.0]);
    let mut pieces = whole.clone();
    let (mut ws, mut ps) = (TrainState::new(&whole, &one), TrainState::new(&pieces, &cfg));
    for _ in 0..20 {
        let (_, g) = whole.loss_and_grad(&full);
        ws.accumulate_and_step(&mut whole, &g, &one)?;
        for c in 0..4 {
            let micro = QuadraticBatch { rows: rows[4 * c..4 * c + 4].to_vec(), targets: targets[4 * c..4 * c + 4].to_vec() };
            let (_, g) = pieces.loss_and_grad(&micro);
            ps.accumulate_and_step(&mut pieces, &g, &cfg)?;
        }
    }
    let diff = whole.weights().iter().zip(pieces.weights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure!(diff <= 1e-10, "(d) max parameter difference {diff:e}");
    notes.push("(d) accumulation = full batch");

    // (e)
    let cfg = TrainingConfig { warmup_frames: 0, ..TrainingConfig::default() };
    let samples = build_samples(&data, &cfg)?;
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for (seed, sample) in samples.iter().take(3).enumerate() {
        let mut model = ToySegmenter::new(seed as u64);
        let all = ParamPartition::train_all(&model);
        annotkit::training::partition_parameters(&mut model, &all)?;
        let lw = LossWeights::default();
        let (_, analytic) = model.loss_and_grad(sample, lw);
        let h = 1e-5;
        let mut probe = model.clone();
        for (gi, group) in model.params().groups.iter().enumerate() {
            let bufs = &analytic.groups[&group.name];
            for (ti, t) in group.tensors.iter().enumerate() {
                for k in 0..t.data.len() {
                    let orig = t.data[k];
                    probe.params_mut().groups[gi].tensors[ti].data[k] = orig + h;
                    let up = probe.loss(sample, lw);
                    probe.params_mut().groups[gi].tensors[ti].data[k] = orig - h;
                    let down = probe.loss(sample, lw);
                    probe.params_mut().groups[gi].tensors[ti].data[k] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let a = bufs[ti][k];
                    let err = (a - numeric).abs();
                    let rel = err / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
                    checked += 1;
                    if a.abs() > 1e-6 {
                        worst = worst.max(rel);
                    }
                    ensure!(rel <= 1e-4 || err < 1e-9, "(e) {}/{}[{k}]: analytic {a} numeric {numeric}", group.name, t.name);
                }
            }
        }
    }
    notes.push("(e) gradients match finite differences");
    Ok(format!("{}; {checked} entries, worst relative error {worst:.1e}", notes.join(", ")))
}

fn report_format() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    let mut ids = Vec::new();
    for k in 0..6 {
        let id = format!("test_{k:02}");
        let shift = k as f64;
        let spec = common::three_object_scene(&id, 12);
        let spec = SceneSpec {
            shapes: spec
                .shapes
                .into_iter()
                .map(|mut s| {
                    s.velocity[0] += 0.3 * shift - 0.75;
                    s
                })
                .collect(),
            ..spec
        };
        let fx = generate_synthetic_video(&spec)?;
        fx.dataset.write(&gt)?;
        // Odd videos leave the third shape unannotated so scores differ.
        let mut s = annotkit::session::Session::new(
            Arc::new(fx.dataset.clone()),
            "reference",
            Arc::new(ReferenceBackend::default()),
        );
        let annotated = if k % 2 == 1 { 2 } else { 3 };
        for shape in 0..annotated {
            let oid = s.add_object(0, shape as u32 + 1, common::CLASS_NAMES[shape])?;
            let (x, y) = fx.interior_point(0, shape).unwrap();
            s.add_point(oid, 0, x, y, Polarity::Positive)?;
        }
        propagate_session(&mut s)?;
        export_masks(&s, &pred.join(&id), true)?;
        for e in ExportManifest::read(&pred.join(&id))?.per_object() {
            std::fs::remove_file(pred.join(&id).join(&e.file))?;
        }
        ids.push(id);
    }
    let csv = dir.path().join("report.csv");
    let out = Command::new(common::bin())
        .arg("evaluate")
        .args(["--pred".as_ref(), pred.as_os_str(), "--gt".as_ref(), gt.as_os_str(), "--out".as_ref(), csv.as_os_str()])
        .output()?;
    ensure!(out.status.success(), "evaluate failed: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv)?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split(',').collect();
    ensure!(header == REPORT_HEADER, "header {header:?}");
    let rows = read_report(&csv)?;
    ensure!(rows.len() == 7, "{} rows", rows.len());
    let got: Vec<&str> = rows[..6].iter().map(|r| r.video_id.as_str()).collect();
    ensure!(got == ids, "row ids {got:?}");
    ensure!(rows[6].video_id == AGGREGATE_ROW_ID, "last row {}", rows[6].video_id);
    for r in &rows[..6] {
        ensure!(r.frames == 12, "{}: {} frames", r.video_id, r.frames);
        for v in [r.iou_mean, r.pac_mean] {
            ensure!((0.0..=1.0).contains(&v), "{}: mean {v} outside [0, 1]", r.video_id);
        }
        ensure!(r.iou_std >= 0.0 && r.pac_std >= 0.0, "{}: negative std", r.video_id);
    }
    let mean_iou = rows[..6].iter().map(|r| r.iou_mean).sum::<f64>() / 6.0;
    ensure!((rows[6].iou_mean - mean_iou).abs() <= 1e-6, "aggregate IoU {} vs {mean_iou}", rows[6].iou_mean);
    Ok(format!("6 videos + {AGGREGATE_ROW_ID} row, header {}", REPORT_HEADER.join(",")))
}

fn throughput() -> Result<String> {
    let scene = SceneSpec::new("tp", 48, 36, 60)
        .with_background([0, 0, 0])
        .with_shape(ShapeSpec::ellipse(1, [250, 250, 250], [12.0, 18.0], [5.0, 5.0]).moving([0.3, 0.0]));
    let fx = generate_synthetic_video(&scene)?;
    let backend = Arc::new(ThrottledBackend::new(ReferenceBackend::default(), Duration::from_millis(10)));
    let mut s = annotkit::session::Session::new(Arc::new(fx.dataset.clone()), "throttled", backend);
    let id = s.add_object(0, 1, "Iris")?;
    let (x, y) = fx.interior_point(0, 0).unwrap();
    s.add_point(id, 0, x, y, Polarity::Positive)?;
    let wall = Instant::now();
    let result = propagate_session(&mut s)?;
    let wall_fps = 60.0 / wall.elapsed().as_secs_f64();
    let rec = ThroughputRecord::from_durations(&result.per_frame_seconds)?;
    ensure!(rec.frames_processed == 60, "{} frames", rec.frames_processed);
    ensure!((90.0..=110.0).contains(&rec.fps), "measured {:.2} FPS", rec.fps);
    Ok(format!("{:.2} FPS reported (wall clock {wall_fps:.2})", rec.fps))
}

fn round_trips() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..1000 {
        let m = random_mask(&mut rng, 64);
        let rle = Rle::encode(&m);
        let sorted = rle.runs.windows(2).all(|w| w[0].start + w[0].len < w[1].start);
        ensure!(sorted && rle.runs.iter().all(|r| r.len > 0), "mask {i}: runs not canonical");
        ensure!(rle.decode()? == m, "mask {i}: decode differs");
        let wire: Rle = serde_json::from_str(&serde_json::to_string(&rle)?)?;
        ensure!(wire == rle, "mask {i}: JSON round trip differs");
    }

    let fx = three_object_fixture(8);
    let mut s = clicked_session(&fx);
    propagate_session(&mut s)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("session.json");
    save_session(&s, &path)?;
    let back = load_session_with_video(&path, s.video().clone(), Arc::new(ReferenceBackend::default()))?;
    ensure!(SessionFile::from_session(&back) == SessionFile::from_session(&s), "session file differs");
    ensure!(back.objects() == s.objects(), "objects differ");
    ensure!(back.propagation() == s.propagation(), "propagation differs");
    ensure!(
        (back.revision(), back.next_object_id(), back.classes()) == (s.revision(), s.next_object_id(), s.classes()),
        "counters differ"
    );

    let out = dir.path().join("export");
    let manifest = export_masks(&s, &out, true)?;
    for e in &manifest.entries {
        let p = manifest.path_of(e);
        let mask = BinaryMask::load_png(&p)?;
        if let Some(oid) = e.object_id {
            ensure!(Some(&mask) == s.object_mask(e.frame, oid), "{}: reload differs", e.file);
        }
        let again = dir.path().join("again.png");
        mask.save_png(&again)?;
        ensure!(std::fs::read(&again)? == std::fs::read(&p)?, "{}: bytes differ after re-save", e.file);
    }
    Ok(format!("1000 RLE masks, session file equal, {} PNGs bit-identical", manifest.entries.len()))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<&str>) -> Result<(StatusCode, Value)> {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))?;
    let resp = app.clone().oneshot(req).await?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await?.to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
    Ok((status, value))
}

fn expect_error(got: (StatusCode, Value), status: StatusCode, code: &str) -> Result<()> {
    ensure!(got.0 == status, "expected {status} {code}, got {} {}", got.0, got.1);
    ensure!(got.1["error"]["code"] == code, "expected code {code}, got {}", got.1);
    Ok(())
}

fn api_contract() -> Result<String> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let dir = tempfile::tempdir()?;
        let fx = three_object_fixture(20);
        fx.dataset.write(dir.path())?;
        let cfg = ServiceConfig {
            dataset_root: dir.path().to_path_buf(),
            export_root: dir.path().join("exports"),
            ..ServiceConfig::default()
        };
        let mut registry = BackendRegistry::with_reference();
        registry.register("slow", Arc::new(ThrottledBackend::new(ReferenceBackend::default(), Duration::from_millis(40))));
        let app = router(Arc::new(AppState::with_registry(cfg, registry)));

        let (st, sess) = call(&app, "POST", "/sessions", Some(r#"{"video":"fixture","backend":"slow"}"#)).await?;
        ensure!(st == StatusCode::CREATED, "create session: {st} {sess}");
        let sid = sess["session_id"].as_str().ok_or_else(|| anyhow!("no session id"))?.to_string();
        let base = format!("/sessions/{sid}");

        expect_error(call(&app, "POST", "/sessions", Some(r#"{"video":"../etc"}"#)).await?, StatusCode::UNPROCESSABLE_ENTITY, "invalid_video_path")?;
        expect_error(call(&app, "GET", "/sessions/nope", None).await?, StatusCode::NOT_FOUND, "unknown_session")?;
        let bad_json = call(&app, "POST", &format!("{base}/objects"), Some("{\"frame\":")).await?;
        ensure!(bad_json.0.is_client_error() && bad_json.1["error"]["code"] == "invalid_body", "malformed body: {bad_json:?}");
        let obj = json!({"frame": 0, "class_id": 0, "class_name": "Iris"}).to_string();
        expect_error(call(&app, "POST", &format!("{base}/objects"), Some(&obj)).await?, StatusCode::UNPROCESSABLE_ENTITY, "invalid_class_id")?;

        let mut oids = Vec::new();
        for (k, name) in common::CLASS_NAMES.iter().enumerate() {
            let body = json!({"frame": 0, "class_id": k + 1, "class_name": name}).to_string();
            let (st, v) = call(&app, "POST", &format!("{base}/objects"), Some(&body)).await?;
            ensure!(st == StatusCode::CREATED, "add object: {st} {v}");
            oids.push(v["object_id"].as_u64().unwrap());
        }
        let far = json!({"frame": 0, "x": 160, "y": 5, "polarity": "positive"}).to_string();
        expect_error(
            call(&app, "POST", &format!("{base}/objects/{}/points", oids[0]), Some(&far)).await?,
            StatusCode::UNPROCESSABLE_ENTITY,
            "point_out_of_bounds",
        )?;
        let neg = json!({"frame": 0, "x": 3, "y": 3, "polarity": "negative"}).to_string();
        expect_error(
            call(&app, "POST", &format!("{base}/objects/{}/points", oids[0]), Some(&neg)).await?,
            StatusCode::UNPROCESSABLE_ENTITY,
            "first_point_negative",
        )?;
        expect_error(
            call(&app, "POST", &format!("{base}/objects/99/points"), Some(&neg)).await?,
            StatusCode::NOT_FOUND,
            "unknown_object",
        )?;
        for (k, oid) in oids.iter().enumerate() {
            let (x, y) = fx.interior_point(0, k).unwrap();
            let body = json!({"frame": 0, "x": x, "y": y, "polarity": "positive"}).to_string();
            let (st, v) = call(&app, "POST", &format!("{base}/objects/{oid}/points"), Some(&body)).await?;
            ensure!(st == StatusCode::OK, "add point: {st} {v}");
            let rle: Rle = serde_json::from_value(v["mask"].clone())?;
            ensure!(rle.decode()? == fx.shape_mask(0, k), "point mask differs from the shape");
        }

        let (st, job) = call(&app, "POST", &format!("{base}/propagate"), None).await?;
        ensure!(st == StatusCode::ACCEPTED, "propagate: {st} {job}");
        expect_error(call(&app, "POST", &format!("{base}/propagate"), None).await?, StatusCode::CONFLICT, "busy")?;
        let jid = job["job_id"].as_str().unwrap().to_string();
        let deadline = Instant::now() + Duration::from_secs(30);
        loop {
            let (_, status) = call(&app, "GET", &format!("/jobs/{jid}"), None).await?;
            match status["state"].as_str() {
                Some("done") => break,
                Some("running") if Instant::now() < deadline => tokio::time::sleep(Duration::from_millis(20)).await,
                _ => bail!("job ended as {status}"),
            }
        }
        let (st, v) = call(&app, "POST", &format!("{base}/export"), Some(r#"{"merged":true}"#)).await?;
        ensure!(st == StatusCode::OK && v["files"].as_array().map_or(0, Vec::len) == 80, "export: {st}");
        Ok("422 point_out_of_bounds, 409 busy on second propagate, stable codes on 6 other errors".to_string())
    })
}

fn main() {
    let criteria: [(&str, fn() -> Result<String>); 8] = [
        ("metric oracle equivalence", metric_oracle),
        ("split reproduction", split_reproduction),
        ("end-to-end annotation fidelity", end_to_end),
        ("training contract suite", training_contract),
        ("report format", report_format),
        ("throughput accounting", throughput),
        ("protocol round trips", round_trips),
        ("API contract", api_contract),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(anyhow!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name}: {e:#}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
