//! Runs the HTTP service on a synthetic dataset. Pass a port to listen there
//! (default 8080); the session and dataset directories are temporary.
//!
//! ```text
//! cargo run --example serve -- 8080
//! curl -X POST localhost:8080/sessions -H 'content-type: application/json' -d '{"video":"demo"}'
//! ```

use std::sync::Arc;

use annotkit::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec};
use annotkit::service::{serve, AppState, ServiceConfig};

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let port = std::env::args().nth(1).map(|p| p.parse()).transpose()?.unwrap_or(8080);
    let dir = tempfile::tempdir()?;
    let spec = SceneSpec::new("demo", 128, 96, 30)
        .with_shape(ShapeSpec::ellipse(1, [220, 60, 40], [20.0, 25.0], [10.0, 8.0]).moving([3.0, 0.5]))
        .with_shape(ShapeSpec::rectangle(2, [40, 200, 90], [110.0, 70.0], [9.0, 7.0]).moving([-3.0, 0.0]));
    generate_synthetic_video(&spec)?.dataset.write(&dir.path().join("data"))?;

    let cfg = ServiceConfig {
        port,
        dataset_root: dir.path().join("data"),
        session_dir: Some(dir.path().join("sessions")),
        export_root: dir.path().join("exports"),
        ..ServiceConfig::default()
    };
    println!("dataset root {} holds video \"demo\"", cfg.dataset_root.display());
    serve(Arc::new(AppState::new(cfg))).await?;
    Ok(())
}
