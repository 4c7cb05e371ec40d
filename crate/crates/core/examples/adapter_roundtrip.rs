//! Talking to an out-of-process segmenter over the adapter socket. The server
//! here wraps the reference backend; a real model process speaks the same
//! length-prefixed protocol.

use std::sync::Arc;
use std::time::Duration;

use annotkit::backend::adapter::{AdapterRequest, AdapterResponse, OpCode, ReferenceAdapterServer};
use annotkit::backend::{AdapterClient, ExternalBackend, Polarity, PromptPoint, ReferenceParams};
use annotkit::dataset::{generate_synthetic_video, SceneSpec, ShapeSpec, VideoDataset};
use annotkit::session::{propagate_session, Session};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let spec = SceneSpec::new("adapter_demo", 64, 48, 8)
        .with_shape(ShapeSpec::ellipse(1, [200, 90, 60], [16.0, 24.0], [7.0, 6.0]).moving([2.0, 0.0]));
    let fx = generate_synthetic_video(&spec)?;
    let video_dir = fx.dataset.write(dir.path())?;

    let socket = dir.path().join("adapter.sock");
    ReferenceAdapterServer::bind(&socket, ReferenceParams::default())?.spawn();

    // Raw protocol: handshake with the video path, then one predict call.
    let mut client = AdapterClient::connect(&socket, Duration::from_secs(5))?;
    let hello = client.call(&AdapterRequest::handshake(video_dir.to_str().unwrap()))?;
    println!("handshake -> {hello:?}");
    let (x, y) = fx.interior_point(0, 0).unwrap();
    let req = AdapterRequest::new(OpCode::PredictFrame, 0, vec![PromptPoint::positive(1, 0, x, y)]);
    println!("request is {} bytes on the wire", req.encode().len());
    match client.call(&req)? {
        AdapterResponse::Mask(rle) => println!("predict -> mask with {} px in {} runs", rle.foreground(), rle.runs.len()),
        other => println!("predict -> {other:?}"),
    }

    // The same server behind the backend trait, driving a session.
    let external = ExternalBackend::new(&socket, Duration::from_secs(5));
    let mut s = Session::new(Arc::new(VideoDataset::load(&video_dir)?), "external", Arc::new(external));
    let id = s.add_object(0, 1, "Iris")?;
    s.add_point(id, 0, x, y, Polarity::Positive)?;
    let result = propagate_session(&mut s)?;
    println!("propagated over the socket: {} masks", result.masks.len());
    Ok(())
}
