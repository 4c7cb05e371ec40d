//! Adapter wire protocol (v1) for out-of-process segmentation backends.
//!
//! Every message is a 4-byte big-endian length followed by the payload.
//! All integers are big-endian.
//!
//! Request payload:
//!
//! | field       | bytes | notes                                            |
//! |-------------|-------|--------------------------------------------------|
//! | version     | 1     | always 1                                         |
//! | op          | 1     | 0 handshake, 1 predict_frame, 2 propagate_init, 3 propagate_step |
//! | frame index | 4     |                                                  |
//! | point count | 2     |                                                  |
//! | points      | 13 ea | x(4) y(4) polarity(1: 1 = positive, 0 = negative) object_id(4) |
//! | path        | 2 + n | handshake only: UTF-8 dataset video directory     |
//!
//! Response payload: status(1). Status 0 is followed by width(4) height(4)
//! run count(4) and `start(4) length(4)` per run, row-major, runs covering
//! the TRUE pixels sorted, non-overlapping and non-adjacent. A nonzero
//! status is followed by a 2-byte length and a UTF-8 message.
//!
//! Session flow: one handshake names the video; `predict_frame` answers one
//! mask; `propagate_init` registers the object its points belong to and
//! answers the anchor mask; `propagate_step` on frame `f` answers one mask
//! per registered object, in ascending object id order, as separate
//! messages. One request is in flight per connection.

use std::collections::BTreeMap;
use std::io::{ErrorKind, Read, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::reference::{reference_propagate_step, reference_segment, ReferenceBackend, ReferenceParams};
use super::{
    check_seeds, validate_prompts, BackendCapabilities, Polarity, Progress, PromptPoint, PropagationResult,
    Seed, SegmentationBackend,
};
use crate::dataset::VideoDataset;
use crate::error::{Error, Result};
use crate::mask::{BinaryMask, Rle, Run};

pub const PROTOCOL_VERSION: u8 = 1;
const MAX_MESSAGE: u32 = 1 << 28;

pub const STATUS_OK: u8 = 0;
pub const STATUS_INVALID: u8 = 1;
pub const STATUS_UNSUPPORTED: u8 = 2;
pub const STATUS_INTERNAL: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum OpCode {
    Handshake = 0,
    PredictFrame = 1,
    PropagateInit = 2,
    PropagateStep = 3,
}

impl TryFrom<u8> for OpCode {
    type Error = u8;

    fn try_from(v: u8) -> std::result::Result<Self, u8> {
        Ok(match v {
            0 => OpCode::Handshake,
            1 => OpCode::PredictFrame,
            2 => OpCode::PropagateInit,
            3 => OpCode::PropagateStep,
            other => return Err(other),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdapterRequest {
    pub op: OpCode,
    pub frame_index: u32,
    pub points: Vec<PromptPoint>,
    pub dataset_path: Option<String>,
}

impl AdapterRequest {
    pub fn handshake(dataset_path: &str) -> Self {
        Self {
            op: OpCode::Handshake,
            frame_index: 0,
            points: Vec::new(),
            dataset_path: Some(dataset_path.to_string()),
        }
    }

    pub fn new(op: OpCode, frame_index: u32, points: Vec<PromptPoint>) -> Self {
        Self {
            op,
            frame_index,
            points,
            dataset_path: None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 13 * self.points.len());
        out.push(PROTOCOL_VERSION);
        out.push(self.op as u8);
        out.extend_from_slice(&self.frame_index.to_be_bytes());
        out.extend_from_slice(&(self.points.len() as u16).to_be_bytes());
        for p in &self.points {
            out.extend_from_slice(&p.x.to_be_bytes());
            out.extend_from_slice(&p.y.to_be_bytes());
            out.push(p.polarity.is_positive() as u8);
            out.extend_from_slice(&p.object_id.to_be_bytes());
        }
        if self.op == OpCode::Handshake {
            let path = self.dataset_path.as_deref().unwrap_or("").as_bytes();
            out.extend_from_slice(&(path.len() as u16).to_be_bytes());
            out.extend_from_slice(path);
        }
        out
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(payload);
        let version = r.u8()?;
        if version != PROTOCOL_VERSION {
            return Err(Error::Protocol(format!("unsupported protocol version {version}")));
        }
        let op = OpCode::try_from(r.u8()?).map_err(|v| Error::Protocol(format!("unknown op code {v}")))?;
        let frame_index = r.u32()?;
        let count = r.u16()?;
        let mut points = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let x = r.u32()?;
            let y = r.u32()?;
            let polarity = match r.u8()? {
                1 => Polarity::Positive,
                0 => Polarity::Negative,
                other => return Err(Error::Protocol(format!("bad polarity byte {other}"))),
            };
            let object_id = r.u32()?;
            points.push(PromptPoint {
                x,
                y,
                polarity,
                frame_index: frame_index as usize,
                object_id,
            });
        }
        let dataset_path = if op == OpCode::Handshake {
            let n = r.u16()? as usize;
            let bytes = r.take(n)?;
            Some(
                String::from_utf8(bytes.to_vec())
                    .map_err(|_| Error::Protocol("dataset path is not UTF-8".into()))?,
            )
        } else {
            None
        };
        r.finish()?;
        Ok(Self {
            op,
            frame_index,
            points,
            dataset_path,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdapterResponse {
    Mask(Rle),
    Error { status: u8, message: String },
}

impl AdapterResponse {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            AdapterResponse::Mask(rle) => {
                let mut out = Vec::with_capacity(13 + 8 * rle.runs.len());
                out.push(STATUS_OK);
                out.extend_from_slice(&rle.width.to_be_bytes());
                out.extend_from_slice(&rle.height.to_be_bytes());
                out.extend_from_slice(&(rle.runs.len() as u32).to_be_bytes());
                for run in &rle.runs {
                    out.extend_from_slice(&run.start.to_be_bytes());
                    out.extend_from_slice(&run.len.to_be_bytes());
                }
                out
            }
            AdapterResponse::Error { status, message } => {
                let msg = message.as_bytes();
                let n = msg.len().min(u16::MAX as usize);
                let mut out = vec![*status];
                out.extend_from_slice(&(n as u16).to_be_bytes());
                out.extend_from_slice(&msg[..n]);
                out
            }
        }
    }

    pub fn decode(payload: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(payload);
        let status = r.u8()?;
        if status != STATUS_OK {
            let n = r.u16()? as usize;
            let message = String::from_utf8_lossy(r.take(n)?).into_owned();
            r.finish()?;
            return Ok(AdapterResponse::Error { status, message });
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let count = r.u32()?;
        if count as usize > payload.len() / 8 {
            return Err(Error::Protocol(format!("run count {count} exceeds the payload")));
        }
        let mut runs = Vec::with_capacity(count as usize);
        for _ in 0..count {
            runs.push(Run {
                start: r.u32()?,
                len: r.u32()?,
            });
        }
        r.finish()?;
        Ok(AdapterResponse::Mask(Rle { width, height, runs }))
    }

    fn from_error(e: &Error) -> Self {
        let status = match e {
            Error::Validation { .. } => STATUS_INVALID,
            Error::Protocol(_) => STATUS_UNSUPPORTED,
            _ => STATUS_INTERNAL,
        };
        AdapterResponse::Error {
            status,
            message: e.to_string(),
        }
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Protocol(format!(
                "payload truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Protocol(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn write_message(w: &mut impl Write, payload: &[u8]) -> std::io::Result<()> {
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub fn read_message(r: &mut impl Read) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len);
    if len > MAX_MESSAGE {
        return Err(std::io::Error::new(
            ErrorKind::InvalidData,
            format!("message of {len} bytes exceeds the limit"),
        ));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn hex_preview(bytes: &[u8]) -> String {
    let shown: Vec<String> = bytes.iter().take(64).map(|b| format!("{b:02x}")).collect();
    let more = if bytes.len() > 64 { "…" } else { "" };
    format!("{}{more}", shown.join(" "))
}

/// One connection to an adapter process.
pub struct AdapterClient {
    stream: UnixStream,
    socket: PathBuf,
}

impl AdapterClient {
    pub fn connect(socket: &Path, timeout: Duration) -> Result<Self> {
        let stream = UnixStream::connect(socket)
            .map_err(|e| Error::BackendUnavailable(format!("{}: {e}", socket.display())))?;
        stream
            .set_read_timeout(Some(timeout))
            .and_then(|_| stream.set_write_timeout(Some(timeout)))
            .map_err(|e| Error::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            stream,
            socket: socket.to_path_buf(),
        })
    }

    fn io_error(&self, e: std::io::Error) -> Error {
        match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => {
                Error::BackendUnavailable(format!("{}: timed out", self.socket.display()))
            }
            ErrorKind::InvalidData => Error::Protocol(e.to_string()),
            _ => Error::BackendUnavailable(format!("{}: {e}", self.socket.display())),
        }
    }

    fn receive(&mut self) -> Result<AdapterResponse> {
        let payload = read_message(&mut self.stream).map_err(|e| self.io_error(e))?;
        AdapterResponse::decode(&payload).inspect_err(|e| {
            log::error!("malformed adapter response ({e}): {}", hex_preview(&payload));
        })
    }

    /// Sends one request and reads `replies` responses.
    pub fn call_many(&mut self, request: &AdapterRequest, replies: usize) -> Result<Vec<AdapterResponse>> {
        write_message(&mut self.stream, &request.encode()).map_err(|e| self.io_error(e))?;
        let mut out = Vec::with_capacity(replies);
        for _ in 0..replies {
            let resp = self.receive()?;
            let failed = matches!(resp, AdapterResponse::Error { .. });
            out.push(resp);
            if failed {
                break;
            }
        }
        Ok(out)
    }

    pub fn call(&mut self, request: &AdapterRequest) -> Result<AdapterResponse> {
        Ok(self.call_many(request, 1)?.remove(0))
    }

    /// Sends a request expecting mask replies, decoding each and checking its
    /// size against `dims`.
    pub fn call_masks(&mut self, request: &AdapterRequest, replies: usize, dims: (u32, u32)) -> Result<Vec<BinaryMask>> {
        self.call_many(request, replies)?
            .into_iter()
            .map(|resp| decode_mask(resp, dims))
            .collect()
    }
}

/// One request/response exchange with an adapter.
pub fn external_adapter_call(client: &mut AdapterClient, request: &AdapterRequest) -> Result<AdapterResponse> {
    client.call(request)
}

fn decode_mask(resp: AdapterResponse, dims: (u32, u32)) -> Result<BinaryMask> {
    match resp {
        AdapterResponse::Mask(rle) => {
            if (rle.width, rle.height) != dims {
                return Err(Error::Protocol(format!(
                    "adapter mask is {}x{}, frame is {}x{}",
                    rle.width, rle.height, dims.0, dims.1
                )));
            }
            rle.decode()
        }
        AdapterResponse::Error { status, message } => {
            Err(Error::Protocol(format!("adapter status {status}: {message}")))
        }
    }
}

/// Backend living in another process, reached over a Unix socket.
pub struct ExternalBackend {
    socket: PathBuf,
    timeout: Duration,
    conn: Mutex<Option<(AdapterClient, PathBuf)>>,
}

impl ExternalBackend {
    pub fn new(socket: impl Into<PathBuf>, timeout: Duration) -> Self {
        Self {
            socket: socket.into(),
            timeout,
            conn: Mutex::new(None),
        }
    }

    fn with_client<T>(&self, video: &VideoDataset, f: impl FnOnce(&mut AdapterClient) -> Result<T>) -> Result<T> {
        let source = video
            .source()
            .ok_or_else(|| Error::State("the external backend needs a video stored on disk".into()))?
            .to_path_buf();
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.as_ref().is_none_or(|(_, p)| *p != source) {
            let mut client = AdapterClient::connect(&self.socket, self.timeout)?;
            let path = source.to_string_lossy();
            client.call_masks(&AdapterRequest::handshake(&path), 1, video.resolution())?;
            *guard = Some((client, source));
        }
        let (client, _) = guard.as_mut().expect("connected above");
        let out = f(client);
        if matches!(out, Err(Error::BackendUnavailable(_) | Error::Protocol(_))) {
            // The stream may hold half a reply; start over next time.
            *guard = None;
        }
        out
    }
}

impl SegmentationBackend for ExternalBackend {
    fn capabilities(&self) -> BackendCapabilities {
        BackendCapabilities {
            name: format!("adapter:{}", self.socket.display()),
            supports_video: true,
            max_objects: None,
        }
    }

    fn predict_frame(&self, video: &VideoDataset, prompts: &[PromptPoint]) -> Result<BinaryMask> {
        let (w, h) = video.resolution();
        validate_prompts(prompts, w, h)?;
        let req = AdapterRequest::new(OpCode::PredictFrame, prompts[0].frame_index as u32, prompts.to_vec());
        self.with_client(video, |c| Ok(c.call_masks(&req, 1, (w, h))?.remove(0)))
    }

    fn propagate(
        &self,
        video: &VideoDataset,
        seeds: &BTreeMap<u32, Seed>,
        progress: Progress<'_>,
    ) -> Result<PropagationResult> {
        check_seeds(video, seeds)?;
        let dims = video.resolution();
        let start = seeds.values().map(|s| s.anchor_frame).min().expect("non-empty");
        let last = video.frame_count() - 1;
        let total = last - start + 1;
        let path = video.source().map(|p| p.to_string_lossy().into_owned()).unwrap_or_default();
        self.with_client(video, |client| {
            // A fresh handshake drops objects registered by earlier runs.
            client.call_masks(&AdapterRequest::handshake(&path), 1, dims)?;
            let mut result = PropagationResult::default();
            let mut registered: Vec<u32> = Vec::new();
            for (done, f) in (start..=last).enumerate() {
                let t0 = Instant::now();
                if !registered.is_empty() {
                    let req = AdapterRequest::new(OpCode::PropagateStep, f as u32, Vec::new());
                    let masks = client.call_masks(&req, registered.len(), dims)?;
                    for (&id, mask) in registered.iter().zip(masks) {
                        if mask.is_empty() && !result.lost.contains_key(&id) {
                            result.lost.insert(id, f);
                        }
                        let mask = if result.lost.contains_key(&id) {
                            BinaryMask::new(dims.0, dims.1)
                        } else {
                            mask
                        };
                        result.masks.insert((f, id), mask);
                    }
                }
                for (&id, seed) in seeds.iter().filter(|(_, s)| s.anchor_frame == f) {
                    let points: Vec<PromptPoint> = seed
                        .prompts
                        .iter()
                        .filter(|p| p.frame_index == f)
                        .map(|p| PromptPoint { object_id: id, ..*p })
                        .collect();
                    let req = AdapterRequest::new(OpCode::PropagateInit, f as u32, points);
                    client.call_masks(&req, 1, dims)?;
                    result.masks.insert((f, id), seed.anchor_mask.clone());
                    registered.push(id);
                    registered.sort_unstable();
                }
                progress(done + 1, total);
                result.per_frame_seconds.push(t0.elapsed().as_secs_f64());
            }
            Ok(result)
        })
    }
}

/// Adapter server backed by the reference segmenter; a stand-in for a model
/// process and a template for real adapters.
pub struct ReferenceAdapterServer {
    listener: UnixListener,
    params: ReferenceParams,
}

struct ServerTrack {
    prev: BinaryMask,
    color: [u8; 3],
    lost: bool,
}

impl ReferenceAdapterServer {
    pub fn bind(socket: &Path, params: ReferenceParams) -> Result<Self> {
        let listener = UnixListener::bind(socket).map_err(|e| Error::io(socket, e))?;
        Ok(Self { listener, params })
    }

    /// Accepts connections forever, one thread each.
    pub fn spawn(self) -> JoinHandle<()> {
        std::thread::spawn(move || {
            for stream in self.listener.incoming() {
                match stream {
                    Ok(s) => {
                        let params = self.params;
                        std::thread::spawn(move || {
                            if let Err(e) = serve_connection(s, params) {
                                log::debug!("adapter connection closed: {e}");
                            }
                        });
                    }
                    Err(e) => log::warn!("adapter accept failed: {e}"),
                }
            }
        })
    }
}

/// Serves one client until it disconnects.
pub fn serve_connection(mut stream: UnixStream, params: ReferenceParams) -> std::io::Result<()> {
    let mut video: Option<VideoDataset> = None;
    let mut tracks: BTreeMap<u32, ServerTrack> = BTreeMap::new();
    loop {
        let payload = match read_message(&mut stream) {
            Ok(p) => p,
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(()),
            Err(e) => return Err(e),
        };
        let replies = match AdapterRequest::decode(&payload) {
            Ok(req) => handle_request(&req, &mut video, &mut tracks, params),
            Err(e) => vec![AdapterResponse::from_error(&e)],
        };
        for r in replies {
            write_message(&mut stream, &r.encode())?;
        }
    }
}

fn handle_request(
    req: &AdapterRequest,
    video: &mut Option<VideoDataset>,
    tracks: &mut BTreeMap<u32, ServerTrack>,
    params: ReferenceParams,
) -> Vec<AdapterResponse> {
    let result: Result<Vec<BinaryMask>> = (|| {
        if req.op == OpCode::Handshake {
            let path = req.dataset_path.as_deref().unwrap_or("");
            let v = VideoDataset::load(Path::new(path))?;
            let (w, h) = v.resolution();
            *video = Some(v);
            tracks.clear();
            return Ok(vec![BinaryMask::new(w, h)]);
        }
        let v = video
            .as_ref()
            .ok_or_else(|| Error::Protocol("handshake required before other requests".into()))?;
        let frame_index = req.frame_index as usize;
        let frame = v.frame(frame_index)?;
        match req.op {
            OpCode::PredictFrame => Ok(vec![reference_segment(&frame, &req.points, params.tolerance)?]),
            OpCode::PropagateInit => {
                let mask = reference_segment(&frame, &req.points, params.tolerance)?;
                let seed = Seed {
                    anchor_frame: frame_index,
                    anchor_mask: mask.clone(),
                    prompts: req.points.clone(),
                };
                tracks.insert(
                    req.points[0].object_id,
                    ServerTrack {
                        color: ReferenceBackend::anchor_color(&frame, &seed),
                        lost: mask.is_empty(),
                        prev: mask.clone(),
                    },
                );
                Ok(vec![mask])
            }
            OpCode::PropagateStep => {
                if tracks.is_empty() {
                    return Err(Error::validation("no_objects", "no objects registered"));
                }
                let (w, h) = v.resolution();
                Ok(tracks
                    .values_mut()
                    .map(|t| {
                        if !t.lost {
                            t.prev = reference_propagate_step(&t.prev, &frame, t.color, params);
                            t.lost = t.prev.is_empty();
                        }
                        if t.lost {
                            BinaryMask::new(w, h)
                        } else {
                            t.prev.clone()
                        }
                    })
                    .collect())
            }
            OpCode::Handshake => unreachable!(),
        }
    })();
    match result {
        Ok(masks) => masks.iter().map(|m| AdapterResponse::Mask(m.to_rle())).collect(),
        Err(e) => vec![AdapterResponse::from_error(&e)],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_request() -> AdapterRequest {
        AdapterRequest::new(
            OpCode::PredictFrame,
            7,
            vec![PromptPoint::positive(3, 7, 10, 20), PromptPoint::negative(3, 7, 1, 2)],
        )
    }

    #[test]
    fn request_layout_is_bit_exact() {
        let bytes = sample_request().encode();
        assert_eq!(&bytes[..8], &[1, 1, 0, 0, 0, 7, 0, 2]);
        assert_eq!(&bytes[8..21], &[0, 0, 0, 10, 0, 0, 0, 20, 1, 0, 0, 0, 3]);
        assert_eq!(bytes.len(), 8 + 2 * 13);
        assert_eq!(AdapterRequest::decode(&bytes).unwrap(), sample_request());
    }

    #[test]
    fn handshake_roundtrip() {
        let req = AdapterRequest::handshake("/data/case_0001");
        assert_eq!(AdapterRequest::decode(&req.encode()).unwrap(), req);
    }

    #[test]
    fn response_layout_is_bit_exact() {
        let rle = Rle {
            width: 2,
            height: 2,
            runs: vec![Run { start: 1, len: 2 }],
        };
        let bytes = AdapterResponse::Mask(rle.clone()).encode();
        assert_eq!(
            bytes,
            vec![0, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 2]
        );
        assert_eq!(AdapterResponse::decode(&bytes).unwrap(), AdapterResponse::Mask(rle));
    }

    #[test]
    fn truncated_and_trailing_payloads_are_protocol_errors() {
        let bytes = AdapterResponse::Mask(Rle { width: 1, height: 1, runs: vec![] }).encode();
        assert!(matches!(AdapterResponse::decode(&bytes[..5]), Err(Error::Protocol(_))));
        let mut extra = bytes.clone();
        extra.push(9);
        assert!(matches!(AdapterResponse::decode(&extra), Err(Error::Protocol(_))));
        let mut bad_version = sample_request().encode();
        bad_version[0] = 2;
        assert!(AdapterRequest::decode(&bad_version).is_err());
    }

    #[test]
    fn framing_roundtrip() {
        let mut buf = Vec::new();
        write_message(&mut buf, b"hello").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 5]);
        assert_eq!(read_message(&mut &buf[..]).unwrap(), b"hello");
    }

    #[test]
    fn silent_adapter_times_out_as_unavailable() {
        let dir = tempfile::tempdir().unwrap();
        let sock = dir.path().join("silent.sock");
        let listener = UnixListener::bind(&sock).unwrap();
        let _t = std::thread::spawn(move || {
            let (_s, _) = listener.accept().unwrap();
            std::thread::sleep(Duration::from_secs(2));
        });
        let mut c = AdapterClient::connect(&sock, Duration::from_millis(100)).unwrap();
        let err = c.call(&sample_request()).unwrap_err();
        assert_eq!(err.code(), "backend_unavailable", "{err}");
    }

    #[test]
    fn garbage_reply_is_protocol_error() {
        let dir = tempfile::tempdir().unwrap();
        let sock = dir.path().join("garbage.sock");
        let listener = UnixListener::bind(&sock).unwrap();
        let _t = std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let _ = read_message(&mut s);
            s.write_all(&[0, 0, 0, 3, 0, 9, 9]).unwrap();
        });
        let mut c = AdapterClient::connect(&sock, Duration::from_secs(2)).unwrap();
        assert!(matches!(c.call(&sample_request()), Err(Error::Protocol(_))));
    }

    #[test]
    fn missing_socket_is_unavailable() {
        let err = AdapterClient::connect(Path::new("/nonexistent/adapter.sock"), Duration::from_millis(50))
            .err()
            .unwrap();
        assert_eq!(err.code(), "backend_unavailable");
    }
}
