//! Engine side of the wire protocol.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};

use super::wire::{self, decode_bundle, decode_mask, Message, WireFrame, PROTOCOL_VERSION};
use super::{
    check_bundle, SegmenterBackend, SegmenterCapabilities, Segmentation, TrackerBackend,
    TrackerCapabilities,
};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Frame, LabeledPoint, PriorHandle, TrajectoryBundle};

/// A framed, strictly alternating request/response channel to one backend
/// session.
pub struct Connection {
    reader: Box<dyn Read + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    next_id: u64,
    tracker: Option<TrackerCapabilities>,
    segmenter: Option<SegmenterCapabilities>,
}

impl Connection {
    /// Wraps an already open byte stream and performs the hello handshake.
    pub fn from_io(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
    ) -> Result<Self> {
        let mut c = Self {
            reader: Box::new(BufReader::new(reader)),
            writer: Box::new(BufWriter::new(writer)),
            child: None,
            next_id: 0,
            tracker: None,
            segmenter: None,
        };
        c.handshake()?;
        Ok(c)
    }

    /// Opens `tcp://host:port`, `unix:path` or `exec:command line`.
    pub fn open(address: &str) -> Result<Self> {
        if let Some(hp) = address.strip_prefix("tcp://") {
            let s = TcpStream::connect(hp).map_err(|e| Error::transport(format!("{hp}: {e}")))?;
            s.set_nodelay(true).ok();
            let r = s.try_clone().map_err(|e| Error::transport(e.to_string()))?;
            return Self::from_io(r, s);
        }
        #[cfg(unix)]
        if let Some(path) = address.strip_prefix("unix:") {
            let s = std::os::unix::net::UnixStream::connect(path)
                .map_err(|e| Error::transport(format!("{path}: {e}")))?;
            let r = s.try_clone().map_err(|e| Error::transport(e.to_string()))?;
            return Self::from_io(r, s);
        }
        if let Some(cmd) = address.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace();
            let prog = parts
                .next()
                .ok_or_else(|| Error::invalid("exec: address needs a command"))?;
            let mut child = Command::new(prog)
                .args(parts)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| Error::transport(format!("{prog}: {e}")))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let mut c = Self {
                reader: Box::new(BufReader::new(stdout)),
                writer: Box::new(BufWriter::new(stdin)),
                child: Some(child),
                next_id: 0,
                tracker: None,
                segmenter: None,
            };
            c.handshake()?;
            return Ok(c);
        }
        Err(Error::invalid(format!("unsupported backend address {address:?}")))
    }

    fn handshake(&mut self) -> Result<()> {
        let id = self.fresh_id();
        let reply = self.call(Message::Hello {
            id,
            version: PROTOCOL_VERSION,
            tracker: None,
            segmenter: None,
        })?;
        match reply {
            Message::Hello {
                version,
                tracker,
                segmenter,
                ..
            } => {
                if version != PROTOCOL_VERSION {
                    return Err(Error::protocol(format!(
                        "backend speaks protocol {version}, expected {PROTOCOL_VERSION}"
                    )));
                }
                self.tracker = tracker;
                self.segmenter = segmenter;
                Ok(())
            }
            other => Err(unexpected("hello", &other)),
        }
    }

    pub fn tracker_capabilities(&self) -> Option<TrackerCapabilities> {
        self.tracker
    }

    pub fn segmenter_capabilities(&self) -> Option<SegmenterCapabilities> {
        self.segmenter
    }

    fn fresh_id(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    /// Sends one request and waits for the response carrying the same id. Error
    /// messages from the backend are turned back into [`Error`]s.
    fn call(&mut self, request: Message) -> Result<Message> {
        let id = request.id();
        wire::write_frame(&mut self.writer, &request.to_bytes())?;
        let body = wire::read_frame(&mut self.reader)?
            .ok_or_else(|| Error::transport("backend closed the connection"))?;
        let reply = Message::parse(&body).map_err(|(_, e)| e)?;
        if let Message::Error { code, message, .. } = reply {
            return Err(Error::from_code(&code, message));
        }
        if reply.id() != id {
            return Err(Error::protocol(format!(
                "response id {:?} does not match request id {:?}",
                reply.id(),
                id
            )));
        }
        Ok(reply)
    }

    pub fn track(&mut self, queries: &[LabeledPoint], frames: &[Frame]) -> Result<TrajectoryBundle> {
        let id = self.fresh_id();
        let reply = self.call(Message::TrackRequest {
            id,
            queries: queries.to_vec(),
            frames: frames.iter().map(WireFrame::encode).collect(),
        })?;
        let Message::TrackResponse {
            start_frame,
            points,
            occlusion,
            labels,
            objects,
            ..
        } = reply
        else {
            return Err(unexpected("track_response", &reply));
        };
        let b = decode_bundle(start_frame, &points, &occlusion, labels, objects)?;
        check_bundle(&b, queries, frames)?;
        Ok(b)
    }

    pub fn segment(
        &mut self,
        frame: &Frame,
        points: &[LabeledPoint],
        prior: Option<PriorHandle>,
    ) -> Result<Segmentation> {
        let id = self.fresh_id();
        let reply = self.call(Message::SegmentRequest {
            id,
            frame: WireFrame::encode(frame),
            points: points.to_vec(),
            prior: prior.map(|p| p.0),
        })?;
        let Message::SegmentResponse { mask, prior, .. } = reply else {
            return Err(unexpected("segment_response", &reply));
        };
        let mask = decode_mask(&mask)?;
        if mask.width() != frame.width() || mask.height() != frame.height() {
            return Err(Error::protocol("segmenter returned a mask of the wrong size"));
        }
        Ok(Segmentation {
            mask,
            prior: prior.map(PriorHandle),
        })
    }

    pub fn propose_masks(&mut self, frame: &Frame, max_proposals: usize) -> Result<Vec<BinaryMask>> {
        let id = self.fresh_id();
        let reply = self.call(Message::ProposeRequest {
            id,
            frame: WireFrame::encode(frame),
            max_proposals,
        })?;
        let Message::ProposeResponse { masks, .. } = reply else {
            return Err(unexpected("propose_response", &reply));
        };
        if masks.len() > max_proposals {
            return Err(Error::protocol("backend returned too many proposals"));
        }
        masks.iter().map(decode_mask).collect()
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(mut child) = self.child.take() {
            // Closing stdin ends the sidecar's session loop.
            self.writer = Box::new(std::io::sink());
            let _ = child.wait();
        }
    }
}

fn unexpected(wanted: &str, got: &Message) -> Error {
    let kind = serde_json::to_value(got)
        .ok()
        .and_then(|v| v.get("kind").and_then(|k| k.as_str()).map(str::to_owned))
        .unwrap_or_default();
    Error::protocol(format!("expected {wanted}, got {kind}"))
}

pub struct RemoteTracker {
    conn: Connection,
    caps: TrackerCapabilities,
}

impl RemoteTracker {
    pub fn new(conn: Connection) -> Result<Self> {
        let caps = conn
            .tracker_capabilities()
            .ok_or_else(|| Error::UnsupportedCapability("backend is not a tracker".into()))?;
        Ok(Self { conn, caps })
    }
}

impl TrackerBackend for RemoteTracker {
    fn capabilities(&self) -> TrackerCapabilities {
        self.caps
    }

    fn track(&mut self, queries: &[LabeledPoint], frames: &[Frame]) -> Result<TrajectoryBundle> {
        self.conn.track(queries, frames)
    }
}

pub struct RemoteSegmenter {
    conn: Connection,
    caps: SegmenterCapabilities,
}

impl RemoteSegmenter {
    pub fn new(conn: Connection) -> Result<Self> {
        let caps = conn
            .segmenter_capabilities()
            .ok_or_else(|| Error::UnsupportedCapability("backend is not a segmenter".into()))?;
        Ok(Self { conn, caps })
    }
}

impl SegmenterBackend for RemoteSegmenter {
    fn capabilities(&self) -> SegmenterCapabilities {
        self.caps
    }

    fn segment(
        &mut self,
        frame: &Frame,
        points: &[LabeledPoint],
        prior: Option<PriorHandle>,
    ) -> Result<Segmentation> {
        self.conn.segment(frame, points, prior)
    }

    fn propose_masks(&mut self, frame: &Frame, max_proposals: usize) -> Result<Vec<BinaryMask>> {
        if !self.caps.proposes_masks {
            return Err(Error::UnsupportedCapability("mask proposals".into()));
        }
        self.conn.propose_masks(frame, max_proposals)
    }
}

pub fn connect_tracker(address: &str) -> Result<RemoteTracker> {
    RemoteTracker::new(Connection::open(address)?)
}

pub fn connect_segmenter(address: &str) -> Result<RemoteSegmenter> {
    RemoteSegmenter::new(Connection::open(address)?)
}
