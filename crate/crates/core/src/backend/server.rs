//! Backend side of the wire protocol: serves in-process backends to remote
//! engines, one session per connection.

use std::io::{BufReader, BufWriter, Read, Write};
use std::sync::Arc;
use std::thread;

use super::wire::{self, encode_bundle, encode_mask, Message, PROTOCOL_VERSION};
use super::{SegmenterBackend, TrackerBackend};
use crate::error::{Error, Result};
use crate::model::PriorHandle;

/// The backends one connection talks to.
#[derive(Default)]
pub struct Session {
    pub tracker: Option<Box<dyn TrackerBackend>>,
    pub segmenter: Option<Box<dyn SegmenterBackend>>,
}

type Factory = dyn Fn() -> Result<Session> + Send + Sync;

/// Creates a fresh [`Session`] for every accepted connection, so prior handles
/// never leak between connections.
#[derive(Clone)]
pub struct BackendServer {
    factory: Arc<Factory>,
}

impl BackendServer {
    pub fn new(factory: impl Fn() -> Result<Session> + Send + Sync + 'static) -> Self {
        Self {
            factory: Arc::new(factory),
        }
    }

    /// Serves one connection until the peer closes it. Malformed messages are
    /// answered with error messages; a broken framing layer ends the session
    /// with a transport error.
    pub fn serve<R: Read, W: Write>(&self, reader: R, writer: W) -> Result<()> {
        let mut session = (self.factory)()?;
        let mut reader = BufReader::new(reader);
        let mut writer = BufWriter::new(writer);
        while let Some(body) = wire::read_frame(&mut reader)? {
            let reply = match Message::parse(&body) {
                Ok(msg) => {
                    let id = msg.id();
                    handle(&mut session, msg).unwrap_or_else(|e| Message::error(id, &e))
                }
                Err((id, e)) => Message::error(id, &e),
            };
            wire::write_frame(&mut writer, &reply.to_bytes())?;
        }
        Ok(())
    }

    /// Accepts TCP connections forever, one thread per connection.
    pub fn serve_tcp(&self, listener: std::net::TcpListener) -> Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            stream.set_nodelay(true).ok();
            let server = self.clone();
            thread::spawn(move || {
                let r = stream.try_clone()?;
                if let Err(e) = server.serve(r, stream) {
                    log::warn!("backend session ended: {e}");
                }
                Ok::<_, std::io::Error>(())
            });
        }
        Ok(())
    }

    #[cfg(unix)]
    pub fn serve_unix(&self, listener: std::os::unix::net::UnixListener) -> Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let server = self.clone();
            thread::spawn(move || {
                let r = stream.try_clone()?;
                if let Err(e) = server.serve(r, stream) {
                    log::warn!("backend session ended: {e}");
                }
                Ok::<_, std::io::Error>(())
            });
        }
        Ok(())
    }

    /// Serves a single session over an in-memory socket pair and returns the
    /// engine's end. The session thread exits when the returned connection is
    /// dropped.
    #[cfg(unix)]
    pub fn loopback(&self) -> Result<super::Connection> {
        let (ours, theirs) = std::os::unix::net::UnixStream::pair()?;
        let server = self.clone();
        thread::spawn(move || {
            let r = theirs.try_clone()?;
            if let Err(e) = server.serve(r, theirs) {
                log::debug!("loopback session ended: {e}");
            }
            Ok::<_, std::io::Error>(())
        });
        let r = ours.try_clone()?;
        super::Connection::from_io(r, ours)
    }
}

fn handle(session: &mut Session, msg: Message) -> Result<Message> {
    match msg {
        Message::Hello { id, version, .. } => {
            if version != PROTOCOL_VERSION {
                return Err(Error::protocol(format!(
                    "unsupported protocol version {version}"
                )));
            }
            Ok(Message::Hello {
                id,
                version: PROTOCOL_VERSION,
                tracker: session.tracker.as_ref().map(|t| t.capabilities()),
                segmenter: session.segmenter.as_ref().map(|s| s.capabilities()),
            })
        }
        Message::TrackRequest { id, queries, frames } => {
            let tracker = session
                .tracker
                .as_mut()
                .ok_or_else(|| Error::UnsupportedCapability("tracking".into()))?;
            let frames = frames.iter().map(|f| f.decode()).collect::<Result<Vec<_>>>()?;
            super::check_contiguous(&frames)?;
            if queries.is_empty() {
                return Err(Error::invalid("at least one query point is required"));
            }
            let bundle = tracker.track(&queries, &frames)?;
            Ok(encode_bundle(id, &bundle))
        }
        Message::SegmentRequest {
            id,
            frame,
            points,
            prior,
        } => {
            let seg = session
                .segmenter
                .as_mut()
                .ok_or_else(|| Error::UnsupportedCapability("segmentation".into()))?;
            let frame = frame.decode()?;
            let out = seg.segment(&frame, &points, prior.map(PriorHandle))?;
            Ok(Message::SegmentResponse {
                id,
                mask: encode_mask(&out.mask),
                prior: out.prior.map(|p| p.0),
            })
        }
        Message::ProposeRequest {
            id,
            frame,
            max_proposals,
        } => {
            let seg = session
                .segmenter
                .as_mut()
                .ok_or_else(|| Error::UnsupportedCapability("mask proposals".into()))?;
            if max_proposals == 0 {
                return Err(Error::invalid("max_proposals must be at least 1"));
            }
            let frame = frame.decode()?;
            let masks = seg.propose_masks(&frame, max_proposals)?;
            Ok(Message::ProposeResponse {
                id,
                masks: masks.iter().map(encode_mask).collect(),
            })
        }
        Message::TrackResponse { .. }
        | Message::SegmentResponse { .. }
        | Message::ProposeResponse { .. }
        | Message::Error { .. } => Err(Error::protocol("backends only accept requests")),
    }
}

