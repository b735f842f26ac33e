//! Framing and message schema of the backend protocol.
//!
//! Every message is a 4-byte big-endian length followed by that many bytes of
//! UTF-8 JSON. The JSON object carries a `kind` tag and a request `id` that the
//! response echoes. Binary payloads (frames, masks, trajectories) travel as
//! [`Tensor`]s: base64 little-endian data with an explicit dtype and shape.

use std::io::{self, Read, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{SegmenterCapabilities, TrackerCapabilities};
use crate::error::{Error, Result};
use crate::mask::BinaryMask;
use crate::model::{Frame, Label, LabeledPoint, ObjectId, TrajectoryBundle};

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest accepted message body.
pub const MAX_FRAME_LEN: usize = 256 << 20;

/// Reads one length-prefixed message body. Returns `Ok(None)` on a clean end of
/// stream before the length prefix.
pub fn read_frame<R: Read + ?Sized>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len_buf = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len_buf[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::transport("stream ended inside a length prefix")),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(Error::transport(e.to_string())),
        }
    }
    let len = u32::from_be_bytes(len_buf) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::transport(format!("message of {len} bytes exceeds the limit")));
    }
    let mut body = Vec::new();
    r.take(len as u64)
        .read_to_end(&mut body)
        .map_err(|e| Error::transport(e.to_string()))?;
    if body.len() != len {
        return Err(Error::transport(format!(
            "stream ended after {} of {} body bytes",
            body.len(),
            len
        )));
    }
    Ok(Some(body))
}

pub fn write_frame<W: Write + ?Sized>(w: &mut W, body: &[u8]) -> Result<()> {
    if body.len() > MAX_FRAME_LEN {
        return Err(Error::transport("message too large"));
    }
    let len = (body.len() as u32).to_be_bytes();
    w.write_all(&len)
        .and_then(|_| w.write_all(body))
        .and_then(|_| w.flush())
        .map_err(|e| Error::transport(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    U8,
    F32,
}

impl DType {
    fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub dtype: DType,
    pub shape: Vec<usize>,
    /// Base64 of the little-endian element bytes.
    pub data: String,
}

impl Tensor {
    pub fn from_u8(shape: Vec<usize>, bytes: &[u8]) -> Self {
        Self {
            dtype: DType::U8,
            shape,
            data: B64.encode(bytes),
        }
    }

    pub fn from_f32(shape: Vec<usize>, values: &[f32]) -> Self {
        let mut bytes = Vec::with_capacity(values.len() * 4);
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        Self {
            dtype: DType::F32,
            shape,
            data: B64.encode(bytes),
        }
    }

    fn bytes(&self, expect: DType) -> Result<Vec<u8>> {
        if self.dtype != expect {
            return Err(Error::protocol(format!(
                "expected {:?} tensor, got {:?}",
                expect, self.dtype
            )));
        }
        let bytes = B64
            .decode(&self.data)
            .map_err(|e| Error::protocol(format!("bad base64 tensor data: {e}")))?;
        let elems = self
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::protocol("tensor shape overflows"))?;
        if elems.checked_mul(expect.size()) != Some(bytes.len()) {
            return Err(Error::protocol(format!(
                "tensor of shape {:?} has {} bytes",
                self.shape,
                bytes.len()
            )));
        }
        Ok(bytes)
    }

    pub fn to_u8(&self) -> Result<Vec<u8>> {
        self.bytes(DType::U8)
    }

    pub fn to_f32(&self) -> Result<Vec<f32>> {
        Ok(self
            .bytes(DType::F32)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFrame {
    pub index: usize,
    /// `[height, width, 3]` u8.
    pub pixels: Tensor,
}

impl WireFrame {
    pub fn encode(f: &Frame) -> Self {
        Self {
            index: f.index(),
            pixels: Tensor::from_u8(
                vec![f.height() as usize, f.width() as usize, 3],
                f.pixels(),
            ),
        }
    }

    pub fn decode(&self) -> Result<Frame> {
        let [h, w, c] = self.pixels.shape[..] else {
            return Err(Error::protocol("frame tensor must have rank 3"));
        };
        if c != 3 {
            return Err(Error::protocol("frame tensor must have 3 channels"));
        }
        let (w, h) = (dim(w)?, dim(h)?);
        Frame::new(self.index, w, h, self.pixels.to_u8()?)
            .map_err(|e| Error::protocol(e.to_string()))
    }
}

fn dim(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::protocol("dimension out of range"))
}

pub fn encode_mask(m: &BinaryMask) -> Tensor {
    Tensor::from_u8(vec![m.height() as usize, m.width() as usize], &m.to_bytes())
}

pub fn decode_mask(t: &Tensor) -> Result<BinaryMask> {
    let [h, w] = t.shape[..] else {
        return Err(Error::protocol("mask tensor must have rank 2"));
    };
    BinaryMask::from_bytes(dim(w)?, dim(h)?, &t.to_u8()?).map_err(|e| Error::protocol(e.to_string()))
}

/// Every message exchanged on a backend connection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    Hello {
        id: u64,
        version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tracker: Option<TrackerCapabilities>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        segmenter: Option<SegmenterCapabilities>,
    },
    TrackRequest {
        id: u64,
        queries: Vec<LabeledPoint>,
        frames: Vec<WireFrame>,
    },
    TrackResponse {
        id: u64,
        start_frame: usize,
        /// `[frames, points, 2]` f32.
        points: Tensor,
        /// `[frames, points]` f32.
        occlusion: Tensor,
        labels: Vec<Label>,
        objects: Vec<ObjectId>,
    },
    SegmentRequest {
        id: u64,
        frame: WireFrame,
        points: Vec<LabeledPoint>,
        #[serde(default)]
        prior: Option<u64>,
    },
    SegmentResponse {
        id: u64,
        mask: Tensor,
        #[serde(default)]
        prior: Option<u64>,
    },
    ProposeRequest {
        id: u64,
        frame: WireFrame,
        max_proposals: usize,
    },
    ProposeResponse {
        id: u64,
        masks: Vec<Tensor>,
    },
    Error {
        #[serde(default)]
        id: Option<u64>,
        code: String,
        message: String,
    },
}

impl Message {
    pub fn id(&self) -> Option<u64> {
        match self {
            Message::Hello { id, .. }
            | Message::TrackRequest { id, .. }
            | Message::TrackResponse { id, .. }
            | Message::SegmentRequest { id, .. }
            | Message::SegmentResponse { id, .. }
            | Message::ProposeRequest { id, .. }
            | Message::ProposeResponse { id, .. } => Some(*id),
            Message::Error { id, .. } => *id,
        }
    }

    pub fn error(id: Option<u64>, err: &Error) -> Self {
        let message = match err {
            Error::EmptyMask => String::new(),
            Error::InvalidInput(m)
            | Error::UnsupportedCapability(m)
            | Error::Transport(m)
            | Error::Protocol(m)
            | Error::InvalidDataset(m)
            | Error::NotFound(m)
            | Error::Precondition(m) => m.clone(),
            other => other.to_string(),
        };
        Message::Error {
            id,
            code: err.code().to_string(),
            message,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("messages always serialize")
    }

    /// Parses a message body. On failure the error carries the request id when
    /// one could be recovered, so the peer can still be answered.
    pub fn parse(body: &[u8]) -> std::result::Result<Message, (Option<u64>, Error)> {
        let value: serde_json::Value = serde_json::from_slice(body)
            .map_err(|e| (None, Error::protocol(format!("malformed JSON: {e}"))))?;
        let id = value.get("id").and_then(|v| v.as_u64());
        let kind = value.get("kind").and_then(|v| v.as_str()).map(str::to_owned);
        match kind.as_deref() {
            None => return Err((id, Error::protocol("message has no kind"))),
            Some(
                "hello" | "track_request" | "track_response" | "segment_request"
                | "segment_response" | "propose_request" | "propose_response" | "error",
            ) => {}
            Some(k) => return Err((id, Error::protocol(format!("unknown message kind {k:?}")))),
        }
        serde_json::from_value(value).map_err(|e| (id, Error::protocol(format!("bad message: {e}"))))
    }
}

pub fn encode_bundle(id: u64, b: &TrajectoryBundle) -> Message {
    let (t, n) = (b.num_frames(), b.num_points());
    let pts: Vec<f32> = b.points.iter().flatten().flat_map(|p| p.iter().copied()).collect();
    let occ: Vec<f32> = b.occlusion.iter().flatten().copied().collect();
    Message::TrackResponse {
        id,
        start_frame: b.start_frame,
        points: Tensor::from_f32(vec![t, n, 2], &pts),
        occlusion: Tensor::from_f32(vec![t, n], &occ),
        labels: b.labels.clone(),
        objects: b.objects.clone(),
    }
}

pub fn decode_bundle(
    start_frame: usize,
    points: &Tensor,
    occlusion: &Tensor,
    labels: Vec<Label>,
    objects: Vec<ObjectId>,
) -> Result<TrajectoryBundle> {
    let [t, n, two] = points.shape[..] else {
        return Err(Error::protocol("points tensor must have rank 3"));
    };
    if two != 2 || occlusion.shape != [t, n] || labels.len() != n || objects.len() != n {
        return Err(Error::protocol("trajectory tensors have inconsistent shapes"));
    }
    let p = points.to_f32()?;
    let o = occlusion.to_f32()?;
    let bundle = TrajectoryBundle {
        start_frame,
        points: (0..t)
            .map(|ti| (0..n).map(|i| [p[(ti * n + i) * 2], p[(ti * n + i) * 2 + 1]]).collect())
            .collect(),
        occlusion: (0..t).map(|ti| o[ti * n..(ti + 1) * n].to_vec()).collect(),
        labels,
        objects,
    };
    bundle.validate()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_roundtrip_through_bytes() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{\"a\":1}").unwrap();
        assert_eq!(&buf[..4], &[0, 0, 0, 7]);
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap().unwrap(), b"{\"a\":1}");
        assert!(read_frame(&mut r).unwrap().is_none());
    }

    #[test]
    fn truncated_and_oversized_frames_are_transport_errors() {
        let mut r: &[u8] = &[0, 0, 0, 9, b'{'];
        assert!(matches!(read_frame(&mut r), Err(Error::Transport(_))));
        let mut r: &[u8] = &[0, 0];
        assert!(matches!(read_frame(&mut r), Err(Error::Transport(_))));
        let mut r: &[u8] = &[0xff, 0xff, 0xff, 0xff];
        assert!(matches!(read_frame(&mut r), Err(Error::Transport(_))));
    }

    #[test]
    fn unknown_kind_keeps_the_id() {
        let err = Message::parse(br#"{"kind":"dance","id":7}"#).unwrap_err();
        assert_eq!(err.0, Some(7));
        assert!(matches!(err.1, Error::Protocol(_)));
    }

    #[test]
    fn tensor_shape_is_checked() {
        let t = Tensor::from_f32(vec![2, 2], &[1.0, 2.0, 3.0]);
        assert!(t.to_f32().is_err());
        let t = Tensor::from_u8(vec![usize::MAX, 3], &[1]);
        assert!(t.to_u8().is_err());
    }

    #[test]
    fn bundle_roundtrip_is_bit_exact() {
        let b = TrajectoryBundle {
            start_frame: 3,
            points: vec![vec![[0.1, 1e-7], [3.5, f32::MAX]], vec![[2.25, -0.0], [7.0, 9.0]]],
            occlusion: vec![vec![0.0, 0.0], vec![1.0, 0.3]],
            labels: vec![Label::Positive, Label::Negative],
            objects: vec![ObjectId(1), ObjectId(1)],
        };
        let Message::TrackResponse { start_frame, points, occlusion, labels, objects, .. } =
            encode_bundle(1, &b)
        else {
            unreachable!()
        };
        let back = decode_bundle(start_frame, &points, &occlusion, labels, objects).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.points[1][0][1].to_bits(), (-0.0f32).to_bits());
    }
}
