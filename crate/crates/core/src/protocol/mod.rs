//! Engine ↔ segmenter contract.
//!
//! A segmenter owns one video sequence at a time. The engine opens the
//! sequence, then for every frame first calls [`Segmenter::propagate`] and
//! afterwards may [`Segmenter::prompt`] new or existing tracks with boxes and
//! [`Segmenter::drop_memory`] for frames that should not condition future
//! masks. A track whose memory bank becomes empty is released and no longer
//! propagated. Requests are strictly sequential.
//!
//! [`wire`] carries the same contract as newline-delimited JSON over a
//! subprocess's stdio or a TCP socket.

pub mod conformance;
pub mod wire;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, BitMask, OcclusionScore};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SegmenterError {
    #[error("no sequence is open")]
    NotOpen,
    #[error("a sequence is already open")]
    AlreadyOpen,
    #[error("unsupported protocol version {0}")]
    ProtocolVersion(u32),
    #[error("frame {got} out of order, expected {expected}")]
    OutOfOrderFrame { expected: i64, got: u32 },
    #[error("frame {0} is past the end of the sequence")]
    FrameOutOfRange(u32),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("segmenter reported: {0}")]
    Remote(String),
    #[error("transport failure: {0}")]
    Transport(String),
}

/// Static description of a sequence, sent once when it is opened.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceInfo {
    pub sequence_id: String,
    pub width: u32,
    pub height: u32,
    pub frames: u32,
}

/// One tracked mask produced by a segmenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackMask {
    pub track_id: u64,
    pub mask: BitMask,
    pub occ: OcclusionScore,
}

pub trait Segmenter {
    fn open_sequence(&mut self, info: &SequenceInfo) -> Result<(), SegmenterError>;

    /// Box-prompts `track_id` on the current frame. Registers a new track or
    /// rebases the memory of an existing one on this prompt.
    fn prompt(
        &mut self,
        frame: u32,
        track_id: u64,
        bbox: BBox,
    ) -> Result<(BitMask, OcclusionScore), SegmenterError>;

    /// Advances to `frame` (previous frame + 1) and returns one mask per
    /// active track.
    fn propagate(&mut self, frame: u32) -> Result<Vec<TrackMask>, SegmenterError>;

    /// Discards the memory entry of `track_id` at `frame`. Unknown tracks and
    /// repeated drops are ignored.
    fn drop_memory(&mut self, track_id: u64, frame: u32) -> Result<(), SegmenterError>;

    fn close_sequence(&mut self) -> Result<(), SegmenterError>;
}

impl<S: Segmenter + ?Sized> Segmenter for Box<S> {
    fn open_sequence(&mut self, info: &SequenceInfo) -> Result<(), SegmenterError> {
        (**self).open_sequence(info)
    }

    fn prompt(
        &mut self,
        frame: u32,
        track_id: u64,
        bbox: BBox,
    ) -> Result<(BitMask, OcclusionScore), SegmenterError> {
        (**self).prompt(frame, track_id, bbox)
    }

    fn propagate(&mut self, frame: u32) -> Result<Vec<TrackMask>, SegmenterError> {
        (**self).propagate(frame)
    }

    fn drop_memory(&mut self, track_id: u64, frame: u32) -> Result<(), SegmenterError> {
        (**self).drop_memory(track_id, frame)
    }

    fn close_sequence(&mut self) -> Result<(), SegmenterError> {
        (**self).close_sequence()
    }
}

/// A request line. `kind` selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Request {
    OpenSequence {
        sequence_id: String,
        protocol: u32,
        width: u32,
        height: u32,
        frames: u32,
    },
    Prompt {
        frame: u32,
        track_id: u64,
        bbox: BBox,
    },
    Propagate {
        frame: u32,
    },
    DropMemory {
        track_id: u64,
        frame: u32,
    },
    CloseSequence,
}

impl Request {
    pub fn open(info: &SequenceInfo) -> Self {
        Request::OpenSequence {
            sequence_id: info.sequence_id.clone(),
            protocol: PROTOCOL_VERSION,
            width: info.width,
            height: info.height,
            frames: info.frames,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Response {
    pub frame: u32,
    #[serde(default)]
    pub entries: Vec<TrackMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn ok(frame: u32, entries: Vec<TrackMask>) -> Self {
        Self {
            frame,
            entries,
            error: None,
        }
    }

    pub fn failure(frame: u32, error: impl Into<String>) -> Self {
        Self {
            frame,
            entries: Vec::new(),
            error: Some(error.into()),
        }
    }
}

/// Applies one request to a segmenter. The flag is true once the sequence
/// has been closed.
pub fn dispatch<S: Segmenter + ?Sized>(segmenter: &mut S, request: Request) -> (Response, bool) {
    match request {
        Request::OpenSequence {
            sequence_id,
            protocol,
            width,
            height,
            frames,
        } => {
            if protocol != PROTOCOL_VERSION {
                return (
                    Response::failure(0, SegmenterError::ProtocolVersion(protocol).to_string()),
                    false,
                );
            }
            let info = SequenceInfo {
                sequence_id,
                width,
                height,
                frames,
            };
            (reply(0, segmenter.open_sequence(&info).map(|_| Vec::new())), false)
        }
        Request::Prompt {
            frame,
            track_id,
            bbox,
        } => {
            let r = segmenter
                .prompt(frame, track_id, bbox)
                .map(|(mask, occ)| vec![TrackMask { track_id, mask, occ }]);
            (reply(frame, r), false)
        }
        Request::Propagate { frame } => (reply(frame, segmenter.propagate(frame)), false),
        Request::DropMemory { track_id, frame } => (
            reply(frame, segmenter.drop_memory(track_id, frame).map(|_| Vec::new())),
            false,
        ),
        Request::CloseSequence => {
            let r = segmenter.close_sequence().map(|_| Vec::new());
            let closed = r.is_ok();
            (reply(0, r), closed)
        }
    }
}

fn reply(frame: u32, r: Result<Vec<TrackMask>, SegmenterError>) -> Response {
    match r {
        Ok(entries) => Response::ok(frame, entries),
        Err(e) => Response::failure(frame, e.to_string()),
    }
}

/// Parses and applies one request line, producing the response line.
pub fn handle_line<S: Segmenter + ?Sized>(segmenter: &mut S, line: &str) -> (String, bool) {
    let (resp, closed) = match serde_json::from_str::<Request>(line) {
        Ok(req) => dispatch(segmenter, req),
        Err(e) => (Response::failure(0, format!("malformed request: {e}")), false),
    };
    (
        serde_json::to_string(&resp).expect("responses always serialize"),
        closed,
    )
}
