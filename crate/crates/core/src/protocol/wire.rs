//! Newline-delimited JSON binding of the segmenter contract.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use log::debug;

use super::{handle_line, Request, Response, SequenceInfo, Segmenter, SegmenterError, TrackMask};
use crate::geometry::{BBox, BitMask, OcclusionScore};

/// Sends one request line and returns the matching response line.
pub trait LineTransport {
    fn exchange(&mut self, line: &str) -> Result<String, SegmenterError>;
}

impl<T: LineTransport + ?Sized> LineTransport for Box<T> {
    fn exchange(&mut self, line: &str) -> Result<String, SegmenterError> {
        (**self).exchange(line)
    }
}

fn transport_err(e: std::io::Error) -> SegmenterError {
    SegmenterError::Transport(e.to_string())
}

fn exchange_over(
    reader: &mut impl BufRead,
    writer: &mut impl Write,
    line: &str,
) -> Result<String, SegmenterError> {
    writer.write_all(line.as_bytes()).map_err(transport_err)?;
    writer.write_all(b"\n").map_err(transport_err)?;
    writer.flush().map_err(transport_err)?;
    let mut resp = String::new();
    let n = reader.read_line(&mut resp).map_err(transport_err)?;
    if n == 0 {
        return Err(SegmenterError::Transport("segmenter closed the stream".into()));
    }
    Ok(resp.trim_end_matches(['\r', '\n']).to_string())
}

/// Talks to a child process over its standard input and output.
pub struct StdioTransport {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl StdioTransport {
    /// Runs `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self, SegmenterError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(transport_err)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }
}

impl LineTransport for StdioTransport {
    fn exchange(&mut self, line: &str) -> Result<String, SegmenterError> {
        exchange_over(&mut self.stdout, &mut self.stdin, line)
    }
}

impl Drop for StdioTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, SegmenterError> {
        let writer = TcpStream::connect(addr).map_err(transport_err)?;
        writer.set_nodelay(true).map_err(transport_err)?;
        let reader = BufReader::new(writer.try_clone().map_err(transport_err)?);
        Ok(Self { reader, writer })
    }
}

impl LineTransport for TcpTransport {
    fn exchange(&mut self, line: &str) -> Result<String, SegmenterError> {
        exchange_over(&mut self.reader, &mut self.writer, line)
    }
}

/// Feeds request lines straight into an in-process segmenter. Exercises the
/// full encode/decode path without a second process.
pub struct InProcessTransport<S> {
    segmenter: S,
}

impl<S: Segmenter> InProcessTransport<S> {
    pub fn new(segmenter: S) -> Self {
        Self { segmenter }
    }

    pub fn into_inner(self) -> S {
        self.segmenter
    }
}

impl<S: Segmenter> LineTransport for InProcessTransport<S> {
    fn exchange(&mut self, line: &str) -> Result<String, SegmenterError> {
        Ok(handle_line(&mut self.segmenter, line).0)
    }
}

/// Serves one sequence: reads request lines until `CloseSequence` succeeds
/// or the input ends. Malformed lines get an error response and the session
/// continues.
pub fn serve<S: Segmenter + ?Sized>(
    segmenter: &mut S,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (resp, closed) = handle_line(segmenter, &line);
        output.write_all(resp.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
        if closed {
            break;
        }
    }
    Ok(())
}

/// Client side of the wire protocol.
pub struct WireSegmenter<T> {
    transport: T,
    dims: Option<(u32, u32)>,
}

impl<T: LineTransport> WireSegmenter<T> {
    pub fn new(transport: T) -> Self {
        Self {
            transport,
            dims: None,
        }
    }

    fn call(&mut self, req: &Request) -> Result<Response, SegmenterError> {
        let line = serde_json::to_string(req).map_err(|e| SegmenterError::Malformed(e.to_string()))?;
        debug!("-> {line}");
        let raw = self.transport.exchange(&line)?;
        debug!("<- {} bytes", raw.len());
        let resp: Response = serde_json::from_str(&raw)
            .map_err(|e| SegmenterError::Malformed(format!("bad response: {e}")))?;
        if let Some(err) = resp.error {
            return Err(SegmenterError::Remote(err));
        }
        if let Some((w, h)) = self.dims {
            if let Some(bad) = resp.entries.iter().find(|e| e.mask.dims() != (w, h)) {
                return Err(SegmenterError::Malformed(format!(
                    "mask for track {} is {}x{}, sequence is {w}x{h}",
                    bad.track_id,
                    bad.mask.width(),
                    bad.mask.height()
                )));
            }
        }
        Ok(resp)
    }
}

impl<T: LineTransport> Segmenter for WireSegmenter<T> {
    fn open_sequence(&mut self, info: &SequenceInfo) -> Result<(), SegmenterError> {
        self.call(&Request::open(info))?;
        self.dims = Some((info.width, info.height));
        Ok(())
    }

    fn prompt(
        &mut self,
        frame: u32,
        track_id: u64,
        bbox: BBox,
    ) -> Result<(BitMask, OcclusionScore), SegmenterError> {
        let mut resp = self.call(&Request::Prompt {
            frame,
            track_id,
            bbox,
        })?;
        if resp.entries.len() != 1 || resp.entries[0].track_id != track_id {
            return Err(SegmenterError::Malformed(format!(
                "prompt for track {track_id} returned {} entries",
                resp.entries.len()
            )));
        }
        let e = resp.entries.pop().unwrap();
        Ok((e.mask, e.occ))
    }

    fn propagate(&mut self, frame: u32) -> Result<Vec<TrackMask>, SegmenterError> {
        let resp = self.call(&Request::Propagate { frame })?;
        if resp.frame != frame {
            return Err(SegmenterError::Malformed(format!(
                "propagate for frame {frame} answered frame {}",
                resp.frame
            )));
        }
        let mut ids: Vec<u64> = resp.entries.iter().map(|e| e.track_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(SegmenterError::Malformed("duplicate track in propagate response".into()));
        }
        Ok(resp.entries)
    }

    fn drop_memory(&mut self, track_id: u64, frame: u32) -> Result<(), SegmenterError> {
        self.call(&Request::DropMemory { track_id, frame }).map(|_| ())
    }

    fn close_sequence(&mut self) -> Result<(), SegmenterError> {
        self.call(&Request::CloseSequence)?;
        self.dims = None;
        Ok(())
    }
}
