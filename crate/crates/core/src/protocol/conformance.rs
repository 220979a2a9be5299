//! Transcript checks any segmenter implementation must pass.
//!
//! Every check talks to a fresh session through a [`LineTransport`], so the
//! same suite runs against the in-process oracle, a subprocess or a socket.
//! The fuzz check replays a seeded random request stream against a small
//! reference model of the contract and reports every disagreement.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::wire::LineTransport;
use super::{Request, Response, SequenceInfo, SegmenterError};
use crate::geometry::BBox;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConformanceReport {
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations.len()).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }
}

struct Session<T> {
    transport: T,
    info: SequenceInfo,
    violations: Vec<String>,
}

impl<T: LineTransport> Session<T> {
    fn raw(&mut self, line: &str) -> Option<Response> {
        match self.transport.exchange(line) {
            Err(e) => {
                self.violations.push(format!("transport error after {line}: {e}"));
                None
            }
            Ok(resp) => match serde_json::from_str::<Response>(&resp) {
                Ok(r) => {
                    for e in &r.entries {
                        if e.mask.dims() != (self.info.width, self.info.height) {
                            self.violations.push(format!(
                                "mask for track {} has dims {:?}",
                                e.track_id,
                                e.mask.dims()
                            ));
                        }
                    }
                    Some(r)
                }
                Err(e) => {
                    self.violations.push(format!("response is not schema-valid ({e}): {resp}"));
                    None
                }
            },
        }
    }

    fn send(&mut self, req: &Request) -> Option<Response> {
        self.raw(&serde_json::to_string(req).expect("requests serialize"))
    }

    fn expect_ok(&mut self, req: &Request) -> Option<Response> {
        let r = self.send(req)?;
        if let Some(e) = &r.error {
            self.violations.push(format!("{req:?} failed: {e}"));
            return None;
        }
        Some(r)
    }

    fn expect_err(&mut self, req: &Request, why: &str) {
        if let Some(r) = self.send(req) {
            if r.error.is_none() {
                self.violations.push(format!("{req:?} accepted but {why}"));
            }
        }
    }

    fn open(&mut self) {
        let req = Request::open(&self.info);
        self.expect_ok(&req);
    }
}

/// Runs the full suite. `connect` must return a transport to a fresh
/// session each time it is called; `probe` is a box used for prompts.
pub fn run<T, F>(mut connect: F, info: &SequenceInfo, probe: BBox, seed: u64, fuzz_steps: usize) -> ConformanceReport
where
    T: LineTransport,
    F: FnMut() -> Result<T, SegmenterError>,
{
    let mut checks = Vec::new();
    let mut check = |name: &'static str, body: &mut dyn FnMut(&mut Session<T>)| {
        let violations = match connect() {
            Err(e) => vec![format!("could not connect: {e}")],
            Ok(transport) => {
                let mut s = Session {
                    transport,
                    info: info.clone(),
                    violations: Vec::new(),
                };
                body(&mut s);
                s.violations
            }
        };
        checks.push(CheckResult { name, violations });
    };

    check("handshake", &mut |s| {
        if let Some(r) = s.expect_ok(&Request::open(&s.info.clone())) {
            if !r.entries.is_empty() {
                s.violations.push("OpenSequence returned entries".into());
            }
        }
        s.expect_ok(&Request::CloseSequence);
    });

    check("protocol_version", &mut |s| {
        let req = Request::OpenSequence {
            sequence_id: s.info.sequence_id.clone(),
            protocol: 99,
            width: s.info.width,
            height: s.info.height,
            frames: s.info.frames,
        };
        s.expect_err(&req, "protocol 99 is unsupported");
    });

    check("requires_open", &mut |s| {
        s.expect_err(&Request::Propagate { frame: 0 }, "no sequence is open");
    });

    check("prompt_and_propagate", &mut |s| {
        s.open();
        if let Some(r) = s.expect_ok(&Request::Propagate { frame: 0 }) {
            if !r.entries.is_empty() {
                s.violations.push("propagate with no tracks returned entries".into());
            }
        }
        let prompt = Request::Prompt { frame: 0, track_id: 1, bbox: probe };
        if let Some(r) = s.expect_ok(&prompt) {
            if r.entries.len() != 1 || r.entries[0].track_id != 1 {
                s.violations.push(format!("prompt returned {} entries", r.entries.len()));
            }
        }
        if let Some(r) = s.expect_ok(&Request::Propagate { frame: 1 }) {
            let ids: Vec<u64> = r.entries.iter().map(|e| e.track_id).collect();
            if ids != vec![1] {
                s.violations.push(format!("propagate returned tracks {ids:?}, expected [1]"));
            }
        }
    });

    check("frame_monotonicity", &mut |s| {
        s.open();
        s.expect_err(&Request::Prompt { frame: 0, track_id: 1, bbox: probe }, "no frame is current yet");
        s.expect_ok(&Request::Propagate { frame: 0 });
        s.expect_err(&Request::Propagate { frame: 2 }, "frame 1 was skipped");
        s.expect_err(&Request::Propagate { frame: 0 }, "frame 0 repeats");
        s.expect_ok(&Request::Propagate { frame: 1 });
        s.expect_err(&Request::Prompt { frame: 0, track_id: 1, bbox: probe }, "frame 0 is not current");
    });

    check("malformed_line", &mut |s| {
        s.open();
        for bad in ["{not json", r#"{"kind":"Explode"}"#, r#"{"kind":"Propagate"}"#] {
            match s.raw(bad) {
                Some(r) if r.error.is_none() => s.violations.push(format!("accepted {bad}")),
                _ => {}
            }
        }
        s.expect_ok(&Request::Propagate { frame: 0 });
    });

    // idempotence compares the transcript tails of three sessions
    let script = |s: &mut Session<T>, drops: &[(u64, u32)]| -> Vec<String> {
        s.open();
        s.expect_ok(&Request::Propagate { frame: 0 });
        s.expect_ok(&Request::Prompt { frame: 0, track_id: 1, bbox: probe });
        s.expect_ok(&Request::Propagate { frame: 1 });
        s.expect_ok(&Request::Propagate { frame: 2 });
        for &(track_id, frame) in drops {
            s.expect_ok(&Request::DropMemory { track_id, frame });
        }
        (3..6.min(s.info.frames))
            .filter_map(|f| s.expect_ok(&Request::Propagate { frame: f }))
            .map(|r| serde_json::to_string(&r).unwrap())
            .collect()
    };
    let mut tails: Vec<Vec<String>> = Vec::new();
    for drops in [&[(1u64, 2u32)][..], &[(1, 2), (1, 2)], &[(1, 2), (999, 2)]] {
        check("drop_memory_idempotent", &mut |s| tails.push(script(s, drops)));
    }
    check("fuzz", &mut |s| fuzz(s, probe, seed, fuzz_steps));

    if tails.len() == 3 && (tails[0] != tails[1] || tails[0] != tails[2]) {
        checks.push(CheckResult {
            name: "drop_memory_idempotent",
            violations: vec!["repeated or unknown drops changed later responses".into()],
        });
    }

    ConformanceReport { checks }
}

/// Reference model: memory frames per track; current frame.
#[derive(Default)]
struct Model {
    current: Option<u32>,
    memory: BTreeMap<u64, BTreeSet<u32>>,
}

fn fuzz<T: LineTransport>(s: &mut Session<T>, probe: BBox, seed: u64, steps: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::default();
    let mut next_id = 1u64;
    s.open();
    let frames = s.info.frames;
    for _ in 0..steps {
        let roll: f64 = rng.random();
        let next_frame = model.current.map_or(0, |c| c + 1);
        let (line, valid): (String, bool) = if roll < 0.05 {
            ("{\"kind\":\"Propagate\",\"frame\":\"x\"}".into(), false)
        } else if roll < 0.40 {
            let f = if rng.random_bool(0.9) { next_frame } else { rng.random_range(0..frames + 2) };
            let ok = f == next_frame && f < frames;
            (serde_json::to_string(&Request::Propagate { frame: f }).unwrap(), ok)
        } else if roll < 0.65 {
            let f = match model.current {
                Some(c) if rng.random_bool(0.9) => c,
                _ => rng.random_range(0..frames),
            };
            let id = if model.memory.is_empty() || rng.random_bool(0.5) {
                next_id += 1;
                next_id - 1
            } else {
                *model.memory.keys().nth(rng.random_range(0..model.memory.len())).unwrap()
            };
            let dx = rng.random_range(-4.0..4.0);
            let bbox = BBox::new(probe.x() + dx, probe.y() - dx, probe.w(), probe.h()).unwrap();
            let ok = model.current == Some(f);
            (serde_json::to_string(&Request::Prompt { frame: f, track_id: id, bbox }).unwrap(), ok)
        } else {
            let (id, f) = match model.memory.iter().next() {
                Some((&id, frames_in)) if rng.random_bool(0.8) => {
                    let f = frames_in.iter().next_back().copied().unwrap_or(0);
                    (id, f)
                }
                _ => (10_000 + rng.random_range(0..5), rng.random_range(0..frames)),
            };
            (serde_json::to_string(&Request::DropMemory { track_id: id, frame: f }).unwrap(), true)
        };
        let Some(resp) = s.raw(&line) else { continue };
        if resp.error.is_some() == valid {
            s.violations.push(format!(
                "{line}: expected {}, got {}",
                if valid { "success" } else { "error" },
                resp.error.as_deref().unwrap_or("success")
            ));
            continue;
        }
        if !valid {
            continue;
        }
        let req: Request = serde_json::from_str(&line).unwrap();
        match req {
            Request::Propagate { frame } => {
                model.current = Some(frame);
                for mem in model.memory.values_mut() {
                    mem.insert(frame);
                }
                let got: BTreeSet<u64> = resp.entries.iter().map(|e| e.track_id).collect();
                let want: BTreeSet<u64> = model.memory.keys().copied().collect();
                if got.len() != resp.entries.len() || got != want {
                    s.violations.push(format!("propagate {frame}: tracks {got:?}, expected {want:?}"));
                }
            }
            Request::Prompt { frame, track_id, .. } => {
                model.memory.insert(track_id, BTreeSet::from([frame]));
                if resp.entries.len() != 1 || resp.entries[0].track_id != track_id {
                    s.violations.push(format!("prompt for {track_id} returned {} entries", resp.entries.len()));
                }
            }
            Request::DropMemory { track_id, frame } => {
                if let Some(mem) = model.memory.get_mut(&track_id) {
                    mem.remove(&frame);
                    if mem.is_empty() {
                        model.memory.remove(&track_id);
                    }
                }
            }
            _ => {}
        }
    }
    s.expect_ok(&Request::CloseSequence);
}
