//! The segmenter protocol over real transports, and the oracle behind it.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;

use proptest::prelude::*;

use zsmat::io::config::RunConfig;
use zsmat::io::mot::format_mot;
use zsmat::io::report::format_events;
use zsmat::pipeline::{run_scenario, run_sequence};
use zsmat::protocol::conformance;
use zsmat::protocol::wire::{InProcessTransport, StdioTransport, TcpTransport, WireSegmenter};
use zsmat::protocol::Segmenter;
use zsmat::synth::{self, presets, OracleSession, Scenario, ScenarioConfig};
use zsmat::BBox;

const BIN: &str = env!("CARGO_BIN_EXE_zs-mat");

fn write_scenario(dir: &Path, cfg: &ScenarioConfig) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(&path, serde_json::to_string(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn world(cfg: &ScenarioConfig) -> Arc<Scenario> {
    Arc::new(synth::generate(cfg).unwrap())
}

fn probe(w: &Scenario) -> BBox {
    w.truth.iter().flat_map(|f| f.objects.iter()).find_map(|o| o.bbox()).unwrap()
}

struct Server(Child, String);

impl Server {
    fn start(scenario: &str) -> Self {
        let mut child = Command::new(BIN)
            .args(["serve-oracle", "--scenario", scenario, "--tcp", "127.0.0.1:0"])
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        Server(child, line.trim().to_string())
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn in_process_oracle_is_conformant() {
    let w = world(&presets::crowded(3));
    let info = OracleSession::new(w.clone()).info();
    let report = conformance::run(|| Ok(InProcessTransport::new(OracleSession::new(w.clone()))), &info, probe(&w), 1, 300);
    assert!(report.passed(), "{report:?}");
    assert!(report.checks.len() >= 5);
}

#[test]
fn subprocess_oracle_is_conformant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets::easy(2);
    let path = write_scenario(dir.path(), &cfg);
    let w = world(&cfg);
    let cmd = format!("'{BIN}' serve-oracle --scenario '{path}'");
    let report = conformance::run(|| StdioTransport::spawn(&cmd), &OracleSession::new(w.clone()).info(), probe(&w), 2, 200);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn tcp_oracle_is_conformant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets::crossing(1);
    let server = Server::start(&write_scenario(dir.path(), &cfg));
    let w = world(&cfg);
    let report = conformance::run(|| TcpTransport::connect(&server.1), &OracleSession::new(w.clone()).info(), probe(&w), 3, 200);
    assert!(report.passed(), "{report:?}");
}

#[test]
fn an_echoing_process_fails_conformance() {
    let w = world(&presets::easy(0));
    let report = conformance::run(|| StdioTransport::spawn("cat"), &OracleSession::new(w.clone()).info(), probe(&w), 0, 20);
    assert!(!report.passed());
}

#[test]
fn remote_tracking_matches_in_process_tracking() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets::crowded(5);
    let path = write_scenario(dir.path(), &cfg);
    let run_cfg = RunConfig::default();
    let (w, local) = run_scenario(&cfg, &run_cfg).unwrap();
    let info = OracleSession::new(w.clone()).info();

    let cmd = format!("'{BIN}' serve-oracle --scenario '{path}'");
    let exec = WireSegmenter::new(StdioTransport::spawn(&cmd).unwrap());
    let remote = run_sequence(exec, info.clone(), &w.detections, &run_cfg).unwrap();
    assert_eq!(format_mot(&local.results), format_mot(&remote.results));
    assert_eq!(format_events(&local.events), format_events(&remote.events));

    let server = Server::start(&path);
    let tcp = WireSegmenter::new(TcpTransport::connect(&server.1).unwrap());
    let remote = run_sequence(tcp, info, &w.detections, &run_cfg).unwrap();
    assert_eq!(local.frames, remote.frames);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Prompting or dropping other tracks never changes a track's masks.
    #[test]
    fn oracle_tracks_are_independent(seed in 0u64..500, start in 0u32..20, len in 5u32..30) {
        let w = world(&presets::crowded(seed));
        let info = OracleSession::new(w.clone()).info();
        let boxes: Vec<BBox> = w.truth[start as usize].objects.iter().filter_map(|o| o.bbox()).collect();
        prop_assume!(boxes.len() >= 2);
        let end = (start + len).min(info.frames);

        let mut alone = OracleSession::new(w.clone());
        let mut crowd = OracleSession::new(w.clone());
        for s in [&mut alone, &mut crowd] {
            s.open_sequence(&info).unwrap();
            for t in 0..=start {
                s.propagate(t).unwrap();
            }
            s.prompt(start, 1, boxes[0]).unwrap();
        }
        for (k, b) in boxes.iter().enumerate().skip(1) {
            crowd.prompt(start, 1 + k as u64, *b).unwrap();
        }
        for t in start + 1..end {
            let a = alone.propagate(t).unwrap();
            let c = crowd.propagate(t).unwrap();
            let mine = c.iter().find(|m| m.track_id == 1).unwrap();
            prop_assert_eq!(&a[0], mine);
            crowd.drop_memory(2, t).unwrap();
        }
    }
}
