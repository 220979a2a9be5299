//! Round trips and strict validation of the file formats.

use proptest::prelude::*;

use zsmat::io::config::{format_config, parse_config, DetectionThreshold, RunConfig};
use zsmat::io::detections::{format_detections, parse_detections, FrameDetections};
use zsmat::io::mot::{format_mot, parse_mot, MotRow, MotTable};
use zsmat::io::report::{format_events, parse_events};
use zsmat::pipeline::run_scenario;
use zsmat::synth::{self, presets};
use zsmat::threshold::ThresholdRule;
use zsmat::tracker::{InitMode, ReconstructionMode};
use zsmat::{BBox, BitMask, Detection};

fn bbox() -> impl Strategy<Value = BBox> {
    (-50.0..500.0f64, -50.0..500.0f64, 0.01..200.0f64, 0.01..200.0f64).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap())
}

fn frames() -> impl Strategy<Value = Vec<FrameDetections>> {
    let det = (bbox(), 0.0..=1.0f64, "[a-z ]{0,8}");
    prop::collection::vec((1u32..5, prop::collection::vec(det, 0..5)), 0..12).prop_map(|steps| {
        let mut frame = 0;
        steps
            .into_iter()
            .map(|(gap, dets)| {
                frame += gap;
                FrameDetections {
                    frame,
                    detections: dets.into_iter().map(|(b, s, l)| Detection::new(frame, b, s, l).unwrap()).collect(),
                }
            })
            .collect()
    })
}

fn table() -> impl Strategy<Value = MotTable> {
    let row = (1u32..50, 1u64..20, bbox(), -1.0..1.0f64, -1i64..3, -1.0..=1.0f64);
    prop::collection::vec(row, 0..40).prop_map(|rows| {
        let mut t = MotTable {
            rows: rows
                .into_iter()
                .map(|(frame, id, bbox, conf, class, visibility)| MotRow {
                    frame,
                    id,
                    bbox,
                    conf,
                    class,
                    visibility,
                })
                .collect(),
        };
        t.sort();
        t.rows.dedup_by_key(|r| (r.frame, r.id));
        t
    })
}

proptest! {
    #[test]
    fn detections_round_trip(f in frames()) {
        let text = format_detections(&f);
        prop_assert_eq!(parse_detections(&text, "mem").unwrap(), f);
    }

    #[test]
    fn mot_tables_round_trip(t in table()) {
        let text = format_mot(&t);
        prop_assert_eq!(parse_mot(&text, "mem").unwrap(), t);
    }

    #[test]
    fn masks_round_trip_through_json(w in 1u32..30, h in 1u32..30, bits in prop::collection::vec(any::<bool>(), 900)) {
        let m = BitMask::from_fn(w, h, |x, y| bits[(y * w + x) as usize]);
        let back: BitMask = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(back.area() as usize, m.to_raster().iter().filter(|&&b| b).count());
    }

    #[test]
    fn configs_round_trip(
        tau_mask in 0.0..=1.0f64,
        tau_iou in 0.0..=1.0f64,
        lost in -4.0..3.0f64,
        steps in (0.01..3.0f64, 0.01..3.0f64),
        n_lost in 1u32..100,
        n_frames in 1usize..40,
        delta in 0.0..=1.0f64,
        fixed in prop::option::of(0.0..=1.0f64),
        modes in (0usize..2, 0usize..4, any::<bool>()),
    ) {
        let mut cfg = RunConfig::default();
        let t = &mut cfg.tracker;
        t.tau_mask = tau_mask;
        t.tau_iou = tau_iou;
        t.tau_lost = lost;
        t.tau_pending = lost + steps.0;
        t.tau_reliable = lost + steps.0 + steps.1;
        t.n_lost = n_lost;
        t.n_frames = n_frames;
        t.init_mode = [InitMode::MaskOverlap, InitMode::UnassignedPixels][modes.0];
        t.reconstruction = [ReconstructionMode::DensityAware, ReconstructionMode::Band, ReconstructionMode::Always, ReconstructionMode::Off][modes.1];
        t.mask_nms = modes.2;
        cfg.threshold.delta = delta;
        cfg.threshold.rule = if modes.2 { ThresholdRule::Boundary } else { ThresholdRule::WeightedCentroid };
        cfg.detection_threshold = fixed.map_or(DetectionThreshold::Adaptive, DetectionThreshold::Fixed);
        cfg.segmenter = Some("tcp:127.0.0.1:9000".into());
        cfg.sequences = vec!["a".into(), "b-2".into()];
        prop_assume!(t.tau_reliable > t.tau_pending && t.tau_pending > t.tau_lost);
        prop_assert_eq!(parse_config(&format_config(&cfg)).unwrap(), cfg);
    }
}

#[test]
fn empty_config_gives_the_published_defaults() {
    let cfg = parse_config("").unwrap();
    let t = &cfg.tracker;
    assert_eq!(cfg.threshold.delta, 0.1);
    assert_eq!((t.tau_mask, t.tau_iou), (0.4, 0.3));
    assert_eq!((t.tau_reliable, t.tau_pending, t.tau_lost), (8.0, 6.0, 2.0));
    assert_eq!((t.n_lost, t.n_frames), (25, 10));
    assert_eq!((t.tau_miou, t.tau_dscore, t.tau_dstd, t.tau_nms), (0.8, 2.0, 0.2, 0.95));
    assert_eq!(cfg, RunConfig::default());
}

#[test]
fn config_overlay_and_errors() {
    let cfg = parse_config("delta = 0   # no offset\n\ntau_nms=0.9\n").unwrap();
    assert_eq!(cfg.threshold.delta, 0.0);
    assert_eq!(cfg.tracker.tau_nms, 0.9);
    assert_eq!(cfg.tracker.tau_mask, 0.4);

    let err = parse_config("tau_pending = 9").unwrap_err();
    assert_eq!(err.keys(), vec!["tau_reliable", "tau_pending", "tau_lost"]);
    assert!(parse_config("tau_mask = 0.4\ntau_mask = 0.5").is_err());
    assert!(parse_config("tau_mask 0.4").is_err());
    assert!(parse_config("tau_mask = lots").unwrap_err().to_string().contains("line 1"));
    assert!(parse_config("bogus = 1").unwrap_err().to_string().contains("bogus"));
}

#[test]
fn detection_files_are_validated_with_locations() {
    assert!(parse_detections("", "f").unwrap().is_empty());
    let good = r#"{"frame":3,"detections":[{"bbox":[1,2,3,4],"score":0.5,"label":"ape"}]}"#;
    assert_eq!(parse_detections(good, "f").unwrap()[0].detections[0].label, "ape");
    let cases = [
        (r#"{"frame":0,"detections":[{"bbox":[1,2,3,4],"score":1.2,"label":"a"}]}"#, "f:1"),
        (r#"{"frame":0,"detections":[{"bbox":[1,2,-3,4],"score":0.2,"label":"a"}]}"#, "f:1"),
        (r#"{"frame":0,"detections":[{"bbox":[1,2,3,4],"score":0.2}]}"#, "f:1"),
        (r#"{"frame":0,"detections":[],"extra":1}"#, "f:1"),
        ("{\"frame\":2,\"detections\":[]}\n{\"frame\":2,\"detections\":[]}", "f:2"),
        ("{\"frame\":2,\"detections\":[]}\n\n{\"frame\":1,\"detections\":[]}", "f:3"),
    ];
    for (text, at) in cases {
        let err = parse_detections(text, "f").unwrap_err();
        assert!(err.to_string().contains(at), "{text}: {err}");
        assert_eq!(err.exit_code(), 1);
    }
}

#[test]
fn mot_tables_are_validated() {
    assert!(parse_mot("", "m").unwrap().rows.is_empty());
    assert!(parse_mot("1,1,0,0,5,5,1,-1,-1\n1,1,3,3,5,5,1,-1,-1\n", "m").is_err(), "duplicate (frame, id)");
    assert!(parse_mot("0,1,0,0,5,5,1,-1,-1\n", "m").is_err(), "frames are 1-based");
    assert!(parse_mot("1,1,0,0,5\n", "m").unwrap_err().to_string().contains("m:1"));
    assert!(parse_mot("1,1,0,0,-5,5,1,-1,-1\n", "m").is_err());
}

#[test]
fn generated_scenarios_round_trip() {
    for cfg in [presets::easy(1), presets::crowded(2), presets::crossing(3)] {
        let world = synth::generate(&cfg).unwrap();
        let text = format_detections(&world.detections);
        assert_eq!(parse_detections(&text, "d").unwrap(), world.detections);
        let gt = world.ground_truth_table();
        assert_eq!(parse_mot(&format_mot(&gt), "g").unwrap(), gt);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<synth::ScenarioConfig>(&json).unwrap(), cfg);

        let (_, run) = run_scenario(&cfg, &RunConfig::default()).unwrap();
        assert_eq!(parse_mot(&format_mot(&run.results), "r").unwrap(), run.results);
        assert_eq!(parse_events(&format_events(&run.events), "e").unwrap(), run.events);
    }
}
