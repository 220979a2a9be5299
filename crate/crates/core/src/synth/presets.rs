//! Ready-made scenarios used by the tests, the guide and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DetectorNoise, ObjectSpec, OracleConfig, ScenarioConfig, ScoreMode, Shape, Trajectory};

fn object(shape: Shape, size: [f64; 2], trajectory: Trajectory, frames: u32, depth: i32) -> ObjectSpec {
    ObjectSpec {
        shape,
        size,
        trajectory,
        enter_frame: 0,
        exit_frame: frames,
        depth,
    }
}

fn mild_noise() -> DetectorNoise {
    DetectorNoise {
        fp_rate: 0.3,
        fn_rate: 0.03,
        box_jitter: 0.02,
        ..DetectorNoise::default()
    }
}

/// Three well separated objects drifting slowly, one static distractor.
pub fn easy(seed: u64) -> ScenarioConfig {
    let frames = 60;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe45e);
    let mut wobble = |base: f64| base + rng.random_range(-4.0..4.0);
    let objects = vec![
        object(
            Shape::Ellipse,
            [26.0, 20.0],
            Trajectory {
                amplitude: [0.0, 6.0],
                period: 40.0,
                ..Trajectory::linear(wobble(30.0), wobble(30.0), 0.6, 0.0)
            },
            frames,
            0,
        ),
        object(
            Shape::Rectangle,
            [22.0, 28.0],
            Trajectory::linear(wobble(130.0), wobble(40.0), -0.3, 0.4),
            frames,
            1,
        ),
        object(
            Shape::Ellipse,
            [30.0, 24.0],
            Trajectory {
                amplitude: [8.0, 0.0],
                period: 30.0,
                ..Trajectory::fixed(wobble(80.0), wobble(95.0))
            },
            frames,
            2,
        ),
    ];
    let distractors = vec![object(
        Shape::Rectangle,
        [18.0, 14.0],
        Trajectory::fixed(150.0, 105.0),
        frames,
        0,
    )];
    ScenarioConfig {
        name: format!("easy-{seed}"),
        seed,
        width: 180,
        height: 130,
        frames,
        objects,
        distractors,
        detector_noise: mild_noise(),
        oracle: OracleConfig::default(),
        label: "animal".into(),
    }
}

/// Two objects crossing paths; the second passes behind the first.
pub fn crossing(seed: u64) -> ScenarioConfig {
    let frames = 70;
    let objects = vec![
        object(
            Shape::Ellipse,
            [30.0, 26.0],
            Trajectory::linear(25.0, 50.0, 1.6, 0.0),
            frames,
            0,
        ),
        object(
            Shape::Ellipse,
            [26.0, 22.0],
            Trajectory::linear(135.0, 52.0, -1.6, 0.0),
            frames,
            1,
        ),
    ];
    ScenarioConfig {
        name: format!("crossing-{seed}"),
        seed,
        width: 160,
        height: 100,
        frames,
        objects,
        distractors: Vec::new(),
        detector_noise: mild_noise(),
        oracle: OracleConfig::default(),
        label: "animal".into(),
    }
}

/// Eight objects of similar size packed into a small arena, moving back and
/// forth so that they overlap often.
pub fn crowded(seed: u64) -> ScenarioConfig {
    let frames = 80;
    let (width, height) = (140u32, 100u32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc20d);
    let mut objects = Vec::new();
    for i in 0..8 {
        let col = (i % 4) as f64;
        let row = (i / 4) as f64;
        let cx = 22.0 + col * 32.0 + rng.random_range(-3.0..3.0);
        let cy = 30.0 + row * 40.0 + rng.random_range(-3.0..3.0);
        let shape = if i % 2 == 0 { Shape::Ellipse } else { Shape::Rectangle };
        objects.push(object(
            shape,
            [rng.random_range(20.0..26.0), rng.random_range(18.0..24.0)],
            Trajectory {
                amplitude: [rng.random_range(8.0..14.0), rng.random_range(3.0..8.0)],
                period: rng.random_range(30.0..50.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                ..Trajectory::fixed(cx, cy)
            },
            frames,
            i as i32,
        ));
    }
    ScenarioConfig {
        name: format!("crowded-{seed}"),
        seed,
        width,
        height,
        frames,
        objects,
        distractors: Vec::new(),
        detector_noise: DetectorNoise {
            merge_rate: 0.3,
            ..mild_noise()
        },
        oracle: OracleConfig::default(),
        label: "animal".into(),
    }
}

/// Ten sequences whose score modes sit at different heights, so no single
/// fixed threshold separates them all. Each has several distractors the
/// detector fires on with false-positive scores.
pub fn ablation_suite(seed: u64) -> Vec<ScenarioConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xab1a);
    (0..10)
        .map(|k| {
            let mut cfg = easy(seed.wrapping_mul(31).wrapping_add(k));
            cfg.name = format!("ablation-{seed}-{k:02}");
            let fp_mean = 0.12 + 0.04 * k as f64;
            cfg.detector_noise = DetectorNoise {
                tp_score_mode: ScoreMode {
                    mean: fp_mean + 0.4,
                    spread: 0.04,
                },
                fp_score_mode: ScoreMode {
                    mean: fp_mean,
                    spread: 0.04,
                },
                fp_rate: 1.5,
                fn_rate: 0.03,
                box_jitter: 0.02,
                min_visibility: 0.3,
                distractor_share: 0.9,
                merge_rate: 0.0,
            };
            cfg.distractors = (0..3)
                .map(|_| {
                    object(
                        if rng.random_bool(0.5) { Shape::Ellipse } else { Shape::Rectangle },
                        [rng.random_range(14.0..22.0), rng.random_range(12.0..18.0)],
                        Trajectory::linear(
                            rng.random_range(15.0..165.0),
                            rng.random_range(15.0..115.0),
                            rng.random_range(-0.3..0.3),
                            rng.random_range(-0.3..0.3),
                        ),
                        cfg.frames,
                        0,
                    )
                })
                .collect();
            cfg
        })
        .collect()
}

/// One object that leaves the frame at `exit` and never comes back.
pub fn vanishing(seed: u64, exit: u32, frames: u32) -> ScenarioConfig {
    let mut cfg = easy(seed);
    cfg.name = format!("vanishing-{seed}");
    cfg.frames = frames;
    cfg.objects = vec![ObjectSpec {
        exit_frame: exit,
        ..object(Shape::Ellipse, [28.0, 22.0], Trajectory::linear(60.0, 60.0, 0.3, 0.0), frames, 0)
    }];
    cfg.distractors.clear();
    cfg.detector_noise = DetectorNoise {
        fp_rate: 0.0,
        fn_rate: 0.0,
        box_jitter: 0.0,
        ..DetectorNoise::default()
    };
    cfg
}
