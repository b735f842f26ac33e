use std::collections::BTreeMap;

use ptseg::backend::RecordingSegmenter;
use ptseg::datasets::{run_semisupervised, score_run, seed_points};
use ptseg::pipeline::{
    filter_by_patch_similarity, reinit_trigger, run, two_pass_segment, Seed,
};
use ptseg::synthetic::{
    disappearing_scene, render, standard_suite, Geometry, Motion, Noise, OracleSegmenter, OracleTracker,
    SceneSpec, ShapeSpec,
};
use ptseg::{
    BinaryMask, Frame, Label, LabeledPoint, ObjectId, PipelineConfig, ReinitVariant, TrajectoryBundle,
};

fn oracles(spec: &SceneSpec) -> (OracleTracker, OracleSegmenter) {
    (OracleTracker::new(spec).unwrap(), OracleSegmenter::new(spec).unwrap())
}

/// A radius-5 disk moving +3 px/frame along y = 16 behind a wall covering x in [22, 42).
fn crossing() -> SceneSpec {
    SceneSpec {
        name: "crossing".into(),
        width: 64,
        height: 32,
        frames: 18,
        background: [0, 0, 0],
        shapes: vec![ShapeSpec {
            geometry: Geometry::Disk { radius: 5.0 },
            color: [200, 40, 40],
            motion: Motion::Linear {
                x: 6.0,
                y: 16.0,
                vx: 3.0,
                vy: 0.0,
                start: None,
                stop: None,
            },
            depth: 0,
        }],
        occluders: vec![ShapeSpec {
            geometry: Geometry::Rect {
                width: 20.0,
                height: 32.0,
            },
            color: [255, 255, 255],
            motion: Motion::Constant { x: 32.0, y: 16.0 },
            depth: 5,
        }],
        noise: Noise::default(),
        seed: 1,
    }
}

#[test]
fn frame_prompt_call_counts() {
    let spec = standard_suite(0).remove(0);
    let seq = render(&spec).unwrap();
    let (_, seg) = oracles(&spec);
    let id = ObjectId(1);
    let mask = seq.gt[&id][0].clone().unwrap();
    let set: Vec<_> = mask.iter_set().collect();
    let (px, py) = set[set.len() / 2];
    let pts = vec![
        LabeledPoint::at_pixel(px, py, Label::Positive, id),
        LabeledPoint::negative(1.0, 1.0, id),
    ];
    for (iri, expected) in [(0, 2), (12, 14)] {
        let config = PipelineConfig {
            refinement_iterations: iri,
            ..Default::default()
        };
        let mut rec = RecordingSegmenter::new(OracleSegmenter::new(&spec).unwrap());
        let out = two_pass_segment(&mut rec, &seq.frames[0], &pts, &config).unwrap();
        assert_eq!(rec.calls(), expected);
        assert_eq!(out.calls, expected);
        let (_, first, prior) = &rec.prompts[0];
        assert!(first.iter().all(|p| p.is_positive()));
        assert!(prior.is_none());
        for (_, p, prior) in &rec.prompts[1..] {
            assert_eq!(p.len(), 2);
            assert!(prior.is_some());
        }
    }
    // Refinement on an exact oracle is idempotent.
    let mut a = OracleSegmenter::new(&spec).unwrap();
    let cfg0 = PipelineConfig {
        refinement_iterations: 0,
        ..Default::default()
    };
    let m0 = two_pass_segment(&mut a, &seq.frames[0], &pts, &cfg0).unwrap().mask;
    let mut b = seg;
    let m12 = two_pass_segment(&mut b, &seq.frames[0], &pts, &PipelineConfig::default())
        .unwrap()
        .mask;
    assert_eq!(m0, m12);
    assert_eq!(m0, mask);

    // No visible positive: empty mask and no call.
    let mut rec = RecordingSegmenter::new(OracleSegmenter::new(&spec).unwrap());
    let out = two_pass_segment(&mut rec, &seq.frames[0], &pts[1..], &cfg0).unwrap();
    assert!(out.no_visible_positive && out.mask.area() == 0 && rec.calls() == 0);
}

fn bundle(points: Vec<[f32; 2]>) -> TrajectoryBundle {
    let n = points.len();
    TrajectoryBundle {
        start_frame: 0,
        points: vec![points.clone(), points],
        occlusion: vec![vec![0.0; n]; 2],
        labels: vec![Label::Positive; n],
        objects: vec![ObjectId(1); n],
    }
}

#[test]
fn patch_similarity_filter() {
    let red0 = Frame::filled(0, 16, 16, [255, 0, 0]).unwrap();
    let red1 = Frame::filled(1, 16, 16, [255, 0, 0]).unwrap();
    let blue1 = Frame::filled(1, 16, 16, [0, 0, 255]).unwrap();
    let b = bundle(vec![[4.0, 4.0], [12.5, 9.5]]);
    let same = filter_by_patch_similarity(&red0, &red1, &b, 0.002).unwrap();
    assert_eq!(same, b);
    let drift = filter_by_patch_similarity(&red0, &blue1, &b, 0.002).unwrap();
    assert_eq!(drift.occlusion[1], vec![1.0, 1.0]);
    assert_eq!(drift.occlusion[0], vec![0.0, 0.0]);
    let lax = filter_by_patch_similarity(&red0, &blue1, &b, f64::INFINITY).unwrap();
    assert_eq!(lax, b);
    let outside = Frame::filled(5, 16, 16, [0, 0, 0]).unwrap();
    assert!(filter_by_patch_similarity(&red0, &outside, &b, 0.002).is_err());
}

#[test]
fn trigger_examples() {
    let t = |v, a: &[Vec<usize>], i: &[usize]| reinit_trigger(v, a, i, 0.25);
    assert_eq!(t(ReinitVariant::Off, &[vec![5; 8]], &[5]), None);
    assert_eq!(t(ReinitVariant::A, &[vec![5; 8]], &[5]), Some(7));
    // Mean of non-empty areas is 120; 120 itself sits at index 2.
    assert_eq!(t(ReinitVariant::B, &[vec![100, 0, 120, 140]], &[0]), Some(2));
    assert_eq!(t(ReinitVariant::C, &[vec![40, 80, 95]], &[100]), Some(1));
    assert_eq!(t(ReinitVariant::C, &[vec![10, 500, 0]], &[100]), Some(1));
    assert_eq!(t(ReinitVariant::D, &[vec![100, 100, 100], vec![10, 90, 100]], &[100, 100]), Some(1));
    assert_eq!(t(ReinitVariant::D, &[vec![100, 0], vec![0, 100]], &[100, 100]), Some(1));
    for v in [ReinitVariant::A, ReinitVariant::B, ReinitVariant::C, ReinitVariant::D] {
        assert_eq!(t(v, &[vec![0; 4]], &[5]), None);
    }
}

#[test]
fn variant_a_reinitializes_on_the_horizon() {
    let spec = standard_suite(0).remove(0);
    let seq = render(&spec).unwrap();
    let (mut tr, mut sg) = oracles(&spec);
    let config = PipelineConfig {
        reinit: ReinitVariant::A,
        ..Default::default()
    };
    let out = run_semisupervised(&seq, &config, &mut tr, &mut sg).unwrap();
    let frames: Vec<usize> = out.diagnostics.reinit_events.iter().map(|e| e.frame).collect();
    assert_eq!(frames, vec![8, 16]);
    assert_eq!(out.query_sets.len(), 3);
    for s in &out.query_sets {
        assert_eq!((s.positives.len(), s.negatives.len()), (8, 1));
    }
    assert_eq!(score_run(&seq, &out).unwrap().jf, 1.0);
}

#[test]
fn occluded_points_are_not_prompted() {
    let spec = crossing();
    let seq = render(&spec).unwrap();
    let (mut tr, seg) = oracles(&spec);
    let mut rec = RecordingSegmenter::new(seg);
    let config = PipelineConfig::default();
    let out = run_semisupervised(&seq, &config, &mut tr, &mut rec).unwrap();
    assert!(out.diagnostics.occluded_points[&ObjectId(1)] > 0);
    for (_, pts, _) in &rec.prompts {
        for p in pts.iter().filter(|p| p.is_positive()) {
            assert!(!(22.0..42.0).contains(&p.x), "positive prompt at ({}, {}) behind the wall", p.x, p.y);
        }
    }
    assert!(!out.diagnostics.empty_prompt_frames[&ObjectId(1)].is_empty());
    let masks = out.masks();
    for (t, gt) in seq.gt[&ObjectId(1)].iter().enumerate() {
        if gt.as_ref().map_or(0, |m| m.area()) == 0 {
            assert_eq!(masks[&ObjectId(1)][t].as_ref().unwrap().area(), 0, "frame {t}");
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let spec = standard_suite(3).remove(4).with_noise(Noise {
        boundary_dilation_px: 1,
        point_jitter_sigma: 1.0,
        ..Default::default()
    });
    let seq = render(&spec).unwrap();
    let config = PipelineConfig {
        reinit: ReinitVariant::C,
        ..Default::default()
    };
    let once = || {
        let (mut tr, mut sg) = oracles(&spec);
        run_semisupervised(&seq, &config, &mut tr, &mut sg).unwrap()
    };
    let (a, b) = (once(), once());
    assert_eq!(a.masks(), b.masks());
    assert_eq!(a.query_sets, b.query_sets);
    assert_eq!(a.diagnostics.reinit_events, b.diagnostics.reinit_events);
}

#[test]
fn disappearance_halts_with_empty_masks() {
    let spec = disappearing_scene(0);
    let seq = render(&spec).unwrap();
    let (mut tr, mut sg) = oracles(&spec);
    let config = PipelineConfig {
        reinit: ReinitVariant::A,
        ..Default::default()
    };
    let out = run_semisupervised(&seq, &config, &mut tr, &mut sg).unwrap();
    let id = ObjectId(1);
    let halt = out.diagnostics.disappeared[&id];
    assert!(halt <= 8);
    let masks = out.masks();
    for t in halt + 1..seq.len() {
        assert_eq!(masks[&id][t].as_ref().unwrap().area(), 0);
    }
    for t in 7..seq.len() {
        let gt = seq.gt[&id][t].as_ref().map_or(0, BinaryMask::area);
        assert_eq!(gt, 0);
        assert_eq!(masks[&id][t].as_ref().unwrap().area(), 0, "false positive at {t}");
    }
}

#[test]
fn standard_suite_is_reproduced_exactly() {
    for spec in standard_suite(0) {
        let seq = render(&spec).unwrap();
        let (mut tr, mut sg) = oracles(&spec);
        let out = run_semisupervised(&seq, &PipelineConfig::default(), &mut tr, &mut sg).unwrap();
        assert_eq!(score_run(&seq, &out).unwrap().jf, 1.0, "{}", spec.name);
    }
}

#[test]
fn seed_validation() {
    let spec = standard_suite(0).remove(1);
    let seq = render(&spec).unwrap();
    let config = PipelineConfig::default();
    let id = ObjectId(1);
    let go = |seeds: BTreeMap<ObjectId, Seed>, frames: &[Frame]| {
        let (mut tr, mut sg) = oracles(&spec);
        run(frames, &seeds, &config, &mut tr, &mut sg)
    };
    let one = |s: Seed| BTreeMap::from([(id, s)]);
    assert!(go(one(Seed::Points { frame: 99, points: vec![LabeledPoint::positive(5.0, 5.0, id)] }), &seq.frames).is_err());
    assert!(go(one(Seed::Points { frame: 0, points: vec![LabeledPoint::negative(5.0, 5.0, id)] }), &seq.frames).is_err());
    assert!(go(one(Seed::Points { frame: 0, points: vec![LabeledPoint::positive(500.0, 5.0, id)] }), &seq.frames).is_err());
    assert!(go(
        one(Seed::Points { frame: 0, points: vec![LabeledPoint::positive(5.0, 5.0, ObjectId(2))] }),
        &seq.frames
    )
    .is_err());
    assert!(go(one(Seed::Mask { frame: 0, mask: BinaryMask::new(3, 3) }), &seq.frames).is_err());
    assert!(go(BTreeMap::new(), &[]).is_err());
    assert!(go(seed_points(&seq, &config).unwrap(), &seq.frames[1..]).is_err());
    assert!(go(seed_points(&seq, &config).unwrap(), &seq.frames).is_ok());
}
