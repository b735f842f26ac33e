use ptseg::backend::{SegmenterBackend, TrackerBackend};
use ptseg::datasets::{run_semisupervised, score_run};
use ptseg::synthetic::{
    render, standard_suite, Geometry, Motion, Noise, OracleSegmenter, OracleTracker, SceneSpec, ShapeSpec,
};
use ptseg::{BinaryMask, LabeledPoint, ObjectId, PipelineConfig};
use rayon::prelude::*;

fn shape(geometry: Geometry, motion: Motion, depth: i32) -> ShapeSpec {
    ShapeSpec {
        geometry,
        color: [200, 40, 40],
        motion,
        depth,
    }
}

fn linear(x: f64, y: f64, vx: f64, vy: f64) -> Motion {
    Motion::Linear {
        x,
        y,
        vx,
        vy,
        start: None,
        stop: None,
    }
}

fn scene(width: u32, height: u32, frames: usize, shapes: Vec<ShapeSpec>, occluders: Vec<ShapeSpec>) -> SceneSpec {
    SceneSpec {
        name: "t".into(),
        width,
        height,
        frames,
        background: [0, 0, 0],
        shapes,
        occluders,
        noise: Noise::default(),
        seed: 1,
    }
}

/// A radius-5 disk moving +3 px/frame along y = 16 behind a wall covering x in [22, 42).
fn crossing() -> SceneSpec {
    let mut wall = shape(
        Geometry::Rect {
            width: 20.0,
            height: 32.0,
        },
        Motion::Constant { x: 32.0, y: 16.0 },
        5,
    );
    wall.color = [255, 255, 255];
    scene(
        64,
        32,
        18,
        vec![shape(Geometry::Disk { radius: 5.0 }, linear(6.0, 16.0, 3.0, 0.0), 0)],
        vec![wall],
    )
}

fn disk_area(r: f64) -> usize {
    let n = r.ceil() as i64 + 1;
    (-n..n)
        .flat_map(|y| (-n..n).map(move |x| (x, y)))
        .filter(|&(x, y)| (x as f64 + 0.5).powi(2) + (y as f64 + 0.5).powi(2) <= r * r)
        .count()
}

#[test]
fn static_disk_renders_identical_masks() {
    let s = scene(
        32,
        32,
        4,
        vec![shape(Geometry::Disk { radius: 6.0 }, Motion::Constant { x: 16.0, y: 16.0 }, 0)],
        vec![],
    );
    let seq = render(&s).unwrap();
    let gt = &seq.gt[&ObjectId(1)];
    assert_eq!(gt.len(), 4);
    assert!(gt.iter().all(|m| m == &gt[0]));
    assert_eq!(gt[0].as_ref().unwrap().area(), disk_area(6.0));
    assert_eq!(render(&s).unwrap().frames, seq.frames);
}

#[test]
fn occluder_crossing_shrinks_vanishes_and_reappears() {
    let seq = render(&crossing()).unwrap();
    let areas: Vec<usize> = seq.gt[&ObjectId(1)].iter().map(|m| m.as_ref().unwrap().area()).collect();
    let full = disk_area(5.0);
    // Centre x = 6 + 3t; the disk spans [x - 5, x + 5].
    for (t, &a) in areas.iter().enumerate() {
        let x = 6.0 + 3.0 * t as f64;
        if x + 5.0 <= 22.0 || x - 5.0 >= 42.0 {
            assert_eq!(a, full, "frame {t}");
        } else if x - 5.0 >= 22.0 && x + 5.0 <= 42.0 {
            assert_eq!(a, 0, "frame {t}");
        } else {
            assert!(a > 0 && a < full, "frame {t}: {a}");
        }
    }
    assert!(areas[3] > areas[5] && areas[5] > areas[6]);
    assert_eq!(areas[8], 0);
    assert!(areas[12] < areas[13] && areas[13] <= areas[15]);
}

#[test]
fn lower_shape_loses_the_overlap() {
    let a = shape(
        Geometry::Rect {
            width: 12.0,
            height: 12.0,
        },
        Motion::Constant { x: 12.0, y: 12.0 },
        0,
    );
    let b = shape(
        Geometry::Rect {
            width: 12.0,
            height: 12.0,
        },
        Motion::Constant { x: 18.0, y: 18.0 },
        1,
    );
    let seq = render(&scene(32, 32, 1, vec![a, b], vec![])).unwrap();
    let ma = seq.gt[&ObjectId(1)][0].as_ref().unwrap();
    let mb = seq.gt[&ObjectId(2)][0].as_ref().unwrap();
    assert_eq!(mb.area(), 144);
    assert_eq!(ma.area(), 144 - 36);
    assert_eq!(ma.intersection_area(mb), 0);
}

#[test]
fn zero_noise_tracker_is_exact_and_occlusion_follows_geometry() {
    let spec = crossing();
    let seq = render(&spec).unwrap();
    let mut tr = OracleTracker::new(&spec).unwrap();
    let q = [
        LabeledPoint::positive(6.0, 16.0, ObjectId(1)),
        LabeledPoint::positive(60.0, 4.0, ObjectId(1)),
    ];
    let b = tr.track(&q, &seq.frames).unwrap();
    for t in 0..seq.len() {
        let x = 6.0 + 3.0 * t as f32;
        assert_eq!(b.points[t][0], [x, 16.0]);
        // The centre is covered exactly while x lies in [22, 42).
        let hidden = (22.0..42.0).contains(&x) || x >= 64.0;
        assert_eq!(b.occlusion[t][0], if hidden { 1.0 } else { 0.0 }, "frame {t}");
        // Background queries stay put.
        assert_eq!(b.points[t][1], [60.0, 4.0]);
    }
    assert_eq!(b.occlusion[0], vec![0.0, 0.0]);
}

#[test]
fn tracker_jitter_rms_matches_sigma() {
    let sigma = 1.0;
    let spec = scene(
        128,
        128,
        6,
        vec![shape(Geometry::Disk { radius: 40.0 }, linear(64.0, 64.0, 1.0, 0.5), 0)],
        vec![],
    )
    .with_noise(Noise {
        point_jitter_sigma: sigma,
        ..Noise::default()
    });
    let seq = render(&spec).unwrap();
    let mut tr = OracleTracker::new(&spec).unwrap();
    let q: Vec<LabeledPoint> = (0..100)
        .map(|i| LabeledPoint::positive(40.0 + (i % 10) as f32 * 5.0, 40.0 + (i / 10) as f32 * 5.0, ObjectId(1)))
        .collect();
    let b = tr.track(&q, &seq.frames).unwrap();
    let (mut sum, mut n) = (0.0, 0);
    for t in 1..seq.len() {
        for (i, p) in q.iter().enumerate() {
            let ex = p.x as f64 + t as f64;
            let ey = p.y as f64 + 0.5 * t as f64;
            let [x, y] = b.points[t][i];
            sum += (x as f64 - ex).powi(2) + (y as f64 - ey).powi(2);
            n += 1;
        }
    }
    let rms = (sum / n as f64).sqrt();
    let expect = sigma * 2f64.sqrt();
    assert!((rms - expect).abs() <= 0.2 * expect, "rms {rms}");
}

fn two_overlapping() -> SceneSpec {
    let a = shape(
        Geometry::Rect {
            width: 20.0,
            height: 20.0,
        },
        Motion::Constant { x: 20.0, y: 20.0 },
        1,
    );
    let b = shape(
        Geometry::Rect {
            width: 20.0,
            height: 20.0,
        },
        Motion::Constant { x: 36.0, y: 20.0 },
        0,
    );
    scene(64, 40, 2, vec![a, b], vec![])
}

#[test]
fn segmenter_majority_and_subtraction_rules() {
    let spec = two_overlapping();
    let seq = render(&spec).unwrap();
    let (ga, gb) = (
        seq.gt[&ObjectId(1)][0].clone().unwrap(),
        seq.gt[&ObjectId(2)][0].clone().unwrap(),
    );
    let mut seg = OracleSegmenter::new(&spec).unwrap();
    let f = &seq.frames[0];
    let pa = |x, y| LabeledPoint::positive(x, y, ObjectId(1));

    assert_eq!(seg.segment(f, &[pa(15.0, 15.0)], None).unwrap().mask, ga);
    let split = [pa(12.0, 12.0), pa(14.0, 20.0), pa(20.0, 25.0), pa(40.0, 20.0)];
    assert_eq!(seg.segment(f, &split, None).unwrap().mask, ga);
    // Negative on the target itself changes nothing.
    let self_neg = [pa(15.0, 15.0), LabeledPoint::negative(16.0, 16.0, ObjectId(1))];
    assert_eq!(seg.segment(f, &self_neg, None).unwrap().mask, ga);
    // All positives on background: empty.
    assert!(seg.segment(f, &[pa(60.0, 38.0)], None).unwrap().mask.is_empty());

    // With boundary dilation the answer spills onto B; a negative on B removes it.
    let noisy = spec.clone().with_noise(Noise {
        boundary_dilation_px: 2,
        ..Noise::default()
    });
    let mut seg = OracleSegmenter::new(&noisy).unwrap();
    let spill = seg.segment(f, &[pa(15.0, 15.0)], None).unwrap().mask;
    assert!(spill.intersection_area(&gb) > 0);
    let neg = [pa(15.0, 15.0), LabeledPoint::negative(40.0, 20.0, ObjectId(1))];
    assert_eq!(seg.segment(f, &neg, None).unwrap().mask, spill.and_not(&gb));
}

#[test]
fn dilated_answer_iou_is_the_area_ratio() {
    let spec = scene(
        64,
        64,
        1,
        vec![shape(Geometry::Disk { radius: 10.0 }, Motion::Constant { x: 32.0, y: 32.0 }, 0)],
        vec![],
    )
    .with_noise(Noise {
        boundary_dilation_px: 2,
        ..Noise::default()
    });
    let seq = render(&spec).unwrap();
    let gt = seq.gt[&ObjectId(1)][0].clone().unwrap();
    // Pixels within Euclidean distance 2 of the shape, by enumeration.
    let dilated = BinaryMask::from_fn(64, 64, |x, y| {
        gt.iter_set().any(|(gx, gy)| {
            let (dx, dy) = (gx as i64 - x as i64, gy as i64 - y as i64);
            dx * dx + dy * dy <= 4
        })
    });
    let mut seg = OracleSegmenter::new(&spec).unwrap();
    let m = seg
        .segment(&seq.frames[0], &[LabeledPoint::positive(32.0, 32.0, ObjectId(1))], None)
        .unwrap()
        .mask;
    assert_eq!(m, dilated);
    assert_eq!(m.iou(&gt), gt.area() as f64 / dilated.area() as f64);
}

#[test]
fn prior_replays_and_stale_handles_fail() {
    let spec = two_overlapping().with_noise(Noise {
        mask_flip_prob: 0.05,
        ..Noise::default()
    });
    let seq = render(&spec).unwrap();
    let mut seg = OracleSegmenter::new(&spec).unwrap();
    let p = [LabeledPoint::positive(15.0, 15.0, ObjectId(1))];
    let first = seg.segment(&seq.frames[0], &p, None).unwrap();
    let again = seg.segment(&seq.frames[0], &p, first.prior).unwrap();
    assert_eq!(first.mask, again.mask);
    assert_ne!(first.prior, again.prior);
    assert!(seg.segment(&seq.frames[0], &p, Some(ptseg::PriorHandle(999_999))).is_err());
}

#[test]
fn proposals_follow_area_order() {
    let shapes = vec![
        shape(Geometry::Disk { radius: 6.0 }, Motion::Constant { x: 12.0, y: 12.0 }, 0),
        shape(
            Geometry::Rect {
                width: 20.0,
                height: 16.0,
            },
            Motion::Constant { x: 44.0, y: 14.0 },
            0,
        ),
        shape(
            Geometry::Polygon {
                vertices: vec![[-8.0, 6.0], [8.0, 6.0], [0.0, -8.0]],
            },
            Motion::Constant { x: 24.0, y: 44.0 },
            0,
        ),
    ];
    let spec = scene(64, 64, 1, shapes, vec![]);
    let seq = render(&spec).unwrap();
    let mut seg = OracleSegmenter::new(&spec).unwrap();
    let props = seg.propose_masks(&seq.frames[0], 100).unwrap();
    assert_eq!(props.len(), 3);
    let mut gts: Vec<BinaryMask> = seq.gt.values().map(|v| v[0].clone().unwrap()).collect();
    gts.sort_by_key(|m| std::cmp::Reverse(m.area()));
    assert_eq!(props, gts);
    assert_eq!(seg.propose_masks(&seq.frames[0], 1).unwrap(), vec![gts[0].clone()]);

    let blank = scene(32, 32, 1, vec![], vec![]);
    let bseq = render(&blank).unwrap();
    let mut bseg = OracleSegmenter::new(&blank).unwrap();
    assert!(bseg.propose_masks(&bseq.frames[0], 5).unwrap().is_empty());
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = crossing();
    s.shapes[0].geometry = Geometry::Disk { radius: 0.0 };
    assert!(render(&s).is_err());
    let mut s = crossing();
    s.shapes[0].motion = Motion::Constant { x: -4.0, y: 3.0 };
    assert!(render(&s).is_err());
}

fn suite_mean_j(noise: Noise, seeds: &[u64]) -> f64 {
    let config = PipelineConfig::default();
    let js: Vec<f64> = seeds
        .par_iter()
        .flat_map_iter(|&seed| standard_suite(seed).into_iter().map(move |s| s.with_noise(noise)))
        .map(|spec| {
            let seq = render(&spec).unwrap();
            let mut t = OracleTracker::new(&spec).unwrap();
            let mut s = OracleSegmenter::new(&spec).unwrap();
            let run = run_semisupervised(&seq, &config, &mut t, &mut s).unwrap();
            score_run(&seq, &run).unwrap().j_mean
        })
        .collect();
    js.iter().sum::<f64>() / js.len() as f64
}

#[test]
fn mean_j_degrades_monotonically_with_noise() {
    let seeds = [0, 1, 2, 3, 4];
    let grids: [(&str, [Noise; 3]); 4] = [
        ("dilation", [0, 1, 2].map(|d| Noise {
            boundary_dilation_px: d,
            ..Noise::default()
        })),
        ("jitter", [0.0, 1.0, 3.0].map(|s| Noise {
            point_jitter_sigma: s,
            ..Noise::default()
        })),
        ("occlusion flips", [0.0, 0.1, 0.3].map(|p| Noise {
            occlusion_flip_prob: p,
            ..Noise::default()
        })),
        ("mask flips", [0.0, 0.01, 0.05].map(|p| Noise {
            mask_flip_prob: p,
            ..Noise::default()
        })),
    ];
    for (name, grid) in grids {
        let js: Vec<f64> = grid.iter().map(|&n| suite_mean_j(n, &seeds)).collect();
        assert_eq!(js[0], 1.0, "{name}: zero noise must be exact");
        for w in js.windows(2) {
            assert!(w[1] <= w[0] + 0.01, "{name}: {js:?}");
        }
        assert!(js[2] < js[0], "{name} has no effect: {js:?}");
    }
}
