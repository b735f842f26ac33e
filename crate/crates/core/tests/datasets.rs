use std::collections::BTreeSet;

use image::GrayImage;
use ptseg::datasets::labelmap::{read_indexed_png, write_indexed_png, LabelMap};
use ptseg::datasets::{
    convert_mots, convert_mots_dir, evaluate_dirs, frame_name, load_davis_dir, load_davis_sequence,
    resize_sequence, run_first_frame_proposals, run_semisupervised, seed_points, write_davis_sequence,
    write_masks, MotsTrack, MAX_OBJECTS_PER_VIDEO,
};
use ptseg::pipeline::Seed;
use ptseg::synthetic::{render, standard_suite, Geometry, Motion, Noise, OracleSegmenter, OracleTracker, SceneSpec, ShapeSpec};
use ptseg::{ObjectId, PipelineConfig};

mod common;
use common::mots_fixture::{first_frame, track_id, write_mots_fixture, FLAGGED};

#[test]
fn mots_fixture_keeps_one_hundred_unflagged_objects() {
    let dir = tempfile::tempdir().unwrap();
    let (input, output) = (dir.path().join("mots"), dir.path().join("vos"));
    let tracks = write_mots_fixture(&input);
    let conv = convert_mots_dir(&input, &output).unwrap().remove("seq0").unwrap();

    assert_eq!(conv.objects.len(), MAX_OBJECTS_PER_VIDEO);
    assert_eq!(conv.objects.len(), 100);
    let flagged: BTreeSet<u64> = FLAGGED.iter().map(|&v| track_id(v)).collect();
    assert_eq!(conv.dropped_flagged.iter().copied().collect::<BTreeSet<_>>(), flagged);
    assert_eq!(conv.dropped_overflow.len(), 45);

    // Independent expectation: unflagged tracks by (first frame, track id), first 100.
    let mut expected: Vec<(usize, u64)> = tracks
        .iter()
        .filter(|t| !t.crowd && !t.ignored)
        .map(|t| (first_frame(t.value), t.track_id))
        .collect();
    expected.sort();
    expected.truncate(100);
    let got: Vec<(usize, u64)> = conv.objects.iter().map(|o| (o.first_frame, o.track_id)).collect();
    assert_eq!(got, expected);
    assert!(conv.objects.iter().all(|o| !flagged.contains(&o.track_id)));

    // The written dataset seeds each object at its first appearance.
    let dp = load_davis_sequence(&output, "seq0").unwrap();
    assert_eq!(dp.sequence.gt.len(), 100);
    let appear = dp.first_appearances();
    for o in &conv.objects {
        assert_eq!(appear[&ObjectId(o.object)], o.first_frame);
    }
    let seeds = seed_points(&dp.sequence, &PipelineConfig::default()).unwrap();
    assert_eq!(seeds.len(), 100);
    for o in &conv.objects {
        assert_eq!(seeds[&ObjectId(o.object)].frame(), o.first_frame);
    }
    assert!(output.join("Annotations/seq0/mapping.json").exists());
}

#[test]
fn mots_examples() {
    let mut m = LabelMap::new(3, 1);
    m.labels = vec![1, 2, 3];
    let t = |value, track_id, crowd| MotsTrack {
        value,
        track_id,
        crowd,
        ignored: false,
    };
    let c = convert_mots(&[m.clone()], &[t(1, 1, false), t(2, 2, true), t(3, 3, false)]).unwrap();
    assert_eq!(c.objects.len(), 2);
    assert!(c.dropped_flagged == vec![2]);

    let mut frames = vec![LabelMap::new(2, 2); 9];
    frames[7].labels[0] = 4;
    let c = convert_mots(&frames, &[t(4, 9, false)]).unwrap();
    assert_eq!(c.objects[0].first_frame, 7);

    assert!(convert_mots(&[m.clone()], &[t(0, 1, false)]).is_err());
    assert!(convert_mots(&[m], &[t(1, 1, false), t(1, 2, false)]).is_err());
}

#[test]
fn davis_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let specs = standard_suite(2);
    for s in &specs[..3] {
        write_davis_sequence(dir.path(), &render(s).unwrap()).unwrap();
    }
    let loaded = load_davis_dir(dir.path()).unwrap();
    assert_eq!(loaded.len(), 3);
    for (s, dp) in specs.iter().zip(&loaded) {
        let seq = render(s).unwrap();
        assert_eq!(dp.sequence.name, seq.name);
        assert_eq!(dp.sequence.frames, seq.frames);
        assert_eq!(dp.frame_names[1], frame_name(1));
        for (id, masks) in &seq.gt {
            for (t, m) in masks.iter().enumerate() {
                let m = m.clone().unwrap();
                let got = dp.sequence.gt[id][t].clone().unwrap();
                assert_eq!(got, m, "{} object {id} frame {t}", seq.name);
            }
        }
    }
}

#[test]
fn label_png_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    // Object 2 is absent from this frame: it does not exist in the map at all.
    let mut map = LabelMap::new(4, 4);
    map.labels[5] = 1;
    let p = dir.path().join("a.png");
    write_indexed_png(&map, &p).unwrap();
    let back = read_indexed_png(&p).unwrap();
    assert_eq!(back, map);
    assert_eq!(back.present(), vec![1]);
    assert_eq!(back.mask_of(2).area(), 0);

    let g = dir.path().join("g.png");
    GrayImage::new(4, 4).save(&g).unwrap();
    assert!(read_indexed_png(&g).is_err());
    assert!(load_davis_dir(&dir.path().join("missing")).is_err());
}

#[test]
fn evaluate_dirs_scores_written_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let (gt_root, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    let spec = standard_suite(0).remove(2);
    let seq = render(&spec).unwrap();
    write_davis_sequence(&gt_root, &seq).unwrap();
    let names: Vec<String> = (0..seq.len()).map(frame_name).collect();
    let dest = pred.join(&seq.name);
    write_masks(&dest, &names, &seq.gt, seq.width(), seq.height()).unwrap();
    let score = evaluate_dirs(&pred, &gt_root).unwrap();
    assert_eq!(score.jf, 1.0);
    assert_eq!(score.missing_predictions, 0);

    // Erase one object's prediction entirely.
    let mut partial = seq.gt.clone();
    partial.remove(&ObjectId(1));
    write_masks(&dest, &names, &partial, seq.width(), seq.height()).unwrap();
    let score = evaluate_dirs(&pred, &gt_root).unwrap();
    assert!(score.jf < 1.0);
}

#[test]
fn resize_keeps_masks_aligned() {
    let seq = render(&standard_suite(0).remove(0)).unwrap();
    let big = resize_sequence(&seq, 256).unwrap();
    assert_eq!((big.width(), big.height()), (256, 256));
    let m = seq.gt[&ObjectId(1)][0].as_ref().unwrap();
    let b = big.gt[&ObjectId(1)][0].as_ref().unwrap();
    assert_eq!(b.area(), 4 * m.area());
}

#[test]
fn seeding_follows_the_config() {
    let spec = standard_suite(0).remove(2);
    let seq = render(&spec).unwrap();
    let config = PipelineConfig::default();
    for (_, seed) in seed_points(&seq, &config).unwrap() {
        let Seed::Points { points, .. } = seed else { panic!("points seed expected") };
        assert_eq!(points.iter().filter(|p| p.is_positive()).count(), 8);
        assert_eq!(points.iter().filter(|p| !p.is_positive()).count(), 1);
    }
}

fn shape(geometry: Geometry, motion: Motion, depth: i32, color: [u8; 3]) -> ShapeSpec {
    ShapeSpec {
        geometry,
        color,
        motion,
        depth,
    }
}

#[test]
fn object_seeded_on_the_last_frame() {
    // A shape hidden under a larger one until it steps out on the last frame.
    let spec = SceneSpec {
        name: "late".into(),
        width: 64,
        height: 64,
        frames: 6,
        background: [0, 0, 0],
        shapes: vec![
            shape(Geometry::Disk { radius: 12.0 }, Motion::Constant { x: 20.0, y: 32.0 }, 1, [200, 0, 0]),
            shape(
                Geometry::Disk { radius: 4.0 },
                Motion::Linear {
                    x: 20.0,
                    y: 32.0,
                    vx: 30.0,
                    vy: 0.0,
                    start: Some(4.0),
                    stop: None,
                },
                0,
                [0, 200, 0],
            ),
        ],
        occluders: vec![],
        noise: Noise::default(),
        seed: 0,
    };
    let seq = render(&spec).unwrap();
    assert_eq!(seq.first_appearance(ObjectId(2)), Some(5));
    let (mut tr, mut sg) = (OracleTracker::new(&spec).unwrap(), OracleSegmenter::new(&spec).unwrap());
    let out = run_semisupervised(&seq, &PipelineConfig::default(), &mut tr, &mut sg).unwrap();
    let p = &out.predictions[&ObjectId(2)];
    assert!(p[..5].iter().all(Option::is_none));
    assert_eq!(p[5].as_ref().unwrap().mask, seq.gt[&ObjectId(2)][5].clone().unwrap());

    // Proposals come from frame 0 only: the hidden shape is never picked up.
    let (mut tr, mut sg) = (OracleTracker::new(&spec).unwrap(), OracleSegmenter::new(&spec).unwrap());
    let out = run_first_frame_proposals(&seq, 5, &PipelineConfig::default(), &mut tr, &mut sg).unwrap();
    assert_eq!(out.predictions.len(), 1);
    let m = out.masks();
    assert_eq!(m[&ObjectId(1)][5].as_ref().unwrap(), seq.gt[&ObjectId(1)][5].as_ref().unwrap());
}

#[test]
fn proposals_pick_the_largest_first() {
    let spec = standard_suite(0).remove(2);
    let seq = render(&spec).unwrap();
    let largest = seq
        .gt
        .iter()
        .max_by_key(|(_, v)| v[0].as_ref().unwrap().area())
        .map(|(_, v)| v.clone())
        .unwrap();
    let (mut tr, mut sg) = (OracleTracker::new(&spec).unwrap(), OracleSegmenter::new(&spec).unwrap());
    let out = run_first_frame_proposals(&seq, 1, &PipelineConfig::default(), &mut tr, &mut sg).unwrap();
    let m = out.masks();
    assert_eq!(m.len(), 1);
    let got: Vec<_> = m[&ObjectId(1)].clone();
    assert_eq!(got, largest);
}
