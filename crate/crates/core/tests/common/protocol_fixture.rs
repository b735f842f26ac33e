use std::io::Cursor;

use ptseg::backend::wire::{self, Message, WireFrame};
use ptseg::backend::{BackendServer, RemoteSegmenter, RemoteTracker, SegmenterBackend, Session, TrackerBackend};
use ptseg::synthetic::{render, standard_suite, Noise, OracleSegmenter, OracleTracker, SceneSpec};
use ptseg::{Error, Label, LabeledPoint, ObjectId, PriorHandle, TrajectoryBundle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn noisy_scene() -> SceneSpec {
    standard_suite(11)[3].clone().with_noise(Noise {
        boundary_dilation_px: 1,
        point_jitter_sigma: 0.7,
        occlusion_flip_prob: 0.05,
        mask_flip_prob: 0.01,
    })
}

pub fn server_for(spec: &SceneSpec) -> BackendServer {
    let spec = spec.clone();
    BackendServer::new(move || {
        Ok(Session {
            tracker: Some(Box::new(OracleTracker::new(&spec)?)),
            segmenter: Some(Box::new(OracleSegmenter::new(&spec)?)),
        })
    })
}

pub fn bundle_bits(b: &TrajectoryBundle) -> (usize, Vec<u32>, Vec<u32>, Vec<Label>, Vec<ObjectId>) {
    (
        b.start_frame,
        b.points.iter().flatten().flat_map(|p| p.iter().map(|v| v.to_bits())).collect(),
        b.occlusion.iter().flatten().map(|v| v.to_bits()).collect(),
        b.labels.clone(),
        b.objects.clone(),
    )
}

/// Runs a server over a fixed input stream and returns the replies it wrote.
pub fn serve_bytes(server: &BackendServer, input: Vec<u8>) -> (ptseg::Result<()>, Vec<Message>) {
    let mut out = Vec::new();
    let res = server.serve(Cursor::new(input), &mut out);
    let mut replies = Vec::new();
    let mut r = Cursor::new(out);
    while let Ok(Some(body)) = wire::read_frame(&mut r) {
        replies.push(Message::parse(&body).expect("server replies are well formed"));
    }
    (res, replies)
}

pub fn framed(body: &[u8]) -> Vec<u8> {
    let mut v = (body.len() as u32).to_be_bytes().to_vec();
    v.extend_from_slice(body);
    v
}

pub fn valid_segment_request(rng: &mut ChaCha8Rng, spec: &SceneSpec) -> serde_json::Value {
    let seq = render(spec).unwrap();
    let msg = Message::SegmentRequest {
        id: rng.gen(),
        frame: WireFrame::encode(&seq.frames[rng.gen_range(0..seq.len())]),
        points: vec![LabeledPoint::positive(30.0, 40.0, ObjectId(1))],
        prior: None,
    };
    serde_json::to_value(&msg).unwrap()
}

/// One malformed input stream; `case` selects the corruption family.
pub fn malformed(rng: &mut ChaCha8Rng, case: usize, template: &serde_json::Value) -> Vec<u8> {
    match case % 10 {
        // Raw noise.
        0 => (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect(),
        // Length prefix cut short.
        1 => (0..rng.gen_range(1..4)).map(|_| rng.gen()).collect(),
        // Body shorter than announced.
        2 => {
            let mut v = framed(b"{\"kind\":\"hello\",\"id\":1,\"version\":1}");
            v.truncate(rng.gen_range(5..v.len()));
            v
        }
        // Announced length beyond the limit.
        3 => {
            let mut v = (u32::MAX - rng.gen_range(0..1000)).to_be_bytes().to_vec();
            v.extend(b"{}");
            v
        }
        // Framed garbage bytes, then framed invalid UTF-8.
        4 => {
            let body: Vec<u8> = (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect();
            let mut v = framed(&body);
            v.extend(framed(&[0xff, 0xfe, b'{']));
            v
        }
        // Valid JSON of the wrong shape.
        5 => {
            let bodies = [
                "[]",
                "null",
                "42",
                "{\"kind\":7}",
                "{\"kind\":\"segment_request\"}",
                "{\"kind\":\"track_request\",\"id\":1,\"queries\":[],\"frames\":[]}",
                "{\"kind\":\"propose_request\",\"id\":1,\"frame\":null,\"max_proposals\":0}",
                "{\"kind\":\"error\",\"code\":\"x\",\"message\":\"y\"}",
                "{\"kind\":\"track_response\",\"id\":1}",
            ];
            framed(bodies[rng.gen_range(0..bodies.len())].as_bytes())
        }
        // A real request with one field corrupted.
        _ => {
            let mut v = template.clone();
            let pix = &mut v["frame"]["pixels"];
            match case % 10 {
                6 => pix["shape"] = serde_json::json!([rng.gen_range(0..300), rng.gen_range(0..300), 3]),
                7 => pix["dtype"] = serde_json::json!("f32"),
                8 => {
                    let mut data = pix["data"].as_str().unwrap().to_string();
                    let cut = rng.gen_range(0..data.len());
                    data.truncate(cut);
                    data.push('%');
                    pix["data"] = serde_json::json!(data);
                }
                _ => {
                    v["points"] = serde_json::json!([{
                        "x": rng.gen_range(-1e30f64..1e30),
                        "y": -1.0,
                        "label": if rng.gen_bool(0.5) { "positive" } else { "maybe" },
                        "object": rng.gen::<u32>()
                    }]);
                    v["prior"] = serde_json::json!(rng.gen::<u64>());
                }
            }
            framed(&serde_json::to_vec(&v).unwrap())
        }
    }
}


/// Sends `requests` random track, segment and propose calls through a loopback
/// connection and in process; panics on the first difference. Returns the
/// count of each kind.
pub fn compare_loopback(requests: usize, seed: u64) -> [usize; 3] {
    let spec = noisy_scene();
    let seq = render(&spec).unwrap();
    let server = server_for(&spec);
    let mut local_t = OracleTracker::new(&spec).unwrap();
    let mut local_s = OracleSegmenter::new(&spec).unwrap();
    let mut remote_t = RemoteTracker::new(server.loopback().unwrap()).unwrap();
    let mut remote_s = RemoteSegmenter::new(server.loopback().unwrap()).unwrap();
    assert_eq!(local_t.capabilities(), remote_t.capabilities());
    assert_eq!(local_s.capabilities(), remote_s.capabilities());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (spec.width as f32, spec.height as f32);
    let mut last_prior: Option<PriorHandle> = None;
    let mut kinds = [0usize; 3];
    for _ in 0..requests {
        let n = rng.gen_range(1..6);
        let points: Vec<LabeledPoint> = (0..n)
            .map(|_| LabeledPoint {
                x: rng.gen_range(0.0..w),
                y: rng.gen_range(0.0..h),
                label: if rng.gen_bool(0.7) { Label::Positive } else { Label::Negative },
                object: ObjectId(rng.gen_range(1..4)),
            })
            .collect();
        match rng.gen_range(0..3) {
            0 => {
                kinds[0] += 1;
                let t0 = rng.gen_range(0..seq.len() - 1);
                let t1 = rng.gen_range(t0 + 1..=seq.len());
                let frames = &seq.frames[t0..t1];
                let a = local_t.track(&points, frames).unwrap();
                let b = remote_t.track(&points, frames).unwrap();
                assert_eq!(bundle_bits(&a), bundle_bits(&b));
            }
            1 => {
                kinds[1] += 1;
                let frame = &seq.frames[rng.gen_range(0..seq.len())];
                let prior = if rng.gen_bool(0.5) { last_prior } else { None };
                let a = local_s.segment(frame, &points, prior).unwrap();
                let b = remote_s.segment(frame, &points, prior).unwrap();
                assert_eq!(a, b);
                last_prior = a.prior;
            }
            _ => {
                kinds[2] += 1;
                let frame = &seq.frames[rng.gen_range(0..seq.len())];
                let k = rng.gen_range(1..5);
                let a = local_s.propose_masks(frame, k).unwrap();
                let b = remote_s.propose_masks(frame, k).unwrap();
                assert_eq!(a, b);
            }
        }
    }
    kinds
}

/// Feeds `cases` malformed streams to a backend server; panics if the server
/// panics or answers with anything but an error. Returns the replies seen.
pub fn fuzz_backend_server(cases: usize, seed: u64) -> usize {
    let spec = standard_suite(0)[1].clone();
    let server = server_for(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = valid_segment_request(&mut rng, &spec);
    let mut answered = 0;
    for case in 0..cases {
        let input = malformed(&mut rng, case, &template);
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| serve_bytes(&server, input)));
        let (res, replies) = outcome.unwrap_or_else(|_| panic!("case {case} panicked"));
        if let Err(e) = &res {
            assert!(matches!(e, Error::Transport(_)), "case {case}: {e:?}");
        }
        for r in &replies {
            answered += 1;
            assert!(matches!(r, Message::Error { .. }), "case {case} got {r:?}");
        }
    }
    answered
}
