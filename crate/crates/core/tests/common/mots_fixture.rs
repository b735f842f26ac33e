use std::fs;
use std::path::Path;

use image::{GrayImage, Luma, Rgb, RgbImage};
use ptseg::datasets::MotsTrack;

pub const SIDE: u32 = 16;
pub const FRAMES: usize = 16;
pub const FLAGGED: [u16; 5] = [3, 17, 40, 88, 120];

pub fn track_id(v: u16) -> u64 {
    // Not monotone in the instance value, so ordering must come from the data.
    (v as u64 * 37) % 1009 + 5000
}

/// Value `v` occupies pixel `v` from frame `(v - 1) / 10` on.
pub fn first_frame(v: u16) -> usize {
    (v as usize - 1) / 10
}

pub fn write_mots_fixture(root: &Path) -> Vec<MotsTrack> {
    let seq = root.join("seq0");
    fs::create_dir_all(seq.join("images")).unwrap();
    fs::create_dir_all(seq.join("masks")).unwrap();
    for t in 0..FRAMES {
        let img = RgbImage::from_pixel(SIDE, SIDE, Rgb([t as u8 * 10, 0, 0]));
        img.save(seq.join("images").join(format!("{t:06}.png"))).unwrap();
        let mut m = GrayImage::new(SIDE, SIDE);
        for v in 1..=150u16 {
            if first_frame(v) <= t {
                m.put_pixel(v as u32 % SIDE, v as u32 / SIDE, Luma([v as u8]));
            }
        }
        m.save(seq.join("masks").join(format!("{t:06}.png"))).unwrap();
    }
    let tracks: Vec<MotsTrack> = (1..=150u16)
        .map(|v| MotsTrack {
            value: v,
            track_id: track_id(v),
            crowd: FLAGGED[..3].contains(&v),
            ignored: FLAGGED[3..].contains(&v),
        })
        .collect();
    fs::write(
        seq.join("tracks.json"),
        serde_json::to_vec(&serde_json::json!({ "tracks": tracks })).unwrap(),
    )
    .unwrap();
    tracks
}

