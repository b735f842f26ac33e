//! MOTS-style instance tracks to semi-supervised VOS.
//!
//! Input per sequence: `images/` with the frames, `masks/<frame>.png` holding
//! one instance value per pixel (indexed, or 8/16-bit grayscale), and
//! `tracks.json` listing `{value, track_id, crowd, ignored}` per instance value.
//! Output: a DAVIS-layout sequence with object ids `1..=100` in order of first
//! appearance (ties by track id) and a `mapping.json` back to track ids.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::labelmap::{read_label_png, write_indexed_png, LabelMap};
use super::{frame_files, sorted_entries, stem};
use crate::error::{Error, Result};

pub const MAX_OBJECTS_PER_VIDEO: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotsTrack {
    /// Pixel value of this instance in the mask images.
    pub value: u16,
    pub track_id: u64,
    #[serde(default)]
    pub crowd: bool,
    #[serde(default)]
    pub ignored: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TracksFile {
    tracks: Vec<MotsTrack>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvertedObject {
    pub object: u32,
    pub track_id: u64,
    pub first_frame: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MotsConversion {
    pub objects: Vec<ConvertedObject>,
    pub dropped_flagged: Vec<u64>,
    pub dropped_empty: Vec<u64>,
    pub dropped_overflow: Vec<u64>,
    #[serde(skip)]
    pub labels: Vec<LabelMap>,
}

/// Converts one sequence's instance masks. Crowd and ignored tracks are
/// removed, tracks that never appear are dropped, and of the rest the 100
/// earliest-appearing are kept.
pub fn convert_mots(masks: &[LabelMap], tracks: &[MotsTrack]) -> Result<MotsConversion> {
    let mut by_value: HashMap<u16, &MotsTrack> = HashMap::new();
    for t in tracks {
        if t.value == 0 {
            return Err(Error::dataset("instance value 0 is reserved for background"));
        }
        if by_value.insert(t.value, t).is_some() {
            return Err(Error::dataset(format!("instance value {} listed twice", t.value)));
        }
    }
    if let Some(m) = masks.first() {
        if masks.iter().any(|o| o.width != m.width || o.height != m.height) {
            return Err(Error::dataset("instance masks differ in size"));
        }
    }
    let mut first: HashMap<u16, usize> = HashMap::new();
    for (t, m) in masks.iter().enumerate() {
        for v in m.present() {
            first.entry(v).or_insert(t);
        }
    }
    let mut dropped_flagged = Vec::new();
    let mut dropped_empty = Vec::new();
    let mut candidates: Vec<(usize, u64, u16)> = Vec::new();
    for t in tracks {
        if t.crowd || t.ignored {
            dropped_flagged.push(t.track_id);
        } else if let Some(&f) = first.get(&t.value) {
            candidates.push((f, t.track_id, t.value));
        } else {
            log::warn!("track {} never appears; dropped", t.track_id);
            dropped_empty.push(t.track_id);
        }
    }
    candidates.sort();
    let dropped_overflow = candidates
        .iter()
        .skip(MAX_OBJECTS_PER_VIDEO)
        .map(|c| c.1)
        .collect();
    candidates.truncate(MAX_OBJECTS_PER_VIDEO);
    let mut remap = vec![0u16; u16::MAX as usize + 1];
    let objects = candidates
        .iter()
        .enumerate()
        .map(|(k, &(f, track_id, value))| {
            remap[value as usize] = k as u16 + 1;
            ConvertedObject {
                object: k as u32 + 1,
                track_id,
                first_frame: f,
            }
        })
        .collect();
    let labels = masks
        .iter()
        .map(|m| LabelMap {
            width: m.width,
            height: m.height,
            labels: m.labels.iter().map(|&v| remap[v as usize]).collect(),
        })
        .collect();
    dropped_flagged.sort_unstable();
    dropped_empty.sort_unstable();
    Ok(MotsConversion {
        objects,
        dropped_flagged,
        dropped_empty,
        dropped_overflow,
        labels,
    })
}

/// Converts every sequence directory under `input` into a DAVIS layout under
/// `output`.
pub fn convert_mots_dir(input: &Path, output: &Path) -> Result<BTreeMap<String, MotsConversion>> {
    let mut out = BTreeMap::new();
    for dir in sorted_entries(input)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir.file_name().unwrap().to_string_lossy().into_owned();
        let tracks: TracksFile = serde_json::from_slice(&fs::read(dir.join("tracks.json"))?)
            .map_err(|e| Error::dataset(format!("{name}/tracks.json: {e}")))?;
        let images = frame_files(&dir.join("images"))?;
        if images.is_empty() {
            return Err(Error::dataset(format!("{name} has no images")));
        }
        let masks = images
            .iter()
            .map(|p| {
                let m = dir.join("masks").join(format!("{}.png", stem(p)));
                if m.exists() {
                    read_label_png(&m)
                } else {
                    let (w, h) = image::image_dimensions(p)
                        .map_err(|e| Error::dataset(format!("{}: {e}", p.display())))?;
                    Ok(LabelMap::new(w, h))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let conv = convert_mots(&masks, &tracks.tracks)?;
        let img_out = output.join("JPEGImages").join(&name);
        let ann_out = output.join("Annotations").join(&name);
        fs::create_dir_all(&img_out)?;
        for (p, map) in images.iter().zip(&conv.labels) {
            fs::copy(p, img_out.join(p.file_name().unwrap()))?;
            write_indexed_png(map, &ann_out.join(format!("{}.png", stem(p))))?;
        }
        fs::write(ann_out.join("mapping.json"), serde_json::to_vec_pretty(&conv)?)?;
        out.insert(name, conv);
    }
    Ok(out)
}
