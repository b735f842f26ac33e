//! Indexed-PNG label maps: one integer label per pixel, 0 = background.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Seek, Write};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u16>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn mask_of(&self, label: u16) -> BinaryMask {
        BinaryMask::from_fn(self.width, self.height, |x, y| self.get(x, y) == label)
    }

    /// Distinct non-zero labels, ascending.
    pub fn present(&self) -> Vec<u16> {
        let mut seen = vec![false; u16::MAX as usize + 1];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (1..=u16::MAX).filter(|&l| seen[l as usize]).collect()
    }

    /// Paints masks in order, so later masks win where they overlap.
    pub fn paint(&mut self, label: u16, mask: &BinaryMask) -> Result<()> {
        if mask.width() != self.width || mask.height() != self.height {
            return Err(Error::invalid("mask size does not match the label map"));
        }
        for (x, y) in mask.iter_set() {
            self.labels[(y * self.width + x) as usize] = label;
        }
        Ok(())
    }
}

/// The PASCAL VOC colour map, as used by DAVIS annotations.
pub fn voc_palette() -> Vec<u8> {
    let mut pal = Vec::with_capacity(256 * 3);
    for i in 0..256u32 {
        let (mut r, mut g, mut b) = (0u8, 0u8, 0u8);
        let mut c = i;
        for j in 0..8 {
            r |= (((c >> 0) & 1) as u8) << (7 - j);
            g |= (((c >> 1) & 1) as u8) << (7 - j);
            b |= (((c >> 2) & 1) as u8) << (7 - j);
            c >>= 3;
        }
        pal.extend_from_slice(&[r, g, b]);
    }
    pal
}

fn unpack(row: &[u8], depth: BitDepth, width: usize, out: &mut Vec<u16>) {
    match depth {
        BitDepth::Eight => out.extend(row[..width].iter().map(|&v| v as u16)),
        BitDepth::Sixteen => out.extend(
            row.chunks_exact(2)
                .take(width)
                .map(|c| u16::from_be_bytes([c[0], c[1]])),
        ),
        _ => {
            let bits = depth as usize;
            let per_byte = 8 / bits;
            let mask = (1u16 << bits) - 1;
            out.extend((0..width).map(|i| {
                let byte = row[i / per_byte] as u16;
                let shift = 8 - bits * (i % per_byte + 1);
                (byte >> shift) & mask
            }));
        }
    }
}

fn decode<R: Read + Seek>(r: R, allow_gray: bool) -> Result<LabelMap> {
    let mut dec = png::Decoder::new(BufReader::new(r));
    dec.set_transformations(Transformations::IDENTITY);
    let mut reader = dec
        .read_info()
        .map_err(|e| Error::dataset(format!("unreadable PNG: {e}")))?;
    let info = reader.info();
    let (w, h, color, depth) = (info.width, info.height, info.color_type, info.bit_depth);
    match color {
        ColorType::Indexed => {}
        ColorType::Grayscale if allow_gray => {}
        other => {
            return Err(Error::dataset(format!(
                "expected an indexed PNG label map, found {other:?}"
            )))
        }
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::dataset("PNG too large"))?;
    let mut buf = vec![0; size];
    let out = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::dataset(format!("corrupt PNG: {e}")))?;
    let mut labels = Vec::with_capacity(w as usize * h as usize);
    for row in buf[..out.buffer_size()].chunks(out.line_size).take(h as usize) {
        unpack(row, depth, w as usize, &mut labels);
    }
    Ok(LabelMap {
        width: w,
        height: h,
        labels,
    })
}

/// Reads an indexed PNG; palette indices become labels.
pub fn read_indexed_png(path: &Path) -> Result<LabelMap> {
    let f = File::open(path)?;
    decode(f, false).map_err(|e| annotate(e, path))
}

/// Reads an indexed or grayscale (8 or 16 bit) PNG as raw label values.
pub fn read_label_png(path: &Path) -> Result<LabelMap> {
    let f = File::open(path)?;
    decode(f, true).map_err(|e| annotate(e, path))
}

pub fn decode_indexed_png(bytes: &[u8]) -> Result<LabelMap> {
    decode(Cursor::new(bytes), false)
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::InvalidDataset(m) => Error::InvalidDataset(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Encodes labels 0..=255 as an 8-bit indexed PNG with the VOC palette.
pub fn encode_indexed_png<W: Write>(map: &LabelMap, w: W) -> Result<()> {
    let mut data = Vec::with_capacity(map.labels.len());
    for &l in &map.labels {
        data.push(u8::try_from(l).map_err(|_| Error::invalid("label exceeds 255"))?);
    }
    let mut enc = png::Encoder::new(w, map.width, map.height);
    enc.set_color(ColorType::Indexed);
    enc.set_depth(BitDepth::Eight);
    enc.set_palette(voc_palette());
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer
        .write_image_data(&data)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    writer.finish().map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

pub fn write_indexed_png(map: &LabelMap, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = BufWriter::new(File::create(path)?);
    encode_indexed_png(map, &mut f)?;
    f.flush()?;
    Ok(())
}

/// Encodes one binary mask as an indexed PNG (label 1 on set pixels).
pub fn encode_mask_png(mask: &BinaryMask, label: u8) -> Result<Vec<u8>> {
    let mut map = LabelMap::new(mask.width(), mask.height());
    map.paint(label as u16, mask)?;
    let mut out = Vec::new();
    encode_indexed_png(&map, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_starts_like_voc() {
        let p = voc_palette();
        assert_eq!(&p[..12], &[0, 0, 0, 128, 0, 0, 0, 128, 0, 128, 128, 0]);
        assert_eq!(p.len(), 768);
    }

    #[test]
    fn roundtrip_is_exact() {
        let mut m = LabelMap::new(7, 5);
        for (i, l) in m.labels.iter_mut().enumerate() {
            *l = (i * 37 % 256) as u16;
        }
        let mut buf = Vec::new();
        encode_indexed_png(&m, &mut buf).unwrap();
        assert_eq!(decode_indexed_png(&buf).unwrap(), m);
    }

    #[test]
    fn low_bit_depth_indices_unpack() {
        let mut out = Vec::new();
        unpack(&[0b1011_0001], BitDepth::Two, 4, &mut out);
        assert_eq!(out, vec![2, 3, 0, 1]);
        out.clear();
        unpack(&[0b1010_0000], BitDepth::One, 3, &mut out);
        assert_eq!(out, vec![1, 0, 1]);
    }

    #[test]
    fn grayscale_is_rejected_as_annotation() {
        let mut buf = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut buf, 2, 2);
            enc.set_color(ColorType::Grayscale);
            enc.set_depth(BitDepth::Eight);
            let mut w = enc.write_header().unwrap();
            w.write_image_data(&[0, 1, 1, 0]).unwrap();
        }
        assert!(matches!(decode_indexed_png(&buf), Err(Error::InvalidDataset(_))));
        assert_eq!(decode(Cursor::new(&buf), true).unwrap().labels, vec![0, 1, 1, 0]);
    }
}
