//! Camera frames and binary PGM ("P5") I/O.
//!
//! Frames are written with 16-bit big-endian samples and `maxval` 4095, the
//! range of the simulated 12-bit monochrome sensor. The reader accepts any
//! P5 file with `maxval` up to 65535 (8-bit samples when `maxval < 256`).

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Largest count a 12-bit camera pixel can hold.
pub const MAX_COUNT: u16 = 4095;

/// Maps a camera count onto the unit interval, rounded to `f32`.
///
/// Calibration and extraction both go through this function so that a frame
/// extracted against the STM it was calibrated from reproduces the stored
/// column bit-for-bit.
#[inline]
pub fn normalize_count(v: u16) -> f32 {
    (v as f64 / MAX_COUNT as f64) as f32
}

/// A 12-bit intensity image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpeckleFrame {
    width: usize,
    height: usize,
    values: Vec<u16>,
}

impl SpeckleFrame {
    pub fn new(width: usize, height: usize, values: Vec<u16>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "frame has {} samples, expected {}x{}",
                values.len(),
                width,
                height
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v > MAX_COUNT) {
            return Err(Error::invalid(format!("sample {v} exceeds 12-bit range")));
        }
        Ok(SpeckleFrame {
            width,
            height,
            values,
        })
    }

    pub fn dark(width: usize, height: usize) -> Self {
        SpeckleFrame {
            width,
            height,
            values: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.values[y * self.width + x]
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        encode_pgm(self.width, self.height, MAX_COUNT, &self.values)
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self> {
        let img = decode_pgm(bytes)?;
        if img.maxval > MAX_COUNT {
            // Rescale wider images into the camera range.
            let scale = MAX_COUNT as f64 / img.maxval as f64;
            let values = img
                .samples
                .iter()
                .map(|&v| (v as f64 * scale).round() as u16)
                .collect();
            return SpeckleFrame::new(img.width, img.height, values);
        }
        SpeckleFrame::new(img.width, img.height, img.samples)
    }

    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_pgm_bytes())?;
        Ok(())
    }

    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_pgm_bytes(&bytes)
    }
}

/// Decoded grey image as stored on disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

pub fn encode_pgm(width: usize, height: usize, maxval: u16, samples: &[u16]) -> Vec<u8> {
    let header = format!("P5\n{width} {height}\n{maxval}\n");
    let mut out = Vec::with_capacity(header.len() + samples.len() * 2);
    out.extend_from_slice(header.as_bytes());
    if maxval < 256 {
        out.extend(samples.iter().map(|&v| v as u8));
    } else {
        for &v in samples {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<PgmImage> {
    let mut pos = 0usize;
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "expected PGM magic \"P5\""));
    }
    pos += 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        *field = read_header_int(bytes, &mut pos)?;
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(pos as u64, "missing whitespace after maxval"));
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(Error::format(
            pos as u64,
            format!("maxval {maxval} out of range"),
        ));
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(pos as u64, "image dimensions overflow"))?;
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let need = n * bytes_per;
    if bytes.len() - pos < need {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated raster: need {need} bytes, have {}",
                bytes.len() - pos
            ),
        ));
    }
    let raster = &bytes[pos..pos + need];
    let samples: Vec<u16> = if bytes_per == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    if let Some(i) = samples.iter().position(|&v| v as usize > maxval) {
        return Err(Error::format(
            (pos + i * bytes_per) as u64,
            format!("sample exceeds maxval {maxval}"),
        ));
    }
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

fn read_header_int(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    // skip whitespace and comments
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => return Err(Error::format(*pos as u64, "truncated PGM header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(
            start as u64,
            "expected decimal integer in header",
        ));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format(start as u64, "header integer out of range"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let f = SpeckleFrame::new(2, 1, vec![1, 4095]).unwrap();
        let b = f.to_pgm_bytes();
        assert!(b.starts_with(b"P5\n2 1\n4095\n"));
        assert_eq!(&b[b.len() - 4..], &[0, 1, 0x0f, 0xff]);
    }

    #[test]
    fn comments_in_header() {
        let mut b = b"P5 # a comment\n3 # w\n1\n255\n".to_vec();
        b.extend_from_slice(&[0, 7, 255]);
        let f = SpeckleFrame::from_pgm_bytes(&b).unwrap();
        assert_eq!(f.values(), &[0, 7, 255]);
    }

    #[test]
    fn wide_images_rescaled() {
        let b = encode_pgm(2, 1, 65535, &[0, 65535]);
        let f = SpeckleFrame::from_pgm_bytes(&b).unwrap();
        assert_eq!(f.values(), &[0, 4095]);
    }

    #[test]
    fn truncated_raster_reports_offset() {
        let mut b = SpeckleFrame::dark(4, 4).to_pgm_bytes();
        b.truncate(b.len() - 3);
        match SpeckleFrame::from_pgm_bytes(&b) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, b.len() as u64),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(
            SpeckleFrame::from_pgm_bytes(b"P2\n1 1\n255\n0"),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_samples() {
        assert!(SpeckleFrame::new(1, 1, vec![4096]).is_err());
        assert!(SpeckleFrame::new(2, 2, vec![0; 3]).is_err());
    }

    proptest! {
        #[test]
        fn pgm_round_trip(
            (w, values) in (1usize..12).prop_flat_map(|w| (Just(w), proptest::collection::vec(0u16..4096, w..=w * 11)))
        ) {
            let h = values.len() / w;
            let f = SpeckleFrame::new(w, h, values[..w * h].to_vec()).unwrap();
            let back = SpeckleFrame::from_pgm_bytes(&f.to_pgm_bytes()).unwrap();
            prop_assert_eq!(f, back);
        }
    }
}
