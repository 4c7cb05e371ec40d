//! Raster types shared by every module: binary masks, class label maps and
//! the run-length encoding used on the wire and in session files.

use std::path::Path;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// H×W boolean raster, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("count", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::validation(
                "dimension_mismatch",
                format!(
                    "{} bits do not fill a {width}x{height} mask",
                    bits.len()
                ),
            ));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// Builds a mask from nested rows, `rows[y][x]`.
    pub fn from_rows(rows: &[&[bool]]) -> Result<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        if rows.iter().any(|r| r.len() as u32 != width) {
            return Err(Error::validation("dimension_mismatch", "ragged mask rows"));
        }
        Self::from_bits(width, height, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.bits[i] = value;
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        assert!(x < self.width && y < self.height, "({x}, {y}) outside {}x{}", self.width, self.height);
        y as usize * self.width as usize + x as usize
    }

    pub fn count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn ensure_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::validation(
                "dimension_mismatch",
                format!(
                    "mask is {}x{} but other is {}x{}",
                    self.width, self.height, other.width, other.height
                ),
            ));
        }
        Ok(())
    }

    pub fn union_with(&mut self, other: &BinaryMask) -> Result<()> {
        self.ensure_same_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn subtract(&mut self, other: &BinaryMask) -> Result<()> {
        self.ensure_same_dims(other)?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a &= !b;
        }
        Ok(())
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Mean pixel position `(x, y)` of the foreground, `None` when empty.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0u64, 0u64, 0u64);
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                sx += (i % self.width as usize) as u64;
                sy += (i / self.width as usize) as u64;
                n += 1;
            }
        }
        (n > 0).then(|| (sx as f64 / n as f64, sy as f64 / n as f64))
    }

    pub fn to_rle(&self) -> Rle {
        Rle::encode(self)
    }

    /// 8-bit grayscale image, 255 = foreground.
    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| {
            Luma([if self.get(x, y) { 255 } else { 0 }])
        })
    }

    /// Any nonzero pixel is foreground.
    pub fn from_gray_image(img: &GrayImage) -> Self {
        Self::from_fn(img.width(), img.height(), |x, y| img.get_pixel(x, y)[0] != 0)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_gray_image().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = open_image(path)?;
        Ok(Self::from_gray_image(&img.to_luma8()))
    }
}

/// H×W raster of class ids, 0 = background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_labels(width: u32, height: u32, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(Error::validation(
                "dimension_mismatch",
                format!("{} labels do not fill a {width}x{height} map", labels.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn from_rows(rows: &[&[u32]]) -> Result<Self> {
        let height = rows.len() as u32;
        let width = rows.first().map_or(0, |r| r.len()) as u32;
        if rows.iter().any(|r| r.len() as u32 != width) {
            return Err(Error::validation("dimension_mismatch", "ragged label rows"));
        }
        Self::from_labels(width, height, rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, class_id: u32) {
        let w = self.width as usize;
        self.labels[y as usize * w + x as usize] = class_id;
    }

    /// Stored as 8-bit grayscale, pixel value = class id.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(&bad) = self.labels.iter().find(|&&l| l > 255) {
            return Err(Error::validation(
                "class_id_out_of_range",
                format!("class id {bad} does not fit an 8-bit label PNG"),
            ));
        }
        let img = GrayImage::from_fn(self.width, self.height, |x, y| Luma([self.get(x, y) as u8]));
        img.save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = open_image(path)?.to_luma8();
        let labels = img.pixels().map(|p| p[0] as u32).collect();
        Self::from_labels(img.width(), img.height(), labels)
    }
}

pub(crate) fn open_image(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// One run of foreground pixels in row-major order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub start: u32,
    pub len: u32,
}

/// Run-length encoding of a [`BinaryMask`]: the TRUE pixels as sorted,
/// non-overlapping, non-adjacent `(start, len)` runs over the row-major
/// pixel index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    pub width: u32,
    pub height: u32,
    pub runs: Vec<Run>,
}

impl Rle {
    pub fn encode(mask: &BinaryMask) -> Self {
        let mut runs = Vec::new();
        let mut current: Option<Run> = None;
        for (i, &b) in mask.bits.iter().enumerate() {
            match (&mut current, b) {
                (Some(run), true) => run.len += 1,
                (None, true) => {
                    current = Some(Run {
                        start: i as u32,
                        len: 1,
                    })
                }
                (Some(_), false) => runs.extend(current.take()),
                (None, false) => {}
            }
        }
        runs.extend(current);
        Rle {
            width: mask.width,
            height: mask.height,
            runs,
        }
    }

    /// Decodes and checks the run invariants; any violation is a protocol error.
    pub fn decode(&self) -> Result<BinaryMask> {
        let total = self.width as u64 * self.height as u64;
        let mut bits = vec![false; total as usize];
        let mut next_free: u64 = 0;
        for (i, run) in self.runs.iter().enumerate() {
            let start = run.start as u64;
            let end = start + run.len as u64;
            if run.len == 0 {
                return Err(Error::Protocol(format!("run {i} has zero length")));
            }
            if i > 0 && start <= next_free {
                return Err(Error::Protocol(format!(
                    "run {i} at {start} overlaps or touches the previous run"
                )));
            }
            if end > total {
                return Err(Error::Protocol(format!(
                    "run {i} ends at {end}, past the {total}-pixel mask"
                )));
            }
            bits[start as usize..end as usize].fill(true);
            next_free = end;
        }
        BinaryMask::from_bits(self.width, self.height, bits)
    }

    pub fn foreground(&self) -> u64 {
        self.runs.iter().map(|r| r.len as u64).sum()
    }
}

impl From<&BinaryMask> for Rle {
    fn from(mask: &BinaryMask) -> Self {
        Rle::encode(mask)
    }
}
