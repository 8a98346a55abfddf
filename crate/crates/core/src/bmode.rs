//! Log-compressed envelope images.

use crate::error::{CoreError, Result};

/// B-mode image: per-pixel envelope in dB relative to the frame maximum,
/// clamped to `[-dynamic_range_db, 0]`. Rows run along depth, columns along
/// the lateral axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BModeImage {
    pixels_db: Vec<f64>,
    n_depth: usize,
    n_lateral: usize,
    pub dynamic_range_db: f64,
    /// Set when the source frame had zero envelope everywhere; the image is
    /// then uniformly `-dynamic_range_db` and carries no 0 dB maximum.
    pub is_blank: bool,
}

impl BModeImage {
    pub fn from_pixels(
        pixels_db: Vec<f64>,
        n_depth: usize,
        n_lateral: usize,
        dynamic_range_db: f64,
        is_blank: bool,
    ) -> Result<Self> {
        if pixels_db.len() != n_depth * n_lateral {
            return Err(CoreError::ShapeMismatch {
                expected: format!("{} pixels", n_depth * n_lateral),
                got: format!("{}", pixels_db.len()),
                context: "BModeImage::from_pixels".into(),
            });
        }
        if !(dynamic_range_db > 0.0) {
            return Err(CoreError::InvalidArgument(
                "dynamic range must be positive".into(),
            ));
        }
        if pixels_db
            .iter()
            .any(|&v| !v.is_finite() || v > 0.0 || v < -dynamic_range_db)
        {
            return Err(CoreError::InvalidArgument(format!(
                "pixels must lie in [-{dynamic_range_db}, 0]"
            )));
        }
        Ok(Self {
            pixels_db,
            n_depth,
            n_lateral,
            dynamic_range_db,
            is_blank,
        })
    }

    pub fn n_depth(&self) -> usize {
        self.n_depth
    }

    pub fn n_lateral(&self) -> usize {
        self.n_lateral
    }

    #[inline]
    pub fn at(&self, depth: usize, lateral: usize) -> f64 {
        self.pixels_db[depth * self.n_lateral + lateral]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels_db
    }

    /// Row/column of the brightest pixel.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0usize, 0usize);
        let mut best_v = f64::NEG_INFINITY;
        for d in 0..self.n_depth {
            for l in 0..self.n_lateral {
                let v = self.at(d, l);
                if v > best_v {
                    best_v = v;
                    best = (d, l);
                }
            }
        }
        best
    }

    /// Copy of a column range, preserving all rows.
    pub fn crop_lateral(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_lateral {
            return Err(CoreError::InvalidArgument(format!(
                "bad crop range {start}..{end} for {} columns",
                self.n_lateral
            )));
        }
        let mut pixels = Vec::with_capacity(self.n_depth * (end - start));
        for d in 0..self.n_depth {
            for l in start..end {
                pixels.push(self.at(d, l));
            }
        }
        Ok(Self {
            pixels_db: pixels,
            n_depth: self.n_depth,
            n_lateral: end - start,
            dynamic_range_db: self.dynamic_range_db,
            is_blank: self.is_blank,
        })
    }
}
