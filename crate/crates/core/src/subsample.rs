//! Channel and plane-wave subsampling masks, and their application to RF
//! data by zero-padding.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cube::{EventKind, RFCube};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    /// Per-depth-plane boolean pattern over the receive channels.
    FocusedChannels,
    /// Single boolean pattern over the plane-wave angles.
    PwAngles,
}

/// An acquisition subsampling pattern.
///
/// For `FocusedChannels` there is one boolean row per depth plane, each
/// keeping exactly `n_keep` channels with the two center channels of the
/// aperture always on. For `PwAngles` there is a single row over the angles.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    pub kind: MaskKind,
    /// `planes[p][ch]`, one row per depth plane (or a single row for angles).
    planes: Vec<Vec<bool>>,
    pub n_keep: usize,
    pub rng_seed: u64,
}

impl SamplingMask {
    pub fn n_planes(&self) -> usize {
        self.planes.len()
    }

    pub fn row_len(&self) -> usize {
        self.planes.first().map_or(0, Vec::len)
    }

    #[inline]
    pub fn is_active(&self, plane: usize, ch: usize) -> bool {
        self.planes[plane][ch]
    }

    pub fn plane(&self, plane: usize) -> &[bool] {
        &self.planes[plane]
    }

    /// Indices kept by a single-row (angle) mask.
    pub fn active_indices(&self) -> Vec<usize> {
        self.planes[0]
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    pub fn from_rows(
        kind: MaskKind,
        planes: Vec<Vec<bool>>,
        n_keep: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        if planes.is_empty() || planes[0].is_empty() {
            return Err(CoreError::InvalidArgument("empty mask".into()));
        }
        let row_len = planes[0].len();
        for (p, row) in planes.iter().enumerate() {
            if row.len() != row_len {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("{row_len} channels"),
                    got: format!("{}", row.len()),
                    context: format!("mask plane {p}"),
                });
            }
            let count = row.iter().filter(|&&a| a).count();
            if count != n_keep {
                return Err(CoreError::InvalidArgument(format!(
                    "plane {p} keeps {count} channels, expected {n_keep}"
                )));
            }
        }
        Ok(Self {
            kind,
            planes,
            n_keep,
            rng_seed,
        })
    }
}

/// Indices of the two center channels of an aperture of `n_rx` channels.
pub fn center_pair(n_rx: usize) -> (usize, usize) {
    (n_rx / 2 - 1, n_rx / 2)
}

/// Per-depth-plane random channel mask with the aperture's two center
/// channels forced on. Fresh draws per plane; deterministic in the seed.
pub fn make_focused_mask(
    n_depth: usize,
    n_rx: usize,
    n_keep: usize,
    rng_seed: u64,
) -> Result<SamplingMask> {
    if n_keep < 2 {
        return Err(CoreError::InvalidArgument(format!(
            "n_keep must be at least 2 (the center pair), got {n_keep}"
        )));
    }
    if n_keep > n_rx {
        return Err(CoreError::InvalidArgument(format!(
            "n_keep {n_keep} exceeds aperture size {n_rx}"
        )));
    }
    if n_depth == 0 {
        return Err(CoreError::InvalidArgument("n_depth must be nonzero".into()));
    }
    let (c0, c1) = center_pair(n_rx);
    let others: Vec<usize> = (0..n_rx).filter(|&c| c != c0 && c != c1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut planes = Vec::with_capacity(n_depth);
    for _ in 0..n_depth {
        let mut row = vec![false; n_rx];
        row[c0] = true;
        row[c1] = true;
        for &c in others.choose_multiple(&mut rng, n_keep - 2) {
            row[c] = true;
        }
        planes.push(row);
    }
    SamplingMask::from_rows(MaskKind::FocusedChannels, planes, n_keep, rng_seed)
}

/// Uniformly spaced plane-wave subset, symmetric about the center angle.
///
/// `n_keep` must be odd (so the 0-degree center angle is kept) and the
/// stride `(n_pw - 1) / (n_keep - 1)` must be exact.
pub fn make_pw_subset(n_pw: usize, n_keep: usize) -> Result<SamplingMask> {
    if n_keep == 0 || n_keep > n_pw {
        return Err(CoreError::InvalidArgument(format!(
            "n_keep {n_keep} out of range for {n_pw} angles"
        )));
    }
    if n_keep % 2 == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "plane-wave subsets must keep an odd number of angles, got {n_keep}"
        )));
    }
    let mut row = vec![false; n_pw];
    if n_keep == 1 {
        row[n_pw / 2] = true;
    } else {
        let span = n_pw - 1;
        if span % (n_keep - 1) != 0 {
            return Err(CoreError::InvalidArgument(format!(
                "cannot space {n_keep} angles uniformly over {n_pw}"
            )));
        }
        let stride = span / (n_keep - 1);
        for k in 0..n_keep {
            row[k * stride] = true;
        }
    }
    SamplingMask::from_rows(MaskKind::PwAngles, vec![row], n_keep, 0)
}

/// Zeroes the samples the mask marks inactive; active samples and the cube
/// shape are unchanged.
pub fn apply_mask(cube: &RFCube, mask: &SamplingMask) -> Result<RFCube> {
    match mask.kind {
        MaskKind::FocusedChannels => {
            if mask.n_planes() != cube.n_depth() || mask.row_len() != cube.n_rx() {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("{}x{} mask", cube.n_depth(), cube.n_rx()),
                    got: format!("{}x{}", mask.n_planes(), mask.row_len()),
                    context: "apply_mask (channels)".into(),
                });
            }
            let mut out = cube.clone();
            for d in 0..cube.n_depth() {
                for r in 0..cube.n_rx() {
                    if !mask.is_active(d, r) {
                        for e in 0..cube.n_events() {
                            *out.at_mut(d, r, e) = 0.0;
                        }
                    }
                }
            }
            Ok(out)
        }
        MaskKind::PwAngles => {
            if cube.event_kind != EventKind::PlanewaveAngle {
                return Err(CoreError::InvalidArgument(
                    "angle mask applied to a non-plane-wave cube".into(),
                ));
            }
            if mask.row_len() != cube.n_events() {
                return Err(CoreError::ShapeMismatch {
                    expected: format!("{} angles", cube.n_events()),
                    got: format!("{}", mask.row_len()),
                    context: "apply_mask (angles)".into(),
                });
            }
            let mut out = cube.clone();
            for e in 0..cube.n_events() {
                if !mask.is_active(0, e) {
                    for d in 0..cube.n_depth() {
                        for r in 0..cube.n_rx() {
                            *out.at_mut(d, r, e) = 0.0;
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}
