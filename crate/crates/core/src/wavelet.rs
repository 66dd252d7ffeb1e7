//! Haar wavelet filters and non-circular coefficient series.
//!
//! Level `j` uses a filter of length `L_j = 2^j` with taps `+2^-j` on the
//! most recent half of the window and `-2^-j` on the older half. Only
//! windows that fully overlap the data are kept, so a series of length `T`
//! yields `M_j = T - L_j + 1` coefficients.

use crate::error::{Error, Result};

/// Largest level for which a filter can be built.
pub const MAX_FILTER_LEVEL: usize = 30;

/// Minimum number of coefficients required at the coarsest level chosen by
/// [`max_level`].
pub const MIN_COEFFICIENTS: usize = 16;

/// Haar filter at one level.
///
/// Taps are generated on demand: `taps()` and `diff_taps()` materialize
/// `2^j` values, which is only sensible for moderate levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaarLevel {
    level: usize,
}

impl HaarLevel {
    pub fn new(level: usize) -> Result<Self> {
        if !(1..=MAX_FILTER_LEVEL).contains(&level) {
            return Err(Error::LevelOutOfRange(level));
        }
        Ok(Self { level })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Filter length `L_j = 2^j`.
    pub fn len(&self) -> usize {
        1 << self.level
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Half-window length `2^(j-1)`.
    pub fn half(&self) -> usize {
        1 << (self.level - 1)
    }

    /// Scale `tau_j = 2^j` as a float.
    pub fn scale(&self) -> f64 {
        (self.len()) as f64
    }

    fn amplitude(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    /// Tap `h_{j,l}`.
    pub fn tap(&self, l: usize) -> f64 {
        debug_assert!(l < self.len());
        if l < self.half() {
            self.amplitude()
        } else {
            -self.amplitude()
        }
    }

    /// Differenced tap `c_{j,l} = sum_{m <= l} h_{j,m}` for `l < L_j - 1`.
    pub fn diff_tap(&self, l: usize) -> f64 {
        debug_assert!(l + 1 < self.len());
        let m = self.half();
        let count = if l < m { l + 1 } else { 2 * m - 1 - l };
        count as f64 * self.amplitude()
    }

    pub fn taps(&self) -> Vec<f64> {
        (0..self.len()).map(|l| self.tap(l)).collect()
    }

    pub fn diff_taps(&self) -> Vec<f64> {
        (0..self.len() - 1).map(|l| self.diff_tap(l)).collect()
    }

    /// `M_j` for a series of `t` samples (zero when the filter does not fit).
    pub fn coefficient_count(&self, t: usize) -> usize {
        (t + 1).saturating_sub(self.len())
    }

    /// Direct `O(T L_j)` convolution with the taps; kept as a reference
    /// path next to the pyramid used by [`decompose`].
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let len = self.len();
        if x.len() < len {
            return Err(Error::SeriesTooShort {
                len: x.len(),
                filter_len: len,
            });
        }
        let taps = self.taps();
        Ok((len - 1..x.len())
            .map(|t| taps.iter().enumerate().map(|(l, h)| h * x[t - l]).sum())
            .collect())
    }

    /// Applies the differenced taps to the first differences of `x`.
    pub fn apply_differenced(&self, x: &[f64]) -> Result<Vec<f64>> {
        let len = self.len();
        if x.len() < len {
            return Err(Error::SeriesTooShort {
                len: x.len(),
                filter_len: len,
            });
        }
        let c = self.diff_taps();
        Ok((len - 1..x.len())
            .map(|t| {
                c.iter()
                    .enumerate()
                    .map(|(l, cl)| cl * (x[t - l] - x[t - l - 1]))
                    .sum()
            })
            .collect())
    }
}

pub fn build_filter(level: usize) -> Result<HaarLevel> {
    HaarLevel::new(level)
}

/// Wavelet coefficients of one channel at one level.
///
/// `values[k]` is `W_{j,t}` for the 1-based time `t = L_j + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSeries {
    pub level: usize,
    pub channel: usize,
    pub values: Vec<f64>,
}

impl CoefficientSeries {
    /// `M_j`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn filter_len(&self) -> usize {
        1 << self.level
    }

    /// Coefficients from the 1-based time `t` onwards.
    pub fn from_time(&self, t: usize) -> &[f64] {
        let start = t.saturating_sub(self.filter_len());
        &self.values[start.min(self.values.len())..]
    }
}

/// Coefficients of `x` at level `level`, computed only where the filter
/// fully overlaps the data.
pub fn decompose(x: &[f64], level: usize) -> Result<CoefficientSeries> {
    let filter = HaarLevel::new(level)?;
    if x.len() < filter.len() {
        return Err(Error::SeriesTooShort {
            len: x.len(),
            filter_len: filter.len(),
        });
    }
    let mut out = Vec::new();
    pyramid(x, level, |j, w| {
        if j == level {
            out = w;
        }
    });
    Ok(CoefficientSeries {
        level,
        channel: 0,
        values: out,
    })
}

/// Coefficients of `x` at every level `1..=levels`.
pub fn decompose_levels(x: &[f64], levels: usize, channel: usize) -> Result<Vec<CoefficientSeries>> {
    let coarsest = HaarLevel::new(levels)?;
    if x.len() < coarsest.len() {
        return Err(Error::SeriesTooShort {
            len: x.len(),
            filter_len: coarsest.len(),
        });
    }
    let mut out = Vec::with_capacity(levels);
    pyramid(x, levels, |level, values| {
        out.push(CoefficientSeries {
            level,
            channel,
            values,
        })
    });
    Ok(out)
}

/// Walks the dyadic block sums `B_m(e) = x_e + ... + x_{e-m+1}` for
/// `m = 1, 2, 4, ...`, emitting `W_j(e) = 2^-j (B_m(e) - B_m(e-m))` with
/// `m = 2^(j-1)`. Each doubling costs one pass, so all levels take
/// `O(T J)` and rounding grows with `j` only, never with `T`.
fn pyramid(x: &[f64], levels: usize, mut emit: impl FnMut(usize, Vec<f64>)) {
    // blocks[k] holds B_m(e) for e = m - 1 + k.
    let mut blocks: Vec<f64> = x.to_vec();
    let mut m = 1usize;
    for level in 1..=levels {
        let scale = (-(level as f64)).exp2();
        // W_j(e) for e = 2m - 1 + k uses blocks[m + k] and blocks[k].
        let w: Vec<f64> = blocks[m..]
            .iter()
            .zip(&blocks)
            .map(|(recent, older)| scale * (recent - older))
            .collect();
        emit(level, w);
        if level < levels {
            blocks = blocks[m..]
                .iter()
                .zip(&blocks)
                .map(|(recent, older)| recent + older)
                .collect();
            m *= 2;
        }
    }
}

/// Default number of levels for `t` samples: `floor(log2 t) - 1`, stepped
/// down by one when the coarsest level would keep fewer than
/// [`MIN_COEFFICIENTS`] coefficients (never below 1).
///
/// For `t >= 32` the coarsest default level always keeps more than `t / 2`
/// coefficients, so the step only affects very short records.
pub fn max_level(t: usize) -> Result<usize> {
    if t < 4 {
        return Err(Error::TooFewSamples(t));
    }
    let levels = (t.ilog2() as usize - 1).min(MAX_FILTER_LEVEL);
    if levels > 1 && t + 1 < (1 << levels) + MIN_COEFFICIENTS {
        return Ok(levels - 1);
    }
    Ok(levels)
}
