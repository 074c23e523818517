//! Dimension reduction: collapse each `K x L x M` capture to one antenna
//! vector by selecting the strongest range bin, then the strongest Doppler
//! bin, and concatenate captures into the `M x N` slow-time series.
//!
//! Both the LOS and water paths sit inside one range cell (their length
//! difference is far below the delay resolution of the narrow CSI band) and
//! both are static at the within-capture timescale, so a single
//! (range, Doppler) cell keeps the two paths of interest while rejecting
//! long-delay clutter and fast movers.
//!
//! Transforms are unpadded (length `K` / length `L`) and unwindowed; only
//! the argmax matters here and unpadded bins keep provenance indices
//! reproducible. The range transform uses the inverse-sign DFT so a path
//! with delay `q / (K delta_f)` lands on bin `q`; the Doppler transform is
//! the forward DFT so a tone at `f` lands on bin `f delta_t L mod L`.

use nalgebra::DMatrix;
use ndarray::Array2;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::sim::{ArrayConfig, CsiCapture};
use crate::{Complex64, Error, Result};

/// The `M x N` slow-time series carried between dimension reduction and
/// spectral estimation: one column per capture.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSeries {
    /// Antenna-by-capture matrix.
    pub h: DMatrix<Complex64>,
    /// Interval between captures (s).
    pub delta_t_cap_s: f64,
    /// Receive array the columns were measured on.
    pub array: ArrayConfig,
    /// `(range_bin, doppler_bin)` selected for each capture.
    pub provenance: Vec<(usize, usize)>,
}

impl ReducedSeries {
    pub fn validate(&self) -> Result<()> {
        if self.h.ncols() < 2 {
            return Err(Error::Dimension(format!(
                "reduced series needs at least 2 captures, got {}",
                self.h.ncols()
            )));
        }
        if self
            .h
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::InvalidParameter(
                "reduced series contains non-finite entries".into(),
            ));
        }
        Ok(())
    }
}

fn argmax_lowest(power: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &p) in power.iter().enumerate() {
        if p > power[best] {
            best = i;
        }
    }
    best
}

/// Transform subcarriers to range bins and keep the strongest bin.
/// Returns the selected bin's `L x M` slice and the bin index.
pub fn range_reduce(capture: &CsiCapture) -> Result<(Array2<Complex64>, usize)> {
    capture.validate()?;
    let (k_n, l_n, m_n) = capture.data.dim();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(k_n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];

    let mut transformed = ndarray::Array3::<Complex64>::zeros((k_n, l_n, m_n));
    let mut power = vec![0.0f64; k_n];
    let mut fiber = vec![Complex64::new(0.0, 0.0); k_n];
    for l in 0..l_n {
        for m in 0..m_n {
            for k in 0..k_n {
                fiber[k] = capture.data[(k, l, m)];
            }
            ifft.process_with_scratch(&mut fiber, &mut scratch);
            for k in 0..k_n {
                transformed[(k, l, m)] = fiber[k];
                power[k] += fiber[k].norm_sqr();
            }
        }
    }
    let bin = argmax_lowest(&power);
    let mut out = Array2::<Complex64>::zeros((l_n, m_n));
    for l in 0..l_n {
        for m in 0..m_n {
            out[(l, m)] = transformed[(bin, l, m)];
        }
    }
    Ok((out, bin))
}

/// Transform symbols to Doppler bins and keep the strongest bin. Returns
/// the selected bin's antenna vector and the bin index.
pub fn doppler_reduce(slice: &Array2<Complex64>) -> (Vec<Complex64>, usize) {
    let (l_n, m_n) = slice.dim();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(l_n);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

    let mut per_antenna = vec![vec![Complex64::new(0.0, 0.0); l_n]; m_n];
    let mut power = vec![0.0f64; l_n];
    for (m, fiber) in per_antenna.iter_mut().enumerate() {
        for l in 0..l_n {
            fiber[l] = slice[(l, m)];
        }
        fft.process_with_scratch(fiber, &mut scratch);
        for l in 0..l_n {
            power[l] += fiber[l].norm_sqr();
        }
    }
    let bin = argmax_lowest(&power);
    let out: Vec<Complex64> = (0..m_n).map(|m| per_antenna[m][bin]).collect();
    (out, bin)
}

/// Reduce every capture and concatenate the antenna vectors into the
/// `M x N` series.
pub fn reduce_series(captures: &[CsiCapture]) -> Result<ReducedSeries> {
    if captures.len() < 2 {
        return Err(Error::Dimension(format!(
            "need at least 2 captures, got {}",
            captures.len()
        )));
    }
    let array = captures[0].array;
    let sampling = captures[0].sampling;
    for (i, c) in captures.iter().enumerate() {
        if c.array != array || c.sampling != sampling {
            return Err(Error::Dimension(format!(
                "capture {i} has a different array or sampling config"
            )));
        }
    }

    let reduced: Result<Vec<(Vec<Complex64>, (usize, usize))>> = captures
        .par_iter()
        .map(|c| {
            let (slice, range_bin) = range_reduce(c)?;
            let (vec, doppler_bin) = doppler_reduce(&slice);
            Ok((vec, (range_bin, doppler_bin)))
        })
        .collect();
    let reduced = reduced?;

    let m_n = array.m;
    let n = captures.len();
    let mut h = DMatrix::<Complex64>::zeros(m_n, n);
    let mut provenance = Vec::with_capacity(n);
    for (i, (col, bins)) in reduced.into_iter().enumerate() {
        for m in 0..m_n {
            h[(m, i)] = col[m];
        }
        provenance.push(bins);
    }
    let series = ReducedSeries {
        h,
        delta_t_cap_s: sampling.delta_t_cap_s,
        array,
        provenance,
    };
    series.validate()?;
    Ok(series)
}
