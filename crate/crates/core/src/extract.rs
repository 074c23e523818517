//! Water-path isolation and hydrology inversion: static-clutter removal,
//! low-pass filtering, LCMV beamforming with an LOS null, phase unwrapping,
//! and the path-length → water-level conversion.
//!
//! Everything here is relative to the first capture: the absolute reflected
//! path length is unobservable through the phase, but its change is exact
//! as long as the per-capture phase step stays inside the unwrap limit.
//!
//! # Sign conventions (locked by the end-to-end test)
//!
//! Rising water shortens the reflected path, advances the beamformed phase,
//! gives negative `path_delta`, and therefore positive `delta_w`:
//! `delta_w = -delta_d / (2 sin(alpha))`.

use nalgebra::{DMatrix, DVector};

use crate::dimred::ReducedSeries;
use crate::linalg::{hermitian_condition, hermitianize, solve_hpd};
use crate::rpo::DEFAULT_LOADING_FACTOR;
use crate::sim::steering_vector;
use crate::{deg_to_rad, Complex64, Error, Result};

/// Butterworth order of the slow-time low-pass filter.
const LPF_ORDER: usize = 4;

/// Odd-reflection padding applied on each side before forward-backward
/// filtering (3x the filter order, the usual filtfilt rule).
const LPF_PAD: usize = 3 * LPF_ORDER;

/// Fraction of pi beyond which a per-capture phase step is treated as an
/// unwrap ambiguity rather than a measurement.
const UNWRAP_MARGIN: f64 = 0.95;

/// Condition-number limit on `Cᴴ R⁻¹ C` before LCMV refuses to solve.
const LCMV_CONDITION_LIMIT: f64 = 1e12;

/// One beamformer gain constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConstraint {
    /// Constrained direction, when the constraint was specified by angle.
    pub aoa_deg: Option<f64>,
    /// Required complex response in that direction.
    pub gain: Complex64,
}

/// Beamformer weights plus the constraint set they were solved under
/// (constraint residuals are verified below 1e-9 at construction).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamWeights {
    pub weights: DVector<Complex64>,
    pub constraints: Vec<BeamConstraint>,
}

/// Unwrapped beamformed phase per capture, referenced to capture 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    pub psi_rad: Vec<f64>,
}

/// Relative water-level series with the provenance of its conversion.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterLevelSeries {
    /// Level change per capture (m), entry 0 is 0 by construction.
    pub delta_w_m: Vec<f64>,
    /// Reflection angle used in the inversion (deg).
    pub alpha_used_deg: f64,
    /// Wavelength used in the phase-to-length conversion (m).
    pub lambda_used_m: f64,
    /// Path-length change per capture (m).
    pub path_delta_m: Vec<f64>,
}

/// Subtract the per-antenna temporal mean: static paths (LOS and clutter)
/// cancel, the drifting water path survives.
pub fn remove_static(series: &ReducedSeries) -> Result<ReducedSeries> {
    series.validate()?;
    let (m, n) = (series.h.nrows(), series.h.ncols());
    let mut out = series.clone();
    for row in 0..m {
        let mean: Complex64 = (0..n).map(|c| series.h[(row, c)]).sum::<Complex64>()
            / Complex64::new(n as f64, 0.0);
        for col in 0..n {
            out.h[(row, col)] -= mean;
        }
    }
    Ok(out)
}

/// Biquad section run forward over a real signal with steady-state
/// initialization (so constant inputs pass transient-free).
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn lowpass(cutoff_fraction: f64, q: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_fraction).tan();
        let norm = 1.0 / (1.0 + k / q + k * k);
        Self {
            b0: k * k * norm,
            b1: 2.0 * k * k * norm,
            b2: k * k * norm,
            a1: 2.0 * (k * k - 1.0) * norm,
            a2: (1.0 - k / q + k * k) * norm,
        }
    }

    fn run(&self, x: &mut [f64]) {
        let h1 = (self.b0 + self.b1 + self.b2) / (1.0 + self.a1 + self.a2);
        let x0 = x.first().copied().unwrap_or(0.0);
        let mut s1 = (self.b1 + self.b2 - (self.a1 + self.a2) * h1) * x0;
        let mut s2 = (self.b2 - self.a2 * h1) * x0;
        for v in x.iter_mut() {
            let y = self.b0 * *v + s1;
            s1 = self.b1 * *v - self.a1 * y + s2;
            s2 = self.b2 * *v - self.a2 * y;
            *v = y;
        }
    }
}

/// Zero-phase fourth-order Butterworth low-pass over one real sequence:
/// odd-reflection padding, forward pass, backward pass.
fn filtfilt(x: &[f64], cutoff_fraction: f64) -> Vec<f64> {
    let n = x.len();
    let mut padded = Vec::with_capacity(n + 2 * LPF_PAD);
    for i in 0..LPF_PAD {
        padded.push(2.0 * x[0] - x[LPF_PAD - i]);
    }
    padded.extend_from_slice(x);
    for i in 0..LPF_PAD {
        padded.push(2.0 * x[n - 1] - x[n - 2 - i]);
    }

    // Two cascaded sections realize the order-4 Butterworth.
    let sections = [
        Biquad::lowpass(cutoff_fraction, 0.5 / (std::f64::consts::PI / 8.0).cos()),
        Biquad::lowpass(cutoff_fraction, 0.5 / (3.0 * std::f64::consts::PI / 8.0).cos()),
    ];
    for s in &sections {
        s.run(&mut padded);
    }
    padded.reverse();
    for s in &sections {
        s.run(&mut padded);
    }
    padded.reverse();
    padded[LPF_PAD..LPF_PAD + n].to_vec()
}

/// Zero-phase low-pass along the capture axis, per antenna. The cutoff is
/// a fraction of the capture rate in (0, 0.5].
pub fn lowpass(series: &ReducedSeries, cutoff_fraction: f64) -> Result<ReducedSeries> {
    series.validate()?;
    if !(cutoff_fraction.is_finite() && 0.0 < cutoff_fraction && cutoff_fraction <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "cutoff fraction must be in (0, 0.5], got {cutoff_fraction}"
        )));
    }
    let (m, n) = (series.h.nrows(), series.h.ncols());
    if n <= LPF_PAD + 1 {
        return Err(Error::InvalidParameter(format!(
            "series of {n} captures is too short for the order-{LPF_ORDER} zero-phase filter \
             (needs more than {} captures)",
            LPF_PAD + 1
        )));
    }
    let mut out = series.clone();
    for row in 0..m {
        let re: Vec<f64> = (0..n).map(|c| series.h[(row, c)].re).collect();
        let im: Vec<f64> = (0..n).map(|c| series.h[(row, c)].im).collect();
        let re = filtfilt(&re, cutoff_fraction);
        let im = filtfilt(&im, cutoff_fraction);
        for col in 0..n {
            out.h[(row, col)] = Complex64::new(re[col], im[col]);
        }
    }
    Ok(out)
}

/// LCMV beamformer: unit gain toward `theta1` (water), null toward
/// `theta0` (LOS): `w = R⁻¹ C [Cᴴ R⁻¹ C]⁻¹ f` with `f = [1, 0]ᵀ`.
/// `rho = None` applies the relative loading rule.
pub fn lcmv_weights(
    series: &ReducedSeries,
    theta1_deg: f64,
    theta0_deg: f64,
    rho: Option<f64>,
) -> Result<BeamWeights> {
    series.validate()?;
    let m = series.h.nrows();
    if m < 2 {
        return Err(Error::InvalidParameter(
            "LCMV needs at least 2 antennas".into(),
        ));
    }
    if theta1_deg == theta0_deg {
        return Err(Error::InvalidParameter(
            "gain and null directions coincide".into(),
        ));
    }
    let n = series.h.ncols() as f64;
    let mut r = &series.h * series.h.adjoint() / Complex64::new(n, 0.0);
    r = hermitianize(&r);
    let rho = match rho {
        Some(v) if v.is_finite() && v >= 0.0 => v,
        Some(v) => {
            return Err(Error::InvalidParameter(format!(
                "loading factor must be >= 0, got {v}"
            )))
        }
        None => DEFAULT_LOADING_FACTOR * r.trace().re / m as f64,
    };
    for i in 0..m {
        r[(i, i)] += Complex64::new(rho.max(1e-12), 0.0);
    }

    let a1 = DVector::from_vec(steering_vector(&series.array, theta1_deg)?);
    let a0 = DVector::from_vec(steering_vector(&series.array, theta0_deg)?);
    let x1 = solve_hpd(&r, &a1)?;
    let x0 = solve_hpd(&r, &a0)?;
    // G = Cᴴ R⁻¹ C for C = [a1, a0].
    let mut g = DMatrix::<Complex64>::zeros(2, 2);
    g[(0, 0)] = a1.dotc(&x1);
    g[(0, 1)] = a1.dotc(&x0);
    g[(1, 0)] = a0.dotc(&x1);
    g[(1, 1)] = a0.dotc(&x0);
    let cond = hermitian_condition(&g)?;
    if cond > LCMV_CONDITION_LIMIT {
        log::warn!(
            "LCMV constraint Gram matrix condition {cond:.3e}: directions {theta1_deg} and \
             {theta0_deg} deg are inside the array resolution"
        );
        return Err(Error::IllConditioned(format!(
            "LCMV constraint directions {theta1_deg} and {theta0_deg} deg are unresolvable \
             (condition {cond:.3e})"
        )));
    }
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
    // y = G⁻¹ f with f = [1, 0]ᵀ.
    let y0 = g[(1, 1)] / det;
    let y1 = -g[(1, 0)] / det;
    let w = &x1 * y0 + &x0 * y1;

    let r1 = (w.dotc(&a1) - Complex64::new(1.0, 0.0)).norm();
    let r0 = w.dotc(&a0).norm();
    if r1 > 1e-9 || r0 > 1e-9 {
        return Err(Error::IllConditioned(format!(
            "LCMV constraint residuals {r1:.3e} / {r0:.3e} exceed 1e-9"
        )));
    }
    Ok(BeamWeights {
        weights: w,
        constraints: vec![
            BeamConstraint {
                aoa_deg: Some(theta1_deg),
                gain: Complex64::new(1.0, 0.0),
            },
            BeamConstraint {
                aoa_deg: Some(theta0_deg),
                gain: Complex64::new(0.0, 0.0),
            },
        ],
    })
}

/// Beamformed CSI vector `h_BF = wᴴ H` (one value per capture).
pub fn beamform(series: &ReducedSeries, weights: &BeamWeights) -> Result<Vec<Complex64>> {
    if weights.weights.len() != series.h.nrows() {
        return Err(Error::Dimension(format!(
            "weights have {} entries, series has {} antennas",
            weights.weights.len(),
            series.h.nrows()
        )));
    }
    let row = weights.weights.adjoint() * &series.h;
    Ok(row.iter().copied().collect())
}

/// Per-capture phase, unwrapped and referenced to capture 0.
pub fn phase_series(h_bf: &[Complex64]) -> Result<PhaseSeries> {
    if h_bf.is_empty() {
        return Err(Error::Dimension("empty beamformed vector".into()));
    }
    if let Some(i) = h_bf.iter().position(|v| v.norm() == 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beamformed sample {i} has zero magnitude; phase undefined"
        )));
    }
    let pi = std::f64::consts::PI;
    let mut psi = Vec::with_capacity(h_bf.len());
    let mut prev_raw = h_bf[0].arg();
    let mut offset = 0.0f64;
    psi.push(0.0);
    let reference = prev_raw;
    for (i, v) in h_bf.iter().enumerate().skip(1) {
        let raw = v.arg();
        let mut step = raw - prev_raw;
        if step > pi {
            step -= 2.0 * pi;
            offset -= 2.0 * pi;
        } else if step <= -pi {
            step += 2.0 * pi;
            offset += 2.0 * pi;
        }
        if step.abs() >= UNWRAP_MARGIN * pi {
            return Err(Error::Unwrap(format!(
                "phase step {:.3} rad between captures {} and {i} is beyond {:.2} pi; \
                 the level is moving too fast for the capture interval",
                step,
                i - 1,
                UNWRAP_MARGIN
            )));
        }
        psi.push(raw + offset - reference);
        prev_raw = raw;
    }
    Ok(PhaseSeries { psi_rad: psi })
}

/// Path-length change per capture: `delta_d = -psi * lambda / (2 pi)`.
pub fn path_delta(psi: &PhaseSeries, lambda_m: f64) -> Result<Vec<f64>> {
    if !(lambda_m.is_finite() && lambda_m > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "wavelength must be > 0, got {lambda_m}"
        )));
    }
    // Dividing by 2 pi before scaling keeps the half/full-cycle cases
    // exact: (-(-2 pi) / (2 pi)) * lambda = lambda bit-for-bit.
    Ok(psi
        .psi_rad
        .iter()
        .map(|&p| (-p / (2.0 * std::f64::consts::PI)) * lambda_m)
        .collect())
}

/// Water-level change per capture: `delta_w = -delta_d / (2 sin(alpha))`.
pub fn water_level(
    path_delta_m: &[f64],
    alpha_deg: f64,
    lambda_m: f64,
) -> Result<WaterLevelSeries> {
    let alpha = deg_to_rad(alpha_deg);
    let limit = deg_to_rad(crate::scene::GRAZING_LIMIT_DEG);
    if !(alpha.sin() > limit.sin() && alpha_deg <= 90.0) {
        return Err(Error::Geometry(format!(
            "reflection angle {alpha_deg} deg is outside ({}, 90]; the inversion divides by \
             sin(alpha)",
            crate::scene::GRAZING_LIMIT_DEG
        )));
    }
    let scale = -1.0 / (2.0 * alpha.sin());
    Ok(WaterLevelSeries {
        delta_w_m: path_delta_m.iter().map(|&d| d * scale).collect(),
        alpha_used_deg: alpha_deg,
        lambda_used_m: lambda_m,
        path_delta_m: path_delta_m.to_vec(),
    })
}
