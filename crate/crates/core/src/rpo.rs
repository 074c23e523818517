//! Random-phase-offset (RPO) estimation and compensation.
//!
//! Clock asynchronism between the unsynchronized Tx and Rx injects an
//! unknown phase `phi_{k,l}` on every subcarrier/symbol, identical across
//! antennas. Cross-antenna tricks (conjugate multiplication, signal ratio)
//! either alias the Doppler sign or amplify noise, so this module instead
//! reconstructs the static LOS path with an MVDR beam and reads the RPO off
//! its phase track: per subcarrier, `r_k = wᴴ H_k` isolates the LOS, whose
//! only temporal variation is the RPO itself.
//!
//! Compensation leaves a per-subcarrier constant residue `phi_r` (the LOS
//! phase at that subcarrier); it is time-invariant and therefore harmless
//! to Doppler processing downstream.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rayon::prelude::*;

use crate::extract::{BeamConstraint, BeamWeights};
use crate::linalg::{hermitianize, max_asymmetry, solve_hpd, HERMITIAN_TOL};
use crate::sim::{steering_vector, CsiCapture};
use crate::{Complex64, Error, Result};

/// Relative diagonal loading: `rho = factor * trace(R) / M` when the caller
/// does not pass an explicit value.
///
/// The level matters: per-subcarrier covariances come from only L snapshots,
/// and a lightly loaded MVDR self-nulls on the sample-covariance error,
/// turning the reference phase into noise. Loading at a few percent of the
/// mean eigenvalue keeps the weights near the quiescent beam while still
/// attenuating off-beam paths.
pub const DEFAULT_LOADING_FACTOR: f64 = 0.05;

/// Estimated RPO phases for one capture.
#[derive(Debug, Clone, PartialEq)]
pub struct RpoEstimate {
    /// `phases[(k, l)]` in `(-pi, pi]`: the phase of the reconstructed LOS
    /// reference for subcarrier `k`, symbol `l`. Each row additionally
    /// carries an unidentifiable per-subcarrier constant offset (the LOS
    /// phase residue).
    pub phases: Array2<f64>,
}

/// Sample covariance of one subcarrier slice with diagonal loading:
/// `R = (1/L) H Hᴴ + rho I`.
pub fn subcarrier_cov(h_k: &DMatrix<Complex64>, rho: f64) -> Result<DMatrix<Complex64>> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "loading factor must be >= 0, got {rho}"
        )));
    }
    let l = h_k.ncols().max(1) as f64;
    let mut r = h_k * h_k.adjoint() / Complex64::new(l, 0.0);
    let asym = max_asymmetry(&r);
    debug_assert!(asym < HERMITIAN_TOL * r.nrows() as f64, "asymmetry {asym}");
    r = hermitianize(&r);
    for i in 0..r.nrows() {
        r[(i, i)] += Complex64::new(rho, 0.0);
    }
    Ok(r)
}

/// MVDR weights: `w = R⁻¹ a0 / (a0ᴴ R⁻¹ a0)`, unit gain toward `a0`.
pub fn mvdr_weights(r: &DMatrix<Complex64>, a0: &DVector<Complex64>) -> Result<BeamWeights> {
    if r.nrows() != a0.len() {
        return Err(Error::Dimension(format!(
            "covariance is {}x{} but steering vector has {} entries",
            r.nrows(),
            r.ncols(),
            a0.len()
        )));
    }
    let r_inv_a = solve_hpd(r, a0)?;
    let denom = a0.dotc(&r_inv_a);
    if denom.norm() < 1e-300 || !denom.re.is_finite() || !denom.im.is_finite() {
        return Err(Error::IllConditioned(
            "MVDR normalization a0ᴴ R⁻¹ a0 is degenerate".into(),
        ));
    }
    // w = u / (a0ᴴ u) makes wᴴ a0 = conj(a0ᴴ u) / conj(a0ᴴ u) = 1 exactly.
    let w = r_inv_a / denom;
    let residual = (w.dotc(a0) - Complex64::new(1.0, 0.0)).norm();
    if residual > 1e-9 {
        return Err(Error::IllConditioned(format!(
            "MVDR constraint residual {residual:.3e} exceeds 1e-9"
        )));
    }
    Ok(BeamWeights {
        weights: w,
        constraints: vec![BeamConstraint {
            aoa_deg: None,
            gain: Complex64::new(1.0, 0.0),
        }],
    })
}

fn subcarrier_slice(capture: &CsiCapture, k: usize) -> DMatrix<Complex64> {
    let (l_n, m_n) = (capture.sampling.l, capture.array.m);
    DMatrix::from_fn(m_n, l_n, |m, l| capture.data[(k, l, m)])
}

/// Estimate the RPO of a capture from the LOS at `theta0`. `rho = None`
/// applies the relative loading rule [`DEFAULT_LOADING_FACTOR`].
pub fn estimate_rpo(
    capture: &CsiCapture,
    theta0_deg: f64,
    rho: Option<f64>,
) -> Result<RpoEstimate> {
    capture.validate()?;
    if capture.array.m < 2 {
        return Err(Error::InvalidParameter(
            "RPO compensation needs M >= 2: with one antenna the beamformed reference carries \
             every path's phase and compensation would erase all phase information"
                .into(),
        ));
    }
    let a0 = DVector::from_vec(steering_vector(&capture.array, theta0_deg)?);
    let (k_n, l_n) = (capture.sampling.k, capture.sampling.l);

    let rows: Result<Vec<Vec<f64>>> = (0..k_n)
        .into_par_iter()
        .map(|k| {
            let h_k = subcarrier_slice(capture, k);
            let unloaded = subcarrier_cov(&h_k, 0.0)?;
            let rho_k = match rho {
                Some(v) => v,
                None => {
                    DEFAULT_LOADING_FACTOR * unloaded.trace().re / capture.array.m as f64
                }
            };
            let mut r = unloaded;
            for i in 0..r.nrows() {
                r[(i, i)] += Complex64::new(rho_k, 0.0);
            }
            let w = mvdr_weights(&r, &a0)?;
            let reference = w.weights.adjoint() * &h_k;
            Ok((0..l_n).map(|l| reference[(0, l)].arg()).collect())
        })
        .collect();
    let rows = rows?;

    let mut phases = Array2::<f64>::zeros((k_n, l_n));
    for (k, row) in rows.into_iter().enumerate() {
        for (l, v) in row.into_iter().enumerate() {
            phases[(k, l)] = v;
        }
    }
    Ok(RpoEstimate { phases })
}

/// Rotate the estimated RPO out of a capture:
/// `H̃_k = H_k diag(e^{-j phases[k, :]})`. Entry magnitudes are untouched.
pub fn compensate(capture: &CsiCapture, estimate: &RpoEstimate) -> Result<CsiCapture> {
    let (k_n, l_n) = (capture.sampling.k, capture.sampling.l);
    if estimate.phases.dim() != (k_n, l_n) {
        return Err(Error::Dimension(format!(
            "estimate is {:?} but capture is {}x{} (subcarriers x symbols)",
            estimate.phases.dim(),
            k_n,
            l_n
        )));
    }
    let mut out = capture.clone();
    for k in 0..k_n {
        for l in 0..l_n {
            let rot = Complex64::from_polar(1.0, -estimate.phases[(k, l)]);
            for m in 0..capture.array.m {
                out.data[(k, l, m)] *= rot;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_eig;
    use crate::sim::{
        noise_sigma_for_snr_db, synth_capture, ArrayConfig, PathParams, RpoMode, RpoModel,
        SamplingConfig,
    };
    use approx::assert_relative_eq;

    fn array() -> ArrayConfig {
        ArrayConfig::half_wavelength(4, 2659.8e6).unwrap()
    }

    fn sampling() -> SamplingConfig {
        SamplingConfig {
            k: 24,
            l: 64,
            delta_f_hz: 90e3,
            delta_t_s: 0.5e-3,
            delta_t_cap_s: 1.0,
            n: 1,
        }
    }

    #[test]
    fn zero_input_gives_loaded_identity() {
        let h = DMatrix::<Complex64>::zeros(4, 16);
        let r = subcarrier_cov(&h, 0.25).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 0.25 } else { 0.0 };
                assert!((r[(i, j)] - Complex64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn single_path_covariance_is_loaded_rank_one() {
        let arr = array();
        let a = DVector::from_vec(steering_vector(&arr, 20.0).unwrap());
        let d: Vec<Complex64> = (0..32)
            .map(|l| Complex64::from_polar(1.0, 0.07 * l as f64))
            .collect();
        let h = DMatrix::from_fn(4, 32, |m, l| a[m] * d[l]);
        let rho = 0.01;
        let r = subcarrier_cov(&h, rho).unwrap();
        let eig = hermitian_eig(&r).unwrap();
        // Unit-modulus steering elements make the top eigenvalue M + rho.
        assert_relative_eq!(eig.values[0], 4.0 + rho, max_relative = 1e-10);
        for i in 1..4 {
            assert_relative_eq!(eig.values[i], rho, max_relative = 1e-8);
        }
    }

    #[test]
    fn covariance_eigenvalues_at_least_rho() {
        let mut rng_state = 88u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (rng_state >> 33) as f64 / (1u64 << 31) as f64 - 1.0
        };
        let h = DMatrix::from_fn(4, 24, |_, _| Complex64::new(next(), next()));
        let rho = 0.2;
        let r = subcarrier_cov(&h, rho).unwrap();
        let eig = hermitian_eig(&r).unwrap();
        for v in eig.values.iter() {
            assert!(*v >= rho - 1e-12);
        }
    }

    #[test]
    fn mvdr_identity_covariance_closed_form() {
        let arr = array();
        let a0 = DVector::from_vec(steering_vector(&arr, 35.0).unwrap());
        let r = DMatrix::<Complex64>::identity(4, 4);
        let w = mvdr_weights(&r, &a0).unwrap();
        for m in 0..4 {
            assert!((w.weights[m] - a0[m] / Complex64::new(4.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn mvdr_constraint_holds_on_random_covariances() {
        let arr = array();
        for seed in 0..10u64 {
            let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) as f64 / (1u64 << 31) as f64 - 1.0
            };
            let b = DMatrix::from_fn(4, 12, |_, _| Complex64::new(next(), next()));
            let r = &b * b.adjoint() + DMatrix::identity(4, 4).scale(1e-3);
            let a0 = DVector::from_vec(steering_vector(&arr, -15.0 + seed as f64 * 7.0).unwrap());
            let w = mvdr_weights(&r, &a0).unwrap();
            assert!((w.weights.dotc(&a0) - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn mvdr_suppresses_interferer() {
        let arr = array();
        let a0 = DVector::from_vec(steering_vector(&arr, 47.5).unwrap());
        let ai = DVector::from_vec(steering_vector(&arr, 20.0).unwrap());
        // Strong interferer plus weak loading.
        let r = (&a0 * a0.adjoint()) + (&ai * ai.adjoint()).scale(10.0)
            + DMatrix::identity(4, 4).scale(1e-4);
        let w = mvdr_weights(&r, &a0).unwrap();
        let toward = w.weights.dotc(&a0).norm();
        let interferer = w.weights.dotc(&ai).norm();
        assert!(interferer < 0.01 * toward, "leakage {interferer}");

        // The plain sum beam leaks far more.
        let sum = &a0 / Complex64::new(4.0, 0.0);
        let sum_leak = sum.dotc(&ai).norm();
        assert!(interferer < 0.05 * sum_leak, "MVDR {interferer} vs sum {sum_leak}");
    }

    #[test]
    fn no_rpo_estimate_is_constant_over_symbols() {
        let arr = array();
        let samp = sampling();
        let paths = [
            PathParams {
                gain: Complex64::new(1.0, 0.0),
                delay_s: 1.4e-6,
                doppler_hz: 0.0,
                aoa_deg: 47.5,
            },
            PathParams {
                gain: Complex64::from_polar(0.5, 0.6),
                delay_s: 1.42e-6,
                doppler_hz: 0.0,
                aoa_deg: 35.4,
            },
        ];
        let cap = synth_capture(&paths, &arr, &samp, None, None, 0.0, 4).unwrap();
        let est = estimate_rpo(&cap, 47.5, None).unwrap();
        for k in 0..samp.k {
            let row: Vec<f64> = (0..samp.l).map(|l| est.phases[(k, l)]).collect();
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let std =
                (row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64).sqrt();
            assert!(std < 1e-6, "subcarrier {k} phase std {std}");
        }
    }

    #[test]
    fn deterministic_rpo_recovered_up_to_constant() {
        let arr = array();
        let samp = sampling();
        let rpo = RpoModel {
            cfo_hz: 43.0,
            to_s_per_symbol: 2e-9,
            init_phase_rad: 0.4,
            walk_sigma_rad: 0.0,
            mode: RpoMode::Deterministic,
        };
        let paths = [PathParams {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 1.4e-6,
            doppler_hz: 0.0,
            aoa_deg: 47.5,
        }];
        let sigma = noise_sigma_for_snr_db(30.0, paths[0].gain);
        let cap = synth_capture(&paths, &arr, &samp, Some(&rpo), None, sigma, 9).unwrap();
        // Explicit loading keeps the small-sample MVDR weights near the
        // quiescent beam; the spread then sits at the physical floor
        // sigma / sqrt(M) ~ 0.011 rad per symbol at 30 dB.
        let est = estimate_rpo(&cap, 47.5, Some(0.05)).unwrap();
        for k in 0..samp.k {
            let mut diffs = Vec::with_capacity(samp.l);
            for l in 0..samp.l {
                let injected = rpo.init_phase_rad
                    + 2.0 * std::f64::consts::PI * rpo.cfo_hz * samp.delta_t_s * l as f64
                    - 2.0 * std::f64::consts::PI
                        * samp.delta_f_hz
                        * k as f64
                        * rpo.to_s_per_symbol
                        * l as f64;
                // Compare on the unit circle: the residue is a constant
                // rotation per subcarrier.
                diffs.push(Complex64::from_polar(1.0, est.phases[(k, l)] - injected));
            }
            let mean: Complex64 = diffs.iter().sum::<Complex64>() / diffs.len() as f64;
            let spread: f64 = (diffs
                .iter()
                .map(|d| (d - mean).norm_sqr())
                .sum::<f64>()
                / diffs.len() as f64)
                .sqrt();
            assert!(spread < 0.03, "subcarrier {k} residue spread {spread}");
        }
    }

    #[test]
    fn pure_noise_estimate_is_a_smoke_test() {
        let arr = array();
        let samp = sampling();
        let paths = [PathParams {
            gain: Complex64::new(0.0, 0.0),
            delay_s: 0.0,
            doppler_hz: 0.0,
            aoa_deg: 0.0,
        }];
        let cap = synth_capture(&paths, &arr, &samp, None, None, 1.0, 77).unwrap();
        let est = estimate_rpo(&cap, 10.0, None).unwrap();
        assert!(est.phases.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn compensation_preserves_magnitudes_and_zeroes_reference_phase() {
        let arr = array();
        let samp = sampling();
        let rpo = RpoModel {
            mode: RpoMode::IidUniform,
            ..RpoModel::default()
        };
        let paths = [
            PathParams {
                gain: Complex64::new(1.0, 0.0),
                delay_s: 1.4e-6,
                doppler_hz: 0.0,
                aoa_deg: 47.5,
            },
            PathParams {
                gain: Complex64::from_polar(0.5, 0.6),
                delay_s: 1.42e-6,
                doppler_hz: 21.0,
                aoa_deg: 35.4,
            },
        ];
        let cap = synth_capture(&paths, &arr, &samp, Some(&rpo), None, 0.01, 13).unwrap();
        let est = estimate_rpo(&cap, 47.5, None).unwrap();
        let clean = compensate(&cap, &est).unwrap();

        for (a, b) in clean.data.iter().zip(cap.data.iter()) {
            assert_relative_eq!(a.norm(), b.norm(), max_relative = 1e-12);
        }
        // Re-estimating on compensated data returns zero phases: the
        // covariance (and hence the beam) is invariant to the per-symbol
        // rotation, so the reference is exactly de-rotated.
        let re = estimate_rpo(&clean, 47.5, None).unwrap();
        for p in re.phases.iter() {
            assert!(p.abs() < 1e-9, "residual phase {p}");
        }
    }

    #[test]
    fn residue_is_time_invariant_on_los_only_scene() {
        let arr = array();
        let samp = sampling();
        let rpo = RpoModel::default();
        let paths = [PathParams {
            gain: Complex64::from_polar(0.9, 0.3),
            delay_s: 1.4e-6,
            doppler_hz: 0.0,
            aoa_deg: 47.5,
        }];
        let clean = synth_capture(&paths, &arr, &samp, None, None, 0.0, 3).unwrap();
        let dirty = synth_capture(&paths, &arr, &samp, Some(&rpo), None, 0.0, 3).unwrap();
        let est = estimate_rpo(&dirty, 47.5, None).unwrap();
        let comp = compensate(&dirty, &est).unwrap();
        for k in (0..samp.k).step_by(5) {
            let mut ratios = Vec::new();
            for l in 0..samp.l {
                ratios.push(comp.data[(k, l, 1)] / clean.data[(k, l, 1)]);
            }
            for r in &ratios {
                assert_relative_eq!(r.norm(), 1.0, max_relative = 1e-9);
                assert!((r - ratios[0]).norm() < 1e-9, "residue drifts: {r} vs {}", ratios[0]);
            }
        }
    }

    #[test]
    fn doppler_restoration_for_moving_path() {
        let arr = array();
        let samp = SamplingConfig {
            k: 16,
            l: 200,
            ..sampling()
        };
        let f_d = 50.0;
        let paths = [
            PathParams {
                gain: Complex64::new(1.0, 0.0),
                delay_s: 1.4e-6,
                doppler_hz: 0.0,
                aoa_deg: 47.5,
            },
            PathParams {
                gain: Complex64::from_polar(0.4, 1.1),
                delay_s: 1.5e-6,
                doppler_hz: f_d,
                aoa_deg: 10.0,
            },
        ];
        let rpo = RpoModel::default();
        let sigma = noise_sigma_for_snr_db(25.0, paths[0].gain);
        let cap = synth_capture(&paths, &arr, &samp, Some(&rpo), None, sigma, 41).unwrap();
        let est = estimate_rpo(&cap, 47.5, None).unwrap();
        let comp = compensate(&cap, &est).unwrap();

        let spectrum = |c: &CsiCapture| -> Vec<f64> {
            let l = c.sampling.l;
            (0..l)
                .map(|b| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for li in 0..l {
                        let ph = -2.0 * std::f64::consts::PI * (b * li) as f64 / l as f64;
                        acc += c.data[(3, li, 1)] * Complex64::from_polar(1.0, ph);
                    }
                    acc.norm_sqr()
                })
                .collect()
        };
        let spec = spectrum(&comp);
        let peak = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, 0, "LOS must dominate bin 0 after compensation");
        let mover_bin = (f_d * samp.delta_t_s * samp.l as f64).round() as usize;
        let second = spec
            .iter()
            .enumerate()
            .filter(|(b, _)| (*b as i64 - peak as i64).unsigned_abs() > 1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(
            (second as i64 - mover_bin as i64).abs() <= 1,
            "mover recovered at bin {second}, expected {mover_bin}"
        );
    }
}
