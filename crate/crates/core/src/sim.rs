//! Forward channel oracle: synthesizes CSI captures for a configurable set
//! of propagation paths with clock impairments (random phase offset), array
//! errors, and noise. Every acceptance test measures the sensing chain
//! against scenes generated here.
//!
//! The per-entry channel model is
//!
//! ```text
//! h(k,l,m) = e^{j phi_{k,l}} * sum_p alpha_p
//!            * e^{-j 2 pi f_k tau_p}        (delay over subcarriers)
//!            * e^{+j 2 pi t_l f_{d_p}}      (Doppler over symbols)
//!            * e^{-j 2 pi kappa_m sin(theta_p) / lambda}  (AoA over antennas)
//!            + n(k,l,m)
//! ```
//!
//! with `f_k = fc + delta_f * k`, `t_l = delta_t * l`, `kappa_m = kappa * m`
//! (zero-based indices). The random phase offset `phi_{k,l}` is identical on
//! every antenna. Noise is circular complex Gaussian with per-component
//! standard deviation `sigma`, so each entry carries expected noise power
//! `2 sigma^2`.

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calib::{ArrayErrorModel, BasebandSnapshot};
use crate::scene::{los_path, reflected_path, Geometry};
use crate::{deg_to_rad, Complex64, Error, Result, SPEED_OF_LIGHT};

/// Uniform linear receive array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    /// Antenna count.
    pub m: usize,
    /// Element spacing (m).
    pub kappa_m: f64,
    /// Carrier frequency (Hz).
    pub fc_hz: f64,
}

impl ArrayConfig {
    pub fn new(m: usize, kappa_m: f64, fc_hz: f64) -> Result<Self> {
        let cfg = Self { m, kappa_m, fc_hz };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Carrier wavelength (m).
    pub fn lambda_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc_hz
    }

    /// Half-wavelength spaced array at the given carrier.
    pub fn half_wavelength(m: usize, fc_hz: f64) -> Result<Self> {
        Self::new(m, 0.5 * SPEED_OF_LIGHT / fc_hz, fc_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::InvalidParameter(format!(
                "array needs at least 2 antennas, got {}",
                self.m
            )));
        }
        if !(self.kappa_m.is_finite() && self.kappa_m > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "antenna spacing must be > 0, got {}",
                self.kappa_m
            )));
        }
        if !(self.fc_hz.is_finite() && self.fc_hz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "carrier frequency must be > 0, got {}",
                self.fc_hz
            )));
        }
        if self.kappa_m > 0.5 * self.lambda_m() + 1e-12 {
            log::warn!(
                "antenna spacing {} m exceeds lambda/2 = {} m; spatial aliasing possible",
                self.kappa_m,
                0.5 * self.lambda_m()
            );
        }
        Ok(())
    }
}

/// Subcarrier/symbol/capture sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Subcarrier count per capture.
    pub k: usize,
    /// Symbols per capture.
    pub l: usize,
    /// Subcarrier spacing (Hz).
    pub delta_f_hz: f64,
    /// Symbol interval (s).
    pub delta_t_s: f64,
    /// Interval between consecutive captures (s).
    pub delta_t_cap_s: f64,
    /// Capture count.
    pub n: usize,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.l < 1 || self.n < 1 {
            return Err(Error::InvalidParameter(format!(
                "k, l, n must all be >= 1, got k={} l={} n={}",
                self.k, self.l, self.n
            )));
        }
        for (name, v) in [
            ("delta_f_hz", self.delta_f_hz),
            ("delta_t_s", self.delta_t_s),
            ("delta_t_cap_s", self.delta_t_cap_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for SamplingConfig {
    /// Cell-reference-signal cadence of the measured downlink: 90 kHz
    /// effective subcarrier spacing and 2000 samples/s over the symbols.
    fn default() -> Self {
        Self {
            k: 200,
            l: 200,
            delta_f_hz: 90e3,
            delta_t_s: 0.5e-3,
            delta_t_cap_s: 90.0,
            n: 180,
        }
    }
}

/// One discrete propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    /// Complex path gain.
    pub gain: Complex64,
    /// Propagation delay (s).
    pub delay_s: f64,
    /// Doppler shift within a capture (Hz).
    pub doppler_hz: f64,
    /// AoA from array broadside (deg).
    pub aoa_deg: f64,
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delay_s.is_finite() && self.delay_s >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "path delay must be >= 0, got {}",
                self.delay_s
            )));
        }
        if self.aoa_deg.abs() >= 90.0 {
            return Err(Error::InvalidParameter(format!(
                "path AoA must satisfy |aoa| < 90 deg, got {}",
                self.aoa_deg
            )));
        }
        Ok(())
    }
}

/// How the random phase offset evolves over a capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RpoMode {
    /// Pure CFO/TO trend, no stochastic component.
    Deterministic,
    /// CFO/TO trend plus a per-symbol phase random walk and a uniform
    /// initial phase per capture.
    #[default]
    RandomWalk,
    /// Independent uniform phase per (subcarrier, symbol); the hardest case
    /// for compensation.
    IidUniform,
}

/// Random phase offset model: the combined CFO / timing-offset / initial
/// phase corruption applied identically to all antennas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpoModel {
    /// Carrier frequency offset (Hz); adds `2 pi cfo delta_t l` per symbol.
    pub cfo_hz: f64,
    /// Timing-offset drift (seconds per symbol); adds a per-subcarrier
    /// linear phase `-2 pi delta_f k (to l)`.
    pub to_s_per_symbol: f64,
    /// Fixed initial phase (rad); random modes add a uniform draw on top.
    pub init_phase_rad: f64,
    /// Random-walk step standard deviation (rad per symbol), used by
    /// [`RpoMode::RandomWalk`].
    pub walk_sigma_rad: f64,
    pub mode: RpoMode,
}

impl Default for RpoModel {
    fn default() -> Self {
        Self {
            cfo_hz: 40.0,
            to_s_per_symbol: 1e-10,
            init_phase_rad: 0.0,
            walk_sigma_rad: 0.05,
            mode: RpoMode::RandomWalk,
        }
    }
}

/// One CSI capture: a `K x L x M` tensor (subcarrier, symbol, antenna) plus
/// its sampling metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiCapture {
    pub data: Array3<Complex64>,
    /// Capture timestamp (s) relative to the first capture of a scenario.
    pub timestamp_s: f64,
    pub array: ArrayConfig,
    pub sampling: SamplingConfig,
}

impl CsiCapture {
    pub fn validate(&self) -> Result<()> {
        let (k, l, m) = self.data.dim();
        if k != self.sampling.k || l != self.sampling.l || m != self.array.m {
            return Err(Error::Dimension(format!(
                "capture tensor is {k}x{l}x{m} but configs declare {}x{}x{}",
                self.sampling.k, self.sampling.l, self.array.m
            )));
        }
        if self
            .data
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::InvalidParameter(
                "capture contains non-finite entries".into(),
            ));
        }
        Ok(())
    }
}

/// ULA steering vector `a(theta)`: element `m` is
/// `exp(-j 2 pi kappa m sin(theta) / lambda)`, element 0 exactly 1.
pub fn steering_vector(array: &ArrayConfig, aoa_deg: f64) -> Result<Vec<Complex64>> {
    if !aoa_deg.is_finite() || aoa_deg.abs() >= 90.0 {
        return Err(Error::InvalidParameter(format!(
            "steering angle must satisfy |aoa| < 90 deg, got {aoa_deg}"
        )));
    }
    let phase_step = -2.0 * std::f64::consts::PI * array.kappa_m * deg_to_rad(aoa_deg).sin()
        / array.lambda_m();
    Ok((0..array.m)
        .map(|m| Complex64::from_polar(1.0, phase_step * m as f64))
        .collect())
}

/// Doppler response over `l` symbols: element `i` is
/// `exp(+j 2 pi delta_t i f_d)`.
pub fn doppler_vector(f_d_hz: f64, delta_t_s: f64, l: usize) -> Vec<Complex64> {
    let phase_step = 2.0 * std::f64::consts::PI * delta_t_s * f_d_hz;
    (0..l)
        .map(|i| Complex64::from_polar(1.0, phase_step * i as f64))
        .collect()
}

/// Per-component noise sigma for a target SNR, defined as the per-entry LOS
/// signal power over the per-entry noise power `2 sigma^2`.
pub fn noise_sigma_for_snr_db(snr_db: f64, los_gain: Complex64) -> f64 {
    los_gain.norm() * 10f64.powf(-snr_db / 20.0) / 2f64.sqrt()
}

/// Wrap a phase into `(-pi, pi]`.
fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut p = phi.rem_euclid(two_pi);
    if p > std::f64::consts::PI {
        p -= two_pi;
    }
    p
}

/// Draw the RPO phase matrix `phi[k][l]` for one capture.
fn rpo_phase_matrix(
    rpo: &RpoModel,
    sampling: &SamplingConfig,
    rng: &mut ChaCha8Rng,
) -> ndarray::Array2<f64> {
    use std::f64::consts::PI;
    let (k_n, l_n) = (sampling.k, sampling.l);
    let mut phi = ndarray::Array2::<f64>::zeros((k_n, l_n));
    match rpo.mode {
        RpoMode::IidUniform => {
            for v in phi.iter_mut() {
                *v = rng.random_range(-PI..PI);
            }
        }
        RpoMode::Deterministic | RpoMode::RandomWalk => {
            let mut symbol_phase = vec![0.0f64; l_n];
            let mut walk = 0.0f64;
            let init = match rpo.mode {
                RpoMode::RandomWalk => rpo.init_phase_rad + rng.random_range(-PI..PI),
                _ => rpo.init_phase_rad,
            };
            for (l, sp) in symbol_phase.iter_mut().enumerate() {
                if rpo.mode == RpoMode::RandomWalk && l > 0 {
                    let step: f64 = StandardNormal.sample(rng);
                    walk += step * rpo.walk_sigma_rad;
                }
                *sp = init + 2.0 * PI * rpo.cfo_hz * sampling.delta_t_s * l as f64 + walk;
            }
            for k in 0..k_n {
                let to_rate = -2.0 * PI * sampling.delta_f_hz * k as f64 * rpo.to_s_per_symbol;
                for l in 0..l_n {
                    phi[(k, l)] = wrap_phase(symbol_phase[l] + to_rate * l as f64);
                }
            }
            return phi;
        }
    }
    phi
}

/// Synthesize one CSI capture. Deterministic for a given seed.
pub fn synth_capture(
    paths: &[PathParams],
    array: &ArrayConfig,
    sampling: &SamplingConfig,
    rpo: Option<&RpoModel>,
    errors: Option<&ArrayErrorModel>,
    noise_sigma: f64,
    seed: u64,
) -> Result<CsiCapture> {
    array.validate()?;
    sampling.validate()?;
    if paths.is_empty() {
        return Err(Error::InvalidParameter(
            "at least one path is required".into(),
        ));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise sigma must be >= 0, got {noise_sigma}"
        )));
    }
    if let Some(e) = errors {
        e.validate()?;
        if e.gains.len() != array.m {
            return Err(Error::Dimension(format!(
                "error model has {} antennas, array has {}",
                e.gains.len(),
                array.m
            )));
        }
    }

    let (k_n, l_n, m_n) = (sampling.k, sampling.l, array.m);
    let mut data = Array3::<Complex64>::zeros((k_n, l_n, m_n));

    for path in paths {
        path.validate()?;
        // Rank-1 decomposition over each axis keeps this a triple product.
        let sub: Vec<Complex64> = (0..k_n)
            .map(|k| {
                let f_k = array.fc_hz + sampling.delta_f_hz * k as f64;
                Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * f_k * path.delay_s)
            })
            .collect();
        let dop = doppler_vector(path.doppler_hz, sampling.delta_t_s, l_n);
        let steer = steering_vector(array, path.aoa_deg)?;
        for k in 0..k_n {
            let gk = path.gain * sub[k];
            for l in 0..l_n {
                let gkl = gk * dop[l];
                for m in 0..m_n {
                    data[(k, l, m)] += gkl * steer[m];
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if let Some(rpo_model) = rpo {
        let phi = rpo_phase_matrix(rpo_model, sampling, &mut rng);
        for k in 0..k_n {
            for l in 0..l_n {
                let rot = Complex64::from_polar(1.0, phi[(k, l)]);
                for m in 0..m_n {
                    data[(k, l, m)] *= rot;
                }
            }
        }
    }
    if let Some(e) = errors {
        let resp = e.response_vector();
        for k in 0..k_n {
            for l in 0..l_n {
                for m in 0..m_n {
                    data[(k, l, m)] *= resp[m];
                }
            }
        }
    }
    if noise_sigma > 0.0 {
        for v in data.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += Complex64::new(re * noise_sigma, im * noise_sigma);
        }
    }

    Ok(CsiCapture {
        data,
        timestamp_s: 0.0,
        array: *array,
        sampling: *sampling,
    })
}

/// Relative gains of the two scene paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGains {
    pub los: Complex64,
    pub reflected: Complex64,
}

impl Default for PathGains {
    /// Unit LOS gain; the water reflection loses amplitude and picks up a
    /// phase at the bounce.
    fn default() -> Self {
        Self {
            los: Complex64::new(1.0, 0.0),
            reflected: Complex64::from_polar(0.5, std::f64::consts::FRAC_PI_4),
        }
    }
}

/// Per-capture ground truth emitted alongside a synthetic scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruth {
    pub capture_index: usize,
    pub time_s: f64,
    /// Water surface height (m) on the geometry datum.
    pub water_m: f64,
    /// One-way reflected path length (m).
    pub d1_m: f64,
    /// Water-path AoA (deg).
    pub aoa_deg: f64,
    /// Grazing angle (deg).
    pub alpha_deg: f64,
}

/// Stable per-capture seed derivation (SplitMix64 over the master seed and
/// capture index) so scenario generation can parallelize across captures
/// without changing its output.
pub(crate) fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Synthesize a full scenario: a static LOS path plus the water-reflected
/// path following `water_traj` (one surface height per capture).
#[allow(clippy::too_many_arguments)]
pub fn gen_scenario(
    geom: &Geometry,
    water_traj: &[f64],
    array: &ArrayConfig,
    sampling: &SamplingConfig,
    rpo: Option<&RpoModel>,
    errors: Option<&ArrayErrorModel>,
    noise_sigma: f64,
    gains: &PathGains,
    master_seed: u64,
) -> Result<(Vec<CsiCapture>, Vec<GroundTruth>)> {
    geom.validate()?;
    sampling.validate()?;
    if water_traj.len() != sampling.n {
        return Err(Error::Dimension(format!(
            "trajectory has {} entries but sampling declares n = {}",
            water_traj.len(),
            sampling.n
        )));
    }
    let los = los_path(geom)?;
    let mut truth = Vec::with_capacity(water_traj.len());
    for (i, &w) in water_traj.iter().enumerate() {
        let refl = reflected_path(geom, w)?;
        truth.push(GroundTruth {
            capture_index: i,
            time_s: i as f64 * sampling.delta_t_cap_s,
            water_m: w,
            d1_m: refl.length_m,
            aoa_deg: refl.aoa_deg,
            alpha_deg: refl.reflection_angle_deg,
        });
    }

    let captures: Result<Vec<CsiCapture>> = truth
        .par_iter()
        .map(|gt| {
            // In-capture Doppler of the reflected path from the local
            // path-length slope; physically tiny for water motion but kept
            // for fidelity.
            let i = gt.capture_index;
            let d_next = truth[(i + 1).min(truth.len() - 1)].d1_m;
            let d_prev = truth[i.saturating_sub(1)].d1_m;
            let span = ((i + 1).min(truth.len() - 1) - i.saturating_sub(1)) as f64;
            let ddot = if span > 0.0 {
                (d_next - d_prev) / (span * sampling.delta_t_cap_s)
            } else {
                0.0
            };
            let paths = [
                PathParams {
                    gain: gains.los,
                    delay_s: los.length_m / SPEED_OF_LIGHT,
                    doppler_hz: 0.0,
                    aoa_deg: los.aoa_deg,
                },
                PathParams {
                    gain: gains.reflected,
                    delay_s: gt.d1_m / SPEED_OF_LIGHT,
                    doppler_hz: -ddot / array.lambda_m(),
                    aoa_deg: gt.aoa_deg,
                },
            ];
            let mut capture = synth_capture(
                &paths,
                array,
                sampling,
                rpo,
                errors,
                noise_sigma,
                derive_seed(master_seed, i as u64),
            )?;
            capture.timestamp_s = gt.time_s;
            Ok(capture)
        })
        .collect();

    Ok((captures?, truth))
}

/// Synthesize a raw narrowband baseband snapshot `B = E A S + N` for array
/// calibration: `sources` far-field emitters with unit-power circular
/// Gaussian symbols over `g` samples, scaled by `amplitudes`.
pub fn synth_baseband(
    array: &ArrayConfig,
    source_aoas_deg: &[f64],
    amplitudes: &[f64],
    g: usize,
    errors: Option<&ArrayErrorModel>,
    noise_sigma: f64,
    seed: u64,
) -> Result<BasebandSnapshot> {
    array.validate()?;
    if source_aoas_deg.is_empty() || source_aoas_deg.len() != amplitudes.len() {
        return Err(Error::InvalidParameter(
            "need matching non-empty source AoA and amplitude lists".into(),
        ));
    }
    if g <= array.m {
        return Err(Error::InvalidParameter(format!(
            "snapshot length g = {g} must exceed the antenna count {}",
            array.m
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m_n = array.m;
    let mut data = nalgebra::DMatrix::<Complex64>::zeros(m_n, g);
    let steers: Result<Vec<Vec<Complex64>>> = source_aoas_deg
        .iter()
        .map(|&a| steering_vector(array, a))
        .collect();
    let steers = steers?;
    let inv_sqrt2 = 1.0 / 2f64.sqrt();
    for col in 0..g {
        for (s, steer) in steers.iter().enumerate() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let sym = Complex64::new(re * inv_sqrt2, im * inv_sqrt2) * amplitudes[s];
            for m in 0..m_n {
                data[(m, col)] += steer[m] * sym;
            }
        }
    }
    if let Some(e) = errors {
        e.validate()?;
        if e.gains.len() != m_n {
            return Err(Error::Dimension(format!(
                "error model has {} antennas, array has {m_n}",
                e.gains.len()
            )));
        }
        let resp = e.response_vector();
        for m in 0..m_n {
            for col in 0..g {
                data[(m, col)] *= resp[m];
            }
        }
    }
    if noise_sigma > 0.0 {
        for v in data.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += Complex64::new(re * noise_sigma, im * noise_sigma);
        }
    }
    Ok(BasebandSnapshot {
        data,
        sources: source_aoas_deg.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_array() -> ArrayConfig {
        ArrayConfig::half_wavelength(4, 2659.8e6).unwrap()
    }

    fn small_sampling() -> SamplingConfig {
        SamplingConfig {
            k: 16,
            l: 32,
            delta_f_hz: 90e3,
            delta_t_s: 0.5e-3,
            delta_t_cap_s: 1.0,
            n: 4,
        }
    }

    /// Direct DFT over the symbol axis of one (k, m) fiber; the test-side
    /// oracle for Doppler placement.
    fn dft_fiber(x: &[Complex64]) -> Vec<f64> {
        let l = x.len();
        (0..l)
            .map(|b| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let ph = -2.0 * std::f64::consts::PI * (b * i) as f64 / l as f64;
                    acc += v * Complex64::from_polar(1.0, ph);
                }
                acc.norm_sqr()
            })
            .collect()
    }

    #[test]
    fn steering_closed_forms() {
        let arr = small_array();
        let a0 = steering_vector(&arr, 0.0).unwrap();
        assert!(a0.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        let theta = 27.0;
        let two = ArrayConfig::half_wavelength(2, 2659.8e6).unwrap();
        let a = steering_vector(&two, theta).unwrap();
        let expected = Complex64::from_polar(
            1.0,
            -std::f64::consts::PI * deg_to_rad(theta).sin(),
        );
        assert!((a[1] - expected).norm() < 1e-15);

        for v in steering_vector(&arr, -63.3).unwrap() {
            assert_relative_eq!(v.norm(), 1.0, max_relative = 1e-14);
        }
        assert!(steering_vector(&arr, 90.0).is_err());
    }

    #[test]
    fn doppler_vector_cases() {
        let d = doppler_vector(0.0, 0.5e-3, 8);
        assert!(d.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));

        // One full cycle across the vector.
        let l = 16;
        let dt = 0.5e-3;
        let d = doppler_vector(1.0 / (l as f64 * dt), dt, l);
        for (i, v) in d.iter().enumerate() {
            let expected =
                Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / l as f64);
            assert!((v - expected).norm() < 1e-10);
        }

        let f = 123.4;
        let pos = doppler_vector(f, dt, l);
        let neg = doppler_vector(-f, dt, l);
        for (p, n) in pos.iter().zip(&neg) {
            assert!((p.conj() - n).norm() < 1e-14);
        }
    }

    #[test]
    fn single_trivial_path_gives_all_ones() {
        let arr = small_array();
        let samp = small_sampling();
        let paths = [PathParams {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 0.0,
            doppler_hz: 0.0,
            aoa_deg: 0.0,
        }];
        let cap = synth_capture(&paths, &arr, &samp, None, None, 0.0, 1).unwrap();
        for v in cap.data.iter() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let arr = small_array();
        let samp = small_sampling();
        let paths = [PathParams {
            gain: Complex64::new(0.7, 0.1),
            delay_s: 0.4e-6,
            doppler_hz: 35.0,
            aoa_deg: 12.0,
        }];
        let rpo = RpoModel::default();
        let a = synth_capture(&paths, &arr, &samp, Some(&rpo), None, 0.3, 99).unwrap();
        let b = synth_capture(&paths, &arr, &samp, Some(&rpo), None, 0.3, 99).unwrap();
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn doppler_peak_lands_on_oracle_bin() {
        let arr = small_array();
        let samp = SamplingConfig {
            l: 200,
            ..small_sampling()
        };
        let f_d = 100.0;
        let paths = [PathParams {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 0.2e-6,
            doppler_hz: f_d,
            aoa_deg: 20.0,
        }];
        let cap = synth_capture(&paths, &arr, &samp, None, None, 0.0, 1).unwrap();
        let fiber: Vec<Complex64> = (0..samp.l).map(|l| cap.data[(3, l, 2)]).collect();
        let spec = dft_fiber(&fiber);
        let peak = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        let expected = (f_d * samp.delta_t_s * samp.l as f64).round() as usize;
        assert_eq!(peak, expected, "expected Doppler bin {expected}, got {peak}");
    }

    #[test]
    fn superposition_linearity() {
        let arr = small_array();
        let samp = small_sampling();
        let pa = PathParams {
            gain: Complex64::new(0.9, -0.2),
            delay_s: 0.1e-6,
            doppler_hz: 50.0,
            aoa_deg: -10.0,
        };
        let pb = PathParams {
            gain: Complex64::new(0.4, 0.4),
            delay_s: 0.9e-6,
            doppler_hz: -120.0,
            aoa_deg: 33.0,
        };
        let a = synth_capture(&[pa], &arr, &samp, None, None, 0.0, 1).unwrap();
        let b = synth_capture(&[pb], &arr, &samp, None, None, 0.0, 1).unwrap();
        let ab = synth_capture(&[pa, pb], &arr, &samp, None, None, 0.0, 1).unwrap();
        for ((x, y), z) in a.data.iter().zip(b.data.iter()).zip(ab.data.iter()) {
            assert!((x + y - z).norm() < 1e-12);
        }
    }

    #[test]
    fn rpo_is_antenna_invariant() {
        let arr = small_array();
        let samp = small_sampling();
        let paths = [PathParams {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 0.3e-6,
            doppler_hz: 10.0,
            aoa_deg: 25.0,
        }];
        let rpo = RpoModel {
            mode: RpoMode::IidUniform,
            ..RpoModel::default()
        };
        let clean = synth_capture(&paths, &arr, &samp, None, None, 0.0, 5).unwrap();
        let dirty = synth_capture(&paths, &arr, &samp, Some(&rpo), None, 0.0, 5).unwrap();
        for k in 0..samp.k {
            for l in 0..samp.l {
                let r0 = dirty.data[(k, l, 0)] / clean.data[(k, l, 0)];
                for m in 1..arr.m {
                    let rm = dirty.data[(k, l, m)] / clean.data[(k, l, m)];
                    assert!((r0 - rm).norm() < 1e-10);
                }
                assert_relative_eq!(r0.norm(), 1.0, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn noise_energy_matches_two_sigma_squared() {
        let arr = ArrayConfig::half_wavelength(10, 2659.8e6).unwrap();
        let samp = SamplingConfig {
            k: 100,
            l: 100,
            ..small_sampling()
        };
        let paths = [PathParams {
            gain: Complex64::new(0.0, 0.0),
            delay_s: 0.0,
            doppler_hz: 0.0,
            aoa_deg: 0.0,
        }];
        let sigma = 0.4;
        let cap = synth_capture(&paths, &arr, &samp, None, None, sigma, 123).unwrap();
        let mean_power: f64 =
            cap.data.iter().map(|v| v.norm_sqr()).sum::<f64>() / cap.data.len() as f64;
        assert_relative_eq!(mean_power, 2.0 * sigma * sigma, max_relative = 0.05);
    }

    #[test]
    fn single_path_slice_is_rank_one() {
        let arr = small_array();
        let samp = small_sampling();
        let paths = [PathParams {
            gain: Complex64::new(0.8, 0.3),
            delay_s: 0.7e-6,
            doppler_hz: 77.0,
            aoa_deg: -28.0,
        }];
        let cap = synth_capture(&paths, &arr, &samp, None, None, 0.0, 1).unwrap();
        let k = 5;
        let slice = nalgebra::DMatrix::from_fn(arr.m, samp.l, |m, l| cap.data[(k, l, m)]);
        let svd = slice.svd(false, false);
        let s = svd.singular_values;
        assert!(s[0] > 0.1);
        assert!(s[1] / s[0] < 1e-10, "sigma2/sigma1 = {}", s[1] / s[0]);
    }

    #[test]
    fn scenario_constant_trajectory_is_static() {
        let geom = Geometry::new(423.0, 0.75, 160.0, 45.0, 4.0, 0.0, 42.0).unwrap();
        let arr = small_array();
        let samp = small_sampling();
        let traj = [1.0; 4];
        let (caps, truth) = gen_scenario(
            &geom,
            &traj,
            &arr,
            &samp,
            None,
            None,
            0.0,
            &PathGains::default(),
            7,
        )
        .unwrap();
        assert_eq!(caps.len(), 4);
        assert_eq!(truth.len(), 4);
        for cap in &caps[1..] {
            for (a, b) in cap.data.iter().zip(caps[0].data.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn scenario_ramp_matches_scene_oracle_and_flips_sign() {
        let geom = Geometry::new(423.0, 0.75, 160.0, 45.0, 4.0, 0.0, 42.0).unwrap();
        let arr = small_array();
        let samp = SamplingConfig {
            n: 8,
            ..small_sampling()
        };
        let falling: Vec<f64> = (0..8).map(|i| 1.0 - i as f64 / 7.0).collect();
        let rising: Vec<f64> = falling.iter().rev().copied().collect();
        let gains = PathGains {
            los: Complex64::new(0.0, 0.0),
            reflected: Complex64::new(1.0, 0.0),
        };

        let (_, truth) = gen_scenario(
            &geom, &falling, &arr, &samp, None, None, 0.0, &gains, 3,
        )
        .unwrap();
        let total_dd = truth.last().unwrap().d1_m - truth[0].d1_m;
        // Falling by 1 m lengthens the path by 2 sin(alpha); over a full
        // meter alpha itself moves, so integrate with the endpoint average.
        let sin_start = deg_to_rad(truth[0].alpha_deg).sin();
        let sin_end = deg_to_rad(truth.last().unwrap().alpha_deg).sin();
        assert_relative_eq!(total_dd, sin_start + sin_end, max_relative = 1e-3);

        // Slow-time phase slope of the reflected-only scene flips with the
        // ramp direction: rising water shortens the path and advances phase.
        let slope = |traj: &[f64]| -> f64 {
            let (caps, _) = gen_scenario(
                &geom, traj, &arr, &samp, None, None, 0.0, &gains, 3,
            )
            .unwrap();
            let ph: Vec<f64> = caps.iter().map(|c| c.data[(0, 0, 0)].arg()).collect();
            let mut acc = 0.0;
            for i in 1..ph.len() {
                let mut d = ph[i] - ph[i - 1];
                while d > std::f64::consts::PI {
                    d -= 2.0 * std::f64::consts::PI;
                }
                while d < -std::f64::consts::PI {
                    d += 2.0 * std::f64::consts::PI;
                }
                acc += d;
            }
            acc
        };
        let s_fall = slope(&falling);
        let s_rise = slope(&rising);
        assert!(s_fall < 0.0, "falling water should retard phase, got {s_fall}");
        assert!(s_rise > 0.0, "rising water should advance phase, got {s_rise}");
        assert_relative_eq!(s_fall, -s_rise, max_relative = 1e-6);
    }

    #[test]
    fn derive_seed_is_index_sensitive() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(42, 0));
    }
}
