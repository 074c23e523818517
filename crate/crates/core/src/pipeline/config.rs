//! Run configuration: one TOML file drives simulation, sensing, and the
//! AoA study. Every referenced module's invariants are validated at load
//! time so a bad field fails fast with its name.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::ArrayErrorModel;
use crate::scene::Geometry;
use crate::sim::{ArrayConfig, PathGains, RpoModel, SamplingConfig};
use crate::spectrum::SmoothingConfig;
use crate::{Complex64, Error, Result};

/// Water-surface trajectory over the run: a linear ramp from `start_m` to
/// `end_m` across the configured captures (equal endpoints for a static
/// scene).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub start_m: f64,
    pub end_m: f64,
}

impl TrajectoryConfig {
    pub fn levels(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.start_m];
        }
        (0..n)
            .map(|i| {
                self.start_m + (self.end_m - self.start_m) * i as f64 / (n - 1) as f64
            })
            .collect()
    }
}

/// Noise level: either an explicit per-component sigma or an SNR in dB
/// relative to the per-entry LOS power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct NoiseConfig {
    pub snr_db: Option<f64>,
    pub sigma: Option<f64>,
}

impl NoiseConfig {
    pub fn sigma_for(&self, los_gain: Complex64) -> Result<f64> {
        match (self.snr_db, self.sigma) {
            (Some(_), Some(_)) => Err(Error::Config(
                "noise: set either snr_db or sigma, not both".into(),
            )),
            (Some(snr), None) => Ok(crate::sim::noise_sigma_for_snr_db(snr, los_gain)),
            (None, Some(s)) if s.is_finite() && s >= 0.0 => Ok(s),
            (None, Some(s)) => Err(Error::Config(format!("noise.sigma must be >= 0, got {s}"))),
            (None, None) => Ok(0.0),
        }
    }
}

/// Path gains in polar form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainsConfig {
    pub los_mag: f64,
    pub los_phase_deg: f64,
    pub reflected_mag: f64,
    pub reflected_phase_deg: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            los_mag: 1.0,
            los_phase_deg: 0.0,
            reflected_mag: 0.5,
            reflected_phase_deg: 45.0,
        }
    }
}

impl GainsConfig {
    pub fn path_gains(&self) -> PathGains {
        PathGains {
            los: Complex64::from_polar(self.los_mag, self.los_phase_deg.to_radians()),
            reflected: Complex64::from_polar(
                self.reflected_mag,
                self.reflected_phase_deg.to_radians(),
            ),
        }
    }
}

/// Injected array errors (simulation side).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayErrorConfig {
    pub gains: Vec<f64>,
    pub phases_deg: Vec<f64>,
    #[serde(default)]
    pub rco_deg: f64,
    /// Antennas per synchronized transceiver group; groups after the first
    /// carry the RCO.
    #[serde(default = "default_rco_group")]
    pub rco_group_size: usize,
}

fn default_rco_group() -> usize {
    2
}

impl ArrayErrorConfig {
    pub fn model(&self) -> Result<ArrayErrorModel> {
        ArrayErrorModel::with_paired_rco(
            self.gains.clone(),
            self.phases_deg.iter().map(|p| p.to_radians()).collect(),
            self.rco_deg.to_radians(),
            self.rco_group_size,
        )
    }
}

/// Pilot snapshot used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub g: usize,
    pub snr_db: f64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self {
            g: 10_000,
            snr_db: 30.0,
        }
    }
}

/// AoA/Doppler evaluation grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub theta_step_deg: f64,
    /// Doppler grid points across the span (odd keeps a bin at exactly 0).
    pub f_points: usize,
    /// Half-span of the Doppler grid (Hz); defaults to the slow-time
    /// Nyquist limit `1 / (2 delta_t_cap)`.
    pub f_span_hz: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            theta_min_deg: -89.5,
            theta_max_deg: 89.5,
            theta_step_deg: 0.5,
            f_points: 201,
            f_span_hz: None,
        }
    }
}

impl GridConfig {
    pub fn theta_grid(&self) -> Result<Vec<f64>> {
        if !(self.theta_step_deg > 0.0 && self.theta_min_deg < self.theta_max_deg) {
            return Err(Error::Config(format!(
                "grids: need theta_min < theta_max and step > 0, got [{}, {}] step {}",
                self.theta_min_deg, self.theta_max_deg, self.theta_step_deg
            )));
        }
        if self.theta_min_deg <= -90.0 || self.theta_max_deg >= 90.0 {
            return Err(Error::Config(
                "grids: theta grid must stay inside (-90, 90) deg".into(),
            ));
        }
        let count = ((self.theta_max_deg - self.theta_min_deg) / self.theta_step_deg).floor()
            as usize
            + 1;
        Ok((0..count)
            .map(|i| self.theta_min_deg + i as f64 * self.theta_step_deg)
            .collect())
    }

    pub fn f_grid(&self, delta_t_cap_s: f64) -> Result<Vec<f64>> {
        if self.f_points < 3 {
            return Err(Error::Config(format!(
                "grids: f_points must be >= 3, got {}",
                self.f_points
            )));
        }
        let span = match self.f_span_hz {
            Some(s) if s > 0.0 => s,
            Some(s) => {
                return Err(Error::Config(format!(
                    "grids: f_span_hz must be > 0, got {s}"
                )))
            }
            None => 0.5 / delta_t_cap_s,
        };
        Ok(crate::spectrum::linspace(-span, span, self.f_points))
    }
}

/// Slow-time filtering ahead of the LCMV stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub cutoff_fraction: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            cutoff_fraction: 0.1,
        }
    }
}

/// Spectral estimation knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SenseConfig {
    /// Model order for MUSIC (LOS + water by default).
    pub sources: usize,
    /// Explicit diagonal loading; `None` applies the relative rule.
    pub rho: Option<f64>,
}

impl Default for SenseConfig {
    fn default() -> Self {
        Self {
            sources: 2,
            rho: None,
        }
    }
}

/// Distance sweep for the AoA-variation study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub d_tr_min_m: f64,
    pub d_tr_max_m: f64,
    pub d_tr_step_m: f64,
    pub delta_w_m: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            d_tr_min_m: 100.0,
            d_tr_max_m: 1000.0,
            d_tr_step_m: 10.0,
            delta_w_m: 1.0,
        }
    }
}

impl StudyConfig {
    pub fn distances(&self) -> Result<Vec<f64>> {
        if !(self.d_tr_step_m > 0.0 && self.d_tr_min_m <= self.d_tr_max_m && self.d_tr_min_m > 0.0)
        {
            return Err(Error::Config(format!(
                "study: need 0 < d_tr_min <= d_tr_max and step > 0, got [{}, {}] step {}",
                self.d_tr_min_m, self.d_tr_max_m, self.d_tr_step_m
            )));
        }
        let mut out = Vec::new();
        let mut d = self.d_tr_min_m;
        while d <= self.d_tr_max_m + 1e-9 {
            out.push(d);
            d += self.d_tr_step_m;
        }
        Ok(out)
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: Geometry,
    pub array: ArrayConfig,
    pub sampling: SamplingConfig,
    pub trajectory: TrajectoryConfig,
    #[serde(default)]
    pub rpo: Option<RpoModel>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub gains: GainsConfig,
    #[serde(default)]
    pub array_errors: Option<ArrayErrorConfig>,
    #[serde(default)]
    pub pilot: PilotConfig,
    #[serde(default)]
    pub smoothing: Option<SmoothingConfig>,
    #[serde(default)]
    pub grids: GridConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub sense: SenseConfig,
    #[serde(default)]
    pub study: StudyConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("parse failure: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry
            .validate()
            .map_err(|e| Error::Config(format!("geometry: {e}")))?;
        self.array
            .validate()
            .map_err(|e| Error::Config(format!("array: {e}")))?;
        self.sampling
            .validate()
            .map_err(|e| Error::Config(format!("sampling: {e}")))?;
        for (name, w) in [
            ("trajectory.start_m", self.trajectory.start_m),
            ("trajectory.end_m", self.trajectory.end_m),
        ] {
            if !w.is_finite() || w >= self.geometry.h_t.min(self.geometry.h_r) {
                return Err(Error::Config(format!(
                    "{name} = {w} must stay below both antenna heights"
                )));
            }
        }
        self.noise
            .sigma_for(self.gains.path_gains().los)
            .map_err(|e| Error::Config(format!("noise: {e}")))?;
        if let Some(e) = &self.array_errors {
            let model = e.model().map_err(|e| Error::Config(format!("array_errors: {e}")))?;
            if model.len() != self.array.m {
                return Err(Error::Config(format!(
                    "array_errors: {} antennas configured, array has {}",
                    model.len(),
                    self.array.m
                )));
            }
        }
        if self.pilot.g <= self.array.m {
            return Err(Error::Config(format!(
                "pilot.g = {} must exceed the antenna count {}",
                self.pilot.g, self.array.m
            )));
        }
        if let Some(s) = &self.smoothing {
            s.validate(self.array.m, self.sampling.n)
                .map_err(|e| Error::Config(format!("smoothing: {e}")))?;
        }
        self.grids.theta_grid()?;
        self.grids.f_grid(self.sampling.delta_t_cap_s)?;
        if !(self.filter.cutoff_fraction > 0.0 && self.filter.cutoff_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "filter.cutoff_fraction must be in (0, 0.5], got {}",
                self.filter.cutoff_fraction
            )));
        }
        if self.sense.sources == 0 {
            return Err(Error::Config("sense.sources must be >= 1".into()));
        }
        self.study.distances()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[geometry]
d_tr = 423.0
d_rw = 0.75
d_tw = 160.0
h_t = 45.0
h_r = 4.0
h_w0 = 1.0
theta_inc = 42.0

[array]
m = 4
kappa_m = 0.0563562
fc_hz = 2659.8e6

[sampling]
k = 32
l = 32
delta_f_hz = 90e3
delta_t_s = 0.5e-3
delta_t_cap_s = 90.0
n = 24

[trajectory]
start_m = 1.0
end_m = 0.0

[noise]
snr_db = 20.0
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.sense.sources, 2);
        assert!(cfg.rpo.is_none());
        assert_eq!(cfg.grids.f_points, 201);
        assert_eq!(cfg.filter.cutoff_fraction, 0.1);
        let levels = cfg.trajectory.levels(cfg.sampling.n);
        assert_eq!(levels.len(), 24);
        assert_eq!(levels[0], 1.0);
        assert_eq!(*levels.last().unwrap(), 0.0);
    }

    #[test]
    fn bad_fields_name_the_section() {
        let broken = MINIMAL.replace("d_tr = 423.0", "d_tr = -1.0");
        match RunConfig::from_toml_str(&broken) {
            Err(Error::Config(msg)) => assert!(msg.contains("geometry"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }

        let broken = MINIMAL.replace("snr_db = 20.0", "snr_db = 20.0\nsigma = 0.1");
        assert!(RunConfig::from_toml_str(&broken).is_err());

        let broken = MINIMAL.replace("start_m = 1.0", "start_m = 50.0");
        match RunConfig::from_toml_str(&broken) {
            Err(Error::Config(msg)) => assert!(msg.contains("trajectory"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn zero_captures_is_a_config_error() {
        let broken = MINIMAL.replace("n = 24", "n = 0");
        assert!(matches!(
            RunConfig::from_toml_str(&broken),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn grids_are_well_formed() {
        let cfg = RunConfig::from_toml_str(MINIMAL).unwrap();
        let theta = cfg.grids.theta_grid().unwrap();
        assert!(theta.windows(2).all(|w| w[1] > w[0]));
        let f = cfg.grids.f_grid(cfg.sampling.delta_t_cap_s).unwrap();
        assert_eq!(f.len(), 201);
        // Odd point count puts a bin exactly at zero Doppler.
        assert_eq!(f[100], 0.0);
        assert!((f[200] - 0.5 / 90.0).abs() < 1e-12);
    }
}
