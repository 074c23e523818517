//! Stage orchestration and file interfaces behind the `hydrosense` CLI:
//! simulate → calibrate → sense → study, with CSV/JSON/binary artifacts.
//!
//! The sensing chain (per the system flow): per-capture RPO compensation
//! using the geometric LOS angle, delay/Doppler dimension reduction, joint
//! 2D MUSIC for the (AoA, slow-time Doppler) pairs, static-clutter removal,
//! slow-time low-pass, LCMV extraction of the water path with an LOS null,
//! and the phase → path length → water level inversion using
//! `alpha = theta_inc - theta1_hat`.

pub mod config;
pub mod csifile;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::{estimate_errors, ArrayErrorModel, BasebandSnapshot};
use crate::dimred::reduce_series;
use crate::extract::{
    beamform, lcmv_weights, lowpass, path_delta, phase_series, remove_static, water_level,
    PhaseSeries, WaterLevelSeries,
};
use crate::rpo::{compensate, estimate_rpo};
use crate::scene::{aoa_variation_study, los_aoa};
use crate::sim::{
    gen_scenario, synth_baseband, ArrayConfig, CsiCapture, GroundTruth, SamplingConfig,
};
use crate::spectrum::{find_peaks, music2d, smooth, smoothed_cov, PeakEstimate, PeakLabel,
    SmoothingConfig, SpectrumGrid};
use crate::{Error, Result};

pub use config::RunConfig;
pub use csifile::{read_csi_file, write_atomic, write_csi_file};

/// Everything the sense stage produces.
#[derive(Debug, Clone)]
pub struct SenseOutcome {
    /// LOS AoA from the zero-Doppler spectral peak (deg).
    pub theta0_deg: f64,
    /// Water-path AoA from the spectral peak (deg).
    pub theta1_deg: f64,
    /// Reflection angle used for the inversion (deg).
    pub alpha_deg: f64,
    pub peaks: Vec<PeakEstimate>,
    pub water: WaterLevelSeries,
    pub phase: PhaseSeries,
    /// Capture timestamps (s).
    pub time_s: Vec<f64>,
    /// Selected (range, Doppler) bins per capture.
    pub provenance: Vec<(usize, usize)>,
    /// Full spectrum, when requested.
    pub spectrum: Option<SpectrumGrid>,
}

/// Synthesize the configured scenario.
pub fn simulate(cfg: &RunConfig) -> Result<(Vec<CsiCapture>, Vec<GroundTruth>)> {
    cfg.validate()?;
    let gains = cfg.gains.path_gains();
    let sigma = cfg.noise.sigma_for(gains.los)?;
    let errors = cfg
        .array_errors
        .as_ref()
        .map(|e| e.model())
        .transpose()?;
    let traj = cfg.trajectory.levels(cfg.sampling.n);
    gen_scenario(
        &cfg.geometry,
        &traj,
        &cfg.array,
        &cfg.sampling,
        cfg.rpo.as_ref(),
        errors.as_ref(),
        sigma,
        &gains,
        cfg.seed,
    )
}

/// Synthesize the raw baseband pilot snapshot used for array calibration:
/// the static LOS path alone serves as the single pilot source (a diagonal
/// error model is only identifiable from one source of known angle).
pub fn make_pilot_snapshot(cfg: &RunConfig) -> Result<BasebandSnapshot> {
    cfg.validate()?;
    let theta0 = los_aoa(&cfg.geometry)?;
    let errors = cfg
        .array_errors
        .as_ref()
        .map(|e| e.model())
        .transpose()?;
    let sigma =
        crate::sim::noise_sigma_for_snr_db(cfg.pilot.snr_db, crate::Complex64::new(1.0, 0.0));
    synth_baseband(
        &cfg.array,
        &[theta0],
        &[1.0],
        cfg.pilot.g,
        errors.as_ref(),
        sigma,
        crate::sim::derive_seed(cfg.seed, u64::MAX),
    )
}

fn check_capture_config(captures: &[CsiCapture], cfg: &RunConfig) -> Result<()> {
    if captures.is_empty() {
        return Err(Error::Dimension("no captures to sense".into()));
    }
    let a = captures[0].array;
    let s = captures[0].sampling;
    if a != cfg.array {
        return Err(Error::Config(format!(
            "captures carry array {a:?} but the config declares {:?}",
            cfg.array
        )));
    }
    let mut expected = cfg.sampling;
    expected.n = s.n;
    if s != expected {
        return Err(Error::Config(format!(
            "captures carry sampling {s:?} but the config declares {expected:?}"
        )));
    }
    Ok(())
}

/// Run the full sensing chain over already-loaded captures.
pub fn sense_captures(
    captures: &[CsiCapture],
    cfg: &RunConfig,
    calibration: Option<&ArrayErrorModel>,
    emit_spectrum: bool,
) -> Result<SenseOutcome> {
    cfg.validate()?;
    check_capture_config(captures, cfg)?;

    let calibrated: Vec<CsiCapture> = match calibration {
        Some(model) => captures
            .iter()
            .map(|c| crate::calib::calibrate(c, model))
            .collect::<Result<_>>()?,
        None => captures.to_vec(),
    };

    let theta0_geom = los_aoa(&cfg.geometry)?;
    log::info!("geometric LOS AoA: {theta0_geom:.3} deg");

    let compensated: Vec<CsiCapture> = calibrated
        .iter()
        .map(|c| {
            let est = estimate_rpo(c, theta0_geom, cfg.sense.rho)?;
            compensate(c, &est)
        })
        .collect::<Result<_>>()?;

    let series = reduce_series(&compensated)?;
    log::info!(
        "dimension reduction: selected bins (range, doppler) = {:?} on capture 0",
        series.provenance[0]
    );

    let smoothing = cfg
        .smoothing
        .unwrap_or_else(|| SmoothingConfig::default_for(series.h.nrows(), series.h.ncols()));
    let smoothed = smooth(&series, &smoothing)?;
    let cov = smoothed_cov(&smoothed);
    let theta_grid = cfg.grids.theta_grid()?;
    let f_grid = cfg.grids.f_grid(series.delta_t_cap_s)?;
    let grid = music2d(&cov, cfg.sense.sources, &theta_grid, &f_grid)?;
    let peaks = find_peaks(&grid, cfg.sense.sources)?;
    log::info!("spectral peaks: {peaks:?}");

    let theta0 = peaks
        .iter()
        .filter(|p| p.label == PeakLabel::Los)
        .max_by(|a, b| a.power.total_cmp(&b.power))
        .map(|p| p.aoa_deg)
        .ok_or_else(|| {
            Error::PeakFinding("no zero-Doppler (LOS) peak in the 2D spectrum".into())
        })?;
    let water_peak = peaks
        .iter()
        .find(|p| p.label == PeakLabel::Water)
        .copied()
        .ok_or_else(|| {
            Error::PeakFinding(
                "no non-zero-Doppler (water) peak in the 2D spectrum".into(),
            )
        })?;
    let theta1 = water_peak.aoa_deg;
    let alpha = cfg.geometry.theta_inc - theta1;
    log::info!(
        "theta0_hat = {theta0:.3} deg, theta1_hat = {theta1:.3} deg, alpha_hat = {alpha:.3} deg, \
         water slow-time Doppler = {:+.3e} Hz",
        water_peak.doppler_hz
    );

    let cleaned = remove_static(&series)?;
    let filtered = lowpass(&cleaned, cfg.filter.cutoff_fraction)?;
    let weights = lcmv_weights(&filtered, theta1, theta0, cfg.sense.rho)?;
    let bf = beamform(&filtered, &weights)?;
    let phase = phase_series(&bf)?;
    let lambda = cfg.array.lambda_m();
    let deltas = path_delta(&phase, lambda)?;
    let water = water_level(&deltas, alpha, lambda)?;

    Ok(SenseOutcome {
        theta0_deg: theta0,
        theta1_deg: theta1,
        alpha_deg: alpha,
        peaks,
        water,
        phase,
        time_s: captures.iter().map(|c| c.timestamp_s).collect(),
        provenance: series.provenance.clone(),
        spectrum: emit_spectrum.then_some(grid),
    })
}

/// AoA-variation study over the configured distance sweep.
pub fn study(cfg: &RunConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let distances = cfg.study.distances()?;
    aoa_variation_study(&cfg.geometry, cfg.study.delta_w_m, &distances)
}

// ---------------------------------------------------------------------------
// CSV / JSON artifacts
// ---------------------------------------------------------------------------

/// Ground-truth CSV (one row per capture).
pub fn truth_csv_string(truth: &[GroundTruth]) -> String {
    let mut out = String::from("capture_index,time_s,water_m,d1_m,aoa_deg\n");
    for gt in truth {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            gt.capture_index, gt.time_s, gt.water_m, gt.d1_m, gt.aoa_deg
        ));
    }
    out
}

/// Water-level CSV (one row per capture).
pub fn water_csv_string(outcome: &SenseOutcome) -> String {
    let mut out = String::from("capture_index,time_s,delta_w_m,path_delta_m,phase_rad\n");
    for i in 0..outcome.water.delta_w_m.len() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i,
            outcome.time_s[i],
            outcome.water.delta_w_m[i],
            outcome.water.path_delta_m[i],
            outcome.phase.psi_rad[i]
        ));
    }
    out
}

/// Study CSV (one row per swept distance).
pub fn study_csv_string(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("d_tr_m,delta_aoa_deg\n");
    for (d, v) in curve {
        out.push_str(&format!("{d},{v}\n"));
    }
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationEntry {
    index: usize,
    gain: f64,
    phase_deg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationFile {
    antennas: Vec<CalibrationEntry>,
}

/// Persist an estimated error model as the calibration JSON consumed by
/// `sense --calibration`.
pub fn save_calibration(path: &Path, model: &ArrayErrorModel) -> Result<()> {
    model.validate()?;
    let phases = model.combined_phases_rad();
    let file = CalibrationFile {
        antennas: (0..model.len())
            .map(|i| CalibrationEntry {
                index: i,
                gain: model.gains[i],
                phase_deg: phases[i].to_degrees(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Format(format!("calibration serialization: {e}")))?;
    write_atomic(path, json.as_bytes())
}

/// Load a calibration JSON file.
pub fn load_calibration(path: &Path) -> Result<ArrayErrorModel> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let file: CalibrationFile = serde_json::from_str(&text)
        .map_err(|e| Error::Format(format!("calibration parse failure: {e}")))?;
    let mut entries = file.antennas;
    entries.sort_by_key(|e| e.index);
    if entries.is_empty()
        || entries
            .iter()
            .enumerate()
            .any(|(i, e)| e.index != i)
    {
        return Err(Error::Format(
            "calibration file must cover antenna indices 0..M contiguously".into(),
        ));
    }
    let model = ArrayErrorModel {
        gains: entries.iter().map(|e| e.gain).collect(),
        phases_rad: entries.iter().map(|e| e.phase_deg.to_radians()).collect(),
        rco_rad: 0.0,
        rco_antennas: Vec::new(),
    };
    model.validate()?;
    Ok(model)
}

/// Write a pilot baseband snapshot using the CSIW container
/// (`k = 1`, `n = 1`, samples along the symbol axis).
pub fn write_snapshot_file(
    path: &Path,
    snapshot: &BasebandSnapshot,
    array: &ArrayConfig,
) -> Result<()> {
    snapshot.validate()?;
    let (m, g) = snapshot.data.shape();
    if m != array.m {
        return Err(Error::Dimension(format!(
            "snapshot has {m} antennas, array config declares {}",
            array.m
        )));
    }
    let sampling = SamplingConfig {
        k: 1,
        l: g,
        delta_f_hz: 1.0,
        delta_t_s: 1.0,
        delta_t_cap_s: 1.0,
        n: 1,
    };
    let mut data = ndarray::Array3::zeros((1, g, m));
    for col in 0..g {
        for ant in 0..m {
            data[(0, col, ant)] = snapshot.data[(ant, col)];
        }
    }
    let capture = CsiCapture {
        data,
        timestamp_s: 0.0,
        array: *array,
        sampling,
    };
    write_csi_file(path, &[capture])
}

/// Read a pilot snapshot file; `sources` is caller-declared (snapshots
/// carry no model-order metadata).
pub fn read_snapshot_file(path: &Path, sources: usize) -> Result<(BasebandSnapshot, ArrayConfig)> {
    let captures = read_csi_file(path)?;
    if captures.len() != 1 || captures[0].sampling.k != 1 {
        return Err(Error::Format(format!(
            "{} is not a pilot snapshot (need n = 1, k = 1; got n = {}, k = {})",
            path.display(),
            captures.len(),
            captures[0].sampling.k
        )));
    }
    let cap = &captures[0];
    let (_, g, m) = cap.data.dim();
    let data = nalgebra::DMatrix::from_fn(m, g, |ant, col| cap.data[(0, col, ant)]);
    let snapshot = BasebandSnapshot { data, sources };
    snapshot.validate()?;
    Ok((snapshot, cap.array))
}

// ---------------------------------------------------------------------------
// CLI-level operations (shared by the binary and the C API)
// ---------------------------------------------------------------------------

/// Simulate and write the CSI file, the ground-truth CSV, and optionally a
/// pilot snapshot.
pub fn cli_simulate(
    cfg: &RunConfig,
    out: &Path,
    truth_out: Option<&Path>,
    pilot_out: Option<&Path>,
) -> Result<()> {
    let (captures, truth) = simulate(cfg)?;
    write_csi_file(out, &captures)?;
    if let Some(p) = truth_out {
        write_atomic(p, truth_csv_string(&truth).as_bytes())?;
    }
    if let Some(p) = pilot_out {
        let snapshot = make_pilot_snapshot(cfg)?;
        write_snapshot_file(p, &snapshot, &cfg.array)?;
    }
    Ok(())
}

/// Sense a CSI file and write the water-level CSV (and optionally the
/// spectrum CSV).
pub fn cli_sense(
    csi_path: &Path,
    cfg: &RunConfig,
    calibration_path: Option<&Path>,
    out: &Path,
    spectrum_out: Option<&Path>,
) -> Result<SenseOutcome> {
    let captures = read_csi_file(csi_path)?;
    let calibration = calibration_path.map(load_calibration).transpose()?;
    let outcome = sense_captures(&captures, cfg, calibration.as_ref(), spectrum_out.is_some())?;
    write_atomic(out, water_csv_string(&outcome).as_bytes())?;
    if let Some(p) = spectrum_out {
        let grid = outcome
            .spectrum
            .as_ref()
            .expect("spectrum requested but not produced");
        write_atomic(p, grid.to_csv_string().as_bytes())?;
    }
    Ok(outcome)
}

/// Estimate array errors from a pilot snapshot file and write the
/// calibration JSON.
pub fn cli_calibrate(
    snapshot_path: &Path,
    pilot_aoa_deg: f64,
    sources: usize,
    out: &Path,
) -> Result<ArrayErrorModel> {
    let (snapshot, array) = read_snapshot_file(snapshot_path, sources)?;
    let model = estimate_errors(&snapshot, pilot_aoa_deg, &array)?;
    save_calibration(out, &model)?;
    Ok(model)
}

/// Run the AoA-variation study and write its CSV.
pub fn cli_study_aoa(cfg: &RunConfig, out: &Path) -> Result<()> {
    let curve = study(cfg)?;
    write_atomic(out, study_csv_string(&curve).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        // The joint estimator needs slow-time aperture (N) and per-capture
        // snapshots (L) to separate two paths 12 deg apart on a 4-element
        // array; this is the smallest comfortable scale.
        RunConfig::from_toml_str(
            r#"
seed = 11

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
k = 64
l = 64
delta_f_hz = 90e3
delta_t_s = 0.5e-3
delta_t_cap_s = 90.0
n = 180

[trajectory]
start_m = 1.0
end_m = 0.0

[noise]
snr_db = 20.0

[grids]
theta_min_deg = 10.0
theta_max_deg = 70.0
theta_step_deg = 0.1
f_points = 201
"#,
        )
        .unwrap()
    }

    #[test]
    fn simulate_then_sense_recovers_the_ramp() {
        let cfg = small_config();
        let (captures, truth) = simulate(&cfg).unwrap();
        assert_eq!(captures.len(), 180);
        let outcome = sense_captures(&captures, &cfg, None, false).unwrap();

        // Falling level: negative slow-time Doppler on the water peak.
        let water = outcome
            .peaks
            .iter()
            .find(|p| p.label == PeakLabel::Water)
            .unwrap();
        assert!(water.doppler_hz < 0.0);

        // Recovered level change tracks the injected trajectory.
        let mut worst: f64 = 0.0;
        let mut sum = 0.0;
        for (i, gt) in truth.iter().enumerate() {
            let expected = gt.water_m - truth[0].water_m;
            let err = (outcome.water.delta_w_m[i] - expected).abs();
            worst = worst.max(err);
            sum += err;
        }
        let mean = sum / truth.len() as f64;
        assert!(mean < 0.02, "mean water-level error {mean} m");
        assert!(worst < 0.06, "worst water-level error {worst} m");
    }

    #[test]
    fn sense_rejects_mismatched_config() {
        let cfg = small_config();
        let (captures, _) = simulate(&cfg).unwrap();
        let mut other = cfg.clone();
        other.array.m = 3;
        assert!(matches!(
            sense_captures(&captures, &other, None, false),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn calibration_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cal.json");
        let model = ArrayErrorModel {
            gains: vec![1.0, 1.2, 0.8, 1.1],
            phases_rad: vec![0.0, 0.17, -0.35, 0.61],
            rco_rad: 0.0,
            rco_antennas: vec![],
        };
        save_calibration(&path, &model).unwrap();
        let loaded = load_calibration(&path).unwrap();
        for i in 0..4 {
            assert!((loaded.gains[i] - model.gains[i]).abs() < 1e-12);
            assert!((loaded.phases_rad[i] - model.phases_rad[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn snapshot_file_round_trip() {
        let cfg = small_config();
        let snap = make_pilot_snapshot(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pilot.csiw");
        write_snapshot_file(&path, &snap, &cfg.array).unwrap();
        let (loaded, array) = read_snapshot_file(&path, 1).unwrap();
        assert_eq!(array, cfg.array);
        assert_eq!(loaded.data.shape(), snap.data.shape());
        for (a, b) in loaded.data.iter().zip(snap.data.iter()) {
            assert_eq!(a.re, b.re as f32 as f64);
            assert_eq!(a.im, b.im as f32 as f64);
        }
    }

    #[test]
    fn study_curve_is_monotone() {
        let cfg = small_config();
        let curve = study(&cfg).unwrap();
        assert_eq!(curve.len(), 91);
        let mut prev = f64::INFINITY;
        for &(_, v) in &curve {
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }
}
