//! Subspace array calibration from a pilot target of known AoA.
//!
//! Receive chains carry per-antenna gain/phase errors, and partially
//! synchronized transceiver pairs add a clock offset (RCO) to a subset of
//! antennas. Both act as one diagonal matrix `E = diag(e)` on the antenna
//! axis. With a pilot source at known angle `theta_p`, the signal subspace
//! `E_s` of the raw baseband covariance spans `E a(theta_p)`, so `e` is the
//! unity-eigenvalue eigenvector of `A0ᴴ E_s E_sᴴ A0` with
//! `A0 = diag(a(theta_p))`.
//!
//! Identifiability caveat: from a single pilot the diagonal model is only
//! determined up to a linear phase ramp across antennas — feeding a wrong
//! pilot AoA returns a self-consistent estimate whose phases are ramped by
//! the induced `sin(theta)` offset. The pilot angle must come from surveyed
//! geometry.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::hermitian_eig;
use crate::sim::{steering_vector, ArrayConfig, CsiCapture};
use crate::{Complex64, Error, Result};

/// Eigenvalues farther than this from 1 are rejected when selecting the
/// error vector.
pub const UNITY_EIGENVALUE_TOL: f64 = 0.1;

/// Estimated error magnitudes below this would amplify noise unboundedly
/// when divided out.
pub const MIN_ERROR_MAGNITUDE: f64 = 1e-6;

/// Combined per-antenna gain/phase errors plus a clock offset on a subset
/// of antennas. Antenna `m` scales the received signal by
/// `gains[m] * exp(-j (phases_rad[m] + rco_rad * [m in rco_antennas]))`;
/// antenna 0 is the reference and must be exactly `1 * exp(-j 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayErrorModel {
    pub gains: Vec<f64>,
    pub phases_rad: Vec<f64>,
    /// Clock offset between transceiver groups (rad).
    pub rco_rad: f64,
    /// Antennas the RCO applies to (never contains the reference 0).
    pub rco_antennas: Vec<usize>,
}

impl ArrayErrorModel {
    /// No errors on `m` antennas.
    pub fn identity(m: usize) -> Self {
        Self {
            gains: vec![1.0; m],
            phases_rad: vec![0.0; m],
            rco_rad: 0.0,
            rco_antennas: Vec::new(),
        }
    }

    /// Error model with the RCO applied to every antenna outside the first
    /// transceiver group of `group_size` antennas (pairs of 2 matching
    /// dual-transceiver receivers by default).
    pub fn with_paired_rco(
        gains: Vec<f64>,
        phases_rad: Vec<f64>,
        rco_rad: f64,
        group_size: usize,
    ) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::InvalidParameter("RCO group size must be >= 1".into()));
        }
        let m = gains.len();
        let model = Self {
            gains,
            phases_rad,
            rco_rad,
            rco_antennas: (0..m).filter(|i| i / group_size >= 1).collect(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.gains.len();
        if m == 0 || self.phases_rad.len() != m {
            return Err(Error::Dimension(format!(
                "error model has {} gains but {} phases",
                m,
                self.phases_rad.len()
            )));
        }
        if self.gains.iter().any(|&g| !g.is_finite() || g <= 0.0) {
            return Err(Error::InvalidParameter("gains must be finite and > 0".into()));
        }
        if self.phases_rad.iter().any(|p| !p.is_finite()) || !self.rco_rad.is_finite() {
            return Err(Error::InvalidParameter("phases must be finite".into()));
        }
        if self.gains[0] != 1.0 || self.phases_rad[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "reference antenna 0 must have gain 1 and phase 0".into(),
            ));
        }
        if self.rco_antennas.contains(&0) {
            return Err(Error::InvalidParameter(
                "RCO cannot apply to the reference antenna".into(),
            ));
        }
        if self.rco_antennas.iter().any(|&i| i >= m) {
            return Err(Error::InvalidParameter(
                "RCO antenna index out of range".into(),
            ));
        }
        Ok(())
    }

    /// Antenna count.
    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    /// Complex response per antenna.
    pub fn response_vector(&self) -> Vec<Complex64> {
        (0..self.gains.len())
            .map(|m| {
                let rco = if self.rco_antennas.contains(&m) {
                    self.rco_rad
                } else {
                    0.0
                };
                Complex64::from_polar(self.gains[m], -(self.phases_rad[m] + rco))
            })
            .collect()
    }

    /// Total phase per antenna including the RCO contribution (rad).
    pub fn combined_phases_rad(&self) -> Vec<f64> {
        (0..self.gains.len())
            .map(|m| {
                self.phases_rad[m]
                    + if self.rco_antennas.contains(&m) {
                        self.rco_rad
                    } else {
                        0.0
                    }
            })
            .collect()
    }

    /// Model whose application undoes this one.
    pub fn inverse(&self) -> Self {
        Self {
            gains: self.gains.iter().map(|g| 1.0 / g).collect(),
            phases_rad: self.phases_rad.iter().map(|p| -p).collect(),
            rco_rad: -self.rco_rad,
            rco_antennas: self.rco_antennas.clone(),
        }
    }
}

/// Raw narrowband baseband snapshot `B in C^{M x G}` used for calibration
/// (collected before channel estimation).
#[derive(Debug, Clone, PartialEq)]
pub struct BasebandSnapshot {
    pub data: DMatrix<Complex64>,
    /// Number of far-field sources present while the snapshot was taken.
    pub sources: usize,
}

impl BasebandSnapshot {
    pub fn validate(&self) -> Result<()> {
        let (m, g) = self.data.shape();
        if g <= m {
            return Err(Error::Dimension(format!(
                "snapshot needs more samples than antennas, got {m}x{g}"
            )));
        }
        if self.sources == 0 || self.sources >= m {
            return Err(Error::InvalidParameter(format!(
                "source count must be in [1, {}), got {}",
                m, self.sources
            )));
        }
        Ok(())
    }
}

/// Apply an error model to a CSI capture (antenna axis scaling).
pub fn apply_errors(capture: &CsiCapture, err: &ArrayErrorModel) -> Result<CsiCapture> {
    err.validate()?;
    if err.len() != capture.array.m {
        return Err(Error::Dimension(format!(
            "error model has {} antennas, capture has {}",
            err.len(),
            capture.array.m
        )));
    }
    let resp = err.response_vector();
    let mut out = capture.clone();
    for ((_, _, m), v) in out.data.indexed_iter_mut() {
        *v *= resp[m];
    }
    Ok(out)
}

/// Apply an error model to a baseband snapshot.
pub fn apply_errors_snapshot(
    snapshot: &BasebandSnapshot,
    err: &ArrayErrorModel,
) -> Result<BasebandSnapshot> {
    err.validate()?;
    let (m_n, _) = snapshot.data.shape();
    if err.len() != m_n {
        return Err(Error::Dimension(format!(
            "error model has {} antennas, snapshot has {m_n}",
            err.len()
        )));
    }
    let resp = err.response_vector();
    let mut out = snapshot.clone();
    for m in 0..m_n {
        for g in 0..out.data.ncols() {
            out.data[(m, g)] *= resp[m];
        }
    }
    Ok(out)
}

/// Estimate the combined array errors from a pilot snapshot.
///
/// The returned model folds any clock offset into the per-antenna phases
/// (`rco_rad = 0`): only the combined response is identifiable, and only
/// the combined response is needed to calibrate.
pub fn estimate_errors(
    snapshot: &BasebandSnapshot,
    pilot_aoa_deg: f64,
    array: &ArrayConfig,
) -> Result<ArrayErrorModel> {
    snapshot.validate()?;
    array.validate()?;
    let (m_n, g) = snapshot.data.shape();
    if m_n != array.m {
        return Err(Error::Dimension(format!(
            "snapshot has {m_n} antennas, array config declares {}",
            array.m
        )));
    }
    let s = snapshot.sources;

    let r = &snapshot.data * snapshot.data.adjoint() / Complex64::new(g as f64, 0.0);
    let eig = hermitian_eig(&r)?;
    let signal = eig.vectors.columns(0, s);
    let p_s = &signal * signal.adjoint();

    let a0 = DVector::from_vec(steering_vector(array, pilot_aoa_deg)?);
    // A0ᴴ P_s A0 with A0 = diag(a0): conjugate rows by a0*, columns by a0.
    let mut fit = DMatrix::<Complex64>::zeros(m_n, m_n);
    for i in 0..m_n {
        for j in 0..m_n {
            fit[(i, j)] = a0[i].conj() * p_s[(i, j)] * a0[j];
        }
    }
    let fit_eig = hermitian_eig(&fit)?;
    let (best, gap) = fit_eig
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| (i, (v - 1.0).abs()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty eigenvalues");
    if gap > UNITY_EIGENVALUE_TOL {
        return Err(Error::Calibration(format!(
            "no unity eigenvalue: closest is {:.4} (distance {:.4}); wrong pilot AoA or \
             insufficient SNR",
            fit_eig.values[best], gap
        )));
    }
    let v = fit_eig.vectors.column(best);
    if v[0].norm() < MIN_ERROR_MAGNITUDE {
        return Err(Error::Calibration(
            "reference antenna has near-zero estimated response".into(),
        ));
    }
    let scaled: Vec<Complex64> = v.iter().map(|x| x / v[0]).collect();
    let mut gains: Vec<f64> = scaled.iter().map(|x| x.norm()).collect();
    let mut phases: Vec<f64> = scaled.iter().map(|x| -x.arg()).collect();
    gains[0] = 1.0;
    phases[0] = 0.0;
    Ok(ArrayErrorModel {
        gains,
        phases_rad: phases,
        rco_rad: 0.0,
        rco_antennas: Vec::new(),
    })
}

/// Undo estimated array errors on a capture: divide antenna `m` by the
/// estimated response.
pub fn calibrate(capture: &CsiCapture, estimate: &ArrayErrorModel) -> Result<CsiCapture> {
    estimate.validate()?;
    if estimate.len() != capture.array.m {
        return Err(Error::Dimension(format!(
            "calibration has {} antennas, capture has {}",
            estimate.len(),
            capture.array.m
        )));
    }
    let resp = estimate.response_vector();
    if let Some((m, _)) = resp
        .iter()
        .enumerate()
        .find(|(_, r)| r.norm() < MIN_ERROR_MAGNITUDE)
    {
        return Err(Error::Calibration(format!(
            "estimated response for antenna {m} is below {MIN_ERROR_MAGNITUDE}; refusing to \
             divide"
        )));
    }
    let mut out = capture.clone();
    for ((_, _, m), v) in out.data.indexed_iter_mut() {
        *v /= resp[m];
    }
    Ok(out)
}
