//! Joint AoA / slow-time Doppler estimation on the reduced `M x N` series:
//! spatial-temporal smoothing, smoothed covariance, 2D MUSIC, and peak
//! pairing.
//!
//! The series is a single snapshot of two coherent paths (LOS and water),
//! so the plain covariance is rank one. Smoothing trades aperture for
//! virtual snapshots: every `(spatial offset i, temporal offset j)` shift of
//! an `(M - m_s + 1) x (N - n_s + 1)` window becomes one snapshot column,
//! restoring covariance rank so subspace estimation can resolve the pair.
//!
//! # Slow-time Doppler sign
//!
//! The slow-time steering uses `exp(+j 2 pi dt_cap f n)`: positive Doppler
//! means the path phase advances over captures, i.e. the water-reflected
//! path is shortening and the level is rising. One end-to-end convention
//! test locks this sign against the simulator and the water-level
//! inversion.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dimred::ReducedSeries;
use crate::linalg::hermitian_eig;
use crate::sim::{steering_vector, ArrayConfig};
use crate::{Complex64, Error, Result};

/// Spatial/temporal smoothing window sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    /// Spatial subarray size `m_s` (offsets 0..m_s become snapshots).
    pub m_s: usize,
    /// Temporal subwindow size `n_s`.
    pub n_s: usize,
}

impl SmoothingConfig {
    /// Defaults: `m_s = ceil(M/2) + 1` and `n_s` such that the virtual
    /// slow-time aperture is about half the captures.
    pub fn default_for(m: usize, n: usize) -> Self {
        let m_s = (m.div_ceil(2) + 1).clamp(1, m);
        let n_s = (n / 2 + 1).clamp(1, n);
        Self { m_s, n_s }
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        if self.m_s < 1 || self.m_s > m || self.n_s < 1 || self.n_s > n {
            return Err(Error::InvalidParameter(format!(
                "smoothing windows m_s = {}, n_s = {} must fit 1..={m} and 1..={n}",
                self.m_s, self.n_s
            )));
        }
        let virtual_dim = (m - self.m_s + 1) * (n - self.n_s + 1);
        let snapshots = self.m_s * self.n_s;
        if virtual_dim < snapshots {
            log::warn!(
                "smoothing yields {snapshots} snapshots of dimension {virtual_dim}; \
                 covariance will be snapshot-rich but aperture-poor"
            );
        }
        Ok(())
    }
}

/// Virtual snapshots produced by smoothing, with the factorization needed
/// to steer them.
#[derive(Debug, Clone, PartialEq)]
pub struct Smoothed {
    /// `(m_tilde n_tilde) x (m_s n_s)`; one snapshot per column.
    pub snapshots: DMatrix<Complex64>,
    pub m_tilde: usize,
    pub n_tilde: usize,
    pub array: ArrayConfig,
    pub delta_t_cap_s: f64,
}

/// Smoothed covariance plus the steering factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedCov {
    pub r: DMatrix<Complex64>,
    pub m_tilde: usize,
    pub n_tilde: usize,
    pub array: ArrayConfig,
    pub delta_t_cap_s: f64,
}

/// 2D power spectrum over an AoA/Doppler grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGrid {
    pub theta_deg: Vec<f64>,
    pub f_hz: Vec<f64>,
    /// `power[(theta index, f index)]`, strictly positive and finite.
    pub power: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PeakLabel {
    Los,
    Water,
    Other,
}

/// One detected (AoA, slow-time Doppler) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEstimate {
    pub aoa_deg: f64,
    pub doppler_hz: f64,
    pub power: f64,
    pub label: PeakLabel,
}

/// Build the smoothed snapshot matrix. Row `(n, m)` (antenna fastest) of
/// column `(i, j)` (spatial offset fastest) holds `h[m + i, n + j]`.
pub fn smooth(series: &ReducedSeries, cfg: &SmoothingConfig) -> Result<Smoothed> {
    series.validate()?;
    let (m, n) = (series.h.nrows(), series.h.ncols());
    cfg.validate(m, n)?;
    let m_tilde = m - cfg.m_s + 1;
    let n_tilde = n - cfg.n_s + 1;
    let mut snapshots = DMatrix::<Complex64>::zeros(m_tilde * n_tilde, cfg.m_s * cfg.n_s);
    for j in 0..cfg.n_s {
        for i in 0..cfg.m_s {
            let col = j * cfg.m_s + i;
            for nn in 0..n_tilde {
                for mm in 0..m_tilde {
                    snapshots[(nn * m_tilde + mm, col)] = series.h[(mm + i, nn + j)];
                }
            }
        }
    }
    Ok(Smoothed {
        snapshots,
        m_tilde,
        n_tilde,
        array: series.array,
        delta_t_cap_s: series.delta_t_cap_s,
    })
}

/// Smoothed covariance `R_s = H_s H_sᴴ / (m_s n_s)`.
pub fn smoothed_cov(smoothed: &Smoothed) -> SmoothedCov {
    let cols = smoothed.snapshots.ncols() as f64;
    let r = &smoothed.snapshots * smoothed.snapshots.adjoint() / Complex64::new(cols, 0.0);
    SmoothedCov {
        r: crate::linalg::hermitianize(&r),
        m_tilde: smoothed.m_tilde,
        n_tilde: smoothed.n_tilde,
        array: smoothed.array,
        delta_t_cap_s: smoothed.delta_t_cap_s,
    }
}

/// Joint steering vector `a(f) ⊗ a(theta)` for the virtual
/// `m_tilde x n_tilde` array: element `n m_tilde + m` is
/// `exp(+j 2 pi dt_cap f n) * exp(-j 2 pi kappa m sin(theta) / lambda)`.
pub fn joint_steering(
    theta_deg: f64,
    f_hz: f64,
    m_tilde: usize,
    n_tilde: usize,
    array: &ArrayConfig,
    delta_t_cap_s: f64,
) -> Result<DVector<Complex64>> {
    let mut spatial = steering_vector(array, theta_deg)?;
    spatial.truncate(m_tilde);
    if m_tilde > array.m {
        return Err(Error::Dimension(format!(
            "virtual array of {m_tilde} elements exceeds the physical {}",
            array.m
        )));
    }
    let step = 2.0 * std::f64::consts::PI * delta_t_cap_s * f_hz;
    let mut out = DVector::<Complex64>::zeros(m_tilde * n_tilde);
    for n in 0..n_tilde {
        let slow = Complex64::from_polar(1.0, step * n as f64);
        for m in 0..m_tilde {
            out[n * m_tilde + m] = slow * spatial[m];
        }
    }
    Ok(out)
}

/// 2D MUSIC over the grid: `P(theta, f) = 1 / (aᴴ E_n E_nᴴ a)`.
///
/// The quadratic form factors over the Kronecker structure: per AoA a
/// `n_tilde x n_tilde` reduced form `T` is built once, its diagonal sums
/// become a trigonometric polynomial in `f`, and every Doppler grid point
/// is one short dot product. A brute-force evaluation oracle pins this
/// down in the tests.
pub fn music2d(
    cov: &SmoothedCov,
    sources: usize,
    theta_grid_deg: &[f64],
    f_grid_hz: &[f64],
) -> Result<SpectrumGrid> {
    let q = cov.m_tilde * cov.n_tilde;
    if cov.r.nrows() != q || cov.r.ncols() != q {
        return Err(Error::Dimension(format!(
            "covariance is {}x{} but m_tilde * n_tilde = {q}",
            cov.r.nrows(),
            cov.r.ncols()
        )));
    }
    if sources >= q {
        return Err(Error::InvalidParameter(format!(
            "source count {sources} must be below the virtual dimension {q}"
        )));
    }
    for (name, axis) in [("theta", theta_grid_deg), ("f", f_grid_hz)] {
        if axis.is_empty() {
            return Err(Error::InvalidParameter(format!("{name} grid is empty")));
        }
        if axis.windows(2).any(|w| w[1] <= w[0]) || axis.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "{name} grid must be finite and strictly increasing"
            )));
        }
    }

    let eig = hermitian_eig(&cov.r)?;
    // PSD sanity: tiny negative tails are rounding.
    let floor = -1e-10 * eig.values[0].abs().max(1.0);
    if eig.values.iter().any(|&v| v < floor) {
        return Err(Error::InvalidParameter(format!(
            "covariance is not PSD (min eigenvalue {:.3e})",
            eig.values[eig.values.len() - 1]
        )));
    }
    let noise = eig.vectors.columns(sources, q - sources);
    let gram = &noise * noise.adjoint();

    let (mt, nt) = (cov.m_tilde, cov.n_tilde);
    // Doppler phasor table: e^{+j 2 pi dt f d} for every grid f and lag d.
    let phasors: Vec<Vec<Complex64>> = f_grid_hz
        .iter()
        .map(|&f| {
            let step = 2.0 * std::f64::consts::PI * cov.delta_t_cap_s * f;
            (0..nt)
                .map(|d| Complex64::from_polar(1.0, step * d as f64))
                .collect()
        })
        .collect();

    let rows: Result<Vec<Vec<f64>>> = theta_grid_deg
        .par_iter()
        .map(|&theta| {
            let mut spatial = steering_vector(&cov.array, theta)?;
            spatial.truncate(mt);
            // Reduced form T[n, n'] = a_thetaᴴ G[n, n'] a_theta over the
            // m_tilde x m_tilde blocks of the noise Gram matrix.
            let mut lag_sums = vec![Complex64::new(0.0, 0.0); nt];
            for n in 0..nt {
                for n2 in n..nt {
                    let mut t = Complex64::new(0.0, 0.0);
                    for m in 0..mt {
                        for m2 in 0..mt {
                            t += spatial[m].conj()
                                * gram[(n * mt + m, n2 * mt + m2)]
                                * spatial[m2];
                        }
                    }
                    lag_sums[n2 - n] += if n2 == n {
                        Complex64::new(t.re, 0.0)
                    } else {
                        t
                    };
                }
            }
            let row: Vec<f64> = phasors
                .iter()
                .map(|ph| {
                    let mut denom = lag_sums[0].re;
                    for d in 1..nt {
                        denom += 2.0 * (lag_sums[d] * ph[d]).re;
                    }
                    1.0 / denom.max(1e-300)
                })
                .collect();
            Ok(row)
        })
        .collect();
    let rows = rows?;

    let mut power = Array2::<f64>::zeros((theta_grid_deg.len(), f_grid_hz.len()));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            power[(i, j)] = v;
        }
    }
    Ok(SpectrumGrid {
        theta_deg: theta_grid_deg.to_vec(),
        f_hz: f_grid_hz.to_vec(),
        power,
    })
}

/// Uniformly spaced grid helper (inclusive of both ends).
pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![start];
    }
    let step = (end - start) / (points - 1) as f64;
    (0..points).map(|i| start + step * i as f64).collect()
}

/// Find the `p` largest strict local maxima (8-neighborhood; plateau ties
/// resolve to the lexicographically lowest index) and label them: any peak
/// within one Doppler grid step of zero is LOS, the strongest remaining
/// peak is the water path.
pub fn find_peaks(grid: &SpectrumGrid, p: usize) -> Result<Vec<PeakEstimate>> {
    if p == 0 {
        return Err(Error::InvalidParameter("peak count must be >= 1".into()));
    }
    let (nt, nf) = grid.power.dim();
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..nt {
        for j in 0..nf {
            let v = grid.power[(i, j)];
            let mut is_peak = true;
            'neigh: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= nt as i64 || nj >= nf as i64 {
                        continue;
                    }
                    let w = grid.power[(ni as usize, nj as usize)];
                    if w > v || (w == v && (ni as usize, nj as usize) < (i, j)) {
                        is_peak = false;
                        break 'neigh;
                    }
                }
            }
            if is_peak {
                candidates.push((i, j, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| (a.0, a.1).cmp(&(b.0, b.1))));
    if candidates.len() < p {
        return Err(Error::PeakFinding(format!(
            "requested {p} peaks but the spectrum has {} local maxima: {:?}",
            candidates.len(),
            candidates
                .iter()
                .map(|&(i, j, _)| (grid.theta_deg[i], grid.f_hz[j]))
                .collect::<Vec<_>>()
        )));
    }

    let f_step = if grid.f_hz.len() > 1 {
        grid.f_hz[1] - grid.f_hz[0]
    } else {
        f64::INFINITY
    };
    let mut peaks: Vec<PeakEstimate> = candidates
        .into_iter()
        .take(p)
        .map(|(i, j, v)| PeakEstimate {
            aoa_deg: grid.theta_deg[i],
            doppler_hz: grid.f_hz[j],
            power: v,
            label: if grid.f_hz[j].abs() <= f_step + 1e-12 {
                PeakLabel::Los
            } else {
                PeakLabel::Other
            },
        })
        .collect();
    if let Some(water) = peaks
        .iter_mut()
        .filter(|pk| pk.label == PeakLabel::Other)
        .max_by(|a, b| a.power.total_cmp(&b.power))
    {
        water.label = PeakLabel::Water;
    }
    Ok(peaks)
}

impl SpectrumGrid {
    /// CSV rendering: a header row of Doppler frequencies, then one row per
    /// AoA with the angle in the first column.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("theta_deg_by_f_hz");
        for f in &self.f_hz {
            out.push_str(&format!(",{f}"));
        }
        out.push('\n');
        for (i, th) in self.theta_deg.iter().enumerate() {
            out.push_str(&format!("{th}"));
            for j in 0..self.f_hz.len() {
                out.push_str(&format!(",{}", self.power[(i, j)]));
            }
            out.push('\n');
        }
        out
    }
}
