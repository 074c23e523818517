//! Binary CSI capture file ("CSIW"): a fixed little-endian header plus the
//! captures as complex64 (f32 real, f32 imag) pairs, subcarrier-fastest,
//! then symbol, then antenna, one capture after another.
//!
//! The payload is single precision to halve file sizes at the default
//! dimensions; all in-memory processing stays in f64. Reading a written
//! file and writing it again is byte-identical.
//!
//! Pilot baseband snapshots reuse the same container with `k = 1`, `n = 1`
//! and the sample count in `l`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::Array3;

use crate::sim::{ArrayConfig, CsiCapture, SamplingConfig};
use crate::{Complex64, Error, Result};

pub const CSI_MAGIC: &[u8; 4] = b"CSIW";
pub const CSI_VERSION: u16 = 1;

/// Write bytes to `path` atomically (temp file in the same directory, then
/// rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn header_bytes(array: &ArrayConfig, sampling: &SamplingConfig, n: u32) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(4 + 2 + 4 * 4 + 8 * 5);
    out.extend_from_slice(CSI_MAGIC);
    out.write_u16::<LittleEndian>(CSI_VERSION)?;
    out.write_u32::<LittleEndian>(sampling.k as u32)?;
    out.write_u32::<LittleEndian>(sampling.l as u32)?;
    out.write_u32::<LittleEndian>(array.m as u32)?;
    out.write_u32::<LittleEndian>(n)?;
    out.write_f64::<LittleEndian>(sampling.delta_f_hz)?;
    out.write_f64::<LittleEndian>(sampling.delta_t_s)?;
    out.write_f64::<LittleEndian>(sampling.delta_t_cap_s)?;
    out.write_f64::<LittleEndian>(array.fc_hz)?;
    out.write_f64::<LittleEndian>(array.kappa_m)?;
    Ok(out)
}

/// Write captures to a CSIW file atomically.
pub fn write_csi_file(path: &Path, captures: &[CsiCapture]) -> Result<()> {
    // Large tensors: stream through a buffered writer into the temp file
    // rather than building one contiguous byte vector.
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    {
        let mut w = BufWriter::new(tmp.as_file());
        if captures.is_empty() {
            return Err(Error::InvalidParameter("no captures to write".into()));
        }
        let array = captures[0].array;
        let sampling = captures[0].sampling;
        for (i, c) in captures.iter().enumerate() {
            c.validate()?;
            if c.array != array || c.sampling != sampling {
                return Err(Error::Dimension(format!(
                    "capture {i} has a different array or sampling config"
                )));
            }
        }
        w.write_all(&header_bytes(&array, &sampling, captures.len() as u32)?)?;
        let (k_n, l_n, m_n) = (sampling.k, sampling.l, array.m);
        for c in captures {
            for m in 0..m_n {
                for l in 0..l_n {
                    for k in 0..k_n {
                        let v = c.data[(k, l, m)];
                        w.write_f32::<LittleEndian>(v.re as f32)?;
                        w.write_f32::<LittleEndian>(v.im as f32)?;
                    }
                }
            }
        }
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Read a CSIW file back into captures (timestamps are reconstructed from
/// the capture interval).
pub fn read_csi_file(path: &Path) -> Result<Vec<CsiCapture>> {
    let file = File::open(path)?;
    let declared = file.metadata()?.len();
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format("file too short for CSIW header".into()))?;
    if &magic != CSI_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {magic:02x?}, expected \"CSIW\""
        )));
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != CSI_VERSION {
        return Err(Error::Format(format!(
            "unsupported CSIW version {version}, expected {CSI_VERSION}"
        )));
    }
    let k_n = r.read_u32::<LittleEndian>()? as usize;
    let l_n = r.read_u32::<LittleEndian>()? as usize;
    let m_n = r.read_u32::<LittleEndian>()? as usize;
    let n = r.read_u32::<LittleEndian>()? as usize;
    let delta_f_hz = r.read_f64::<LittleEndian>()?;
    let delta_t_s = r.read_f64::<LittleEndian>()?;
    let delta_t_cap_s = r.read_f64::<LittleEndian>()?;
    let fc_hz = r.read_f64::<LittleEndian>()?;
    let kappa_m = r.read_f64::<LittleEndian>()?;

    let header_len = (4 + 2 + 4 * 4 + 8 * 5) as u64;
    let expected_payload = (n * k_n * l_n * m_n * 8) as u64;
    if declared != header_len + expected_payload {
        return Err(Error::Format(format!(
            "payload length mismatch: file has {} bytes, header implies {}",
            declared,
            header_len + expected_payload
        )));
    }

    let array = ArrayConfig::new(m_n, kappa_m, fc_hz)?;
    let sampling = SamplingConfig {
        k: k_n,
        l: l_n,
        delta_f_hz,
        delta_t_s,
        delta_t_cap_s,
        n,
    };
    sampling.validate()?;

    let mut captures = Vec::with_capacity(n);
    for i in 0..n {
        let mut data = Array3::<Complex64>::zeros((k_n, l_n, m_n));
        for m in 0..m_n {
            for l in 0..l_n {
                for k in 0..k_n {
                    let re = r.read_f32::<LittleEndian>()?;
                    let im = r.read_f32::<LittleEndian>()?;
                    data[(k, l, m)] = Complex64::new(re as f64, im as f64);
                }
            }
        }
        let capture = CsiCapture {
            data,
            timestamp_s: i as f64 * delta_t_cap_s,
            array,
            sampling,
        };
        capture.validate().map_err(|e| {
            Error::Format(format!("capture {i} failed validation after read: {e}"))
        })?;
        captures.push(capture);
    }
    Ok(captures)
}
