//! Versioned binary checkpoints with explicit little-endian encoding.
//!
//! The file stores everything the time loop needs to resume bit-exactly:
//! modal coefficients, controller state, the lagged subgrid fields, the
//! friction-velocity estimate and the statistics accumulators, plus the full
//! configuration echo for self-contained postprocessing.

use crate::fields::{ModalField, N_CONS};
use crate::{Error, Result};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"DGLS";
const TRAILER: &[u8; 4] = b"SLGD";
const VERSION: u32 = 1;

/// Everything needed to resume a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: f64,
    pub step: u64,
    pub forcing_integral: f64,
    pub u_tau: f64,
    pub u: ModalField,
    pub tau_kk_mean: Vec<f64>,
    pub sgs_diff: Vec<f64>,
    pub stats_acc: Vec<f64>,
    pub stats_scalars: [f64; 5],
    pub config_echo: String,
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn u64(&mut self, v: u64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64(&mut self, v: f64) -> Result<()> {
        self.0.write_all(&v.to_le_bytes())?;
        Ok(())
    }
    fn f64_slice(&mut self, v: &[f64]) -> Result<()> {
        for x in v {
            self.f64(*x)?;
        }
        Ok(())
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|e| Error::Checkpoint(format!("truncated file: {e}")))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(v)
    }
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    // Write to a sibling temp file first so a crash never leaves a partial
    // checkpoint under the final name.
    let tmp = path.with_extension("tmp");
    {
        let file = std::fs::File::create(&tmp)?;
        let mut w = Writer(std::io::BufWriter::new(file));
        w.0.write_all(MAGIC)?;
        w.u32(VERSION)?;
        w.u64(ck.u.n_elems as u64)?;
        w.u64(ck.u.n_modes as u64)?;
        w.u64(ck.stats_acc.len() as u64)?;
        w.f64(ck.t)?;
        w.u64(ck.step)?;
        w.f64(ck.forcing_integral)?;
        w.f64(ck.u_tau)?;
        w.f64_slice(&ck.u.data)?;
        w.f64_slice(&ck.tau_kk_mean)?;
        w.f64_slice(&ck.sgs_diff)?;
        w.f64_slice(&ck.stats_acc)?;
        w.f64_slice(&ck.stats_scalars)?;
        let echo = ck.config_echo.as_bytes();
        w.u32(echo.len() as u32)?;
        w.0.write_all(echo)?;
        w.0.write_all(TRAILER)?;
        w.0.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?;
    let mut r = Reader(std::io::BufReader::new(file));
    let magic: [u8; 4] = r.bytes()?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic: not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let n_elems = r.u64()? as usize;
    let n_modes = r.u64()? as usize;
    let n_acc = r.u64()? as usize;
    if n_elems == 0 || n_modes == 0 || n_elems > u32::MAX as usize {
        return Err(Error::Checkpoint("implausible shape header".into()));
    }
    let t = r.f64()?;
    let step = r.u64()?;
    let forcing_integral = r.f64()?;
    let u_tau = r.f64()?;
    let data = r.f64_vec(n_elems * N_CONS * n_modes)?;
    let tau_kk_mean = r.f64_vec(n_elems)?;
    let sgs_diff = r.f64_vec(n_elems)?;
    let stats_acc = r.f64_vec(n_acc)?;
    let sc = r.f64_vec(5)?;
    let echo_len = r.u32()? as usize;
    let mut echo = vec![0u8; echo_len];
    r.0.read_exact(&mut echo)
        .map_err(|e| Error::Checkpoint(format!("truncated config echo: {e}")))?;
    let trailer: [u8; 4] = r.bytes()?;
    if &trailer != TRAILER {
        return Err(Error::Checkpoint("missing trailer: truncated file".into()));
    }
    Ok(Checkpoint {
        t,
        step,
        forcing_integral,
        u_tau,
        u: ModalField {
            n_elems,
            n_vars: N_CONS,
            n_modes,
            data,
        },
        tau_kk_mean,
        sgs_diff,
        stats_acc,
        stats_scalars: [sc[0], sc[1], sc[2], sc[3], sc[4]],
        config_echo: String::from_utf8(echo)
            .map_err(|_| Error::Checkpoint("config echo is not UTF-8".into()))?,
    })
}
