//! A trained model as shipped between pipeline stages: network, noise
//! schedule and the column statistics that map samples back to physical
//! design coordinates.
//!
//! Binary layout (all integers u64 and floats f64, little-endian):
//!
//! ```text
//! "RDDM"  u32 version
//! dim  embed_dim  T  n_hidden  hidden[n_hidden]
//! params[...]            layer by layer: fan_in x fan_out row-major weights, then biases
//! T  betas[T]
//! mean[dim]  std[dim]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::ColumnStats;
use crate::denoiser::{read_f64, read_u64, Denoiser};
use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"RDDM";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    pub net: Denoiser,
    pub schedule: NoiseSchedule,
    pub stats: ColumnStats,
}

impl DiffusionModel {
    pub fn new(net: Denoiser, schedule: NoiseSchedule, stats: ColumnStats) -> Result<Self> {
        if net.steps() != schedule.steps() {
            return Err(Error::Config(format!(
                "network built for {} steps but schedule has {}",
                net.steps(),
                schedule.steps()
            )));
        }
        if stats.dim() != net.dim() {
            return Err(Error::Config(format!("stats width {} vs network width {}", stats.dim(), net.dim())));
        }
        Ok(Self { net, schedule, stats })
    }

    pub fn dim(&self) -> usize {
        self.net.dim()
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        self.net.write_to(w)?;
        w.write_all(&(self.schedule.steps() as u64).to_le_bytes())?;
        for b in self.schedule.betas() {
            w.write_all(&b.to_le_bytes())?;
        }
        for v in self.stats.mean.iter().chain(&self.stats.std) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| Error::Format(e.to_string()))?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format(format!("bad magic {magic:?}, expected \"RDDM\"")));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v).map_err(|e| Error::Format(e.to_string()))?;
        let version = u32::from_le_bytes(v);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let net = Denoiser::read_from(r)?;
        let steps = read_u64(r)? as usize;
        if steps != net.steps() {
            return Err(Error::Format(format!("schedule length {steps} != network steps {}", net.steps())));
        }
        let betas = (0..steps).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let schedule = NoiseSchedule::from_betas(betas).map_err(|e| Error::Format(e.to_string()))?;
        let d = net.dim();
        let mean = (0..d).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        let std = (0..d).map(|_| read_f64(r)).collect::<Result<Vec<_>>>()?;
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Format("non-positive column std".into()));
        }
        Self::new(net, schedule, ColumnStats { mean, std }).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut BufReader::new(f))
    }
}
