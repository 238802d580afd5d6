//! NKSN network checkpoints.
//!
//! Layout (little-endian): magic `NKSN`, version `u32`, topology (levels
//! `u32`, one `u32` per level width, kernel `u32`, convs per level `u32`,
//! activation tag `u32`), parameter count `u64`, then `f64` parameters.

use std::io::Write;
use std::path::Path;

use super::layers::Activation;
use super::network::{ScoreNetwork, Topology};
use crate::error::{Error, Result};
use crate::io::Cursor;

pub const MAGIC: &[u8; 4] = b"NKSN";
pub const VERSION: u32 = 1;

pub fn encode_network(net: &ScoreNetwork) -> Vec<u8> {
    let t = net.topology();
    let mut out = Vec::with_capacity(32 + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.channels.len() as u32).to_le_bytes());
    for &c in &t.channels {
        out.extend_from_slice(&(c as u32).to_le_bytes());
    }
    out.extend_from_slice(&(t.kernel as u32).to_le_bytes());
    out.extend_from_slice(&(t.convs_per_level as u32).to_le_bytes());
    out.extend_from_slice(&t.activation.tag().to_le_bytes());
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_network(bytes: &[u8]) -> Result<ScoreNetwork> {
    let mut cur = Cursor::new(bytes, "NKSN");
    cur.expect_magic(MAGIC)?;
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("NKSN version {version} is not supported (expected {VERSION})")));
    }
    let levels = cur.u32()? as usize;
    if levels == 0 || levels > 8 {
        return Err(Error::Format(format!("NKSN level count {levels} out of range")));
    }
    let channels = (0..levels).map(|_| cur.u32().map(|c| c as usize)).collect::<Result<Vec<_>>>()?;
    let kernel = cur.u32()? as usize;
    let convs_per_level = cur.u32()? as usize;
    let tag = cur.u32()?;
    let activation =
        Activation::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown activation tag {tag}")))?;
    if channels.iter().any(|&c| c == 0 || c > 4096) || kernel > 31 || convs_per_level > 16 {
        return Err(Error::Format("NKSN topology out of range".into()));
    }
    let topology = Topology { channels, kernel, convs_per_level, activation };
    topology.validate().map_err(|e| Error::Format(e.to_string()))?;
    let count = cur.u64()?;
    let expected = topology.param_count() as u64;
    if count != expected {
        return Err(Error::Format(format!("parameter count {count} does not match topology ({expected})")));
    }
    let params = cur.f64_vec(count as usize)?;
    cur.finish()?;
    ScoreNetwork::from_parts(topology, params).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_network(net: &ScoreNetwork, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_network(net))?;
    f.sync_all()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<ScoreNetwork> {
    decode_network(&std::fs::read(path)?)
}
