//! Binary policy checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MTAC-CKPT-v1"
//! u8 tag length, role tag bytes
//! u32 actor depth, u32 widths...
//! u32 critic depth, u32 widths...
//! u32 log_std length, f32 values...
//! f32 actor parameters, f32 critic parameters
//! u64 FNV-1a of everything above
//! ```
//!
//! Parameters are written in the network's own flat order: per layer the
//! weight matrix row-major, then the bias.

use std::fmt;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::hierarchy::{Expert, ExpertRegistry, NUM_EXPERTS};
use crate::numerics::{GaussianHead, Mlp};
use crate::ppo::PolicyNet;
use crate::terrain::TerrainFamily;

pub const MAGIC: &[u8; 12] = b"MTAC-CKPT-v1";
pub const CHECKPOINT_EXTENSION: &str = "ckpt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Expert(TerrainFamily),
    Gate,
    Baseline,
}

impl Role {
    pub fn tag(self) -> &'static str {
        match self {
            Role::Expert(TerrainFamily::Bumpy) => "expert-bumpy",
            Role::Expert(TerrainFamily::Stairs) => "expert-stairs",
            Role::Expert(TerrainFamily::Stepped) => "expert-stepped",
            Role::Expert(TerrainFamily::Flat) => "expert-flat",
            Role::Gate => "gate",
            Role::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gate" => Ok(Role::Gate),
            "baseline" => Ok(Role::Baseline),
            _ => s
                .strip_prefix("expert-")
                .and_then(|f| f.parse().ok())
                .map(Role::Expert)
                .ok_or_else(|| Error::Checkpoint(format!("unknown role tag `{s}`"))),
        }
    }
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode(policy: &PolicyNet, role: Role) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 4 * policy.param_count());
    out.extend_from_slice(MAGIC);
    let tag = role.tag().as_bytes();
    out.push(tag.len() as u8);
    out.extend_from_slice(tag);
    for net in [&policy.actor, &policy.critic] {
        put_u32(&mut out, net.dims().len());
        for &d in net.dims() {
            put_u32(&mut out, d);
        }
    }
    put_u32(&mut out, policy.head.dim());
    put_f32s(&mut out, policy.head.log_std());
    put_f32s(&mut out, policy.actor.params());
    put_f32s(&mut out, policy.critic.params());
    let sum = fnv64(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Checkpoint("payload ends early".into()))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()?;
        if n > 64 {
            return Err(Error::Checkpoint(format!("implausible network depth {n}")));
        }
        (0..n).map(|_| self.u32()).collect()
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(4).ok_or_else(|| Error::Checkpoint("size overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }
}

/// Parse a checkpoint. The checksum is verified before anything else is
/// read, so a damaged or truncated file never yields a policy.
pub fn decode(bytes: &[u8]) -> Result<(Role, PolicyNet)> {
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Checkpoint("missing MTAC-CKPT-v1 header".into()));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
    let actual = fnv64(payload);
    if stored != actual {
        return Err(Error::Checkpoint(format!(
            "checksum mismatch: stored {stored:016x}, computed {actual:016x}"
        )));
    }
    let mut r = Reader { bytes: payload, at: MAGIC.len() };
    let tag_len = r.take(1)?[0] as usize;
    let tag = std::str::from_utf8(r.take(tag_len)?)
        .map_err(|_| Error::Checkpoint("role tag is not UTF-8".into()))?;
    let role: Role = tag.parse()?;
    let actor_dims = r.dims()?;
    let critic_dims = r.dims()?;
    let std_len = r.u32()?;
    let log_std = r.f32s(std_len)?;
    let actor = Mlp::from_params(&actor_dims, r.f32s(Mlp::param_count(&actor_dims))?)
        .map_err(|e| Error::Checkpoint(format!("actor: {e}")))?;
    let critic = Mlp::from_params(&critic_dims, r.f32s(Mlp::param_count(&critic_dims))?)
        .map_err(|e| Error::Checkpoint(format!("critic: {e}")))?;
    if r.at != payload.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", payload.len() - r.at)));
    }
    if actor.output_dim() != std_len || critic.output_dim() != 1 || actor.input_dim() != critic.input_dim() {
        return Err(Error::Checkpoint("actor, critic and log_std shapes disagree".into()));
    }
    Ok((role, PolicyNet { actor, critic, head: GaussianHead::from_log_std(log_std) }))
}

pub fn save_checkpoint(policy: &PolicyNet, role: Role, path: &Path) -> Result<()> {
    std::fs::write(path, encode(policy, role)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Role, PolicyNet)> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes)
}

/// Load and insist on `role`.
pub fn load_role(path: &Path, role: Role) -> Result<PolicyNet> {
    let (found, policy) = load_checkpoint(path)?;
    if found != role {
        return Err(Error::RoleMismatch { expected: role.tag().into(), found: found.tag().into() });
    }
    Ok(policy)
}

/// Checkpoint files in `dir`, sorted by name.
pub fn checkpoint_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::Checkpoint(format!("cannot list {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == CHECKPOINT_EXTENSION))
        .collect();
    files.sort();
    Ok(files)
}

/// The bumpy, stairs and stepped experts found among the checkpoints of
/// `dir`, matched by role tag. Other roles are ignored.
pub fn load_registry(dir: &Path) -> Result<ExpertRegistry> {
    let mut slots: [Option<PolicyNet>; NUM_EXPERTS] = Default::default();
    for path in checkpoint_files(dir)? {
        let (role, policy) = load_checkpoint(&path)?;
        let Role::Expert(family) = role else { continue };
        let Some(k) = TerrainFamily::EXPERTS.iter().position(|&f| f == family) else { continue };
        if slots[k].is_some() {
            return Err(Error::Checkpoint(format!("more than one {role} checkpoint in {}", dir.display())));
        }
        slots[k] = Some(policy);
    }
    let [a, b, c] = slots;
    let missing = |k: usize| {
        Error::Checkpoint(format!("no {} checkpoint in {}", Role::Expert(TerrainFamily::EXPERTS[k]), dir.display()))
    };
    Ok(ExpertRegistry::new([
        Expert::Network(a.ok_or_else(|| missing(0))?),
        Expert::Network(b.ok_or_else(|| missing(1))?),
        Expert::Network(c.ok_or_else(|| missing(2))?),
    ]))
}
