//! Single-file checkpoints: named tensors in safetensors layout, with the
//! config snapshot, stage, iteration and RNG state in the header metadata.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use tch::{nn, Device, Kind, Tensor};

use crate::config::{Config, ModelConfig, Stage};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Position of a ChaCha stream, enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// Decimal string: JSON numbers cannot hold a u128.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        let pos = self.word_pos.parse::<u128>().map_err(|e| Error::InvalidInput(format!("rng word_pos: {e}")))?;
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// What a checkpoint file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    /// Generator, both discriminators and their optimizers.
    Gan,
    /// Six-class evaluation classifier.
    Classifier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub kind: CheckpointKind,
    pub config: Config,
    pub stage: Stage,
    pub iteration: u64,
    pub rng: RngState,
}

/// Decoded checkpoint: metadata plus all tensors by name.
#[derive(Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: HashMap<String, Tensor>,
}

fn dtype_of(kind: Kind) -> Result<Dtype> {
    Ok(match kind {
        Kind::Float => Dtype::F32,
        Kind::Double => Dtype::F64,
        Kind::Int64 => Dtype::I64,
        Kind::Uint8 => Dtype::U8,
        other => return Err(Error::InvalidInput(format!("cannot store tensors of kind {other:?}"))),
    })
}

fn kind_of(dtype: Dtype) -> Result<Kind> {
    Ok(match dtype {
        Dtype::F32 => Kind::Float,
        Dtype::F64 => Kind::Double,
        Dtype::I64 => Kind::Int64,
        Dtype::U8 => Kind::Uint8,
        other => return Err(Error::InvalidInput(format!("unsupported stored dtype {other:?}"))),
    })
}

/// All variables of `vs` under `{prefix}.{name}`.
pub fn named_variables(vs: &nn::VarStore, prefix: &str) -> Vec<(String, Tensor)> {
    vs.variables().into_iter().map(|(k, v)| (format!("{prefix}.{k}"), v)).collect()
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMeta, tensors: &[(String, Tensor)]) -> Result<()> {
    let mut raw: BTreeMap<String, (Dtype, Vec<usize>, Vec<u8>)> = BTreeMap::new();
    for (name, t) in tensors {
        let t = t.detach().to_device(Device::Cpu).contiguous();
        let dtype = dtype_of(t.kind())?;
        let numel = t.numel();
        let mut bytes = vec![0u8; numel * t.kind().elt_size_in_bytes()];
        t.f_copy_data_u8(&mut bytes, numel)?;
        let shape = t.size().iter().map(|&d| d as usize).collect();
        if raw.insert(name.clone(), (dtype, shape, bytes)).is_some() {
            return Err(Error::InvalidInput(format!("duplicate tensor name {name}")));
        }
    }
    let views = raw
        .iter()
        .map(|(name, (dtype, shape, bytes))| {
            TensorView::new(*dtype, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(|e| Error::format(path, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut info = HashMap::new();
    info.insert("meta".to_string(), serde_json::to_string(meta)?);
    let buf = safetensors::serialize(views, Some(info)).map_err(|e| Error::format(path, e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    // Write-then-rename so an interrupted save never leaves a truncated checkpoint.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, buf).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, header) = SafeTensors::read_metadata(&buf).map_err(|e| Error::format(path, e.to_string()))?;
    let meta_json = header
        .metadata()
        .as_ref()
        .and_then(|m| m.get("meta"))
        .ok_or_else(|| Error::format(path, "not a checkpoint: header has no metadata"))?;
    let meta: CheckpointMeta = serde_json::from_str(meta_json).map_err(|e| Error::format(path, e.to_string()))?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint format {}", meta.format_version)));
    }
    let st = SafeTensors::deserialize(&buf).map_err(|e| Error::format(path, e.to_string()))?;
    let mut tensors = HashMap::new();
    for (name, view) in st.tensors() {
        let shape: Vec<i64> = view.shape().iter().map(|&d| d as i64).collect();
        let t = Tensor::f_from_data_size(view.data(), &shape, kind_of(view.dtype())?)?;
        tensors.insert(name, t);
    }
    Ok(Checkpoint { meta, tensors })
}

/// Fails with the differing keys when the stored topology is not `expected`.
pub fn check_topology(stored: &ModelConfig, expected: &ModelConfig) -> Result<()> {
    let diff = stored.diff(expected);
    if diff.is_empty() {
        Ok(())
    } else {
        Err(Error::TopologyMismatch(diff))
    }
}

/// Copies `{prefix}.{name}` tensors into every variable of `vs`.
pub fn load_variables(vs: &mut nn::VarStore, tensors: &HashMap<String, Tensor>, prefix: &str) -> Result<()> {
    let _guard = tch::no_grad_guard();
    let mut bad = Vec::new();
    for (name, mut var) in vs.variables() {
        let key = format!("{prefix}.{name}");
        match tensors.get(&key) {
            Some(t) if t.size() == var.size() => var.copy_(t),
            _ => bad.push(key),
        }
    }
    bad.sort();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::TopologyMismatch(bad))
    }
}

#[cfg(test)]
mod tests {
    use rand::RngCore;

    use super::*;
    use crate::discriminators::FrameCritic;

    fn meta() -> CheckpointMeta {
        let mut config = Config::default();
        config.model = ModelConfig::tiny();
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            kind: CheckpointKind::Gan,
            config,
            stage: Stage::Init,
            iteration: 42,
            rng: RngState::capture(&ChaCha8Rng::seed_from_u64(1)),
        }
    }

    #[test]
    fn round_trip_is_lossless_and_payload_stable() {
        let dir = tempfile::tempdir().unwrap();
        tch::manual_seed(0);
        let critic = FrameCritic::new(&ModelConfig::tiny(), Device::Cpu).unwrap();
        let tensors = named_variables(&critic.vs, "critic");
        let (a, b) = (dir.path().join("a.safetensors"), dir.path().join("b.safetensors"));
        save_checkpoint(&a, &meta(), &tensors).unwrap();
        let ck = read_checkpoint(&a).unwrap();
        assert_eq!(ck.meta, meta());

        let mut other = FrameCritic::new(&ModelConfig::tiny(), Device::Cpu).unwrap();
        load_variables(&mut other.vs, &ck.tensors, "critic").unwrap();
        for (name, t) in critic.vs.variables() {
            assert!(t.equal(&other.vs.variables()[&name]), "{name}");
        }
        save_checkpoint(&b, &ck.meta, &named_variables(&other.vs, "critic")).unwrap();
        let payload = |p: &Path| {
            let buf = std::fs::read(p).unwrap();
            let n = u64::from_le_bytes(buf[..8].try_into().unwrap()) as usize;
            buf[8 + n..].to_vec()
        };
        assert_eq!(payload(&a), payload(&b));
    }

    #[test]
    fn changed_width_is_a_topology_error() {
        let mut wide = ModelConfig::tiny();
        wide.critic_fc = 32;
        let err = check_topology(&ModelConfig::tiny(), &wide).unwrap_err();
        assert!(matches!(err, Error::TopologyMismatch(ref k) if k == &vec!["critic_fc".to_string()]));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.safetensors");
        let small = FrameCritic::new(&ModelConfig::tiny(), Device::Cpu).unwrap();
        save_checkpoint(&path, &meta(), &named_variables(&small.vs, "critic")).unwrap();
        let mut big = FrameCritic::new(&wide, Device::Cpu).unwrap();
        let ck = read_checkpoint(&path).unwrap();
        assert!(matches!(load_variables(&mut big.vs, &ck.tensors, "critic"), Err(Error::TopologyMismatch(_))));
    }

    #[test]
    fn rng_state_resumes_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..13 {
            rng.next_u32();
        }
        let state = RngState::capture(&rng);
        let json = serde_json::to_string(&state).unwrap();
        let mut back = serde_json::from_str::<RngState>(&json).unwrap().restore().unwrap();
        for _ in 0..50 {
            assert_eq!(rng.next_u64(), back.next_u64());
        }
    }
}
