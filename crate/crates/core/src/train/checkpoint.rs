use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamState, Result, TrainConfig, TrainError, TrainProgress};
use crate::codec::Codec;
use crate::model::{ModelConfig, Variant};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HNMTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to decode with a model or resume its training.
///
/// On disk: magic, little-endian `u32` version, `u64` header length, a
/// JSON header, then every tensor as raw little-endian `f64` in header
/// order. Values round-trip bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub codec: Option<Codec>,
    pub params: ParamStore,
    pub optimizer: Option<AdamState>,
    pub train_config: Option<TrainConfig>,
    pub progress: Option<TrainProgress>,
    pub best_params: Option<ParamStore>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Group {
    Param,
    AdamM,
    AdamV,
    Best,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    group: Group,
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    codec: Option<Codec>,
    train_config: Option<TrainConfig>,
    progress: Option<TrainProgress>,
    adam_steps: Option<u64>,
    tensors: Vec<Entry>,
}

fn corrupt(m: impl Into<String>) -> TrainError {
    TrainError::Corrupt(m.into())
}

impl Checkpoint {
    /// A checkpoint holding only a model and its codec.
    pub fn for_model(model: &crate::model::Model, codec: Option<Codec>) -> Self {
        Checkpoint {
            model: model.config().clone(),
            codec,
            params: model.params().clone(),
            optimizer: None,
            train_config: None,
            progress: None,
            best_params: None,
        }
    }

    pub fn expect_variant(&self, variant: Variant) -> Result<()> {
        if self.model.variant != variant {
            return Err(TrainError::Config(format!(
                "checkpoint holds a {} model, expected {variant}",
                self.model.variant
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut payload: Vec<&[f64]> = Vec::new();
        for (_, name, t) in self.params.iter() {
            tensors.push(Entry {
                group: Group::Param,
                name: name.to_string(),
                shape: t.shape().to_vec(),
            });
            payload.push(t.data());
        }
        if let Some(adam) = &self.optimizer {
            for (group, moments) in [(Group::AdamM, &adam.m), (Group::AdamV, &adam.v)] {
                for ((_, name, t), m) in self.params.iter().zip(moments) {
                    tensors.push(Entry {
                        group,
                        name: name.to_string(),
                        shape: t.shape().to_vec(),
                    });
                    payload.push(m);
                }
            }
        }
        if let Some(best) = &self.best_params {
            for (_, name, t) in best.iter() {
                tensors.push(Entry {
                    group: Group::Best,
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                });
                payload.push(t.data());
            }
        }
        let header = Header {
            model: self.model.clone(),
            codec: self.codec.clone(),
            train_config: self.train_config.clone(),
            progress: self.progress.clone(),
            adam_steps: self.optimizer.as_ref().map(|a| a.t),
            tensors,
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let floats: usize = payload.iter().map(|p| p.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * floats);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in payload {
            for v in p {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(corrupt("missing checkpoint magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(corrupt("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(format!("header: {e}")))?;
        let mut data = &body[hlen..];
        let mut params = ParamStore::new();
        let mut best = ParamStore::new();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for e in &header.tensors {
            let n: usize = e.shape.iter().product();
            if data.len() < 8 * n {
                return Err(corrupt(format!("payload truncated at tensor {}", e.name)));
            }
            let values: Vec<f64> = data[..8 * n]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            data = &data[8 * n..];
            match e.group {
                Group::Param | Group::Best => {
                    let t = Tensor::new(e.shape.clone(), values)
                        .map_err(|err| corrupt(err.to_string()))?;
                    let store = if e.group == Group::Param {
                        &mut params
                    } else {
                        &mut best
                    };
                    if store.id(&e.name).is_some() {
                        return Err(corrupt(format!("duplicate tensor {}", e.name)));
                    }
                    store.insert(e.name.clone(), t);
                }
                Group::AdamM => m.push(values),
                Group::AdamV => v.push(values),
            }
        }
        if !data.is_empty() {
            return Err(corrupt(format!("{} trailing bytes", data.len())));
        }
        let optimizer = match header.adam_steps {
            Some(t) if m.len() == params.len() && v.len() == params.len() => {
                Some(AdamState { m, v, t })
            }
            Some(_) => return Err(corrupt("optimizer moments do not match parameters")),
            None => None,
        };
        Ok(Checkpoint {
            model: header.model,
            codec: header.codec,
            params,
            optimizer,
            train_config: header.train_config,
            progress: header.progress,
            best_params: (!best.is_empty()).then_some(best),
        })
    }

    /// Writes atomically through a temporary file in the same directory.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// The model described by this checkpoint.
    pub fn into_model(self) -> Result<(crate::model::Model, Option<Codec>)> {
        Ok((
            crate::model::Model::from_params(self.model, self.params)?,
            self.codec,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    fn sample() -> Checkpoint {
        let mut c = ModelConfig::defaults(Variant::Hierarchical, 6, 8).scaled(3, 4, 3);
        c.init_scale = 0.3;
        let m = Model::new(c).unwrap();
        let mut adam = AdamState::new(m.params());
        adam.t = 7;
        adam.m[0][0] = 1.0 / 3.0;
        adam.v[1][0] = std::f64::consts::PI;
        Checkpoint {
            optimizer: Some(adam),
            train_config: Some(TrainConfig::default()),
            best_params: Some(m.params().clone()),
            ..Checkpoint::for_model(&m, None)
        }
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let c = sample();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        for ((_, _, a), (_, _, b)) in c.params.iter().zip(back.params.iter()) {
            assert!(a
                .data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_bad_files() {
        let bytes = sample().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(b"nope"),
            Err(TrainError::Corrupt(_))
        ));
        let mut v = bytes.clone();
        v[8] = 9;
        assert!(matches!(
            Checkpoint::from_bytes(&v),
            Err(TrainError::Version { found: 9, .. })
        ));
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(TrainError::Corrupt(_))
        ));
        let mut v = bytes.clone();
        v.push(0);
        assert!(matches!(
            Checkpoint::from_bytes(&v),
            Err(TrainError::Corrupt(_))
        ));
    }

    #[test]
    fn variant_check() {
        let c = sample();
        assert!(c.expect_variant(Variant::Hierarchical).is_ok());
        assert!(matches!(
            c.expect_variant(Variant::Subword),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }
}
