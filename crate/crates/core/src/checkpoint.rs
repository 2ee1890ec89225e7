//! Bit-exact binary tensor container and model checkpoint I/O.
//!
//! Layout: magic `GBRT`, format version (u32 LE), header length (u64 LE),
//! UTF-8 header, raw payload. The header carries `# key value` metadata
//! lines (model configuration, vocabulary hash) followed by one line per
//! tensor: `name dtype shape0,shape1,... byte_offset`. The payload holds
//! 32-bit little-endian reals, row-major, in header order at contiguous
//! ascending offsets. `read ∘ write` is byte-identical.

use std::fs;
use std::path::Path;

use crate::autograd::ParamSet;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::Tensor;
use crate::tokenizer::Vocab;

pub const MAGIC: &[u8; 4] = b"GBRT";
pub const FORMAT_VERSION: u32 = 1;

/// Generic named-tensor container with ordered metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Container {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }
}

/// Serializes a container to its canonical byte form.
pub fn container_to_bytes(container: &Container) -> Result<Vec<u8>> {
    let mut header = String::new();
    for (key, value) in &container.meta {
        if key.contains(char::is_whitespace) || value.contains('\n') {
            return Err(Error::InvalidArgument {
                name: "container meta",
                msg: format!("key/value {key:?} contains whitespace"),
            });
        }
        header.push_str(&format!("# {key} {value}\n"));
    }
    let mut offset = 0u64;
    for (name, tensor) in &container.tensors {
        if name.contains(char::is_whitespace) || name.is_empty() {
            return Err(Error::InvalidArgument {
                name: "tensor name",
                msg: format!("{name:?} is empty or contains whitespace"),
            });
        }
        if tensor.shape().is_empty() {
            return Err(Error::InvalidArgument {
                name: "tensor shape",
                msg: format!("{name} is zero-dimensional"),
            });
        }
        if tensor.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "tensor data",
                msg: format!("{name} contains non-finite values"),
            });
        }
        let shape_csv = tensor
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        header.push_str(&format!("{name} f32 {shape_csv} {offset}\n"));
        offset += 4 * tensor.len() as u64;
    }
    let header_bytes = header.as_bytes();
    let mut out = Vec::with_capacity(16 + header_bytes.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(header_bytes);
    for (_, tensor) in &container.tensors {
        for &v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses the canonical byte form back into a container.
pub fn container_from_bytes(bytes: &[u8]) -> Result<Container> {
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion { found: version });
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(Error::TruncatedPayload {
            expected: header_len as u64,
            found: bytes.len().saturating_sub(16) as u64,
        });
    }
    let header = std::str::from_utf8(&bytes[16..16 + header_len]).map_err(|_| {
        Error::HeaderParse {
            line: 0,
            msg: "header is not valid UTF-8".into(),
        }
    })?;
    let payload = &bytes[16 + header_len..];

    let mut meta = Vec::new();
    let mut specs: Vec<(String, Vec<usize>, u64)> = Vec::new();
    for (no, line) in header.lines().enumerate() {
        let line_no = no + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) = rest.split_once(' ').ok_or_else(|| Error::HeaderParse {
                line: line_no,
                msg: "metadata line needs `# key value`".into(),
            })?;
            meta.push((key.to_string(), value.to_string()));
            continue;
        }
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 4 {
            return Err(Error::HeaderParse {
                line: line_no,
                msg: format!("expected `name dtype shape offset`, got {} fields", fields.len()),
            });
        }
        if fields[1] != "f32" {
            return Err(Error::UnsupportedDtype {
                found: fields[1].to_string(),
            });
        }
        let shape: Vec<usize> = fields[2]
            .split(',')
            .map(|d| {
                d.parse::<usize>().map_err(|_| Error::HeaderParse {
                    line: line_no,
                    msg: format!("bad extent {d:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::HeaderParse {
                line: line_no,
                msg: "extents must be positive".into(),
            });
        }
        let offset: u64 = fields[3].parse().map_err(|_| Error::HeaderParse {
            line: line_no,
            msg: format!("bad offset {:?}", fields[3]),
        })?;
        specs.push((fields[0].to_string(), shape, offset));
    }

    let mut expected_offset = 0u64;
    let mut tensors = Vec::with_capacity(specs.len());
    for (name, shape, offset) in specs {
        if offset != expected_offset {
            return Err(Error::OverlappingOffsets { name });
        }
        let n: usize = shape.iter().product();
        let n_bytes = 4 * n as u64;
        let start = offset as usize;
        let end = start + n_bytes as usize;
        if end > payload.len() {
            return Err(Error::TruncatedPayload {
                expected: offset + n_bytes,
                found: payload.len() as u64,
            });
        }
        let data: Vec<f32> = payload[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((name, Tensor::new(shape, data)?));
        expected_offset = offset + n_bytes;
    }
    if payload.len() as u64 != expected_offset {
        return Err(Error::TruncatedPayload {
            expected: expected_offset,
            found: payload.len() as u64,
        });
    }
    Ok(Container { meta, tensors })
}

pub fn write_container(path: &Path, container: &Container) -> Result<()> {
    let bytes = container_to_bytes(container)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_container(path: &Path) -> Result<Container> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    container_from_bytes(&bytes)
}

fn config_meta(config: &ModelConfig) -> Vec<(String, String)> {
    vec![
        ("kind".into(), "model".into()),
        ("n_layers".into(), config.n_layers.to_string()),
        ("n_heads".into(), config.n_heads.to_string()),
        ("d_model".into(), config.d_model.to_string()),
        ("d_ff".into(), config.d_ff.to_string()),
        ("max_len".into(), config.max_len.to_string()),
        ("vocab_size".into(), config.vocab_size.to_string()),
        ("head_h1".into(), config.head_h1.to_string()),
        ("head_h2".into(), config.head_h2.to_string()),
        ("dropout".into(), config.dropout.to_string()),
        (
            "vocab_fnv1a".into(),
            format!("{:016x}", Vocab::new().fingerprint()),
        ),
    ]
}

fn config_from_meta(container: &Container) -> Result<ModelConfig> {
    let get = |key: &str| -> Result<&str> {
        container.meta_value(key).ok_or_else(|| Error::HeaderParse {
            line: 0,
            msg: format!("missing metadata key {key}"),
        })
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?.parse().map_err(|_| Error::HeaderParse {
            line: 0,
            msg: format!("bad value for {key}"),
        })
    };
    let hash = get("vocab_fnv1a")?;
    if hash != format!("{:016x}", Vocab::new().fingerprint()) {
        return Err(Error::VocabHashMismatch);
    }
    Ok(ModelConfig {
        n_layers: parse_usize("n_layers")?,
        n_heads: parse_usize("n_heads")?,
        d_model: parse_usize("d_model")?,
        d_ff: parse_usize("d_ff")?,
        max_len: parse_usize("max_len")?,
        vocab_size: parse_usize("vocab_size")?,
        head_h1: parse_usize("head_h1")?,
        head_h2: parse_usize("head_h2")?,
        dropout: get("dropout")?.parse().map_err(|_| Error::HeaderParse {
            line: 0,
            msg: "bad value for dropout".into(),
        })?,
    })
}

/// Serializes a trained model (config + all parameters, canonical order).
pub fn write_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    let container = Container {
        meta: config_meta(model.config()),
        tensors: model
            .params
            .iter()
            .map(|(name, t)| (name.to_string(), t.clone()))
            .collect(),
    };
    write_container(path, &container)
}

/// Reads a checkpoint back; every tensor is reproduced bit-exactly and the
/// configuration and vocabulary hash are verified.
pub fn read_checkpoint(path: &Path) -> Result<Model<f32>> {
    let container = read_container(path)?;
    if container.meta_value("kind") != Some("model") {
        return Err(Error::HeaderParse {
            line: 0,
            msg: "container does not hold a model checkpoint".into(),
        });
    }
    let config = config_from_meta(&container)?;
    let mut params = ParamSet::new();
    for (name, tensor) in container.tensors {
        params.add(name, tensor);
    }
    Model::from_parts(&config, params)
}
