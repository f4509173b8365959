//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "AOML" | u32 version (1) | u8 role (0 MLM, 1 NER, 2 REL)
//! u32 config length | config JSON (UTF-8)
//! repeated until end of file:
//!   u32 name length | name | u32 rows | u32 cols | rows*cols f32
//! ```

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::write_file;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::neural::{Matrix, Module};

pub const MAGIC: &[u8; 4] = b"AOML";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Mlm,
    Ner,
    Rel,
}

impl Role {
    pub fn tag(self) -> u8 {
        match self {
            Role::Mlm => 0,
            Role::Ner => 1,
            Role::Rel => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Role> {
        match tag {
            0 => Some(Role::Mlm),
            1 => Some(Role::Ner),
            2 => Some(Role::Rel),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Mlm => "MLM",
            Role::Ner => "NER",
            Role::Rel => "REL",
        })
    }
}

/// Configuration embedded in every checkpoint this crate writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub encoder: EncoderConfig,
    /// [`Vocabulary::hash`](crate::corpus::Vocabulary::hash) as 16 hex digits.
    pub vocab_hash: String,
    /// Width of the hidden layer of a task head, when it has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_hidden: Option<usize>,
}

impl ModelHeader {
    pub fn new(encoder: EncoderConfig, vocab_hash: u64) -> Self {
        ModelHeader {
            encoder,
            vocab_hash: format!("{vocab_hash:016x}"),
            head_hidden: None,
        }
    }

    pub fn vocab_hash(&self) -> Result<u64> {
        u64::from_str_radix(&self.vocab_hash, 16)
            .map_err(|_| Error::Format(format!("bad vocabulary hash `{}`", self.vocab_hash)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub role: Role,
    /// Raw config JSON, kept verbatim so re-saving is byte-identical.
    pub config: String,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    /// Snapshot of every parameter of `module`.
    pub fn capture<C: Serialize>(role: Role, config: &C, module: &impl Module) -> Result<Self> {
        Ok(Checkpoint {
            role,
            config: serde_json::to_string(config)?,
            tensors: module
                .parameters()
                .into_iter()
                .map(|p| NamedTensor {
                    name: p.name.clone(),
                    value: p.value.clone(),
                })
                .collect(),
        })
    }

    pub fn config<C: DeserializeOwned>(&self) -> Result<C> {
        serde_json::from_str(&self.config)
            .map_err(|e| Error::Format(format!("bad checkpoint config: {e}")))
    }

    pub fn expect_role(&self, role: Role) -> Result<()> {
        if self.role != role {
            return Err(Error::RoleMismatch {
                expected: role.to_string(),
                found: self.role.to_string(),
            });
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.value)
    }

    /// Overwrites the parameters of `module` whose names start with `prefix`
    /// (all of them for `""`). Every such parameter must be present with the
    /// same shape; nothing is modified unless all are.
    pub fn restore(&self, module: &mut impl Module, prefix: &str) -> Result<()> {
        let mut staged = Vec::new();
        for p in module.parameters() {
            if !p.name.starts_with(prefix) {
                continue;
            }
            let value = self
                .tensor(&p.name)
                .ok_or_else(|| Error::Format(format!("missing tensor `{}`", p.name)))?;
            if value.shape() != p.value.shape() {
                return Err(Error::TensorShapeMismatch {
                    name: p.name.clone(),
                    expected: p.value.shape(),
                    found: value.shape(),
                });
            }
            staged.push(value.clone());
        }
        let targets = module
            .parameters_mut()
            .into_iter()
            .filter(|p| p.name.starts_with(prefix));
        for (p, value) in targets.zip(staged) {
            p.value = value;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.role.tag());
        put_bytes(&mut out, self.config.as_bytes());
        for t in &self.tensors {
            put_bytes(&mut out, t.name.as_bytes());
            out.extend_from_slice(&(t.value.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(t.value.cols() as u32).to_le_bytes());
            for v in t.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let tag = r.take(1, "role")?[0];
        let role = Role::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown role tag {tag}")))?;
        let config = r.string("config")?;
        let mut tensors = Vec::new();
        while r.pos < bytes.len() {
            let name = r.string("tensor name")?;
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            let count = rows
                .checked_mul(cols)
                .filter(|c| c.checked_mul(4).is_some())
                .ok_or_else(|| Error::Format(format!("tensor `{name}` too large")))?;
            let raw = r.take(count * 4, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor {
                name,
                value: Matrix::from_vec(rows, cols, data)?,
            });
        }
        Ok(Checkpoint {
            role,
            config,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Format(message) => Error::Format(format!("{}: {message}", path.display())),
            other => other,
        })
    }
}

fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated while reading {what}")))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }
}
