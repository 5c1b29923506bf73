//! Single-file checkpoint archive.
//!
//! Layout: the magic `MMNCKPT\0`, a little-endian `u32` version, then a
//! sequence of entries `[u32 name_len][name][u64 payload_len][payload]`.
//! Entry `manifest` holds the model configuration as `key=value` lines,
//! `meta` holds optional free-form `key=value` lines (training progress),
//! and every other entry is a tensor `[u32 ndim][u64 dims..][f64 LE..]`
//! named by its hierarchical path: `param/<path>`, `bn/<path>/mean`,
//! `bn/<path>/var`, `optim/...`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mmn_autograd::BatchNormState;

use super::config::ModelConfig;
use super::network::MmnModel;
use crate::error::{MmnError, Result};
use crate::kv;

const MAGIC: &[u8; 8] = b"MMNCKPT\0";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub manifest: String,
    pub meta: Vec<(String, String)>,
    pub tensors: BTreeMap<String, TensorEntry>,
}

fn bad(msg: impl Into<String>) -> MmnError {
    MmnError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated archive"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn encode_tensor(t: &TensorEntry) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 8 * (t.shape.len() + t.data.len()));
    out.extend((t.shape.len() as u32).to_le_bytes());
    for &d in &t.shape {
        out.extend((d as u64).to_le_bytes());
    }
    for &v in &t.data {
        out.extend(v.to_le_bytes());
    }
    out
}

fn decode_tensor(name: &str, payload: &[u8]) -> Result<TensorEntry> {
    let mut r = Reader { buf: payload, pos: 0 };
    let ndim = r.u32()? as usize;
    let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    let bytes = r.take(n * 8).map_err(|_| bad(format!("{name}: payload shorter than shape {shape:?}")))?;
    if !r.done() {
        return Err(bad(format!("{name}: trailing bytes after tensor data")));
    }
    let data = bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(TensorEntry { shape, data })
}

impl Checkpoint {
    pub fn from_model(model: &MmnModel) -> Self {
        let mut ck = Checkpoint { manifest: kv::to_lines(&model.cfg), ..Default::default() };
        for p in model.store.iter() {
            ck.insert(format!("param/{}", p.name), p.shape.clone(), p.value.clone());
        }
        for b in &model.bn {
            let c = b.state.channels();
            ck.insert(format!("bn/{}/mean", b.name), vec![c], b.state.mean.clone());
            ck.insert(format!("bn/{}/var", b.name), vec![c], b.state.var.clone());
        }
        ck
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        self.tensors.insert(name.into(), TensorEntry { shape, data });
    }

    pub fn tensor(&self, name: &str) -> Result<&TensorEntry> {
        self.tensors.get(name).ok_or_else(|| bad(format!("missing entry {name}")))
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn config(&self) -> Result<ModelConfig> {
        let pairs = kv::parse_lines(&self.manifest)?;
        let (cfg, unknown) = kv::apply(&ModelConfig::default(), &pairs)?;
        if let Some((k, _)) = unknown.first() {
            return Err(bad(format!("unknown manifest key {k}")));
        }
        Ok(cfg)
    }

    /// Rebuilds the model and overwrites every parameter and running
    /// statistic with the stored values.
    pub fn to_model(&self) -> Result<MmnModel> {
        let mut model = MmnModel::new(self.config()?)?;
        for p in model.store.iter_mut() {
            let e = self.tensor(&format!("param/{}", p.name))?;
            if e.shape != p.shape {
                return Err(bad(format!("{}: stored shape {:?}, expected {:?}", p.name, e.shape, p.shape)));
            }
            p.value.clone_from(&e.data);
        }
        for b in model.bn.iter_mut() {
            let mean = self.tensor(&format!("bn/{}/mean", b.name))?;
            let var = self.tensor(&format!("bn/{}/var", b.name))?;
            if mean.data.len() != b.state.channels() || var.data.len() != b.state.channels() {
                return Err(bad(format!("{}: running statistics have the wrong width", b.name)));
            }
            b.state = BatchNormState::from_parts(mean.data.clone(), var.data.clone());
        }
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend(VERSION.to_le_bytes());
        let mut entry = |name: &str, payload: &[u8]| {
            out.extend((name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend((payload.len() as u64).to_le_bytes());
            out.extend_from_slice(payload);
        };
        entry("manifest", self.manifest.as_bytes());
        if !self.meta.is_empty() {
            let text: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
            entry("meta", text.as_bytes());
        }
        for (name, t) in &self.tensors {
            entry(name, &encode_tensor(t));
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8).map_err(|_| bad("not a checkpoint"))? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let mut ck = Checkpoint::default();
        let mut has_manifest = false;
        while !r.done() {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?).map_err(|_| bad("entry name is not UTF-8"))?.to_string();
            let len = r.u64()? as usize;
            let payload = r.take(len)?;
            let text = || std::str::from_utf8(payload).map(str::to_string).map_err(|_| bad(format!("{name}: not UTF-8")));
            match name.as_str() {
                "manifest" => {
                    ck.manifest = text()?;
                    has_manifest = true;
                }
                "meta" => ck.meta = kv::parse_lines(&text()?)?,
                _ => {
                    let t = decode_tensor(&name, payload)?;
                    ck.tensors.insert(name, t);
                }
            }
        }
        if !has_manifest {
            return Err(bad("archive has no manifest"));
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| MmnError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| MmnError::io(path, e))?)
    }
}
