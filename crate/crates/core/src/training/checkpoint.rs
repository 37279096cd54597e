//! Binary checkpoint file.
//!
//! Layout: magic `PRCK`, u32 version, u32 length + UTF-8 config text
//! (the run config plus a `checkpoint.step` line), then records until EOF:
//! u32 name length, name, u8 dtype, u8 rank, u32 dims, little-endian values.
//! Optimizer moments are stored as f64 records `optim.m.<param>` and
//! `optim.v.<param>`.

use std::fs;
use std::path::Path;

use prores_tensor::{DType, Element, Tensor};

use super::config::{parse_pairs, TrainConfig};
use crate::data::write_atomic;
use crate::model::{Model, ParamSet};
use crate::optim::OptimState;
use crate::Error;

const MAGIC: &[u8; 4] = b"PRCK";
const VERSION: u32 = 1;
const STEP_KEY: &str = "checkpoint.step";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    /// Completed updates; the next update uses the residual scales of this step.
    pub step: u64,
    pub config: TrainConfig,
    pub params: ParamSet<T>,
    pub optim: Option<OptimState>,
}

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        reason: reason.into(),
    }
}

fn push_record<U: Element>(out: &mut Vec<u8>, name: &str, shape: &[usize], values: &[U]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(U::DTYPE.code());
    out.push(shape.len() as u8);
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    U::write_le(values, out);
}

struct Record {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
    raw_dtype: DType,
    raw: Vec<u8>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, Error> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, Error> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn record(&mut self) -> Result<Record, Error> {
        let n = self.u32()? as usize;
        let name = String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("record name is not UTF-8"))?;
        let dtype = DType::from_code(self.u8()?).ok_or_else(|| bad(format!("unknown dtype in `{name}`")))?;
        let rank = self.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(self.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = self.take(numel * dtype.size_of())?.to_vec();
        let values = match dtype {
            DType::F32 => f32::read_le(&raw).into_iter().map(f64::from).collect(),
            DType::F64 => f64::read_le(&raw),
        };
        Ok(Record {
            name,
            shape,
            values,
            raw_dtype: dtype,
            raw,
        })
    }
}

fn to_tensor<T: Element>(r: &Record) -> Result<Tensor<T>, Error> {
    let data = if r.raw_dtype == T::DTYPE {
        T::read_le(&r.raw)
    } else {
        r.values.iter().map(|&v| T::cast_from(v)).collect()
    };
    Ok(Tensor::new(r.shape.clone(), data)?)
}

impl<T: Element> Checkpoint<T> {
    pub fn model(&self) -> Result<Model<T>, Error> {
        Model::from_params(self.config.model.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let text = format!("{}{STEP_KEY} = {}\n", self.config.to_text(), self.step);
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        for e in self.params.iter() {
            push_record(&mut out, &e.name, e.tensor.shape(), e.tensor.data());
        }
        if let Some(s) = &self.optim {
            for (i, e) in self.params.iter().enumerate() {
                push_record(&mut out, &format!("optim.m.{}", e.name), e.tensor.shape(), &s.m[i]);
                push_record(&mut out, &format!("optim.v.{}", e.name), e.tensor.shape(), &s.v[i]);
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, Error> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(n)?).map_err(|_| bad("config is not UTF-8"))?;
        let step_line = text
            .lines()
            .find_map(|l| l.trim().strip_prefix(STEP_KEY))
            .ok_or_else(|| bad("missing checkpoint.step"))?;
        let step: u64 = step_line
            .trim_start_matches([' ', '='])
            .trim()
            .parse()
            .map_err(|_| bad("bad checkpoint.step"))?;
        let config_text: String = text
            .lines()
            .filter(|l| !l.trim().starts_with(STEP_KEY))
            .map(|l| format!("{l}\n"))
            .collect();
        let config = TrainConfig::from_pairs(&parse_pairs(&config_text)?)?;

        let mut records = Vec::new();
        while r.pos < buf.len() {
            records.push(r.record()?);
        }
        let mut params = ParamSet::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (name, shape, slot) in config.model.param_layout() {
            let rec = records
                .iter()
                .find(|r| r.name == name)
                .ok_or_else(|| bad(format!("missing tensor `{name}`")))?;
            if rec.shape != shape {
                return Err(bad(format!("tensor `{name}` has shape {:?}, expected {shape:?}", rec.shape)));
            }
            params.insert(name.clone(), slot.into(), to_tensor(rec)?)?;
            for (prefix, dst) in [("optim.m.", &mut m), ("optim.v.", &mut v)] {
                if let Some(o) = records.iter().find(|r| r.name == format!("{prefix}{name}")) {
                    if o.shape != shape {
                        return Err(bad(format!("moment `{}` has the wrong shape", o.name)));
                    }
                    dst.push(o.values.clone());
                }
            }
        }
        let optim = match (m.len(), v.len()) {
            (0, 0) => None,
            (a, b) if a == params.len() && b == params.len() => Some(OptimState { step, m, v }),
            _ => return Err(bad("incomplete optimizer state")),
        };
        Ok(Self {
            step,
            config,
            params,
            optim,
        })
    }

    /// Atomic write: a crash never leaves a truncated checkpoint in place.
    pub fn save(&self, path: &Path) -> Result<(), Error> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let buf = fs::read(path).map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        Self::from_bytes(&buf)
    }
}

/// File name for the checkpoint after `step` updates.
pub fn checkpoint_name(step: u64) -> String {
    format!("step-{step:08}.prck")
}

/// Reads the dtype a checkpoint was written with, from its first tensor.
pub fn checkpoint_dtype(path: &Path) -> Result<DType, Error> {
    let buf = fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    r.u32()?;
    let n = r.u32()? as usize;
    r.take(n)?;
    Ok(r.record()?.raw_dtype)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AlphaMode;

    fn small() -> TrainConfig {
        TrainConfig::parse(
            "model.layers = 2\nmodel.d_model = 16\nmodel.n_heads = 2\nmodel.seq_len = 8\n\
             schedule.family = linear\nschedule.T = 5\noptim.total_steps = 20\n",
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = small();
        let model = Model::<f32>::init(cfg.model.clone()).unwrap();
        let mut st = OptimState::new(&model.params);
        st.m[0][3] = 0.25;
        st.v[1][0] = 1e-9;
        st.step = 7;
        let ck = Checkpoint {
            step: 7,
            config: cfg,
            params: model.params.clone(),
            optim: Some(st),
        };
        let back = Checkpoint::<f32>::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let ids: Vec<usize> = (0..16).map(|i| i * 13 % 257).collect();
        let a = model.logits(&ids, 2, AlphaMode::Step(7)).unwrap();
        let b = back.model().unwrap().logits(&ids, 2, AlphaMode::Step(7)).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn file_layout_and_corruption() {
        let cfg = small();
        let model = Model::<f64>::init(cfg.model.clone()).unwrap();
        let ck = Checkpoint {
            step: 0,
            config: cfg,
            params: model.params,
            optim: None,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(checkpoint_name(0));
        ck.save(&p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"PRCK");
        assert_eq!(checkpoint_dtype(&p).unwrap(), DType::F64);
        assert_eq!(Checkpoint::<f64>::load(&p).unwrap(), ck);
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(Checkpoint::<f64>::from_bytes(&wrong).is_err());
    }
}
