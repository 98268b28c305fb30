//! Binary model format, all integers and floats little-endian:
//!
//! ```text
//! magic      4 bytes  "SCAM"
//! version    u32
//! d_model, heads, layers, d_ff, max_len   u32 each
//! head kind  u8       0 = pre-training, 1 = score
//! seed       u64
//! pretrain_epochs, finetune_epochs        u32 each
//! n_vocab    u64      known question ids, token ids 2.. in order
//! n_vocab x (u32 byte length, UTF-8 bytes)
//! n_encoder  u64      then n_encoder f64 in layout order
//! n_head     u64      then n_head f64 (weights row-major, then biases)
//! ```

use super::model::{AttentiveModel, EpochMetrics, TrainMeta};
use super::params::{EncoderConfig, EncoderParams, Head, HeadKind};
use super::tokens::Vocab;
use super::AttentiveError;
use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const AM_MAGIC: &[u8; 4] = b"SCAM";
pub const AM_FORMAT_VERSION: u32 = 1;

pub fn write_model<W: Write>(mut w: W, m: &AttentiveModel) -> Result<(), AttentiveError> {
    let c = &m.encoder.cfg;
    w.write_all(AM_MAGIC)?;
    w.write_u32::<LE>(AM_FORMAT_VERSION)?;
    for v in [c.d_model, c.heads, c.layers, c.d_ff, c.max_len] {
        w.write_u32::<LE>(v as u32)?;
    }
    w.write_u8(match m.head.kind {
        HeadKind::Pretrain => 0,
        HeadKind::Score => 1,
    })?;
    w.write_u64::<LE>(m.meta.seed)?;
    w.write_u32::<LE>(m.meta.pretrain_epochs)?;
    w.write_u32::<LE>(m.meta.finetune_epochs)?;
    w.write_u64::<LE>(m.vocab.ids().len() as u64)?;
    for id in m.vocab.ids() {
        w.write_u32::<LE>(id.len() as u32)?;
        w.write_all(id.as_bytes())?;
    }
    for block in [&m.encoder.data, &m.head.data] {
        w.write_u64::<LE>(block.len() as u64)?;
        for v in block.iter() {
            w.write_f64::<LE>(*v)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn format(msg: impl Into<String>) -> AttentiveError {
    AttentiveError::Format(msg.into())
}

fn read_f64s<R: Read>(r: &mut R, expected: usize, what: &str) -> Result<Vec<f64>, AttentiveError> {
    let n = r.read_u64::<LE>()? as usize;
    if n != expected {
        return Err(format(format!("{what}: {n} values, architecture needs {expected}")));
    }
    let mut out = vec![0.0; n];
    r.read_f64_into::<LE>(&mut out)?;
    Ok(out)
}

pub fn read_model<R: Read>(mut r: R) -> Result<AttentiveModel, AttentiveError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != AM_MAGIC {
        return Err(format("bad magic"));
    }
    let version = r.read_u32::<LE>()?;
    if version != AM_FORMAT_VERSION {
        return Err(format(format!("unsupported version {version}")));
    }
    let mut dims = [0usize; 5];
    for d in dims.iter_mut() {
        *d = r.read_u32::<LE>()? as usize;
    }
    let cfg =
        EncoderConfig { d_model: dims[0], heads: dims[1], layers: dims[2], d_ff: dims[3], max_len: dims[4] };
    cfg.validate().map_err(format)?;
    let kind = match r.read_u8()? {
        0 => HeadKind::Pretrain,
        1 => HeadKind::Score,
        k => return Err(format(format!("unknown head kind {k}"))),
    };
    let meta = TrainMeta {
        seed: r.read_u64::<LE>()?,
        pretrain_epochs: r.read_u32::<LE>()?,
        finetune_epochs: r.read_u32::<LE>()?,
    };
    let n_vocab = r.read_u64::<LE>()? as usize;
    let mut ids = Vec::with_capacity(n_vocab.min(1 << 20));
    for _ in 0..n_vocab {
        let len = r.read_u32::<LE>()? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        ids.push(String::from_utf8(buf).map_err(|_| format("question id is not UTF-8"))?);
    }
    let vocab = Vocab::from_ids(ids);
    let mut encoder = EncoderParams::zeros(cfg, vocab.size());
    encoder.data = read_f64s(&mut r, encoder.layout.total, "encoder")?;
    let head_len = cfg.d_model * kind.outputs() + kind.outputs();
    let head = Head { kind, d_model: cfg.d_model, data: read_f64s(&mut r, head_len, "head")? };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(format("trailing bytes"));
    }
    Ok(AttentiveModel { encoder, head, vocab, meta })
}

impl AttentiveModel {
    pub fn save(&self, path: &Path) -> Result<(), AttentiveError> {
        write_model(BufWriter::new(File::create(path)?), self)
    }

    pub fn load(path: &Path) -> Result<Self, AttentiveError> {
        read_model(BufReader::new(File::open(path)?))
    }
}

/// One JSON object per line.
pub fn write_metrics_log<W: Write>(mut w: W, history: &[EpochMetrics]) -> std::io::Result<()> {
    for m in history {
        serde_json::to_writer(&mut w, m)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> AttentiveModel {
        let cfg = EncoderConfig { d_model: 8, heads: 2, layers: 2, d_ff: 8, max_len: 5 };
        AttentiveModel::new(cfg, Vocab::from_ids(vec!["a".into(), "bé".into()]), 9).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_model(&mut buf, &m).unwrap();
        let back = read_model(&buf[..]).unwrap();
        assert_eq!(back, m);
        let mut again = Vec::new();
        write_model(&mut again, &back).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_input_rejected() {
        let mut buf = Vec::new();
        write_model(&mut buf, &model()).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(&bad[..]), Err(AttentiveError::Format(_))));
        assert!(read_model(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(read_model(&long[..]).is_err());
    }

    #[test]
    fn metrics_log_lines() {
        let h = vec![EpochMetrics {
            epoch: 0,
            loss: 0.5,
            masked_accuracy: Some(0.6),
            train_mae: None,
            val_mae: None,
        }];
        let mut out = Vec::new();
        write_metrics_log(&mut out, &h).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "{\"epoch\":0,\"loss\":0.5,\"masked_accuracy\":0.6}\n");
    }
}
