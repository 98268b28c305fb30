//! Binary model file. All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "SCCF"
//! version      u32      = 1
//! k            u32
//! n_users      u64
//! n_questions  u64
//! phi          3 x f64  (phi_a, phi_b, phi_c)
//! theta        6 x f64  (θ0..θ2 LC, θ3..θ5 RC)
//! radius       f64
//! lambda       f64
//! user rows    n_users x k f64, row-major
//! question rows n_questions x k f64, row-major
//! user ids     n_users x (u32 byte length, UTF-8 bytes)
//! questions    n_questions x (u32 byte length, UTF-8 bytes, u8 section: 0 = LC, 1 = RC)
//! ```

use super::{CfError, CfModel, LatentFactors, PhiParams, ThetaParams};
use crate::corpus::Section;
use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};

pub const CF_MAGIC: &[u8; 4] = b"SCCF";
pub const CF_FORMAT_VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, CfError> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| CfError::Format("id is not valid UTF-8".into()))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, CfError> {
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v)?;
    Ok(v)
}

pub fn write_model<W: Write>(w: &mut W, model: &CfModel) -> Result<(), CfError> {
    let f = &model.factors;
    w.write_all(CF_MAGIC)?;
    w.write_u32::<LE>(CF_FORMAT_VERSION)?;
    w.write_u32::<LE>(f.k as u32)?;
    w.write_u64::<LE>(f.n_users() as u64)?;
    w.write_u64::<LE>(f.n_questions() as u64)?;
    for v in [model.phi.phi_a, model.phi.phi_b, model.phi.phi_c] {
        w.write_f64::<LE>(v)?;
    }
    for v in model.theta.theta {
        w.write_f64::<LE>(v)?;
    }
    w.write_f64::<LE>(model.radius)?;
    w.write_f64::<LE>(model.lambda)?;
    for v in f.user_vectors.iter().chain(&f.question_vectors) {
        w.write_f64::<LE>(*v)?;
    }
    for id in &model.user_ids {
        write_str(w, id)?;
    }
    for (id, s) in model.question_ids.iter().zip(&model.question_sections) {
        write_str(w, id)?;
        w.write_u8(s.index() as u8)?;
    }
    Ok(())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<CfModel, CfError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CF_MAGIC {
        return Err(CfError::Format("bad magic".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != CF_FORMAT_VERSION {
        return Err(CfError::Format(format!("unsupported version {version}")));
    }
    let k = r.read_u32::<LE>()? as usize;
    let n = r.read_u64::<LE>()? as usize;
    let m = r.read_u64::<LE>()? as usize;
    if k == 0 {
        return Err(CfError::Format("k = 0".into()));
    }
    let phi =
        PhiParams { phi_a: r.read_f64::<LE>()?, phi_b: r.read_f64::<LE>()?, phi_c: r.read_f64::<LE>()? };
    phi.validate().map_err(CfError::Format)?;
    let mut theta = [0.0; 6];
    r.read_f64_into::<LE>(&mut theta)?;
    let radius = r.read_f64::<LE>()?;
    let lambda = r.read_f64::<LE>()?;
    let user_vectors = read_f64s(r, n * k)?;
    let question_vectors = read_f64s(r, m * k)?;
    let user_ids = (0..n).map(|_| read_str(r)).collect::<Result<Vec<_>, _>>()?;
    let mut question_ids = Vec::with_capacity(m);
    let mut sections = Vec::with_capacity(m);
    for _ in 0..m {
        question_ids.push(read_str(r)?);
        sections.push(match r.read_u8()? {
            0 => Section::LC,
            1 => Section::RC,
            s => return Err(CfError::Format(format!("bad section byte {s}"))),
        });
    }
    CfModel::new(
        LatentFactors { k, user_vectors, question_vectors },
        phi,
        ThetaParams { theta },
        radius,
        lambda,
        user_ids,
        question_ids,
        sections,
    )
}
