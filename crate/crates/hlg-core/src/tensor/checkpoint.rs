//! Binary checkpoint format for named parameters.
//!
//! Layout (little-endian): magic `HLGW`, version `u16`, then one record per
//! parameter in name order: name length `u16`, UTF-8 name, rank `u8`, each
//! dimension as `u32`, then the values as `f32`. Values are stored as `f32`
//! regardless of the training precision.

use super::{Params, Real, Tensor};
use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"HLGW";
const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u16),
    #[error("checkpoint is truncated or corrupt: {0}")]
    Io(#[from] io::Error),
    #[error("parameter name is not valid UTF-8")]
    BadName,
    #[error("checkpoint parameter set differs from the model: missing {missing:?}, unexpected {unexpected:?}")]
    NameSetMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("checkpoint shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

pub fn save_params<T: Real, W: Write>(params: &Params<T>, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, tensor) in params.iter() {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        w.write_all(&[tensor.shape().len() as u8])?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u32).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_f32().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_params<R: Read>(mut r: R) -> Result<Params<f32>, CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u16(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch(version));
    }
    let mut params = Params::new();
    loop {
        let mut len_buf = [0u8; 2];
        match r.read(&mut len_buf)? {
            0 => break,
            1 => r.read_exact(&mut len_buf[1..2])?,
            _ => {}
        }
        let name_len = u16::from_le_bytes(len_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes).map_err(|_| CheckpointError::BadName)?;
        let mut rank = [0u8; 1];
        r.read_exact(&mut rank)?;
        let mut shape = Vec::with_capacity(rank[0] as usize);
        for _ in 0..rank[0] {
            shape.push(read_u32(&mut r)? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 4];
        for _ in 0..len {
            r.read_exact(&mut buf)?;
            data.push(f32::from_le_bytes(buf));
        }
        params.insert(name, Tensor::new(shape, data).expect("length matches shape"));
    }
    Ok(params)
}

/// Check that a loaded parameter set has exactly the expected names and
/// shapes.
pub fn validate_shapes<T: Real>(
    params: &Params<T>,
    expected: &BTreeMap<String, Vec<usize>>,
) -> Result<(), CheckpointError> {
    let missing: Vec<String> = expected
        .keys()
        .filter(|k| params.get(k).is_none())
        .cloned()
        .collect();
    let unexpected: Vec<String> = params
        .names()
        .filter(|k| !expected.contains_key(*k))
        .cloned()
        .collect();
    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(CheckpointError::NameSetMismatch {
            missing,
            unexpected,
        });
    }
    for (name, shape) in expected {
        let found = params.get(name).expect("checked above").shape();
        if found != shape.as_slice() {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                expected: shape.clone(),
                found: found.to_vec(),
            });
        }
    }
    Ok(())
}

fn read_u16<R: Read>(r: &mut R) -> io::Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_params() -> Params<f32> {
        let mut p = Params::new();
        p.insert("w", Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        p.insert("b", Tensor::vector(vec![0.5, -0.5]));
        p
    }

    #[test]
    fn round_trip_preserves_values_and_shapes() {
        let params = sample_params();
        let mut buf = Vec::new();
        save_params(&params, &mut buf).unwrap();
        let loaded = load_params(buf.as_slice()).unwrap();
        assert_eq!(loaded, params);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let err = load_params(&b"NOPE"[..]).unwrap_err();
        assert!(matches!(err, CheckpointError::BadMagic));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let params = sample_params();
        let mut buf = Vec::new();
        save_params(&params, &mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(load_params(buf.as_slice()).is_err());
    }

    #[test]
    fn validation_catches_wrong_shape_and_names() {
        let params = sample_params();
        let mut expected = params.shapes();
        assert!(validate_shapes(&params, &expected).is_ok());

        expected.insert("b".into(), vec![3]);
        assert!(matches!(
            validate_shapes(&params, &expected),
            Err(CheckpointError::ShapeMismatch { .. })
        ));

        expected.remove("b");
        expected.remove("w");
        expected.insert("other".into(), vec![1]);
        assert!(matches!(
            validate_shapes(&params, &expected),
            Err(CheckpointError::NameSetMismatch { .. })
        ));
    }

    #[test]
    fn f64_params_are_stored_as_f32() {
        let mut p = Params::<f64>::new();
        p.insert("x", Tensor::vector(vec![0.1, 0.2]));
        let mut buf = Vec::new();
        save_params(&p, &mut buf).unwrap();
        let loaded = load_params(buf.as_slice()).unwrap();
        assert_eq!(loaded.get("x").unwrap().data(), &[0.1f32, 0.2f32]);
    }
}
