//! Binary checkpoints: a magic line, a JSON header line, then raw
//! little-endian `f64` arrays (parameters, then Adam `m` and `v` if present).

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::GradientMode;
use crate::optimizer::AdamState;
use crate::qnet::{NetShape, ParamVec};

const MAGIC: &str = "QREGIME-CHECKPOINT 1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub shape: NetShape,
    pub init_seed: u64,
    pub step: usize,
    pub mode: GradientMode,
    pub config_digest: String,
    pub params: ParamVec,
    pub adam: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    shape: NetShape,
    init_seed: u64,
    step: usize,
    mode: GradientMode,
    config_digest: String,
    num_params: usize,
    adam: Option<AdamScalars>,
}

#[derive(Serialize, Deserialize)]
struct AdamScalars {
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

fn write_f64s(out: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(input: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    input
        .read_exact(&mut bytes)
        .map_err(|e| Error::format("checkpoint", format!("truncated payload: {e}")))?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            shape: self.shape.clone(),
            init_seed: self.init_seed,
            step: self.step,
            mode: self.mode,
            config_digest: self.config_digest.clone(),
            num_params: self.params.len(),
            adam: self.adam.as_ref().map(|a| AdamScalars { t: a.t, beta1: a.beta1, beta2: a.beta2, epsilon: a.epsilon }),
        };
        let mut out = Vec::with_capacity(self.params.len() * 24 + 256);
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        write_f64s(&mut out, self.params.as_slice())?;
        if let Some(adam) = &self.adam {
            write_f64s(&mut out, &adam.m)?;
            write_f64s(&mut out, &adam.v)?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let mut reader = BufReader::new(fs::File::open(path)?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        if line.trim_end() != MAGIC {
            return Err(Error::format("checkpoint", "bad magic line"));
        }
        line.clear();
        reader.read_line(&mut line)?;
        let header: Header = serde_json::from_str(line.trim_end())?;
        if header.num_params != header.shape.num_params() {
            return Err(Error::format("checkpoint", "parameter count does not match shape"));
        }
        let params = ParamVec(read_f64s(&mut reader, header.num_params)?);
        let adam = match header.adam {
            Some(s) => Some(AdamState {
                m: read_f64s(&mut reader, header.num_params)?,
                v: read_f64s(&mut reader, header.num_params)?,
                t: s.t,
                beta1: s.beta1,
                beta2: s.beta2,
                epsilon: s.epsilon,
            }),
            None => None,
        };
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Checkpoint {
            shape: header.shape,
            init_seed: header.init_seed,
            step: header.step,
            mode: header.mode,
            config_digest: header.config_digest,
            params,
            adam,
        })
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample(values: Vec<f64>, with_adam: bool) -> Checkpoint {
        let shape = NetShape::new(2, &[3], 1);
        assert_eq!(shape.num_params(), values.len());
        let adam = with_adam.then(|| {
            let mut a = AdamState::new(values.len());
            a.step(&mut values.clone(), &values, 1e-3).unwrap();
            a
        });
        Checkpoint {
            shape,
            init_seed: 7,
            step: 1234,
            mode: GradientMode::True,
            config_digest: "abc".into(),
            params: ParamVec(values),
            adam,
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        assert!(matches!(Checkpoint::load(&path), Err(Error::MissingArtifact(_))));
        fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(Checkpoint::load(&path).is_err());
        sample(vec![0.5; 13], true).save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn round_trip_is_bitwise(values in proptest::collection::vec(proptest::num::f64::ANY, 13), with_adam: bool) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("c.bin");
            let ck = sample(values, with_adam);
            ck.save(&path).unwrap();
            let back = Checkpoint::load(&path).unwrap();
            let bits = |p: &ParamVec| p.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back.params), bits(&ck.params));
            prop_assert_eq!(back.adam.is_some(), with_adam);
            if let (Some(a), Some(b)) = (&back.adam, &ck.adam) {
                prop_assert_eq!(a.m.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.m.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
                prop_assert_eq!(a.v.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.v.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
                prop_assert_eq!(a.t, b.t);
            }
            prop_assert_eq!(back.step, 1234);
        }
    }
}
