//! Binary model format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic        4 bytes  "LCAM"
//! version      u32      1
//! spec_len     u32
//! spec         spec_len bytes of UTF-8, the canonical spec text
//! bn_epsilon   f64
//! bn_momentum  f64
//! n_tensors    u32
//! shape table  n_tensors x { name_len u16, name, ndim u8, dims u32 x ndim }
//! payload      every tensor as f32, in table order
//! ```

use std::path::Path;

use super::network::Network;
use super::spec::NetworkSpec;
use crate::error::{Error, ModelFileError, Result};
use crate::nn::BatchNormParams;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"LCAM";
pub const FORMAT_VERSION: u32 = 1;

fn named_tensors(net: &Network<f32>) -> Vec<(String, &Tensor<f32>)> {
    let mut out = Vec::new();
    for (i, l) in net.layers.iter().enumerate() {
        out.push((format!("conv{i}.kernels"), &l.kernels));
        if let Some(b) = &l.bias {
            out.push((format!("conv{i}.bias"), b));
        }
        if let Some(bn) = &l.batch_norm {
            out.push((format!("conv{i}.bn.gamma"), &bn.gamma));
            out.push((format!("conv{i}.bn.beta"), &bn.beta));
            out.push((format!("conv{i}.bn.running_mean"), &bn.running.mean));
            out.push((format!("conv{i}.bn.running_var"), &bn.running.var));
        }
    }
    out.push(("classifier.weights".into(), &net.classifier_weights));
    out.push(("classifier.bias".into(), &net.classifier_bias));
    out
}

fn named_tensors_mut(net: &mut Network<f32>) -> Vec<(String, &mut Tensor<f32>)> {
    let mut out = Vec::new();
    for (i, l) in net.layers.iter_mut().enumerate() {
        out.push((format!("conv{i}.kernels"), &mut l.kernels));
        if let Some(b) = &mut l.bias {
            out.push((format!("conv{i}.bias"), b));
        }
        if let Some(bn) = &mut l.batch_norm {
            out.push((format!("conv{i}.bn.gamma"), &mut bn.gamma));
            out.push((format!("conv{i}.bn.beta"), &mut bn.beta));
            out.push((format!("conv{i}.bn.running_mean"), &mut bn.running.mean));
            out.push((format!("conv{i}.bn.running_var"), &mut bn.running.var));
        }
    }
    out.push(("classifier.weights".into(), &mut net.classifier_weights));
    out.push(("classifier.bias".into(), &mut net.classifier_bias));
    out
}

pub fn to_bytes(net: &Network<f32>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let spec = net.spec.to_text();
    buf.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    buf.extend_from_slice(spec.as_bytes());
    buf.extend_from_slice(&net.bn_params.epsilon.to_le_bytes());
    buf.extend_from_slice(&net.bn_params.momentum.to_le_bytes());
    let tensors = named_tensors(net);
    buf.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(t.ndim() as u8);
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for (_, t) in &tensors {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ModelFileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(ModelFileError::Truncated(what))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], ModelFileError> {
        Ok(self
            .take(N, what)?
            .try_into()
            .expect("take returns N bytes"))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Network<f32>, ModelFileError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.array("magic")?;
    if magic != MAGIC {
        return Err(ModelFileError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion(version));
    }
    let spec_len = r.u32("spec length")? as usize;
    let spec_text = std::str::from_utf8(r.take(spec_len, "spec")?)
        .map_err(|e| ModelFileError::BadSpec(e.to_string()))?;
    let spec = NetworkSpec::parse(spec_text).map_err(|e| ModelFileError::BadSpec(e.to_string()))?;
    let epsilon = f64::from_le_bytes(r.array("bn epsilon")?);
    let momentum = f64::from_le_bytes(r.array("bn momentum")?);

    let mut net =
        Network::<f32>::build(spec, 0).map_err(|e| ModelFileError::BadSpec(e.to_string()))?;
    net.bn_params = BatchNormParams { epsilon, momentum };

    let count = r.u32("tensor count")? as usize;
    let mut expected = named_tensors_mut(&mut net);
    if count != expected.len() {
        return Err(ModelFileError::ShapeMismatch(format!(
            "{count} tensors in table, spec implies {}",
            expected.len()
        )));
    }
    for (name, tensor) in &expected {
        let name_len = u16::from_le_bytes(r.array("shape table")?) as usize;
        let got_name = r.take(name_len, "shape table")?;
        let ndim = r.array::<1>("shape table")?[0] as usize;
        let dims = (0..ndim)
            .map(|_| r.u32("shape table").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if got_name != name.as_bytes() || dims != tensor.shape() {
            return Err(ModelFileError::ShapeMismatch(format!(
                "entry {:?} {dims:?}, expected {name:?} {:?}",
                String::from_utf8_lossy(got_name),
                tensor.shape()
            )));
        }
    }
    for (_, tensor) in expected.iter_mut() {
        let raw = r.take(tensor.len() * 4, "payload")?;
        for (dst, chunk) in tensor.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
    }
    let rest = bytes.len() - r.pos;
    if rest != 0 {
        return Err(ModelFileError::TrailingBytes(rest));
    }
    Ok(net)
}

pub fn save(net: &Network<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(from_bytes(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;

    fn trained_looking() -> Network<f32> {
        let mut net = Network::<f32>::build(NetworkSpec::toy(), 7).unwrap();
        for (i, l) in net.layers.iter_mut().enumerate() {
            if let Some(bn) = &mut l.batch_norm {
                bn.running.mean = bn.running.mean.map(|v| v + 0.1 * i as f32);
                bn.running.var = bn.running.var.map(|v| v * 1.5);
                bn.beta = bn.beta.map(|v| v - 0.25);
            }
        }
        net.classifier_bias[1] = 0.125;
        net
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let net = trained_looking();
        let bytes = to_bytes(&net);
        let back = from_bytes(&bytes).unwrap();
        assert_eq!(back.checksum(), net.checksum());
        assert_eq!(to_bytes(&back), bytes);

        let x = Tensor::from_vec(
            &[1, 1, 64, 64],
            (0..4096).map(|i| ((i % 17) as f32 - 8.0) / 4.0).collect(),
        )
        .unwrap();
        let a = net.forward(&x, Mode::Infer).unwrap();
        let b = back.forward(&x, Mode::Infer).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.logits), bits(&b.logits));
    }

    #[test]
    fn corrupt_magic_and_version() {
        let bytes = to_bytes(&trained_looking());
        let mut bad = bytes.clone();
        bad[0] ^= 0xff;
        assert!(matches!(from_bytes(&bad), Err(ModelFileError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert_eq!(
            from_bytes(&bad).unwrap_err(),
            ModelFileError::UnsupportedVersion(9)
        );
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = to_bytes(&trained_looking());
        let err = from_bytes(&bytes[..bytes.len() - 3]).unwrap_err();
        assert_eq!(err, ModelFileError::Truncated("payload"));
        assert!(matches!(
            from_bytes(&bytes[..6]),
            Err(ModelFileError::Truncated(_))
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(
            from_bytes(&long).unwrap_err(),
            ModelFileError::TrailingBytes(1)
        );
    }

    #[test]
    fn shape_table_checked_against_spec() {
        let net = trained_looking();
        let mut bytes = to_bytes(&net);
        // first dim of the first tensor sits right after its name
        let spec_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let table = 12 + spec_len + 16 + 4;
        let name_len = u16::from_le_bytes(bytes[table..table + 2].try_into().unwrap()) as usize;
        let dim0 = table + 2 + name_len + 1;
        bytes[dim0] += 1;
        let err = from_bytes(&bytes).unwrap_err();
        assert!(matches!(err, ModelFileError::ShapeMismatch(_)), "{err}");
        assert_eq!(err.code(), 4);
    }
}
