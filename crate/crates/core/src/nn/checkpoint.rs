//! Little-endian binary checkpoints.
//!
//! Layout: magic, format version, then a sequence of tagged records written
//! and read back in the same order by the owner of the checkpoint.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, NdFloat};

use super::{Adam, AdamConfig, Head, Layer, Mlp, MlpSpec, NnError, ParamSet};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ONRAMPCK";

/// Floats with a fixed little-endian encoding.
pub trait LeFloat: NdFloat {
    const TAG: u8;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    const SIZE: usize;
}

impl LeFloat for f32 {
    const TAG: u8 = 4;
    const SIZE: usize = 4;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl LeFloat for f64 {
    const TAG: u8 = 8;
    const SIZE: usize = 8;
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Default)]
pub struct CheckpointWriter {
    buf: Vec<u8>,
}

impl CheckpointWriter {
    pub fn new(version: u32) -> Self {
        let mut w = Self { buf: CHECKPOINT_MAGIC.to_vec() };
        w.u32(version);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
    }

    pub fn str(&mut self, s: &str) {
        self.bytes(s.as_bytes());
    }

    pub fn spec(&mut self, spec: &MlpSpec) {
        self.u64(spec.input_dim as u64);
        self.u64(spec.hidden.len() as u64);
        for h in &spec.hidden {
            self.u64(*h as u64);
        }
        self.u64(spec.output_dim as u64);
        self.u8(match spec.head {
            Head::Linear => 0,
            Head::Softmax => 1,
        });
    }

    pub fn params<F: LeFloat>(&mut self, p: &ParamSet<F>) {
        self.u8(F::TAG);
        self.u64(p.len() as u64);
        for v in p.iter() {
            v.write_le(&mut self.buf);
        }
    }

    pub fn mlp<F: LeFloat>(&mut self, net: &Mlp<F>) {
        self.spec(net.spec());
        self.params(&net.params);
    }

    pub fn adam<F: LeFloat>(&mut self, opt: &Adam<F>) {
        let c = opt.config;
        for v in [c.lr, c.beta1, c.beta2, c.eps] {
            self.f64(v);
        }
        self.u64(opt.step);
        self.params(&opt.m);
        self.params(&opt.v);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn write_to<W: Write>(self, mut out: W) -> std::io::Result<()> {
        out.write_all(&self.buf)
    }
}

pub struct CheckpointReader {
    buf: Vec<u8>,
    pos: usize,
    version: u32,
}

fn err(msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(msg.into())
}

impl CheckpointReader {
    pub fn new(buf: Vec<u8>) -> Result<Self, NnError> {
        if buf.len() < 12 || &buf[..8] != CHECKPOINT_MAGIC {
            return Err(err("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes"));
        Ok(Self { buf, pos: 12, version })
    }

    pub fn from_reader<R: Read>(mut r: R) -> Result<Self, NnError> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf).map_err(|e| err(e.to_string()))?;
        Self::new(buf)
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn is_exhausted(&self) -> bool {
        self.pos == self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&[u8], NnError> {
        if self.pos + n > self.buf.len() {
            return Err(err("truncated checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64, NnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize, NnError> {
        let n = self.u64()?;
        usize::try_from(n).ok().filter(|n| *n <= self.buf.len()).ok_or_else(|| err("implausible length"))
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, NnError> {
        let n = self.len()?;
        Ok(self.take(n)?.to_vec())
    }

    pub fn str(&mut self) -> Result<String, NnError> {
        String::from_utf8(self.bytes()?).map_err(|_| err("invalid utf-8"))
    }

    pub fn spec(&mut self) -> Result<MlpSpec, NnError> {
        let input_dim = self.len()?;
        let n = self.len()?;
        let hidden = (0..n).map(|_| self.len()).collect::<Result<Vec<_>, _>>()?;
        let output_dim = self.len()?;
        let head = match self.u8()? {
            0 => Head::Linear,
            1 => Head::Softmax,
            t => return Err(err(format!("unknown head tag {t}"))),
        };
        let spec = MlpSpec { input_dim, hidden, output_dim, head };
        spec.validate()?;
        Ok(spec)
    }

    /// Reads values into a parameter set shaped like `like`.
    pub fn params_into<F: LeFloat>(&mut self, like: &mut ParamSet<F>) -> Result<(), NnError> {
        if self.u8()? != F::TAG {
            return Err(err("float width mismatch"));
        }
        if self.len()? != like.len() {
            return Err(err("parameter count mismatch"));
        }
        for layer in &mut like.layers {
            let Layer { w, b } = layer;
            let (r, c) = w.dim();
            let mut read = |n: usize| -> Result<Vec<F>, NnError> {
                let bytes = self.take(n * F::SIZE)?;
                Ok(bytes.chunks_exact(F::SIZE).map(F::read_le).collect())
            };
            *w = Array2::from_shape_vec((r, c), read(r * c)?).expect("shape");
            *b = Array1::from_vec(read(b.len())?);
        }
        Ok(())
    }

    pub fn mlp<F: LeFloat>(&mut self) -> Result<Mlp<F>, NnError> {
        let spec = self.spec()?;
        let mut params = ParamSet::zeros(&spec);
        self.params_into(&mut params)?;
        Mlp::from_params(spec, params)
    }

    pub fn adam<F: LeFloat>(&mut self, like: &ParamSet<F>) -> Result<Adam<F>, NnError> {
        let config = AdamConfig { lr: self.f64()?, beta1: self.f64()?, beta2: self.f64()?, eps: self.f64()? };
        let step = self.u64()?;
        let mut m = like.zeros_like();
        let mut v = like.zeros_like();
        self.params_into(&mut m)?;
        self.params_into(&mut v)?;
        Ok(Adam { config, step, m, v })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_and_optimizer_round_trip_bit_exact() {
        let spec = MlpSpec::new(4, &[6, 5], 3, Head::Softmax);
        let net = Mlp::<f32>::new(spec, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &net.params);
        let mut p = net.params.clone();
        adam.update(&mut p, &net.params).unwrap();

        let mut w = CheckpointWriter::new(3);
        w.mlp(&net);
        w.adam(&adam);
        w.str("tail");
        let mut r = CheckpointReader::new(w.finish()).unwrap();
        assert_eq!(r.version(), 3);
        let net2: Mlp<f32> = r.mlp().unwrap();
        let adam2 = r.adam(&net2.params).unwrap();
        assert_eq!(r.str().unwrap(), "tail");
        assert!(r.is_exhausted());
        assert!(net.params.iter().zip(net2.params.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(adam, adam2);
        assert_eq!(net, net2);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(CheckpointReader::new(b"nope".to_vec()).is_err());
        let mut w = CheckpointWriter::new(1);
        w.u64(5);
        let mut r = CheckpointReader::new(w.finish()).unwrap();
        assert!(r.mlp::<f32>().is_err());
    }
}
