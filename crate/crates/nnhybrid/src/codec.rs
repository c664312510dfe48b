//! Versioned binary containers for networks (`DHNN`), SVMs (`DHSV`), KNN
//! models (`DHKN`) and datasets (`DHDS`).
//!
//! Every file starts with the four magic bytes and a little-endian `u16`
//! format version. Reals are little-endian `f64`, so a round trip is
//! bit-exact. A tensor is written as its rank (`u8`), its dimensions
//! (`u32` each) and its values in row-major order.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use nnhybrid_core::classifiers::knn::KnnModel;
use nnhybrid_core::classifiers::svm::PairModel;
use nnhybrid_core::classifiers::{knn_fit, SvmHyper, SvmModel};
use nnhybrid_core::data::Dataset;
use nnhybrid_core::neural::{build_architecture, InputShape, LayerParams, MomentumKind, TrainedNetwork};
use nnhybrid_core::Tensor;

use crate::error::{io_err, Error, Result};

pub struct Encoder(Vec<u8>);

impl Encoder {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.0.write_u16::<LittleEndian>(v).expect("writing to a Vec");
    }

    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("dimension fits in u32");
        self.0.write_u32::<LittleEndian>(v).expect("writing to a Vec");
    }

    fn u64(&mut self, v: u64) {
        self.0.write_u64::<LittleEndian>(v).expect("writing to a Vec");
    }

    fn f64(&mut self, v: f64) {
        self.0.write_f64::<LittleEndian>(v).expect("writing to a Vec");
    }

    fn f64s(&mut self, vs: &[f64]) {
        let start = self.0.len();
        self.0.resize(start + 8 * vs.len(), 0);
        LittleEndian::write_f64_into(vs, &mut self.0[start..]);
    }

    fn usizes(&mut self, vs: &[usize]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.u64(v as u64);
        }
    }

    fn tensor(&mut self, t: &Tensor) {
        self.u8(t.rank() as u8);
        for &d in t.shape() {
            self.u32(d);
        }
        self.f64s(t.data());
    }
}

pub struct Decoder<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Truncated {
            path: self.path.into(),
            expected: (self.at as u64).saturating_add(n as u64),
            actual: self.bytes.len() as u64,
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn corrupt(&self, message: impl Into<String>) -> Error {
        Error::Corrupt { path: self.path.into(), message: message.into() }
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(LittleEndian::read_u16(self.take(2)?))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(LittleEndian::read_u32(self.take(4)?) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.corrupt("length overflow"))?)?;
        let mut out = vec![0.0; n];
        LittleEndian::read_f64_into(bytes, &mut out);
        Ok(out)
    }

    fn usizes(&mut self) -> Result<Vec<usize>> {
        let n = self.u64()? as usize;
        if n > self.bytes.len() / 8 {
            return Err(self.corrupt(format!("list of {n} entries cannot fit in the file")));
        }
        (0..n).map(|_| self.u64().map(|v| v as usize)).collect()
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u8()? as usize;
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| self.corrupt("shape overflow"))?;
        let data = self.f64s(len)?;
        Ok(Tensor::new(&shape, data)?)
    }
}

/// A type with a binary container format.
pub trait Artifact: Sized {
    const MAGIC: [u8; 4];
    const KIND: &'static str;
    const VERSION: u16 = 1;

    fn encode(&self, out: &mut Encoder);
    fn decode(input: &mut Decoder<'_>) -> Result<Self>;
}

pub fn to_bytes<T: Artifact>(value: &T) -> Vec<u8> {
    let mut e = Encoder(T::MAGIC.to_vec());
    e.u16(T::VERSION);
    value.encode(&mut e);
    e.0
}

/// Decodes bytes read from `path` (used only in error messages).
pub fn from_bytes<T: Artifact>(bytes: &[u8], path: &Path) -> Result<T> {
    let mut d = Decoder { bytes, at: 0, path };
    let magic = d.take(4)?;
    if magic != T::MAGIC {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: u32::from_be_bytes(T::MAGIC),
            found: u32::from_be_bytes(magic.try_into().expect("four bytes")),
        });
    }
    let version = d.u16()?;
    if version != T::VERSION {
        return Err(Error::UnsupportedVersion { path: path.into(), kind: T::KIND, version });
    }
    let value = T::decode(&mut d)?;
    if d.at != bytes.len() {
        return Err(d.corrupt(format!("{} trailing bytes", bytes.len() - d.at)));
    }
    Ok(value)
}

pub fn save<T: Artifact>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_bytes(value)).map_err(io_err(path))
}

pub fn load<T: Artifact>(path: &Path) -> Result<T> {
    from_bytes(&fs::read(path).map_err(io_err(path))?, path)
}

/// Whether the file at `path` starts with `T`'s magic.
pub fn has_magic<T: Artifact>(path: &Path) -> Result<bool> {
    use std::io::Read;
    let mut head = [0u8; 4];
    let mut f = fs::File::open(path).map_err(io_err(path))?;
    let n = f.read(&mut head).map_err(io_err(path))?;
    Ok(n == 4 && head == T::MAGIC)
}

fn encode_params(out: &mut Encoder, params: &[Option<LayerParams>]) {
    for p in params {
        match p {
            Some(p) => {
                out.u8(1);
                out.tensor(&p.weights);
                out.tensor(&p.bias);
            }
            None => out.u8(0),
        }
    }
}

fn decode_params(input: &mut Decoder<'_>, layers: usize) -> Result<Vec<Option<LayerParams>>> {
    (0..layers)
        .map(|_| {
            Ok(match input.u8()? {
                0 => None,
                1 => Some(LayerParams { weights: input.tensor()?, bias: input.tensor()? }),
                other => return Err(input.corrupt(format!("bad layer flag {other}"))),
            })
        })
        .collect()
}

impl Artifact for TrainedNetwork {
    const MAGIC: [u8; 4] = *b"DHNN";
    const KIND: &'static str = "network";

    fn encode(&self, out: &mut Encoder) {
        let spec = self.spec();
        out.u8(spec.id);
        out.u32(spec.class_count);
        match spec.input {
            InputShape::Image { channels, height, width } => {
                out.u8(0);
                out.u32(channels);
                out.u32(height);
                out.u32(width);
            }
            InputShape::Flat(n) => {
                out.u8(1);
                out.u32(n);
            }
        }
        out.u64(self.seed());
        out.u32(self.epochs_trained() as usize);
        out.u8(match spec.momentum_kind {
            MomentumKind::Classical => 0,
            MomentumKind::Nesterov => 1,
        });
        out.f64(spec.learning_rate);
        out.f64(spec.momentum);
        out.u32(spec.layers.len());
        encode_params(out, self.params());
        encode_params(out, self.velocities());
    }

    fn decode(input: &mut Decoder<'_>) -> Result<Self> {
        let id = input.u8()?;
        let class_count = input.u32()?;
        let shape = match input.u8()? {
            0 => InputShape::Image { channels: input.u32()?, height: input.u32()?, width: input.u32()? },
            1 => InputShape::Flat(input.u32()?),
            other => return Err(input.corrupt(format!("bad input kind {other}"))),
        };
        let seed = input.u64()?;
        let epochs = input.u32()? as u32;
        let kind = match input.u8()? {
            0 => MomentumKind::Classical,
            1 => MomentumKind::Nesterov,
            other => return Err(input.corrupt(format!("bad momentum kind {other}"))),
        };
        let mut spec = build_architecture(id, shape, class_count)?.with_momentum_kind(kind);
        spec.learning_rate = input.f64()?;
        spec.momentum = input.f64()?;
        let layers = input.u32()?;
        if layers != spec.layers.len() {
            return Err(input.corrupt(format!(
                "architecture {id} has {} layers, file stores {layers}",
                spec.layers.len()
            )));
        }
        let params = decode_params(input, layers)?;
        let velocities = decode_params(input, layers)?;
        Ok(TrainedNetwork::from_parts(spec, params, velocities, epochs, seed)?)
    }
}

impl Artifact for SvmModel {
    const MAGIC: [u8; 4] = *b"DHSV";
    const KIND: &'static str = "SVM";

    fn encode(&self, out: &mut Encoder) {
        out.f64(self.hyper.c);
        out.f64(self.hyper.gamma);
        out.usizes(&self.classes);
        out.tensor(&self.support_vectors);
        out.u64(self.pairs.len() as u64);
        for p in &self.pairs {
            out.u64(p.classes.0 as u64);
            out.u64(p.classes.1 as u64);
            out.u8(p.converged as u8);
            out.f64(p.bias);
            out.usizes(&p.support);
            out.f64s(&p.dual_coefs);
        }
    }

    fn decode(input: &mut Decoder<'_>) -> Result<Self> {
        let hyper = SvmHyper { c: input.f64()?, gamma: input.f64()? };
        let classes = input.usizes()?;
        let support_vectors = input.tensor()?;
        let pair_count = input.u64()? as usize;
        let expected = classes.len() * classes.len().saturating_sub(1) / 2;
        if pair_count != expected {
            return Err(input.corrupt(format!("{} classes need {expected} pairs, found {pair_count}", classes.len())));
        }
        let mut pairs = Vec::with_capacity(pair_count);
        for _ in 0..pair_count {
            let classes = (input.u64()? as usize, input.u64()? as usize);
            let converged = input.u8()? != 0;
            let bias = input.f64()?;
            let support = input.usizes()?;
            let dual_coefs = input.f64s(support.len())?;
            if support.iter().any(|&s| s >= support_vectors.rows()) {
                return Err(input.corrupt("support index outside the vector pool"));
            }
            pairs.push(PairModel { classes, support, dual_coefs, bias, converged });
        }
        Ok(SvmModel { classes, hyper, support_vectors, pairs })
    }
}

impl Artifact for KnnModel {
    const MAGIC: [u8; 4] = *b"DHKN";
    const KIND: &'static str = "KNN";

    fn encode(&self, out: &mut Encoder) {
        out.u64(self.k() as u64);
        out.tensor(self.points());
        out.usizes(self.labels());
    }

    fn decode(input: &mut Decoder<'_>) -> Result<Self> {
        let k = input.u64()? as usize;
        let points = input.tensor()?;
        let labels = input.usizes()?;
        Ok(knn_fit(points, labels, k)?)
    }
}

impl Artifact for Dataset {
    const MAGIC: [u8; 4] = *b"DHDS";
    const KIND: &'static str = "dataset";

    fn encode(&self, out: &mut Encoder) {
        out.u32(self.name.len());
        out.0.extend_from_slice(self.name.as_bytes());
        out.u64(self.class_count() as u64);
        out.tensor(self.features());
        out.usizes(self.labels());
    }

    fn decode(input: &mut Decoder<'_>) -> Result<Self> {
        let len = input.u32()?;
        let name = String::from_utf8(input.take(len)?.to_vec()).map_err(|_| input.corrupt("name is not UTF-8"))?;
        let class_count = input.u64()? as usize;
        let features = input.tensor()?;
        let labels = input.usizes()?;
        Ok(Dataset::new(name, features, labels, class_count)?)
    }
}
