//! MBT1 binary tensor files.
//!
//! Layout: the 8-byte magic `MBT1\0\0\0\0`, a dtype byte (0 = real64,
//! 1 = complex128), a rank byte, `rank` little-endian u32 extents, then the
//! row-major little-endian elements (complex values as `re, im` pairs).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use super::{ComplexTensor, DType, Element, RealTensor, Tensor};
use crate::error::{Error, Result};

pub const MBT_MAGIC: [u8; 8] = *b"MBT1\0\0\0\0";

/// A tensor whose dtype is only known after reading.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyTensor {
    Real(RealTensor),
    Complex(ComplexTensor),
}

impl AnyTensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            AnyTensor::Real(t) => t.shape(),
            AnyTensor::Complex(t) => t.shape(),
        }
    }

    pub fn into_complex(self) -> ComplexTensor {
        match self {
            AnyTensor::Real(t) => t.to_complex(),
            AnyTensor::Complex(t) => t,
        }
    }

    /// Real tensors pass through; complex ones are reduced to magnitude.
    pub fn into_magnitude(self) -> RealTensor {
        match self {
            AnyTensor::Real(t) => t,
            AnyTensor::Complex(t) => t.abs(),
        }
    }
}

trait LeBytes: Element {
    fn put(self, out: &mut Vec<u8>);
    fn take(bytes: &[u8]) -> Self;
    const WIDTH: usize;
}

impl LeBytes for f64 {
    const WIDTH: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn take(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl LeBytes for Complex64 {
    const WIDTH: usize = 16;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn take(bytes: &[u8]) -> Self {
        Complex64::new(f64::take(&bytes[..8]), f64::take(&bytes[8..16]))
    }
}

fn encode<T: LeBytes>(t: &Tensor<T>) -> Result<Vec<u8>> {
    if t.rank() > u8::MAX as usize {
        return Err(Error::Format(format!("rank {} exceeds 255", t.rank())));
    }
    let mut out = Vec::with_capacity(10 + 4 * t.rank() + T::WIDTH * t.len());
    out.extend_from_slice(&MBT_MAGIC);
    out.push(T::DTYPE as u8);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        let d = u32::try_from(d)
            .map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        v.put(&mut out);
    }
    Ok(out)
}

fn decode_body<T: LeBytes>(shape: &[usize], body: &[u8]) -> Result<Tensor<T>> {
    let n: usize = shape.iter().product();
    if body.len() != n * T::WIDTH {
        return Err(Error::Format(format!(
            "expected {} data bytes for shape {shape:?}, found {}",
            n * T::WIDTH,
            body.len()
        )));
    }
    let data = body.chunks_exact(T::WIDTH).map(T::take).collect();
    Tensor::new(shape, data)
}

pub fn encode_real(t: &RealTensor) -> Result<Vec<u8>> {
    encode(t)
}

pub fn encode_complex(t: &ComplexTensor) -> Result<Vec<u8>> {
    encode(t)
}

pub fn encode_any(t: &AnyTensor) -> Result<Vec<u8>> {
    match t {
        AnyTensor::Real(t) => encode(t),
        AnyTensor::Complex(t) => encode(t),
    }
}

/// Parses one complete MBT1 record; trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<AnyTensor> {
    if bytes.len() < 10 || bytes[..8] != MBT_MAGIC {
        return Err(Error::Format("missing MBT1 magic".into()));
    }
    let dtype = bytes[8];
    let rank = bytes[9] as usize;
    let header = 10 + 4 * rank;
    if bytes.len() < header {
        return Err(Error::Format("truncated MBT1 header".into()));
    }
    let shape: Vec<usize> = bytes[10..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let body = &bytes[header..];
    match dtype {
        d if d == DType::Real64 as u8 => Ok(AnyTensor::Real(decode_body(&shape, body)?)),
        d if d == DType::Complex128 as u8 => {
            Ok(AnyTensor::Complex(decode_body(&shape, body)?))
        }
        d => Err(Error::Format(format!("unknown dtype tag {d}"))),
    }
}

pub fn write_mbt(path: impl AsRef<Path>, t: &AnyTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_any(t)?)?;
    w.flush()?;
    Ok(())
}

pub fn save_real(path: impl AsRef<Path>, t: &RealTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(t)?)?;
    w.flush()?;
    Ok(())
}

pub fn save_complex(path: impl AsRef<Path>, t: &ComplexTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(t)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_mbt(path: impl AsRef<Path>) -> Result<AnyTensor> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Writes a 2-D image as binary PGM (P5, maxval 255), mapping `[lo, hi]`
/// linearly onto `0..=255` and clamping outside it.
pub fn save_pgm(path: impl AsRef<Path>, t: &RealTensor, lo: f64, hi: f64) -> Result<()> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::{ExtendedColorType, ImageEncoder};

    let (h, w) = t.dims2()?;
    if !(hi > lo) {
        return Err(Error::param(format!("empty display range [{lo}, {hi}]")));
    }
    let pixels: Vec<u8> = t
        .data()
        .iter()
        .map(|&v| (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let file = BufWriter::new(File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&pixels, w as u32, h as u32, ExtendedColorType::L8)
        .map_err(|e| Error::Format(e.to_string()))
}

/// Reads an 8- or 16-bit grayscale image (PGM, PNG, ...) scaled to `[0, 1]`.
pub fn load_gray(path: impl AsRef<Path>) -> Result<RealTensor> {
    let img = image::open(path.as_ref())
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.as_ref().display())))?
        .into_luma16();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
    RealTensor::new(&[h as usize, w as usize], data)
}
