//! Reader and writer for the `.npy` tensor interchange format.
//!
//! Only little-endian `f4`/`f8` payloads in C order are accepted. Everything
//! is promoted to `f64` on read; the on-disk dtype is kept on the [`Tensor`]
//! so a read/write cycle reproduces the original bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F4,
    F8,
}

impl Dtype {
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F4 => "<f4",
            Dtype::F8 => "<f8",
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F4 => 4,
            Dtype::F8 => 8,
        }
    }

    fn parse(descr: &str) -> Result<Self> {
        match descr {
            "<f4" => Ok(Dtype::F4),
            "<f8" => Ok(Dtype::F8),
            other => Err(Error::UnsupportedDtype(other.to_string())),
        }
    }
}

/// Dense C-order tensor held in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape("tensor payload", &[expected], &[data.len()]));
        }
        Ok(Tensor {
            dtype: Dtype::F8,
            shape,
            data,
        })
    }

    pub fn with_dtype(mut self, dtype: Dtype) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn from_array<D: ndarray::Dimension>(array: &ndarray::Array<f64, D>) -> Self {
        Tensor {
            dtype: Dtype::F8,
            shape: array.shape().to_vec(),
            data: array.iter().copied().collect(),
        }
    }

    pub fn into_array2(self, what: &str) -> Result<ndarray::Array2<f64>> {
        if self.ndim() != 2 {
            return Err(Error::shape(what, &[0, 0], &self.shape));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        Ok(ndarray::Array2::from_shape_vec((r, c), self.data).expect("shape checked"))
    }

    pub fn into_array1(self, what: &str) -> Result<ndarray::Array1<f64>> {
        if self.ndim() != 1 {
            return Err(Error::shape(what, &[0], &self.shape));
        }
        Ok(ndarray::Array1::from_vec(self.data))
    }

    pub fn into_array3(self, what: &str) -> Result<ndarray::Array3<f64>> {
        if self.ndim() != 3 {
            return Err(Error::shape(what, &[0, 0, 0], &self.shape));
        }
        let s = (self.shape[0], self.shape[1], self.shape[2]);
        Ok(ndarray::Array3::from_shape_vec(s, self.data).expect("shape checked"))
    }

    pub fn into_array4(self, what: &str) -> Result<ndarray::Array4<f64>> {
        if self.ndim() != 4 {
            return Err(Error::shape(what, &[0, 0, 0, 0], &self.shape));
        }
        let s = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        Ok(ndarray::Array4::from_shape_vec(s, self.data).expect("shape checked"))
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub fn write_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(pos) = tensor.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "refusing to write non-finite value at flat index {pos}"
        )));
    }
    fs::write(path, encode_tensor(tensor)).map_err(|e| Error::io(path, e))
}

pub fn encode_tensor(tensor: &Tensor) -> Vec<u8> {
    let shape = match tensor.shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", tensor.shape[0]),
        _ => {
            let dims: Vec<String> = tensor.shape.iter().map(|d| d.to_string()).collect();
            format!("({})", dims.join(", "))
        }
    };
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        tensor.dtype.descr(),
        shape
    );

    // preamble + dict + padding + '\n' must be a multiple of ALIGN
    let pad = |preamble: usize| {
        let unpadded = preamble + dict.len() + 1;
        (ALIGN - unpadded % ALIGN) % ALIGN
    };
    let (major, preamble) = if dict.len() + 1 + pad(10) <= u16::MAX as usize {
        (1u8, 10)
    } else {
        (2u8, 12)
    };
    let header_len = dict.len() + pad(preamble) + 1;

    let mut out = Vec::with_capacity(preamble + header_len + tensor.len() * tensor.dtype.size());
    out.extend_from_slice(MAGIC);
    out.push(major);
    out.push(0);
    if major == 1 {
        out.extend_from_slice(&(header_len as u16).to_le_bytes());
    } else {
        out.extend_from_slice(&(header_len as u32).to_le_bytes());
    }
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat_n(b' ', pad(preamble)));
    out.push(b'\n');
    match tensor.dtype {
        Dtype::F4 => {
            for v in &tensor.data {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        Dtype::F8 => {
            for v in &tensor.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "missing \\x93NUMPY magic".into(),
        });
    }
    let (header_len, start) = match (bytes[6], bytes[7]) {
        (1, 0) => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        (2, 0) => {
            if bytes.len() < 12 {
                return Err(Error::Format {
                    offset: 8,
                    reason: "truncated header length".into(),
                });
            }
            let raw = [bytes[8], bytes[9], bytes[10], bytes[11]];
            (u32::from_le_bytes(raw) as usize, 12)
        }
        (major, minor) => {
            return Err(Error::Format {
                offset: 6,
                reason: format!("unsupported version {major}.{minor}"),
            })
        }
    };
    let end = start + header_len;
    if bytes.len() < end {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!("header declares {header_len} bytes but file ends early"),
        });
    }
    let header = std::str::from_utf8(&bytes[start..end]).map_err(|e| Error::Format {
        offset: start + e.valid_up_to(),
        reason: "header is not valid text".into(),
    })?;
    let parsed = HeaderParser::new(header, start).parse()?;
    let dtype = Dtype::parse(&parsed.descr)?;
    if parsed.fortran_order {
        return Err(Error::Format {
            offset: start,
            reason: "fortran_order arrays are not supported".into(),
        });
    }

    let count: usize = parsed.shape.iter().product();
    let payload = &bytes[end..];
    if payload.len() != count * dtype.size() {
        return Err(Error::Format {
            offset: end,
            reason: format!(
                "payload holds {} bytes, shape {:?} needs {}",
                payload.len(),
                parsed.shape,
                count * dtype.size()
            ),
        });
    }
    let data = match dtype {
        Dtype::F4 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        Dtype::F8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect(),
    };
    Ok(Tensor {
        dtype,
        shape: parsed.shape,
        data,
    })
}

struct Header {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Parser for the Python-literal dict in the header.
struct HeaderParser<'a> {
    src: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> HeaderParser<'a> {
    fn new(src: &'a str, base: usize) -> Self {
        HeaderParser {
            src: src.as_bytes(),
            pos: 0,
            base,
        }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            offset: self.base + self.pos,
            reason: reason.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected quoted string")),
        };
        self.pos += 1;
        let begin = self.pos;
        while self.pos < self.src.len() && self.src[self.pos] != quote {
            self.pos += 1;
        }
        if self.pos == self.src.len() {
            return Err(self.err("unterminated string"));
        }
        let s = String::from_utf8_lossy(&self.src[begin..self.pos]).into_owned();
        self.pos += 1;
        Ok(s)
    }

    fn word(&mut self) -> &'a [u8] {
        self.skip_ws();
        let begin = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        &self.src[begin..self.pos]
    }

    fn boolean(&mut self) -> Result<bool> {
        let at = self.pos;
        match self.word() {
            b"True" => Ok(true),
            b"False" => Ok(false),
            _ => {
                self.pos = at;
                Err(self.err("expected True or False"))
            }
        }
    }

    fn shape(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            match self.peek() {
                Some(b')') => {
                    self.pos += 1;
                    return Ok(dims);
                }
                Some(c) if c.is_ascii_digit() => {
                    let at = self.pos;
                    let w = self.word();
                    let dim = std::str::from_utf8(w)
                        .ok()
                        .and_then(|s| s.trim_end_matches('L').parse().ok())
                        .ok_or_else(|| {
                            Error::Format {
                                offset: self.base + at,
                                reason: "bad dimension".into(),
                            }
                        })?;
                    dims.push(dim);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(self.err("expected ',' or ')' in shape")),
                    }
                }
                _ => return Err(self.err("unexpected token in shape")),
            }
        }
    }

    fn parse(mut self) -> Result<Header> {
        self.expect(b'{')?;
        let (mut descr, mut fortran, mut shape) = (None, None, None);
        loop {
            if self.peek() == Some(b'}') {
                self.pos += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            match key.as_str() {
                "descr" => descr = Some(self.string()?),
                "fortran_order" => fortran = Some(self.boolean()?),
                "shape" => shape = Some(self.shape()?),
                other => return Err(self.err(format!("unknown header key {other:?}"))),
            }
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b'}') => {}
                _ => return Err(self.err("expected ',' or '}'")),
            }
        }
        Ok(Header {
            descr: descr.ok_or_else(|| self.err("header lacks 'descr'"))?,
            fortran_order: fortran.ok_or_else(|| self.err("header lacks 'fortran_order'"))?,
            shape: shape.ok_or_else(|| self.err("header lacks 'shape'"))?,
        })
    }
}
