//! Reading and writing arrays in the numpy `.npy` format (version 1.0).
//!
//! The decoder accepts C- and Fortran-ordered files and always hands back a
//! row-major [`ScanArray`]. The encoder writes one canonical form: version 1.0,
//! `fortran_order: False`, little-endian elements, prelude padded to 64 bytes.
//!
//! Supported element types are `<f4`, `<f8`, `<i4`, `<i8` and `|u1`.

use std::fmt;

use thiserror::Error;

/// The npy magic string.
pub const MAGIC: [u8; 6] = *b"\x93NUMPY";

/// Largest payload the decoder will materialize.
pub const MAX_PAYLOAD_BYTES: usize = 256 * 1024 * 1024;

/// Magic, two version bytes and the u16 header length.
const FIXED_PRELUDE_LEN: usize = 10;

const ALIGN: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NpyError {
    #[error("not an npy file: bad magic string")]
    BadMagic,
    #[error("unsupported npy version {major}.{minor}")]
    UnsupportedVersion { major: u8, minor: u8 },
    #[error("unsupported dtype descriptor {0:?}")]
    UnsupportedDtype(String),
    #[error("malformed npy header: {0}")]
    MalformedHeader(String),
    #[error("payload size mismatch: header implies {expected} bytes, found {actual}")]
    PayloadSizeMismatch { expected: u128, actual: usize },
    #[error("{elements} elements do not fill shape {shape:?}")]
    ElementCount { elements: usize, shape: Vec<usize> },
}

impl NpyError {
    /// Stable machine-readable name of the error kind.
    pub fn code(&self) -> &'static str {
        match self {
            NpyError::BadMagic => "BadMagic",
            NpyError::UnsupportedVersion { .. } => "UnsupportedVersion",
            NpyError::UnsupportedDtype(_) => "UnsupportedDtype",
            NpyError::MalformedHeader(_) => "MalformedHeader",
            NpyError::PayloadSizeMismatch { .. } => "PayloadSizeMismatch",
            NpyError::ElementCount { .. } => "ElementCount",
        }
    }
}

/// Element type of a [`ScanArray`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dtype {
    F32,
    F64,
    I32,
    I64,
    U8,
}

impl Dtype {
    pub const ALL: [Dtype; 5] = [Dtype::F32, Dtype::F64, Dtype::I32, Dtype::I64, Dtype::U8];

    /// The npy `descr` code written for this type.
    pub fn descr(self) -> &'static str {
        match self {
            Dtype::F32 => "<f4",
            Dtype::F64 => "<f8",
            Dtype::I32 => "<i4",
            Dtype::I64 => "<i8",
            Dtype::U8 => "|u1",
        }
    }

    pub fn from_descr(descr: &str) -> Result<Self, NpyError> {
        match descr {
            "<f4" => Ok(Dtype::F32),
            "<f8" => Ok(Dtype::F64),
            "<i4" => Ok(Dtype::I32),
            "<i8" => Ok(Dtype::I64),
            "|u1" => Ok(Dtype::U8),
            other => Err(NpyError::UnsupportedDtype(other.to_string())),
        }
    }

    /// Size of one element in bytes.
    pub fn width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32 | Dtype::I32 => 4,
            Dtype::F64 | Dtype::I64 => 8,
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::I32 => "i32",
            Dtype::I64 => "i64",
            Dtype::U8 => "u8",
        };
        f.write_str(name)
    }
}

/// Typed element buffer in row-major order.
///
/// Equality compares floats by bit pattern, so two buffers holding the same
/// NaN payloads are equal and `0.0 != -0.0`.
#[derive(Debug, Clone)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I32(Vec<i32>),
    I64(Vec<i64>),
    U8(Vec<u8>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::I32(_) => Dtype::I32,
            ArrayData::I64(_) => Dtype::I64,
            ArrayData::U8(_) => Dtype::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::I32(v) => v.len(),
            ArrayData::I64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::I64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U8(v) => out.extend_from_slice(v),
        }
    }

    fn read_le(dtype: Dtype, payload: &[u8]) -> Self {
        match dtype {
            Dtype::F32 => ArrayData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::F64 => ArrayData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::I32 => ArrayData::I32(
                payload
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::I64 => ArrayData::I64(
                payload
                    .chunks_exact(8)
                    .map(|c| i64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            ),
            Dtype::U8 => ArrayData::U8(payload.to_vec()),
        }
    }

    fn fortran_to_c(self, shape: &[usize]) -> Self {
        match self {
            ArrayData::F32(v) => ArrayData::F32(fortran_to_c(&v, shape)),
            ArrayData::F64(v) => ArrayData::F64(fortran_to_c(&v, shape)),
            ArrayData::I32(v) => ArrayData::I32(fortran_to_c(&v, shape)),
            ArrayData::I64(v) => ArrayData::I64(fortran_to_c(&v, shape)),
            ArrayData::U8(v) => ArrayData::U8(fortran_to_c(&v, shape)),
        }
    }
}

impl PartialEq for ArrayData {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (ArrayData::F32(a), ArrayData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (ArrayData::F64(a), ArrayData::F64(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (ArrayData::I32(a), ArrayData::I32(b)) => a == b,
            (ArrayData::I64(a), ArrayData::I64(b)) => a == b,
            (ArrayData::U8(a), ArrayData::U8(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for ArrayData {}

/// A dense n-dimensional array: element type, shape and a row-major buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScanArray {
    shape: Vec<usize>,
    data: ArrayData,
}

impl ScanArray {
    /// Builds an array, checking that `data` holds exactly `product(shape)`
    /// elements. An empty shape denotes a scalar holding one element.
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self, NpyError> {
        let expected = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        if expected != Some(data.len()) {
            return Err(NpyError::ElementCount {
                elements: data.len(),
                shape,
            });
        }
        Ok(ScanArray { shape, data })
    }

    /// Convenience constructor for a 2-D `f64` grid.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self, NpyError> {
        let width = rows.first().map_or(0, |r| r.len());
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(vec![rows.len(), width], ArrayData::F64(flat))
    }

    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &ArrayData {
        &self.data
    }

    pub fn into_data(self) -> ArrayData {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Parsed npy prelude.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyHeader {
    pub version: (u8, u8),
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
    /// Length of the header text, including padding and the final newline.
    pub header_len: u16,
}

impl NpyHeader {
    /// Offset of the first payload byte.
    pub fn prelude_len(&self) -> usize {
        FIXED_PRELUDE_LEN + self.header_len as usize
    }

    pub fn dtype(&self) -> Result<Dtype, NpyError> {
        Dtype::from_descr(&self.descr)
    }
}

/// Parses the magic string, version and header dictionary.
///
/// Spacing inside the dictionary and key order are free; each of `descr`,
/// `fortran_order` and `shape` must appear exactly once.
pub fn parse_header(bytes: &[u8]) -> Result<NpyHeader, NpyError> {
    let magic_len = bytes.len().min(MAGIC.len());
    if bytes[..magic_len] != MAGIC[..magic_len] {
        return Err(NpyError::BadMagic);
    }
    if bytes.len() < FIXED_PRELUDE_LEN {
        return Err(NpyError::MalformedHeader("truncated prelude".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(NpyError::UnsupportedVersion { major, minor });
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]);
    let end = FIXED_PRELUDE_LEN + header_len as usize;
    if bytes.len() < end {
        return Err(NpyError::MalformedHeader(format!(
            "header declares {header_len} bytes but only {} are present",
            bytes.len() - FIXED_PRELUDE_LEN
        )));
    }
    let text = std::str::from_utf8(&bytes[FIXED_PRELUDE_LEN..end])
        .ok()
        .filter(|t| t.is_ascii())
        .ok_or_else(|| NpyError::MalformedHeader("header text is not ASCII".into()))?;
    let dict = HeaderDict::parse(text)?;
    Dtype::from_descr(&dict.descr)?;
    Ok(NpyHeader {
        version: (major, minor),
        descr: dict.descr,
        fortran_order: dict.fortran_order,
        shape: dict.shape,
        header_len,
    })
}

/// Decodes a complete npy file into a row-major array.
pub fn decode_npy(bytes: &[u8]) -> Result<ScanArray, NpyError> {
    let header = parse_header(bytes)?;
    let dtype = header.dtype()?;
    let payload = &bytes[header.prelude_len()..];

    let expected = header
        .shape
        .iter()
        .try_fold(dtype.width() as u128, |acc, &d| acc.checked_mul(d as u128))
        .unwrap_or(u128::MAX);
    if expected > MAX_PAYLOAD_BYTES as u128 || expected != payload.len() as u128 {
        return Err(NpyError::PayloadSizeMismatch {
            expected,
            actual: payload.len(),
        });
    }

    let mut data = ArrayData::read_le(dtype, payload);
    if header.fortran_order && header.shape.len() > 1 {
        data = data.fortran_to_c(&header.shape);
    }
    ScanArray::new(header.shape, data)
}

/// Encodes an array in canonical npy 1.0 form.
pub fn encode_npy(arr: &ScanArray) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        arr.dtype().descr(),
        shape_repr(arr.shape())
    );
    // Pad with spaces so magic + version + length + text (incl. '\n') is 64-aligned.
    let unpadded = FIXED_PRELUDE_LEN + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    let header_len = dict.len() + pad + 1;

    let mut out = Vec::with_capacity(FIXED_PRELUDE_LEN + header_len + arr.len() * arr.dtype().width());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.resize(out.len() + pad, b' ');
    out.push(b'\n');
    arr.data.write_le(&mut out);
    out
}

fn shape_repr(shape: &[usize]) -> String {
    match shape {
        [] => "()".to_string(),
        [n] => format!("({n},)"),
        dims => {
            let parts: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
            format!("({})", parts.join(", "))
        }
    }
}

fn fortran_to_c<T: Copy>(src: &[T], shape: &[usize]) -> Vec<T> {
    let ndim = shape.len();
    let mut f_strides = vec![1usize; ndim];
    for axis in 1..ndim {
        f_strides[axis] = f_strides[axis - 1] * shape[axis - 1];
    }
    let mut out = Vec::with_capacity(src.len());
    if src.is_empty() {
        return out;
    }
    let mut index = vec![0usize; ndim];
    let mut offset = 0usize;
    loop {
        out.push(src[offset]);
        // Odometer increment, last axis fastest.
        let mut axis = ndim;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            index[axis] += 1;
            offset += f_strides[axis];
            if index[axis] < shape[axis] {
                break;
            }
            offset -= f_strides[axis] * index[axis];
            index[axis] = 0;
        }
    }
}

struct HeaderDict {
    descr: String,
    fortran_order: bool,
    shape: Vec<usize>,
}

impl HeaderDict {
    fn parse(text: &str) -> Result<Self, NpyError> {
        let mut p = DictParser { src: text.as_bytes(), pos: 0 };
        let mut descr = None;
        let mut fortran_order = None;
        let mut shape = None;

        p.skip_ws();
        p.expect(b'{')?;
        loop {
            p.skip_ws();
            if p.eat(b'}') {
                break;
            }
            let key = p.string()?;
            p.skip_ws();
            p.expect(b':')?;
            p.skip_ws();
            let duplicate = match key.as_str() {
                "descr" => descr.replace(p.string()?).is_some(),
                "fortran_order" => fortran_order.replace(p.boolean()?).is_some(),
                "shape" => shape.replace(p.tuple()?).is_some(),
                other => return Err(malformed(format!("unexpected key {other:?}"))),
            };
            if duplicate {
                return Err(malformed(format!("duplicate key {key:?}")));
            }
            p.skip_ws();
            if p.eat(b',') {
                continue;
            }
            p.skip_ws();
            p.expect(b'}')?;
            break;
        }
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(malformed("trailing characters after dictionary"));
        }
        Ok(HeaderDict {
            descr: descr.ok_or_else(|| malformed("missing 'descr'"))?,
            fortran_order: fortran_order.ok_or_else(|| malformed("missing 'fortran_order'"))?,
            shape: shape.ok_or_else(|| malformed("missing 'shape'"))?,
        })
    }
}

fn malformed(msg: impl Into<String>) -> NpyError {
    NpyError::MalformedHeader(msg.into())
}

struct DictParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl DictParser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), NpyError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(malformed(format!("expected '{}' at offset {}", c as char, self.pos)))
        }
    }

    fn string(&mut self) -> Result<String, NpyError> {
        let quote = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(malformed(format!("expected string at offset {}", self.pos))),
        };
        self.pos += 1;
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c == quote {
                let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.pos += 1;
                return Ok(s);
            }
            self.pos += 1;
        }
        Err(malformed("unterminated string"))
    }

    fn boolean(&mut self) -> Result<bool, NpyError> {
        let rest = &self.src[self.pos..];
        if rest.starts_with(b"True") {
            self.pos += 4;
            Ok(true)
        } else if rest.starts_with(b"False") {
            self.pos += 5;
            Ok(false)
        } else {
            Err(malformed(format!("expected True or False at offset {}", self.pos)))
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>, NpyError> {
        self.expect(b'(')?;
        let mut dims = Vec::new();
        loop {
            self.skip_ws();
            if self.eat(b')') {
                return Ok(dims);
            }
            dims.push(self.integer()?);
            self.skip_ws();
            if self.eat(b',') {
                continue;
            }
            self.skip_ws();
            self.expect(b')')?;
            return Ok(dims);
        }
    }

    fn integer(&mut self) -> Result<usize, NpyError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(malformed(format!("expected integer at offset {}", self.pos)));
        }
        // Python 2 era writers may suffix long integers with 'L'.
        let digits = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        self.eat(b'L');
        digits
            .parse()
            .map_err(|_| malformed(format!("shape extent {digits} out of range")))
    }
}
