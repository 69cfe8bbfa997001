//! Little-endian record codec shared by the run-file format and the wire
//! protocol: strings are a `u16` byte length followed by UTF-8.

use std::io::{self, Read, Seek, SeekFrom, Write};

use crate::dataset::{AttrValue, Attribute, DataError, DetectorGeometry, Spectrum, XScale, XUnits};

/// Decode failure with the byte offset at which it was detected.
#[derive(Debug)]
pub enum DecodeError {
    /// Input ended before `needed` more bytes could be read.
    Truncated {
        offset: u64,
        needed: u64,
    },
    Invalid {
        offset: u64,
        reason: String,
    },
    Io(io::Error),
}

impl DecodeError {
    fn invalid(offset: u64, reason: impl Into<String>) -> DecodeError {
        DecodeError::Invalid {
            offset,
            reason: reason.into(),
        }
    }
}

pub type DecodeResult<T> = Result<T, DecodeError>;

const CHUNK: usize = 1 << 16;

/// Position-tracking reader.
pub struct Decoder<R> {
    inner: R,
    pos: u64,
}

impl<R: Read> Decoder<R> {
    pub fn new(inner: R, start: u64) -> Decoder<R> {
        Decoder { inner, pos: start }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn bytes(&mut self, n: usize) -> DecodeResult<Vec<u8>> {
        // Grow with the data actually present so a corrupt length cannot
        // force a huge allocation.
        let mut out = Vec::with_capacity(n.min(CHUNK));
        let mut left = n;
        let mut buf = [0u8; 4096];
        while left > 0 {
            let want = left.min(buf.len());
            self.fill(&mut buf[..want], (left) as u64)?;
            out.extend_from_slice(&buf[..want]);
            left -= want;
        }
        Ok(out)
    }

    fn fill(&mut self, buf: &mut [u8], needed: u64) -> DecodeResult<()> {
        let mut done = 0;
        while done < buf.len() {
            match self.inner.read(&mut buf[done..]) {
                Ok(0) => {
                    return Err(DecodeError::Truncated {
                        offset: self.pos,
                        needed: needed - done as u64,
                    })
                }
                Ok(n) => {
                    done += n;
                    self.pos += n as u64;
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(DecodeError::Io(e)),
            }
        }
        Ok(())
    }

    fn array<const N: usize>(&mut self) -> DecodeResult<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, N as u64)?;
        Ok(b)
    }

    pub fn u8(&mut self) -> DecodeResult<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> DecodeResult<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> DecodeResult<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> DecodeResult<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn i64(&mut self) -> DecodeResult<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> DecodeResult<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn string(&mut self) -> DecodeResult<String> {
        let at = self.pos;
        let n = self.u16()? as usize;
        let bytes = self.bytes(n)?;
        String::from_utf8(bytes).map_err(|_| DecodeError::invalid(at, "string is not UTF-8"))
    }

    pub fn f32_vec(&mut self, n: usize) -> DecodeResult<Vec<f32>> {
        let mut out = Vec::with_capacity(n.min(CHUNK));
        let mut buf = vec![0u8; 4 * n.min(CHUNK)];
        let mut left = n;
        while left > 0 {
            let k = left.min(CHUNK);
            self.fill(&mut buf[..4 * k], 4 * left as u64)?;
            out.extend(
                buf[..4 * k]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])),
            );
            left -= k;
        }
        Ok(out)
    }

    pub fn f64_vec(&mut self, n: usize) -> DecodeResult<Vec<f64>> {
        let mut out = Vec::with_capacity(n.min(CHUNK));
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }

    pub fn units(&mut self) -> DecodeResult<XUnits> {
        let at = self.pos;
        let code = self.u8()?;
        XUnits::from_code(code)
            .ok_or_else(|| DecodeError::invalid(at, format!("unknown x-units code {code}")))
    }

    pub fn xscale(&mut self) -> DecodeResult<XScale> {
        let at = self.pos;
        let scale = match self.u8()? {
            0 => {
                let start = self.f64()?;
                let end = self.f64()?;
                let nbins = self.u32()?;
                XScale::uniform(start, end, nbins)
            }
            1 => {
                let n = self.u32()? as usize;
                XScale::explicit(self.f64_vec(n)?)
            }
            k => {
                return Err(DecodeError::invalid(
                    at,
                    format!("unknown x-scale kind {k}"),
                ))
            }
        };
        scale.map_err(|e| DecodeError::invalid(at, e.to_string()))
    }

    pub fn attribute(&mut self) -> DecodeResult<Attribute> {
        let at = self.pos;
        let name = self.string()?;
        let value = match self.u8()? {
            0 => AttrValue::F64(self.f64()?),
            1 => AttrValue::I64(self.i64()?),
            2 => AttrValue::Str(self.string()?),
            3 => AttrValue::Triple([self.f64()?, self.f64()?, self.f64()?]),
            t => {
                return Err(DecodeError::invalid(
                    at,
                    format!("unknown attribute tag {t}"),
                ))
            }
        };
        Attribute::new(name, value).map_err(|e| DecodeError::invalid(at, e.to_string()))
    }

    /// Spectrum metadata up to (not including) the count payload.
    pub fn spectrum_header(&mut self) -> DecodeResult<SpectrumHeader> {
        let id = self.u32()?;
        let group_id = self.u32()?;
        let label = self.string()?;
        let at = self.pos;
        let geometry = match self.u8()? {
            0 => None,
            1 => {
                let p = [self.f64()?, self.f64()?, self.f64()?];
                let (l1, sa, eff) = (self.f64()?, self.f64()?, self.f64()?);
                Some(
                    DetectorGeometry::new(p, l1, sa, eff)
                        .map_err(|e| DecodeError::invalid(at, e.to_string()))?,
                )
            }
            f => return Err(DecodeError::invalid(at, format!("bad geometry flag {f}"))),
        };
        let n_attrs = self.u16()?;
        let attributes = (0..n_attrs)
            .map(|_| self.attribute())
            .collect::<DecodeResult<Vec<_>>>()?;
        Ok(SpectrumHeader {
            id,
            group_id,
            label,
            geometry,
            attributes,
        })
    }
}

impl<R: Read + Seek> Decoder<R> {
    /// Moves forward without reading.
    pub fn skip(&mut self, n: u64) -> DecodeResult<()> {
        self.inner
            .seek(SeekFrom::Current(n as i64))
            .map_err(DecodeError::Io)?;
        self.pos += n;
        Ok(())
    }

    pub fn seek_to(&mut self, offset: u64) -> DecodeResult<()> {
        self.inner
            .seek(SeekFrom::Start(offset))
            .map_err(DecodeError::Io)?;
        self.pos = offset;
        Ok(())
    }
}

pub struct SpectrumHeader {
    pub id: u32,
    pub group_id: u32,
    pub label: String,
    pub geometry: Option<DetectorGeometry>,
    pub attributes: Vec<Attribute>,
}

impl SpectrumHeader {
    pub fn into_spectrum(
        self,
        xscale: XScale,
        counts: Vec<f32>,
        errors: Vec<f32>,
    ) -> Result<Spectrum, DataError> {
        Ok(Spectrum::new(self.id, xscale, counts, Some(errors))?
            .with_group_id(self.group_id)
            .with_label(self.label)
            .with_geometry(self.geometry)
            .with_attributes(self.attributes))
    }
}

/// Little-endian writer helpers over any [`Write`].
pub trait EncodeExt: Write {
    fn put_u8(&mut self, v: u8) -> io::Result<()> {
        self.write_all(&[v])
    }
    fn put_u16(&mut self, v: u16) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_u32(&mut self, v: u32) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_u64(&mut self, v: u64) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_i64(&mut self, v: i64) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_f64(&mut self, v: f64) -> io::Result<()> {
        self.write_all(&v.to_le_bytes())
    }
    fn put_str(&mut self, s: &str) -> io::Result<()> {
        let n = u16::try_from(s.len()).map_err(|_| {
            io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("string of {} bytes exceeds 65535", s.len()),
            )
        })?;
        self.put_u16(n)?;
        self.write_all(s.as_bytes())
    }
    fn put_f32s(&mut self, v: &[f32]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(4 * v.len().min(CHUNK));
        for chunk in v.chunks(CHUNK) {
            buf.clear();
            for x in chunk {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            self.write_all(&buf)?;
        }
        Ok(())
    }
    fn put_xscale(&mut self, s: &XScale) -> io::Result<()> {
        match s {
            XScale::Uniform { start, end, nbins } => {
                self.put_u8(0)?;
                self.put_f64(*start)?;
                self.put_f64(*end)?;
                self.put_u32(*nbins)
            }
            XScale::Explicit { edges } => {
                self.put_u8(1)?;
                self.put_u32(edges.len() as u32)?;
                for e in edges {
                    self.put_f64(*e)?;
                }
                Ok(())
            }
        }
    }
    fn put_attribute(&mut self, a: &Attribute) -> io::Result<()> {
        self.put_str(a.name())?;
        match a.value() {
            AttrValue::F64(v) => {
                self.put_u8(0)?;
                self.put_f64(*v)
            }
            AttrValue::I64(v) => {
                self.put_u8(1)?;
                self.put_i64(*v)
            }
            AttrValue::Str(s) => {
                self.put_u8(2)?;
                self.put_str(s)
            }
            AttrValue::Triple(t) => {
                self.put_u8(3)?;
                t.iter().try_for_each(|v| self.put_f64(*v))
            }
        }
    }
    /// Spectrum record: metadata, then counts and errors.
    fn put_spectrum(&mut self, s: &Spectrum) -> io::Result<()> {
        self.put_u32(s.id())?;
        self.put_u32(s.group_id())?;
        self.put_str(s.label())?;
        match s.geometry() {
            None => self.put_u8(0)?,
            Some(g) => {
                self.put_u8(1)?;
                for v in g.position() {
                    self.put_f64(v)?;
                }
                self.put_f64(g.initial_path())?;
                self.put_f64(g.solid_angle())?;
                self.put_f64(g.efficiency())?;
            }
        }
        let n = u16::try_from(s.attributes().len()).map_err(|_| {
            io::Error::new(io::ErrorKind::InvalidInput, "more than 65535 attributes")
        })?;
        self.put_u16(n)?;
        for a in s.attributes() {
            self.put_attribute(a)?;
        }
        self.put_f32s(s.counts())?;
        self.put_f32s(s.errors())
    }
}

impl<W: Write + ?Sized> EncodeExt for W {}

pub fn str_len(s: &str) -> u64 {
    2 + s.len() as u64
}

pub fn xscale_len(s: &XScale) -> u64 {
    match s {
        XScale::Uniform { .. } => 1 + 8 + 8 + 4,
        XScale::Explicit { edges } => 1 + 4 + 8 * edges.len() as u64,
    }
}

pub fn attribute_len(a: &Attribute) -> u64 {
    str_len(a.name())
        + 1
        + match a.value() {
            AttrValue::F64(_) | AttrValue::I64(_) => 8,
            AttrValue::Str(s) => str_len(s),
            AttrValue::Triple(_) => 24,
        }
}

/// Encoded size of the spectrum metadata preceding the payload.
pub fn spectrum_header_len(s: &Spectrum) -> u64 {
    4 + 4
        + str_len(s.label())
        + 1
        + if s.geometry().is_some() { 48 } else { 0 }
        + 2
        + s.attributes().iter().map(attribute_len).sum::<u64>()
}

pub fn spectrum_len(s: &Spectrum) -> u64 {
    spectrum_header_len(s) + 8 * s.nbins() as u64
}
