//! Binary PPM/PGM codecs (P6 and P5, 8- or 16-bit samples).

use std::path::Path;

use crate::error::{Error, Result};

/// A decoded netpbm raster. Samples are interleaved, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize, maxval: u16, samples: Vec<u16>) -> Result<Self> {
        if !matches!(channels, 1 | 3) {
            return Err(Error::Data(format!("netpbm supports 1 or 3 channels, got {channels}")));
        }
        if maxval == 0 {
            return Err(Error::Data("netpbm maxval must be positive".into()));
        }
        if samples.len() != width * height * channels {
            return Err(Error::Data(format!(
                "raster of {width}x{height}x{channels} needs {} samples, got {}",
                width * height * channels,
                samples.len()
            )));
        }
        if let Some(&s) = samples.iter().find(|&&s| s > maxval) {
            return Err(Error::Data(format!("sample {s} exceeds maxval {maxval}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            maxval,
            samples,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out = format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            out.extend(self.samples.iter().flat_map(|s| s.to_be_bytes()));
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = Header { bytes, pos: 0 };
        let magic = cursor.token()?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => return Err(Error::Data(format!("unsupported netpbm magic {other:?}"))),
        };
        let width = cursor.number()?;
        let height = cursor.number()?;
        let maxval = cursor.number()?;
        if maxval == 0 || maxval > 65535 {
            return Err(Error::Data(format!("invalid netpbm maxval {maxval}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::Data(format!("empty netpbm raster {width}x{height}")));
        }
        // Exactly one whitespace byte separates the header from the raster.
        let start = cursor.pos + 1;
        let count = width * height * channels;
        let wide = maxval > 255;
        let needed = count * if wide { 2 } else { 1 };
        let body = bytes.get(start..).unwrap_or_default();
        if body.len() < needed {
            return Err(Error::Data(format!(
                "netpbm raster truncated: {} of {needed} bytes",
                body.len()
            )));
        }
        let samples = if wide {
            body[..needed].chunks_exact(2).map(|b| u16::from_be_bytes([b[0], b[1]])).collect()
        } else {
            body[..needed].iter().map(|&b| b as u16).collect()
        };
        Self::new(width, height, channels, maxval as u16, samples)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::decode(&bytes).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Result<String> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while !matches!(self.bytes.get(self.pos), Some(b'\n') | None) {
                        self.pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::Data("netpbm header truncated".into())),
            }
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        t.parse().map_err(|_| Error::Data(format!("bad netpbm header field {t:?}")))
    }
}
