//! Binary PPM (`P6`, maxval 255).

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{Image, Rgb8Image};

pub fn encode_ppm(img: &Rgb8Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&[u8]> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::format(start, "unexpected end of PPM header"));
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        let offset = self.pos;
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(offset, format!("invalid PPM {what}")))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Rgb8Image> {
    let mut h = Header { bytes, pos: 0 };
    if h.token()? != b"P6" {
        return Err(Error::format(0, "not a binary PPM (expected P6)"));
    }
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if h.pos >= bytes.len() || !bytes[h.pos].is_ascii_whitespace() {
        return Err(Error::format(h.pos, "missing whitespace after PPM header"));
    }
    let start = h.pos + 1;
    let expected = width * height * 3;
    let data = &bytes[start..];
    if data.len() != expected {
        return Err(Error::format(
            start + data.len().min(expected),
            format!("PPM raster holds {} bytes, expected {expected}", data.len()),
        ));
    }
    Ok(Rgb8Image {
        width,
        height,
        data: data.to_vec(),
    })
}

pub fn write_ppm(path: &Path, img: &Rgb8Image) -> Result<()> {
    std::fs::write(path, encode_ppm(img)).map_err(|e| Error::io(path, e))
}

pub fn read_ppm(path: &Path) -> Result<Rgb8Image> {
    decode_ppm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    write_ppm(path, &img.to_rgb8())
}

pub fn read_image(path: &Path) -> Result<Image> {
    Ok(read_ppm(path)?.to_linear())
}
