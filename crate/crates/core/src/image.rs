//! 8-bit binary PGM (`P5`) and PPM (`P6`) export.

use std::fs;
use std::path::Path;

use crate::{Error, MappedImage, Result};

/// Quantize an intensity in [0,1] to 8 bits.
pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Encode a 1-channel image as PGM or a 3-channel image as PPM. Images with
/// other channel counts export their first channel as PGM.
pub fn encode_netpbm(img: &MappedImage) -> Vec<u8> {
    let (h, w, c) = (img.height, img.width, img.channels);
    let rgb = c == 3;
    let mut out = format!("{}\n{} {}\n255\n", if rgb { "P6" } else { "P5" }, w, h).into_bytes();
    for px in img.data.chunks(c) {
        if rgb {
            out.extend(px.iter().map(|&v| to_u8(v)));
        } else {
            out.push(to_u8(px[0]));
        }
    }
    out
}

pub fn write_netpbm(path: impl AsRef<Path>, img: &MappedImage) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_netpbm(img)).map_err(|e| Error::io(path, e))
}

/// Decode a binary PGM/PPM produced by [`encode_netpbm`] into
/// `(width, height, channels, pixels)`.
pub fn decode_netpbm(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(1, "truncated netpbm header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(Error::parse(1, format!("unsupported magic {m}"))),
    };
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse(1, format!("bad header field {s}")))
    };
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let body = bytes.get(pos..).unwrap_or_default().to_vec();
    if body.len() != w * h * channels {
        return Err(Error::parse(1, "pixel data length mismatch"));
    }
    Ok((w, h, channels, body))
}
