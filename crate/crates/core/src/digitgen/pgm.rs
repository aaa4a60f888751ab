//! Binary greymap (P5) files with maxval 255.

use std::fs;
use std::path::Path;

use crate::datasets::quantize;
use crate::error::{Error, Result};
use crate::math::Tensor;

/// Header plus `W · H` row-major bytes.
pub fn encode_pgm_bytes(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn encode_pgm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (h, w) = image.dims2()?;
    image.ensure_finite("image")?;
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    Ok(encode_pgm_bytes(w, h, &bytes))
}

pub fn write_pgm(image: &Tensor<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(image)?).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Decoded greymap: `(width, height, pixels)` with pixels rescaled to maxval 255.
pub fn decode_pgm(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |reason: &str| Error::format(path, reason);
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a binary PGM (expected P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in fields.iter_mut() {
        // whitespace and comments before each header field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("malformed header"));
        }
        *f = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header value out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("malformed header"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 {
        return Err(bad("zero image dimension"));
    }
    if !(1..=255).contains(&maxval) {
        return Err(bad("only 8-bit greymaps are supported"));
    }
    let n = w.checked_mul(h).ok_or_else(|| bad("image dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(bad(&format!("short payload: {} of {n} bytes", payload.len())));
    }
    let pixels = if maxval == 255 {
        payload[..n].to_vec()
    } else {
        payload[..n].iter().map(|&b| ((b.min(maxval as u8) as f32 / maxval as f32) * 255.0).round() as u8).collect()
    };
    Ok((w, h, pixels))
}

pub fn read_pgm_bytes(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_pgm(&bytes, path)
}

/// `[H, W]` image in `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let (w, h, px) = read_pgm_bytes(path)?;
    Tensor::new(&[h, w], px.into_iter().map(|b| b as f32 / 255.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_pixel_encoding() {
        let img = Tensor::new(&[1, 2], vec![0.0, 1.0]).unwrap();
        assert_eq!(encode_pgm(&img).unwrap(), b"P5\n2 1\n255\n\x00\xff");
    }

    #[test]
    fn ascii_variant_and_short_payload_are_rejected() {
        let p = Path::new("x.pgm");
        assert!(matches!(decode_pgm(b"P2\n2 1\n255\n0 255", p), Err(Error::Format { .. })));
        assert!(matches!(decode_pgm(b"P5\n2 2\n255\n\x00", p), Err(Error::Format { .. })));
        assert!(matches!(decode_pgm(b"P5\n2 x\n255\n\x00\x00", p), Err(Error::Format { .. })));
        assert!(matches!(decode_pgm(b"P5\n2 1\n65535\n\x00\x00\x00\x00", p), Err(Error::Format { .. })));
    }

    #[test]
    fn comments_in_header_are_skipped() {
        let (w, h, px) = decode_pgm(b"P5\n# made by hand\n2 1\n255\n\x07\x08", Path::new("c.pgm")).unwrap();
        assert_eq!((w, h, px), (2, 1, vec![7, 8]));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_pgm("/nonexistent/a.pgm"), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn roundtrip_within_quantization(w in 1usize..9, h in 1usize..9, seed in 0u64..1000) {
            let data: Vec<f32> = (0..w * h).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f32 / 999.0).collect();
            let img = Tensor::new(&[h, w], data).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("a.pgm");
            write_pgm(&img, &path).unwrap();
            let back = read_pgm(&path).unwrap();
            prop_assert_eq!(back.shape(), img.shape());
            prop_assert!(back.max_abs_diff(&img) <= 0.5 / 255.0 + 1e-6);
        }
    }
}
