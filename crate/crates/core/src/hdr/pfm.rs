//! Portable float map (`PF`, three-channel) codec. Rows are stored bottom to
//! top; a negative scale marks little-endian payloads.

use crate::error::{Error, Result};
use crate::image::Image;

pub fn encode_pfm(image: &Image) -> Vec<u8> {
    let (w, h) = image.dims();
    let mut out = format!("PF\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 12);
    for row in (0..h).rev() {
        for col in 0..w {
            for c in image.get(row, col) {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

fn token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format(start, "truncated header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let magic = token(bytes, &mut pos)?;
    match magic.as_str() {
        "PF" => {}
        "Pf" => return Err(Error::format(0, "grayscale PFM is not supported")),
        other => return Err(Error::format(0, format!("bad magic {other:?}"))),
    }
    let dims_at = pos;
    let w: usize = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::format(dims_at, "bad width"))?;
    let h: usize = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::format(dims_at, "bad height"))?;
    let scale_at = pos;
    let scale: f64 = token(bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::format(scale_at, "bad scale"))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::format(scale_at, "scale must be finite and nonzero"));
    }
    if w == 0 || h == 0 {
        return Err(Error::format(dims_at, "zero-sized image"));
    }
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let little = scale < 0.0;
    let expected = w * h * 12;
    let payload = bytes.get(pos..).unwrap_or(&[]);
    if payload.len() != expected {
        return Err(Error::format(
            pos,
            format!("payload has {} bytes, expected {expected}", payload.len()),
        ));
    }
    let mut pixels = vec![[0f32; 3]; w * h];
    for (i, chunk) in payload.chunks_exact(12).enumerate() {
        let file_row = i / w;
        let col = i % w;
        let row = h - 1 - file_row;
        let mut px = [0f32; 3];
        for (c, b) in chunk.chunks_exact(4).enumerate() {
            let raw = [b[0], b[1], b[2], b[3]];
            let v = if little {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            if !v.is_finite() {
                return Err(Error::format(pos + i * 12 + c * 4, "non-finite sample"));
            }
            px[c] = v;
        }
        pixels[row * w + col] = px;
    }
    Image::new(w, h, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_round_trip() {
        let img = Image::new(1, 1, vec![[0.5, 0.25, 0.125]]).unwrap();
        let bytes = encode_pfm(&img);
        assert_eq!(&bytes[..11], b"PF\n1 1\n-1.0");
        assert_eq!(decode_pfm(&bytes).unwrap(), img);
    }

    #[test]
    fn rows_are_stored_bottom_to_top() {
        // 1x2 image: top = 1.0, bottom = 2.0, little endian
        let mut bytes = b"PF\n1 2\n-1.0\n".to_vec();
        for v in [2.0f32, 2.0, 2.0, 1.0, 1.0, 1.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let img = decode_pfm(&bytes).unwrap();
        assert_eq!(img.get(0, 0), [1.0; 3]);
        assert_eq!(img.get(1, 0), [2.0; 3]);
        assert_eq!(encode_pfm(&img), bytes);
    }

    #[test]
    fn big_endian_payloads_decode() {
        let mut bytes = b"PF\n1 1\n1.0\n".to_vec();
        for v in [3.0f32, 4.0, 5.0] {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        assert_eq!(decode_pfm(&bytes).unwrap().get(0, 0), [3.0, 4.0, 5.0]);
    }

    #[test]
    fn rejects_grayscale_nan_and_size_mismatch() {
        let mut gray = b"Pf\n1 1\n-1.0\n".to_vec();
        gray.extend_from_slice(&1f32.to_le_bytes());
        assert!(decode_pfm(&gray).unwrap_err().to_string().contains("grayscale"));

        let mut nan = b"PF\n1 1\n-1.0\n".to_vec();
        for v in [f32::NAN, 0.0, 0.0] {
            nan.extend_from_slice(&v.to_le_bytes());
        }
        assert!(decode_pfm(&nan).is_err());

        let img = Image::new(2, 2, vec![[1.0; 3]; 4]).unwrap();
        let mut bytes = encode_pfm(&img);
        bytes.pop();
        assert!(decode_pfm(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            (w, h, data) in (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
                (Just(w), Just(h), prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), w * h * 3))
            })
        ) {
            let img = Image::from_flat(w, h, &data).unwrap();
            let back = decode_pfm(&encode_pfm(&img)).unwrap();
            let a: Vec<u32> = img.to_flat().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.to_flat().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
