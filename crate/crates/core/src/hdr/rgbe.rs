//! Radiance RGBE (`.hdr`) codec with new-style run-length scanlines.

use crate::error::{Error, Result};
use crate::image::RadianceMap;

const MIN_RLE_WIDTH: usize = 8;
const MAX_RLE_WIDTH: usize = 0x7fff;

/// Decodes one RGBE quad: `(m + 0.5)/256 · 2^(e − 128)`, zero exponent is black.
pub(crate) fn quad_to_rgb(q: [u8; 4]) -> [f32; 3] {
    if q[3] == 0 {
        return [0.0; 3];
    }
    let scale = 2f64.powi(q[3] as i32 - 128) / 256.0;
    [
        ((q[0] as f64 + 0.5) * scale) as f32,
        ((q[1] as f64 + 0.5) * scale) as f32,
        ((q[2] as f64 + 0.5) * scale) as f32,
    ]
}

pub(crate) fn rgb_to_quad(rgb: [f32; 3]) -> Result<[u8; 4]> {
    if rgb.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite(format!("pixel {rgb:?}")));
    }
    let m = rgb.iter().fold(0.0f32, |a, &b| a.max(b)) as f64;
    if m < 1e-38 {
        return Ok([0; 4]);
    }
    // m = f·2^k with f in [0.5, 1)
    let k = frexp_exponent(m);
    if k > 127 {
        return Err(Error::InvalidArgument(format!(
            "pixel max {m} exceeds the RGBE range"
        )));
    }
    let scale = 256.0 / 2f64.powi(k);
    let mantissa = |v: f32| ((v.max(0.0) as f64 * scale).floor()).clamp(0.0, 255.0) as u8;
    Ok([
        mantissa(rgb[0]),
        mantissa(rgb[1]),
        mantissa(rgb[2]),
        (k + 128) as u8,
    ])
}

/// Exponent `k` with `x = f·2^k`, `f ∈ [0.5, 1)`, for positive normal `x`.
fn frexp_exponent(x: f64) -> i32 {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    debug_assert!(biased != 0 && biased != 0x7ff);
    biased - 1022
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn line(&mut self) -> Result<&'a str> {
        let start = self.pos;
        let rest = &self.bytes[start..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(start, "unterminated header line"))?;
        self.pos = start + end + 1;
        std::str::from_utf8(&rest[..end])
            .map(|s| s.trim_end_matches('\r'))
            .map_err(|_| Error::format(start, "header line is not valid text"))
    }

    fn byte(&mut self) -> Result<u8> {
        let b = *self
            .bytes
            .get(self.pos)
            .ok_or_else(|| Error::format(self.pos, "truncated scanline"))?;
        self.pos += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.pos, "truncated scanline"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

pub fn decode_rgbe(bytes: &[u8]) -> Result<RadianceMap> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.line()?;
    if magic != "#?RADIANCE" && magic != "#?RGBE" {
        return Err(Error::format(0, format!("bad magic line {magic:?}")));
    }
    let mut have_format = false;
    loop {
        let at = cur.pos;
        let line = cur.line()?;
        if line.is_empty() {
            break;
        }
        if let Some(fmt) = line.strip_prefix("FORMAT=") {
            if fmt != "32-bit_rle_rgbe" {
                return Err(Error::format(at, format!("unsupported format {fmt:?}")));
            }
            have_format = true;
        }
    }
    if !have_format {
        return Err(Error::format(cur.pos, "header lacks FORMAT=32-bit_rle_rgbe"));
    }
    let res_at = cur.pos;
    let res = cur.line()?;
    let fields: Vec<&str> = res.split_whitespace().collect();
    let (height, width) = match fields.as_slice() {
        ["-Y", h, "+X", w] => {
            let parse = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::format(res_at, format!("bad resolution line {res:?}")))
            };
            (parse(h)?, parse(w)?)
        }
        [a, _, b, _] if matches!(*a, "-Y" | "+Y" | "-X" | "+X") && matches!(*b, "-Y" | "+Y" | "-X" | "+X") => {
            return Err(Error::format(res_at, format!("unsupported orientation {res:?}")))
        }
        _ => return Err(Error::format(res_at, format!("bad resolution line {res:?}"))),
    };
    if width == 0 || height == 0 {
        return Err(Error::format(res_at, "zero-sized image"));
    }

    let mut pixels = Vec::with_capacity(width * height);
    let mut line = vec![[0u8; 4]; width];
    for _ in 0..height {
        read_scanline(&mut cur, &mut line)?;
        pixels.extend(line.iter().map(|&q| quad_to_rgb(q)));
    }
    RadianceMap::new(width, height, pixels)
}

fn read_scanline(cur: &mut Cursor<'_>, line: &mut [[u8; 4]]) -> Result<()> {
    let width = line.len();
    let start = cur.pos;
    let is_rle = (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&width)
        && cur.bytes.len() >= start + 4
        && cur.bytes[start] == 2
        && cur.bytes[start + 1] == 2
        && cur.bytes[start + 2] & 0x80 == 0;
    if !is_rle {
        let raw = cur.take(width * 4)?;
        for (px, q) in line.iter_mut().zip(raw.chunks_exact(4)) {
            *px = [q[0], q[1], q[2], q[3]];
        }
        return Ok(());
    }
    let header = cur.take(4)?;
    let encoded_width = ((header[2] as usize) << 8) | header[3] as usize;
    if encoded_width != width {
        return Err(Error::format(
            start,
            format!("scanline width {encoded_width} does not match image width {width}"),
        ));
    }
    for channel in 0..4 {
        let mut x = 0;
        while x < width {
            let at = cur.pos;
            let code = cur.byte()? as usize;
            if code > 128 {
                let run = code - 128;
                if x + run > width {
                    return Err(Error::format(at, "run-length overflow"));
                }
                let value = cur.byte()?;
                for px in &mut line[x..x + run] {
                    px[channel] = value;
                }
                x += run;
            } else {
                if code == 0 || x + code > width {
                    return Err(Error::format(at, "run-length overflow"));
                }
                let literal = cur.take(code)?;
                for (px, &v) in line[x..x + code].iter_mut().zip(literal) {
                    px[channel] = v;
                }
                x += code;
            }
        }
    }
    Ok(())
}

/// Encodes with new-style RLE scanlines for widths in `8..=32767`, flat otherwise.
pub fn encode_rgbe(map: &RadianceMap) -> Result<Vec<u8>> {
    let (w, h) = map.dims();
    let mut out = Vec::with_capacity(w * h * 4 + 64);
    out.extend_from_slice(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n");
    out.extend_from_slice(format!("-Y {h} +X {w}\n").as_bytes());
    let rle = (MIN_RLE_WIDTH..=MAX_RLE_WIDTH).contains(&w);
    let mut quads = Vec::with_capacity(w);
    let mut channel = Vec::with_capacity(w);
    for row in 0..h {
        quads.clear();
        for col in 0..w {
            quads.push(rgb_to_quad(map.get(row, col))?);
        }
        if !rle {
            for q in &quads {
                out.extend_from_slice(q);
            }
            continue;
        }
        out.extend_from_slice(&[2, 2, (w >> 8) as u8, (w & 0xff) as u8]);
        for c in 0..4 {
            channel.clear();
            channel.extend(quads.iter().map(|q| q[c]));
            encode_rle_channel(&channel, &mut out);
        }
    }
    Ok(out)
}

fn encode_rle_channel(data: &[u8], out: &mut Vec<u8>) {
    const MIN_RUN: usize = 3;
    let mut i = 0;
    while i < data.len() {
        // Find the next run of at least MIN_RUN identical bytes.
        let mut run_start = i;
        let mut run_len = 0;
        while run_start < data.len() {
            run_len = 1;
            while run_start + run_len < data.len()
                && run_len < 127
                && data[run_start + run_len] == data[run_start]
            {
                run_len += 1;
            }
            if run_len >= MIN_RUN {
                break;
            }
            run_start += run_len;
        }
        if run_len < MIN_RUN {
            run_start = data.len();
        }
        // Literal segment before the run.
        while i < run_start {
            let n = (run_start - i).min(128);
            out.push(n as u8);
            out.extend_from_slice(&data[i..i + n]);
            i += n;
        }
        if run_start < data.len() {
            out.push((128 + run_len) as u8);
            out.push(data[run_start]);
            i = run_start + run_len;
        }
    }
}
