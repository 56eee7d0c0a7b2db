use crate::error::{Error, Result};
use crate::image::{Image, LdrImage};

/// `c' = clamp(c·2^stops, 0, 1)^(1/γ)`, quantized to 8 bits.
pub fn tonemap_preview(image: &Image, exposure_stops: f64, gamma: f64) -> Result<LdrImage> {
    if !(gamma.is_finite() && gamma > 0.0) || !exposure_stops.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "exposure {exposure_stops} / gamma {gamma}"
        )));
    }
    let gain = 2f64.powf(exposure_stops);
    let rgb = image
        .pixels()
        .iter()
        .flatten()
        .map(|&c| {
            let v = (c as f64 * gain).clamp(0.0, 1.0).powf(1.0 / gamma);
            (v * 255.0).round() as u8
        })
        .collect();
    Ok(LdrImage {
        width: image.width(),
        height: image.height(),
        rgb,
    })
}

pub fn encode_png(image: &LdrImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, image.width as u32, image.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::InvalidArgument(format!("png header: {e}")))?;
        writer
            .write_image_data(&image.rgb)
            .map_err(|e| Error::InvalidArgument(format!("png data: {e}")))?;
    }
    Ok(out)
}
