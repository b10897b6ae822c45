use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::GrayImage;

use super::{decode, encode, PerceptionError, VaeWeights};
use crate::simworld::Observation;

/// Seven evenly spaced values in [-3, 3].
pub const DEFAULT_TRAVERSAL: [f64; 7] = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];

/// Decode the code of `obs` with coordinate `dim` swept through `values`.
pub fn traverse(
    w: &VaeWeights,
    obs: &Observation,
    dim: usize,
    values: &[f64],
) -> Result<Vec<Observation>, PerceptionError> {
    let k = w.latent_dim();
    if dim >= k {
        return Err(PerceptionError::Index { index: dim, k });
    }
    let mu = encode(w, obs);
    Ok(values
        .iter()
        .map(|&v| {
            let mut z = mu.clone();
            z[dim] = v;
            decode(w, &z)
        })
        .collect())
}

/// Write images side by side as one 8-bit greyscale PGM.
pub fn write_pgm_strip(path: &Path, images: &[Observation]) -> Result<(), PerceptionError> {
    let side = images.first().map_or(0, |o| o.side) as u32;
    let mut img = GrayImage::new(side * images.len() as u32, side);
    for (i, obs) in images.iter().enumerate() {
        for (idx, &p) in obs.pixels.iter().enumerate() {
            let (row, col) = ((idx as u32) / side, (idx as u32) % side);
            img.put_pixel(i as u32 * side + col, row, image::Luma([(p.clamp(0.0, 1.0) * 255.0).round() as u8]));
        }
    }
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let encoder = PnmEncoder::new(file).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
    img.write_with_encoder(encoder).map_err(|e| PerceptionError::Image(e.to_string()))
}
