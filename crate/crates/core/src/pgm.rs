//! Binary PGM (P5) sample grids.

use crate::error::{Error, Result};
use crate::federated::GRID_SIDE;
use crate::gan::IMAGE_SIDE;
use crate::tensor::Tensor;

/// Encodes up to 64 images `[n, 1, 28, 28]` as an `8×8` tile grid, filled
/// row-major; missing tiles are black. Pixels map to `round(v · 255)`.
pub fn grid_pgm(images: &Tensor) -> Result<Vec<u8>> {
    let s = images.shape();
    let tiles = GRID_SIDE * GRID_SIDE;
    if s.len() != 4 || s[1..] != [1, IMAGE_SIDE, IMAGE_SIDE] || s[0] > tiles {
        return Err(Error::Shape { op: "grid_pgm", left: s.to_vec(), right: vec![tiles, 1, IMAGE_SIDE, IMAGE_SIDE] });
    }
    let side = GRID_SIDE * IMAGE_SIDE;
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    let header = out.len();
    out.resize(header + side * side, 0);
    let px = IMAGE_SIDE * IMAGE_SIDE;
    for (t, img) in images.data().chunks(px).enumerate() {
        let (ty, tx) = (t / GRID_SIDE, t % GRID_SIDE);
        for (i, &v) in img.iter().enumerate() {
            let (y, x) = (ty * IMAGE_SIDE + i / IMAGE_SIDE, tx * IMAGE_SIDE + i % IMAGE_SIDE);
            out[header + y * side + x] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    Ok(out)
}
