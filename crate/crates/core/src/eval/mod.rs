//! Quality metrics, BD-rate and rate-distortion curve I/O.

mod bd_rate;
mod rd;
mod sweep;

pub use bd_rate::{bd_rate, pchip_integral, Pchip};
pub use rd::{emit_rd, plot_rd, read_rd_csv, write_rd_csv, RDCurve, RDPoint};
pub use sweep::{mean, rd_point, rd_sweep, sequence_psnr};

use crate::data_io::Yuv420Frame;
use crate::error::{NvcError, Result};

/// `10 log10(peak^2 / MSE)`; identical planes give `f64::INFINITY`.
pub fn psnr(reference: &[u8], test: &[u8], peak: f64) -> Result<f64> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(NvcError::Argument(format!("planes differ in size ({} vs {})", reference.len(), test.len())));
    }
    let sse: u64 = reference
        .iter()
        .zip(test)
        .map(|(&a, &b)| {
            let d = i64::from(a) - i64::from(b);
            (d * d) as u64
        })
        .sum();
    if sse == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse as f64 / reference.len() as f64;
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Per-plane PSNRs `[Y, U, V]` of two 8-bit I420 frames.
pub fn plane_psnrs(reference: &Yuv420Frame, test: &Yuv420Frame) -> Result<[f64; 3]> {
    if (reference.width, reference.height) != (test.width, test.height) {
        return Err(NvcError::Argument(format!(
            "frames differ in size ({}x{} vs {}x{})",
            reference.width, reference.height, test.width, test.height
        )));
    }
    Ok([psnr(&reference.y, &test.y, 255.0)?, psnr(&reference.u, &test.u, 255.0)?, psnr(&reference.v, &test.v, 255.0)?])
}

/// `(6 Y + U + V) / 8` from per-plane PSNRs.
pub fn weighted_psnr(planes: [f64; 3]) -> f64 {
    (6.0 * planes[0] + planes[1] + planes[2]) / 8.0
}

pub fn weighted_psnr_yuv420(reference: &Yuv420Frame, test: &Yuv420Frame) -> Result<f64> {
    Ok(weighted_psnr(plane_psnrs(reference, test)?))
}

/// Bits per pixel of `bits` spread over `frames` frames of `width x height`.
pub fn bits_per_pixel(bits: f64, width: usize, height: usize, frames: usize) -> f64 {
    bits / (width * height * frames) as f64
}
