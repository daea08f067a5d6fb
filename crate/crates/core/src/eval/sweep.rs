use super::{weighted_psnr_yuv420, RDPoint};
use crate::codec::{encode_sequence, EncodeOptions, EncodedSequence};
use crate::data_io::{rgb_to_yuv420, Frame, Yuv420Frame};
use crate::error::{NvcError, Result};
use crate::frame_codec::VideoModel;

/// Per-frame weighted PSNR of two equally long I420 sequences.
pub fn sequence_psnr(reference: &[Yuv420Frame], test: &[Yuv420Frame]) -> Result<Vec<f64>> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(NvcError::Argument(format!("sequences hold {} and {} frames", reference.len(), test.len())));
    }
    reference.iter().zip(test).map(|(r, t)| weighted_psnr_yuv420(r, t)).collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Operating point of an encoded sequence, scored in I420 against
/// `reference`.
pub fn rd_point(label: &str, q_idx: usize, enc: &EncodedSequence, reference: &[Yuv420Frame]) -> Result<RDPoint> {
    let recon: Vec<Yuv420Frame> = enc.recon.iter().map(rgb_to_yuv420).collect();
    let psnr = mean(&sequence_psnr(reference, &recon)?);
    Ok(RDPoint::new(label, Some(q_idx), enc.bpp()?, psnr))
}

/// Encodes `source` once per rate index. `reference` defaults to the I420
/// conversion of `source`.
pub fn rd_sweep(
    model: &VideoModel,
    source: &[Frame],
    reference: Option<&[Yuv420Frame]>,
    q_idxs: &[usize],
    intra_period: i16,
    label: &str,
) -> Result<Vec<RDPoint>> {
    let owned: Vec<Yuv420Frame>;
    let reference = match reference {
        Some(r) => r,
        None => {
            owned = source.iter().map(rgb_to_yuv420).collect();
            &owned
        }
    };
    q_idxs
        .iter()
        .map(|&q| {
            let enc = encode_sequence(model, source, EncodeOptions { q_idx: q, intra_period })?;
            rd_point(label, q, &enc, reference)
        })
        .collect()
}
