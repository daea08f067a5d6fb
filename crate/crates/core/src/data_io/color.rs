//! BT.601 limited-range conversion between the RGB working space and 8-bit
//! YUV. 4:2:0 chroma is a 2x2 box average on the way down and a
//! centre-sited bilinear interpolation on the way up.

use std::sync::OnceLock;

use super::{Frame, Yuv420Frame};

const FORWARD: [[f64; 3]; 3] = [[65.481, 128.553, 24.966], [-37.797, -74.203, 112.0], [112.0, -93.786, -18.214]];
const OFFSET: [f64; 3] = [16.0, 128.0, 128.0];

fn inverse() -> &'static [[f64; 3]; 3] {
    static INV: OnceLock<[[f64; 3]; 3]> = OnceLock::new();
    INV.get_or_init(|| {
        let m = FORWARD;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mut inv = [[0.0; 3]; 3];
        for (i, row) in inv.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                *v = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
            }
        }
        inv
    })
}

fn rgb_to_yuv_f(rgb: [f64; 3]) -> [f64; 3] {
    let mut out = OFFSET;
    for (o, row) in out.iter_mut().zip(FORWARD.iter()) {
        *o += row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
    }
    out
}

fn yuv_to_rgb_f(yuv: [f64; 3]) -> [f64; 3] {
    let inv = inverse();
    let d = [yuv[0] - OFFSET[0], yuv[1] - OFFSET[1], yuv[2] - OFFSET[2]];
    let mut out = [0.0; 3];
    for (o, row) in out.iter_mut().zip(inv.iter()) {
        *o = (row[0] * d[0] + row[1] * d[1] + row[2] * d[2]).clamp(0.0, 1.0);
    }
    out
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Full-resolution (4:4:4) conversion returning Y, Cb, Cr planes.
pub fn rgb_to_yuv444(frame: &Frame) -> [Vec<u8>; 3] {
    let n = frame.width * frame.height;
    let mut planes = [vec![0u8; n], vec![0u8; n], vec![0u8; n]];
    for i in 0..n {
        let rgb = [0, 1, 2].map(|c| f64::from(frame.data[c * n + i]));
        let yuv = rgb_to_yuv_f(rgb);
        for c in 0..3 {
            planes[c][i] = to_u8(yuv[c]);
        }
    }
    planes
}

pub fn yuv444_to_rgb(width: usize, height: usize, planes: &[Vec<u8>; 3]) -> Frame {
    let n = width * height;
    let mut out = Frame::filled(width, height, 0.0);
    for i in 0..n {
        let rgb = yuv_to_rgb_f([0, 1, 2].map(|c| f64::from(planes[c][i])));
        for c in 0..3 {
            out.data[c * n + i] = rgb[c] as f32;
        }
    }
    out
}

pub fn rgb_to_yuv420(frame: &Frame) -> Yuv420Frame {
    let (w, h) = (frame.width, frame.height);
    let n = w * h;
    let (cw, ch) = Yuv420Frame::chroma_dims(w, h);
    let mut yuv = Yuv420Frame::filled(w, h, 0, 128, 128);
    let mut cb = vec![0.0f64; n];
    let mut cr = vec![0.0f64; n];
    for i in 0..n {
        let rgb = [0, 1, 2].map(|c| f64::from(frame.data[c * n + i]));
        let [y, u, v] = rgb_to_yuv_f(rgb);
        yuv.y[i] = to_u8(y);
        cb[i] = u;
        cr[i] = v;
    }
    for cy in 0..ch {
        for cx in 0..cw {
            let (mut su, mut sv, mut cnt) = (0.0, 0.0, 0.0);
            for dy in 0..2 {
                for dx in 0..2 {
                    let (x, y) = (2 * cx + dx, 2 * cy + dy);
                    if x < w && y < h {
                        su += cb[y * w + x];
                        sv += cr[y * w + x];
                        cnt += 1.0;
                    }
                }
            }
            yuv.u[cy * cw + cx] = to_u8(su / cnt);
            yuv.v[cy * cw + cx] = to_u8(sv / cnt);
        }
    }
    yuv
}

fn upsample_chroma(plane: &[u8], cw: usize, ch: usize, w: usize, h: usize) -> Vec<f64> {
    let sample = |x: isize, y: isize| -> f64 {
        let x = x.clamp(0, cw as isize - 1) as usize;
        let y = y.clamp(0, ch as isize - 1) as usize;
        f64::from(plane[y * cw + x])
    };
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let fy = (y as f64 + 0.5) / 2.0 - 0.5;
        let y0 = fy.floor();
        let wy = fy - y0;
        for x in 0..w {
            let fx = (x as f64 + 0.5) / 2.0 - 0.5;
            let x0 = fx.floor();
            let wx = fx - x0;
            let (xi, yi) = (x0 as isize, y0 as isize);
            out[y * w + x] = (1.0 - wy) * ((1.0 - wx) * sample(xi, yi) + wx * sample(xi + 1, yi))
                + wy * ((1.0 - wx) * sample(xi, yi + 1) + wx * sample(xi + 1, yi + 1));
        }
    }
    out
}

pub fn yuv420_to_rgb(frame: &Yuv420Frame) -> Frame {
    let (w, h) = (frame.width, frame.height);
    let (cw, ch) = Yuv420Frame::chroma_dims(w, h);
    let u = upsample_chroma(&frame.u, cw, ch, w, h);
    let v = upsample_chroma(&frame.v, cw, ch, w, h);
    let n = w * h;
    let mut out = Frame::filled(w, h, 0.0);
    for i in 0..n {
        let rgb = yuv_to_rgb_f([f64::from(frame.y[i]), u[i], v[i]]);
        for c in 0..3 {
            out.data[c * n + i] = rgb[c] as f32;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solid(w: usize, h: usize, rgb: [f32; 3]) -> Frame {
        let mut f = Frame::filled(w, h, 0.0);
        let n = w * h;
        for c in 0..3 {
            f.data[c * n..(c + 1) * n].fill(rgb[c]);
        }
        f
    }

    #[test]
    fn neutral_grey_maps_to_neutral_chroma() {
        let yuv = Yuv420Frame::filled(4, 4, 128, 128, 128);
        let rgb = yuv420_to_rgb(&yuv);
        let expected = (128.0 - 16.0) / 219.0;
        assert!(rgb.data.iter().all(|&v| (f64::from(v) - expected).abs() < 1e-6));
        let back = rgb_to_yuv420(&rgb);
        assert_eq!(back, yuv);
    }

    #[test]
    fn primaries_match_published_bt601_values() {
        let cases = [
            ([1.0, 0.0, 0.0], [81, 90, 240]),
            ([0.0, 1.0, 0.0], [145, 54, 34]),
            ([0.0, 0.0, 1.0], [41, 240, 110]),
            ([1.0, 1.0, 1.0], [235, 128, 128]),
            ([0.0, 0.0, 0.0], [16, 128, 128]),
        ];
        for (rgb, want) in cases {
            let yuv = rgb_to_yuv420(&solid(2, 2, rgb));
            assert_eq!([yuv.y[0], yuv.u[0], yuv.v[0]], want, "{rgb:?}");
        }
    }

    #[test]
    fn matrix_round_trip_within_two_codes() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut f = Frame::filled(32, 32, 0.0);
        for v in &mut f.data {
            *v = rng.gen();
        }
        let back = yuv444_to_rgb(32, 32, &rgb_to_yuv444(&f));
        let max_err = f.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
        assert!(max_err <= 2.0 / 255.0, "max error {max_err}");
    }

    #[test]
    fn subsampled_round_trip_is_exact_for_flat_chroma() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let rgb = [rng.gen(), rng.gen(), rng.gen()];
            let f = solid(10, 6, rgb);
            let back = yuv420_to_rgb(&rgb_to_yuv420(&f));
            let max_err = f.data.iter().zip(&back.data).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            assert!(max_err <= 2.0 / 255.0, "{rgb:?}: {max_err}");
        }
    }
}
