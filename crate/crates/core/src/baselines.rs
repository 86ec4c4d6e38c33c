//! Comparator features: uniform LBP histograms and landmark offsets.

use crate::error::{Error, Result};
use crate::geometry::{LandmarkSet, LANDMARK_COUNT};
use crate::raster::Raster;
use crate::scalar::Real;

pub const LBP_NEIGHBORS: usize = 8;
pub const LBP_BINS: usize = 59;
pub const LBP_GRID: usize = 4;
pub const LBP_FACE_SIZE: usize = 256;
pub const LBP_DIM: usize = LBP_GRID * LBP_GRID * LBP_BINS;
pub const SIGNED_DISTANCE_DIM: usize = 2 * LANDMARK_COUNT;

/// Number of 0/1 transitions around the circular 8-bit pattern.
fn transitions(code: u8) -> u32 {
    (code ^ code.rotate_right(1)).count_ones()
}

/// Histogram bin of each code: uniform codes in ascending order take bins
/// 0..58, every other code shares bin 58.
pub fn uniform_bin_table() -> [u8; 256] {
    let mut table = [(LBP_BINS - 1) as u8; 256];
    let mut next = 0u8;
    for code in 0..=255u8 {
        if transitions(code) <= 2 {
            table[code as usize] = next;
            next += 1;
        }
    }
    debug_assert_eq!(next as usize, LBP_BINS - 1);
    table
}

/// LBP(8, 1) code per pixel, `None` where the 3×3 neighbourhood leaves the
/// image or touches an invalid pixel. Neighbour `p` sits at angle `2πp/8`,
/// offset `(cos, -sin)` with y pointing down, and sets bit `p` when its
/// bilinearly sampled value is at least the centre's.
pub fn lbp_codes<T: Real>(img: &Raster<T>) -> Result<Vec<Option<u8>>> {
    if img.channels() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "LBP needs a single-channel image, got {} channels",
            img.channels()
        )));
    }
    let (w, h) = (img.width(), img.height());
    let (data, mask) = (img.data(), img.mask());
    let d = T::FRAC_1_SQRT_2();
    let frac = T::one() - d;
    let offsets: [(i64, i64, bool); LBP_NEIGHBORS] = [
        (1, 0, false),
        (1, -1, true),
        (0, -1, false),
        (-1, -1, true),
        (-1, 0, false),
        (-1, 1, true),
        (0, 1, false),
        (1, 1, true),
    ];
    let mut out = vec![None; w * h];
    for y in 1..h.saturating_sub(1) {
        'px: for x in 1..w.saturating_sub(1) {
            for yy in y - 1..=y + 1 {
                for xx in x - 1..=x + 1 {
                    if !mask[yy * w + xx] {
                        continue 'px;
                    }
                }
            }
            let at = |dx: i64, dy: i64| data[(y as i64 + dy) as usize * w + (x as i64 + dx) as usize];
            let c = at(0, 0);
            let mut code = 0u8;
            for (p, &(dx, dy, diag)) in offsets.iter().enumerate() {
                let v = if diag {
                    // The sample lies inside the square spanned by the centre
                    // and the diagonal pixel, at fractional offset d on each axis.
                    let top = at(0, 0) * frac + at(dx, 0) * d;
                    let bottom = at(0, dy) * frac + at(dx, dy) * d;
                    top * frac + bottom * d
                } else {
                    at(dx, dy)
                };
                if v >= c {
                    code |= 1 << p;
                }
            }
            out[y * w + x] = Some(code);
        }
    }
    Ok(out)
}

/// Per-cell uniform-LBP histograms over a 4×4 grid of a 256×256 luminance
/// image, each L1-normalized (all zero for cells without a code).
pub fn lbp_feature<T: Real>(img: &Raster<T>) -> Result<Vec<T>> {
    if img.width() != LBP_FACE_SIZE || img.height() != LBP_FACE_SIZE {
        return Err(Error::DimensionMismatch(format!(
            "LBP feature needs a {LBP_FACE_SIZE}x{LBP_FACE_SIZE} image, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    lbp_histograms(img, LBP_GRID)
}

/// Grid histograms on an image of any size divisible into `grid` cells.
pub fn lbp_histograms<T: Real>(img: &Raster<T>, grid: usize) -> Result<Vec<T>> {
    let codes = lbp_codes(img)?;
    let table = uniform_bin_table();
    let (w, h) = (img.width(), img.height());
    let mut counts = vec![0u32; grid * grid * LBP_BINS];
    for y in 0..h {
        for x in 0..w {
            if let Some(code) = codes[y * w + x] {
                let cell = (y * grid / h) * grid + x * grid / w;
                counts[cell * LBP_BINS + table[code as usize] as usize] += 1;
            }
        }
    }
    let mut out = Vec::with_capacity(counts.len());
    for cell in counts.chunks(LBP_BINS) {
        let total: u32 = cell.iter().sum();
        out.extend(cell.iter().map(|&c| {
            if total == 0 {
                T::zero()
            } else {
                T::lit(f64::from(c) / f64::from(total))
            }
        }));
    }
    Ok(out)
}

/// `|f1 - f2|` element-wise.
pub fn lbp_pair_feature<T: Real>(f1: &[T], f2: &[T]) -> Result<Vec<T>> {
    if f1.len() != f2.len() {
        return Err(Error::DimensionMismatch(format!(
            "LBP features of length {} and {}",
            f1.len(),
            f2.len()
        )));
    }
    Ok(f1.iter().zip(f2).map(|(&a, &b)| (a - b).abs()).collect())
}

/// `(x_ref - x_probe, y_ref - y_probe)` per landmark.
pub fn signed_distance_feature<T: Real>(
    reference: &LandmarkSet<T>,
    probe: &LandmarkSet<T>,
) -> Vec<T> {
    reference
        .points()
        .iter()
        .zip(probe.points())
        .flat_map(|(r, p)| [r[0] - p[0], r[1] - p[1]])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifty_eight_uniform_codes() {
        let t = uniform_bin_table();
        assert_eq!(t.iter().filter(|&&b| b < 58).count(), 58);
        assert_eq!(t[0], 0);
        assert_eq!(t[255], 57);
        assert_eq!(t[0b0101_0101], 58);
    }

    #[test]
    fn constant_image_is_a_single_spike() {
        let img = Raster::filled(LBP_FACE_SIZE, LBP_FACE_SIZE, 1, 0.4f64);
        let f = lbp_feature(&img).unwrap();
        assert_eq!(f.len(), LBP_DIM);
        for cell in f.chunks(LBP_BINS) {
            assert_eq!(cell[57], 1.0);
            assert_eq!(cell.iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn wrong_size_is_rejected() {
        assert!(lbp_feature(&Raster::filled(64, 64, 1, 0.0f64)).is_err());
    }

    #[test]
    fn identical_images_give_zero_difference() {
        let img = Raster::from_fn(256, 256, 1, |x, y, _| ((x * 7 + y * 3) % 11) as f64 / 11.0);
        let f = lbp_feature(&img).unwrap();
        assert!(lbp_pair_feature(&f, &f).unwrap().iter().all(|&v| v == 0.0));
        assert!(lbp_pair_feature(&f, &f[1..]).is_err());
    }
}
