//! Blur and the simulated print-scan channel.

use morphdet::raster::quantize_u8;
use morphdet::Raster;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const PRINT_SCAN_BLUR: f64 = 0.8;
pub const PRINT_SCAN_GAMMA: f64 = 1.1;
pub const PRINT_SCAN_NOISE: f64 = 0.01;

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    (-radius..=radius)
        .map(|i| (-0.5 * (i as f64 / sigma).powi(2)).exp())
        .collect()
}

/// Separable Gaussian blur over valid pixels only; weights are renormalized
/// where the kernel leaves the image or meets masked pixels.
pub fn gaussian_blur(img: &Raster<f64>, sigma: f64) -> Raster<f64> {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let k = kernel(sigma);
    let pass = |src: &Raster<f64>, horizontal: bool| -> Raster<f64> {
        let (w, h, ch) = (src.width(), src.height(), src.channels());
        let r = (k.len() / 2) as isize;
        let mut data = vec![0.0; w * h * ch];
        let mut acc = vec![0.0; ch];
        for y in 0..h {
            for x in 0..w {
                if !src.is_valid(x, y) {
                    continue;
                }
                acc.fill(0.0);
                let mut total = 0.0;
                for (j, &kw) in k.iter().enumerate() {
                    let off = j as isize - r;
                    let (sx, sy) = if horizontal {
                        (x as isize + off, y as isize)
                    } else {
                        (x as isize, y as isize + off)
                    };
                    if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                        continue;
                    }
                    let (sx, sy) = (sx as usize, sy as usize);
                    if !src.is_valid(sx, sy) {
                        continue;
                    }
                    total += kw;
                    for (a, &v) in acc.iter_mut().zip(src.pixel(sx, sy)) {
                        *a += kw * v;
                    }
                }
                let p = (y * w + x) * ch;
                for (c, a) in acc.iter().enumerate() {
                    data[p + c] = a / total;
                }
            }
        }
        Raster::new(w, h, ch, data, src.mask().to_vec()).expect("blur keeps values finite")
    };
    pass(&pass(img, true), false)
}

/// Print-then-scan: blur, gamma, additive noise, 8-bit quantization.
pub fn degrade_print_scan(img: &Raster<f64>, seed: u64) -> Raster<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, PRINT_SCAN_NOISE).expect("constant sigma");
    let blurred = gaussian_blur(img, PRINT_SCAN_BLUR);
    let data = blurred
        .data()
        .iter()
        .map(|&v| {
            let printed = v.clamp(0.0, 1.0).powf(PRINT_SCAN_GAMMA);
            let scanned = printed + noise.sample(&mut rng);
            quantize_u8(scanned) as f64 / 255.0
        })
        .collect();
    Raster::new(
        img.width(),
        img.height(),
        img.channels(),
        data,
        img.mask().to_vec(),
    )
    .expect("quantized values are finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants_and_mass_of_an_impulse() {
        let flat = Raster::filled(20, 15, 2, 0.3);
        let b = gaussian_blur(&flat, 1.7);
        assert!(b.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));

        let mut imp = Raster::filled(41, 41, 1, 0.0);
        imp.set(20, 20, 0, 1.0);
        let b = gaussian_blur(&imp, 2.0);
        let mass: f64 = b.data().iter().sum();
        assert!((mass - 1.0).abs() < 1e-9);
        assert!((b.get(19, 20, 0) - b.get(21, 20, 0)).abs() < 1e-15);
    }

    #[test]
    fn blur_ignores_masked_pixels() {
        let mut data = vec![0.5; 10 * 10];
        let mut mask = vec![true; 100];
        data[55] = 100.0;
        mask[55] = false;
        let img = Raster::new(10, 10, 1, data, mask).unwrap();
        let b = gaussian_blur(&img, 1.0);
        for p in 0..100 {
            if p != 55 {
                assert!((b.data()[p] - 0.5).abs() < 1e-12);
            }
        }
    }
}
