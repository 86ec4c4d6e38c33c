use morphdet::baselines::{
    lbp_codes, lbp_feature, lbp_histograms, lbp_pair_feature, signed_distance_feature, uniform_bin_table, LBP_BINS,
};
use morphdet::{LandmarkSet, Raster};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generic bilinear interpolation at an arbitrary point.
fn bilinear(img: &[f64], w: usize, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |xx: f64, yy: f64| img[yy as usize * w + xx as usize];
    let top = at(x0, y0) * (1.0 - fx) + if fx > 0.0 { at(x0 + 1.0, y0) * fx } else { 0.0 };
    if fy == 0.0 {
        return top;
    }
    let bottom = at(x0, y0 + 1.0) * (1.0 - fx) + if fx > 0.0 { at(x0 + 1.0, y0 + 1.0) * fx } else { 0.0 };
    top * (1.0 - fy) + bottom * fy
}

fn oracle_code(img: &[f64], w: usize, x: usize, y: usize) -> u8 {
    let c = img[y * w + x];
    let mut code = 0u8;
    for p in 0..8 {
        let a = std::f64::consts::TAU * p as f64 / 8.0;
        let (mut dx, mut dy) = (a.cos(), -a.sin());
        // Snap the axis-aligned samples onto the grid.
        if dx.abs() < 1e-9 {
            dx = 0.0;
        }
        if dy.abs() < 1e-9 {
            dy = 0.0;
        }
        if dx.abs() > 0.99 {
            dx = dx.signum();
        }
        if dy.abs() > 0.99 {
            dy = dy.signum();
        }
        let v = bilinear(img, w, x as f64 + dx, y as f64 + dy);
        if v >= c {
            code |= 1 << p;
        }
    }
    code
}

fn fixture(rng: &mut impl Rng) -> Vec<f64> {
    (0..64).map(|_| f64::from(rng.random_range(0u8..=255)) / 255.0).collect()
}

#[test]
fn codes_match_direct_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..20 {
        let px = fixture(&mut rng);
        let codes = lbp_codes(&Raster::new(8, 8, 1, px.clone(), vec![true; 64]).unwrap()).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let border = x == 0 || y == 0 || x == 7 || y == 7;
                match codes[y * 8 + x] {
                    None => assert!(border),
                    Some(c) => assert_eq!(c, oracle_code(&px, 8, x, y), "pixel ({x},{y})"),
                }
            }
        }
    }
}

#[test]
fn quarter_turn_rotates_codes_by_two_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let px = fixture(&mut rng);
    let orig = Raster::new(8, 8, 1, px.clone(), vec![true; 64]).unwrap();
    // rotated(x, y) = original(y, 7 - x)
    let rot = Raster::from_fn(8, 8, 1, |x, y, _| px[(7 - x) * 8 + y]);
    let (co, cr) = (lbp_codes(&orig).unwrap(), lbp_codes(&rot).unwrap());
    for y in 1..7 {
        for x in 1..7 {
            let o = co[(7 - x) * 8 + y].unwrap();
            assert_eq!(cr[y * 8 + x].unwrap(), o.rotate_right(2), "pixel ({x},{y})");
        }
    }
    // Cells follow the same permutation: rotated cell (i, j) is original cell (j, 1 - i).
    let (ho, hr) = (lbp_histograms(&orig, 2).unwrap(), lbp_histograms(&rot, 2).unwrap());
    assert_eq!(ho.len(), 4 * LBP_BINS);
    let table = uniform_bin_table();
    for cy in 0..2 {
        for cx in 0..2 {
            let r = &hr[(cy * 2 + cx) * LBP_BINS..][..LBP_BINS];
            let o = &ho[((1 - cx) * 2 + cy) * LBP_BINS..][..LBP_BINS];
            for code in 0..=255u8 {
                let from = table[code as usize] as usize;
                let to = table[code.rotate_right(2) as usize] as usize;
                assert_eq!(r[to], o[from]);
            }
        }
    }
}

#[test]
fn edge_moved_within_a_cell_row_keeps_histograms() {
    let edge = |row: usize| Raster::from_fn(256, 256, 1, move |_, y, _| if y < row { 0.2 } else { 0.8 });
    let a = lbp_feature(&edge(20)).unwrap();
    let b = lbp_feature(&edge(40)).unwrap();
    assert_eq!(a, b);
    for cell in a.chunks(LBP_BINS) {
        let s: f64 = cell.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }
}

#[test]
fn masked_cells_are_all_zero() {
    let mut img = Raster::filled(256, 256, 1, 0.5f64);
    for y in 0..64 {
        for x in 0..64 {
            img.mask_mut()[y * 256 + x] = false;
        }
    }
    let f = lbp_feature(&img).unwrap();
    assert!(f[..LBP_BINS].iter().all(|&v| v == 0.0));
    assert!((f[LBP_BINS..2 * LBP_BINS].iter().sum::<f64>() - 1.0).abs() < 1e-6);
}

proptest! {
    // Exact for affine maps with power-of-two gain on dyadic intensities.
    #[test]
    fn histograms_ignore_increasing_affine_remaps(
        px in proptest::collection::vec(0u16..256, 64),
        gain_exp in -3i32..4,
        offset in -64i32..64,
    ) {
        let orig: Vec<f64> = px.iter().map(|&v| f64::from(v) / 256.0).collect();
        let gain = 2f64.powi(gain_exp);
        let mapped: Vec<f64> = orig.iter().map(|v| gain * v + f64::from(offset) / 64.0).collect();
        let a = lbp_histograms(&Raster::new(8, 8, 1, orig, vec![true; 64]).unwrap(), 2).unwrap();
        let b = lbp_histograms(&Raster::new(8, 8, 1, mapped, vec![true; 64]).unwrap(), 2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn lbp_difference_is_symmetric_and_non_negative(
        a in proptest::collection::vec(0.0f64..1.0, 20),
        b in proptest::collection::vec(0.0f64..1.0, 20),
    ) {
        let ab = lbp_pair_feature(&a, &b).unwrap();
        prop_assert_eq!(&ab, &lbp_pair_feature(&b, &a).unwrap());
        prop_assert!(ab.iter().all(|&v| v >= 0.0));
    }
}

fn landmarks(rng: &mut impl Rng) -> LandmarkSet<f64> {
    LandmarkSet::new((0..68).map(|_| [rng.random_range(0.0..256.0), rng.random_range(0.0..256.0)]).collect()).unwrap()
}

#[test]
fn signed_distance_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let a = landmarks(&mut rng);
    let b = landmarks(&mut rng);
    assert!(signed_distance_feature(&a, &a).iter().all(|&v| v == 0.0));
    let ab = signed_distance_feature(&a, &b);
    let ba = signed_distance_feature(&b, &a);
    assert_eq!(ab.len(), 136);
    assert!(ab.iter().zip(&ba).all(|(x, y)| *x == -*y));
    let shifted = LandmarkSet::new(b.points().iter().map(|p| [p[0] + 1.0, p[1]]).collect()).unwrap();
    let d = signed_distance_feature(&shifted, &b);
    for pair in d.chunks(2) {
        assert!((pair[0] - 1.0).abs() < 1e-12);
        assert_eq!(pair[1], 0.0);
    }
}
