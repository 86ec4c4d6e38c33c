use morphdet::evaluation::{d_eer_of, pair_protocol};
use morphdet::learning::{greedy_weight_search, simplex_grid};
use morphdet::manifest::{CameraId, DatasetManifest, Record, Role, Split};
use morphdet::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn record(id: String, subject: String, role: Role, camera: Option<u8>, split: Split) -> Record {
    Record {
        image_path: format!("images/{id}.png"),
        landmarks_path: format!("landmarks/{id}.txt"),
        id,
        subject_id: subject,
        role,
        camera: camera.map(|c| CameraId::new(c).unwrap()),
        split,
        normals_path: None,
        albedo_path: None,
        lighting_path: None,
        diffuse_path: None,
        embedding_path: None,
        morph_parents: None,
    }
}

/// Manifest with 19/20 bona fide and 52/38 morph passports and per-camera gate
/// counts (58, 64, 58, 57) for training and (57, 63, 49, 53) for testing.
fn published_cardinalities() -> DatasetManifest {
    let mut recs = Vec::new();
    let splits = [
        (Split::Train, 0..19usize, 52usize, [58usize, 64, 58, 57]),
        (Split::Test, 19..39, 38, [57, 63, 49, 53]),
    ];
    for (split, subjects, morphs, gates) in splits {
        let subs: Vec<usize> = subjects.collect();
        for &s in &subs {
            recs.push(record(format!("bp{s}"), format!("s{s}"), Role::BonafidePassport, None, split));
        }
        for k in 0..morphs {
            let a = subs[k % subs.len()];
            let b = subs[(k + 1 + k / subs.len()) % subs.len()];
            let mut r = record(format!("mp{split}{k}"), format!("m{split}{k}"), Role::MorphPassport, None, split);
            r.morph_parents = Some((format!("s{a}"), format!("s{b}")));
            recs.push(r);
        }
        for (ci, &count) in gates.iter().enumerate() {
            for g in 0..count {
                let s = subs[g % subs.len()];
                recs.push(record(format!("g{split}c{}n{g}", ci + 1), format!("s{s}"), Role::Gate, Some(ci as u8 + 1), split));
            }
        }
    }
    DatasetManifest::new(recs, ".").unwrap()
}

#[test]
fn pair_counts_follow_cardinalities() {
    let m = published_cardinalities();
    let cases = [
        (Split::Train, 1, 1102, 3016),
        (Split::Train, 2, 1216, 3328),
        (Split::Train, 3, 1102, 3016),
        (Split::Train, 4, 1083, 2964),
        (Split::Test, 1, 1140, 2166),
        (Split::Test, 2, 1260, 2394),
        (Split::Test, 3, 980, 1862),
        (Split::Test, 4, 1060, 2014),
    ];
    for (split, cam, genuine, attack) in cases {
        let pairs = pair_protocol(&m, split, CameraId::new(cam).unwrap()).unwrap();
        let g = pairs.iter().filter(|p| p.label == Label::Genuine).count();
        assert_eq!((g, pairs.len() - g), (genuine, attack), "{split} camera {cam}");
        assert!(pairs.iter().all(|p| p.probe.split == split && p.reference.split == split));
        assert!(pairs.iter().all(|p| (p.label == Label::Genuine) == (p.reference.role == Role::BonafidePassport)));
    }
}

#[test]
fn empty_camera_is_an_error() {
    let m = DatasetManifest::new(
        vec![record("bp0".into(), "s0".into(), Role::BonafidePassport, None, Split::Train)],
        ".",
    )
    .unwrap();
    assert!(pair_protocol(&m, Split::Train, CameraId::new(1).unwrap()).is_err());
}

fn fused_eer(branches: &[Vec<f64>], labels: &[Label], w: &[f64]) -> f64 {
    let (mut g, mut a) = (Vec::new(), Vec::new());
    for (i, l) in labels.iter().enumerate() {
        let v: f64 = branches.iter().zip(w).map(|(b, wb)| b[i] * wb).sum();
        if *l == Label::Genuine { g.push(v) } else { a.push(v) }
    }
    let e = d_eer_of(&g, &a).unwrap().eer;
    *e.numer() as f64 / *e.denom() as f64
}

#[test]
fn perfect_branch_takes_all_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let n = 400;
    let labels: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Genuine } else { Label::Attack }).collect();
    let separator: Vec<f64> = labels
        .iter()
        .map(|l| match l {
            Label::Genuine => rng.random_range(0.48..0.495),
            Label::Attack => rng.random_range(0.505..0.52),
        })
        .collect();
    let noise: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let branches = vec![separator, noise];
    let found = greedy_weight_search(&branches, &labels).unwrap();
    assert_eq!(found.weights, vec![1.0, 0.0]);
    // Full grid evaluation: only the chosen point reaches zero error.
    let grid = simplex_grid(2, 10);
    let zero: Vec<&Vec<f64>> = grid.iter().filter(|w| fused_eer(&branches, &labels, w) == 0.0).collect();
    assert_eq!(zero, vec![&vec![1.0, 0.0]]);
}

#[test]
fn search_beats_uniform_weights_on_four_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let n = 300;
    let labels: Vec<Label> = (0..n).map(|i| if i % 3 == 0 { Label::Genuine } else { Label::Attack }).collect();
    let branches: Vec<Vec<f64>> = (0..4)
        .map(|b| {
            labels
                .iter()
                .map(|l| {
                    let signal = if *l == Label::Attack { 0.1 * (b + 1) as f64 } else { 0.0 };
                    signal + rng.random_range(0.0..0.6)
                })
                .collect()
        })
        .collect();
    let found = greedy_weight_search(&branches, &labels).unwrap();
    let uniform = fused_eer(&branches, &labels, &[0.25; 4]);
    assert!(*found.eer.numer() as f64 / *found.eer.denom() as f64 <= uniform);
    assert!(found.weights.iter().all(|w| (w * 10.0 - (w * 10.0).round()).abs() < 1e-12));
    assert!((found.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // No grid point does strictly better.
    let best = fused_eer(&branches, &labels, &found.weights);
    for w in simplex_grid(4, 10) {
        assert!(fused_eer(&branches, &labels, &w) >= best);
    }
}
