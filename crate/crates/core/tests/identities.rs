use fnorp::rough_path::{build_tensors, fno_levels, Word};
use fnorp::skeleton::{cut_sum, reg_iterated_integral, AtomicTreeMeasure, Support};
use fnorp::spectral::{sample_fbm, FbmModel, FrequencyGrid};
use fnorp::tree::all_forests;
use fnorp::verify::{chen_residual, shuffle_residual};
use fnorp::{DecoratedForest, RegularizationConfig, SpectralPath};

fn path(k: usize, seed: u64) -> SpectralPath {
    let model = FbmModel::new(0.3, 0.02, 2).unwrap();
    sample_fbm(&model, &FrequencyGrid::new(k, 0.8).unwrap(), seed).unwrap()
}

fn measure(f: &DecoratedForest, p: &SpectralPath) -> AtomicTreeMeasure {
    let atomic = p.to_atomic();
    let tables = f.labels().iter().map(|&l| atomic.atoms(l).to_vec()).collect();
    AtomicTreeMeasure::new(f.clone(), tables, Support::Product).unwrap()
}

#[test]
fn tree_multiplicative_property_on_all_small_forests() {
    let p = path(6, 4);
    let cfg = RegularizationConfig::default();
    let (t, u, s) = (0.85, 0.4, -0.1);
    for n in 1..=4 {
        for shape in all_forests(n) {
            let labels: Vec<usize> = (0..n).map(|v| 1 + v % 2).collect();
            let f = DecoratedForest::new(shape.parents().to_vec(), labels).unwrap();
            let m = measure(&f, &p);
            let lhs = reg_iterated_integral(&m, &cfg, t, s).unwrap()
                - reg_iterated_integral(&m, &cfg, t, u).unwrap()
                - reg_iterated_integral(&m, &cfg, u, s).unwrap();
            let rhs = cut_sum(&m, &cfg, t, u, s).unwrap();
            assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + rhs.norm()), "{f}: {lhs} vs {rhs}");
        }
    }
}

#[test]
fn forests_factor_over_their_trees() {
    let p = path(5, 2);
    let cfg = RegularizationConfig::regularized(0.4).unwrap();
    let f: DecoratedForest = "4; 0,1,0,3; 1,2,2,1".parse().unwrap();
    let whole = reg_iterated_integral(&measure(&f, &p), &cfg, 0.7, 0.1).unwrap();
    let t1: DecoratedForest = "2; 0,1; 1,2".parse().unwrap();
    let t2: DecoratedForest = "2; 0,1; 2,1".parse().unwrap();
    let parts = reg_iterated_integral(&measure(&t1, &p), &cfg, 0.7, 0.1).unwrap()
        * reg_iterated_integral(&measure(&t2, &p), &cfg, 0.7, 0.1).unwrap();
    assert!((whole - parts).norm() < 1e-12 * (1.0 + parts.norm()));
}

#[test]
fn chen_identity_up_to_level_three() {
    let p = path(8, 12);
    let cfg = RegularizationConfig::default();
    let (t, u, s) = (0.9, 0.25, -0.3);
    let ts = build_tensors(&p, 3, &[(t, u), (u, s), (t, s)], &cfg).unwrap();
    let r = chen_residual(&ts[0], &ts[1], &ts[2]).unwrap();
    assert!(r < 1e-10, "chen residual {r}");
    let degenerate = build_tensors(&p, 3, &[(t, s), (s, s), (t, s)], &cfg).unwrap();
    assert_eq!(chen_residual(&degenerate[0], &degenerate[1], &degenerate[2]).unwrap(), 0.0);
}

#[test]
fn shuffle_identity_up_to_level_four() {
    let p = path(4, 7);
    let cfg = RegularizationConfig::default();
    let tensor = build_tensors(&p, 4, &[(0.6, -0.2)], &cfg).unwrap().remove(0);
    for n1 in 1..=3 {
        for n2 in 1..=(4 - n1) {
            for w1 in Word::all(2, n1) {
                for w2 in Word::all(2, n2) {
                    let r = shuffle_residual(&tensor, &w1, &w2).unwrap();
                    assert!(r < 1e-10, "{w1} x {w2}: {r}");
                }
            }
        }
    }
}

#[test]
fn values_are_real_and_vanish_on_the_diagonal() {
    let p = path(6, 1);
    let cfg = RegularizationConfig::default();
    for w in Word::all(2, 3) {
        let v = fno_levels(&p, &w, &cfg, &[(0.5, 0.5)], 1e9).unwrap()[0];
        assert!(v.abs() < 1e-13);
    }
}
