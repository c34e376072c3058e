use fnorp::permutation::in_sector;
use fnorp::rough_path::{fno_level_atomic, Word};
use fnorp::verify::{fubini_residual, generic_atoms, oracle_iterated_integral};
use fnorp::{permutation_graph, sector_assignment, Permutation, RegularizationConfig};

mod common;
use common::patterns;

#[test]
fn sectors_partition_every_tuple() {
    for n in 1..=4 {
        let perms = Permutation::all(n);
        for xi in patterns(n) {
            let owners: Vec<&Permutation> = perms.iter().filter(|s| in_sector(s, &xi).unwrap()).collect();
            assert_eq!(owners.len(), 1, "tuple {xi:?}");
            assert_eq!(*owners[0], sector_assignment(&xi).unwrap());
            // the tie-break ignores signs
            let flipped: Vec<f64> = xi.iter().map(|x| -x).collect();
            assert_eq!(sector_assignment(&flipped).unwrap(), *owners[0]);
        }
    }
}

#[test]
fn cyclic_example_sector_reconstructs_the_simplex() {
    let p = generic_atoms(3, 2, 0.5, 3).unwrap();
    let sigma = Permutation::from_one_based(&[2, 3, 1]).unwrap();
    let g = permutation_graph(&sigma, &[1, 2, 3]).unwrap();
    assert_eq!(g.len(), 2);
    let w = Word::new(vec![1, 2, 3]).unwrap();
    let r = fubini_residual(&p, &w, 0.15, 0.95).unwrap();
    assert!(r < 1e-9, "residual {r}");
}

#[test]
fn fubini_with_repeated_letters() {
    let p = generic_atoms(2, 2, 0.45, 8).unwrap();
    for letters in [vec![1, 1], vec![2, 1, 2], vec![1, 1, 2]] {
        let w = Word::new(letters).unwrap();
        let r = fubini_residual(&p, &w, -0.2, 0.6).unwrap();
        assert!(r < 1e-9, "{w}: residual {r}");
    }
}

#[test]
fn trivial_mode_at_equal_times_vanishes() {
    let p = generic_atoms(3, 2, 0.5, 5).unwrap();
    let w = Word::new(vec![3, 1, 2]).unwrap();
    let v = fno_level_atomic(&p, &w, &RegularizationConfig::trivial(), &[(0.4, 0.4)], 1e9).unwrap()[0];
    assert!(v.norm() < 1e-12);
    assert!(oracle_iterated_integral(&p, &w, 0.4, 0.4).unwrap().norm() < 1e-12);
}
