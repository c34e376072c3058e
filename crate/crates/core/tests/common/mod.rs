#![allow(dead_code)]

use fnorp::DecoratedForest;

pub type Triple = (Vec<usize>, Vec<usize>, Vec<usize>);

fn mapped(ids: &[usize], outer: &[usize]) -> Vec<usize> {
    ids.iter().map(|&i| outer[i]).collect()
}

/// Both sides of coassociativity as sorted lists of vertex-set triples.
pub fn coassociativity_sides(f: &DecoratedForest) -> (Vec<Triple>, Vec<Triple>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for split in f.coproduct() {
        for inner in split.left.coproduct() {
            left.push((
                mapped(&inner.left_vertices, &split.left_vertices),
                mapped(&inner.right_vertices, &split.left_vertices),
                split.right_vertices.clone(),
            ));
        }
        for inner in split.right.coproduct() {
            right.push((
                split.left_vertices.clone(),
                mapped(&inner.left_vertices, &split.right_vertices),
                mapped(&inner.right_vertices, &split.right_vertices),
            ));
        }
    }
    left.sort();
    right.sort();
    (left, right)
}

/// Every tuple of magnitudes in {1,2,3}^n with every sign pattern.
pub fn patterns(n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0].into_iter().map(move |x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    out
}

