mod common;

use std::collections::{BTreeSet, HashSet};

use common::{all_full, commutator_residual, random_poly};

use hypoell::basis::BlockStructure;
use hypoell::linalg::{singular_values, standard_normal};
use hypoell::multiindex::{
    assemble_j, block_commutator, block_size, c_count, check_full_rank, ell, enumeration, precedes,
    set_a, set_b, set_c, split_derivatives, DriftPattern,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_sizes(rng: &mut ChaCha8Rng, max_r: usize, max_p: usize) -> Vec<usize> {
    let r = rng.gen_range(0..=max_r);
    let mut sizes = vec![rng.gen_range(1..=max_p)];
    for _ in 0..r {
        let prev = *sizes.last().unwrap();
        sizes.push(rng.gen_range(1..=prev));
    }
    sizes
}

/// Random drift in reduced form: nonzero only on the sub-diagonal blocks.
fn random_reduced_drift(s: &BlockStructure, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = s.dim();
    let mut b = DMatrix::zeros(n, n);
    for h in 1..=s.r {
        for i in s.ranges[h].clone() {
            for j in s.ranges[h - 1].clone() {
                b[(i, j)] = standard_normal(rng);
            }
        }
    }
    b
}

#[test]
fn enumeration_counts_and_order() {
    for q in 0..=4 {
        for k in 0..=6 {
            let en = enumeration(k, q);
            assert_eq!(en.len(), c_count(k, q));
            for w in en.items.windows(2) {
                assert_eq!(precedes(&w[0], &w[1]), std::cmp::Ordering::Less);
            }
            for (m, item) in en.items.iter().enumerate() {
                assert_eq!(en.position(item), Some(m + 1));
                assert_eq!(item.iter().sum::<u32>(), k);
            }
        }
    }
}

#[test]
fn split_is_a_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let sizes = random_sizes(&mut rng, 3, 3);
        let s = BlockStructure::identity(sizes.clone()).unwrap();
        for k in 1..=3 {
            let blocks = split_derivatives(k, &s);
            let en = enumeration(k, s.r);
            let mut seen = HashSet::new();
            for (m, blk) in blocks.iter().enumerate() {
                assert_eq!(blk.len(), block_size(en.get(m + 1).unwrap(), &sizes));
                for f in blk {
                    assert_eq!(s.compress(&f.0), en.get(m + 1).unwrap());
                    assert!(seen.insert(f.0.clone()));
                }
                for w in blk.windows(2) {
                    assert_eq!(precedes(&w[1].0, &w[0].0), std::cmp::Ordering::Less);
                }
            }
            assert_eq!(seen.len(), all_full(s.dim(), k).len());
        }
    }
}

#[test]
fn ell_properties() {
    for r in 1..=4 {
        for l in 1..=6 {
            let lo = c_count(l - 1, r);
            let hi = c_count(l, r);
            let en = enumeration(l, r);
            for m in (lo + 1)..=hi {
                let lm = ell(l, r, m).unwrap();
                assert!(lm < m);
                let a = en.get(m).unwrap();
                let b = en.get(lm).unwrap();
                let diff: i64 = a.iter().zip(b).map(|(x, y)| *x as i64 - *y as i64).sum();
                assert_eq!(diff, 0);
                for p in (m + 1)..=hi {
                    assert!(
                        lm < ell(l, r, p).unwrap(),
                        "r = {r}, l = {l}, m = {m}, p = {p}"
                    );
                }
            }
            for m in 1..=lo.min(hi) {
                assert!(ell(l, r, m).is_err());
            }
        }
    }
}

#[test]
fn set_a_is_the_commutator_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let sizes = random_sizes(&mut rng, 3, 2);
        let s = BlockStructure::identity(sizes).unwrap();
        let r = s.r;
        if r == 0 {
            continue;
        }
        for l in 1..=3 {
            for m in (c_count(l - 1, r) + 1)..=c_count(l, r) {
                let lm = ell(l, r, m).unwrap();
                let targets: BTreeSet<usize> = block_commutator(l, lm, &s, DriftPattern::Block)
                    .unwrap()
                    .keys()
                    .copied()
                    .collect();
                assert_eq!(
                    set_a(l, r, m).unwrap(),
                    targets,
                    "sizes {:?}, l {l}, m {m}",
                    s.sizes
                );
                let from_m: BTreeSet<usize> = block_commutator(l, m, &s, DriftPattern::Block)
                    .unwrap()
                    .keys()
                    .copied()
                    .collect();
                assert_eq!(set_b(l, r, m).unwrap(), from_m);
            }
        }
    }
}

#[test]
fn set_c_shapes() {
    let c = set_c(1, 1, 2).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.iter().next().unwrap().0, vec![2, 0]);
    for r in 1..=3 {
        for l in 1..=3 {
            for m in 1..=c_count(l, r) {
                for b in set_c(l, r, m).unwrap() {
                    assert!(b.total() <= l + 1 && b.total() >= 2);
                    assert!(b.0[0] >= 2);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn commutator_matches_polynomial_algebra(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..=3);
        let s = BlockStructure::identity(vec![1; n]).unwrap();
        let b = DMatrix::from_fn(n, n, |_, _| standard_normal(&mut rng));
        let k = rng.gen_range(1..=3);
        let alphas = all_full(n, k);
        let alpha = alphas[rng.gen_range(0..alphas.len())].clone();
        let w = random_poly(n, k + 1, &mut rng);
        let (res, scale) = commutator_residual(&alpha, &s, &b, &w);
        prop_assert!(res < 1e-9 * (1.0 + scale));
    }
}

#[test]
fn level_one_j_is_block_transpose() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..40 {
        let sizes = random_sizes(&mut rng, 3, 3);
        let s = BlockStructure::identity(sizes).unwrap();
        if s.r == 0 {
            continue;
        }
        let b = random_reduced_drift(&s, &mut rng);
        for m in 2..=(s.r + 1) {
            let a = assemble_j(1, m, &s, &b).unwrap();
            let j = m - 1;
            let blk = b
                .view(
                    (s.ranges[j].start, s.ranges[j - 1].start),
                    (s.sizes[j], s.sizes[j - 1]),
                )
                .into_owned();
            assert_eq!(a.j.shape(), (s.sizes[j - 1], s.sizes[j]));
            let mut sv1 = singular_values(&a.j);
            let mut sv2 = singular_values(&blk);
            sv1.truncate(s.sizes[j]);
            sv2.truncate(s.sizes[j]);
            for (x, y) in sv1.iter().zip(&sv2) {
                assert!((x - y).abs() < 1e-12);
            }
            let mut entries_a: Vec<f64> = a.j.iter().copied().collect();
            let mut entries_b: Vec<f64> = blk.iter().copied().collect();
            entries_a.sort_by(f64::total_cmp);
            entries_b.sort_by(f64::total_cmp);
            assert_eq!(entries_a, entries_b);
        }
    }
}

#[test]
fn random_reduced_drifts_have_full_rank_j() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for _ in 0..200 {
        let sizes = random_sizes(&mut rng, 2, 3);
        let s = BlockStructure::identity(sizes).unwrap();
        if s.r == 0 {
            continue;
        }
        let b = random_reduced_drift(&s, &mut rng);
        for l in 1..=3 {
            let js = check_full_rank(l, &s, &b, 1e-8)
                .unwrap_or_else(|e| panic!("sizes {:?}, l {l}: {e}", s.sizes));
            checked += js.len();
        }
    }
    assert!(checked > 500);
}

#[test]
fn rank_deficient_block_detected() {
    let s = BlockStructure::identity(vec![2, 2]).unwrap();
    let mut b = DMatrix::zeros(4, 4);
    b[(2, 0)] = 1.0;
    b[(3, 0)] = 1.0;
    assert!(check_full_rank(1, &s, &b, 1e-8).is_err());
}
