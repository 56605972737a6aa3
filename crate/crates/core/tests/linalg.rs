use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sdgcn::linalg::{determinant, eigendecompose, esp_table, SymmetricMatrix, DEFAULT_EIGEN_TOL};
use sdgcn::Matrix;

fn random_symmetric(m: usize, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
    let mut vals = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let v: f64 = rng.sample(StandardNormal);
            vals[i * m + j] = v;
            vals[j * m + i] = v;
        }
    }
    SymmetricMatrix::from_fn(m, |i, j| vals[i * m + j])
}

fn random_spd(m: usize, rng: &mut ChaCha8Rng) -> SymmetricMatrix {
    let b = Matrix::from_fn(m, m, |_, _| rng.sample(StandardNormal));
    let g = b.matmul_t(&b);
    SymmetricMatrix::from_fn(m, |i, j| g[(i, j)] + if i == j { 0.1 } else { 0.0 })
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << m)
        .filter(|b| b.count_ones() as usize == k)
        .map(|b| (0..m).filter(|i| b >> i & 1 == 1).collect())
        .collect()
}

#[test]
fn eigen_invariants_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in 1..=15 {
        let s = random_symmetric(m, &mut rng);
        let e = eigendecompose(&s, DEFAULT_EIGEN_TOL).unwrap();
        let norm_inf = s.as_matrix().norm_inf();
        let v = &e.eigenvectors;
        for j in 0..m {
            for i in 0..m {
                let mv: f64 = (0..m).map(|t| s.get(i, t) * v[(t, j)]).sum();
                assert!((mv - e.eigenvalues[j] * v[(i, j)]).abs() <= 1e-8 * norm_inf.max(1.0));
            }
        }
        let vtv = v.t_matmul(v);
        for i in 0..m {
            for j in 0..m {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[(i, j)] - target).abs() <= 1e-8);
            }
        }
        assert!(e.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn trace_and_determinant_match_spectrum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for m in 1..=12 {
        let s = random_spd(m, &mut rng);
        let e = eigendecompose(&s, DEFAULT_EIGEN_TOL).unwrap();
        let sum: f64 = e.eigenvalues.iter().sum();
        assert!((sum - s.trace()).abs() <= 1e-8 * s.trace().abs());
        let prod: f64 = e.eigenvalues.iter().product();
        let det = determinant(s.as_matrix());
        assert!((prod - det).abs() <= 1e-8 * det.abs(), "m={m}: {prod} vs {det}");
        let table = esp_table(&e.eigenvalues, m).unwrap();
        assert!((table.get(m, m) - prod).abs() <= 1e-8 * prod.abs());
    }
}

#[test]
fn esp_matches_subset_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let lambda: Vec<f64> = (0..8).map(|_| rng.random_range(0.001..5.0)).collect();
        let table = esp_table(&lambda, 8).unwrap();
        for k in 0..=8 {
            for v in k..=8 {
                let brute: f64 = subsets(v, k)
                    .iter()
                    .map(|s| s.iter().map(|&i| lambda[i]).product::<f64>())
                    .sum();
                let got = table.get(k, v);
                assert!((got - brute).abs() <= 1e-12 * brute, "e_{k}^{v}: {got} vs {brute}");
            }
        }
    }
}

#[test]
fn esp_small_cases() {
    let t = esp_table(&[1.0, 2.0, 3.0], 2).unwrap();
    assert_eq!(t.get(2, 3), 11.0);
    assert_eq!(t.get(1, 3), 6.0);
    assert_eq!(t.get(0, 0), 1.0);
    assert_eq!(t.get(2, 1), 0.0);
}

#[test]
fn shift_moves_spectrum_and_keeps_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = random_symmetric(7, &mut rng);
    let c = 2.5;
    let mut shifted = s.clone();
    shifted.add_diagonal(c);
    let a = eigendecompose(&s, DEFAULT_EIGEN_TOL).unwrap();
    let b = eigendecompose(&shifted, DEFAULT_EIGEN_TOL).unwrap();
    for j in 0..7 {
        assert!((b.eigenvalues[j] - a.eigenvalues[j] - c).abs() < 1e-10);
        let dot: f64 = (0..7).map(|i| a.eigenvectors[(i, j)] * b.eigenvectors[(i, j)]).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn determinant_of_singular_and_triangular() {
    let singular = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
    assert_eq!(determinant(&singular), 0.0);
    let upper = Matrix::from_rows(&[
        vec![2.0, 7.0, -1.0],
        vec![0.0, 3.0, 4.0],
        vec![0.0, 0.0, -0.5],
    ])
    .unwrap();
    assert!((determinant(&upper) + 3.0).abs() < 1e-14);
}
