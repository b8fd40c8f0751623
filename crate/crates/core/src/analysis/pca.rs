//! Principal components of an ensemble of flattened arrays.
//!
//! The eigenproblem is solved on the M × M Gram matrix of the samples, which
//! is far smaller than the pixel covariance for image ensembles.

use nalgebra::{ComplexField, DMatrix, SymmetricEigen};

/// Orthonormal components sorted by decreasing variance.
#[derive(Debug, Clone)]
pub struct Components<T> {
    /// Ensemble mean that was removed, if the decomposition was centred.
    pub mean: Option<Vec<T>>,
    pub vectors: Vec<Vec<T>>,
    /// Variance (eigenvalue of the Gram matrix) of each component.
    pub variances: Vec<f64>,
    /// Sum of all eigenvalues, for explained-variance fractions.
    pub total: f64,
}

/// Relative eigenvalue below which a direction is treated as null.
const RANK_TOL: f64 = 1e-12;

pub fn dot<T: ComplexField<RealField = f64> + Copy>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x.conjugate() * y)
}

/// Decompose `rows` (all of equal length). Components with negligible
/// variance are dropped, so fewer than `rows.len()` may be returned.
pub fn decompose<T: ComplexField<RealField = f64> + Copy>(rows: &[Vec<T>], centred: bool) -> Components<T> {
    let m = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    let mean = centred.then(|| {
        let mut acc = vec![T::zero(); p];
        for r in rows {
            for (a, &v) in acc.iter_mut().zip(r) {
                *a += v;
            }
        }
        let inv = T::from_real(1.0 / m as f64);
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    });
    let data: Vec<Vec<T>> = match &mean {
        Some(mu) => rows.iter().map(|r| r.iter().zip(mu).map(|(&v, &u)| v - u).collect()).collect(),
        None => rows.to_vec(),
    };
    if m == 0 || p == 0 {
        return Components { mean, vectors: Vec::new(), variances: Vec::new(), total: 0.0 };
    }
    let mut gram = DMatrix::<T>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = dot(&data[i], &data[j]);
            gram[(i, j)] = v;
            gram[(j, i)] = v.conjugate();
        }
    }
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut vectors = Vec::new();
    let mut variances = Vec::new();
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        if !(lambda > RANK_TOL * top) || top == 0.0 {
            break;
        }
        let mut u = vec![T::zero(); p];
        for (i, row) in data.iter().enumerate() {
            let w = eig.eigenvectors[(i, k)];
            for (a, &v) in u.iter_mut().zip(row) {
                *a += w * v;
            }
        }
        let norm = dot(&u, &u).real().sqrt();
        let inv = T::from_real(1.0 / norm);
        u.iter_mut().for_each(|a| *a *= inv);
        fix_sign(&mut u);
        vectors.push(u);
        variances.push(lambda);
    }
    Components { mean, vectors, variances, total }
}

/// Rotate `u` so that its largest-magnitude entry is real and positive.
fn fix_sign<T: ComplexField<RealField = f64> + Copy>(u: &mut [T]) {
    let Some(big) = u.iter().copied().max_by(|a, b| a.modulus().total_cmp(&b.modulus())) else {
        return;
    };
    let m = big.modulus();
    if m == 0.0 {
        return;
    }
    let phase = big.conjugate() * T::from_real(1.0 / m);
    u.iter_mut().for_each(|v| *v *= phase);
}

impl<T: ComplexField<RealField = f64> + Copy> Components<T> {
    /// Number of leading components whose cumulative explained variance
    /// first reaches `fraction`.
    pub fn count_for_variance(&self, fraction: f64) -> usize {
        if self.total <= 0.0 {
            return 0;
        }
        let mut acc = 0.0;
        for (k, v) in self.variances.iter().enumerate() {
            acc += v;
            if acc / self.total >= fraction {
                return k + 1;
            }
        }
        self.variances.len()
    }

    /// Projection of `x` (minus the mean, if any) onto the first `k` components.
    pub fn project(&self, x: &[T], k: usize) -> Vec<T> {
        let centred: Vec<T> = match &self.mean {
            Some(mu) => x.iter().zip(mu).map(|(&v, &u)| v - u).collect(),
            None => x.to_vec(),
        };
        let mut out = vec![T::zero(); x.len()];
        for u in self.vectors.iter().take(k) {
            let c = dot(u, &centred);
            for (o, &b) in out.iter_mut().zip(u) {
                *o += c * b;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn components_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<Complex64>> = (0..12)
            .map(|_| (0..40).map(|_| Complex64::new(rng.random(), rng.random())).collect())
            .collect();
        let c = decompose(&rows, false);
        for (i, a) in c.vectors.iter().enumerate() {
            for (j, b) in c.vectors.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - want).norm() < 1e-10);
            }
        }
        assert!((c.variances.iter().sum::<f64>() - c.total).abs() < 1e-9 * c.total);
    }

    #[test]
    fn rank_one_ensemble() {
        let base: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).sin()).collect();
        let rows: Vec<Vec<f64>> = (0..8).map(|k| base.iter().map(|v| v * (k as f64 - 3.5)).collect()).collect();
        let c = decompose(&rows, true);
        assert_eq!(c.vectors.len(), 1);
        assert_eq!(c.count_for_variance(0.87), 1);
        let p = c.project(&rows[0], 1);
        let mu = c.mean.as_ref().unwrap();
        for i in 0..30 {
            assert!((p[i] + mu[i] - rows[0][i]).abs() < 1e-10);
        }
    }
}
