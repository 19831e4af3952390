use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Row-major `rows x cols` matrix with orthonormal rows (when `rows <= cols`)
/// or orthonormal columns (otherwise), drawn uniformly via QR of a Gaussian.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (tall, short) = (rows.max(cols), rows.min(cols));
    let gauss: Vec<f64> = (0..tall * short)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let a = DMatrix::from_vec(tall, short, gauss);
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    // Fix the sign ambiguity so the draw is Haar-distributed.
    for j in 0..short {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = if rows <= cols { q[(j, i)] } else { q[(i, j)] };
        }
    }
    out
}

pub fn normal<R: Rng + ?Sized>(n: usize, std: f64, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::rng_from_seed;

    fn gram(m: &[f64], rows: usize, cols: usize, by_rows: bool) -> Vec<f64> {
        let n = if by_rows { rows } else { cols };
        let mut g = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                g[a * n + b] = if by_rows {
                    (0..cols).map(|j| m[a * cols + j] * m[b * cols + j]).sum()
                } else {
                    (0..rows).map(|i| m[i * cols + a] * m[i * cols + b]).sum()
                };
            }
        }
        g
    }

    #[test]
    fn wide_matrix_has_orthonormal_rows() {
        let m = orthogonal(4, 10, &mut rng_from_seed(1));
        let g = gram(&m, 4, 10, true);
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((g[a * 4 + b] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tall_matrix_has_orthonormal_columns() {
        let m = orthogonal(9, 3, &mut rng_from_seed(2));
        let g = gram(&m, 9, 3, false);
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((g[a * 3 + b] - want).abs() < 1e-12);
            }
        }
    }
}
