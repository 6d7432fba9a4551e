//! Least squares and multinomial logistic regression.

use nalgebra::{DMatrix, DVector};

/// Relative pivot size below which a Gram matrix is treated as singular.
const PIVOT_TOLERANCE: f64 = 1e-10;

fn cholesky_solve(gram: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = gram.diagonal().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let chol = gram.cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..l.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    if min_pivot < PIVOT_TOLERANCE * scale {
        return None;
    }
    Some(chol.solve(rhs))
}

/// Ordinary least squares via the normal equations. `None` if the design is singular.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let gram = x.transpose() * x;
    let rhs = x.transpose() * y;
    cholesky_solve(gram, &rhs)
}

/// Class probabilities under a softmax with class 0 as reference.
/// `coef` has one row per non-reference class.
pub fn softmax_probs(coef: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let k = coef.nrows() + 1;
    let mut z = vec![0.0; k];
    for c in 1..k {
        z[c] = (0..x.len()).map(|j| coef[(c - 1, j)] * x[j]).sum();
    }
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = p.iter().sum();
    for v in &mut p {
        *v /= s;
    }
    p
}

fn penalized_log_likelihood(x: &DMatrix<f64>, y: &[usize], coef: &DMatrix<f64>, ridge: f64) -> f64 {
    let mut ll = 0.0;
    let mut row = vec![0.0; x.ncols()];
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            row[j] = x[(i, j)];
        }
        let p = softmax_probs(coef, &row);
        ll += p[y[i]].max(1e-300).ln();
    }
    let penalty: f64 = (0..coef.nrows())
        .flat_map(|c| (1..coef.ncols()).map(move |j| (c, j)))
        .map(|(c, j)| coef[(c, j)] * coef[(c, j)])
        .sum();
    ll - 0.5 * ridge * penalty
}

/// Multinomial logistic regression by damped Newton steps. The first design
/// column is the unpenalized intercept. Returns `None` if a Newton system is singular.
pub fn fit_softmax(
    x: &DMatrix<f64>,
    y: &[usize],
    classes: usize,
    ridge: f64,
) -> Option<DMatrix<f64>> {
    let d = x.ncols();
    let free = classes - 1;
    let dim = free * d;
    let mut coef = DMatrix::<f64>::zeros(free, d);
    let mut current = penalized_log_likelihood(x, y, &coef, ridge);
    let mut row = vec![0.0; d];
    for _ in 0..100 {
        let mut grad = DVector::<f64>::zeros(dim);
        let mut info = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..x.nrows() {
            for j in 0..d {
                row[j] = x[(i, j)];
            }
            let p = softmax_probs(&coef, &row);
            for a in 0..free {
                let ya = if y[i] == a + 1 { 1.0 } else { 0.0 };
                let r = ya - p[a + 1];
                for j in 0..d {
                    grad[a * d + j] += r * row[j];
                }
                for b in 0..free {
                    let w = p[a + 1] * (if a == b { 1.0 } else { 0.0 } - p[b + 1]);
                    if w == 0.0 {
                        continue;
                    }
                    for j in 0..d {
                        let wj = w * row[j];
                        for l in 0..d {
                            info[(a * d + j, b * d + l)] += wj * row[l];
                        }
                    }
                }
            }
        }
        for a in 0..free {
            for j in 1..d {
                grad[a * d + j] -= ridge * coef[(a, j)];
                info[(a * d + j, a * d + j)] += ridge;
            }
        }
        let step = cholesky_solve(info, &grad)?;
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut trial = coef.clone();
            for a in 0..free {
                for j in 0..d {
                    trial[(a, j)] += t * step[a * d + j];
                }
            }
            let value = penalized_log_likelihood(x, y, &trial, ridge);
            if value >= current {
                coef = trial;
                current = value;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        let size = step.amax() * t;
        if !improved || size < 1e-9 {
            break;
        }
    }
    Some(coef)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ols_recovers_exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let b = ols(&x, &y).unwrap();
        assert_abs_diff_eq!(b[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b[1], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn ols_rejects_collinear_design() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 2.0, 1.0, 2.0, 4.0, 1.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(ols(&x, &y).is_none());
    }

    #[test]
    fn logistic_recovers_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 20000;
        let mut data = Vec::with_capacity(2 * n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let v: f64 = rng.random_range(-2.0..2.0);
            let p = 1.0 / (1.0 + (-(0.5 + 1.5 * v)).exp());
            data.extend([1.0, v]);
            y.push(rng.random_bool(p) as usize);
        }
        let x = DMatrix::from_row_slice(n, 2, &data);
        let coef = fit_softmax(&x, &y, 2, 1e-6).unwrap();
        assert_abs_diff_eq!(coef[(0, 0)], 0.5, epsilon = 0.1);
        assert_abs_diff_eq!(coef[(0, 1)], 1.5, epsilon = 0.1);
    }

    #[test]
    fn multinomial_matches_empirical_frequencies_without_inputs() {
        let y = vec![0, 1, 1, 2, 2, 2, 2, 0, 1, 2];
        let x = DMatrix::from_element(y.len(), 1, 1.0);
        let coef = fit_softmax(&x, &y, 3, 0.0).unwrap();
        let p = softmax_probs(&coef, &[1.0]);
        assert_abs_diff_eq!(p[0], 0.2, epsilon = 1e-6);
        assert_abs_diff_eq!(p[1], 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(p[2], 0.5, epsilon = 1e-6);
    }
}
