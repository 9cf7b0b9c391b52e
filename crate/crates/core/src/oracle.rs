//! Brute-force reference computations. They share no code with the
//! estimators they check and are used by the selftest command and the test
//! suites.

use std::f64::consts::PI;

/// Exact interventional Shapley value of feature `j` at `x`, enumerating every
/// coalition. The value of a coalition `S` is the mean prediction over the
/// background rows with the features in `S` taken from `x`.
pub fn exact_shapley(f: &dyn Fn(&[f64]) -> f64, background: &[Vec<f64>], x: &[f64], j: usize) -> f64 {
    let m = x.len();
    assert!(m <= 20, "coalition enumeration is exponential in the feature count");
    let others: Vec<usize> = (0..m).filter(|&k| k != j).collect();
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let total_fact = fact(m);
    let mut phi = 0.0;
    for mask in 0u32..(1 << others.len()) {
        let mut coalition = vec![false; m];
        let mut size = 0;
        for (b, &k) in others.iter().enumerate() {
            if mask & (1 << b) != 0 {
                coalition[k] = true;
                size += 1;
            }
        }
        let without = coalition_value(f, background, x, &coalition);
        coalition[j] = true;
        let with = coalition_value(f, background, x, &coalition);
        let weight = fact(size) * fact(m - size - 1) / total_fact;
        phi += weight * (with - without);
    }
    phi
}

fn coalition_value(f: &dyn Fn(&[f64]) -> f64, background: &[Vec<f64>], x: &[f64], coalition: &[bool]) -> f64 {
    let mut total = 0.0;
    for z in background {
        let point: Vec<f64> = (0..x.len())
            .map(|k| if coalition[k] { x[k] } else { z[k] })
            .collect();
        total += f(&point);
    }
    total / background.len() as f64
}

/// Gaussian density.
pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// Posterior by direct multiplication of priors and densities, then
/// division by their sum.
pub fn direct_posterior(priors: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let joint: Vec<f64> = priors
        .iter()
        .enumerate()
        .map(|(k, p)| {
            p * x
                .iter()
                .enumerate()
                .map(|(s, &xs)| gaussian_pdf(xs, means[k][s], vars[k][s]))
                .product::<f64>()
        })
        .collect();
    let q: f64 = joint.iter().sum();
    joint.iter().map(|v| v / q).collect()
}

/// Central finite differences of `loss` at `params`.
pub fn central_difference(loss: &dyn Fn(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖ + ‖b‖, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-300)
}

/// The interaction statistic by direct summation of every partial
/// dependence term.
pub fn direct_interaction(f: &dyn Fn(&[f64]) -> f64, rows: &[Vec<f64>], j: usize) -> f64 {
    let n = rows.len() as f64;
    let with_j = |row: &[f64], v: f64| {
        let mut r = row.to_vec();
        r[j] = v;
        r
    };
    let pd_j = |v: f64| rows.iter().map(|r| f(&with_j(r, v))).sum::<f64>() / n;
    let pd_rest = |x: &[f64]| rows.iter().map(|r| f(&with_j(x, r[j]))).sum::<f64>() / n;
    let fx: Vec<f64> = rows.iter().map(|r| f(r)).collect();
    let a: Vec<f64> = rows.iter().map(|r| pd_j(r[j])).collect();
    let b: Vec<f64> = rows.iter().map(|r| pd_rest(r)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let (mf, ma, mb) = (mean(&fx), mean(&a), mean(&b));
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..rows.len() {
        let fc = fx[i] - mf;
        num += (fc - (a[i] - ma) - (b[i] - mb)).powi(2);
        den += fc * fc;
    }
    if den < 1e-12 {
        0.0
    } else {
        (num / den).min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_shapley_of_linear_model() {
        let bg = vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]];
        let f = |x: &[f64]| 3.0 * x[0] + 5.0 * x[1];
        let x = [1.0, 2.0];
        assert!((exact_shapley(&f, &bg, &x, 0) - 3.0 * (1.0 - 2.0)).abs() < 1e-12);
        assert!((exact_shapley(&f, &bg, &x, 1) - 5.0 * (2.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn central_difference_of_quadratic() {
        let g = central_difference(&|p: &[f64]| p[0] * p[0] + 3.0 * p[1], &[2.0, 1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }
}
