//! Spectral estimation of the cluster means from unlabeled data.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::norm;

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Array1<f64>,
}

/// Result of a power iteration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerResult {
    pub pair: EigenPair,
    pub iterations: usize,
    pub residual: f64,
}

/// `(1/n) Σ xᵢxᵢᵀ`.
pub fn second_moment(x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::Invalid("second moment of an empty sample".into()));
    }
    Ok(x.t().dot(&x) / n as f64)
}

fn fix_sign(v: &mut Array1<f64>) {
    if let Some(&first) = v.iter().find(|&&c| c != 0.0) {
        if first < 0.0 {
            v.mapv_inplace(|c| -c);
        }
    }
}

fn start_vectors(p: usize) -> [Array1<f64>; 2] {
    // a generic positive vector, then an alternating one for the restart
    let a: Array1<f64> = (0..p).map(|j| 1.0 + 1.0 / (j as f64 + 2.0)).collect();
    let b: Array1<f64> = (0..p)
        .map(|j| if j % 2 == 0 { 1.0 } else { -1.0 } * (1.0 + 1.0 / (j as f64 + 3.0)))
        .collect();
    let (na, nb) = (norm(&a), norm(&b));
    [a / na, b / nb]
}

fn power_run(m: &Array2<f64>, mut v: Array1<f64>, tol: f64, max_iter: usize) -> (Array1<f64>, f64, usize, f64) {
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let w = m.dot(&v);
        lambda = v.dot(&w);
        residual = norm(&(&w - &(&v * lambda)));
        if residual <= tol * (lambda.abs() + 1.0) {
            return (v, lambda, it, residual);
        }
        let nw = norm(&w);
        if !(nw > 0.0) || !nw.is_finite() {
            return (v, lambda, it, f64::INFINITY);
        }
        v = w / nw;
    }
    (v, lambda, max_iter, residual)
}

/// Leading eigenpair of a symmetric matrix by power iteration. Two fixed
/// starts are run and the converged pair with the larger eigenvalue is kept,
/// which guards against a start orthogonal to the leading eigenvector. The
/// eigenvector's first nonzero coordinate is positive.
pub fn top_eigenpair(m: &Array2<f64>, tol: f64, max_iter: usize) -> Result<PowerResult> {
    let (r, c) = m.dim();
    if r != c || r == 0 {
        return Err(Error::Dimension(format!("expected a nonempty square matrix, got {r}x{c}")));
    }
    if !(tol > 0.0) || max_iter == 0 {
        return Err(Error::Invalid("tol must be positive and max_iter at least 1".into()));
    }
    let mut total = 0;
    let mut last_residual = f64::INFINITY;
    let mut best: Option<(Array1<f64>, f64, f64)> = None;
    for start in start_vectors(r) {
        let (v, lambda, it, residual) = power_run(m, start, tol, max_iter);
        total += it;
        last_residual = residual;
        if residual <= tol * (lambda.abs() + 1.0) && best.as_ref().is_none_or(|b| lambda > b.1) {
            best = Some((v, lambda, residual));
        }
    }
    match best {
        Some((mut v, value, residual)) => {
            fix_sign(&mut v);
            Ok(PowerResult {
                pair: EigenPair { value, vector: v },
                iterations: total,
                residual,
            })
        }
        None => Err(Error::NoConvergence {
            iterations: total,
            residual: last_residual,
        }),
    }
}

/// Output of [`spectral_mean_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub theta_hat: Array1<f64>,
    pub lambda1: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `λ̂₁ ≤ 1`, so the estimate is the zero vector.
    pub clipped: bool,
    /// More coordinates than observations; the rate guarantee does not apply.
    pub p_exceeds_n: bool,
}

/// `θ̂ = √((λ̂₁ - 1)₊)·û₁` from the top eigenpair of the second moment.
pub fn spectral_mean_estimate_with(x: ArrayView2<f64>, tol: f64, max_iter: usize) -> Result<SpectralEstimate> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::Invalid(format!("spectral estimate needs n >= 2, got {n}")));
    }
    let m = second_moment(x)?;
    let res = top_eigenpair(&m, tol, max_iter)?;
    let excess = res.pair.value - 1.0;
    let clipped = excess <= 0.0;
    let theta_hat = &res.pair.vector * excess.max(0.0).sqrt();
    Ok(SpectralEstimate {
        theta_hat,
        lambda1: res.pair.value,
        iterations: res.iterations,
        residual: res.residual,
        clipped,
        p_exceeds_n: p > n,
    })
}

pub fn spectral_mean_estimate(x: ArrayView2<f64>) -> Result<SpectralEstimate> {
    spectral_mean_estimate_with(x, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// `‖θ̂ - θ‖ ∧ ‖θ̂ + θ‖`.
pub fn estimation_loss(est: &Array1<f64>, truth: &Array1<f64>) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "estimate has length {} but truth has {}",
            est.len(),
            truth.len()
        )));
    }
    Ok(norm(&(est - truth)).min(norm(&(est + truth))))
}

/// A procedure producing estimates `(θ̂, η̂)` from the rows of `(X, Y)`.
pub trait MeanEstimator: Sync {
    fn estimate(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)>;
}

/// Spectral estimates of both means, computed independently.
#[derive(Debug, Clone, Copy)]
pub struct SpectralEstimator {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpectralEstimator {
    fn default() -> Self {
        SpectralEstimator {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl MeanEstimator for SpectralEstimator {
    fn estimate(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        let t = spectral_mean_estimate_with(x, self.tol, self.max_iter)?;
        let e = spectral_mean_estimate_with(y, self.tol, self.max_iter)?;
        Ok((t.theta_hat, e.theta_hat))
    }
}

/// Returns fixed means regardless of the data.
#[derive(Debug, Clone)]
pub struct OracleEstimator {
    pub theta: Array1<f64>,
    pub eta: Array1<f64>,
}

impl MeanEstimator for OracleEstimator {
    fn estimate(&self, _x: ArrayView2<f64>, _y: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        Ok((self.theta.clone(), self.eta.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_label_config, gen_paired_sample, ModelParams};
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn second_moment_examples() {
        let v = array![[1.0, -2.0, 3.0]];
        let m = second_moment(v.view()).unwrap();
        assert_eq!(m, array![[1.0, -2.0, 3.0], [-2.0, 4.0, -6.0], [3.0, -6.0, 9.0]]);
        let x = array![[2.0, 1.0], [-2.0, -1.0], [2.0, 1.0]];
        let m = second_moment(x.view()).unwrap();
        assert_eq!(m, array![[4.0, 2.0], [2.0, 1.0]]);
        assert!(second_moment(Array2::<f64>::zeros((0, 2)).view()).is_err());
    }

    #[test]
    fn second_moment_lln() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let theta = array![2.0, 0.0, 0.0, 0.0, 0.0];
        let params = ModelParams::new(theta, array![1.0]).unwrap();
        let labels = gen_label_config(n, 0, &mut rng).unwrap();
        let s = gen_paired_sample(&params, &labels, &mut rng);
        let m = second_moment(s.x.view()).unwrap();
        assert!((m[[0, 0]] - 5.0).abs() < 0.1);
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(m[[i, j]], m[[j, i]]);
            }
        }
    }

    #[test]
    fn eigen_examples() {
        let id = Array2::<f64>::eye(3);
        let r = top_eigenpair(&id, 1e-12, 100).unwrap();
        assert_abs_diff_eq!(r.pair.value, 1.0, epsilon = 1e-12);
        let d = Array2::from_diag(&array![4.0, 1.0, 1.0]);
        let r = top_eigenpair(&d, 1e-12, 1000).unwrap();
        assert_abs_diff_eq!(r.pair.value, 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(r.pair.vector[0], 1.0, epsilon = 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = rng.random_range(2..30);
            let v: Array1<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let v = &v / norm(&v);
            let outer = v.view().insert_axis(ndarray::Axis(1)).dot(&v.view().insert_axis(ndarray::Axis(0)));
            let m = outer + Array2::<f64>::eye(p);
            let r = top_eigenpair(&m, 1e-12, 10_000).unwrap();
            assert_abs_diff_eq!(r.pair.value, 2.0, epsilon = 1e-10);
            let err = estimation_loss(&r.pair.vector, &v).unwrap();
            assert!(err < 1e-8);
            assert!((norm(&r.pair.vector) - 1.0).abs() < 1e-10);
            let first = r.pair.vector.iter().find(|&&c| c != 0.0).unwrap();
            assert!(*first > 0.0);
        }
    }

    #[test]
    fn eigen_restart_and_failure() {
        // top eigenvector orthogonal to the first start
        let p = 2;
        let [a, _] = start_vectors(p);
        let perp = array![-a[1], a[0]];
        let outer = perp.view().insert_axis(ndarray::Axis(1)).dot(&perp.view().insert_axis(ndarray::Axis(0)));
        let m = outer * 3.0;
        let r = top_eigenpair(&m, 1e-12, 100).unwrap();
        assert_abs_diff_eq!(r.pair.value, 3.0, epsilon = 1e-10);
        let slow = Array2::from_diag(&array![1.0, 0.999_999]);
        assert!(matches!(top_eigenpair(&slow, 1e-15, 3), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn spectral_noiseless() {
        let x = array![[2.0, 0.0], [-2.0, 0.0], [2.0, 0.0], [-2.0, 0.0]];
        let est = spectral_mean_estimate(x.view()).unwrap();
        assert_abs_diff_eq!(est.lambda1, 4.0, epsilon = 1e-10);
        assert_abs_diff_eq!(est.theta_hat[0], 3f64.sqrt(), epsilon = 1e-9);
        let z = Array2::<f64>::zeros((5, 3)) + 0.1;
        let est = spectral_mean_estimate(z.view()).unwrap();
        assert!(est.clipped);
        assert!(est.theta_hat.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn spectral_rate_and_equivariance() {
        let (p, n) = (50, 5000);
        let mut losses = Vec::new();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut theta = Array1::<f64>::zeros(p);
            theta[0] = 2.0;
            let params = ModelParams::new(theta.clone(), array![1.0]).unwrap();
            let labels = gen_label_config(n, 0, &mut rng).unwrap();
            let s = gen_paired_sample(&params, &labels, &mut rng);
            let est = spectral_mean_estimate(s.x.view()).unwrap();
            let l = estimation_loss(&est.theta_hat, &theta).unwrap();
            if seed == 0 {
                let neg = -&s.x;
                let est2 = spectral_mean_estimate(neg.view()).unwrap();
                let l2 = estimation_loss(&est2.theta_hat, &theta).unwrap();
                assert_abs_diff_eq!(l, l2, epsilon = 1e-8);
                let m = second_moment(s.x.view()).unwrap() - Array2::<f64>::eye(p);
                let top = top_eigenpair(&(m + Array2::<f64>::eye(p) * 10.0), 1e-12, 10_000).unwrap().pair.value - 10.0;
                assert!((top - 4.0).abs() <= 4.0 * (1.0 + 4.0) * (p as f64 / n as f64).sqrt());
            }
            losses.push(l);
        }
        losses.sort_by(f64::total_cmp);
        assert!(losses[25] <= 0.3, "median loss {}", losses[25]);
    }

    #[test]
    fn loss_examples() {
        let t = array![1.0, -2.0];
        assert_eq!(estimation_loss(&t, &t).unwrap(), 0.0);
        assert_eq!(estimation_loss(&-&t, &t).unwrap(), 0.0);
        assert_abs_diff_eq!(estimation_loss(&Array1::zeros(2), &t).unwrap(), 5f64.sqrt(), epsilon = 1e-15);
        assert!(estimation_loss(&array![1.0], &t).is_err());
    }
}
