use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::GaussianError;
use crate::model::ValidatedModel;

/// `n` i.i.d. draws of `mean + factor * z`, one per row.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>, GaussianError> {
    let d = mean.len();
    if factor.nrows() != d {
        return Err(GaussianError::DimensionMismatch {
            expected: d,
            found: factor.nrows(),
        });
    }
    let m = factor.ncols();
    let mut out = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(m);
    for r in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let draw = mean + factor * &z;
        out.row_mut(r).copy_from(&draw.transpose());
    }
    Ok(out)
}

/// Law of the other coordinates' increments given that coordinate `i` moved by
/// `delta_i` over `tau`.
///
/// Returns the mean shift `delta_i * rho[i][j] * sigma[j] / sigma[i]` for each
/// `j != i` (in bond order) and the conditional covariance scaled by `tau`.
pub fn conditional_mvn_given_one(
    model: &ValidatedModel,
    i: usize,
    delta_i: f64,
    tau: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), GaussianError> {
    let d = model.dim();
    if d < 2 {
        return Err(GaussianError::WrongDimension(d));
    }
    if i >= d {
        return Err(GaussianError::BondOutOfRange { bond: i, d });
    }
    if !(tau > 0.0) || tau.is_nan() {
        return Err(GaussianError::NonPositiveTime(tau));
    }
    let cf = model.conditional_factor(i);
    Ok((&cf.loadings * delta_i, &cf.cov * tau))
}

/// Posterior of the mid given its previous value and one noisy reading
/// `y_tilde = y + eps`: precision-weighted mean and the harmonic variance.
pub fn conditional_posterior_y(
    y_prev: f64,
    y_tilde: f64,
    sigma2_dt: f64,
    sigma2_eps: f64,
) -> Result<(f64, f64), GaussianError> {
    let total = sigma2_dt + sigma2_eps;
    if !(total > 0.0) {
        return Err(GaussianError::DegenerateBoth);
    }
    let mean = y_tilde + sigma2_eps / total * (y_prev - y_tilde);
    let var = sigma2_dt * sigma2_eps / total;
    Ok((mean, var))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_params, BondUniverse, ModelParams, SpreadModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(sigma: Vec<f64>, rho: Vec<Vec<f64>>) -> ValidatedModel {
        let d = sigma.len();
        let p = ModelParams {
            sigma,
            rho,
            psi_scale: vec![1.0; d],
            sigma_eps: vec![0.1; d],
            spread: SpreadModel::Iid {
                mean: vec![0.0; d],
                var: vec![0.1; d],
            },
        };
        validate_params(&p, &BondUniverse::numbered(d).unwrap()).unwrap()
    }

    #[test]
    fn zero_covariance_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mean = DVector::from_vec(vec![1.0, -2.0]);
        let draws = sample_mvn(&mean, &DMatrix::zeros(2, 2), 5, &mut rng).unwrap();
        for r in 0..5 {
            assert_eq!(draws[(r, 0)], 1.0);
            assert_eq!(draws[(r, 1)], -2.0);
        }
        assert!(sample_mvn(&mean, &DMatrix::zeros(3, 3), 1, &mut rng).is_err());
    }

    #[test]
    fn standard_normal_mean_within_clt_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let draws = sample_mvn(&DVector::zeros(1), &DMatrix::identity(1, 1), n, &mut rng).unwrap();
        let mean = draws.column(0).mean();
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn correlated_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let l = cov.cholesky().unwrap().l();
        let n = 1_000_000;
        let draws = sample_mvn(&DVector::zeros(2), &l, n, &mut rng).unwrap();
        let (a, b) = (draws.column(0), draws.column(1));
        let (ma, mb) = (a.mean(), b.mean());
        let cov_ab = a.iter().zip(b.iter()).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
        let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n as f64;
        let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n as f64;
        let corr = cov_ab / (va * vb).sqrt();
        assert!((corr - 0.9).abs() < 0.005, "{corr}");
    }

    #[test]
    fn independent_coordinates_do_not_shift() {
        let m = model(vec![0.5, 0.6, 0.7], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let (shift, cov) = conditional_mvn_given_one(&m, 1, 3.0, 2.0).unwrap();
        assert_eq!(shift.as_slice(), &[0.0, 0.0]);
        assert!((cov[(0, 0)] - 0.25 * 2.0).abs() < 1e-15);
        assert!((cov[(1, 1)] - 0.49 * 2.0).abs() < 1e-15);
        assert_eq!(cov[(0, 1)], 0.0);
    }

    #[test]
    fn comonotone_pair_moves_one_for_one() {
        let m = model(vec![0.5, 0.5], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        let (shift, cov) = conditional_mvn_given_one(&m, 0, 1.7, 0.5).unwrap();
        assert!((shift[0] - 1.7).abs() < 1e-15);
        assert!(cov[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn one_bond_cannot_condition() {
        let m = model(vec![0.5], vec![vec![1.0]]);
        assert_eq!(
            conditional_mvn_given_one(&m, 0, 1.0, 1.0),
            Err(GaussianError::WrongDimension(1))
        );
    }

    #[test]
    fn posterior_y_limits() {
        assert_eq!(conditional_posterior_y(1.0, 3.0, 0.7, 0.0).unwrap(), (3.0, 0.0));
        assert_eq!(conditional_posterior_y(1.0, 3.0, 0.0, 0.7).unwrap(), (1.0, 0.0));
        assert_eq!(conditional_posterior_y(1.0, 3.0, 0.5, 0.5).unwrap(), (2.0, 0.25));
        assert_eq!(
            conditional_posterior_y(1.0, 3.0, 0.0, 0.0),
            Err(GaussianError::DegenerateBoth)
        );
    }

    proptest::proptest! {
        #[test]
        fn posterior_y_shrinks_and_interpolates(
            y_prev in -100.0f64..100.0,
            y_tilde in -100.0f64..100.0,
            s2dt in 0.0f64..10.0,
            s2eps in 0.0f64..10.0,
        ) {
            proptest::prop_assume!(s2dt + s2eps > 1e-9);
            let (mean, var) = conditional_posterior_y(y_prev, y_tilde, s2dt, s2eps).unwrap();
            proptest::prop_assert!(var <= s2dt.min(s2eps) * (1.0 + 1e-12));
            let (lo, hi) = (y_prev.min(y_tilde), y_prev.max(y_tilde));
            proptest::prop_assert!(mean >= lo - 1e-9 && mean <= hi + 1e-9);
        }
    }
}
