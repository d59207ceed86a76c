#![allow(dead_code)]

use std::path::{Path, PathBuf};

use bondmid::io::config::ModelFile;
use bondmid::model::{validate_params, BondUniverse, EventKind, ModelParams, ObservationEvent, Prior, SpreadModel};
use bondmid::ValidatedModel;

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// The three-bond example model shipped in `configs/model.toml`.
pub fn example_model() -> ValidatedModel {
    let path = configs_dir().join("model.toml");
    ModelFile::read(&path).unwrap().validate(&path).unwrap()
}

pub fn example_prior(model: &ValidatedModel) -> Prior {
    let d = model.dim();
    let mut cov = vec![vec![0.0; d]; d];
    for (i, r) in cov.iter_mut().enumerate() {
        r[i] = 1.0;
    }
    Prior::with_stationary_spreads(model, vec![150.0, 175.0, 190.0][..d].to_vec(), cov)
}

/// One bond with a constant half-spread `psi`.
pub fn scalar_model(sigma: f64, sigma_eps: f64, psi: f64) -> ValidatedModel {
    let p = ModelParams {
        sigma: vec![sigma],
        rho: vec![vec![1.0]],
        psi_scale: vec![psi],
        sigma_eps: vec![sigma_eps],
        spread: SpreadModel::Iid {
            mean: vec![0.0],
            var: vec![0.0],
        },
    };
    validate_params(&p, &BondUniverse::numbered(1).unwrap()).unwrap()
}

pub fn scalar_prior(mean: f64, var: f64) -> Prior {
    Prior {
        mean_y: vec![mean],
        cov_y: vec![vec![var]],
        mean_x: vec![0.0],
        cov_x: vec![vec![0.0]],
    }
}

/// Exact filter for one bond with constant spread and client trades only.
/// Returns the posterior mean and variance after each event.
pub fn kalman(
    mean: f64,
    var: f64,
    sigma: f64,
    sigma_eps: f64,
    psi: f64,
    events: &[ObservationEvent],
) -> Vec<(f64, f64)> {
    let (mut m, mut p, mut t) = (mean, var, 0.0);
    let r = sigma_eps * sigma_eps;
    events
        .iter()
        .map(|ev| {
            p += sigma * sigma * (ev.time - t);
            t = ev.time;
            let obs = match ev.kind {
                EventKind::ClientBuy { traded } => traded + psi,
                EventKind::ClientSell { traded } => traded - psi,
                other => panic!("not a client trade: {other:?}"),
            };
            let gain = p / (p + r);
            m += gain * (obs - m);
            p *= 1.0 - gain;
            (m, p)
        })
        .collect()
}

/// Standard normal CDF through `statrs`, kept apart from the library's own.
pub fn phi_ref(u: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-u / std::f64::consts::SQRT_2)
}

pub fn phi_sf_ref(u: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(u / std::f64::consts::SQRT_2)
}

pub fn density_ref(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Adaptive Simpson integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 50)
}

/// Mean, standard deviation and fourth central moment of the density
/// proportional to `f` on `[a, b]`.
pub fn moments<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let z = integrate(f, a, b, 1e-13);
    let mean = integrate(&|u| u * f(u), a, b, 1e-13) / z;
    let var = integrate(&|u| (u - mean).powi(2) * f(u), a, b, 1e-13) / z;
    let m4 = integrate(&|u| (u - mean).powi(4) * f(u), a, b, 1e-13) / z;
    (mean, var.sqrt(), m4)
}

/// Sample mean and standard deviation (divisor `n`).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

/// `d` by `d` equicorrelation matrix.
pub fn equicorrelation(d: usize, r: f64) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { r }).collect()).collect()
}
