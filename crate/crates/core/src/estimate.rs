//! Off-line calibration: mid-yield covariance from composite series, the
//! half-spread law from trade-versus-composite deviations, and the trade noise
//! level from the average composite spread.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EventKind, ModelParams, ObservationEvent, SpreadModel};

/// Minimum aligned increments per bond pair.
pub const MIN_INCREMENTS: usize = 30;
/// Minimum proxy samples per bond in data mode.
pub const MIN_PROXIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("insufficient data for {what}: {found} usable samples, need {needed}{}", if *.fallback { " (composite spread fallback available)" } else { "" })]
    InsufficientData {
        what: String,
        found: usize,
        needed: usize,
        fallback: bool,
    },
    #[error("composite series of bonds {a} and {b} do not overlap in time")]
    NoOverlap { a: usize, b: usize },
    #[error("bond {bond} has zero realized volatility")]
    DegenerateVolatility { bond: usize },
    #[error("bond {bond}: composite timestamps must be strictly increasing (sample {index})")]
    NonIncreasingTime { bond: usize, index: usize },
    #[error("bond {bond}: composite spread must be positive, got {value}")]
    NonPositiveSpread { bond: usize, value: f64 },
    #[error("bond {bond} has no composite spread samples")]
    MissingSpreads { bond: usize },
    #[error("bond {bond}: degenerate spread target ({reason})")]
    DegenerateSpread { bond: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeSample {
    pub time: f64,
    pub mid: f64,
    /// Full bid-ask spread, bp.
    pub spread: Option<f64>,
}

/// Composite quotes per bond.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositeSeries {
    pub bonds: Vec<Vec<CompositeSample>>,
}

impl CompositeSeries {
    pub fn dim(&self) -> usize {
        self.bonds.len()
    }

    pub fn validate(&self) -> Result<(), EstimateError> {
        for (bond, samples) in self.bonds.iter().enumerate() {
            for (index, w) in samples.windows(2).enumerate() {
                if !(w[1].time > w[0].time) {
                    return Err(EstimateError::NonIncreasingTime { bond, index: index + 1 });
                }
            }
            for s in samples {
                if let Some(v) = s.spread {
                    if !(v > 0.0) {
                        return Err(EstimateError::NonPositiveSpread { bond, value: v });
                    }
                }
            }
        }
        Ok(())
    }

    /// Composite mid of `bond` at `t`, carrying the last sample forward.
    pub fn mid_at(&self, bond: usize, t: f64) -> Option<f64> {
        let samples = &self.bonds[bond];
        let n = samples.partition_point(|s| s.time <= t);
        (n > 0).then(|| samples[n - 1].mid)
    }

    /// Time-weighted average full spread of `bond`, each sample held until the next.
    pub fn average_spread(&self, bond: usize) -> Result<f64, EstimateError> {
        let spreads: Vec<(f64, f64)> = self.bonds[bond]
            .iter()
            .filter_map(|s| s.spread.map(|v| (s.time, v)))
            .collect();
        match spreads.len() {
            0 => Err(EstimateError::MissingSpreads { bond }),
            1 => Ok(spreads[0].1),
            n => {
                let span = spreads[n - 1].0 - spreads[0].0;
                let weighted: f64 = spreads.windows(2).map(|w| w[0].1 * (w[1].0 - w[0].0)).sum();
                Ok(weighted / span)
            }
        }
    }
}

/// Absolute deviations `|trade - composite mid|` per bond, bp.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpreadProxySample {
    pub bonds: Vec<Vec<f64>>,
}

impl SpreadProxySample {
    /// Proxies from client trades, against the composite mid in force at each trade.
    pub fn from_trades(events: &[ObservationEvent], series: &CompositeSeries) -> Self {
        let mut bonds = vec![Vec::new(); series.dim()];
        for ev in events {
            let traded = match ev.kind {
                EventKind::ClientBuy { traded } | EventKind::ClientSell { traded } => traded,
                _ => continue,
            };
            if ev.bond >= bonds.len() {
                continue;
            }
            if let Some(mid) = series.mid_at(ev.bond, ev.time) {
                bonds[ev.bond].push((traded - mid).abs());
            }
        }
        Self { bonds }
    }
}

/// Per-bond volatility (bp per square-root day) and correlation matrix from
/// composite mids.
///
/// Each series is carried forward onto a regular grid of step
/// `sampling_interval` spanning the common time range. An increment enters a
/// bond's variance when that bond has fresh samples at both ends, and a
/// pair's covariance when both bonds do. The correlation matrix is projected onto
/// the PSD cone if it comes out marginally indefinite.
pub fn estimate_sigma_rho(
    series: &CompositeSeries,
    sampling_interval: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), EstimateError> {
    if !(sampling_interval > 0.0 && sampling_interval.is_finite()) {
        return Err(EstimateError::InvalidArgument(format!(
            "sampling interval must be positive, got {sampling_interval}"
        )));
    }
    series.validate()?;
    let d = series.dim();
    if d == 0 {
        return Err(EstimateError::InvalidArgument("no bonds in composite series".into()));
    }
    for (bond, s) in series.bonds.iter().enumerate() {
        if s.is_empty() {
            return Err(EstimateError::InsufficientData {
                what: format!("bond {bond}"),
                found: 0,
                needed: MIN_INCREMENTS,
                fallback: false,
            });
        }
    }
    let (mut start, mut end) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut first_bond, mut last_bond) = (0, 0);
    for (b, s) in series.bonds.iter().enumerate() {
        if s[0].time > start {
            start = s[0].time;
            first_bond = b;
        }
        if s[s.len() - 1].time < end {
            end = s[s.len() - 1].time;
            last_bond = b;
        }
    }
    if end < start {
        return Err(EstimateError::NoOverlap {
            a: first_bond,
            b: last_bond,
        });
    }
    let slack = 1e-9 * sampling_interval;
    let n_grid = ((end - start + slack) / sampling_interval).floor() as usize + 1;

    // carried-forward values and freshness per grid point
    let mut values = vec![vec![0.0; n_grid]; d];
    let mut fresh = vec![vec![false; n_grid]; d];
    for (b, samples) in series.bonds.iter().enumerate() {
        let mut next = 0;
        let mut last = f64::NAN;
        for g in 0..n_grid {
            let t = start + g as f64 * sampling_interval + slack;
            let before = next;
            while next < samples.len() && samples[next].time <= t {
                last = samples[next].mid;
                next += 1;
            }
            values[b][g] = last;
            fresh[b][g] = next > before;
        }
    }
    let increments: Vec<Vec<f64>> = values
        .iter()
        .map(|v| v.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    // an increment counts only if both of its end points are fresh, so a
    // stale stretch never folds several grid steps into one increment
    let mask = |b: usize, k: usize| fresh[b][k] && fresh[b][k + 1];

    let moments = |i: usize, j: usize| -> Result<(f64, f64, f64), EstimateError> {
        let idx: Vec<usize> = (0..n_grid - 1).filter(|&k| mask(i, k) && mask(j, k)).collect();
        if idx.len() < MIN_INCREMENTS {
            return Err(EstimateError::InsufficientData {
                what: if i == j { format!("bond {i}") } else { format!("bond pair ({i}, {j})") },
                found: idx.len(),
                needed: MIN_INCREMENTS,
                fallback: false,
            });
        }
        let n = idx.len() as f64;
        let mi = idx.iter().map(|&k| increments[i][k]).sum::<f64>() / n;
        let mj = idx.iter().map(|&k| increments[j][k]).sum::<f64>() / n;
        let (mut cij, mut cii, mut cjj) = (0.0, 0.0, 0.0);
        for &k in &idx {
            let (a, b) = (increments[i][k] - mi, increments[j][k] - mj);
            cij += a * b;
            cii += a * a;
            cjj += b * b;
        }
        Ok((cij / (n - 1.0), cii / (n - 1.0), cjj / (n - 1.0)))
    };

    let mut sigma = vec![0.0; d];
    for (i, s) in sigma.iter_mut().enumerate() {
        let (var, _, _) = moments(i, i)?;
        if !(var > 0.0) {
            return Err(EstimateError::DegenerateVolatility { bond: i });
        }
        *s = (var / sampling_interval).sqrt();
    }
    let mut rho = DMatrix::identity(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let (cij, cii, cjj) = moments(i, j)?;
            if !(cii > 0.0) {
                return Err(EstimateError::DegenerateVolatility { bond: i });
            }
            if !(cjj > 0.0) {
                return Err(EstimateError::DegenerateVolatility { bond: j });
            }
            let r = (cij / (cii * cjj).sqrt()).clamp(-1.0, 1.0);
            rho[(i, j)] = r;
            rho[(j, i)] = r;
        }
    }
    let rho = nearest_correlation(rho);
    Ok((sigma, crate::model::to_rows(&rho)))
}

/// Clips negative eigenvalues at zero and rescales back to a unit diagonal.
pub fn nearest_correlation(rho: DMatrix<f64>) -> DMatrix<f64> {
    let d = rho.nrows();
    let eig = rho.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return rho;
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let m = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    let scale: Vec<f64> = (0..d).map(|i| m[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]) / (scale[i] * scale[j]);
            v.clamp(-1.0, 1.0)
        }
    })
}

/// Log-normal parameters `(mu_x, s_x^2)` with `E[exp x] = mean` and `SD[exp x] = std`.
pub fn lognormal_from_moments(mean: f64, std: f64) -> Option<(f64, f64)> {
    if !(mean > 0.0 && mean.is_finite() && std >= 0.0 && std.is_finite()) {
        return None;
    }
    let r = std / mean;
    let s2 = (r * r).ln_1p();
    Some((mean.ln() - 0.5 * s2, s2))
}

/// Where the spread targets come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpreadTarget {
    /// Mean and std of the half-spread set to fractions of the average composite half-spread.
    Composite { mean_shrink: f64, std_shrink: f64 },
    /// Empirical mean and std of the proxies, falling back to the composite
    /// targets with `fallback_shrink` when a bond has too few proxies.
    Data { fallback_shrink: f64 },
}

impl Default for SpreadTarget {
    fn default() -> Self {
        SpreadTarget::Composite {
            mean_shrink: 1.0 / 3.0,
            std_shrink: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitSource {
    Composite,
    Data,
}

/// Fitted half-spread law per bond: `psi = exp(x)`, `x ~ N(x_mean, x_var)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadFit {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub x_var: Vec<f64>,
    pub source: Vec<FitSource>,
}

impl SpreadFit {
    /// IID spread dynamics with unit spread multiplier.
    pub fn iid_model(&self) -> (Vec<f64>, SpreadModel) {
        (
            vec![1.0; self.mean.len()],
            SpreadModel::Iid {
                mean: self.x_mean.clone(),
                var: self.x_var.clone(),
            },
        )
    }

    /// OU dynamics with the fitted stationary variance and the given mean
    /// reversion speeds; the log-mean moves into the spread multiplier.
    ///
    /// Only the stationary variance is matched. Cross-bond spread correlation
    /// and the speeds themselves are not estimated.
    pub fn ou_model(&self, a: &[f64]) -> Result<(Vec<f64>, SpreadModel), EstimateError> {
        let d = self.mean.len();
        if a.len() != d || a.iter().any(|&v| !(v > 0.0)) {
            return Err(EstimateError::InvalidArgument(
                "mean reversion speeds must be positive, one per bond".into(),
            ));
        }
        let psi_scale = self.x_mean.iter().map(|m| m.exp()).collect();
        let mut vvt = vec![vec![0.0; d]; d];
        for i in 0..d {
            vvt[i][i] = 2.0 * a[i] * self.x_var[i];
        }
        Ok((psi_scale, SpreadModel::Ou { a: a.to_vec(), vvt }))
    }
}

fn composite_targets(
    series: Option<&CompositeSeries>,
    bond: usize,
    mean_shrink: f64,
    std_shrink: f64,
) -> Result<(f64, f64), EstimateError> {
    let series = series.ok_or(EstimateError::MissingSpreads { bond })?;
    if bond >= series.dim() {
        return Err(EstimateError::MissingSpreads { bond });
    }
    let half = 0.5 * series.average_spread(bond)?;
    Ok((mean_shrink * half, std_shrink * half))
}

/// Fits a log-normal half-spread law per bond.
pub fn fit_spread_lognormal(
    proxies: &SpreadProxySample,
    series: Option<&CompositeSeries>,
    target: SpreadTarget,
) -> Result<SpreadFit, EstimateError> {
    let d = match series {
        Some(s) => s.dim().max(proxies.bonds.len()),
        None => proxies.bonds.len(),
    };
    if d == 0 {
        return Err(EstimateError::InvalidArgument("no bonds to fit".into()));
    }
    let mut fit = SpreadFit {
        mean: Vec::with_capacity(d),
        std: Vec::with_capacity(d),
        x_mean: Vec::with_capacity(d),
        x_var: Vec::with_capacity(d),
        source: Vec::with_capacity(d),
    };
    for bond in 0..d {
        let samples = proxies.bonds.get(bond).map(Vec::as_slice).unwrap_or(&[]);
        if samples.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(EstimateError::InvalidArgument(format!(
                "bond {bond}: proxies must be finite and nonnegative"
            )));
        }
        let (m, s, source) = match target {
            SpreadTarget::Composite { mean_shrink, std_shrink } => {
                let (m, s) = composite_targets(series, bond, mean_shrink, std_shrink)?;
                (m, s, FitSource::Composite)
            }
            SpreadTarget::Data { fallback_shrink } => {
                if samples.len() >= MIN_PROXIES {
                    let n = samples.len() as f64;
                    let m = samples.iter().sum::<f64>() / n;
                    let var = samples.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
                    if !(var > 0.0) {
                        return Err(EstimateError::DegenerateSpread {
                            bond,
                            reason: "proxies have zero dispersion".into(),
                        });
                    }
                    (m, var.sqrt(), FitSource::Data)
                } else {
                    match composite_targets(series, bond, fallback_shrink, fallback_shrink) {
                        Ok((m, s)) => (m, s, FitSource::Composite),
                        Err(_) => {
                            return Err(EstimateError::InsufficientData {
                                what: format!("spread proxies of bond {bond}"),
                                found: samples.len(),
                                needed: MIN_PROXIES,
                                fallback: false,
                            })
                        }
                    }
                }
            }
        };
        let (mu, s2) = lognormal_from_moments(m, s).ok_or_else(|| EstimateError::DegenerateSpread {
            bond,
            reason: format!("target mean {m} and std {s}"),
        })?;
        fit.mean.push(m);
        fit.std.push(s);
        fit.x_mean.push(mu);
        fit.x_var.push(s2);
        fit.source.push(source);
    }
    Ok(fit)
}

/// `sigma_eps = fraction * time-average composite full spread`, per bond.
/// A zero fraction needs no spreads.
pub fn derive_sigma_eps(series: &CompositeSeries, fraction: f64) -> Result<Vec<f64>, EstimateError> {
    if !(fraction >= 0.0 && fraction.is_finite()) {
        return Err(EstimateError::InvalidArgument(format!(
            "noise fraction must be nonnegative, got {fraction}"
        )));
    }
    series.validate()?;
    if fraction == 0.0 {
        return Ok(vec![0.0; series.dim()]);
    }
    (0..series.dim())
        .map(|b| series.average_spread(b).map(|s| fraction * s))
        .collect()
}

/// Settings for a full calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateOptions {
    /// Grid step for aligning composite mids, days.
    pub sampling_interval: f64,
    /// `sigma_eps` as a fraction of the average composite full spread.
    pub noise_fraction: f64,
    pub spread: SpreadTarget,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            sampling_interval: 1.0,
            noise_fraction: 0.05,
            spread: SpreadTarget::default(),
        }
    }
}

/// Complete IID-spread model parameters from composite series and trades.
pub fn estimate_model(
    series: &CompositeSeries,
    trades: &[ObservationEvent],
    options: &EstimateOptions,
) -> Result<(ModelParams, SpreadFit), EstimateError> {
    let (sigma, rho) = estimate_sigma_rho(series, options.sampling_interval)?;
    let sigma_eps = derive_sigma_eps(series, options.noise_fraction)?;
    let proxies = SpreadProxySample::from_trades(trades, series);
    let fit = fit_spread_lognormal(&proxies, Some(series), options.spread)?;
    let (psi_scale, spread) = fit.iid_model();
    Ok((
        ModelParams {
            sigma,
            rho,
            psi_scale,
            sigma_eps,
            spread,
        },
        fit,
    ))
}
