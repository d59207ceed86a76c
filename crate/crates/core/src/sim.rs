//! Synthetic markets: exact paths of mid yields and log-spreads with an
//! observation stream of all five event kinds.

use rand::distr::{Distribution, Uniform};
use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimate::{CompositeSample, CompositeSeries, SpreadProxySample};
use crate::gaussian::linalg::{clipped_sqrt, psd_factor};
use crate::gaussian::ou_transition;
use crate::model::{EventKind, ObservationEvent, Prior, SpreadDynamics, ValidatedModel, Violations};
use crate::rng::{Purpose, StreamRng, Substream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation config: `{field}` {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("invalid prior: {0}")]
    InvalidPrior(Violations),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SimError {
    SimError::InvalidConfig {
        field,
        reason: reason.into(),
    }
}

/// Probabilities of the five event kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventMixture {
    pub client_buy: f64,
    pub client_sell: f64,
    pub away_buy: f64,
    pub away_sell: f64,
    pub d2d: f64,
}

impl EventMixture {
    pub fn trades_only() -> Self {
        Self {
            client_buy: 0.5,
            client_sell: 0.5,
            away_buy: 0.0,
            away_sell: 0.0,
            d2d: 0.0,
        }
    }

    pub fn uniform() -> Self {
        Self {
            client_buy: 0.2,
            client_sell: 0.2,
            away_buy: 0.2,
            away_sell: 0.2,
            d2d: 0.2,
        }
    }

    fn probabilities(&self) -> [f64; 5] {
        [self.client_buy, self.client_sell, self.away_buy, self.away_sell, self.d2d]
    }
}

impl Default for EventMixture {
    fn default() -> Self {
        Self::uniform()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated period, days.
    pub horizon: f64,
    /// Events per day, per bond.
    pub intensity: Vec<f64>,
    #[serde(default)]
    pub mixture: EventMixture,
    /// Scale of the half-normal gap between a losing quote and the winning level, bp.
    pub quote_offset_scale: f64,
    /// Inter-dealer band half-width per bond, bp.
    pub alpha: Vec<f64>,
    /// Spacing of extra path points where composites are recorded, days.
    #[serde(default)]
    pub grid_step: Option<f64>,
    /// Composite full bid-ask spread per bond, bp. Defaults to six times the
    /// stationary mean half-spread.
    #[serde(default)]
    pub composite_spread: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self, d: usize) -> Result<(), SimError> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", format!("must be finite and nonnegative, got {}", self.horizon)));
        }
        if self.intensity.len() != d {
            return Err(invalid("intensity", format!("needs {d} entries, got {}", self.intensity.len())));
        }
        if self.intensity.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid("intensity", "entries must be finite and nonnegative"));
        }
        let p = self.mixture.probabilities();
        if p.iter().any(|v| !(*v >= 0.0)) {
            return Err(invalid("mixture", "probabilities must be nonnegative"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid("mixture", format!("probabilities must sum to 1, got {total}")));
        }
        if !(self.quote_offset_scale >= 0.0 && self.quote_offset_scale.is_finite()) {
            return Err(invalid("quote_offset_scale", "must be finite and nonnegative"));
        }
        if self.alpha.len() != d {
            return Err(invalid("alpha", format!("needs {d} entries, got {}", self.alpha.len())));
        }
        if self.alpha.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("alpha", "entries must be positive"));
        }
        if let Some(g) = self.grid_step {
            if !(g > 0.0 && g.is_finite()) {
                return Err(invalid("grid_step", "must be positive"));
            }
        }
        if let Some(c) = &self.composite_spread {
            if c.len() != d {
                return Err(invalid("composite_spread", format!("needs {d} entries, got {}", c.len())));
            }
            if c.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(invalid("composite_spread", "entries must be positive"));
            }
        }
        Ok(())
    }
}

/// Random draws behind one event, kept so the event can be re-derived from the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventNoise {
    pub eps: f64,
    /// Half-normal gap for traded-away quotes, uniform band offset for
    /// inter-dealer prints, zero otherwise.
    pub offset: f64,
}

/// Ground truth of a simulated market. Paths are row-major `N x d` over `times`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketTruth {
    pub d: usize,
    pub times: Vec<f64>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    pub psi_scale: Vec<f64>,
    pub events: Vec<ObservationEvent>,
    /// Path index of each event.
    pub event_points: Vec<usize>,
    pub noise: Vec<EventNoise>,
    pub composite_spread: Vec<f64>,
}

impl MarketTruth {
    pub fn y_at(&self, n: usize) -> &[f64] {
        &self.y[n * self.d..(n + 1) * self.d]
    }

    pub fn x_at(&self, n: usize) -> &[f64] {
        &self.x[n * self.d..(n + 1) * self.d]
    }

    pub fn psi_at(&self, n: usize) -> Vec<f64> {
        self.x_at(n)
            .iter()
            .zip(&self.psi_scale)
            .map(|(x, s)| s * x.exp())
            .collect()
    }

    /// Final true state.
    pub fn last_y(&self) -> &[f64] {
        self.y_at(self.times.len() - 1)
    }

    /// Composite quotes: the true mid with the configured spread at every path point.
    pub fn composite_series(&self) -> CompositeSeries {
        CompositeSeries {
            bonds: (0..self.d)
                .map(|b| {
                    self.times
                        .iter()
                        .enumerate()
                        .map(|(n, &t)| CompositeSample {
                            time: t,
                            mid: self.y[n * self.d + b],
                            spread: Some(self.composite_spread[b]),
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// `|Y - y|` for every client trade, with the true mid at the trade time.
    pub fn spread_proxies(&self) -> SpreadProxySample {
        SpreadProxySample::from_trades(&self.events, &self.composite_series())
    }
}

/// Exact simulation of the path and the event stream.
pub fn simulate(model: &ValidatedModel, prior: &Prior, cfg: &SimConfig) -> Result<MarketTruth, SimError> {
    let d = model.dim();
    cfg.validate(d)?;
    let prior = prior.validate(d).map_err(SimError::InvalidPrior)?;
    let streams = Substream::new(cfg.seed, 0, Purpose::Simulate);
    let mut arrivals = streams.stream(0);
    let mut path_rng = streams.stream(1);
    let mut obs_rng = streams.stream(2);

    // event times, bonds and kinds
    let total: f64 = cfg.intensity.iter().sum();
    let mut schedule: Vec<(f64, usize, usize)> = Vec::new();
    if total > 0.0 {
        let gap = Exp::new(total).expect("positive rate");
        let bond_cdf = cumulative(&cfg.intensity);
        let kind_cdf = cumulative(&cfg.mixture.probabilities());
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut arrivals);
            if t > cfg.horizon {
                break;
            }
            let bond = pick(&bond_cdf, arrivals.random::<f64>());
            let kind = pick(&kind_cdf, arrivals.random::<f64>());
            schedule.push((t, bond, kind));
        }
    }

    // path points: 0, grid, events, horizon
    let mut points: Vec<(f64, Option<usize>)> = vec![(0.0, None)];
    if let Some(step) = cfg.grid_step {
        let mut k = 1u64;
        while (k as f64) * step <= cfg.horizon {
            points.push((k as f64 * step, None));
            k += 1;
        }
    }
    points.extend(schedule.iter().enumerate().map(|(e, s)| (s.0, Some(e))));
    if cfg.horizon > 0.0 {
        points.push((cfg.horizon, None));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.is_some().cmp(&b.1.is_some())));
    points.dedup_by(|b, a| a.0 == b.0 && b.1.is_none());

    let mut y: Vec<f64> = prior.mean_y.iter().copied().collect();
    let mut x: Vec<f64> = prior.mean_x.iter().copied().collect();
    add_normal(&mut y, &prior.factor_y, 1.0, &mut path_rng);
    add_normal(&mut x, &prior.factor_x, 1.0, &mut path_rng);

    let sigma_eps = model.sigma_eps();
    let psi_scale = model.psi_scale();
    let composite_spread = cfg
        .composite_spread
        .clone()
        .unwrap_or_else(|| (0..d).map(|i| 6.0 * model.mean_half_spread(i)).collect());

    let n = points.len();
    let mut truth = MarketTruth {
        d,
        times: Vec::with_capacity(n),
        y: Vec::with_capacity(n * d),
        x: Vec::with_capacity(n * d),
        psi_scale: psi_scale.to_vec(),
        events: Vec::with_capacity(schedule.len()),
        event_points: Vec::with_capacity(schedule.len()),
        noise: Vec::with_capacity(schedule.len()),
        composite_spread,
    };
    let offset_law = rand_distr::Normal::new(0.0, cfg.quote_offset_scale).expect("finite scale");
    let mut now = 0.0;
    for (t, event) in points {
        let dt = t - now;
        if dt > 0.0 {
            add_normal(&mut y, model.covariance_factor(), dt.sqrt(), &mut path_rng);
            advance_spread(model, dt, &mut x, &mut path_rng);
            now = t;
        }
        let idx = truth.times.len();
        truth.times.push(t);
        truth.y.extend_from_slice(&y);
        truth.x.extend_from_slice(&x);
        if let Some(e) = event {
            let (_, bond, kind) = schedule[e];
            let psi = psi_scale[bond] * x[bond].exp();
            let eps = sigma_eps[bond] * obs_rng.sample::<f64, _>(StandardNormal);
            let noisy = y[bond] + eps;
            let (kind, offset) = match kind {
                0 => (EventKind::ClientBuy { traded: noisy - psi }, 0.0),
                1 => (EventKind::ClientSell { traded: noisy + psi }, 0.0),
                2 => {
                    let gap = offset_law.sample(&mut obs_rng).abs();
                    (EventKind::TradedAwayBuy { quote: noisy - psi - gap }, gap)
                }
                3 => {
                    let gap = offset_law.sample(&mut obs_rng).abs();
                    (EventKind::TradedAwaySell { quote: noisy + psi + gap }, gap)
                }
                _ => {
                    let alpha = cfg.alpha[bond];
                    let u = Uniform::new_inclusive(-alpha, alpha).expect("alpha > 0").sample(&mut obs_rng);
                    (EventKind::InterDealer { traded: noisy + u, alpha }, u)
                }
            };
            truth.events.push(ObservationEvent::new(t, bond, kind));
            truth.event_points.push(idx);
            truth.noise.push(EventNoise { eps, offset });
        }
    }
    Ok(truth)
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

/// Index of the first cumulative weight above `u`, skipping zero-weight entries.
fn pick(cdf: &[f64], u: f64) -> usize {
    let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    // guard against rounding landing on a zero-probability tail entry
    let mut k = k;
    while k > 0 && cdf[k] == cdf[k - 1] {
        k -= 1;
    }
    k
}

fn add_normal(v: &mut [f64], factor: &nalgebra::DMatrix<f64>, scale: f64, rng: &mut StreamRng) {
    let z: Vec<f64> = (0..factor.ncols()).map(|_| rng.sample(StandardNormal)).collect();
    for (r, out) in v.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, zc) in z.iter().enumerate() {
            acc += factor[(r, c)] * zc;
        }
        *out += scale * acc;
    }
}

fn advance_spread(model: &ValidatedModel, dt: f64, x: &mut [f64], rng: &mut StreamRng) {
    match model.spread() {
        SpreadDynamics::Ou { .. } => {
            let tr = ou_transition(model, dt).expect("OU model with positive step");
            let f = psd_factor(&tr.cov).unwrap_or_else(|| clipped_sqrt(&tr.cov));
            for (v, m) in x.iter_mut().zip(tr.mean_factor.iter()) {
                *v *= m;
            }
            add_normal(x, &f, 1.0, rng);
        }
        SpreadDynamics::Iid { mean, sd } => {
            for (i, v) in x.iter_mut().enumerate() {
                *v = mean[i] + sd[i] * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
}
