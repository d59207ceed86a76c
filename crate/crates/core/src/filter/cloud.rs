use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::genealogy::{History, Layer, TrajectorySample};
use super::resample::{offspring_entropy, resample};
use super::summary::{summarize, validate_levels, PosteriorSummary};
use super::weights::{log_multiplier, WeightVector};
use super::{FilterError, FilterOptions};
use crate::gaussian::linalg::{clipped_sqrt, is_lower_triangular, psd_factor};
use crate::gaussian::{conditional_posterior_y, ou_transition, sample_truncated_normal, TruncationSpec};
use crate::model::{EventError, EventKind, ObservationEvent, Prior, SpreadDynamics, ValidatedModel};
use crate::par::{for_each_row, for_each_row_pair, Execution};
use crate::rng::{Purpose, StreamRng, Substream};

/// Per-event weight diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterDiagnostics {
    pub time: f64,
    pub bond: usize,
    pub ess: f64,
    pub min_log_weight: f64,
    pub max_log_weight: f64,
    /// Particles whose normalized weight is exactly zero.
    pub zero_weights: usize,
    /// Entropy (nats) of the offspring counts of the resampling map.
    pub resampling_entropy: f64,
}

/// `K` equally weighted particles. Row `k` of `y` and `x` (row-major `K x d`)
/// is particle `k`'s mid yields and log-spread states.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    k: usize,
    d: usize,
    time: f64,
    steps: u64,
    y: Vec<f64>,
    x: Vec<f64>,
    options: FilterOptions,
    history: History,
}

/// Draws `options.particles` particles from the prior at time 0.
pub fn init(model: &ValidatedModel, prior: &Prior, options: FilterOptions) -> Result<ParticleCloud, FilterError> {
    let k = options.particles;
    if k < 2 {
        return Err(FilterError::TooFewParticles(k));
    }
    let d = model.dim();
    let prior = prior.validate(d).map_err(FilterError::InvalidPrior)?;
    let streams = Substream::new(options.seed, 0, Purpose::Init);
    let mut y = vec![0.0; k * d];
    let mut x = vec![0.0; k * d];
    let (fy, fy_lower) = (&prior.factor_y, is_lower_triangular(&prior.factor_y));
    let (fx, fx_lower) = (&prior.factor_x, is_lower_triangular(&prior.factor_x));
    for_each_row_pair(options.execution, &mut y, &mut x, d * BLOCK, d * BLOCK, |b, y_block, x_block| {
        let mut rng = streams.stream(b as u64);
        let mut z = vec![0.0; d];
        for (y_row, x_row) in y_block.chunks_mut(d).zip(x_block.chunks_mut(d)) {
            y_row.copy_from_slice(prior.mean_y.as_slice());
            fill_normals(&mut rng, &mut z);
            add_factor_product(fy, fy_lower, &z, 1.0, y_row);
            x_row.copy_from_slice(prior.mean_x.as_slice());
            fill_normals(&mut rng, &mut z);
            add_factor_product(fx, fx_lower, &z, 1.0, x_row);
        }
    });
    let mut history = History::default();
    if options.keep_history {
        history.layers.push(Layer {
            time: 0.0,
            parents: None,
            y: y.clone(),
            x: x.clone(),
        });
    }
    Ok(ParticleCloud {
        k,
        d,
        time: 0.0,
        steps: 0,
        y,
        x,
        options,
        history,
    })
}

fn fill_normals(rng: &mut StreamRng, z: &mut [f64]) {
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// `out += scale * F z` with `F` stored column-major.
fn add_factor_product(factor: &DMatrix<f64>, lower: bool, z: &[f64], scale: f64, out: &mut [f64]) {
    let n = factor.nrows();
    let data = factor.as_slice();
    for (c, &zc) in z.iter().enumerate().take(factor.ncols()) {
        let col = &data[c * n..(c + 1) * n];
        let start = if lower { c } else { 0 };
        let w = scale * zc;
        for r in start..n {
            out[r] += col[r] * w;
        }
    }
}

/// Particles per unit of work. Each block draws from its own random stream and
/// is one matrix product in [`correlate_rows`]. The size is fixed, so results
/// do not depend on the number of workers.
const BLOCK: usize = 256;

/// `out_k = F z_k` for every row `k` of the row-major matrices `z` and `out`.
///
/// A row-major `n x m` block is a column-major `m x n` matrix, so each block
/// is a single matrix product `F Z'`.
fn correlate_rows(exec: Execution, factor: &DMatrix<f64>, z: &[f64], out: &mut [f64]) {
    let m = factor.nrows();
    let width = BLOCK * m;
    let z_blocks: Vec<&[f64]> = z.chunks(width).collect();
    for_each_row(exec, out, width, |b, block| {
        let zb = z_blocks[b];
        let rows = zb.len() / m;
        let zt = DMatrixView::from_slice(zb, m, rows);
        let mut ot = DMatrixViewMut::from_slice(block, m, rows);
        ot.gemm(1.0, factor, &zt, 0.0);
    });
}

/// One transition of the log-spread state over a fixed time step.
enum SpreadStep<'a> {
    Ou {
        mean_factor: Vec<f64>,
        factor: DMatrix<f64>,
        lower: bool,
    },
    Iid {
        mean: &'a [f64],
        sd: &'a [f64],
    },
}

impl<'a> SpreadStep<'a> {
    fn new(model: &'a ValidatedModel, dt: f64) -> Result<Self, FilterError> {
        Ok(match model.spread() {
            SpreadDynamics::Ou { .. } => {
                let tr = ou_transition(model, dt)?;
                let factor = psd_factor(&tr.cov).unwrap_or_else(|| clipped_sqrt(&tr.cov));
                SpreadStep::Ou {
                    mean_factor: tr.mean_factor.as_slice().to_vec(),
                    lower: is_lower_triangular(&factor),
                    factor,
                }
            }
            SpreadDynamics::Iid { mean, sd } => SpreadStep::Iid {
                mean: mean.as_slice(),
                sd: sd.as_slice(),
            },
        })
    }

    fn advance(&self, row: &mut [f64], rng: &mut StreamRng) {
        match self {
            SpreadStep::Ou {
                mean_factor,
                factor,
                lower,
            } => {
                let mut z = vec![0.0; row.len()];
                fill_normals(rng, &mut z);
                row.iter_mut().zip(mean_factor).for_each(|(v, f)| *v *= f);
                add_factor_product(factor, *lower, &z, 1.0, row);
            }
            SpreadStep::Iid { mean, sd } => {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = mean[j] + sd[j] * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
}

/// Draw of the observed bond's mid plus noise, consistent with the event.
fn draw_noisy_mid(kind: &EventKind, y_prev: f64, psi: f64, var: f64, rng: &mut StreamRng) -> f64 {
    let spec = match *kind {
        EventKind::ClientBuy { traded } => return traded + psi,
        EventKind::ClientSell { traded } => return traded - psi,
        EventKind::TradedAwayBuy { quote } => TruncationSpec::Above(quote + psi),
        EventKind::TradedAwaySell { quote } => TruncationSpec::Below(quote - psi),
        EventKind::InterDealer { traded, alpha } => TruncationSpec::Between(traded - alpha, traded + alpha),
    };
    // resampled particles carry positive likelihood, so the kept region has positive mass
    sample_truncated_normal(y_prev, var, spec, rng).expect("resampled particle has an empty truncation region")
}

impl ParticleCloud {
    pub fn particles(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Number of events processed.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn options(&self) -> &FilterOptions {
        &self.options
    }

    /// Mid yields, row-major `K x d`.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Log-spread states, row-major `K x d`.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Half-spreads `psi_scale * exp(x)`, row-major `K x d`.
    pub fn psi(&self, model: &ValidatedModel) -> Vec<f64> {
        let scale = model.psi_scale();
        self.x
            .iter()
            .enumerate()
            .map(|(n, x)| scale[n % self.d] * x.exp())
            .collect()
    }

    /// Values of bond `i`'s mid across particles.
    pub fn y_of(&self, i: usize) -> Vec<f64> {
        self.y.iter().skip(i).step_by(self.d).copied().collect()
    }

    fn check_model(&self, model: &ValidatedModel) -> Result<(), FilterError> {
        if model.dim() != self.d {
            return Err(FilterError::Gaussian(crate::gaussian::GaussianError::DimensionMismatch {
                expected: self.d,
                found: model.dim(),
            }));
        }
        Ok(())
    }

    /// Assimilates one observation: spread draw, weights, resampling, then
    /// fresh draws of the observed and the remaining mids.
    ///
    /// On error the cloud is left unchanged.
    pub fn step(&mut self, model: &ValidatedModel, event: &ObservationEvent) -> Result<FilterDiagnostics, FilterError> {
        self.check_model(model)?;
        event.validate(self.d).map_err(|e| match e {
            EventError::UnknownBond { bond, d } => FilterError::UnknownBond { bond, d },
            other => FilterError::InvalidEvent(other),
        })?;
        if event.time <= self.time {
            return Err(FilterError::NonMonotoneTime {
                current: self.time,
                event: event.time,
            });
        }
        let (d, k_n, i) = (self.d, self.k, event.bond);
        let dt = event.time - self.time;
        let step_no = self.steps + 1;
        let seed = self.options.seed;
        let exec = self.options.execution;

        // spread draw
        let spread_step = SpreadStep::new(model, dt)?;
        let spread_streams = Substream::new(seed, step_no, Purpose::Spread);
        let psi_scale = model.psi_scale()[i];
        let sigma = model.sigma()[i];
        let eps = model.sigma_eps()[i];
        let (s2dt, s2eps) = (sigma * sigma * dt, eps * eps);
        let s = (s2dt + s2eps).sqrt();
        let y = &self.y;
        let mut x_hat = self.x.clone();
        let mut log_w = vec![0.0; k_n];
        // each particle's new spread state and, from it, its weight
        for_each_row_pair(exec, &mut x_hat, &mut log_w, d * BLOCK, BLOCK, |b, x_block, w_block| {
            let mut rng = spread_streams.stream(b as u64);
            for (r, (row, lw)) in x_block.chunks_mut(d).zip(w_block.iter_mut()).enumerate() {
                let p = b * BLOCK + r;
                spread_step.advance(row, &mut rng);
                *lw = log_multiplier(&event.kind, y[p * d + i], psi_scale * row[i].exp(), s);
            }
        });
        let weights = WeightVector::from_log(log_w).ok_or(FilterError::AllWeightsZero { event: *event })?;

        // resampling
        let mut resample_rng = Substream::new(seed, step_no, Purpose::Resample).shared();
        let ancestors = resample(&weights.norm_w, self.options.resampling, &mut resample_rng);

        // observed mid plus noise, then the observed mid
        let draw_streams = Substream::new(seed, step_no, Purpose::Draw);
        let mut new_y = vec![0.0; k_n * d];
        let mut new_x = vec![0.0; k_n * d];
        let others = d - 1;
        // standard normals for the other mids, drawn from each particle's stream
        let mut z = vec![0.0; k_n * others.max(1)];
        let zw = others.max(1);
        for_each_row_pair(exec, &mut new_y, &mut z, d * BLOCK, zw * BLOCK, |b, y_block, z_block| {
            let mut rng = draw_streams.stream(b as u64);
            for (r, (y_row, z_row)) in y_block.chunks_mut(d).zip(z_block.chunks_mut(zw)).enumerate() {
                let parent = ancestors[b * BLOCK + r] as usize;
                let y_prev = &y[parent * d..(parent + 1) * d];
                let psi = psi_scale * x_hat[parent * d + i].exp();
                let y_tilde = draw_noisy_mid(&event.kind, y_prev[i], psi, s2dt + s2eps, &mut rng);
                let (mean, var) = conditional_posterior_y(y_prev[i], y_tilde, s2dt, s2eps)
                    .expect("predictive variance is positive");
                let zi: f64 = rng.sample(StandardNormal);
                y_row.copy_from_slice(y_prev);
                y_row[i] = mean + var.sqrt() * zi;
                if others > 0 {
                    fill_normals(&mut rng, z_row);
                }
            }
        });
        for_each_row(exec, &mut new_x, d, |p, x_row| {
            let parent = ancestors[p] as usize;
            x_row.copy_from_slice(&x_hat[parent * d..(parent + 1) * d]);
        });

        // the other mids given the observed one's move
        if others > 0 {
            let cf = model.conditional_factor(i);
            let mut noise = vec![0.0; k_n * others];
            correlate_rows(exec, &cf.factor, &z, &mut noise);
            let sqrt_dt = dt.sqrt();
            for_each_row_pair(exec, &mut new_y, &mut noise, d, others, |p, y_row, n_row| {
                let parent = ancestors[p] as usize;
                let delta = y_row[i] - y[parent * d + i];
                let mut r = 0;
                for (j, v) in y_row.iter_mut().enumerate() {
                    if j != i {
                        *v += cf.loadings[r] * delta + sqrt_dt * n_row[r];
                        r += 1;
                    }
                }
            });
        }

        let (min_lw, max_lw) = weights
            .log_w
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &l| (lo.min(l), hi.max(l)));
        let diagnostics = FilterDiagnostics {
            time: event.time,
            bond: i,
            ess: weights.ess,
            min_log_weight: min_lw,
            max_log_weight: max_lw,
            zero_weights: weights.norm_w.iter().filter(|&&w| w == 0.0).count(),
            resampling_entropy: offspring_entropy(&ancestors, k_n),
        };

        if self.options.keep_history {
            self.history.layers.push(Layer {
                time: event.time,
                parents: Some(ancestors),
                y: new_y.clone(),
                x: new_x.clone(),
            });
        }
        self.y = new_y;
        self.x = new_x;
        self.time = event.time;
        self.steps = step_no;
        Ok(diagnostics)
    }

    /// Empirical mean, std and quantiles of the current particles.
    pub fn posterior(&self, model: &ValidatedModel, levels: &[f64]) -> Result<PosteriorSummary, FilterError> {
        validate_levels(levels)?;
        self.check_model(model)?;
        Ok(summarize(self.time, &self.y, &self.psi(model), self.d, levels))
    }

    /// Summary at a later time `t` after diffusing every particle forward with
    /// fresh draws. The cloud itself is not modified.
    pub fn predict(&self, model: &ValidatedModel, t: f64, levels: &[f64]) -> Result<PosteriorSummary, FilterError> {
        validate_levels(levels)?;
        self.check_model(model)?;
        if t.is_nan() || t < self.time {
            return Err(FilterError::TimeInPast {
                current: self.time,
                requested: t,
            });
        }
        if t == self.time {
            return self.posterior(model, levels);
        }
        let (y, x) = self.diffused(model, t)?;
        let scale = model.psi_scale();
        let psi: Vec<f64> = x.iter().enumerate().map(|(n, v)| scale[n % self.d] * v.exp()).collect();
        Ok(summarize(t, &y, &psi, self.d, levels))
    }

    /// Particles diffused to time `t > self.time()`: `(y, x)` row-major.
    pub fn diffused(&self, model: &ValidatedModel, t: f64) -> Result<(Vec<f64>, Vec<f64>), FilterError> {
        let dt = t - self.time;
        if !(dt > 0.0) {
            return Err(FilterError::TimeInPast {
                current: self.time,
                requested: t,
            });
        }
        let d = self.d;
        let spread_step = SpreadStep::new(model, dt)?;
        let factor = model.covariance_factor();
        let lower = is_lower_triangular(factor);
        let sqrt_dt = dt.sqrt();
        let streams = Substream::new(self.options.seed ^ t.to_bits().rotate_left(29), self.steps, Purpose::Predict);
        let mut y = self.y.clone();
        let mut x = self.x.clone();
        for_each_row_pair(self.options.execution, &mut y, &mut x, d * BLOCK, d * BLOCK, |b, y_block, x_block| {
            let mut rng = streams.stream(b as u64);
            let mut z = vec![0.0; d];
            for (y_row, x_row) in y_block.chunks_mut(d).zip(x_block.chunks_mut(d)) {
                fill_normals(&mut rng, &mut z);
                add_factor_product(factor, lower, &z, sqrt_dt, y_row);
                spread_step.advance(x_row, &mut rng);
            }
        });
        Ok((y, x))
    }

    /// Ancestral paths over all processed events. Without stored history only
    /// the current time is available.
    pub fn trajectories(&self, model: &ValidatedModel) -> TrajectorySample {
        if self.history.layers.is_empty() {
            let current = History {
                layers: vec![Layer {
                    time: self.time,
                    parents: None,
                    y: self.y.clone(),
                    x: self.x.clone(),
                }],
            };
            return current.trajectories(self.k, self.d, model.psi_scale());
        }
        self.history.trajectories(self.k, self.d, model.psi_scale())
    }

    /// Distinct ancestors of today's particles at each stored event time.
    pub fn distinct_ancestors(&self) -> Vec<usize> {
        self.history.distinct_ancestors(self.k)
    }

    /// Copy with particles reordered so that new particle `p` is old particle
    /// `order[p]`. Stored history is dropped.
    pub fn permuted(&self, order: &[usize]) -> Option<Self> {
        let mut seen = vec![false; self.k];
        if order.len() != self.k || order.iter().any(|&j| j >= self.k || std::mem::replace(&mut seen[j], true)) {
            return None;
        }
        let d = self.d;
        let gather = |src: &[f64]| -> Vec<f64> { order.iter().flat_map(|&j| src[j * d..(j + 1) * d].iter().copied()).collect() };
        let mut out = self.clone();
        out.y = gather(&self.y);
        out.x = gather(&self.x);
        out.history = History::default();
        Some(out)
    }
}
