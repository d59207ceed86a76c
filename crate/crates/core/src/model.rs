//! Domain types shared by every stage: the bond universe, static model
//! parameters, observation events and the Gaussian prior.
//!
//! All yields are in basis points and all times in days.

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::linalg::{psd_factor, symmetric_violation, PSD_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch for `{field}`: expected {expected}, found {found}")]
    DimensionMismatch {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("matrix `{0}` is not symmetric positive semi-definite")]
    NotPositiveSemiDefinite(String),
    #[error("parameter `{field}[{index}]` must be {requirement}, got {value}")]
    NonPositiveParameter {
        field: String,
        index: usize,
        value: f64,
        requirement: &'static str,
    },
    #[error("correlation matrix must have a unit diagonal (rho[{index}][{index}] = {value})")]
    NonUnitDiagonal { index: usize, value: f64 },
    #[error("bond universe must contain at least one bond")]
    EmptyUniverse,
    #[error("bond label #{0} is empty")]
    EmptyLabel(usize),
    #[error("bond label `{0}` is duplicated")]
    DuplicateLabel(String),
}

/// Every violation found while validating a parameter set.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct Violations(pub Vec<ModelError>);

impl Violations {
    pub fn iter(&self) -> impl Iterator<Item = &ModelError> {
        self.0.iter()
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BondUniverse {
    labels: Vec<String>,
}

impl BondUniverse {
    pub fn new(labels: Vec<String>) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptyUniverse);
        }
        let mut seen = std::collections::HashSet::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() {
                return Err(ModelError::EmptyLabel(i));
            }
            if !seen.insert(l.as_str()) {
                return Err(ModelError::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// Universe labelled `bond1`..`bondD`.
    pub fn numbered(d: usize) -> Result<Self, ModelError> {
        Self::new((1..=d).map(|i| format!("bond{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Dynamics of the log-spread state `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum SpreadModel {
    /// `dx = -A x dt + V dB` with `A = diag(a)`; `vvt` is `VV'`.
    Ou { a: Vec<f64>, vvt: Vec<Vec<f64>> },
    /// Independent Gaussian draw of `x` at every event, per-bond mean and variance.
    Iid { mean: Vec<f64>, var: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Mid-yield volatilities, bp per square-root day.
    pub sigma: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    /// Spread multiplier: `psi = psi_scale * exp(x)`, bp.
    pub psi_scale: Vec<f64>,
    /// Standard deviation of the trade noise, bp.
    pub sigma_eps: Vec<f64>,
    pub spread: SpreadModel,
}

impl ModelParams {
    pub fn dim(&self) -> usize {
        self.sigma.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    /// A client bought from us at traded yield `y`.
    ClientBuy { traded: f64 },
    /// A client sold to us at traded yield `y`.
    ClientSell { traded: f64 },
    /// We quoted `quote` to a buying client and lost.
    TradedAwayBuy { quote: f64 },
    /// We quoted `quote` to a selling client and lost.
    TradedAwaySell { quote: f64 },
    /// Inter-dealer print at `traded`, within `alpha` of mid plus noise.
    InterDealer { traded: f64, alpha: f64 },
}

impl EventKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EventKind::ClientBuy { .. } => "client_buy",
            EventKind::ClientSell { .. } => "client_sell",
            EventKind::TradedAwayBuy { .. } => "away_buy",
            EventKind::TradedAwaySell { .. } => "away_sell",
            EventKind::InterDealer { .. } => "d2d",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EventError {
    #[error("event time must be finite and strictly positive, got {0}")]
    BadTime(f64),
    #[error("event refers to bond {bond} but the universe has {d} bonds")]
    UnknownBond { bond: usize, d: usize },
    #[error("inter-dealer band half-width must be positive, got {0}")]
    NonPositiveAlpha(f64),
    #[error("observed yield is not finite")]
    NonFiniteYield,
    #[error("event times must be strictly increasing ({previous} then {next})")]
    NonMonotoneTime { previous: f64, next: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationEvent {
    pub time: f64,
    pub bond: usize,
    pub kind: EventKind,
}

impl ObservationEvent {
    pub fn new(time: f64, bond: usize, kind: EventKind) -> Self {
        Self { time, bond, kind }
    }

    pub fn validate(&self, d: usize) -> Result<(), EventError> {
        if !(self.time.is_finite() && self.time > 0.0) {
            return Err(EventError::BadTime(self.time));
        }
        if self.bond >= d {
            return Err(EventError::UnknownBond { bond: self.bond, d });
        }
        let observed = match self.kind {
            EventKind::ClientBuy { traded }
            | EventKind::ClientSell { traded }
            | EventKind::InterDealer { traded, .. } => traded,
            EventKind::TradedAwayBuy { quote } | EventKind::TradedAwaySell { quote } => quote,
        };
        if !observed.is_finite() {
            return Err(EventError::NonFiniteYield);
        }
        if let EventKind::InterDealer { alpha, .. } = self.kind {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(EventError::NonPositiveAlpha(alpha));
            }
        }
        Ok(())
    }
}

/// Checks a whole stream: every event valid and times strictly increasing.
/// Ties are rejected.
pub fn validate_stream(events: &[ObservationEvent], d: usize) -> Result<(), (usize, EventError)> {
    let mut previous = 0.0;
    for (n, ev) in events.iter().enumerate() {
        ev.validate(d).map_err(|e| (n, e))?;
        if ev.time <= previous {
            return Err((
                n,
                EventError::NonMonotoneTime {
                    previous,
                    next: ev.time,
                },
            ));
        }
        previous = ev.time;
    }
    Ok(())
}

/// Gaussian prior on `(y_0, x_0)` with independent blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Prior {
    pub mean_y: Vec<f64>,
    pub cov_y: Vec<Vec<f64>>,
    pub mean_x: Vec<f64>,
    pub cov_x: Vec<Vec<f64>>,
}

impl Prior {
    /// Prior whose spread block is the stationary law of the model's spread dynamics.
    pub fn with_stationary_spreads(model: &ValidatedModel, mean_y: Vec<f64>, cov_y: Vec<Vec<f64>>) -> Self {
        let (mean_x, cov_x) = model.stationary_spread_law();
        Self {
            mean_y,
            cov_y,
            mean_x: mean_x.iter().copied().collect(),
            cov_x: to_rows(&cov_x),
        }
    }

    pub fn validate(&self, d: usize) -> Result<ValidatedPrior, Violations> {
        let mut errs = Vec::new();
        check_len(&mut errs, "mean_y", &self.mean_y, d);
        check_len(&mut errs, "mean_x", &self.mean_x, d);
        let cov_y = matrix_field(&mut errs, "cov_y", &self.cov_y, d);
        let cov_x = matrix_field(&mut errs, "cov_x", &self.cov_x, d);
        if !errs.is_empty() {
            return Err(Violations(errs));
        }
        let fy = psd_checked(&mut errs, "cov_y", &cov_y.unwrap());
        let fx = psd_checked(&mut errs, "cov_x", &cov_x.unwrap());
        if !errs.is_empty() {
            return Err(Violations(errs));
        }
        Ok(ValidatedPrior {
            mean_y: DVector::from_vec(self.mean_y.clone()),
            factor_y: fy.unwrap(),
            mean_x: DVector::from_vec(self.mean_x.clone()),
            factor_x: fx.unwrap(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ValidatedPrior {
    pub mean_y: DVector<f64>,
    pub factor_y: DMatrix<f64>,
    pub mean_x: DVector<f64>,
    pub factor_x: DMatrix<f64>,
}

/// Validated spread dynamics with cached factors.
#[derive(Debug, Clone)]
pub enum SpreadDynamics {
    Ou { a: DVector<f64>, vvt: DMatrix<f64>, vvt_factor: DMatrix<f64> },
    Iid { mean: DVector<f64>, sd: DVector<f64> },
}

/// Per-bond quantities for drawing the other coordinates given one coordinate's increment.
#[derive(Debug, Clone)]
pub struct ConditionalFactor {
    /// `rho[i][j] * sigma[j] / sigma[i]` for every `j != i`, in bond order.
    pub loadings: DVector<f64>,
    /// Conditional covariance rate (per day) of the other coordinates.
    pub cov: DMatrix<f64>,
    /// Square-root factor of `cov`, lower triangular when a Cholesky factor exists.
    pub factor: DMatrix<f64>,
}

#[derive(Debug)]
struct ModelInner {
    universe: BondUniverse,
    params: ModelParams,
    sigma: DVector<f64>,
    rho: DMatrix<f64>,
    cov: DMatrix<f64>,
    cov_factor: DMatrix<f64>,
    spread: SpreadDynamics,
    conditional: Vec<OnceLock<Arc<ConditionalFactor>>>,
}

/// Parameters that passed validation, with cached square-root factors.
///
/// Cheap to clone; the conditional factors for each observed bond are built
/// lazily and shared between clones.
#[derive(Debug, Clone)]
pub struct ValidatedModel {
    inner: Arc<ModelInner>,
}

pub fn validate_params(params: &ModelParams, universe: &BondUniverse) -> Result<ValidatedModel, Violations> {
    let d = universe.len();
    let mut errs = Vec::new();
    check_len(&mut errs, "sigma", &params.sigma, d);
    check_len(&mut errs, "psi_scale", &params.psi_scale, d);
    check_len(&mut errs, "sigma_eps", &params.sigma_eps, d);
    let rho = matrix_field(&mut errs, "rho", &params.rho, d);
    let spread_mats = match &params.spread {
        SpreadModel::Ou { a, vvt } => {
            check_len(&mut errs, "a", a, d);
            matrix_field(&mut errs, "vvt", vvt, d)
        }
        SpreadModel::Iid { mean, var } => {
            check_len(&mut errs, "mean", mean, d);
            check_len(&mut errs, "var", var, d);
            None
        }
    };
    if !errs.is_empty() {
        return Err(Violations(errs));
    }

    positive(&mut errs, "sigma", &params.sigma, false);
    positive(&mut errs, "psi_scale", &params.psi_scale, false);
    positive(&mut errs, "sigma_eps", &params.sigma_eps, true);
    let rho = rho.unwrap();
    for i in 0..d {
        if (rho[(i, i)] - 1.0).abs() > 1e-12 {
            errs.push(ModelError::NonUnitDiagonal {
                index: i,
                value: rho[(i, i)],
            });
        }
    }
    psd_checked(&mut errs, "rho", &rho);

    let sigma = DVector::from_vec(params.sigma.clone());
    let cov = DMatrix::from_fn(d, d, |i, j| rho[(i, j)] * sigma[i] * sigma[j]);
    let spread = match &params.spread {
        SpreadModel::Ou { a, .. } => {
            positive(&mut errs, "a", a, false);
            let vvt = spread_mats.unwrap();
            psd_checked(&mut errs, "vvt", &vvt).map(|f| SpreadDynamics::Ou {
                a: DVector::from_vec(a.clone()),
                vvt,
                vvt_factor: f,
            })
        }
        SpreadModel::Iid { mean, var } => {
            positive(&mut errs, "var", var, true);
            if mean.iter().any(|m| !m.is_finite()) {
                errs.push(ModelError::NonPositiveParameter {
                    field: "mean".into(),
                    index: mean.iter().position(|m| !m.is_finite()).unwrap(),
                    value: f64::NAN,
                    requirement: "finite",
                });
            }
            Some(SpreadDynamics::Iid {
                mean: DVector::from_vec(mean.clone()),
                sd: DVector::from_iterator(d, var.iter().map(|v| v.max(0.0).sqrt())),
            })
        }
    };
    if !errs.is_empty() {
        return Err(Violations(errs));
    }
    let cov_factor = match psd_factor(&cov) {
        Some(f) => f,
        None => return Err(Violations(vec![ModelError::NotPositiveSemiDefinite("sigma".into())])),
    };

    Ok(ValidatedModel {
        inner: Arc::new(ModelInner {
            universe: universe.clone(),
            params: params.clone(),
            sigma,
            rho,
            cov,
            cov_factor,
            spread: spread.unwrap(),
            conditional: (0..d).map(|_| OnceLock::new()).collect(),
        }),
    })
}

impl ValidatedModel {
    pub fn dim(&self) -> usize {
        self.inner.universe.len()
    }

    pub fn universe(&self) -> &BondUniverse {
        &self.inner.universe
    }

    pub fn params(&self) -> &ModelParams {
        &self.inner.params
    }

    pub fn sigma(&self) -> &DVector<f64> {
        &self.inner.sigma
    }

    pub fn rho(&self) -> &DMatrix<f64> {
        &self.inner.rho
    }

    /// `Sigma[i][j] = rho[i][j] * sigma[i] * sigma[j]`, per day.
    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.inner.cov
    }

    pub fn covariance_factor(&self) -> &DMatrix<f64> {
        &self.inner.cov_factor
    }

    pub fn psi_scale(&self) -> &[f64] {
        &self.inner.params.psi_scale
    }

    pub fn sigma_eps(&self) -> &[f64] {
        &self.inner.params.sigma_eps
    }

    pub fn spread(&self) -> &SpreadDynamics {
        &self.inner.spread
    }

    pub fn conditional_factor(&self, bond: usize) -> Arc<ConditionalFactor> {
        self.inner.conditional[bond]
            .get_or_init(|| Arc::new(self.build_conditional(bond)))
            .clone()
    }

    fn build_conditional(&self, i: usize) -> ConditionalFactor {
        let d = self.dim();
        let sigma = &self.inner.sigma;
        let rho = &self.inner.rho;
        let others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
        let loadings = DVector::from_iterator(
            d - 1,
            others.iter().map(|&j| rho[(i, j)] * sigma[j] / sigma[i]),
        );
        let cov = DMatrix::from_fn(d - 1, d - 1, |r, c| {
            let (j, l) = (others[r], others[c]);
            rho[(j, l)] * sigma[j] * sigma[l] - rho[(i, j)] * sigma[j] * rho[(i, l)] * sigma[l]
        });
        // Schur complement of a PSD matrix is PSD; tiny negative eigenvalues are roundoff.
        let factor = psd_factor(&cov).unwrap_or_else(|| crate::gaussian::linalg::clipped_sqrt(&cov));
        ConditionalFactor { loadings, cov, factor }
    }

    /// Stationary law of `x`: the IID law, or `N(0, VV'_{ij}/(a_i+a_j))` for OU.
    pub fn stationary_spread_law(&self) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim();
        match &self.inner.spread {
            SpreadDynamics::Ou { a, vvt, .. } => (
                DVector::zeros(d),
                DMatrix::from_fn(d, d, |i, j| vvt[(i, j)] / (a[i] + a[j])),
            ),
            SpreadDynamics::Iid { mean, sd } => (
                mean.clone(),
                DMatrix::from_diagonal(&sd.map(|s| s * s)),
            ),
        }
    }

    /// Stationary expected half-spread of bond `i`.
    pub fn mean_half_spread(&self, i: usize) -> f64 {
        let (m, c) = self.stationary_spread_law();
        self.inner.params.psi_scale[i] * (m[i] + 0.5 * c[(i, i)]).exp()
    }
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check_len(errs: &mut Vec<ModelError>, field: &str, v: &[f64], d: usize) {
    if v.len() != d {
        errs.push(ModelError::DimensionMismatch {
            field: field.to_string(),
            expected: d,
            found: v.len(),
        });
    }
}

fn matrix_field(errs: &mut Vec<ModelError>, field: &str, rows: &[Vec<f64>], d: usize) -> Option<DMatrix<f64>> {
    if rows.len() != d {
        errs.push(ModelError::DimensionMismatch {
            field: field.to_string(),
            expected: d,
            found: rows.len(),
        });
        return None;
    }
    if let Some(bad) = rows.iter().find(|r| r.len() != d) {
        errs.push(ModelError::DimensionMismatch {
            field: format!("{field} row"),
            expected: d,
            found: bad.len(),
        });
        return None;
    }
    Some(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn positive(errs: &mut Vec<ModelError>, field: &str, v: &[f64], allow_zero: bool) {
    for (index, &value) in v.iter().enumerate() {
        let ok = value.is_finite() && if allow_zero { value >= 0.0 } else { value > 0.0 };
        if !ok {
            errs.push(ModelError::NonPositiveParameter {
                field: field.to_string(),
                index,
                value,
                requirement: if allow_zero { "non-negative" } else { "positive" },
            });
        }
    }
}

fn psd_checked(errs: &mut Vec<ModelError>, name: &str, m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) || symmetric_violation(m) > PSD_TOLERANCE {
        errs.push(ModelError::NotPositiveSemiDefinite(name.to_string()));
        return None;
    }
    match psd_factor(m) {
        Some(f) => Some(f),
        None => {
            errs.push(ModelError::NotPositiveSemiDefinite(name.to_string()));
            None
        }
    }
}
