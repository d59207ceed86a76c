//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset by passing criterion numbers: `cargo test --test acceptance -- 3 5`.

mod common;

use std::fs;
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bondmid::estimate::{estimate_model, EstimateOptions, SpreadTarget};
use bondmid::gaussian::truncated::standard_truncated;
use bondmid::gaussian::{conditional_mvn_given_one, ou_covariance, ou_transition};
use bondmid::model::{validate_params, BondUniverse, EventKind, ModelParams, Prior, SpreadModel};
use bondmid::sim::{simulate, EventMixture, SimConfig};
use bondmid::{init, FilterOptions, ValidatedModel};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(v: Verdict, elapsed: Duration, limit: Duration) -> Verdict {
    let detail = match &v {
        Ok(d) | Err(d) => d.clone(),
    };
    if elapsed > limit {
        return Err(format!("{detail}; took {:.1} s, limit {:.0} s", elapsed.as_secs_f64(), limit.as_secs_f64()));
    }
    v
}

fn paper_sim(seed: u64, horizon: f64, intensity: Vec<f64>) -> SimConfig {
    let d = intensity.len();
    SimConfig {
        horizon,
        intensity,
        mixture: EventMixture::uniform(),
        quote_offset_scale: 2.0,
        alpha: vec![1.0; d],
        grid_step: None,
        composite_spread: None,
        seed,
    }
}

/// Particle mean against the exact Kalman mean, d = 1 with a constant spread.
///
/// The Monte Carlo standard error at each event is the spread of the particle
/// mean over the 20 filter seeds run on the same event stream.
fn kalman_oracle() -> Verdict {
    let start = Instant::now();
    let (sigma, eps, psi) = (0.5, 0.237, 0.79);
    let model = scalar_model(sigma, eps, psi);
    let prior = scalar_prior(150.0, 1.0);
    let cfg = SimConfig {
        horizon: 2.0,
        intensity: vec![100.0],
        mixture: EventMixture::trades_only(),
        quote_offset_scale: 1.0,
        alpha: vec![1.0],
        grid_step: None,
        composite_spread: None,
        seed: 1000,
    };
    let mut events = simulate(&model, &prior, &cfg).map_err(|e| e.to_string())?.events;
    if events.len() < 100 {
        return Err(format!("only {} events simulated", events.len()));
    }
    events.truncate(100);
    let exact = kalman(150.0, 1.0, sigma, eps, psi, &events);
    let seeds = 20;
    let k = 10_000;
    // means[seed][event]
    let mut means = Vec::with_capacity(seeds);
    let mut ess_se = Vec::with_capacity(seeds);
    for seed in 0..seeds as u64 {
        let mut cloud = init(&model, &prior, FilterOptions::new(k, seed).without_history()).map_err(|e| e.to_string())?;
        let mut m = Vec::with_capacity(events.len());
        let mut se = Vec::with_capacity(events.len());
        for ev in &events {
            let diag = cloud.step(&model, ev).map_err(|e| e.to_string())?;
            let (pm, ps) = mean_std(cloud.y());
            m.push(pm);
            se.push(ps / diag.ess.sqrt());
        }
        means.push(m);
        ess_se.push(se);
    }
    let (mut inside, mut total, mut ratio) = (0, 0, 0.0);
    for (e, (m, _)) in exact.iter().enumerate() {
        let across: Vec<f64> = means.iter().map(|r| r[e]).collect();
        let (_, sd) = mean_std(&across);
        let se = sd * (seeds as f64 / (seeds as f64 - 1.0)).sqrt();
        ratio += se / (ess_se.iter().map(|r| r[e]).sum::<f64>() / seeds as f64);
        for v in &across {
            if (v - m).abs() <= 3.0 * se {
                inside += 1;
            }
            total += 1;
        }
    }
    let frac = inside as f64 / total as f64;
    within_time(
        check(
            frac >= 0.95,
            format!(
                "{inside}/{total} = {:.1}% of (event, seed) pairs within 3 SE (replication SE is {:.2}x sd/sqrt(ESS) on average)",
                100.0 * frac,
                ratio / exact.len() as f64
            ),
        ),
        start.elapsed(),
        Duration::from_secs(5),
    )
}

/// One traded-away quote against quadrature of prior times the censoring probability.
///
/// Resampling duplicates make sd/sqrt(ESS) optimistic, so the ESS-based errors
/// are scaled by a factor calibrated from two extra filter runs per quote.
fn censored_quadrature() -> Verdict {
    let start = Instant::now();
    let (sigma, eps, psi) = (0.5, 0.3, 0.8);
    let model = scalar_model(sigma, eps, psi);
    let (m0, p0, t) = (100.0, 0.25, 0.04);
    let prior = scalar_prior(m0, p0);
    let pred_sd = (p0 + sigma * sigma * t).sqrt();
    let (lo, hi) = (m0 - 12.0 * pred_sd, m0 + 12.0 * pred_sd);
    let k = 10_000;
    let reps = 3u64;
    // per quote: exact (m, s), ESS-based (se_mean, se_std), and (mean, std) of each run
    let mut rows = Vec::with_capacity(20);
    for seed in 0..20u64 {
        // alternate sides and move the quote across the prior
        let shift = -0.6 + 0.06 * seed as f64;
        let (kind, f): (EventKind, Box<dyn Fn(f64) -> f64>) = if seed % 2 == 0 {
            let z = m0 - psi + shift;
            (
                EventKind::TradedAwayBuy { quote: z },
                Box::new(move |y| density_ref((y - m0) / pred_sd) * phi_ref((y - psi - z) / eps)),
            )
        } else {
            let z = m0 + psi + shift;
            (
                EventKind::TradedAwaySell { quote: z },
                Box::new(move |y| density_ref((y - m0) / pred_sd) * phi_ref((z - psi - y) / eps)),
            )
        };
        let (m, s, m4) = moments(&f, lo, hi);
        let event = bondmid::ObservationEvent::new(t, 0, kind);
        let mut runs = Vec::with_capacity(reps as usize);
        let mut ess = 0.0;
        for r in 0..reps {
            let mut cloud =
                init(&model, &prior, FilterOptions::new(k, 500 + seed + 1000 * r).without_history()).map_err(|e| e.to_string())?;
            let diag = cloud.step(&model, &event).map_err(|e| e.to_string())?;
            ess += diag.ess / reps as f64;
            runs.push(mean_std(cloud.y()));
        }
        let se_mean = s / ess.sqrt();
        let se_std = ((m4 - s.powi(4)) / (4.0 * s * s * ess)).sqrt();
        rows.push(((m, s), (se_mean, se_std), runs));
    }
    // pooled ratio of replication variance to ESS-based variance
    let (mut num_m, mut num_s, mut den_m, mut den_s) = (0.0, 0.0, 0.0, 0.0);
    for (_, (se_m, se_s), runs) in &rows {
        let n = runs.len() as f64;
        let (mm, ms) = (runs.iter().map(|r| r.0).sum::<f64>() / n, runs.iter().map(|r| r.1).sum::<f64>() / n);
        num_m += runs.iter().map(|r| (r.0 - mm).powi(2)).sum::<f64>();
        num_s += runs.iter().map(|r| (r.1 - ms).powi(2)).sum::<f64>();
        den_m += (n - 1.0) * se_m * se_m;
        den_s += (n - 1.0) * se_s * se_s;
    }
    let (infl_m, infl_s) = ((num_m / den_m).sqrt().max(1.0), (num_s / den_s).sqrt().max(1.0));
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (seed, ((m, s), (se_m, se_s), runs)) in rows.iter().enumerate() {
        let (pm, ps) = runs[0];
        let (zm, zs) = ((pm - m).abs() / (infl_m * se_m), (ps - s).abs() / (infl_s * se_s));
        worst = worst.max(zm).max(zs);
        if zm > 3.0 || zs > 3.0 {
            failures.push(format!("seed {seed}: mean {zm:.2} SE, std {zs:.2} SE"));
        }
    }
    let detail = format!("SE scaled by {infl_m:.2} (mean) and {infl_s:.2} (std)");
    within_time(
        check(
            failures.is_empty(),
            if failures.is_empty() {
                format!("20/20 seeds, largest deviation {worst:.2} SE; {detail}")
            } else {
                format!("{}; {detail}", failures.join("; "))
            },
        ),
        start.elapsed(),
        Duration::from_secs(1),
    )
}

/// End-of-day coverage of the 10-90 and 1-99 envelopes over 200 simulated days.
fn coverage() -> Verdict {
    let start = Instant::now();
    let model = example_model();
    let prior = example_prior(&model);
    let levels = [0.01, 0.1, 0.9, 0.99];
    let (mut in80, mut in98, mut n) = (0, 0, 0);
    let mut per_bond = [0usize; 3];
    for rep in 0..200u64 {
        let truth = simulate(&model, &prior, &paper_sim(20_000 + rep, 1.0, vec![40.0, 30.0, 20.0])).map_err(|e| e.to_string())?;
        let mut cloud = init(&model, &prior, FilterOptions::new(10_000, rep).without_history()).map_err(|e| e.to_string())?;
        for ev in &truth.events {
            cloud.step(&model, ev).map_err(|e| e.to_string())?;
        }
        let post = cloud.predict(&model, 1.0, &levels).map_err(|e| e.to_string())?;
        for (b, &y) in truth.last_y().iter().enumerate() {
            let q = &post.bonds[b].y.quantiles;
            n += 1;
            if q[1] <= y && y <= q[2] {
                in80 += 1;
                per_bond[b] += 1;
            }
            if q[0] <= y && y <= q[3] {
                in98 += 1;
            }
        }
    }
    let (c80, c98) = (100.0 * in80 as f64 / n as f64, 100.0 * in98 as f64 / n as f64);
    within_time(
        check(
            (c80 - 80.0).abs() <= 6.0 && (c98 - 98.0).abs() <= 2.0,
            format!(
                "10-90 covers {c80:.1}%, 1-99 covers {c98:.1}% of {n} bond-days (10-90 by bond: {}/{}/{} of 200)",
                per_bond[0], per_bond[1], per_bond[2]
            ),
        ),
        start.elapsed(),
        Duration::from_secs(300),
    )
}

fn with_identity_rho(model: &ValidatedModel) -> ValidatedModel {
    let mut p = model.params().clone();
    let d = p.dim();
    p.rho = (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    validate_params(&p, model.universe()).unwrap()
}

/// Observations on bond 1 only narrow bond 2's posterior when the mids are correlated.
fn cross_asset() -> Verdict {
    let model = example_model();
    let independent = with_identity_rho(&model);
    let prior = example_prior(&model);
    let mut wins = 0;
    for seed in 0..100u64 {
        let truth = simulate(&model, &prior, &paper_sim(30_000 + seed, 1.0, vec![40.0, 0.0, 0.0])).map_err(|e| e.to_string())?;
        let end_std = |m: &ValidatedModel| -> Result<f64, String> {
            let mut c = init(m, &prior, FilterOptions::new(10_000, seed).without_history()).map_err(|e| e.to_string())?;
            for ev in &truth.events {
                c.step(m, ev).map_err(|e| e.to_string())?;
            }
            Ok(c.predict(m, 1.0, &[0.5]).map_err(|e| e.to_string())?.bonds[1].y.std)
        };
        if end_std(&model)? < end_std(&independent)? {
            wins += 1;
        }
    }
    check(wins >= 95, format!("bond 2 posterior narrower with correlation in {wins}/100 seeds"))
}

/// Kolmogorov-Smirnov statistic of `n` draws on `(a, b)` against the exact truncated CDF.
fn ks_statistic(a: f64, b: f64, n: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..n)
        .map(|_| standard_truncated(a, b, &mut rng))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    v.sort_by(f64::total_cmp);
    // measure mass from whichever end keeps the arithmetic away from 1
    let cdf: Box<dyn Fn(f64) -> f64> = if a >= 0.0 {
        let (qa, qb) = (phi_sf_ref(a), phi_sf_ref(b));
        Box::new(move |x| (qa - phi_sf_ref(x)) / (qa - qb))
    } else {
        let (pa, pb) = (phi_ref(a), phi_ref(b));
        Box::new(move |x| (phi_ref(x) - pa) / (pb - pa))
    };
    let nf = n as f64;
    Ok(v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / nf).max((i + 1) as f64 / nf - f)
        })
        .fold(0.0, f64::max))
}

fn truncated_ks() -> Verdict {
    let n = 1_000_000;
    let critical = 1.628 / (n as f64).sqrt();
    let inf = f64::INFINITY;
    let cases = [
        (0.0, inf),
        (3.0, inf),
        (-3.0, inf),
        (6.0, inf),
        (-6.0, inf),
        (-inf, 0.0),
        (-inf, 3.0),
        (-inf, -3.0),
        (-inf, 6.0),
        (-inf, -6.0),
        (-1.0, 1.0),
        (0.0, 3.0),
        (-6.0, -3.0),
        (2.5, 3.5),
        (-0.25, 0.25),
        (0.0, 0.1),
        (2.95, 3.05),
        (6.0, 6.1),
        (-6.1, -6.0),
    ];
    let mut worst = (0.0, (0.0, 0.0));
    let mut bad = Vec::new();
    for (i, &(a, b)) in cases.iter().enumerate() {
        let d = ks_statistic(a, b, n, 40 + i as u64)?;
        if d > worst.0 {
            worst = (d, (a, b));
        }
        if d >= critical {
            bad.push(format!("({a}, {b}): D = {d:.5}"));
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "{} intervals, largest D = {:.5} on ({}, {}), critical {critical:.5}",
                cases.len(),
                worst.0,
                worst.1 .0,
                worst.1 .1
            )
        } else {
            bad.join("; ")
        },
    )
}

fn random_psd(d: usize, rank: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(d, rank, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose()
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

fn ou_model(a: &DVector<f64>, vvt: &DMatrix<f64>) -> ValidatedModel {
    let d = a.len();
    let p = ModelParams {
        sigma: vec![1.0; d],
        rho: (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect(),
        psi_scale: vec![1.0; d],
        sigma_eps: vec![0.0; d],
        spread: SpreadModel::Ou {
            a: a.iter().copied().collect(),
            vvt: (0..d).map(|i| vvt.row(i).iter().copied().collect()).collect(),
        },
    };
    validate_params(&p, &BondUniverse::numbered(d).unwrap()).unwrap()
}

/// Zero-time, stationary and semigroup identities of the OU transition covariance.
fn gamma_identities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = [0.0f64; 3];
    for _ in 0..100 {
        let d = rng.random_range(1..=6);
        let a = DVector::from_fn(d, |_, _| rng.random_range(0.05..5.0));
        let vvt = random_psd(d, d, &mut rng);
        let model = ou_model(&a, &vvt);
        let scale = max_abs(&vvt);

        let tiny = 1e-14;
        let g0 = ou_transition(&model, tiny).map_err(|e| e.to_string())?.cov / tiny;
        worst[0] = worst[0].max(max_abs(&(g0 - &vvt)) / scale + max_abs(&ou_covariance(&a, &vvt, 0.0)));

        let g_inf = ou_transition(&model, 1e6).map_err(|e| e.to_string())?.cov;
        let stationary = DMatrix::from_fn(d, d, |i, j| vvt[(i, j)] / (a[i] + a[j]));
        worst[1] = worst[1].max(max_abs(&(g_inf - &stationary)) / max_abs(&stationary));

        let (t, s) = (rng.random_range(0.01..3.0), rng.random_range(0.01..3.0));
        let gt = ou_transition(&model, t).map_err(|e| e.to_string())?;
        let gs = ou_transition(&model, s).map_err(|e| e.to_string())?;
        let gts = ou_transition(&model, t + s).map_err(|e| e.to_string())?;
        let m = DMatrix::from_diagonal(&gs.mean_factor);
        let composed = &m * &gt.cov * &m + &gs.cov;
        worst[2] = worst[2].max(max_abs(&(composed - &gts.cov)) / max_abs(&gts.cov));
        // the mean factor composes too
        let mf = gt.mean_factor.component_mul(&gs.mean_factor);
        worst[2] = worst[2].max((mf - &gts.mean_factor).amax());
    }
    check(
        worst.iter().all(|&w| w <= 1e-12),
        format!("relative errors: zero-limit {:.1e}, stationary {:.1e}, semigroup {:.1e}", worst[0], worst[1], worst[2]),
    )
}

/// Conditional law of the other mids given one coordinate's move, against the
/// Schur complement computed from the full covariance.
fn conditioning() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(2..=6);
        let rank = rng.random_range(1..=d);
        // a PSD covariance, possibly singular, with a positive diagonal
        let mut cov = random_psd(d, rank, &mut rng);
        for i in 0..d {
            cov[(i, i)] += rng.random_range(0.0..0.1);
            if cov[(i, i)] < 1e-3 {
                cov[(i, i)] += 0.01;
            }
        }
        let sd = DVector::from_fn(d, |i, _| cov[(i, i)].sqrt());
        let rho = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { cov[(i, j)] / (sd[i] * sd[j]) });
        let cov = DMatrix::from_fn(d, d, |i, j| rho[(i, j)] * sd[i] * sd[j]);
        let p = ModelParams {
            sigma: sd.iter().copied().collect(),
            rho: (0..d).map(|i| rho.row(i).iter().copied().collect()).collect(),
            psi_scale: vec![1.0; d],
            sigma_eps: vec![0.1; d],
            spread: SpreadModel::Iid {
                mean: vec![0.0; d],
                var: vec![0.1; d],
            },
        };
        let model = validate_params(&p, &BondUniverse::numbered(d).unwrap()).map_err(|e| e.to_string())?;
        let i = rng.random_range(0..d);
        let (delta, tau) = (rng.random_range(-2.0..2.0), rng.random_range(0.001..2.0));
        let (mean, ccov) = conditional_mvn_given_one(&model, i, delta, tau).map_err(|e| e.to_string())?;

        let others: Vec<usize> = (0..d).filter(|&j| j != i).collect();
        let s_oi = DMatrix::from_fn(d - 1, 1, |r, _| cov[(others[r], i)]);
        let s_oo = DMatrix::from_fn(d - 1, d - 1, |r, c| cov[(others[r], others[c])]);
        let s_ii_inv = DMatrix::from_element(1, 1, 1.0 / cov[(i, i)]);
        let brute_mean = &s_oi * &s_ii_inv * DMatrix::from_element(1, 1, delta);
        let brute_cov = (&s_oo - &s_oi * &s_ii_inv * s_oi.transpose()) * tau;
        let e_mean = (DMatrix::from_column_slice(d - 1, 1, mean.as_slice()) - brute_mean).amax();
        let e_cov = (ccov - &brute_cov).amax() / max_abs(&s_oo).max(1.0) / tau;
        worst = worst.max(e_mean).max(e_cov);
    }
    check(worst <= 1e-12, format!("50 instances, largest discrepancy {worst:.1e}"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_bondmid"))
        .args(args)
        .env_remove(bondmid::cli::OUT_ENV)
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr)))
    }
}

fn read_all(dir: &Path, names: &[&str]) -> Result<Vec<Vec<u8>>, String> {
    names
        .iter()
        .map(|n| fs::read(dir.join(n)).map_err(|e| format!("{}: {e}", dir.join(n).display())))
        .collect()
}

/// Byte-identical CLI outputs across runs and worker counts.
fn cli_determinism() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = tmp.path().join("configs");
    fs::create_dir(&cfg).map_err(|e| e.to_string())?;
    for entry in fs::read_dir(configs_dir()).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        fs::copy(&p, cfg.join(p.file_name().unwrap())).map_err(|e| e.to_string())?;
    }
    let filter_toml = fs::read_to_string(cfg.join("filter.toml")).map_err(|e| e.to_string())? + "trajectories = 25\n";
    fs::write(cfg.join("filter.toml"), filter_toml).map_err(|e| e.to_string())?;
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let sim_files = ["events.jsonl", "truth.csv", "composite.csv", "model.toml", "prior.toml"];
    let mut sims = Vec::new();
    for run in ["out", "out2"] {
        let out = tmp.path().join(run);
        run_cli(&["simulate", "--config", &s(&cfg.join("simulate.toml")), "--out", &s(&out)])?;
        sims.push(read_all(&out, &sim_files)?);
    }
    if sims[0] != sims[1] {
        return Err("simulate outputs differ between runs".into());
    }

    let files = ["summary.csv", "diagnostics.csv", "trajectories.csv"];
    let mut outputs = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "4"), ("d", "8"), ("e", "4")] {
        let out = tmp.path().join(format!("filter-{tag}"));
        run_cli(&["filter", "--config", &s(&cfg.join("filter.toml")), "--threads", threads, "--out", &s(&out)])?;
        outputs.push((threads, read_all(&out, &files)?));
    }
    let reference = &outputs[0].1;
    let differing: Vec<&str> = outputs.iter().filter(|(_, o)| o != reference).map(|(t, _)| *t).collect();
    let bytes: usize = reference.iter().map(Vec::len).sum();
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!("simulate twice and filter at 1, 1, 4, 8, 4 workers: identical ({bytes} bytes of filter output)")
        } else {
            format!("outputs differ at worker counts {differing:?}")
        },
    )
}

/// Calibration recovers the generating parameters from 10^4 simulated days.
fn estimation_round_trip() -> Verdict {
    let model = example_model();
    let prior = example_prior(&model);
    let cfg = SimConfig {
        horizon: 10_000.0,
        intensity: vec![15.0; 3],
        mixture: EventMixture::trades_only(),
        quote_offset_scale: 2.0,
        alpha: vec![1.0; 3],
        grid_step: Some(1.0),
        composite_spread: None,
        seed: 99,
    };
    let truth = simulate(&model, &prior, &cfg).map_err(|e| e.to_string())?;
    let series = truth.composite_series();
    let opts = EstimateOptions {
        sampling_interval: 1.0,
        noise_fraction: 0.05,
        spread: SpreadTarget::Data { fallback_shrink: 1.0 / 3.0 },
    };
    let (params, fit) = estimate_model(&series, &truth.events, &opts).map_err(|e| e.to_string())?;
    let true_p = model.params();
    let (mu, var) = match &true_p.spread {
        SpreadModel::Iid { mean, var } => (mean.clone(), var.clone()),
        SpreadModel::Ou { .. } => return Err("example model should have IID spreads".into()),
    };
    let mut worst = [0.0f64; 4];
    for i in 0..3 {
        worst[0] = worst[0].max((params.sigma[i] / true_p.sigma[i] - 1.0).abs());
        for j in 0..3 {
            worst[1] = worst[1].max((params.rho[i][j] - true_p.rho[i][j]).abs());
        }
        let mean = true_p.psi_scale[i] * (mu[i] + 0.5 * var[i]).exp();
        let sd = mean * var[i].exp_m1().sqrt();
        worst[2] = worst[2].max((fit.mean[i] / mean - 1.0).abs());
        worst[3] = worst[3].max((fit.std[i] / sd - 1.0).abs());
    }
    let trades = truth.events.len();
    check(
        worst[0] <= 0.03 && worst[1] <= 0.02 && worst[2] <= 0.05 && worst[3] <= 0.05,
        format!(
            "{trades} client trades; sigma off by {:.2}%, rho by {:.4}, spread mean by {:.2}%, std by {:.2}%",
            100.0 * worst[0],
            worst[1],
            100.0 * worst[2],
            100.0 * worst[3]
        ),
    )
}

/// A hundred correlated bonds, ten thousand events, ten thousand particles.
fn scale() -> Verdict {
    let start = Instant::now();
    let d = 100;
    // one common factor with loadings between 0.9 and 0.95
    let beta: Vec<f64> = (0..d).map(|i| 0.9 + 0.05 * i as f64 / (d - 1) as f64).collect();
    let rho: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { beta[i] * beta[j] }).collect())
        .collect();
    let e_psi: Vec<f64> = (0..d).map(|i| 0.65 + 0.14 * (i % 10) as f64 / 9.0).collect();
    let p = ModelParams {
        sigma: (0..d).map(|i| 0.5 + 0.2 * (i % 7) as f64 / 6.0).collect(),
        rho: rho.clone(),
        psi_scale: vec![1.0; d],
        sigma_eps: e_psi.iter().map(|m| 0.3 * m).collect(),
        spread: SpreadModel::Iid {
            mean: e_psi.iter().map(|m| m.ln() - 0.5 * std::f64::consts::LN_2).collect(),
            var: vec![std::f64::consts::LN_2; d],
        },
    };
    let model = validate_params(&p, &BondUniverse::numbered(d).unwrap()).map_err(|e| e.to_string())?;
    // start-of-day composite mids known to about 0.3 bp, with the market's correlation
    let cov_y: Vec<Vec<f64>> = rho.iter().map(|r| r.iter().map(|v| 0.09 * v).collect()).collect();
    let prior = Prior::with_stationary_spreads(&model, (0..d).map(|i| 100.0 + i as f64).collect(), cov_y);
    let mut events = simulate(&model, &prior, &paper_sim(4242, 1.0, vec![105.0; d])).map_err(|e| e.to_string())?.events;
    if events.len() < 10_000 {
        return Err(format!("only {} events simulated", events.len()));
    }
    events.truncate(10_000);
    let mut cloud = init(&model, &prior, FilterOptions::new(10_000, 1).without_history()).map_err(|e| e.to_string())?;
    let mut collapsed = 0;
    let mut min_ess = f64::INFINITY;
    for ev in &events {
        let diag = cloud.step(&model, ev).map_err(|e| e.to_string())?;
        min_ess = min_ess.min(diag.ess);
        if diag.ess < 2.0 {
            collapsed += 1;
        }
    }
    let elapsed = start.elapsed();
    within_time(
        check(
            collapsed <= events.len() / 100,
            format!(
                "ESS below 2 on {collapsed}/{} events (smallest ESS {min_ess:.1}); {:.1} ms per event",
                events.len(),
                1e3 * elapsed.as_secs_f64() / events.len() as f64
            ),
        ),
        elapsed,
        Duration::from_secs(600),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("kalman oracle", kalman_oracle),
        ("censored posterior vs quadrature", censored_quadrature),
        ("coverage calibration", coverage),
        ("cross-asset information", cross_asset),
        ("truncated sampler KS", truncated_ks),
        ("OU covariance identities", gamma_identities),
        ("conditioning vs Schur complement", conditioning),
        ("CLI determinism", cli_determinism),
        ("estimation round trip", estimation_round_trip),
        ("scale: d=100, K=1e4, 1e4 events", scale),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let n = n + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("PASS {n:>2} {name}: {detail} [{secs:.1} s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name}: {detail} [{secs:.1} s]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
