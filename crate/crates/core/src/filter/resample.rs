use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    /// Independent draws of each ancestor from the weights.
    #[default]
    Multinomial,
    /// One uniform offset, evenly spaced points.
    Systematic,
}

/// Ancestor index for each of the `weights.len()` offspring, in nondecreasing
/// order. Zero-weight particles are never selected.
///
/// Multinomial draws come out sorted because the uniforms are generated as
/// ordered statistics from exponential spacings; as every offspring is
/// subsequently moved with its own random stream, the order carries no
/// information. Either scheme then needs a single pass over the weights.
pub fn resample<R: Rng + ?Sized>(weights: &[f64], scheme: Resampling, rng: &mut R) -> Vec<u32> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    // points in [0, 1), nondecreasing
    let points: Vec<f64> = match scheme {
        Resampling::Multinomial => {
            let mut acc = 0.0;
            let mut spacings: Vec<f64> = (0..n)
                .map(|_| {
                    acc += rng.sample::<f64, _>(Exp1);
                    acc
                })
                .collect();
            let norm = acc + rng.sample::<f64, _>(Exp1);
            spacings.iter_mut().for_each(|v| *v /= norm);
            spacings
        }
        Resampling::Systematic => {
            let u0: f64 = rng.random::<f64>();
            (0..n).map(|k| (u0 + k as f64) / n as f64).collect()
        }
    };
    let mut out = Vec::with_capacity(n);
    let (mut j, mut cum) = (0usize, weights.first().copied().unwrap_or(0.0));
    for u in points {
        let target = u * total;
        while cum <= target && j < last_positive {
            j += 1;
            cum += weights[j];
        }
        out.push(j as u32);
    }
    out
}

/// Shannon entropy (nats) of the offspring-count distribution of a resampling map.
pub fn offspring_entropy(ancestors: &[u32], n: usize) -> f64 {
    let total = ancestors.len() as f64;
    let term = |c: usize| {
        let p = c as f64 / total;
        -p * p.ln()
    };
    if ancestors.windows(2).all(|w| w[0] <= w[1]) {
        // sorted maps: offspring counts are run lengths
        return ancestors
            .chunk_by(|a, b| a == b)
            .map(|run| term(run.len()))
            .sum();
    }
    let mut counts = vec![0usize; n];
    for &a in ancestors {
        counts[a as usize] += 1;
    }
    counts.iter().filter(|&&c| c > 0).map(|&c| term(c)).sum()
}
