//! Ancestor-index genealogy and per-event state table.
//!
//! Layer `n` holds every particle's state right after the `n`-th event
//! (layer 0 is the prior draw) together with the resampling map that links
//! each particle to its parent in layer `n - 1`. Full paths are only
//! materialized on request.

#[derive(Debug, Clone)]
pub(crate) struct Layer {
    pub time: f64,
    /// `parents[k]` is the index in the previous layer that particle `k` descends from.
    pub parents: Option<Vec<u32>>,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct History {
    pub layers: Vec<Layer>,
}

/// One ancestral line: states at every stored event time, row-major `n x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub y: Vec<f64>,
    pub psi: Vec<f64>,
}

impl Path {
    pub fn y_at(&self, n: usize, d: usize) -> &[f64] {
        &self.y[n * d..(n + 1) * d]
    }

    pub fn psi_at(&self, n: usize, d: usize) -> &[f64] {
        &self.psi[n * d..(n + 1) * d]
    }
}

/// `K` trajectories over the stored event times.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub d: usize,
    pub paths: Vec<Path>,
}

impl History {
    /// Index of each current particle's ancestor at every layer, `[layer][particle]`.
    pub fn lineage(&self, k: usize) -> Vec<Vec<u32>> {
        let n = self.layers.len();
        let mut out = vec![Vec::new(); n];
        let mut idx: Vec<u32> = (0..k as u32).collect();
        for layer in (0..n).rev() {
            out[layer] = idx.clone();
            if let Some(parents) = &self.layers[layer].parents {
                idx = idx.iter().map(|&j| parents[j as usize]).collect();
            }
        }
        out
    }

    pub fn trajectories(&self, k: usize, d: usize, psi_scale: &[f64]) -> TrajectorySample {
        let lineage = self.lineage(k);
        let n = self.layers.len();
        let paths = (0..k)
            .map(|p| {
                let mut y = Vec::with_capacity(n * d);
                let mut psi = Vec::with_capacity(n * d);
                for (layer, idx) in self.layers.iter().zip(&lineage) {
                    let j = idx[p] as usize;
                    y.extend_from_slice(&layer.y[j * d..(j + 1) * d]);
                    psi.extend(
                        layer.x[j * d..(j + 1) * d]
                            .iter()
                            .zip(psi_scale)
                            .map(|(x, s)| s * x.exp()),
                    );
                }
                Path { y, psi }
            })
            .collect();
        TrajectorySample {
            times: self.layers.iter().map(|l| l.time).collect(),
            d,
            paths,
        }
    }

    /// Number of distinct ancestors of the current particles at each layer.
    pub fn distinct_ancestors(&self, k: usize) -> Vec<usize> {
        self.lineage(k)
            .into_iter()
            .map(|mut idx| {
                idx.sort_unstable();
                idx.dedup();
                idx.len()
            })
            .collect()
    }
}
