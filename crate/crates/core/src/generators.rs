//! Benchmark instances: Gaussian regressors, the constrained quadratic
//! Scheffé mixture grid and the sunflower disk example.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::design::{CandidateSet, RegressorSource};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSpec {
    Gaussian {
        #[serde(rename = "N")]
        size: usize,
        m: usize,
        seed: u64,
    },
    Mixture {
        decimals: u32,
    },
    Fig1Disk {
        #[serde(rename = "J")]
        disk_points: usize,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<CandidateSet> {
        match *self {
            InstanceSpec::Gaussian { size, m, seed } => gaussian_instance(size, m, seed),
            InstanceSpec::Mixture { decimals } => Ok(mixture_grid(decimals)?.candidates),
            InstanceSpec::Fig1Disk { disk_points } => fig1_disk(disk_points),
        }
    }
}

/// Standard normal regressors from a counter-based stream.
///
/// Row `i` is drawn from a ChaCha stream keyed by the seed with stream id
/// `i`, so any chunk can be regenerated on its own.
#[derive(Clone, Debug)]
pub struct GaussianSource {
    len: usize,
    dim: usize,
    base: ChaCha8Rng,
}

impl GaussianSource {
    pub fn new(len: usize, dim: usize, seed: u64) -> Self {
        GaussianSource {
            len,
            dim,
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl RegressorSource for GaussianSource {
    fn dim(&self) -> usize {
        self.dim
    }

    fn len(&self) -> usize {
        self.len
    }

    fn fill_rows(&self, start: usize, out: &mut [f64]) {
        for (k, row) in out.chunks_exact_mut(self.dim).enumerate() {
            let mut rng = self.base.clone();
            rng.set_stream((start + k) as u64);
            rng.set_word_pos(0);
            for x in row.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
        }
    }
}

pub fn gaussian_instance(size: usize, m: usize, seed: u64) -> Result<CandidateSet> {
    if size < m {
        return Err(Error::Config(format!(
            "Gaussian instance needs N >= m, got N={size}, m={m}"
        )));
    }
    CandidateSet::from_source(Arc::new(GaussianSource::new(size, m, seed)))
}

/// Mixture candidates together with their (x1, x2, x3) coordinates.
#[derive(Clone, Debug)]
pub struct MixtureGrid {
    pub candidates: CandidateSet,
    /// Proportions in integer units of `10^-decimals`.
    pub points: Vec<[u32; 3]>,
    pub decimals: u32,
}

impl MixtureGrid {
    pub fn coordinates(&self, i: usize) -> [f64; 3] {
        let scale = 10f64.powi(self.decimals as i32);
        self.points[i].map(|x| x as f64 / scale)
    }
}

// Box constraints in hundredths: x1 ∈ [0.70, 0.80], x2 ∈ [0.07, 0.25], x3 ∈ [0.05, 0.15].
const MIXTURE_BOUNDS: [(u32, u32); 3] = [(70, 80), (7, 25), (5, 15)];

/// All grid points with `10^decimals · xⱼ` integral inside the mixture box,
/// ordered by `(x1, x2)`, mapped to quadratic Scheffé regressors
/// `(x1, x2, x3, x1x2, x1x3, x2x3)`.
pub fn mixture_grid(decimals: u32) -> Result<MixtureGrid> {
    if decimals < 2 {
        return Err(Error::Config(format!("mixture grid needs decimals >= 2, got {decimals}")));
    }
    let total = 10u32
        .checked_pow(decimals)
        .filter(|_| decimals <= 6)
        .ok_or_else(|| Error::Config(format!("mixture grid with {decimals} decimals is too large")))?;
    let unit = total / 100;
    let [(a1, b1), (a2, b2), (a3, b3)] = MIXTURE_BOUNDS.map(|(a, b)| (a * unit, b * unit));

    let mut points = Vec::new();
    for x1 in a1..=b1 {
        for x2 in a2..=b2 {
            let Some(x3) = total.checked_sub(x1 + x2) else {
                continue;
            };
            if (a3..=b3).contains(&x3) {
                points.push([x1, x2, x3]);
            }
        }
    }
    let scale = total as f64;
    let mut rows = Vec::with_capacity(points.len() * 6);
    for p in &points {
        let [x1, x2, x3] = p.map(|x| x as f64 / scale);
        rows.extend_from_slice(&[x1, x2, x3, x1 * x2, x1 * x3, x2 * x3]);
    }
    Ok(MixtureGrid {
        candidates: CandidateSet::from_rows(6, rows)?,
        points,
        decimals,
    })
}

/// Three fixed points `(1,0)`, `(√2,0)`, `(0,√2)` followed by `J` sunflower
/// points filling the disk of radius √2.
pub fn fig1_disk(disk_points: usize) -> Result<CandidateSet> {
    if disk_points == 0 {
        return Err(Error::Config("disk instance needs at least one spiral point".into()));
    }
    let r2 = 2f64.sqrt();
    let golden_conj = (5f64.sqrt() - 1.0) / 2.0;
    let mut rows = vec![1.0, 0.0, r2, 0.0, 0.0, r2];
    let j_total = disk_points as f64;
    for j in 1..=disk_points {
        let j = j as f64;
        let radius = r2 * ((j - 0.5) / j_total).sqrt();
        let angle = 2.0 * PI * (j * golden_conj).fract();
        rows.push(radius * angle.cos());
        rows.push(radius * angle.sin());
    }
    CandidateSet::from_rows(2, rows)
}
