//! Removal of candidates that cannot support any D-optimal exact design of
//! size n.
//!
//! Two necessary conditions for `ℓ` to support an optimal size-n design are
//! applied in turn. The augmentation condition compares `v*_ℓ` with a
//! threshold set by the efficiency of a known good design `w⁺`. The exchange
//! condition bounds the gain of swapping a trial at `ℓ` for one at any other
//! candidate, using eigenvalue brackets derived from the same efficiency.
//!
//! The optimum `M*` is only known to solver accuracy, so both conditions are
//! evaluated with the computed `M̃` and the observed `ṽ_max = maxᵢ ṽᵢ` in
//! place of `m`. They remain valid for any positive definite matrix and
//! coincide with the textbook form when `ṽ_max = m`.

mod bounds;
mod dual;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bounds::{
    augmentation_threshold, discrepancy, discrepancy_from, eigen_bound_roots, eval_tol,
    exchange_bracket, exchange_constants, general_threshold, lemma1_keep, r_function,
    ratio_form_slack, ExchangeConstants, ROOT_TOL,
};
pub use dual::{dual_certificate, DualCertificate};

use crate::approx::{default_delta_support, max_variance_set, ApproxSolution};
use crate::design::{info_matrix, CandidateSet, Design, VarianceEvaluator};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, spd_factorize, SpdMatrix};

/// Which candidates serve as exchange competitors `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMode {
    /// Every candidate.
    #[default]
    #[serde(rename = "full")]
    Full,
    /// Only the maximum-variance set. Fewer competitors can only keep more
    /// candidates, so the result is still safe.
    #[serde(rename = "maxvar")]
    MaxVar,
}

impl fmt::Display for ScanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanMode::Full => "full",
            ScanMode::MaxVar => "maxvar",
        })
    }
}

impl FromStr for ScanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ScanMode::Full),
            "maxvar" => Ok(ScanMode::MaxVar),
            _ => Err(Error::Config(format!("unknown scan mode {s:?}, expected full or maxvar"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct PruneOptions {
    pub scan_mode: ScanMode,
    /// Tolerance of the maximum-variance set used by [`ScanMode::MaxVar`].
    pub delta_support: Option<f64>,
}

/// Quantities shared by all candidates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneThresholds {
    pub m: usize,
    pub n: usize,
    /// `min(1, Φ(M(w⁺)) / Φ(M̃))`
    pub eff_plus: f64,
    /// `eff_plus^m`
    pub d_plus: f64,
    /// `maxᵢ ṽᵢ`
    pub v_max: f64,
    /// `mn·eff_plus − (n−1)·v_max`
    pub augmentation: f64,
}

/// Per-candidate constants of the exchange test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateBounds {
    pub t: f64,
    pub constants: ExchangeConstants,
}

impl PruneThresholds {
    pub fn new(m: usize, n: usize, eff: f64, v_max: f64) -> Result<Self> {
        if !(eff > 0.0) || !(v_max > 0.0) || n == 0 {
            return Err(Error::InvalidDesign(format!(
                "pruning needs a nonsingular w+ and positive variances (eff {eff}, v_max {v_max})"
            )));
        }
        let eff_plus = eff.min(1.0);
        Ok(PruneThresholds {
            m,
            n,
            eff_plus,
            d_plus: eff_plus.powi(m as i32),
            v_max,
            augmentation: general_threshold(m, n, eff_plus, v_max),
        })
    }

    /// Augmentation condition, with a small allowance for rounding in `v`.
    pub fn augmentation_keep(&self, v: f64) -> bool {
        v >= self.augmentation - 1e-9 * (1.0 + self.augmentation.abs())
    }

    /// Trace bound `t_ℓ = ((n−1)·v_max + v_ℓ) / n`.
    pub fn t_ell(&self, v: f64) -> f64 {
        ((self.n as f64 - 1.0) * self.v_max + v) / self.n as f64
    }

    /// `d₊^{1/m} ≤ t_ℓ/m`, the precondition of the exchange bounds.
    pub fn precondition(&self, v: f64) -> bool {
        self.eff_plus <= self.t_ell(v) / self.m as f64
    }

    /// Exchange constants for a candidate with variance `v`. A `d₊` above
    /// `(t_ℓ/m)^m` is lowered to it, which keeps `d₊` a valid lower bound.
    pub fn candidate_bounds(&self, v: f64) -> Result<CandidateBounds> {
        let t = self.t_ell(v);
        if !(t > 0.0) {
            return Err(Error::InfeasiblePair {
                root_d: self.eff_plus,
                t_over_m: t / self.m as f64,
            });
        }
        let d = self.d_plus.min((t / self.m as f64).powi(self.m as i32));
        Ok(CandidateBounds {
            t,
            constants: exchange_constants(t, d, self.n, self.m)?,
        })
    }
}

/// Standardized competitors in scan order.
struct ScanRows {
    dim: usize,
    rows: Vec<f64>,
    norms: Vec<f64>,
}

impl ScanRows {
    fn new(dim: usize, rows: Vec<f64>) -> Self {
        let norms = rows.chunks_exact(dim).map(norm_sq).collect();
        ScanRows { dim, rows, norms }
    }

    /// False as soon as some competitor drives the bracket below `-eval_tol`.
    fn keep(&self, s_ell: &[f64], k: &ExchangeConstants) -> bool {
        let b = norm_sq(s_ell);
        self.rows
            .chunks_exact(self.dim)
            .zip(&self.norms)
            .all(|(s_i, &a)| exchange_bracket(a, b, dot(s_i, s_ell), k.q, k.r) >= -eval_tol(a, b))
    }
}

/// Exchange test for one candidate of a standardized set `s`: false means
/// some `i` in `scan` shows `ℓ` cannot support an optimal design.
pub fn exchange_keep(ell: usize, s: &CandidateSet, k: &ExchangeConstants, scan: &[usize]) -> Result<bool> {
    s.check_index(ell)?;
    let mut rows = Vec::with_capacity(scan.len() * s.dim());
    for &i in scan {
        s.check_index(i)?;
        rows.extend_from_slice(&s.row(i));
    }
    Ok(ScanRows::new(s.dim(), rows).keep(&s.row(ell), k))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneTimings {
    pub augmentation_s: f64,
    pub exchange_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    #[serde(rename = "N")]
    pub n_candidates: usize,
    #[serde(rename = "N1")]
    pub n1: usize,
    #[serde(rename = "N2")]
    pub n2: usize,
    pub n: usize,
    pub eff_plus: f64,
    pub augmentation_threshold: f64,
    pub max_variance: f64,
    /// Candidates left after the exchange condition.
    pub survivors: Vec<usize>,
    /// Candidates left after the augmentation condition.
    pub survivors_aug: Vec<usize>,
    pub timings: PruneTimings,
    pub scan_mode: ScanMode,
}

/// Prunes `cands` given the approximate optimum and an exact design `w_plus`.
pub fn prune(cands: &CandidateSet, approx: &ApproxSolution, w_plus: &Design, opts: &PruneOptions) -> Result<PruneReport> {
    let n = w_plus
        .size()
        .ok_or_else(|| Error::InvalidDesign("w+ must be an exact design".into()))?;
    let info_plus = info_matrix(cands, w_plus)?;
    prune_with(cands, &approx.mstar, &approx.vstar, &info_plus, n, opts)
}

/// Pruning from the raw ingredients: `M̃`, `ṽ` over `cands` and `M(w⁺)`.
pub fn prune_with(
    cands: &CandidateSet,
    mstar: &SpdMatrix,
    vstar: &[f64],
    info_plus: &SpdMatrix,
    n: usize,
    opts: &PruneOptions,
) -> Result<PruneReport> {
    let m = cands.dim();
    if vstar.len() != cands.len() {
        return Err(Error::DimensionMismatch {
            expected: cands.len(),
            found: vstar.len(),
        });
    }
    let ld_star = spd_factorize(mstar)?.logdet();
    let ld_plus = spd_factorize(info_plus)
        .map_err(|_| Error::InvalidDesign("w+ is singular".into()))?
        .logdet();
    let eff = ((ld_plus - ld_star) / m as f64).exp();
    let v_max = vstar.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let th = PruneThresholds::new(m, n, eff, v_max)?;

    let t0 = Instant::now();
    let survivors_aug: Vec<usize> = (0..cands.len())
        .into_par_iter()
        .filter(|&l| th.augmentation_keep(vstar[l]))
        .collect();
    let augmentation_s = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let whitener = VarianceEvaluator::new(mstar)?;
    let mut scan: Vec<usize> = match opts.scan_mode {
        ScanMode::Full => (0..cands.len()).collect(),
        ScanMode::MaxVar => {
            let delta = opts.delta_support.unwrap_or_else(|| default_delta_support(m));
            max_variance_set(vstar, m, delta)
        }
    };
    scan.sort_by(|&a, &b| vstar[b].total_cmp(&vstar[a]).then(a.cmp(&b)));
    let scan_rows = ScanRows::new(m, whitened_rows(cands, &whitener, &scan));

    let keep: Vec<Result<bool>> = survivors_aug
        .par_iter()
        .map(|&l| {
            let bounds = th.candidate_bounds(vstar[l])?;
            let mut s_ell = vec![0.0; m];
            whitener.whiten(&cands.row(l), &mut s_ell);
            Ok(scan_rows.keep(&s_ell, &bounds.constants))
        })
        .collect();
    let mut survivors = Vec::new();
    for (&l, k) in survivors_aug.iter().zip(keep) {
        if k? {
            survivors.push(l);
        }
    }
    let exchange_s = t1.elapsed().as_secs_f64();

    Ok(PruneReport {
        n_candidates: cands.len(),
        n1: survivors_aug.len(),
        n2: survivors.len(),
        n,
        eff_plus: th.eff_plus,
        augmentation_threshold: th.augmentation,
        max_variance: v_max,
        survivors,
        survivors_aug,
        timings: PruneTimings {
            augmentation_s,
            exchange_s,
        },
        scan_mode: opts.scan_mode,
    })
}

/// `L⁻¹ fᵢ` for each listed index, in order. Dense sets are read directly;
/// streamed sets are regenerated chunk by chunk.
fn whitened_rows(cands: &CandidateSet, w: &VarianceEvaluator, indices: &[usize]) -> Vec<f64> {
    let m = cands.dim();
    let mut out = vec![0.0; indices.len() * m];
    if indices.len() * 4 < cands.len() || cands.as_dense().is_some() {
        out.par_chunks_exact_mut(m)
            .zip(indices.par_iter())
            .for_each(|(dst, &i)| w.whiten(&cands.row(i), dst));
        return out;
    }
    let parts = cands.map_chunks(|start, rows| {
        let mut s = vec![0.0; rows.len()];
        for (f, dst) in rows.chunks_exact(m).zip(s.chunks_exact_mut(m)) {
            w.whiten(f, dst);
        }
        (start, s)
    });
    let mut all = vec![0.0; cands.len() * m];
    for (start, s) in parts {
        all[start * m..start * m + s.len()].copy_from_slice(&s);
    }
    for (dst, &i) in out.chunks_exact_mut(m).zip(indices) {
        dst.copy_from_slice(&all[i * m..(i + 1) * m]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::solve_approx;
    use crate::design::standardize;
    use crate::exact::{brute_force_exact, compute_w_plus, WPlusOptions, DEFAULT_ORACLE_BUDGET};
    use crate::generators::fig1_disk;
    use crate::linalg::sym_eigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian(rng: &mut ChaCha8Rng, len: usize, m: usize) -> CandidateSet {
        let rows = (0..len * m).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        CandidateSet::from_rows(m, rows).unwrap()
    }

    #[test]
    fn scan_mode_strings() {
        assert_eq!("maxvar".parse::<ScanMode>().unwrap(), ScanMode::MaxVar);
        assert_eq!(ScanMode::Full.to_string(), "full");
        assert_eq!(serde_json::to_string(&ScanMode::MaxVar).unwrap(), "\"maxvar\"");
        assert!("partial".parse::<ScanMode>().is_err());
    }

    #[test]
    fn vacuous_threshold_removes_nothing_by_augmentation() {
        let th = PruneThresholds::new(2, 9, 0.8, 2.0).unwrap();
        assert!((th.augmentation + 1.6).abs() <= 1e-12);
        assert!(th.augmentation_keep(0.0));
    }

    #[test]
    fn augmentation_matches_precondition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let m = rng.random_range(2..8);
            let n = rng.random_range(m..60);
            let eff = rng.random_range(0.5..1.0);
            let v_max = m as f64 * rng.random_range(0.999..1.001);
            let th = PruneThresholds::new(m, n, eff, v_max).unwrap();
            let v = rng.random_range(0.0..v_max);
            let gap = v - th.augmentation;
            if gap.abs() > 1e-9 * (1.0 + th.augmentation.abs()) {
                assert_eq!(th.augmentation_keep(v), th.precondition(v), "v {v} thr {}", th.augmentation);
            }
        }
    }

    #[test]
    fn spectral_norm_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let m = rng.random_range(2..6);
            let v: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut diff = SpdMatrix::zeros(m);
            diff.add_outer(1.0, &v);
            diff.add_outer(-1.0, &z);
            let e = sym_eigen(&diff).unwrap();
            let spec = e.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            let want = if norm_sq(&v) >= norm_sq(&z) {
                discrepancy(&v, &z).unwrap()
            } else {
                discrepancy(&z, &v).unwrap()
            };
            assert!((spec - want).abs() <= 1e-9 * (1.0 + spec));
        }
    }

    #[test]
    fn disk_instance_survivors() {
        let c = fig1_disk(2497).unwrap();
        let a = solve_approx(&c, 1e-9).unwrap();
        let w = compute_w_plus(&c, &a, 9, &WPlusOptions::default()).unwrap();
        let r = prune(&c, &a, &w.design, &PruneOptions::default()).unwrap();
        assert!(r.n2 <= r.n1 && r.n1 <= r.n_candidates);
        assert!((35..=80).contains(&r.n2), "{r:?}");
        for &i in w.design.support() {
            assert!(r.survivors.contains(&i));
        }
    }

    #[test]
    fn exact_optimum_reduces_to_maxvar_set() {
        // w* = (½, ½) on the unit vectors is an exact design for even n
        let c = CandidateSet::from_vectors(&[[1.0, 0.0], [0.0, 1.0], [0.9, 0.1], [0.5, 0.5], [0.6, -0.6]]).unwrap();
        let a = solve_approx(&c, 1e-12).unwrap();
        let w = Design::exact([(0, 2), (1, 2)]).unwrap();
        let r = prune(&c, &a, &w, &PruneOptions::default()).unwrap();
        assert_eq!(r.survivors_aug, max_variance_set(&a.vstar, 2, 1e-6));
        assert_eq!(r.survivors_aug, vec![0, 1]);
    }

    #[test]
    fn small_instances_are_safe() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..40 {
            let m = 2 + trial % 2;
            let len = rng.random_range(4..=9);
            let c = gaussian(&mut rng, len, m);
            let n = m + trial % 4;
            let a = solve_approx(&c, 1e-10).unwrap();
            let w = compute_w_plus(&c, &a, n, &WPlusOptions::default()).unwrap();
            let oracle = brute_force_exact(&c, n, DEFAULT_ORACLE_BUDGET).unwrap();
            for mode in [ScanMode::Full, ScanMode::MaxVar] {
                let opts = PruneOptions { scan_mode: mode, delta_support: None };
                let r = prune(&c, &a, &w.design, &opts).unwrap();
                for i in &oracle.sstar_n {
                    assert!(r.survivors.contains(i), "trial {trial}: {:?} vs {:?}", oracle.sstar_n, r);
                }
                assert!(r.survivors.iter().all(|i| r.survivors_aug.contains(i)));
            }
        }
    }

    #[test]
    fn restricting_the_scan_removes_less() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let c = gaussian(&mut rng, 60, 3);
            let a = solve_approx(&c, 1e-10).unwrap();
            let s = standardize(&c, &a.mstar).unwrap();
            let th = PruneThresholds::new(3, 6, 0.97, a.max_variance).unwrap();
            let big: Vec<usize> = (0..60).collect();
            let small: Vec<usize> = big.iter().copied().filter(|_| rng.random_bool(0.4)).collect();
            for l in 0..60 {
                if !th.augmentation_keep(a.vstar[l]) {
                    continue;
                }
                let k = th.candidate_bounds(a.vstar[l]).unwrap().constants;
                let kept_big = exchange_keep(l, &s, &k, &big).unwrap();
                let kept_small = exchange_keep(l, &s, &k, &small).unwrap();
                assert!(kept_small || !kept_big);
                assert!(exchange_keep(l, &s, &k, &[l]).unwrap());
            }
        }
    }

    #[test]
    fn whitening_matches_symmetric_standardization() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let c = gaussian(&mut rng, 30, 4);
        let a = solve_approx(&c, 1e-10).unwrap();
        let s = standardize(&c, &a.mstar).unwrap();
        let w = VarianceEvaluator::new(&a.mstar).unwrap();
        let rows = whitened_rows(&c, &w, &(0..30).collect::<Vec<_>>());
        for i in 0..30 {
            for j in 0..30 {
                let x = dot(&rows[i * 4..i * 4 + 4], &rows[j * 4..j * 4 + 4]);
                let y = dot(&s.row(i), &s.row(j));
                assert!((x - y).abs() <= 1e-10 * (1.0 + y.abs()));
            }
        }
    }

    proptest! {
        #[test]
        fn report_counts_are_nested(seed in 0u64..1000, n_off in 0usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = gaussian(&mut rng, 50, 3);
            let a = solve_approx(&c, 1e-9).unwrap();
            let w = compute_w_plus(&c, &a, 3 + n_off, &WPlusOptions::default()).unwrap();
            let r = prune(&c, &a, &w.design, &PruneOptions::default()).unwrap();
            prop_assert!(r.n2 <= r.n1 && r.n1 <= r.n_candidates);
            prop_assert!(r.survivors.iter().all(|i| r.survivors_aug.binary_search(i).is_ok()));
        }
    }
}
