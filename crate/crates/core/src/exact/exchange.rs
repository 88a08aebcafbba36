use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx::rank_completing_subset;
use crate::design::{info_matrix, CandidateSet, Design};
use crate::error::{Error, Result};
use crate::linalg::{dot, spd_factorize, SpdMatrix};

/// Minimum relative gain in Φ for an exchange to be accepted.
pub const REL_IMPROVE_TOL: f64 = 1e-10;
const MAX_PASSES: usize = 100_000;

/// `det M' / det M` after replacing one of `n` trials at `ℓ` by one at `i`,
/// where `M' = M + (fᵢfᵢᵀ − f_ℓf_ℓᵀ)/n`, `vᵢ = fᵢᵀM⁻¹fᵢ`, `v_ℓ` likewise
/// and `v_iℓ = fᵢᵀM⁻¹f_ℓ`.
#[inline]
pub fn exchange_det_ratio(vi: f64, vl: f64, vil: f64, n: usize) -> f64 {
    let n = n as f64;
    (1.0 + vi / n) * (1.0 - vl / n) + vil * vil / (n * n)
}

#[derive(Clone, Debug)]
pub struct ExchangeOptions {
    pub rel_improve_tol: f64,
    /// Perturbed restarts on top of the plain run.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for ExchangeOptions {
    fn default() -> Self {
        ExchangeOptions {
            rel_improve_tol: REL_IMPROVE_TOL,
            restarts: 5,
            seed: 0,
        }
    }
}

/// Result of a local search: the design, `ln det M` and the accepted moves.
#[derive(Clone, Debug)]
pub struct ExchangeOutcome {
    pub design: Design,
    pub logdet: f64,
    pub exchanges: Vec<ExchangeMove>,
}

/// One accepted exchange with the ratio predicted by [`exchange_det_ratio`].
#[derive(Clone, Copy, Debug)]
pub struct ExchangeMove {
    pub removed: usize,
    pub added: usize,
    pub predicted_ratio: f64,
    pub logdet_before: f64,
    pub logdet_after: f64,
}

fn logdet_of(cands: &CandidateSet, d: &Design) -> Result<(SpdMatrix, f64)> {
    let info = info_matrix(cands, d)?;
    let ld = spd_factorize(&info).map_err(|_| Error::SingularStart)?.logdet();
    Ok((info, ld))
}

/// Single-point exchange with the default tolerance.
pub fn kl_exchange(cands: &CandidateSet, start: &Design, scan: &[usize]) -> Result<Design> {
    Ok(local_search(cands, start, scan, REL_IMPROVE_TOL)?.design)
}

/// Best-improvement exchange: each pass evaluates every (ℓ in support,
/// i in scan) pair and applies the best one, until no pair raises Φ by
/// more than `rel_improve_tol`.
pub fn local_search(
    cands: &CandidateSet,
    start: &Design,
    scan: &[usize],
    rel_improve_tol: f64,
) -> Result<ExchangeOutcome> {
    let n = start
        .size()
        .ok_or_else(|| Error::InvalidDesign("exchange needs an exact design".into()))?;
    for &i in scan.iter().chain(start.support()) {
        cands.check_index(i)?;
    }
    let m = cands.dim();
    let mut rows = Vec::with_capacity(scan.len() * m);
    for &i in scan {
        rows.extend_from_slice(&cands.row(i));
    }
    let min_ratio = (1.0 + rel_improve_tol).powi(m as i32);

    let mut design = start.clone();
    let (mut info, mut logdet) = logdet_of(cands, &design)?;
    let mut exchanges = Vec::new();
    let mut u = vec![0.0; m];
    for _ in 0..MAX_PASSES {
        let minv = spd_factorize(&info)?.inverse();
        let vscan: Vec<f64> = rows.chunks_exact(m).map(|f| minv.quad_form(f)).collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for &l in design.support() {
            let fl = cands.row(l);
            minv.mul_vec(&fl, &mut u);
            let vl = dot(&fl, &u);
            for (k, f) in rows.chunks_exact(m).enumerate() {
                if scan[k] == l {
                    continue;
                }
                let ratio = exchange_det_ratio(vscan[k], vl, dot(f, &u), n);
                if best.is_none_or(|(_, _, b)| ratio > b) {
                    best = Some((l, scan[k], ratio));
                }
            }
        }
        let Some((l, i, ratio)) = best.filter(|b| b.2 > min_ratio) else {
            break;
        };
        let next = Design::exact(
            design
                .support()
                .iter()
                .zip(design.counts().expect("exact"))
                .map(|(&j, &c)| (j, if j == l { c - 1 } else { c }))
                .chain([(i, 1)]),
        )?;
        let (next_info, next_logdet) = logdet_of(cands, &next)?;
        if next_logdet <= logdet {
            // Rounding disagreed with the prediction; stop rather than cycle.
            break;
        }
        exchanges.push(ExchangeMove {
            removed: l,
            added: i,
            predicted_ratio: ratio,
            logdet_before: logdet,
            logdet_after: next_logdet,
        });
        design = next;
        info = next_info;
        logdet = next_logdet;
    }
    Ok(ExchangeOutcome {
        design,
        logdet,
        exchanges,
    })
}

/// Local search from `start` plus `opts.restarts` runs from seeded random
/// perturbations of it. Returns the best design found (earliest on ties).
pub fn multi_start_exchange(
    cands: &CandidateSet,
    start: &Design,
    scan: &[usize],
    opts: &ExchangeOptions,
) -> Result<ExchangeOutcome> {
    let mut best = local_search(cands, start, scan, opts.rel_improve_tol)?;
    if scan.is_empty() {
        return Ok(best);
    }
    for restart in 0..opts.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(restart as u64);
        let Some(perturbed) = perturb(cands, &best.design, scan, &mut rng)? else {
            continue;
        };
        let run = local_search(cands, &perturbed, scan, opts.rel_improve_tol)?;
        if run.logdet > best.logdet {
            best = run;
        }
    }
    Ok(best)
}

/// Moves about a third of the trials to random scan points. Gives up after
/// a few singular draws.
fn perturb(
    cands: &CandidateSet,
    design: &Design,
    scan: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Option<Design>> {
    let n = design.size().expect("exact");
    let k = (n / 3).max(1);
    let trials: Vec<usize> = design
        .support()
        .iter()
        .zip(design.counts().expect("exact"))
        .flat_map(|(&i, &c)| std::iter::repeat_n(i, c))
        .collect();
    for _ in 0..20 {
        let mut t = trials.clone();
        for _ in 0..k {
            let pos = rng.random_range(0..n);
            t[pos] = scan[rng.random_range(0..scan.len())];
        }
        let d = Design::exact(t.into_iter().map(|i| (i, 1)))?;
        if logdet_of(cands, &d).is_ok() {
            return Ok(Some(d));
        }
    }
    Ok(None)
}

/// A nonsingular size-`n` design on `pool`: a rank-completing set of `m`
/// points, then greedy additions at the current maximum variance.
pub fn greedy_start(cands: &CandidateSet, pool: &[usize], n: usize) -> Result<Design> {
    let m = cands.dim();
    if n < m {
        return Err(Error::Config(format!("n = {n} is below the model dimension {m}")));
    }
    let sub = cands.subset(pool)?;
    let picked = rank_completing_subset(&sub)?;
    let mut info = SpdMatrix::zeros(m);
    for &p in &picked {
        info.add_outer(1.0, &sub.row(p));
    }
    let mut counts = vec![0usize; pool.len()];
    for &p in &picked {
        counts[p] += 1;
    }
    for _ in m..n {
        let minv = spd_factorize(&info)?.inverse();
        let v = sub.map_rows(|f| minv.quad_form(f));
        let (best, _) = crate::approx::argmax(&v).expect("nonempty pool");
        info.add_outer(1.0, &sub.row(best));
        counts[best] += 1;
    }
    Design::exact(counts.into_iter().enumerate().map(|(k, c)| (pool[k], c)))
}
