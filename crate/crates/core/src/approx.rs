//! D-optimal approximate designs.
//!
//! Multiplicative updates `wᵢ ← wᵢ vᵢ(w) / m` interleaved with vertex-exchange
//! phases. An exchange moves mass from a support point with low variance to
//! the current best of a small pool of high-variance candidates, with the step
//! length chosen by exact line search on `ln det`. The run stops once the
//! equivalence-theorem bound `m / maxᵢ vᵢ` certifies the requested efficiency.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{info_matrix, info_matrix_dense, CandidateSet, Design, VarianceEvaluator};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq, spd_factorize, SpdMatrix};

#[derive(Clone, Debug)]
pub struct ApproxOptions {
    /// Stop once `m / max v ≥ 1 - tol`.
    pub tol: f64,
    pub max_iters: usize,
    /// Run an exchange phase every this many iterations.
    pub exchange_every: usize,
}

impl Default for ApproxOptions {
    fn default() -> Self {
        ApproxOptions {
            tol: 1e-9,
            max_iters: 1_000_000,
            exchange_every: 2,
        }
    }
}

/// An optimal approximate design with its equivalence-theorem certificate.
#[derive(Clone, Debug)]
pub struct ApproxSolution {
    pub design: Design,
    pub mstar: SpdMatrix,
    /// Variance function at `mstar`, one entry per candidate.
    pub vstar: Vec<f64>,
    /// `m / max vstar`
    pub eff_lower_bound: f64,
    pub max_variance: f64,
    pub iterations: usize,
    /// `ln det M(w)` after each iteration.
    pub logdet_trace: Vec<f64>,
}

/// JSON sidecar written next to the approximate design CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxSummary {
    pub eff_lower_bound: f64,
    pub iterations: usize,
    pub max_variance: f64,
    pub support_size: usize,
}

impl ApproxSolution {
    pub fn summary(&self) -> ApproxSummary {
        ApproxSummary {
            eff_lower_bound: self.eff_lower_bound,
            iterations: self.iterations,
            max_variance: self.max_variance,
            support_size: self.design.support().len(),
        }
    }

    /// Rebuilds the solution from a stored design: recomputes `M*`, `v*` and
    /// the certificate on `cands`.
    pub fn from_design(cands: &CandidateSet, design: Design) -> Result<Self> {
        let mstar = info_matrix(cands, &design)?;
        let eval = VarianceEvaluator::new(&mstar)?;
        let vstar = cands.map_rows(|f| eval.eval(f));
        let max_variance = vstar.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(ApproxSolution {
            design,
            eff_lower_bound: cands.dim() as f64 / max_variance,
            max_variance,
            mstar,
            vstar,
            iterations: 0,
            logdet_trace: Vec::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mstar.dim()
    }
}

pub fn solve_approx(cands: &CandidateSet, tol: f64) -> Result<ApproxSolution> {
    solve_approx_with(
        cands,
        &ApproxOptions {
            tol,
            ..ApproxOptions::default()
        },
    )
}

/// Candidates with `v*ᵢ ≥ m − delta`.
pub fn max_variance_set(vstar: &[f64], m: usize, delta: f64) -> Vec<usize> {
    let floor = m as f64 - delta;
    let mut out: Vec<usize> = (0..vstar.len()).filter(|&i| vstar[i] >= floor).collect();
    if out.is_empty() {
        if let Some((best, _)) = argmax(vstar) {
            out.push(best);
        }
    }
    out
}

/// Default support-membership tolerance `1e-5 · m`.
pub fn default_delta_support(m: usize) -> f64 {
    1e-5 * m as f64
}

/// Largest entry, lowest index on ties.
pub(crate) fn argmax(v: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best
}

/// Greedy pivoted Gram–Schmidt: picks up to m candidates with the largest
/// residual norm at each step.
pub(crate) fn rank_completing_subset(cands: &CandidateSet) -> Result<Vec<usize>> {
    let m = cands.dim();
    let scale = cands
        .map_chunks(|_, rows| rows.chunks_exact(m).map(norm_sq).fold(0.0, f64::max))
        .into_iter()
        .fold(0.0, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut picked = Vec::with_capacity(m);
    for _ in 0..m {
        let residual = |f: &[f64]| {
            let mut r = f.to_vec();
            for q in &basis {
                let c = dot(q, &r);
                for (x, y) in r.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
            norm_sq(&r)
        };
        let norms = cands.map_rows(residual);
        let (best, norm) = argmax(&norms).expect("nonempty candidate set");
        if !(norm > 1e-20 * scale.max(f64::MIN_POSITIVE)) || picked.contains(&best) {
            return Err(Error::RankDeficient {
                rank: picked.len(),
                m,
            });
        }
        let f = cands.row(best);
        let mut r = f.to_vec();
        for q in &basis {
            let c = dot(q, &r);
            for (x, y) in r.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
        let len = norm_sq(&r).sqrt();
        r.iter_mut().for_each(|x| *x /= len);
        basis.push(r);
        picked.push(best);
    }
    Ok(picked)
}

fn initial_weights(cands: &CandidateSet) -> Result<Vec<f64>> {
    let n = cands.len();
    let m = cands.dim();
    let picked = rank_completing_subset(cands)?;
    let mut w = vec![1.0 / n as f64; n];
    for &i in &picked {
        w[i] += 1.0 / m as f64;
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    Ok(w)
}

/// Current iterate: weights plus `M`, `ln det M` and the variance function.
struct State {
    weights: Vec<f64>,
    info: SpdMatrix,
    logdet: f64,
    v: Vec<f64>,
    vmax: f64,
}

fn evaluate(cands: &CandidateSet, weights: Vec<f64>) -> Result<State> {
    let info = info_matrix_dense(cands, &weights);
    let logdet = spd_factorize(&info)?.logdet();
    let eval = VarianceEvaluator::new(&info)?;
    let v = cands.map_rows(|f| eval.eval(f));
    let vmax = argmax(&v).map_or(f64::NAN, |(_, x)| x);
    Ok(State {
        weights,
        info,
        logdet,
        v,
        vmax,
    })
}

/// `Ainv ← (A + alpha f fᵀ)⁻¹` by Sherman–Morrison.
fn rank_one_inverse_update(ainv: &mut SpdMatrix, alpha: f64, f: &[f64]) {
    let m = f.len();
    let mut u = vec![0.0; m];
    ainv.mul_vec(f, &mut u);
    let denom = 1.0 + alpha * dot(f, &u);
    ainv.add_outer(-alpha / denom, &u);
}

/// Step length maximizing `ln det(M + α(fⱼfⱼᵀ − fₖfₖᵀ))` over `[0, cap]`.
///
/// With `vⱼ, vₖ, vⱼₖ` the M⁻¹-products the determinant ratio is
/// `1 + α(vⱼ − vₖ) − α²(vⱼvₖ − vⱼₖ²)`.
fn exchange_step(vj: f64, vk: f64, vjk: f64, cap: f64) -> f64 {
    let gap = vj - vk;
    if gap <= 0.0 {
        return 0.0;
    }
    let curv = vj * vk - vjk * vjk;
    if curv <= 1e-15 * vj * vk {
        return cap;
    }
    (gap / (2.0 * curv)).min(cap)
}

/// One exchange phase over the current support. Returns the updated weights.
fn exchange_phase(cands: &CandidateSet, state: &State, pool_size: usize) -> Result<Vec<f64>> {
    let n = cands.len();
    let mut weights = state.weights.clone();

    // Pool of destinations: the top candidates by variance, plus the support.
    let mut by_var: Vec<usize> = (0..n).collect();
    let k = pool_size.min(n);
    by_var.select_nth_unstable_by(k - 1, |&a, &b| state.v[b].total_cmp(&state.v[a]).then(a.cmp(&b)));
    let mut pool: Vec<usize> = by_var[..k].to_vec();
    let support: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();
    if support.len() <= 4 * pool_size {
        pool.extend(&support);
    }
    pool.sort_unstable();
    pool.dedup();
    let pool_rows: Vec<Vec<f64>> = pool.iter().map(|&j| cands.row(j).into_owned()).collect();

    let mut minv = spd_factorize(&state.info)?.inverse();
    let mut pool_v: Vec<f64> = pool_rows.iter().map(|f| minv.quad_form(f)).collect();

    let mut sources = support;
    sources.sort_by(|&a, &b| state.v[a].total_cmp(&state.v[b]).then(a.cmp(&b)));

    let m = cands.dim();
    let mut u = vec![0.0; m];
    for k in sources {
        let wk = weights[k];
        if wk <= 0.0 {
            continue;
        }
        let fk = cands.row(k);
        minv.mul_vec(&fk, &mut u);
        let vk = dot(&fk, &u);
        let Some((p, vj)) = pool
            .iter()
            .zip(&pool_v)
            .enumerate()
            .filter(|(_, (&j, _))| j != k)
            .map(|(p, (_, &v))| (p, v))
            .fold(None, |best: Option<(usize, f64)>, (p, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((p, v)),
            })
        else {
            continue;
        };
        let j = pool[p];
        let fj = &pool_rows[p];
        let vjk = dot(fj, &u);
        let alpha = exchange_step(vj, vk, vjk, wk);
        if alpha <= 0.0 {
            continue;
        }
        weights[k] = if alpha >= wk { 0.0 } else { wk - alpha };
        weights[j] += alpha;
        rank_one_inverse_update(&mut minv, alpha, fj);
        rank_one_inverse_update(&mut minv, -alpha, &fk);
        for (vp, f) in pool_v.iter_mut().zip(&pool_rows) {
            *vp = minv.quad_form(f);
        }
    }
    Ok(weights)
}

fn multiplicative_step(state: &State, m: usize) -> Vec<f64> {
    let inv_m = 1.0 / m as f64;
    let mut w: Vec<f64> = state
        .weights
        .par_iter()
        .zip(&state.v)
        .map(|(w, v)| w * v * inv_m)
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Zeroes weights under the support floor and renormalizes.
fn prune_tiny(mut w: Vec<f64>) -> Vec<f64> {
    w.iter_mut().for_each(|x| {
        if *x < crate::design::SUPPORT_FLOOR {
            *x = 0.0
        }
    });
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Above this many candidates the solver works on a growing subset and
/// certifies each subset optimum against the full set.
pub const WORKING_SET_MIN: usize = 20_000;

pub fn solve_approx_with(cands: &CandidateSet, opts: &ApproxOptions) -> Result<ApproxSolution> {
    if !(opts.tol > 0.0 && opts.tol < 1.0) {
        return Err(Error::Config(format!("tolerance {} not in (0, 1)", opts.tol)));
    }
    if cands.len() > WORKING_SET_MIN {
        solve_working_set(cands, opts)
    } else {
        solve_direct(cands, opts)
    }
}

/// Indices of the `k` largest entries of `v` not already in `taken`.
fn top_outside(v: &[f64], taken: &[usize], k: usize) -> Vec<usize> {
    let mut mask = vec![false; v.len()];
    taken.iter().for_each(|&i| mask[i] = true);
    let mut rest: Vec<usize> = (0..v.len()).filter(|&i| !mask[i]).collect();
    if rest.len() > k {
        rest.select_nth_unstable_by(k - 1, |&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
        rest.truncate(k);
    }
    rest
}

fn solve_working_set(cands: &CandidateSet, opts: &ApproxOptions) -> Result<ApproxSolution> {
    let m = cands.dim();
    let target = 1.0 - opts.tol;
    let grow = (200 * m).max(2000);
    let sub_opts = ApproxOptions {
        tol: 0.5 * opts.tol,
        ..opts.clone()
    };
    let start = evaluate(cands, initial_weights(cands)?)?;
    let mut set = rank_completing_subset(cands)?;
    set.extend(top_outside(&start.v, &set, grow));
    let mut iterations = 0;
    loop {
        set.sort_unstable();
        set.dedup();
        let sol = solve_direct(&cands.subset(&set)?, &sub_opts)?;
        iterations += sol.iterations;
        let mut weights = vec![0.0; cands.len()];
        for (i, w) in sol.design.iter() {
            weights[set[i]] = w;
        }
        let state = evaluate(cands, weights)?;
        if m as f64 / state.vmax >= target || set.len() == cands.len() {
            return Ok(ApproxSolution {
                design: Design::from_weights(&state.weights)?,
                eff_lower_bound: m as f64 / state.vmax,
                max_variance: state.vmax,
                mstar: state.info,
                vstar: state.v,
                iterations,
                logdet_trace: sol.logdet_trace,
            });
        }
        if iterations >= opts.max_iters {
            return Err(Error::IterationCap {
                iterations,
                eff_lower_bound: m as f64 / state.vmax,
            });
        }
        let extra = top_outside(&state.v, &set, grow);
        set.extend(extra);
    }
}

fn solve_direct(cands: &CandidateSet, opts: &ApproxOptions) -> Result<ApproxSolution> {
    let m = cands.dim();
    let pool_size = (2 * m).max(20);
    let every = opts.exchange_every.max(1);
    let target = 1.0 - opts.tol;

    let mut state = evaluate(cands, initial_weights(cands)?)?;
    let mut trace = vec![state.logdet];
    let mut iterations = 0;
    loop {
        if m as f64 / state.vmax >= target {
            // Sweep stragglers out of the support, then re-certify.
            let cleaned = prune_tiny(exchange_phase(cands, &state, pool_size)?);
            let candidate = evaluate(cands, cleaned)?;
            if m as f64 / candidate.vmax >= target {
                state = candidate;
                break;
            }
        }
        if iterations >= opts.max_iters {
            return Err(Error::IterationCap {
                iterations,
                eff_lower_bound: m as f64 / state.vmax,
            });
        }
        let next = if iterations % every == 0 {
            exchange_phase(cands, &state, pool_size)?
        } else {
            multiplicative_step(&state, m)
        };
        let next = evaluate(cands, next)?;
        debug_assert!(
            next.logdet >= state.logdet - 1e-12 * state.logdet.abs().max(1.0),
            "ln det decreased: {} -> {}",
            state.logdet,
            next.logdet
        );
        state = next;
        trace.push(state.logdet);
        iterations += 1;
    }

    let design = Design::from_weights(&state.weights)?;
    Ok(ApproxSolution {
        design,
        eff_lower_bound: m as f64 / state.vmax,
        max_variance: state.vmax,
        mstar: state.info,
        vstar: state.v,
        iterations,
        logdet_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_basis_gets_uniform_weights() {
        let c = CandidateSet::from_vectors(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let s = solve_approx(&c, 1e-9).unwrap();
        assert_eq!(s.design.support(), &[0, 1]);
        for &w in s.design.weights() {
            assert!((w - 0.5).abs() < 1e-9);
        }
        assert!((s.max_variance - 2.0).abs() < 1e-8);
    }

    #[test]
    fn orthonormal_basis_optimum() {
        for m in 2..=6 {
            let mut vecs = vec![vec![0.0; m]; m];
            for (i, v) in vecs.iter_mut().enumerate() {
                v[i] = 1.0;
            }
            // a few interior distractors
            vecs.push(vec![0.9 / (m as f64).sqrt(); m]);
            vecs.push((0..m).map(|k| if k % 2 == 0 { 0.3 } else { -0.3 }).collect());
            let c = CandidateSet::from_vectors(&vecs).unwrap();
            let s = solve_approx(&c, 1e-10).unwrap();
            let phi = (spd_factorize(&s.mstar).unwrap().logdet() / m as f64).exp();
            assert!((phi - 1.0 / m as f64).abs() <= 1e-9, "m={m}: {phi}");
        }
    }

    #[test]
    fn working_set_matches_direct_solve() {
        let c = crate::generators::gaussian_instance(WORKING_SET_MIN + 5000, 3, 8).unwrap();
        let ws = solve_approx(&c, 1e-9).unwrap();
        assert!(ws.eff_lower_bound >= 1.0 - 1e-9);
        assert_eq!(ws.vstar.len(), c.len());
        let direct = solve_direct(&c, &ApproxOptions::default()).unwrap();
        let ld = |s: &ApproxSolution| spd_factorize(&s.mstar).unwrap().logdet();
        // both certified within 1e-9 efficiency, so ln det within m * 1e-9
        assert!((ld(&ws) - ld(&direct)).abs() <= 3.0 * 1e-9 + 1e-12);
        let top = super::top_outside(&[0.5, 3.0, 1.0, 2.0], &[1], 2);
        assert_eq!(top.len(), 2);
        assert!(top.contains(&3) && top.contains(&2));
    }

    #[test]
    fn logdet_never_decreases() {
        let rows: Vec<f64> = (0..400).map(|k| ((k * 7919) % 113) as f64 / 57.0 - 1.0).collect();
        let c = CandidateSet::from_rows(4, rows).unwrap();
        let s = solve_approx(&c, 1e-9).unwrap();
        assert!(s.eff_lower_bound >= 1.0 - 1e-9);
        for w in s.logdet_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0));
        }
        let floor = 4.0 - default_delta_support(4);
        for &i in s.design.support() {
            assert!(s.vstar[i] >= floor);
        }
    }

    #[test]
    fn rank_deficient_is_reported() {
        let c = CandidateSet::from_vectors(&[[1.0, 2.0], [2.0, 4.0], [-1.0, -2.0]]).unwrap();
        assert!(matches!(solve_approx(&c, 1e-6), Err(Error::RankDeficient { rank: 1, m: 2 })));
    }

    #[test]
    fn max_variance_set_examples() {
        let m = 3;
        let v = [3.0, 3.0, 2.0];
        assert_eq!(max_variance_set(&v, m, 1e-6), vec![0, 1]);
        assert_eq!(max_variance_set(&v, m, 3.0), vec![0, 1, 2]);
        // argmax is always included
        assert_eq!(max_variance_set(&[1.0, 2.5, 2.0], m, 1e-6), vec![1]);
    }

    #[test]
    fn exchange_step_line_search() {
        // collinear destination: take everything
        assert_eq!(exchange_step(2.0, 1.0, 2f64.sqrt(), 0.3), 0.3);
        // no gain
        assert_eq!(exchange_step(1.0, 1.0, 0.0, 0.3), 0.0);
        // interior optimum of 1 + a - a²·(2·1) → a = 1/4
        assert!((exchange_step(2.0, 1.0, 0.0, 1.0) - 0.25).abs() < 1e-15);
    }
}
