use rayon::prelude::*;

use crate::approx::rank_completing_subset;
use crate::design::{CandidateSet, Design};
use crate::error::{Error, Result};
use crate::exact::ExactSearchResult;

/// Default cap on the number of designs the oracle may enumerate.
pub const DEFAULT_ORACLE_BUDGET: u64 = 10_000_000;
/// Designs whose `ln det` is within this relative distance of the best are
/// all reported as optimal.
pub const OPT_TIE_TOL: f64 = 1e-9;

/// Number of size-`n` exact designs on `len` candidates, `C(len+n−1, n)`,
/// saturating at `u128::MAX`.
pub fn multiset_count(len: usize, n: usize) -> u128 {
    if len == 0 {
        return u128::from(n == 0);
    }
    let mut acc: u128 = 1;
    let k = n.min(len - 1) as u128;
    let top = (len + n - 1) as u128;
    for j in 1..=k {
        // acc * (top - k + j) / j stays integral at every step
        acc = match acc.checked_mul(top - k + j) {
            Some(x) => x / j,
            None => return u128::MAX,
        };
    }
    acc
}

fn tie_window(best: f64) -> f64 {
    OPT_TIE_TOL * best.abs().max(1.0)
}

/// Enumerates every size-`n` exact design and returns all optimal ones.
pub fn brute_force_exact(cands: &CandidateSet, n: usize, budget: u64) -> Result<ExactSearchResult> {
    let len = cands.len();
    let m = cands.dim();
    let required = multiset_count(len, n);
    if required > budget as u128 {
        return Err(Error::BudgetExceeded { required, budget });
    }
    if n < m {
        return Err(Error::Config(format!("n = {n} is below the model dimension {m}")));
    }
    rank_completing_subset(cands)?;

    let dense = cands.materialize();
    let rows = dense.as_dense().expect("materialized");
    let blocks: Vec<Block> = (0..len)
        .into_par_iter()
        .map(|first| enumerate_block(rows, m, len, n, first))
        .collect();

    let best = blocks.iter().map(|b| b.best).fold(f64::NEG_INFINITY, f64::max);
    let floor = best - tie_window(best);
    let mut optimal = Vec::new();
    for b in blocks {
        for (ld, seq) in b.kept {
            if ld >= floor {
                optimal.push(Design::exact(seq.into_iter().map(|i| (i, 1)))?);
            }
        }
    }
    let mut sstar: Vec<usize> = optimal.iter().flat_map(|d| d.support().iter().copied()).collect();
    sstar.sort_unstable();
    sstar.dedup();
    let phi = ((best - m as f64 * (n as f64).ln()) / m as f64).exp();
    Ok(ExactSearchResult {
        best: optimal[0].clone(),
        phi,
        optimal_designs: optimal,
        sstar_n: sstar,
    })
}

struct Block {
    best: f64,
    kept: Vec<(f64, Vec<usize>)>,
}

/// All nondecreasing index sequences starting at `first`, depth first.
/// `ln det` is of the unscaled sum `Σ fᵢfᵢᵀ`.
fn enumerate_block(rows: &[f64], m: usize, len: usize, n: usize, first: usize) -> Block {
    let mm = m * m;
    let mut sums = vec![0.0; (n + 1) * mm];
    let mut seq = vec![first; n];
    add_outer(&mut sums, 0, 1, &rows[first * m..(first + 1) * m], m);
    let mut scratch = vec![0.0; mm];
    let mut block = Block {
        best: f64::NEG_INFINITY,
        kept: Vec::new(),
    };
    // depth = number of fixed entries; sums[depth] holds their sum
    let mut depth = 1;
    loop {
        if depth == n {
            let ld = logdet_small(&sums[n * mm..(n + 1) * mm], m, &mut scratch);
            if ld > f64::NEG_INFINITY {
                if ld > block.best {
                    block.best = ld;
                    let floor = ld - tie_window(ld);
                    block.kept.retain(|(x, _)| *x >= floor);
                }
                if ld >= block.best - tie_window(block.best) {
                    block.kept.push((ld, seq.clone()));
                }
            }
            // backtrack to the deepest position that can still increase
            loop {
                depth -= 1;
                if depth == 0 {
                    return block;
                }
                if seq[depth] + 1 < len {
                    seq[depth] += 1;
                    break;
                }
            }
        } else {
            seq[depth] = seq[depth - 1];
        }
        let i = seq[depth];
        add_outer(&mut sums, depth, depth + 1, &rows[i * m..(i + 1) * m], m);
        depth += 1;
    }
}

fn add_outer(sums: &mut [f64], from: usize, to: usize, f: &[f64], m: usize) {
    let mm = m * m;
    let (head, tail) = sums.split_at_mut(to * mm);
    let dst = &mut tail[..mm];
    let src = &head[from * mm..(from + 1) * mm];
    for a in 0..m {
        for b in 0..=a {
            dst[a * m + b] = src[a * m + b] + f[a] * f[b];
        }
    }
}

/// `ln det` of the lower triangle of `a`, or `-∞` if a pivot falls under
/// `1e-12 · max diag`.
fn logdet_small(a: &[f64], m: usize, l: &mut [f64]) -> f64 {
    let floor = 1e-12 * (0..m).map(|i| a[i * m + i]).fold(0.0, f64::max);
    let mut ld = 0.0;
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if !(d > floor) {
            return f64::NEG_INFINITY;
        }
        let djj = d.sqrt();
        l[j * m + j] = djj;
        ld += d.ln();
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / djj;
        }
    }
    ld
}
