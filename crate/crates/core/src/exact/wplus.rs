use serde::{Deserialize, Serialize};

use crate::approx::{default_delta_support, max_variance_set, ApproxSolution};
use crate::design::{efficiency, info_matrix, CandidateSet, Design};
use crate::error::{Error, Result};
use crate::exact::{
    brute_force_exact, efficient_rounding, greedy_start, multi_start_exchange, multiset_count,
    ExchangeOptions, DEFAULT_ORACLE_BUDGET,
};
use crate::linalg::spd_factorize;

#[derive(Clone, Debug)]
pub struct WPlusOptions {
    /// Tolerance defining the maximum-variance set; `1e-5·m` when `None`.
    pub delta_support: Option<f64>,
    pub oracle_budget: u64,
    pub exchange: ExchangeOptions,
}

impl Default for WPlusOptions {
    fn default() -> Self {
        WPlusOptions {
            delta_support: None,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
            exchange: ExchangeOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WPlusMethod {
    /// The approximate optimum already has counts in multiples of 1/n.
    ApproxIsExact,
    /// Exhaustive search over the maximum-variance set.
    Oracle,
    /// Rounding followed by exchange with restarts.
    Heuristic,
}

/// A good size-`n` design and its efficiency against the approximate optimum.
#[derive(Clone, Debug)]
pub struct WPlus {
    pub design: Design,
    pub eff: f64,
    pub method: WPlusMethod,
}

fn nonsingular(cands: &CandidateSet, d: &Design) -> bool {
    info_matrix(cands, d).is_ok_and(|m| spd_factorize(&m).is_ok())
}

/// Size-`n` exact design built on the approximate optimum's support.
pub fn compute_w_plus(
    cands: &CandidateSet,
    approx: &ApproxSolution,
    n: usize,
    opts: &WPlusOptions,
) -> Result<WPlus> {
    let m = cands.dim();
    if n < m {
        return Err(Error::Config(format!("n = {n} is below the model dimension {m}")));
    }
    let finish = |design: Design, method| -> Result<WPlus> {
        let eff = efficiency(&design, &approx.mstar, cands)?;
        Ok(WPlus { design, eff, method })
    };

    if let Some(d) = approx.design.as_exact(n, 1e-6) {
        if nonsingular(cands, &d) {
            return finish(d, WPlusMethod::ApproxIsExact);
        }
    }

    let delta = opts.delta_support.unwrap_or_else(|| default_delta_support(m));
    let maxvar = max_variance_set(&approx.vstar, m, delta);
    if multiset_count(maxvar.len(), n) <= opts.oracle_budget as u128 {
        let sub = cands.subset(&maxvar)?;
        match brute_force_exact(&sub, n, opts.oracle_budget) {
            Ok(r) => return finish(r.best.remap(&maxvar)?, WPlusMethod::Oracle),
            Err(Error::RankDeficient { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    let all: Vec<usize>;
    let rounded = efficient_rounding(&approx.design, n)
        .ok()
        .filter(|d| nonsingular(cands, d));
    let (start, scan) = match rounded {
        Some(d) => (d, &maxvar[..]),
        None => match greedy_start(cands, &maxvar, n) {
            Ok(d) => (d, &maxvar[..]),
            Err(Error::RankDeficient { .. }) => {
                all = (0..cands.len()).collect();
                (greedy_start(cands, &all, n)?, &all[..])
            }
            Err(e) => return Err(e),
        },
    };
    let best = multi_start_exchange(cands, &start, scan, &opts.exchange)?;
    finish(best.design, WPlusMethod::Heuristic)
}
