//! Exact designs: rounding, exchange improvement and an enumeration oracle.

mod exchange;
mod oracle;
mod rounding;
mod wplus;

pub use exchange::{
    exchange_det_ratio, greedy_start, kl_exchange, local_search, multi_start_exchange, ExchangeMove,
    ExchangeOptions, ExchangeOutcome, REL_IMPROVE_TOL,
};
pub use oracle::{brute_force_exact, multiset_count, DEFAULT_ORACLE_BUDGET, OPT_TIE_TOL};
pub use rounding::efficient_rounding;
pub use wplus::{compute_w_plus, WPlus, WPlusMethod, WPlusOptions};

use serde::{Deserialize, Serialize};

use crate::design::Design;

/// Outcome of an exhaustive search.
#[derive(Clone, Debug)]
pub struct ExactSearchResult {
    /// First optimal design in enumeration order.
    pub best: Design,
    /// `Φ(M(best))`
    pub phi: f64,
    pub optimal_designs: Vec<Design>,
    /// Union of the supports of `optimal_designs`.
    pub sstar_n: Vec<usize>,
}

/// JSON form of one exact design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub support: Vec<usize>,
    pub counts: Vec<usize>,
}

impl DesignRecord {
    pub fn new(d: &Design, ids: Option<&[usize]>) -> Self {
        DesignRecord {
            support: d.support().iter().map(|&i| ids.map_or(i, |ids| ids[i])).collect(),
            counts: d.counts().map(<[usize]>::to_vec).unwrap_or_default(),
        }
    }
}
