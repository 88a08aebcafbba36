use crate::design::Design;
use crate::error::{Error, Result};

/// Efficient rounding of an approximate design to `n` trials.
///
/// Starts from `rᵢ = ⌈(n − l/2) wᵢ⌉` with `l` the support size, then
/// increments `argmin rᵢ/wᵢ` while `Σr < n` and decrements
/// `argmax (rᵢ − 1)/wᵢ` while `Σr > n`. Ties go to the lowest index.
pub fn efficient_rounding(wstar: &Design, n: usize) -> Result<Design> {
    let l = wstar.support().len();
    if n < l {
        return Err(Error::TooFewTrials { n, support: l });
    }
    let w = wstar.weights();
    let target = n as f64 - l as f64 / 2.0;
    let mut r: Vec<usize> = w.iter().map(|&wi| (target * wi).ceil().max(1.0) as usize).collect();
    let mut total: usize = r.iter().sum();
    while total < n {
        let k = pick(w, |i| r[i] as f64 / w[i], |a, b| a < b);
        r[k] += 1;
        total += 1;
    }
    while total > n {
        let k = pick(w, |i| (r[i] as f64 - 1.0) / w[i], |a, b| a > b);
        r[k] -= 1;
        total -= 1;
    }
    Design::exact(wstar.support().iter().copied().zip(r))
}

fn pick(w: &[f64], key: impl Fn(usize) -> f64, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    let mut best_key = key(0);
    for i in 1..w.len() {
        let k = key(i);
        if better(k, best_key) {
            best = i;
            best_key = k;
        }
    }
    best
}
