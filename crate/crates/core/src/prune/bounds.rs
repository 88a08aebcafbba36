use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};

/// Feasibility slack for `d^{1/m} ≤ t/m`.
pub const ROOT_TOL: f64 = 1e-12;
const BISECT_ITERS: usize = 200;
const BISECT_RESIDUAL: f64 = 1e-13;

/// `Δ(v, z) = ½(‖v+z‖‖v−z‖ + ‖v‖² − ‖z‖²)`
pub fn discrepancy(v: &[f64], z: &[f64]) -> Result<f64> {
    if v.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            found: z.len(),
        });
    }
    Ok(discrepancy_from(norm_sq(v), norm_sq(z), dot(v, z)))
}

/// `Δ(v, z)` from `a = ‖v‖²`, `b = ‖z‖²`, `c = vᵀz`.
#[inline]
pub fn discrepancy_from(a: f64, b: f64, c: f64) -> f64 {
    let cross = ((a + b) * (a + b) - 4.0 * c * c).max(0.0).sqrt();
    0.5 * (cross + a - b)
}

/// `R_{k,t}(g) = [g^k ((t − kg)/(m − k))^{m−k}]^{1/m}` on `[0, t/k]`, for `k < m`.
pub fn r_function(k: usize, t: f64, m: usize, g: f64) -> f64 {
    let rest = t - k as f64 * g;
    if g <= 0.0 || rest <= 0.0 {
        return 0.0;
    }
    let (k, mf) = (k as f64, m as f64);
    ((k * g.ln() + (mf - k) * (rest / (mf - k)).ln()) / mf).exp()
}

/// Roots `(g̲, ḡ)` of `R_{k,t}(g) = d^{1/m}` in `[0, t/m]` and `[t/m, t/k]`.
///
/// Each root is returned as the bracket end that widens `[g̲, ḡ]`. For
/// `k = m` the pair is `(d^{1/m}, t/m)`. A target above `t/m` by at most
/// [`ROOT_TOL`] is treated as the boundary case with both roots at `t/m`.
pub fn eigen_bound_roots(k: usize, t: f64, d: f64, m: usize) -> Result<(f64, f64)> {
    if k == 0 || k > m || !(t > 0.0) || !(d > 0.0) {
        return Err(Error::Config(format!(
            "eigenvalue bound needs 1 <= k <= m, t > 0, d > 0; got k={k}, m={m}, t={t}, d={d}"
        )));
    }
    let target = d.powf(1.0 / m as f64);
    let peak = t / m as f64;
    if target > peak + ROOT_TOL {
        return Err(Error::InfeasiblePair {
            root_d: target,
            t_over_m: peak,
        });
    }
    if k == m {
        return Ok((target.min(peak), peak));
    }
    if target >= peak {
        return Ok((peak, peak));
    }
    let r = |g: f64| r_function(k, t, m, g);
    let g_lo = bisect(&r, target, 0.0, peak, true);
    let g_hi = bisect(&r, target, peak, t / k as f64, false);
    Ok((g_lo, g_hi))
}

/// Bisection for `r(g) = target` on a monotone segment. Returns the end with
/// `r ≤ target`: the left end when `r` increases, the right end otherwise.
/// Stops early only at a point on that side within the residual tolerance,
/// otherwise when the bracket cannot be split further.
fn bisect(r: &impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64, increasing: bool) -> f64 {
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let rm = r(mid);
        if rm <= target && target - rm <= BISECT_RESIDUAL {
            return mid;
        }
        if (rm < target) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if increasing {
        lo
    } else {
        hi
    }
}

/// Per-candidate constants of the exchange test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExchangeConstants {
    pub g1_lo: f64,
    pub g1_hi: f64,
    pub g2_lo: f64,
    pub q: f64,
    pub r: f64,
}

/// `q = (n/2) g̲₂² (1/g̲₁ + 1/ḡ₁)`, `r = (n/2) g̲₂² (1/g̲₁ − 1/ḡ₁)` with
/// `g̲ₖ, ḡₖ` the roots for `(k, t_ℓ, d₊)`.
pub fn exchange_constants(t_ell: f64, d_plus: f64, n: usize, m: usize) -> Result<ExchangeConstants> {
    let (g1_lo, g1_hi) = eigen_bound_roots(1, t_ell, d_plus, m)?;
    let (g2_lo, _) = eigen_bound_roots(2, t_ell, d_plus, m)?;
    let scale = 0.5 * n as f64 * g2_lo * g2_lo;
    Ok(ExchangeConstants {
        g1_lo,
        g1_hi,
        g2_lo,
        q: scale * (1.0 / g1_lo + 1.0 / g1_hi),
        r: scale * (1.0 / g1_lo - 1.0 / g1_hi),
    })
}

/// The bracket minimized over `i` in the vector form of the exchange test:
/// `ab − c² − q(a − b) + r√((a+b)² − 4c²)` with `a = ‖sᵢ‖²`, `b = ‖s_ℓ‖²`,
/// `c = sᵢᵀs_ℓ`.
#[inline]
pub fn exchange_bracket(a: f64, b: f64, c: f64, q: f64, r: f64) -> f64 {
    let cross = ((a + b) * (a + b) - 4.0 * c * c).max(0.0).sqrt();
    a * b - c * c - q * (a - b) + r * cross
}

/// Tolerance below zero the bracket must reach before a removal.
#[inline]
pub fn eval_tol(a: f64, b: f64) -> f64 {
    1e-9 * (1.0 + a * b)
}

/// Right minus left side of the ratio form
/// `Δ(sᵢ,s_ℓ)/ḡ₁ − Δ(s_ℓ,sᵢ)/g̲₁ ≤ (ab − c²)/(n g̲₂²)`.
pub fn ratio_form_slack(a: f64, b: f64, c: f64, k: &ExchangeConstants, n: usize) -> f64 {
    let lhs = discrepancy_from(a, b, c) / k.g1_hi - discrepancy_from(b, a, c) / k.g1_lo;
    let rhs = (a * b - c * c) / (n as f64 * k.g2_lo * k.g2_lo);
    rhs - lhs
}

/// Augmentation test for a general positive definite `N`: keep `ℓ` iff
/// `v_ℓ ≥ mn·phi_ratio − (n−1)·v_max`, with `v` the `N⁻¹`-quadratic forms
/// and `phi_ratio = Φ(M(w⁺))/Φ(N)`.
pub fn lemma1_keep(v_ell: f64, v_max: f64, phi_ratio: f64, m: usize, n: usize) -> bool {
    v_ell >= general_threshold(m, n, phi_ratio, v_max)
}

/// `mn·phi_ratio − (n−1)·v_max`
pub fn general_threshold(m: usize, n: usize, phi_ratio: f64, v_max: f64) -> f64 {
    let (m, n) = (m as f64, n as f64);
    m * n * phi_ratio - (n - 1.0) * v_max
}

/// `mn(eff − (n−1)/n)`: with `N = M*` a candidate survives iff `v*_ℓ` reaches it.
pub fn augmentation_threshold(m: usize, n: usize, eff_plus: f64) -> f64 {
    let (m, n) = (m as f64, n as f64);
    m * n * (eff_plus - (n - 1.0) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn discrepancy_examples() {
        let v = [0.3, -1.2, 2.0];
        assert!(discrepancy(&v, &v).unwrap().abs() < 1e-15);
        assert!((discrepancy(&v, &[0.0; 3]).unwrap() - norm_sq(&v)).abs() < 1e-15);
        assert_eq!(discrepancy(&[0.0; 3], &v).unwrap(), 0.0);
        assert!((discrepancy(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(discrepancy(&[1.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn threshold_examples() {
        assert!((augmentation_threshold(2, 9, 0.8) + 1.6).abs() <= 1e-12);
        assert!(augmentation_threshold(3, 7, 6.0 / 7.0).abs() <= 1e-12);
        assert!((augmentation_threshold(2, 9, 0.994) - 18.0 * (0.994 - 8.0 / 9.0)).abs() < 1e-12);
        assert!((augmentation_threshold(2, 9, 0.994) - 1.892).abs() < 1e-3);
        assert!(!lemma1_keep(0.1, 2.0, 0.9, 2, 9));
        assert!(lemma1_keep(0.2, 2.0, 0.9, 2, 9));
        // a vacuous right-hand side keeps everything
        assert!(lemma1_keep(0.0, 2.0, 0.5, 2, 9));
        assert!((general_threshold(2, 9, 0.8, 2.0) - augmentation_threshold(2, 9, 0.8)).abs() < 1e-14);
    }

    /// Quadratic-formula oracle for `m = 2`, `k = 1`: `g(t − g) = d`.
    fn quadratic_roots(t: f64, d: f64) -> (f64, f64) {
        let disc = (t * t - 4.0 * d).sqrt();
        ((t - disc) / 2.0, (t + disc) / 2.0)
    }

    #[test]
    fn root_examples() {
        assert_eq!(eigen_bound_roots(1, 2.0, 1.0, 2).unwrap(), (1.0, 1.0));
        let (lo, hi) = eigen_bound_roots(1, 2.2, 1.0, 2).unwrap();
        let (want_lo, want_hi) = quadratic_roots(2.2, 1.0);
        assert!((lo - want_lo).abs() < 1e-12 && (hi - want_hi).abs() < 1e-12);
        assert!((lo - 0.64174).abs() < 1e-5 && (hi - 1.55826).abs() < 1e-5);
        assert_eq!(eigen_bound_roots(3, 4.5, 2.0, 3).unwrap(), (2f64.powf(1.0 / 3.0), 1.5));
        assert!(matches!(
            eigen_bound_roots(1, 2.0, 1.1, 2),
            Err(Error::InfeasiblePair { .. })
        ));
    }

    #[test]
    fn worked_disk_constants() {
        let t = 17.0 / 9.0;
        let k = exchange_constants(t, 0.64, 9, 2).unwrap();
        let (lo, hi) = quadratic_roots(t, 0.64);
        assert!((k.g1_lo - lo).abs() < 1e-12 && (k.g1_hi - hi).abs() < 1e-12);
        assert!((k.g1_lo - 0.44247).abs() < 1e-5 && (k.g1_hi - 1.44642).abs() < 1e-5);
        assert!((k.g2_lo - 0.8).abs() < 1e-15);
        let q = 4.5 * 0.64 * (1.0 / lo + 1.0 / hi);
        let r = 4.5 * 0.64 * (1.0 / lo - 1.0 / hi);
        assert!((k.q - q).abs() < 1e-9 && (k.r - r).abs() < 1e-9);
        assert!((k.q - 8.500).abs() < 1e-3 && (k.r - 4.517).abs() < 1e-3);
        // boundary: no gap between the g₁ roots
        let b = exchange_constants(2.0, 1.0, 9, 2).unwrap();
        assert_eq!(b.r, 0.0);
        assert!(exchange_constants(2.0, 1.5, 9, 2).is_err());
    }

    #[test]
    fn bracket_examples() {
        let k = exchange_constants(17.0 / 9.0, 0.64, 9, 2).unwrap();
        // self exchange is neutral
        assert!(exchange_bracket(1.3, 1.3, 1.3, k.q, k.r).abs() < 1e-15);
        // collinear, longer competitor: removed
        let val = exchange_bracket(2.0, 1.0, 2f64.sqrt(), k.q, k.r);
        assert!((val - (-k.q + k.r)).abs() < 1e-12);
        assert!((val + 3.983).abs() < 2e-3);
        assert!(val < -eval_tol(2.0, 1.0));
        // orthogonal, equal norms: never a violation
        assert!(exchange_bracket(1.5, 1.5, 0.0, k.q, k.r) >= 1.5 * 1.5);
    }

    #[test]
    fn r_function_shape() {
        for (k, m, t) in [(1, 2, 2.0), (1, 5, 3.7), (2, 5, 3.7), (3, 6, 1.2)] {
            let top = t / k as f64;
            let peak = t / m as f64;
            assert_eq!(r_function(k, t, m, 0.0), 0.0);
            assert_eq!(r_function(k, t, m, top), 0.0);
            assert!((r_function(k, t, m, peak) - peak).abs() < 1e-14);
            let grid: Vec<f64> = (0..=1000).map(|j| top * j as f64 / 1000.0).collect();
            for w in grid.windows(2) {
                let (a, b) = (r_function(k, t, m, w[0]), r_function(k, t, m, w[1]));
                if w[1] <= peak {
                    assert!(b > a);
                } else if w[0] >= peak {
                    assert!(b < a);
                }
            }
            for w in grid.windows(3) {
                let mid = r_function(k, t, m, w[1]);
                let avg = 0.5 * (r_function(k, t, m, w[0]) + r_function(k, t, m, w[2]));
                assert!(mid >= avg - 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn roots_bracket_the_peak(m in 2usize..8, k_off in 0usize..6, t in 0.1f64..20.0, frac in 0.01f64..1.0) {
            let k = 1 + k_off % (m - 1);
            let d = (frac * t / m as f64).powi(m as i32);
            let (lo, hi) = eigen_bound_roots(k, t, d, m).unwrap();
            let target = d.powf(1.0 / m as f64);
            let peak = t / m as f64;
            prop_assert!(0.0 <= lo && lo <= peak && peak <= hi && hi <= t / k as f64);
            // Far below the peak the roots sit within an ulp of 0 or t/k,
            // so the residual is only meaningful for moderate targets.
            if frac >= 0.5 {
                prop_assert!((r_function(k, t, m, lo) - target).abs() <= 1e-12);
                prop_assert!((r_function(k, t, m, hi) - target).abs() <= 1e-12);
            }
            // conservative ends
            prop_assert!(r_function(k, t, m, lo) <= target + 1e-13);
            prop_assert!(r_function(k, t, m, hi) <= target + 1e-13);
        }

        #[test]
        fn bracket_and_ratio_forms_agree(
            a in 0.0f64..5.0, b in 0.01f64..5.0, cos in -1.0f64..1.0,
            t_frac in 0.0f64..1.0, e in 0.5f64..1.0, n in 2usize..40, m in 2usize..7,
        ) {
            let c = cos * (a * b).sqrt();
            let t = m as f64 * e * (1.0 + t_frac);
            let d = e.powi(m as i32);
            let k = exchange_constants(t, d, n, m).unwrap();
            let bracket = exchange_bracket(a, b, c, k.q, k.r);
            let scaled = n as f64 * k.g2_lo * k.g2_lo * ratio_form_slack(a, b, c, &k, n);
            prop_assert!((bracket - scaled).abs() <= 1e-9 * (1.0 + a * b + k.q * (a + b)));
        }
    }
}
