use crate::design::{d_criterion, CandidateSet, VarianceEvaluator};
use crate::error::{Error, Result};
use crate::linalg::{spd_factorize, SpdMatrix};

/// Feasible dual point bounding `max Φ(M(w))` over designs with `w_ℓ ≥ 1/n`.
#[derive(Clone, Debug)]
pub struct DualCertificate {
    /// `H = c N⁻¹`
    pub h: SpdMatrix,
    pub lambda: Vec<f64>,
    pub c: f64,
    /// `Φ(N) / c`
    pub upper_bound: f64,
}

pub fn dual_certificate(cands: &CandidateSet, nmat: &SpdMatrix, ell: usize, n: usize) -> Result<DualCertificate> {
    cands.check_index(ell)?;
    if n < 2 {
        return Err(Error::Config(format!("dual certificate needs n >= 2, got {n}")));
    }
    if nmat.dim() != cands.dim() {
        return Err(Error::DimensionMismatch {
            expected: cands.dim(),
            found: nmat.dim(),
        });
    }
    let eval = VarianceEvaluator::new(nmat)?;
    let v = cands.map_rows(|f| eval.eval(f));
    let v_max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (m, nf) = (cands.dim() as f64, n as f64);
    let c = nf * m / (v[ell] + (nf - 1.0) * v_max);
    let base = (nf * m - c * v[ell]) / (nf - 1.0);
    let lambda = v.iter().map(|&vi| base - c * vi).collect();
    let h = spd_factorize(nmat)?.inverse().scaled(c);
    Ok(DualCertificate {
        h,
        lambda,
        c,
        upper_bound: d_criterion(nmat) / c,
    })
}
