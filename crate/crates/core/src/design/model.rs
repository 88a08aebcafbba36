//! Information matrices, the D-criterion and friends.

use crate::design::{CandidateSet, Design};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, inv_sqrt_spd, spd_factorize, SpdMatrix};

/// `M(w) = Σ wᵢ fᵢ fᵢᵀ`
pub fn info_matrix(cands: &CandidateSet, w: &Design) -> Result<SpdMatrix> {
    let mut m = SpdMatrix::zeros(cands.dim());
    for (i, wi) in w.iter() {
        cands.check_index(i)?;
        m.add_outer_lower(wi, &cands.row(i));
    }
    m.mirror_lower();
    Ok(m)
}

/// Information matrix of a dense weight vector over all candidates,
/// summed chunk by chunk in a fixed order.
pub fn info_matrix_dense(cands: &CandidateSet, weights: &[f64]) -> SpdMatrix {
    let dim = cands.dim();
    let parts = cands.map_chunks(|start, rows| {
        let mut m = SpdMatrix::zeros(dim);
        for (k, f) in rows.chunks_exact(dim).enumerate() {
            let w = weights[start + k];
            if w != 0.0 {
                m.add_outer_lower(w, f);
            }
        }
        m
    });
    let mut total = SpdMatrix::zeros(dim);
    for p in &parts {
        total.add_assign(p);
    }
    total.mirror_lower();
    total
}

/// Evaluates `fᵀ M⁻¹ f` for one regressor using a precomputed `L⁻¹`.
#[derive(Clone, Debug)]
pub struct VarianceEvaluator {
    dim: usize,
    inv_lower: Vec<f64>,
}

impl VarianceEvaluator {
    pub fn new(m: &SpdMatrix) -> Result<Self> {
        let chol = spd_factorize(m)?;
        Ok(VarianceEvaluator {
            dim: m.dim(),
            inv_lower: chol.inverse_lower(),
        })
    }

    /// Writes `L⁻¹ f` to `out`, where `M = L Lᵀ`; `‖L⁻¹ f‖² = fᵀM⁻¹f`.
    #[inline]
    pub fn whiten(&self, f: &[f64], out: &mut [f64]) {
        let m = self.dim;
        for i in 0..m {
            out[i] = dot(&self.inv_lower[i * m..i * m + i + 1], &f[..=i]);
        }
    }

    #[inline]
    pub fn eval(&self, f: &[f64]) -> f64 {
        let m = self.dim;
        let mut s = 0.0;
        for i in 0..m {
            let y = dot(&self.inv_lower[i * m..i * m + i + 1], &f[..=i]);
            s += y * y;
        }
        s
    }
}

/// `vᵢ = fᵢᵀ M⁻¹ fᵢ` for every candidate.
pub fn variance_function(cands: &CandidateSet, m: &SpdMatrix) -> Result<Vec<f64>> {
    if m.dim() != cands.dim() {
        return Err(Error::DimensionMismatch {
            expected: cands.dim(),
            found: m.dim(),
        });
    }
    let eval = VarianceEvaluator::new(m)?;
    Ok(cands.map_rows(|f| eval.eval(f)))
}

/// `Φ(M) = det(M)^{1/m}`; 0 for matrices that fail the pivot floor.
pub fn d_criterion(m: &SpdMatrix) -> f64 {
    match linalg::logdet(m) {
        Ok(ld) => (ld / m.dim() as f64).exp(),
        Err(_) => 0.0,
    }
}

#[derive(Clone, Debug)]
pub struct ModelSummary {
    pub info: SpdMatrix,
    pub logdet: f64,
    pub phi: f64,
}

impl ModelSummary {
    pub fn new(info: SpdMatrix) -> Self {
        let logdet = linalg::logdet(&info).unwrap_or(f64::NEG_INFINITY);
        let phi = (logdet / info.dim() as f64).exp();
        ModelSummary { info, logdet, phi }
    }

    pub fn of(cands: &CandidateSet, w: &Design) -> Result<Self> {
        Ok(Self::new(info_matrix(cands, w)?))
    }

    pub fn det(&self) -> f64 {
        self.logdet.exp()
    }
}

/// `Φ(M(w)) / Φ(M*)`
pub fn efficiency(w: &Design, mstar: &SpdMatrix, cands: &CandidateSet) -> Result<f64> {
    let best = spd_factorize(mstar)?.logdet();
    let mw = info_matrix(cands, w)?;
    Ok(match linalg::logdet(&mw) {
        Ok(ld) => ((ld - best) / cands.dim() as f64).exp(),
        Err(_) => 0.0,
    })
}

/// `sᵢ = M*^{-1/2} fᵢ`
pub fn standardize(cands: &CandidateSet, mstar: &SpdMatrix) -> Result<CandidateSet> {
    let s = inv_sqrt_spd(mstar)?;
    cands.transform(&s)
}
