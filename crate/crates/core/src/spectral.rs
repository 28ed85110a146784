//! Spectral certificates: positive stability of `H`, the Lyapunov solution
//! `P̄` with `HᵀP̄ + P̄H = I`, the switching constant `λ̄`, the sufficient gain
//! bounds and the positive-definiteness check on the block matrix `Q̃`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues within this distance of zero are treated as not positive.
pub const EIG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainParameters {
    gamma: f64,
    k: f64,
}

impl GainParameters {
    pub fn new(gamma: f64, k: f64) -> Result<Self> {
        check_gamma(gamma)?;
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::InvalidParameter(format!("gain k = {k} must be positive")));
        }
        Ok(Self { gamma, k })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn with_k(&self, k: f64) -> Result<Self> {
        Self::new(self.gamma, k)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma = {gamma} must lie in (0, 1)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMode {
    Fixed,
    Switching,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub mode: CertificateMode,
    /// Row-major `P̄`, fixed mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_bar: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_bar_eigenvalues: Option<Vec<f64>>,
    /// Switching mode only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<f64>,
    pub gamma: f64,
    pub k: f64,
    pub k_min: f64,
    /// Minimum eigenvalue of `Q̃` (`Q` with `α(t)` divided out), minimised
    /// over all topologies in switching mode.
    pub q_min_eig: f64,
    pub valid: bool,
}

pub enum CertificateInput<'a> {
    Fixed { p_bar: &'a DMatrix<f64> },
    Switching { couplings: &'a [DMatrix<f64>] },
}

/// Eigenvalues of `(M + Mᵀ)/2`, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

fn require_square(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.is_square() && m.nrows() > 0 {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what} must be square, got {}x{}", m.nrows(), m.ncols())))
    }
}

/// Smallest real part over the eigenvalues of `h`.
pub fn min_real_part(h: &DMatrix<f64>) -> Result<f64> {
    require_square(h, "H")?;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let ev = h.complex_eigenvalues();
    ev.iter()
        .map(|z| z.re)
        .reduce(f64::min)
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Numeric("eigenvalue computation failed".into()))
}

/// True iff every eigenvalue of `h` has real part above [`EIG_TOL`].
pub fn positive_stability(h: &DMatrix<f64>) -> Result<bool> {
    Ok(min_real_part(h)? > EIG_TOL)
}

/// Solves `HᵀP̄ + P̄H = I` for symmetric positive definite `P̄`.
///
/// The unknown is vectorised column-major, giving the `n² × n²` system
/// `(I ⊗ Hᵀ + Hᵀ ⊗ I) vec(P̄) = vec(I)`, solved by dense LU.
pub fn solve_lyapunov(h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let min_re = min_real_part(h)?;
    if min_re <= EIG_TOL {
        return Err(Error::NotPositiveStable { min_real_part: min_re });
    }
    let n = h.nrows();
    let ht = h.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    let kron = eye.kronecker(&ht) + ht.kronecker(&eye);
    let rhs = DMatrix::<f64>::identity(n, n).reshape_generic(nalgebra::Dyn(n * n), nalgebra::Dyn(1));
    let sol = kron
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular Lyapunov operator".into()))?;
    let p = sol.reshape_generic(nalgebra::Dyn(n), nalgebra::Dyn(n));
    let p = (&p + p.transpose()) * 0.5;
    let lo = symmetric_eigenvalues(&p)[0];
    if lo <= 0.0 {
        return Err(Error::Numeric(format!("Lyapunov solution not positive definite (min eig {lo:e})")));
    }
    Ok(p)
}

/// `λ̄`: the minimum eigenvalue of `H_σ + H_σᵀ` over the given coupling matrices.
pub fn min_symmetric_eigenvalue<'a, I>(couplings: I) -> Result<f64>
where
    I: IntoIterator<Item = &'a DMatrix<f64>>,
{
    let mut min: Option<f64> = None;
    for h in couplings {
        require_square(h, "H")?;
        let s = h + h.transpose();
        let lo = symmetric_eigenvalues(&s)[0];
        min = Some(min.map_or(lo, |m: f64| m.min(lo)));
    }
    min.ok_or_else(|| Error::InvalidParameter("empty topology set".into()))
}

/// `k_min = λ_max(P̄) / (2γ(1 − γ²))`.
pub fn gain_bound_fixed(p_bar: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    require_square(p_bar, "P̄")?;
    let ev = symmetric_eigenvalues(p_bar);
    if ev[0] <= 0.0 {
        return Err(Error::InvalidParameter("P̄ must be positive definite".into()));
    }
    Ok(ev[ev.len() - 1] / (2.0 * gamma * (1.0 - gamma * gamma)))
}

/// `k_min = 1 / (2γ(1 − γ²)λ̄)`.
pub fn gain_bound_switching(lambda_bar: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(lambda_bar > EIG_TOL) {
        return Err(Error::SwitchingCertificateUnavailable { lambda_bar });
    }
    Ok(1.0 / (2.0 * gamma * (1.0 - gamma * gamma) * lambda_bar))
}

fn block2(tl: &DMatrix<f64>, tr: &DMatrix<f64>, bl: &DMatrix<f64>, br: &DMatrix<f64>) -> DMatrix<f64> {
    let n = tl.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(tl);
    m.view_mut((0, n), (n, n)).copy_from(tr);
    m.view_mut((n, 0), (n, n)).copy_from(bl);
    m.view_mut((n, n), (n, n)).copy_from(br);
    m
}

/// Fixed-topology Lyapunov weight `[[P̄, −γP̄], [−γP̄, P̄]]`.
pub fn lyapunov_block(p_bar: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    let off = p_bar * -gamma;
    block2(p_bar, &off, &off, p_bar)
}

/// Switching-topology Lyapunov weight `[[I, −γI], [−γI, I]]`.
pub fn switching_lyapunov_matrix(n: usize, gamma: f64) -> DMatrix<f64> {
    lyapunov_block(&DMatrix::identity(n, n), gamma)
}

/// `Q̃ = [[k(1−γ²)I, −P̄], [−P̄, 2γP̄]]`.
pub fn q_tilde_fixed(p_bar: &DMatrix<f64>, params: &GainParameters) -> DMatrix<f64> {
    let n = p_bar.nrows();
    let g = params.gamma();
    let tl = DMatrix::<f64>::identity(n, n) * (params.k() * (1.0 - g * g));
    let off = -p_bar;
    block2(&tl, &off, &off, &(p_bar * (2.0 * g)))
}

/// `Q̃_σ = [[k(1−γ²)(H_σ+H_σᵀ), −I], [−I, 2γI]]`.
pub fn q_tilde_switching(h: &DMatrix<f64>, params: &GainParameters) -> DMatrix<f64> {
    let n = h.nrows();
    let g = params.gamma();
    let tl = (h + h.transpose()) * (params.k() * (1.0 - g * g));
    let eye = DMatrix::<f64>::identity(n, n);
    block2(&tl, &(-&eye), &(-&eye), &(eye * (2.0 * g)))
}

/// Builds `Q̃` for the chosen mode and reports whether it is positive definite
/// at the configured gain. An invalid certificate is an ordinary result; only
/// a missing `λ̄ > 0` in switching mode is an error.
pub fn verify_q_positive_definite(
    params: &GainParameters,
    input: CertificateInput<'_>,
) -> Result<GainCertificate> {
    match input {
        CertificateInput::Fixed { p_bar } => {
            let k_min = gain_bound_fixed(p_bar, params.gamma())?;
            let q_min_eig = symmetric_eigenvalues(&q_tilde_fixed(p_bar, params))[0];
            Ok(GainCertificate {
                mode: CertificateMode::Fixed,
                p_bar: Some(rows(p_bar)),
                p_bar_eigenvalues: Some(symmetric_eigenvalues(p_bar)),
                lambda_bar: None,
                gamma: params.gamma(),
                k: params.k(),
                k_min,
                q_min_eig,
                valid: q_min_eig > EIG_TOL,
            })
        }
        CertificateInput::Switching { couplings } => {
            let lambda_bar = min_symmetric_eigenvalue(couplings)?;
            let k_min = gain_bound_switching(lambda_bar, params.gamma())?;
            let q_min_eig = couplings
                .iter()
                .map(|h| symmetric_eigenvalues(&q_tilde_switching(h, params))[0])
                .fold(f64::INFINITY, f64::min);
            Ok(GainCertificate {
                mode: CertificateMode::Switching,
                p_bar: None,
                p_bar_eigenvalues: None,
                lambda_bar: Some(lambda_bar),
                gamma: params.gamma(),
                k: params.k(),
                k_min,
                q_min_eig,
                valid: q_min_eig > EIG_TOL,
            })
        }
    }
}

/// Picks the certificate by topology count: one topology gives the fixed
/// certificate through `P̄`, several give the switching one through `λ̄`.
pub fn certify(params: &GainParameters, couplings: &[DMatrix<f64>]) -> Result<GainCertificate> {
    match couplings {
        [] => Err(Error::InvalidParameter("empty topology set".into())),
        [h] => {
            let p_bar = solve_lyapunov(h)?;
            verify_q_positive_definite(params, CertificateInput::Fixed { p_bar: &p_bar })
        }
        _ => verify_q_positive_definite(params, CertificateInput::Switching { couplings }),
    }
}

/// The sufficient lower bound on `k` that [`certify`] would use.
pub fn minimal_gain(gamma: f64, couplings: &[DMatrix<f64>]) -> Result<f64> {
    match couplings {
        [] => Err(Error::InvalidParameter("empty topology set".into())),
        [h] => gain_bound_fixed(&solve_lyapunov(h)?, gamma),
        _ => gain_bound_switching(min_symmetric_eigenvalue(couplings)?, gamma),
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
