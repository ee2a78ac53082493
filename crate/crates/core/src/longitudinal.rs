//! Marginalized multivariate-GP longitudinal likelihood and prediction.
//!
//! Each subject's stacked biomarker vector is Gaussian with mean
//! `[β₁₀·1; β₂₀·1]` and covariance `R ⊗ κ²K + Σ_ε` (biomarker-major order).
//! Fully observed subjects use the eigendecomposition fast path; arbitrary
//! missingness is handled by exact Gaussian marginalization of the observed
//! sub-vector. Prediction returns the latent (noise-free) biomarker pair at a
//! query time.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::linalg_kron::{
    dense_logdet_solve, fast_logdet_solve_amp, BiomarkerScale, NoiseSpec, TemporalKernel,
};

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// Per-subject biomarker measurement series on pooled unique times with
/// per-time observation masks.
#[derive(Debug, Clone)]
pub struct SubjectLongitudinal {
    pub subject_id: String,
    pub times: Vec<f64>,
    pub values1: Vec<f64>,
    pub values2: Vec<f64>,
    pub mask1: Vec<bool>,
    pub mask2: Vec<bool>,
}

impl SubjectLongitudinal {
    pub fn new(
        subject_id: impl Into<String>,
        times: Vec<f64>,
        values1: Vec<f64>,
        values2: Vec<f64>,
        mask1: Vec<bool>,
        mask2: Vec<bool>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        let l = times.len();
        if l == 0 {
            return Err(Error::invalid(format!(
                "subject {subject_id}: needs at least one observation time"
            )));
        }
        if [values1.len(), values2.len(), mask1.len(), mask2.len()]
            .iter()
            .any(|&n| n != l)
        {
            return Err(Error::invalid(format!(
                "subject {subject_id}: value/mask lengths must match {l} times"
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "subject {subject_id}: times must be strictly increasing"
            )));
        }
        if !mask1.iter().chain(mask2.iter()).any(|&m| m) {
            return Err(Error::invalid(format!(
                "subject {subject_id}: needs at least one observed entry"
            )));
        }
        for j in 0..l {
            if mask1[j] && !values1[j].is_finite() {
                return Err(Error::invalid(format!(
                    "subject {subject_id}: biomarker 1 at time {} is not finite",
                    times[j]
                )));
            }
            if mask2[j] && !values2[j].is_finite() {
                return Err(Error::invalid(format!(
                    "subject {subject_id}: biomarker 2 at time {} is not finite",
                    times[j]
                )));
            }
        }
        Ok(Self {
            subject_id,
            times,
            values1,
            values2,
            mask1,
            mask2,
        })
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn fully_observed(&self) -> bool {
        self.mask1.iter().all(|&m| m) && self.mask2.iter().all(|&m| m)
    }

    /// Observed entries in biomarker-major order as (biomarker, time index).
    pub fn observed_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (j, &m) in self.mask1.iter().enumerate() {
            if m {
                out.push((0, j));
            }
        }
        for (j, &m) in self.mask2.iter().enumerate() {
            if m {
                out.push((1, j));
            }
        }
        out
    }

    pub fn value(&self, biomarker: usize, j: usize) -> f64 {
        if biomarker == 0 {
            self.values1[j]
        } else {
            self.values2[j]
        }
    }
}

/// Subject-level longitudinal parameters: random intercepts and GP volatility.
#[derive(Debug, Clone, Copy)]
pub struct SubjectLongParams {
    pub beta1_0: f64,
    pub beta2_0: f64,
    pub kappa2: f64,
}

impl SubjectLongParams {
    pub fn new(beta1_0: f64, beta2_0: f64, kappa2: f64) -> Result<Self> {
        if !(kappa2 > 0.0) {
            return Err(Error::invalid(format!(
                "kappa2 must be positive, got {kappa2}"
            )));
        }
        if !beta1_0.is_finite() || !beta2_0.is_finite() {
            return Err(Error::invalid("intercepts must be finite"));
        }
        Ok(Self {
            beta1_0,
            beta2_0,
            kappa2,
        })
    }
}

/// Latent biomarker pair at a query time: posterior mean and covariance.
#[derive(Debug, Clone, Copy)]
pub struct BiomarkerPrediction {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

/// Observed-entry covariance `A ⊗ K + Σ_ε` restricted to observed rows and
/// columns.
pub(crate) fn observed_cov(
    entries: &[(usize, usize)],
    amp: &Matrix2<f64>,
    kernel: &TemporalKernel,
    noise: &NoiseSpec,
) -> DMatrix<f64> {
    let n = entries.len();
    let k = kernel.matrix();
    let mut cov = DMatrix::zeros(n, n);
    for (e, &(b, j)) in entries.iter().enumerate() {
        for (f, &(bp, jp)) in entries.iter().enumerate().take(e + 1) {
            let mut v = amp[(b, bp)] * k[(j, jp)];
            if e == f {
                v += noise.by_biomarker(b);
            }
            cov[(e, f)] = v;
            cov[(f, e)] = v;
        }
    }
    cov
}

pub(crate) fn observed_residual(
    subj: &SubjectLongitudinal,
    entries: &[(usize, usize)],
    means: Vector2<f64>,
) -> DVector<f64> {
    DVector::from_fn(entries.len(), |e, _| {
        let (b, j) = entries[e];
        subj.value(b, j) - means[b]
    })
}

/// Log-density of the observed sub-vector under the marginalized GP model,
/// for a general 2×2 cross-amplitude matrix `A` (`A = κ²R` in the shared
/// volatility model; diagonal `A` recovers independent per-biomarker GPs).
pub fn marginal_loglik_amp(
    subj: &SubjectLongitudinal,
    means: Vector2<f64>,
    amp: &Matrix2<f64>,
    kernel: &TemporalKernel,
    noise: &NoiseSpec,
) -> Result<f64> {
    if kernel.len() != subj.n_times() {
        return Err(Error::invalid(format!(
            "subject {}: kernel size {} does not match {} times",
            subj.subject_id,
            kernel.len(),
            subj.n_times()
        )));
    }
    if subj.fully_observed() {
        let l = subj.n_times();
        let mut resid = DVector::zeros(2 * l);
        for j in 0..l {
            resid[j] = subj.values1[j] - means[0];
            resid[l + j] = subj.values2[j] - means[1];
        }
        let (logdet, sol) = fast_logdet_solve_amp(kernel, amp, noise, Some(&resid))?;
        let quad = resid.dot(&sol.unwrap());
        Ok(-0.5 * (2.0 * l as f64 * LN_2PI + logdet + quad))
    } else {
        let entries = subj.observed_entries();
        let cov = observed_cov(&entries, amp, kernel, noise);
        let resid = observed_residual(subj, &entries, means);
        let (logdet, sol) = dense_logdet_solve(&cov, Some(&resid))?;
        let quad = resid.dot(&sol.unwrap());
        Ok(-0.5 * (entries.len() as f64 * LN_2PI + logdet + quad))
    }
}

/// Log-density of the observed biomarkers under `N(β, R ⊗ κ²K + Σ_ε)`.
pub fn marginal_loglik(
    subj: &SubjectLongitudinal,
    p: &SubjectLongParams,
    r: &BiomarkerScale,
    kernel: &TemporalKernel,
    noise: &NoiseSpec,
) -> Result<f64> {
    let amp = r.matrix() * p.kappa2;
    marginal_loglik_amp(subj, Vector2::new(p.beta1_0, p.beta2_0), &amp, kernel, noise)
}

/// GP posterior of the latent biomarker pair at `t_star`, general amplitude.
pub fn predict_biomarkers_amp(
    subj: &SubjectLongitudinal,
    means: Vector2<f64>,
    amp: &Matrix2<f64>,
    kernel: &TemporalKernel,
    noise: &NoiseSpec,
    t_star: f64,
) -> Result<BiomarkerPrediction> {
    let entries = subj.observed_entries();
    let cov = observed_cov(&entries, amp, kernel, noise);
    let chol = nalgebra::Cholesky::new(cov).ok_or_else(|| {
        Error::non_pd(format!(
            "observed covariance for subject {} is not positive definite",
            subj.subject_id
        ))
    })?;
    let resid = observed_residual(subj, &entries, means);
    let alpha = chol.solve(&resid);

    // K(t*, t) restricted to observed entries, one row per target biomarker.
    let kt = kernel.cross_vector(t_star);
    let n = entries.len();
    let mut kstar = DMatrix::zeros(2, n);
    for (e, &(b, j)) in entries.iter().enumerate() {
        kstar[(0, e)] = amp[(0, b)] * kt[j];
        kstar[(1, e)] = amp[(1, b)] * kt[j];
    }

    let mean = Vector2::new(
        means[0] + kstar.row(0).transpose().dot(&alpha),
        means[1] + kstar.row(1).transpose().dot(&alpha),
    );

    let k0 = kstar.row(0).transpose();
    let k1 = kstar.row(1).transpose();
    let v0 = chol.solve(&k0);
    let v1 = chol.solve(&k1);
    let mut cov_star = Matrix2::new(amp[(0, 0)] - k0.dot(&v0), amp[(0, 1)] - k0.dot(&v1), 0.0, amp[(1, 1)] - k1.dot(&v1));
    cov_star[(1, 0)] = cov_star[(0, 1)];
    cov_star[(0, 0)] = cov_star[(0, 0)].max(0.0);
    cov_star[(1, 1)] = cov_star[(1, 1)].max(0.0);

    Ok(BiomarkerPrediction {
        mean,
        cov: cov_star,
    })
}

/// GP posterior of the latent biomarker pair under the shared-volatility
/// model: `μ* = β + K(t*,t)K_X⁻¹(X − β)`, `Σ* = κ²R − K(t*,t)K_X⁻¹K(t*,t)ᵀ`.
pub fn predict_biomarkers(
    subj: &SubjectLongitudinal,
    p: &SubjectLongParams,
    r: &BiomarkerScale,
    kernel: &TemporalKernel,
    noise: &NoiseSpec,
    t_star: f64,
) -> Result<BiomarkerPrediction> {
    let amp = r.matrix() * p.kappa2;
    predict_biomarkers_amp(
        subj,
        Vector2::new(p.beta1_0, p.beta2_0),
        &amp,
        kernel,
        noise,
        t_star,
    )
}

/// Pointwise prediction over a grid of query times.
pub fn predict_trajectory(
    subj: &SubjectLongitudinal,
    p: &SubjectLongParams,
    r: &BiomarkerScale,
    kernel: &TemporalKernel,
    noise: &NoiseSpec,
    grid: &[f64],
) -> Result<Vec<BiomarkerPrediction>> {
    grid.iter()
        .map(|&t| predict_biomarkers(subj, p, r, kernel, noise, t))
        .collect()
}
