//! Parameter layout and the bijection between constrained parameters and the
//! unconstrained sampling vector.
//!
//! Transforms: log for variances, volatilities, the Weibull shape, τ₂ and α;
//! atanh for the biomarker correlation; logit for stick fractions; identity
//! for intercepts, coefficients, and mixture locations. `unpack` returns the
//! exact log-Jacobian of the change of variables.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Which longitudinal covariance structure is being fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LongitudinalVariant {
    /// Shared per-subject volatility κ² and a free biomarker correlation.
    Multi,
    /// Independent per-biomarker GPs: per-biomarker κ², correlation fixed at 0.
    Uni,
}

/// Named offsets for every parameter block of one model instance.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub n_subjects: usize,
    pub variant: LongitudinalVariant,
    pub has_survival: bool,
    pub n_z: usize,
    /// DP truncation level K (0 when there is no survival block).
    pub k_trunc: usize,
    subj_stride: usize,
    globals_at: usize,
    surv_at: usize,
    dim: usize,
    names: Vec<String>,
}

impl ParamLayout {
    pub fn new(
        subject_ids: &[String],
        variant: LongitudinalVariant,
        has_survival: bool,
        z_names: &[String],
        k_trunc: usize,
    ) -> Result<Self> {
        let n = subject_ids.len();
        if n == 0 {
            return Err(Error::invalid("layout needs at least one subject"));
        }
        if has_survival && k_trunc == 0 {
            return Err(Error::invalid("DP truncation must be at least 1"));
        }
        let subj_stride = match variant {
            LongitudinalVariant::Multi => 3,
            LongitudinalVariant::Uni => 4,
        };
        let globals_at = n * subj_stride;
        let n_globals = match variant {
            LongitudinalVariant::Multi => 4, // sigma2_1, sigma2_2, tau2, corr
            LongitudinalVariant::Uni => 3,   // sigma2_1, sigma2_2, tau2
        };
        let surv_at = globals_at + n_globals;
        let n_z = z_names.len();
        let dim = if has_survival {
            // beta_s0 per subject, nu, zeta_s, zeta_x1, zeta_x2, sticks, locations, alpha
            surv_at + n + 1 + n_z + 2 + (k_trunc - 1) + k_trunc + 1
        } else {
            surv_at
        };

        let mut names = Vec::with_capacity(dim);
        for id in subject_ids {
            names.push(format!("beta1_0[{id}]"));
            names.push(format!("beta2_0[{id}]"));
            match variant {
                LongitudinalVariant::Multi => names.push(format!("kappa2[{id}]")),
                LongitudinalVariant::Uni => {
                    names.push(format!("kappa2_1[{id}]"));
                    names.push(format!("kappa2_2[{id}]"));
                }
            }
        }
        names.push("sigma2_1".to_string());
        names.push("sigma2_2".to_string());
        names.push("tau2".to_string());
        if variant == LongitudinalVariant::Multi {
            names.push("corr".to_string());
        }
        if has_survival {
            for id in subject_ids {
                names.push(format!("beta_s0[{id}]"));
            }
            names.push("nu".to_string());
            for z in z_names {
                names.push(format!("zeta_s[{z}]"));
            }
            names.push("zeta_x1".to_string());
            names.push("zeta_x2".to_string());
            for k in 0..k_trunc - 1 {
                names.push(format!("stick[{k}]"));
            }
            for k in 0..k_trunc {
                names.push(format!("dp_loc[{k}]"));
            }
            names.push("alpha".to_string());
        }
        debug_assert_eq!(names.len(), dim);

        Ok(Self {
            n_subjects: n,
            variant,
            has_survival,
            n_z,
            k_trunc: if has_survival { k_trunc } else { 0 },
            subj_stride,
            globals_at,
            surv_at,
            dim,
            names,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Parameter names in vector order (constrained view).
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn beta1(&self, i: usize) -> usize {
        i * self.subj_stride
    }

    pub fn beta2(&self, i: usize) -> usize {
        i * self.subj_stride + 1
    }

    /// Index of the volatility for biomarker `b`; under `Multi` both
    /// biomarkers share one coordinate.
    pub fn kappa2(&self, i: usize, b: usize) -> usize {
        match self.variant {
            LongitudinalVariant::Multi => i * self.subj_stride + 2,
            LongitudinalVariant::Uni => i * self.subj_stride + 2 + b,
        }
    }

    pub fn sigma2(&self, b: usize) -> usize {
        self.globals_at + b
    }

    pub fn tau2(&self) -> usize {
        self.globals_at + 2
    }

    /// Only present under `Multi`.
    pub fn corr(&self) -> Option<usize> {
        match self.variant {
            LongitudinalVariant::Multi => Some(self.globals_at + 3),
            LongitudinalVariant::Uni => None,
        }
    }

    pub fn beta_s0(&self, i: usize) -> usize {
        debug_assert!(self.has_survival);
        self.surv_at + i
    }

    pub fn nu(&self) -> usize {
        self.surv_at + self.n_subjects
    }

    pub fn zeta_s(&self, j: usize) -> usize {
        self.nu() + 1 + j
    }

    pub fn zeta_x1(&self) -> usize {
        self.nu() + 1 + self.n_z
    }

    pub fn zeta_x2(&self) -> usize {
        self.zeta_x1() + 1
    }

    pub fn stick(&self, k: usize) -> usize {
        self.zeta_x2() + 1 + k
    }

    pub fn dp_loc(&self, k: usize) -> usize {
        self.zeta_x2() + 1 + (self.k_trunc - 1) + k
    }

    pub fn alpha(&self) -> usize {
        self.dim - 1
    }

    /// Transform kind of each coordinate, in vector order.
    pub fn transforms(&self) -> Vec<Transform> {
        let mut t = vec![Transform::Identity; self.dim];
        for i in 0..self.n_subjects {
            t[self.kappa2(i, 0)] = Transform::LogPositive;
            t[self.kappa2(i, 1)] = Transform::LogPositive;
        }
        t[self.sigma2(0)] = Transform::LogPositive;
        t[self.sigma2(1)] = Transform::LogPositive;
        t[self.tau2()] = Transform::LogPositive;
        if let Some(c) = self.corr() {
            t[c] = Transform::TanhCorrelation;
        }
        if self.has_survival {
            t[self.nu()] = Transform::LogPositive;
            for k in 0..self.k_trunc - 1 {
                t[self.stick(k)] = Transform::LogitUnit;
            }
            t[self.alpha()] = Transform::LogPositive;
        }
        t
    }
}

/// Per-coordinate bijection from the unconstrained real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Identity,
    /// x = exp(u), for strictly positive parameters.
    LogPositive,
    /// x = tanh(u), for correlations in (−1, 1).
    TanhCorrelation,
    /// x = sigmoid(u), for stick fractions in (0, 1).
    LogitUnit,
}

impl Transform {
    pub fn constrain(self, u: f64) -> f64 {
        match self {
            Transform::Identity => u,
            Transform::LogPositive => u.exp(),
            Transform::TanhCorrelation => u.tanh(),
            Transform::LogitUnit => sigmoid(u),
        }
    }

    pub fn unconstrain(self, x: f64) -> Result<f64> {
        match self {
            Transform::Identity => Ok(x),
            Transform::LogPositive => {
                if x > 0.0 {
                    Ok(x.ln())
                } else {
                    Err(Error::invalid(format!("expected positive value, got {x}")))
                }
            }
            Transform::TanhCorrelation => {
                if x > -1.0 && x < 1.0 {
                    Ok(x.atanh())
                } else {
                    Err(Error::invalid(format!(
                        "expected correlation in (-1,1), got {x}"
                    )))
                }
            }
            Transform::LogitUnit => {
                if x > 0.0 && x < 1.0 {
                    Ok((x / (1.0 - x)).ln())
                } else {
                    Err(Error::invalid(format!("expected value in (0,1), got {x}")))
                }
            }
        }
    }

    /// Log of |dx/du| at the constrained value x.
    pub fn log_jacobian(self, x: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::LogPositive => x.ln(),
            Transform::TanhCorrelation => (1.0 - x * x).ln(),
            Transform::LogitUnit => x.ln() + (1.0 - x).ln(),
        }
    }

    /// dx/du at the constrained value x.
    pub fn d_constrain(self, x: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::LogPositive => x,
            Transform::TanhCorrelation => 1.0 - x * x,
            Transform::LogitUnit => x * (1.0 - x),
        }
    }

    /// d(log |dx/du|)/du at the constrained value x.
    pub fn d_log_jacobian(self, x: f64) -> f64 {
        match self {
            Transform::Identity => 0.0,
            Transform::LogPositive => 1.0,
            Transform::TanhCorrelation => -2.0 * x,
            Transform::LogitUnit => 1.0 - 2.0 * x,
        }
    }
}

fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Per-subject constrained parameters.
#[derive(Debug, Clone, Copy)]
pub struct SubjectParams {
    pub beta1_0: f64,
    pub beta2_0: f64,
    pub kappa2_1: f64,
    /// Equal to `kappa2_1` under the shared-volatility variant.
    pub kappa2_2: f64,
    pub beta_s0: Option<f64>,
}

/// Survival-side constrained parameters.
#[derive(Debug, Clone)]
pub struct SurvivalGlobals {
    pub nu: f64,
    pub zeta_s: Vec<f64>,
    pub zeta_x1: f64,
    pub zeta_x2: f64,
    pub sticks: Vec<f64>,
    pub locations: Vec<f64>,
    pub alpha: f64,
}

/// Full constrained parameter state.
#[derive(Debug, Clone)]
pub struct JointParams {
    pub subjects: Vec<SubjectParams>,
    pub sigma2_1: f64,
    pub sigma2_2: f64,
    pub tau2: f64,
    /// Fixed at 0 under the independent-GP variant.
    pub corr: f64,
    pub survival: Option<SurvivalGlobals>,
}

/// Map constrained parameters onto the unconstrained vector.
pub fn pack(layout: &ParamLayout, p: &JointParams) -> Result<DVector<f64>> {
    if p.subjects.len() != layout.n_subjects {
        return Err(Error::invalid(format!(
            "expected {} subjects, got {}",
            layout.n_subjects,
            p.subjects.len()
        )));
    }
    let mut theta = DVector::zeros(layout.dim());
    let tf = layout.transforms();
    let mut set = |idx: usize, x: f64| -> Result<()> {
        if !x.is_finite() {
            return Err(Error::invalid(format!(
                "parameter {} is not finite: {x}",
                layout.names()[idx]
            )));
        }
        theta[idx] = tf[idx].unconstrain(x)?;
        Ok(())
    };
    for (i, s) in p.subjects.iter().enumerate() {
        set(layout.beta1(i), s.beta1_0)?;
        set(layout.beta2(i), s.beta2_0)?;
        set(layout.kappa2(i, 0), s.kappa2_1)?;
        if layout.variant == LongitudinalVariant::Uni {
            set(layout.kappa2(i, 1), s.kappa2_2)?;
        }
    }
    set(layout.sigma2(0), p.sigma2_1)?;
    set(layout.sigma2(1), p.sigma2_2)?;
    set(layout.tau2(), p.tau2)?;
    if let Some(c) = layout.corr() {
        set(c, p.corr)?;
    }
    if layout.has_survival {
        let sg = p
            .survival
            .as_ref()
            .ok_or_else(|| Error::invalid("survival block missing from parameters"))?;
        for (i, s) in p.subjects.iter().enumerate() {
            let b = s
                .beta_s0
                .ok_or_else(|| Error::invalid("beta_s0 missing for a subject"))?;
            set(layout.beta_s0(i), b)?;
        }
        set(layout.nu(), sg.nu)?;
        if sg.zeta_s.len() != layout.n_z {
            return Err(Error::invalid(format!(
                "expected {} baseline coefficients, got {}",
                layout.n_z,
                sg.zeta_s.len()
            )));
        }
        for (j, &z) in sg.zeta_s.iter().enumerate() {
            set(layout.zeta_s(j), z)?;
        }
        set(layout.zeta_x1(), sg.zeta_x1)?;
        set(layout.zeta_x2(), sg.zeta_x2)?;
        if sg.sticks.len() != layout.k_trunc - 1 || sg.locations.len() != layout.k_trunc {
            return Err(Error::invalid("DP block size mismatch"));
        }
        for (k, &v) in sg.sticks.iter().enumerate() {
            set(layout.stick(k), v)?;
        }
        for (k, &m) in sg.locations.iter().enumerate() {
            set(layout.dp_loc(k), m)?;
        }
        set(layout.alpha(), sg.alpha)?;
    }
    Ok(theta)
}

/// Recover constrained parameters and the log-Jacobian of the transform.
pub fn unpack(layout: &ParamLayout, theta: &DVector<f64>) -> Result<(JointParams, f64)> {
    if theta.len() != layout.dim() {
        return Err(Error::invalid(format!(
            "theta length {} does not match layout dim {}",
            theta.len(),
            layout.dim()
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("unconstrained vector has non-finite entries"));
    }
    let tf = layout.transforms();
    let mut log_jac = 0.0;
    let get = |idx: usize| tf[idx].constrain(theta[idx]);
    for (idx, t) in tf.iter().enumerate() {
        log_jac += t.log_jacobian(t.constrain(theta[idx]));
    }

    let mut subjects = Vec::with_capacity(layout.n_subjects);
    for i in 0..layout.n_subjects {
        let kappa2_1 = get(layout.kappa2(i, 0));
        let kappa2_2 = get(layout.kappa2(i, 1));
        subjects.push(SubjectParams {
            beta1_0: get(layout.beta1(i)),
            beta2_0: get(layout.beta2(i)),
            kappa2_1,
            kappa2_2,
            beta_s0: layout.has_survival.then(|| get(layout.beta_s0(i))),
        });
    }
    let survival = if layout.has_survival {
        Some(SurvivalGlobals {
            nu: get(layout.nu()),
            zeta_s: (0..layout.n_z).map(|j| get(layout.zeta_s(j))).collect(),
            zeta_x1: get(layout.zeta_x1()),
            zeta_x2: get(layout.zeta_x2()),
            sticks: (0..layout.k_trunc - 1)
                .map(|k| get(layout.stick(k)))
                .collect(),
            locations: (0..layout.k_trunc).map(|k| get(layout.dp_loc(k))).collect(),
            alpha: get(layout.alpha()),
        })
    } else {
        None
    };
    Ok((
        JointParams {
            subjects,
            sigma2_1: get(layout.sigma2(0)),
            sigma2_2: get(layout.sigma2(1)),
            tau2: get(layout.tau2()),
            corr: layout.corr().map(get).unwrap_or(0.0),
            survival,
        },
        log_jac,
    ))
}
