//! Posterior value and analytic gradient.
//!
//! Gradients are accumulated in constrained space and chained through the
//! transforms at the end. The longitudinal part uses the standard Gaussian
//! identities `∂ll/∂μ = Σ⁻¹r` and `∂ll/∂Σ = ½(aaᵀ − Σ⁻¹)` with `a = Σ⁻¹r`,
//! contracted against the structured directions `∂Σ = D ∘ K` for each
//! amplitude parameter. The survival part differentiates the GP-imputed
//! `λ(t)` through the posterior-mean map, reusing one factorization per
//! subject per evaluation.

use nalgebra::{DMatrix, DVector, Dyn, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::linalg_kron::{eigen_blocks, EigenBlock, NoiseSpec};

use super::layout::{unpack, JointParams, LongitudinalVariant, SubjectParams, SurvivalGlobals};
use super::{JointModel, PreparedSubject};
use crate::longitudinal::LN_2PI;
use crate::survival::stick_to_weights;

pub(crate) struct Eval {
    pub logp: f64,
    pub grad: Option<DVector<f64>>,
}

impl Eval {
    fn rejected(dim: usize, want_grad: bool) -> Self {
        Eval {
            logp: f64::NEG_INFINITY,
            grad: want_grad.then(|| DVector::zeros(dim)),
        }
    }
}

enum Factor<'a> {
    Dense(nalgebra::Cholesky<f64, Dyn>),
    Blocks {
        u: &'a DMatrix<f64>,
        blocks: Vec<EigenBlock>,
        l_times: usize,
    },
}

impl Factor<'_> {
    fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Factor::Dense(chol) => chol.solve(v),
            Factor::Blocks { u, blocks, l_times } => {
                let l = *l_times;
                let z1 = u.tr_mul(&v.rows(0, l));
                let z2 = u.tr_mul(&v.rows(l, l));
                let mut w1 = DVector::zeros(l);
                let mut w2 = DVector::zeros(l);
                for (j, b) in blocks.iter().enumerate() {
                    let s = b.solve(Vector2::new(z1[j], z2[j]));
                    w1[j] = s[0];
                    w2[j] = s[1];
                }
                let x1 = *u * w1;
                let x2 = *u * w2;
                let mut out = DVector::zeros(2 * l);
                out.rows_mut(0, l).copy_from(&x1);
                out.rows_mut(l, l).copy_from(&x2);
                out
            }
        }
    }
}

/// Directions `∂A/∂θ` for the amplitude parameters of one subject, paired
/// with the unconstrained-vector slot each one feeds. Under the shared
/// volatility variant both κ² directions land on the same slot, which sums
/// them into `∂A/∂κ² = R`.
fn amp_directions(
    model: &JointModel,
    i: usize,
    sp: &SubjectParams,
    tau2: f64,
    corr: f64,
) -> Vec<(usize, Matrix2<f64>)> {
    let l = model.layout();
    let k1 = sp.kappa2_1;
    let k2 = sp.kappa2_2;
    let sk = (k1 * k2).sqrt();
    let d1_off = corr * tau2 * k2 / (2.0 * sk);
    let d2_off = corr * tau2 * k1 / (2.0 * sk);
    let mut dirs = vec![
        (l.kappa2(i, 0), Matrix2::new(1.0, d1_off, d1_off, 0.0)),
        (l.kappa2(i, 1), Matrix2::new(0.0, d2_off, d2_off, tau2 * tau2)),
        (
            l.tau2(),
            Matrix2::new(0.0, corr * sk, corr * sk, 2.0 * tau2 * k2),
        ),
    ];
    if let Some(c) = l.corr() {
        dirs.push((c, Matrix2::new(0.0, tau2 * sk, tau2 * sk, 0.0)));
    }
    dirs
}

struct SurvDerived<'a> {
    sg: &'a SurvivalGlobals,
    weights: Vec<f64>,
}

impl JointModel {
    /// Joint log-posterior; `−∞` signals a numerically rejected state
    /// (non-positive-definite covariance or overflow), distinct from
    /// argument errors which are returned as `Err`.
    pub fn log_posterior(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.evaluate(theta, false)?.logp)
    }

    /// Log-posterior and its gradient with respect to the unconstrained
    /// vector.
    pub fn grad_log_posterior(&self, theta: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let ev = self.evaluate(theta, true)?;
        let grad = ev.grad.unwrap_or_else(|| DVector::zeros(self.dim()));
        Ok((ev.logp, grad))
    }

    pub(crate) fn evaluate(&self, theta: &DVector<f64>, want_grad: bool) -> Result<Eval> {
        let l = self.layout();
        let dim = l.dim();
        let (p, log_jac) = unpack(l, theta)?;

        let mut positives_ok = p.sigma2_1.is_finite()
            && p.sigma2_2.is_finite()
            && p.tau2.is_finite()
            && p.subjects
                .iter()
                .all(|s| s.kappa2_1.is_finite() && s.kappa2_2.is_finite());
        if let Some(sg) = &p.survival {
            positives_ok = positives_ok && sg.nu.is_finite() && sg.alpha.is_finite();
        }
        if !positives_ok {
            return Ok(Eval::rejected(dim, want_grad));
        }

        let mut logp = log_jac;
        let mut gx = want_grad.then(|| DVector::zeros(dim));
        let noise = NoiseSpec {
            sigma2_1: p.sigma2_1,
            sigma2_2: p.sigma2_2,
        };
        let surv = match &p.survival {
            None => None,
            Some(sg) => Some(SurvDerived {
                sg,
                weights: stick_to_weights(&sg.sticks)?,
            }),
        };

        for i in 0..self.subjects.len() {
            match self.subject_term(i, &p, &noise, surv.as_ref(), &mut gx) {
                Ok(v) => logp += v,
                Err(Error::NonPositiveDefinite(_)) => {
                    return Ok(Eval::rejected(dim, want_grad))
                }
                Err(e) => return Err(e),
            }
        }

        logp += self.prior_terms(&p, surv.as_ref(), &mut gx);

        if !logp.is_finite() {
            return Ok(Eval::rejected(dim, want_grad));
        }

        let grad = match gx {
            None => None,
            Some(g) => {
                let tf = l.transforms();
                let mut gu = DVector::zeros(dim);
                for idx in 0..dim {
                    let x = tf[idx].constrain(theta[idx]);
                    gu[idx] = g[idx] * tf[idx].d_constrain(x) + tf[idx].d_log_jacobian(x);
                }
                if gu.iter().any(|v| !v.is_finite()) {
                    return Ok(Eval::rejected(dim, want_grad));
                }
                Some(gu)
            }
        };
        Ok(Eval { logp, grad })
    }

    /// Longitudinal (and, when present, survival) likelihood contribution of
    /// one subject, with gradient accumulation in constrained space.
    fn subject_term(
        &self,
        i: usize,
        p: &JointParams,
        noise: &NoiseSpec,
        surv: Option<&SurvDerived>,
        gx: &mut Option<DVector<f64>>,
    ) -> Result<f64> {
        let l = self.layout();
        let subj = &self.subjects[i];
        let sp = &p.subjects[i];
        let amp = Self::amp_for(sp, p.tau2, p.corr);
        let n = subj.entries.len();
        let n1 = subj.bio_of.iter().take_while(|&&b| b == 0).count();
        let want_grad = gx.is_some();

        let r = DVector::from_fn(n, |e, _| {
            subj.x_obs[e]
                - if subj.bio_of[e] == 0 {
                    sp.beta1_0
                } else {
                    sp.beta2_0
                }
        });

        let mut t_mat = Matrix2::<f64>::zeros();
        let mut dsig = [0.0f64; 2];
        let logdet;
        let a;
        let factor;

        if subj.fully_observed {
            let eig = subj.kernel.eigen()?;
            let blocks = eigen_blocks(&eig.values, &amp, noise)?;
            let lt = subj.long.n_times();
            let u = &eig.vectors;
            let z1 = u.tr_mul(&r.rows(0, lt));
            let z2 = u.tr_mul(&r.rows(lt, lt));
            let mut at1 = DVector::zeros(lt);
            let mut at2 = DVector::zeros(lt);
            let mut ld = 0.0;
            for (j, b) in blocks.iter().enumerate() {
                let s = b.solve(Vector2::new(z1[j], z2[j]));
                at1[j] = s[0];
                at2[j] = s[1];
                ld += b.logdet();
            }
            if want_grad {
                for (j, b) in blocks.iter().enumerate() {
                    let binv = b.inverse();
                    let g00 = 0.5 * (at1[j] * at1[j] - binv[(0, 0)]);
                    let g01 = 0.5 * (at1[j] * at2[j] - binv[(0, 1)]);
                    let g11 = 0.5 * (at2[j] * at2[j] - binv[(1, 1)]);
                    let lam = eig.values[j];
                    t_mat[(0, 0)] += lam * g00;
                    t_mat[(0, 1)] += lam * g01;
                    t_mat[(1, 0)] += lam * g01;
                    t_mat[(1, 1)] += lam * g11;
                    dsig[0] += g00;
                    dsig[1] += g11;
                }
            }
            logdet = ld;
            let x1 = u * at1;
            let x2 = u * at2;
            let mut sol = DVector::zeros(n);
            sol.rows_mut(0, lt).copy_from(&x1);
            sol.rows_mut(lt, lt).copy_from(&x2);
            a = sol;
            factor = Factor::Blocks {
                u,
                blocks,
                l_times: lt,
            };
        } else {
            let mut sigma = DMatrix::zeros(n, n);
            for e in 0..n {
                for f in 0..=e {
                    let mut v = amp[(subj.bio_of[e], subj.bio_of[f])] * subj.k_obs[(e, f)];
                    if e == f {
                        v += noise.by_biomarker(subj.bio_of[e]);
                    }
                    sigma[(e, f)] = v;
                    sigma[(f, e)] = v;
                }
            }
            let chol = nalgebra::Cholesky::new(sigma).ok_or_else(|| {
                Error::non_pd(format!(
                    "observed covariance for subject {} failed to factor",
                    subj.long.subject_id
                ))
            })?;
            logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            a = chol.solve(&r);
            if want_grad {
                let sinv = chol.inverse();
                for e in 0..n {
                    for f in 0..n {
                        let g = 0.5 * (a[e] * a[f] - sinv[(e, f)]);
                        t_mat[(subj.bio_of[e], subj.bio_of[f])] += g * subj.k_obs[(e, f)];
                        if e == f {
                            dsig[subj.bio_of[e]] += g;
                        }
                    }
                }
            }
            factor = Factor::Dense(chol);
        }

        let quad = r.dot(&a);
        let mut ll = -0.5 * (n as f64 * LN_2PI + logdet + quad);

        let dirs = if want_grad {
            amp_directions(self, i, sp, p.tau2, p.corr)
        } else {
            Vec::new()
        };

        if let Some(g) = gx.as_mut() {
            let mut dbeta = [0.0f64; 2];
            for e in 0..n {
                dbeta[subj.bio_of[e]] += a[e];
            }
            g[l.beta1(i)] += dbeta[0];
            g[l.beta2(i)] += dbeta[1];
            g[l.sigma2(0)] += dsig[0];
            g[l.sigma2(1)] += dsig[1];
            for (slot, d) in &dirs {
                g[*slot] += t_mat[(0, 0)] * d[(0, 0)]
                    + t_mat[(0, 1)] * d[(0, 1)]
                    + t_mat[(1, 0)] * d[(1, 0)]
                    + t_mat[(1, 1)] * d[(1, 1)];
            }
        }

        if let (Some(ps), Some(se)) = (&subj.survival, surv) {
            ll += self.subject_survival_term(
                i, subj, sp, se, &amp, ps, n1, &a, &factor, &dirs, gx,
            );
        }
        Ok(ll)
    }

    /// Survival likelihood of one subject: `δ·log h(Y) − H(Y)` with the GP
    /// posterior mean imputing biomarker values at the integration times.
    #[allow(clippy::too_many_arguments)]
    fn subject_survival_term(
        &self,
        i: usize,
        subj: &PreparedSubject,
        sp: &SubjectParams,
        se: &SurvDerived,
        amp: &Matrix2<f64>,
        ps: &super::PreparedSurvival,
        n1: usize,
        a: &DVector<f64>,
        factor: &Factor,
        dirs: &[(usize, Matrix2<f64>)],
        gx: &mut Option<DVector<f64>>,
    ) -> f64 {
        let l = self.layout();
        let sg = se.sg;
        let n = subj.entries.len();
        let m = self.config.hazard_grid;
        let nu = sg.nu;
        let y = ps.record.time;
        let delta = ps.record.delta();
        let want_grad = gx.is_some();

        let mut base_lam = sp.beta_s0.unwrap_or(0.0);
        for (j, &z) in ps.record.z_baseline.iter().enumerate() {
            base_lam += sg.zeta_s[j] * z;
        }

        // gradient helper vectors, all solved against the same factorization
        let mut extra: Vec<DVector<f64>> = Vec::new();
        if want_grad {
            let s1 = DVector::from_fn(n, |e, _| if e < n1 { 1.0 } else { 0.0 });
            let s2 = DVector::from_fn(n, |e, _| if e >= n1 { 1.0 } else { 0.0 });
            let ms1 = DVector::from_fn(n, |e, _| if e < n1 { a[e] } else { 0.0 });
            let ms2 = DVector::from_fn(n, |e, _| if e >= n1 { a[e] } else { 0.0 });
            extra.push(factor.solve(&s1));
            extra.push(factor.solve(&s2));
            extra.push(factor.solve(&ms1));
            extra.push(factor.solve(&ms2));
            for (_, d) in dirs {
                let q = DVector::from_fn(n, |e, _| {
                    let be = subj.bio_of[e];
                    let mut acc = 0.0;
                    for f in 0..n {
                        acc += d[(be, subj.bio_of[f])] * subj.k_obs[(e, f)] * a[f];
                    }
                    acc
                });
                extra.push(factor.solve(&q));
            }
        }

        let dot_pair = |row: usize, v: &DVector<f64>| -> [f64; 2] {
            let kc = &ps.k_cross;
            let mut d0 = 0.0;
            let mut d1 = 0.0;
            for e in 0..n1 {
                d0 += kc[(row, e)] * v[e];
            }
            for e in n1..n {
                d1 += kc[(row, e)] * v[e];
            }
            [d0, d1]
        };

        // accumulators: Σ e_k, Σ e_k ln t_k, and Σ w_k ∂λ/∂θ per parameter
        let mut e_sum = 0.0;
        let mut e_lnt_sum = 0.0;
        let n_dirs = dirs.len();
        // slots: beta1, beta2, sigma2_1, sigma2_2, dirs..., zeta_x1, zeta_x2, lambda-const
        let mut acc = vec![0.0f64; 4 + n_dirs + 3];
        let zx = [sg.zeta_x1, sg.zeta_x2];
        let mut ll_event = 0.0;

        for k in 0..=m {
            let ga = dot_pair(k, a);
            let mu = [
                sp.beta1_0 + amp[(0, 0)] * ga[0] + amp[(0, 1)] * ga[1],
                sp.beta2_0 + amp[(1, 0)] * ga[0] + amp[(1, 1)] * ga[1],
            ];
            let lam = base_lam + zx[0] * mu[0] + zx[1] * mu[1];
            let w_k = if k < m {
                let e_k = ((nu - 1.0) * ps.ln_integ_times[k] + lam).exp();
                e_sum += e_k;
                e_lnt_sum += e_k * ps.ln_integ_times[k];
                -ps.dt * nu * e_k
            } else {
                ll_event = delta * (nu.ln() + (nu - 1.0) * y.ln() + lam);
                delta
            };

            if want_grad && w_k != 0.0 {
                // ∂λ/∂β_c = Σ_b ζ_b (δ_{bc} − Σ_{b'} A[b,b'] g_{u_c,b'})
                for c in 0..2 {
                    let gu = dot_pair(k, &extra[c]);
                    let dmu0 = if c == 0 { 1.0 } else { 0.0 }
                        - (amp[(0, 0)] * gu[0] + amp[(0, 1)] * gu[1]);
                    let dmu1 = if c == 1 { 1.0 } else { 0.0 }
                        - (amp[(1, 0)] * gu[0] + amp[(1, 1)] * gu[1]);
                    acc[c] += w_k * (zx[0] * dmu0 + zx[1] * dmu1);
                }
                // ∂λ/∂σ²_d = −Σ_b ζ_b Σ_c A[b,c] g_{ms_d,c}
                for d in 0..2 {
                    let gm = dot_pair(k, &extra[2 + d]);
                    let dmu0 = -(amp[(0, 0)] * gm[0] + amp[(0, 1)] * gm[1]);
                    let dmu1 = -(amp[(1, 0)] * gm[0] + amp[(1, 1)] * gm[1]);
                    acc[2 + d] += w_k * (zx[0] * dmu0 + zx[1] * dmu1);
                }
                // amplitude directions: (D ⊗ k)a − K*·y_D
                for (di, (_, d)) in dirs.iter().enumerate() {
                    let gy = dot_pair(k, &extra[4 + di]);
                    let dmu0 = d[(0, 0)] * ga[0] + d[(0, 1)] * ga[1]
                        - (amp[(0, 0)] * gy[0] + amp[(0, 1)] * gy[1]);
                    let dmu1 = d[(1, 0)] * ga[0] + d[(1, 1)] * ga[1]
                        - (amp[(1, 0)] * gy[0] + amp[(1, 1)] * gy[1]);
                    acc[4 + di] += w_k * (zx[0] * dmu0 + zx[1] * dmu1);
                }
                acc[4 + n_dirs] += w_k * mu[0];
                acc[4 + n_dirs + 1] += w_k * mu[1];
                acc[4 + n_dirs + 2] += w_k;
            }
        }

        let big_h = ps.dt * nu * e_sum;
        let ll = ll_event - big_h;

        if let Some(g) = gx.as_mut() {
            g[l.beta1(i)] += acc[0];
            g[l.beta2(i)] += acc[1];
            g[l.sigma2(0)] += acc[2];
            g[l.sigma2(1)] += acc[3];
            for (di, (slot, _)) in dirs.iter().enumerate() {
                g[*slot] += acc[4 + di];
            }
            g[l.zeta_x1()] += acc[4 + n_dirs];
            g[l.zeta_x2()] += acc[4 + n_dirs + 1];
            let dlam_const = acc[4 + n_dirs + 2]; // Σ w_k = δ − H
            g[l.beta_s0(i)] += dlam_const;
            for (j, &z) in ps.record.z_baseline.iter().enumerate() {
                g[l.zeta_s(j)] += dlam_const * z;
            }
            g[l.nu()] +=
                delta * (1.0 / nu + y.ln()) - ps.dt * (e_sum + nu * e_lnt_sum);
        }
        ll
    }

    /// Prior stack (with gradient) over the constrained parameters, matching
    /// `log_prior` exactly.
    fn prior_terms(
        &self,
        p: &JointParams,
        surv: Option<&SurvDerived>,
        gx: &mut Option<DVector<f64>>,
    ) -> f64 {
        let l = self.layout();
        let pr = &self.config.priors;
        let mut lp = 0.0;

        for (i, s) in p.subjects.iter().enumerate() {
            lp += super::log_normal(s.beta1_0, pr.mu_beta1_0, pr.sigma2_beta1_0);
            lp += super::log_normal(s.beta2_0, pr.mu_beta2_0, pr.sigma2_beta2_0);
            lp += lognormal_with_grad(
                s.kappa2_1,
                pr.mu_log_kappa2,
                pr.sd_log_kappa2,
                gx,
                l.kappa2(i, 0),
            );
            if l.variant == LongitudinalVariant::Uni {
                lp += lognormal_with_grad(
                    s.kappa2_2,
                    pr.mu_log_kappa2,
                    pr.sd_log_kappa2,
                    gx,
                    l.kappa2(i, 1),
                );
            }
            if let Some(g) = gx.as_mut() {
                g[l.beta1(i)] += -(s.beta1_0 - pr.mu_beta1_0) / pr.sigma2_beta1_0;
                g[l.beta2(i)] += -(s.beta2_0 - pr.mu_beta2_0) / pr.sigma2_beta2_0;
            }
        }

        lp += lognormal_with_grad(p.sigma2_1, pr.mu_log_sigma2, pr.sd_log_sigma2, gx, l.sigma2(0));
        lp += lognormal_with_grad(p.sigma2_2, pr.mu_log_sigma2, pr.sd_log_sigma2, gx, l.sigma2(1));

        let s = pr.tau2_scale;
        lp += (2.0 / std::f64::consts::PI).ln() - s.ln() - (1.0 + (p.tau2 / s) * (p.tau2 / s)).ln();
        if let Some(g) = gx.as_mut() {
            g[l.tau2()] += -2.0 * p.tau2 / (s * s + p.tau2 * p.tau2);
        }
        if l.variant == LongitudinalVariant::Multi {
            lp += (0.5f64).ln();
        }

        if let Some(se) = surv {
            let sg = se.sg;
            lp += lognormal_with_grad(sg.nu, pr.mu_log_nu, pr.sd_log_nu, gx, l.nu());
            for (j, &z) in sg.zeta_s.iter().enumerate() {
                lp += super::log_normal(z, 0.0, pr.sigma2_zeta);
                if let Some(g) = gx.as_mut() {
                    g[l.zeta_s(j)] += -z / pr.sigma2_zeta;
                }
            }
            lp += super::log_normal(sg.zeta_x1, 0.0, pr.sigma2_zeta);
            lp += super::log_normal(sg.zeta_x2, 0.0, pr.sigma2_zeta);
            if let Some(g) = gx.as_mut() {
                g[l.zeta_x1()] += -sg.zeta_x1 / pr.sigma2_zeta;
                g[l.zeta_x2()] += -sg.zeta_x2 / pr.sigma2_zeta;
            }

            lp += pr.alpha_shape * pr.alpha_rate.ln()
                - statrs::function::gamma::ln_gamma(pr.alpha_shape)
                + (pr.alpha_shape - 1.0) * sg.alpha.ln()
                - pr.alpha_rate * sg.alpha;
            if let Some(g) = gx.as_mut() {
                g[l.alpha()] += (pr.alpha_shape - 1.0) / sg.alpha - pr.alpha_rate;
            }

            lp += self.dp_terms(p, se, gx);
        }
        lp
    }

    /// Marginalized DP mixture over the baseline intercepts, plus stick and
    /// location priors.
    fn dp_terms(&self, p: &JointParams, se: &SurvDerived, gx: &mut Option<DVector<f64>>) -> f64 {
        let l = self.layout();
        let pr = &self.config.priors;
        let sg = se.sg;
        let k_t = l.k_trunc;
        let w = &se.weights;
        let var = pr.sigma2_beta_s0;
        let mut lp = 0.0;

        let log_w: Vec<f64> = w.iter().map(|x| x.ln()).collect();
        // Σ_i ρ_ik / w_k, accumulated stably as exp(lnφ − lse)
        let mut w_score = vec![0.0f64; k_t];
        let mut terms = vec![0.0f64; k_t];
        for (i, s) in p.subjects.iter().enumerate() {
            let b = s.beta_s0.unwrap_or(0.0);
            let mut max = f64::NEG_INFINITY;
            for k in 0..k_t {
                let phi = super::log_normal(b, sg.locations[k], var);
                terms[k] = log_w[k] + phi;
                if terms[k] > max {
                    max = terms[k];
                }
            }
            let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
            lp += lse;
            if let Some(g) = gx.as_mut() {
                let mut db = 0.0;
                for k in 0..k_t {
                    let rho = (terms[k] - lse).exp();
                    db += rho * (sg.locations[k] - b) / var;
                    g[l.dp_loc(k)] += rho * (b - sg.locations[k]) / var;
                    // ρ/w = φ/Σ, computed without dividing by a tiny weight
                    let phi = terms[k] - log_w[k];
                    w_score[k] += (phi - lse).exp();
                }
                g[l.beta_s0(i)] += db;
            }
        }

        if let Some(g) = gx.as_mut() {
            // suffix sums of w_score·w for the stick chain rule
            let mut suffix = vec![0.0f64; k_t + 1];
            for k in (0..k_t).rev() {
                suffix[k] = suffix[k + 1] + w_score[k] * w[k];
            }
            let mut prefix = 1.0; // Π_{j<k}(1−v_j)
            for k in 0..k_t - 1 {
                let v = sg.sticks[k];
                g[l.stick(k)] += w_score[k] * prefix - suffix[k + 1] / (1.0 - v);
                prefix *= 1.0 - v;
            }
        }

        // stick-breaking prior Beta(1, α) and location base measure
        for k in 0..k_t - 1 {
            let v = sg.sticks[k];
            lp += sg.alpha.ln() + (sg.alpha - 1.0) * (1.0 - v).ln();
            if let Some(g) = gx.as_mut() {
                g[l.stick(k)] += -(sg.alpha - 1.0) / (1.0 - v);
                g[l.alpha()] += 1.0 / sg.alpha + (1.0 - v).ln();
            }
        }
        for k in 0..k_t {
            lp += super::log_normal(sg.locations[k], pr.g0_mean, pr.g0_sigma2);
            if let Some(g) = gx.as_mut() {
                g[l.dp_loc(k)] += -(sg.locations[k] - pr.g0_mean) / pr.g0_sigma2;
            }
        }
        lp
    }
}

fn lognormal_with_grad(
    x: f64,
    mu: f64,
    sd: f64,
    gx: &mut Option<DVector<f64>>,
    slot: usize,
) -> f64 {
    let z = (x.ln() - mu) / sd;
    if let Some(g) = gx.as_mut() {
        g[slot] += -(1.0 + z / sd) / x;
    }
    -x.ln() - sd.ln() - 0.5 * LN_2PI - 0.5 * z * z
}
