use approx::assert_relative_eq;
use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::*;
use crate::longitudinal::SubjectLongitudinal;
use crate::survival::SurvivalRecord;

fn synthetic_dataset(rng: &mut ChaCha12Rng, n_subjects: usize, with_survival: bool) -> Dataset {
    let mut subjects = Vec::new();
    let mut survival = Vec::new();
    for i in 0..n_subjects {
        let l = rng.gen_range(4..7);
        let mut times: Vec<f64> = (0..l).map(|_| rng.gen_range(0.0..12.0)).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let l = times.len();
        let mut mask1 = vec![true; l];
        let mut mask2 = vec![true; l];
        // leave some entries unobserved, keeping at least one per biomarker
        for j in 1..l {
            if rng.gen_bool(0.25) {
                mask1[j] = false;
            }
            if rng.gen_bool(0.25) {
                mask2[j] = false;
            }
        }
        let values1: Vec<f64> = (0..l).map(|_| 5.0 + rng.gen_range(-1.0..1.0)).collect();
        let values2: Vec<f64> = (0..l).map(|_| 20.0 + rng.gen_range(-2.0..2.0)).collect();
        let id = format!("s{i:03}");
        subjects.push(
            SubjectLongitudinal::new(&id, times, values1, values2, mask1, mask2).unwrap(),
        );
        if with_survival {
            let time = rng.gen_range(0.5..10.0);
            let event = rng.gen_bool(0.7);
            survival.push(SurvivalRecord::new(&id, time, event, vec![rng.gen_range(-1.0..1.0)]).unwrap());
        }
    }
    Dataset {
        subjects,
        survival,
        z_names: if with_survival {
            vec!["z_age".to_string()]
        } else {
            vec![]
        },
    }
}

fn small_config(variant: LongitudinalVariant) -> ModelConfig {
    ModelConfig {
        dp_truncation: 4,
        hazard_grid: 8,
        variant,
        ..ModelConfig::default()
    }
}

fn jittered_init(model: &JointModel, rng: &mut ChaCha12Rng, scale: f64) -> DVector<f64> {
    let mut theta = model.initial_point();
    for v in theta.iter_mut() {
        *v += rng.gen_range(-scale..scale);
    }
    theta
}

#[test]
fn pack_unpack_round_trip() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let data = synthetic_dataset(&mut rng, 3, true);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let theta = jittered_init(&model, &mut rng, 0.4);
    let (params, _) = model.unpack(&theta).unwrap();
    assert_relative_eq!(params.corr, params.corr); // corr present under Multi
    let theta2 = model.pack(&params).unwrap();
    for i in 0..theta.len() {
        assert_relative_eq!(theta[i], theta2[i], epsilon = 1e-12, max_relative = 1e-12);
    }
}

#[test]
fn round_trip_recovers_strong_correlation() {
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    let data = synthetic_dataset(&mut rng, 2, false);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let mut theta = model.initial_point();
    theta[model.layout().corr().unwrap()] = 0.9f64.atanh();
    let (params, _) = model.unpack(&theta).unwrap();
    assert_relative_eq!(params.corr, 0.9, epsilon = 1e-12);
}

#[test]
fn log_jacobian_matches_per_coordinate_derivative_oracle() {
    let mut rng = ChaCha12Rng::seed_from_u64(107);
    let data = synthetic_dataset(&mut rng, 2, true);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let theta = jittered_init(&model, &mut rng, 0.5);
    let (_, log_jac) = model.unpack(&theta).unwrap();

    // independent oracle: product of d constrain(u)/du by central differences
    let tf = model.layout().transforms();
    let h = 1e-6;
    let mut log_jac_fd = 0.0;
    for (i, t) in tf.iter().enumerate() {
        let d = (t.constrain(theta[i] + h) - t.constrain(theta[i] - h)) / (2.0 * h);
        log_jac_fd += d.ln();
    }
    assert_relative_eq!(log_jac, log_jac_fd, max_relative = 1e-9, epsilon = 1e-10);
}

#[test]
fn log_prior_finite_at_prior_centers() {
    let mut rng = ChaCha12Rng::seed_from_u64(109);
    let data = synthetic_dataset(&mut rng, 3, true);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let (params, _) = model.unpack(&model.initial_point()).unwrap();
    let lp = model.log_prior(&params).unwrap();
    assert!(lp.is_finite());
}

#[test]
fn gamma_prior_term_at_unit_alpha() {
    let got = super::log_gamma_density(1.0, 3.0, 3.0).unwrap();
    let expected = (27.0f64 / 2.0).ln() - 3.0;
    assert_relative_eq!(got, expected, max_relative = 1e-12);
}

#[test]
fn doubling_zeta_variance_shifts_only_zeta_terms() {
    let mut rng = ChaCha12Rng::seed_from_u64(113);
    let data = synthetic_dataset(&mut rng, 3, true);
    let cfg = small_config(LongitudinalVariant::Multi);
    let mut cfg2 = cfg.clone();
    cfg2.priors.sigma2_zeta *= 2.0;
    let model = JointModel::new(data.clone(), cfg).unwrap();
    let model2 = JointModel::new(data, cfg2).unwrap();
    let mut theta = jittered_init(&model, &mut rng, 0.3);
    let l = model.layout();
    theta[l.zeta_x1()] = 0.7;
    theta[l.zeta_x2()] = -0.4;
    theta[l.zeta_s(0)] = 0.2;
    let (params, _) = model.unpack(&theta).unwrap();
    let lp1 = model.log_prior(&params).unwrap();
    let lp2 = model2.log_prior(&params).unwrap();
    let v1 = model.config().priors.sigma2_zeta;
    let v2 = model2.config().priors.sigma2_zeta;
    let analytic: f64 = [0.7f64, -0.4, 0.2]
        .iter()
        .map(|z| super::log_normal(*z, 0.0, v2) - super::log_normal(*z, 0.0, v1))
        .sum();
    assert_relative_eq!(lp2 - lp1, analytic, max_relative = 1e-10, epsilon = 1e-12);
}

#[test]
fn log_posterior_equals_block_sum() {
    let mut rng = ChaCha12Rng::seed_from_u64(127);
    let data = synthetic_dataset(&mut rng, 3, true);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let theta = jittered_init(&model, &mut rng, 0.3);
    let (params, log_jac) = model.unpack(&theta).unwrap();
    let (long_sum, surv_sum) = model.log_likelihood_parts(&params).unwrap();
    let prior = model.log_prior(&params).unwrap();
    let expected = long_sum + surv_sum + prior + log_jac;
    let got = model.log_posterior(&theta).unwrap();
    assert_relative_eq!(got, expected, max_relative = 1e-10, epsilon = 1e-10);
}

#[test]
fn removing_a_subject_removes_its_likelihood_terms() {
    let mut rng = ChaCha12Rng::seed_from_u64(131);
    let data = synthetic_dataset(&mut rng, 4, true);
    let cfg = small_config(LongitudinalVariant::Multi);
    let model = JointModel::new(data.clone(), cfg.clone()).unwrap();
    let theta = jittered_init(&model, &mut rng, 0.2);
    let (params, _) = model.unpack(&theta).unwrap();
    let (long_all, surv_all) = model.log_likelihood_parts(&params).unwrap();

    // drop the last subject, keeping identical parameters for the rest
    let mut reduced = data.clone();
    reduced.subjects.pop();
    reduced.survival.pop();
    let model_red = JointModel::new(reduced, cfg).unwrap();
    let mut params_red = params.clone();
    params_red.subjects.pop();
    let (long_red, surv_red) = model_red.log_likelihood_parts(&params_red).unwrap();

    // recompute the dropped subject's own two terms through a 1-subject model
    let solo = Dataset {
        subjects: vec![data.subjects[3].clone()],
        survival: vec![data.survival[3].clone()],
        z_names: data.z_names.clone(),
    };
    let model_solo = JointModel::new(solo, small_config(LongitudinalVariant::Multi)).unwrap();
    let mut params_solo = params.clone();
    params_solo.subjects = vec![params.subjects[3]];
    let (long_solo, surv_solo) = model_solo.log_likelihood_parts(&params_solo).unwrap();

    assert_relative_eq!(long_all - long_red, long_solo, max_relative = 1e-10);
    assert_relative_eq!(surv_all - surv_red, surv_solo, max_relative = 1e-10);
}

#[test]
fn shrinking_tau2_drives_posterior_to_negative_infinity() {
    let mut rng = ChaCha12Rng::seed_from_u64(137);
    let data = synthetic_dataset(&mut rng, 3, false);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let mut theta = model.initial_point();
    let mut prev = f64::INFINITY;
    for log_tau2 in [-1.0, -3.0, -6.0, -10.0, -24.0, -100.0, -500.0] {
        theta[model.layout().tau2()] = log_tau2;
        let lp = model.log_posterior(&theta).unwrap();
        assert!(lp < prev, "expected monotone decrease, got {lp} after {prev}");
        prev = lp;
    }
    assert!(prev < -300.0);
}

#[test]
fn posterior_invariant_to_subject_ordering() {
    let mut rng = ChaCha12Rng::seed_from_u64(139);
    let data = synthetic_dataset(&mut rng, 4, true);
    let cfg = small_config(LongitudinalVariant::Multi);
    let model = JointModel::new(data.clone(), cfg.clone()).unwrap();
    let theta = jittered_init(&model, &mut rng, 0.3);
    let (params, _) = model.unpack(&theta).unwrap();
    let lp = model.log_posterior(&theta).unwrap();

    let perm = [2usize, 0, 3, 1];
    let data_perm = Dataset {
        subjects: perm.iter().map(|&i| data.subjects[i].clone()).collect(),
        survival: perm.iter().map(|&i| data.survival[i].clone()).collect(),
        z_names: data.z_names.clone(),
    };
    let model_perm = JointModel::new(data_perm, cfg).unwrap();
    let mut params_perm = params.clone();
    params_perm.subjects = perm.iter().map(|&i| params.subjects[i]).collect();
    let theta_perm = model_perm.pack(&params_perm).unwrap();
    let lp_perm = model_perm.log_posterior(&theta_perm).unwrap();
    assert_relative_eq!(lp, lp_perm, max_relative = 1e-12);
}

#[test]
fn dp_relabeling_touches_only_stick_bookkeeping() {
    // jointly permuting (weight, location) pairs leaves every data-coupled
    // term of the posterior unchanged: the only difference is the
    // stick-breaking density plus the logit Jacobian of the re-expressed
    // stick fractions (the stick representation is size-biased, so those
    // bookkeeping terms are not themselves exchangeable).
    let mut rng = ChaCha12Rng::seed_from_u64(149);
    let data = synthetic_dataset(&mut rng, 3, true);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let theta = jittered_init(&model, &mut rng, 0.3);
    let (params, _) = model.unpack(&theta).unwrap();
    let lp = model.log_posterior(&theta).unwrap();

    let sg = params.survival.as_ref().unwrap();
    let weights = crate::survival::stick_to_weights(&sg.sticks).unwrap();
    let perm = [3usize, 1, 0, 2];
    let w_perm: Vec<f64> = perm.iter().map(|&k| weights[k]).collect();
    let loc_perm: Vec<f64> = perm.iter().map(|&k| sg.locations[k]).collect();
    // convert permuted weights back to stick fractions
    let mut sticks_perm = Vec::new();
    let mut remaining = 1.0;
    for k in 0..w_perm.len() - 1 {
        sticks_perm.push(w_perm[k] / remaining);
        remaining -= w_perm[k];
    }
    let mut params_perm = params.clone();
    {
        let sgp = params_perm.survival.as_mut().unwrap();
        sgp.sticks = sticks_perm.clone();
        sgp.locations = loc_perm;
    }
    let theta_perm = model.pack(&params_perm).unwrap();
    let lp_perm = model.log_posterior(&theta_perm).unwrap();

    let bookkeeping = |sticks: &[f64]| -> f64 {
        sticks
            .iter()
            .map(|&v| {
                sg.alpha.ln() + (sg.alpha - 1.0) * (1.0 - v).ln() + v.ln() + (1.0 - v).ln()
            })
            .sum()
    };
    let expected_diff = bookkeeping(&sticks_perm) - bookkeeping(&sg.sticks);
    assert_relative_eq!(lp_perm - lp, expected_diff, max_relative = 1e-8, epsilon = 1e-9);
}

#[test]
fn uni_with_shared_kappa_matches_multi_likelihood() {
    let mut rng = ChaCha12Rng::seed_from_u64(151);
    let data = synthetic_dataset(&mut rng, 3, true);
    let multi = JointModel::new(data.clone(), small_config(LongitudinalVariant::Multi)).unwrap();
    let uni = JointModel::new(data, small_config(LongitudinalVariant::Uni)).unwrap();

    let mut theta_m = jittered_init(&multi, &mut rng, 0.2);
    theta_m[multi.layout().corr().unwrap()] = 0.0;
    let (params_m, _) = multi.unpack(&theta_m).unwrap();
    // same constrained state expressed in the uni layout
    let mut params_u = params_m.clone();
    for s in &mut params_u.subjects {
        s.kappa2_2 = s.kappa2_1;
    }
    params_u.corr = 0.0;
    let theta_u = uni.pack(&params_u).unwrap();
    let (params_u, _) = uni.unpack(&theta_u).unwrap();

    let (lm, sm) = multi.log_likelihood_parts(&params_m).unwrap();
    let (lu, su) = uni.log_likelihood_parts(&params_u).unwrap();
    assert_relative_eq!(lm, lu, max_relative = 1e-10);
    assert_relative_eq!(sm, su, max_relative = 1e-10);
}

fn check_gradient(model: &JointModel, theta: &DVector<f64>) {
    let (_, grad) = model.grad_log_posterior(theta).unwrap();
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    for i in 0..theta.len() {
        let mut tp = theta.clone();
        tp[i] += h;
        let mut tm = theta.clone();
        tm[i] -= h;
        let fp = model.log_posterior(&tp).unwrap();
        let fm = model.log_posterior(&tm).unwrap();
        let fd = (fp - fm) / (2.0 * h);
        let denom = fd.abs().max(grad[i].abs());
        let err = (grad[i] - fd).abs();
        if denom < 1e-2 {
            assert!(
                err < 1e-7,
                "coordinate {i} ({}): analytic {} vs fd {fd}",
                model.layout().names()[i],
                grad[i]
            );
        } else {
            let rel = err / denom;
            worst_rel = worst_rel.max(rel);
            assert!(
                rel <= 1e-5,
                "coordinate {i} ({}): analytic {} vs fd {fd}, rel {rel}",
                model.layout().names()[i],
                grad[i]
            );
        }
    }
}

#[test]
fn gradient_matches_finite_differences_multi() {
    let mut rng = ChaCha12Rng::seed_from_u64(157);
    let data = synthetic_dataset(&mut rng, 3, true);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    for _ in 0..3 {
        let theta = jittered_init(&model, &mut rng, 0.3);
        check_gradient(&model, &theta);
    }
}

#[test]
fn gradient_matches_finite_differences_uni() {
    let mut rng = ChaCha12Rng::seed_from_u64(163);
    let data = synthetic_dataset(&mut rng, 3, true);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Uni)).unwrap();
    for _ in 0..3 {
        let theta = jittered_init(&model, &mut rng, 0.3);
        check_gradient(&model, &theta);
    }
}

#[test]
fn gradient_matches_finite_differences_longitudinal_only() {
    let mut rng = ChaCha12Rng::seed_from_u64(167);
    let data = synthetic_dataset(&mut rng, 4, false);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let theta = jittered_init(&model, &mut rng, 0.4);
    check_gradient(&model, &theta);
}

#[test]
fn gradient_vanishes_at_ascent_stationary_point() {
    let mut rng = ChaCha12Rng::seed_from_u64(173);
    let data = synthetic_dataset(&mut rng, 3, false);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let mut theta = model.initial_point();
    // simple gradient ascent with backtracking to a local maximum
    let mut step = 0.1;
    let (mut lp, mut grad) = model.grad_log_posterior(&theta).unwrap();
    for _ in 0..5000 {
        let cand = &theta + &grad * step;
        let (lp_c, grad_c) = model.grad_log_posterior(&cand).unwrap();
        if lp_c > lp {
            theta = cand;
            lp = lp_c;
            grad = grad_c;
            step *= 1.1;
        } else {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    assert!(
        grad.amax() < 1e-4,
        "gradient norm at stationary point: {}",
        grad.amax()
    );
}

#[test]
fn rejected_states_report_negative_infinity() {
    let mut rng = ChaCha12Rng::seed_from_u64(179);
    let data = synthetic_dataset(&mut rng, 2, false);
    let model = JointModel::new(data, small_config(LongitudinalVariant::Multi)).unwrap();
    let mut theta = model.initial_point();
    theta[model.layout().sigma2(0)] = 900.0; // exp overflows to infinity
    let lp = model.log_posterior(&theta).unwrap();
    assert_eq!(lp, f64::NEG_INFINITY);

    // a malformed vector is a programming error, not a rejection
    let bad = DVector::zeros(model.dim() + 1);
    assert!(model.log_posterior(&bad).is_err());
}
