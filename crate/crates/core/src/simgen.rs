//! Synthetic-data generators for the longitudinal and joint simulation
//! studies: correlated GP biomarker trajectories, missingness mechanisms,
//! and Weibull event times solved from the latent cumulative hazard by
//! bisection, with the censoring scale calibrated on a pilot batch.
//!
//! Every generator is a pure function of (config, seed, replicate index):
//! per-subject randomness comes from dedicated ChaCha streams, so outputs do
//! not depend on evaluation order.

use nalgebra::{DMatrix, Matrix2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::longitudinal::SubjectLongitudinal;
use crate::survival::SurvivalRecord;

/// One component of the baseline-intercept generating mixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub sigma2: f64,
}

/// Survival block of the generating process.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurvivalSimConfig {
    pub nu: f64,
    pub zeta_x1: f64,
    pub zeta_x2: f64,
    /// Effects of standard-Normal baseline covariates (one per covariate).
    pub zeta_z: Vec<f64>,
    pub mixture: Vec<MixtureComponent>,
    pub censoring_target: f64,
}

impl Default for SurvivalSimConfig {
    fn default() -> Self {
        Self {
            nu: 1.5,
            zeta_x1: 0.5,
            zeta_x2: -0.3,
            zeta_z: vec![],
            mixture: vec![
                MixtureComponent {
                    weight: 0.5,
                    mean: -1.5,
                    sigma2: 1.0,
                },
                MixtureComponent {
                    weight: 0.5,
                    mean: 1.5,
                    sigma2: 1.0,
                },
            ],
            censoring_target: 0.2,
        }
    }
}

/// Missingness mechanism applied after generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case", deny_unknown_fields)]
pub enum MissingnessSpec {
    /// No values removed.
    None,
    /// Remove one third of the times per biomarker with the given overlap
    /// fraction between the two biomarkers' missing sets.
    Overlap { fraction: f64 },
    /// Keep biomarker 1 observed at the given fraction of times; biomarker 2
    /// stays fully observed.
    Frequency { fraction: f64 },
}

impl Default for MissingnessSpec {
    fn default() -> Self {
        MissingnessSpec::None
    }
}

/// Full generating configuration. Defaults reproduce the joint simulation
/// study: 300 subjects, 16 + 8 measures over 15 months, correlation 0.9,
/// ν = 1.5, ζ = (0.5, −0.3), a ±1.5 two-component baseline mixture, and a
/// 20% censoring target.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_subjects: usize,
    pub n_times_1: usize,
    pub n_times_2: usize,
    /// Measure both biomarkers at the same times (longitudinal-only studies).
    pub shared_times: bool,
    pub followup_max: f64,
    pub rho2: f64,
    pub corr: f64,
    pub tau2: f64,
    pub kappa2_min: f64,
    pub kappa2_max: f64,
    /// Draw a separate κ² per biomarker at generation time.
    pub distinct_kappa2: bool,
    pub intercept1_mean: f64,
    pub intercept1_sd: f64,
    pub intercept2_mean: f64,
    pub intercept2_sd: f64,
    pub sigma2_1: f64,
    pub sigma2_2: f64,
    pub survival: Option<SurvivalSimConfig>,
    pub missingness: MissingnessSpec,
    pub seed: u64,
    pub replicate_index: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_subjects: 300,
            n_times_1: 16,
            n_times_2: 8,
            shared_times: false,
            followup_max: 15.0,
            rho2: 0.1,
            corr: 0.9,
            tau2: 1.0,
            kappa2_min: 0.0,
            kappa2_max: 1.0,
            distinct_kappa2: false,
            intercept1_mean: 5.0,
            intercept1_sd: 1.0,
            intercept2_mean: 20.0,
            intercept2_sd: 2.0,
            sigma2_1: 0.3,
            sigma2_2: 0.3,
            survival: Some(SurvivalSimConfig::default()),
            missingness: MissingnessSpec::None,
            seed: 0,
            replicate_index: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::invalid("n_subjects must be positive"));
        }
        if self.n_times_1 == 0 && self.n_times_2 == 0 {
            return Err(Error::invalid("need at least one measurement per subject"));
        }
        if !(self.followup_max > 0.0) {
            return Err(Error::invalid("followup_max must be positive"));
        }
        if !(self.rho2 > 0.0) {
            return Err(Error::invalid("rho2 must be positive"));
        }
        if !(self.corr > -1.0 && self.corr < 1.0) {
            return Err(Error::invalid("corr must lie in (-1,1)"));
        }
        if !(self.tau2 > 0.0) {
            return Err(Error::invalid("tau2 must be positive"));
        }
        if self.kappa2_min < 0.0 || self.kappa2_max < self.kappa2_min {
            return Err(Error::invalid("kappa2 bounds must satisfy 0 <= min <= max"));
        }
        if let Some(s) = &self.survival {
            if !(s.nu > 0.0) {
                return Err(Error::invalid("survival nu must be positive"));
            }
            if s.mixture.is_empty() {
                return Err(Error::invalid("baseline mixture needs a component"));
            }
            let wsum: f64 = s.mixture.iter().map(|c| c.weight).sum();
            if (wsum - 1.0).abs() > 1e-9 || s.mixture.iter().any(|c| c.weight < 0.0) {
                return Err(Error::invalid("mixture weights must be nonnegative and sum to 1"));
            }
            if !(0.0..1.0).contains(&s.censoring_target) {
                return Err(Error::invalid("censoring_target must lie in [0,1)"));
            }
        }
        match self.missingness {
            MissingnessSpec::Overlap { fraction } | MissingnessSpec::Frequency { fraction } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::invalid("missingness fraction must lie in [0,1]"));
                }
            }
            MissingnessSpec::None => {}
        }
        Ok(())
    }
}

/// One generated subject: observed series plus the latent noise-free
/// trajectory used for hazards and for scoring predictions.
#[derive(Debug, Clone)]
pub struct SimulatedSubject {
    pub long: SubjectLongitudinal,
    /// Latent `β_b + W_b` at every pooled observation time.
    pub latent1_at_obs: Vec<f64>,
    pub latent2_at_obs: Vec<f64>,
    /// Interpolation nodes of the latent path over the hazard-search domain
    /// (empty when the config has no survival block).
    pub latent_nodes: Vec<f64>,
    pub latent1_nodes: Vec<f64>,
    pub latent2_nodes: Vec<f64>,
    pub beta1_0: f64,
    pub beta2_0: f64,
    pub kappa2_1: f64,
    pub kappa2_2: f64,
    pub z_baseline: Vec<f64>,
}

impl SimulatedSubject {
    /// Piecewise-linear latent biomarker value at an arbitrary time.
    pub fn latent_value(&self, biomarker: usize, t: f64) -> f64 {
        let nodes = &self.latent_nodes;
        let vals = if biomarker == 0 {
            &self.latent1_nodes
        } else {
            &self.latent2_nodes
        };
        debug_assert!(!nodes.is_empty());
        if t <= nodes[0] {
            return vals[0];
        }
        if t >= *nodes.last().unwrap() {
            return *vals.last().unwrap();
        }
        let idx = nodes.partition_point(|&x| x <= t);
        let (t0, t1) = (nodes[idx - 1], nodes[idx]);
        let (v0, v1) = (vals[idx - 1], vals[idx]);
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

const STREAM_LONGITUDINAL: u64 = 0;
const STREAM_SURVIVAL: u64 = 1;
const STREAM_PILOT: u64 = 2;

fn subject_rng(cfg: &SimConfig, purpose: u64, subject: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(((cfg.replicate_index * 4 + purpose) << 32) | subject);
    rng
}

/// Hazard-search domain extends to ten follow-up windows.
const SEARCH_FACTOR: f64 = 10.0;

/// Non-uniform latent grid: dense where biomarkers are observed, coarser in
/// the extrapolated tail where only the hazard level matters.
fn master_grid(followup: f64) -> Vec<f64> {
    let mut grid = Vec::with_capacity(130);
    for i in 0..=60 {
        grid.push(i as f64 * followup / 60.0);
    }
    for i in 1..=30 {
        grid.push(followup + i as f64 * (2.0 * followup) / 30.0);
    }
    for i in 1..=35 {
        grid.push(3.0 * followup + i as f64 * (7.0 * followup) / 35.0);
    }
    grid
}

fn cross_amp(cfg: &SimConfig, kappa2_1: f64, kappa2_2: f64) -> Matrix2<f64> {
    let cross = cfg.corr * cfg.tau2 * (kappa2_1 * kappa2_2).sqrt();
    Matrix2::new(
        kappa2_1,
        cross,
        cross,
        cfg.tau2 * cfg.tau2 * kappa2_2,
    )
}

/// Draw the latent field `W` (both biomarkers) at the given nodes from
/// `A ⊗ K_nodes`, via `chol(K)·Z·chol(A)ᵀ`.
fn draw_latent(
    nodes: &[f64],
    amp: &Matrix2<f64>,
    rho2: f64,
    rng: &mut ChaCha12Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let g = nodes.len();
    let z = DMatrix::from_fn(g, 2, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));

    let mut jitter = 1e-10;
    let lk = loop {
        let mut k = DMatrix::from_fn(g, g, |i, j| {
            let d = nodes[i] - nodes[j];
            (-rho2 * d * d).exp()
        });
        for i in 0..g {
            k[(i, i)] += jitter;
        }
        match nalgebra::Cholesky::new(k) {
            Some(c) => break c.unpack(),
            None => {
                jitter *= 100.0;
                if jitter > 1e-3 {
                    return Err(Error::non_pd(
                        "latent kernel failed to factor even with jitter",
                    ));
                }
            }
        }
    };

    // chol of the 2x2 amplitude; a zero amplitude degenerates to zero field
    let a11 = amp[(0, 0)];
    let (l11, l21, l22) = if a11 > 0.0 {
        let l11 = a11.sqrt();
        let l21 = amp[(0, 1)] / l11;
        let l22 = (amp[(1, 1)] - l21 * l21).max(0.0).sqrt();
        (l11, l21, l22)
    } else {
        (0.0, 0.0, amp[(1, 1)].max(0.0).sqrt())
    };

    let kz = &lk * z;
    let mut w1 = Vec::with_capacity(g);
    let mut w2 = Vec::with_capacity(g);
    for i in 0..g {
        w1.push(l11 * kz[(i, 0)]);
        w2.push(l21 * kz[(i, 0)] + l22 * kz[(i, 1)]);
    }
    Ok((w1, w2))
}

fn merge_sorted_unique(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    all.sort_by(|x, y| x.partial_cmp(y).unwrap());
    all.dedup();
    all
}

/// Generate the longitudinal cohort (fully observed at the scheduled times),
/// including the latent trajectories needed by the survival generator.
pub fn simulate_longitudinal(cfg: &SimConfig) -> Result<Vec<SimulatedSubject>> {
    cfg.validate()?;
    let needs_grid = cfg.survival.is_some();
    let grid = if needs_grid {
        master_grid(cfg.followup_max)
    } else {
        Vec::new()
    };

    let mut out = Vec::with_capacity(cfg.n_subjects);
    for s in 0..cfg.n_subjects {
        let mut rng = subject_rng(cfg, STREAM_LONGITUDINAL, s as u64);

        let mut times1: Vec<f64> = (0..cfg.n_times_1)
            .map(|_| rng.gen_range(0.0..cfg.followup_max))
            .collect();
        times1.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let times2: Vec<f64> = if cfg.shared_times {
            times1.clone()
        } else {
            let mut t: Vec<f64> = (0..cfg.n_times_2)
                .map(|_| rng.gen_range(0.0..cfg.followup_max))
                .collect();
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
            t
        };
        let pooled = merge_sorted_unique(&times1, &times2);
        let l = pooled.len();
        let mask1: Vec<bool> = pooled.iter().map(|t| times1.binary_search_by(|x| x.partial_cmp(t).unwrap()).is_ok()).collect();
        let mask2: Vec<bool> = pooled.iter().map(|t| times2.binary_search_by(|x| x.partial_cmp(t).unwrap()).is_ok()).collect();

        let beta1_0 = cfg.intercept1_mean
            + cfg.intercept1_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let beta2_0 = cfg.intercept2_mean
            + cfg.intercept2_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let kappa2_1 = if cfg.kappa2_max > cfg.kappa2_min {
            rng.gen_range(cfg.kappa2_min..cfg.kappa2_max)
        } else {
            cfg.kappa2_min
        };
        let kappa2_2 = if cfg.distinct_kappa2 {
            if cfg.kappa2_max > cfg.kappa2_min {
                rng.gen_range(cfg.kappa2_min..cfg.kappa2_max)
            } else {
                cfg.kappa2_min
            }
        } else {
            kappa2_1
        };
        let amp = cross_amp(cfg, kappa2_1, kappa2_2);

        let nodes = if needs_grid {
            merge_sorted_unique(&pooled, &grid)
        } else {
            pooled.clone()
        };
        let (w1, w2) = draw_latent(&nodes, &amp, cfg.rho2, &mut rng)?;

        let node_index: Vec<usize> = pooled
            .iter()
            .map(|t| nodes.partition_point(|&x| x < *t))
            .collect();
        let latent1_at_obs: Vec<f64> = node_index.iter().map(|&i| beta1_0 + w1[i]).collect();
        let latent2_at_obs: Vec<f64> = node_index.iter().map(|&i| beta2_0 + w2[i]).collect();

        let sd1 = cfg.sigma2_1.sqrt();
        let sd2 = cfg.sigma2_2.sqrt();
        let mut values1 = vec![f64::NAN; l];
        let mut values2 = vec![f64::NAN; l];
        for j in 0..l {
            if mask1[j] {
                values1[j] =
                    latent1_at_obs[j] + sd1 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
            if mask2[j] {
                values2[j] =
                    latent2_at_obs[j] + sd2 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }

        let n_z = cfg.survival.as_ref().map(|s| s.zeta_z.len()).unwrap_or(0);
        let z_baseline: Vec<f64> = (0..n_z)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();

        let long = SubjectLongitudinal::new(
            format!("s{s:05}"),
            pooled,
            values1,
            values2,
            mask1,
            mask2,
        )?;
        let (latent1_nodes, latent2_nodes): (Vec<f64>, Vec<f64>) = (
            w1.iter().map(|w| beta1_0 + w).collect(),
            w2.iter().map(|w| beta2_0 + w).collect(),
        );
        out.push(SimulatedSubject {
            long,
            latent1_at_obs,
            latent2_at_obs,
            latent_nodes: nodes,
            latent1_nodes,
            latent2_nodes,
            beta1_0,
            beta2_0,
            kappa2_1,
            kappa2_2,
            z_baseline,
        });
    }
    Ok(out)
}

/// Apply a missingness scenario in place (masks are cleared; stored values
/// keep the ground truth, which callers must not feed to fitters).
pub fn apply_missingness(
    subjects: &mut [SubjectLongitudinal],
    spec: &MissingnessSpec,
    rng: &mut impl Rng,
) -> Result<()> {
    match *spec {
        MissingnessSpec::None => Ok(()),
        MissingnessSpec::Overlap { fraction } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::invalid("overlap fraction must lie in [0,1]"));
            }
            for subj in subjects.iter_mut() {
                let l = subj.n_times();
                if !subj.fully_observed() {
                    return Err(Error::invalid(
                        "overlap missingness needs fully observed shared-time data",
                    ));
                }
                let n_remove = ((l as f64) / 3.0).round() as usize;
                let n_shared = (fraction * n_remove as f64).round() as usize;
                let n_only = n_remove - n_shared;
                if n_shared + 2 * n_only > l {
                    return Err(Error::invalid(format!(
                        "overlap pattern infeasible: need {} slots out of {l}",
                        n_shared + 2 * n_only
                    )));
                }
                let picks = rand::seq::index::sample(rng, l, n_shared + 2 * n_only);
                let picks: Vec<usize> = picks.into_iter().collect();
                for &j in picks.iter().take(n_shared) {
                    subj.mask1[j] = false;
                    subj.mask2[j] = false;
                }
                for &j in picks.iter().skip(n_shared).take(n_only) {
                    subj.mask1[j] = false;
                }
                for &j in picks.iter().skip(n_shared + n_only) {
                    subj.mask2[j] = false;
                }
            }
            Ok(())
        }
        MissingnessSpec::Frequency { fraction } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::invalid("frequency fraction must lie in [0,1]"));
            }
            for subj in subjects.iter_mut() {
                let l = subj.n_times();
                let keep = (fraction * l as f64).round() as usize;
                let n_remove = l - keep;
                let picks = rand::seq::index::sample(rng, l, n_remove);
                for j in picks {
                    subj.mask1[j] = false;
                }
            }
            Ok(())
        }
    }
}

/// Outcome of survival generation.
#[derive(Debug, Clone)]
pub struct SurvivalOutcome {
    pub records: Vec<SurvivalRecord>,
    /// Calibrated upper bound of the Uniform censoring distribution
    /// (infinite when the censoring target is zero).
    pub c_max: f64,
    /// Subjects whose event search exceeded the domain and were
    /// administratively censored at the follow-up limit.
    pub administratively_censored: usize,
}

struct HazardSpec<'a> {
    nu: f64,
    lambda_nodes: &'a [f64],
    nodes: &'a [f64],
}

impl HazardSpec<'_> {
    fn lambda(&self, t: f64) -> f64 {
        let nodes = self.nodes;
        let vals = self.lambda_nodes;
        if t <= nodes[0] {
            return vals[0];
        }
        if t >= *nodes.last().unwrap() {
            return *vals.last().unwrap();
        }
        let idx = nodes.partition_point(|&x| x <= t);
        let (t0, t1) = (nodes[idx - 1], nodes[idx]);
        (vals[idx - 1] * (t1 - t) + vals[idx] * (t - t0)) / (t1 - t0)
    }

    /// Midpoint-rectangular cumulative hazard on [0, t] with 1000 cells.
    fn cumulative(&self, t: f64) -> f64 {
        const M: usize = 1000;
        let dt = t / M as f64;
        let mut h = 0.0;
        for k in 0..M {
            let w = (k as f64 + 0.5) * dt;
            h += self.nu * w.powf(self.nu - 1.0) * self.lambda(w).exp();
        }
        h * dt
    }
}

/// Solve `H(T) = target` by bisection; `None` when the search domain does
/// not bracket the root.
fn solve_event_time(hz: &HazardSpec, target: f64, t_max: f64) -> Option<f64> {
    if hz.cumulative(t_max) < target {
        return None;
    }
    let mut lo = 0.0f64;
    let mut hi = t_max;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hz.cumulative(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * t_max {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

fn draw_baseline_intercept(mix: &[MixtureComponent], rng: &mut ChaCha12Rng) -> f64 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for c in mix {
        acc += c.weight;
        if u <= acc {
            return c.mean + c.sigma2.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
    let c = mix.last().unwrap();
    c.mean + c.sigma2.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// Pilot event-time sample used to calibrate the censoring scale.
fn pilot_event_times(cfg: &SimConfig, scfg: &SurvivalSimConfig, n_pilot: usize) -> Result<Vec<f64>> {
    let grid = master_grid(cfg.followup_max);
    let t_max = SEARCH_FACTOR * cfg.followup_max;
    let mut times = Vec::with_capacity(n_pilot);
    for j in 0..n_pilot {
        let mut rng = subject_rng(cfg, STREAM_PILOT, j as u64);
        let kappa2_1 = if cfg.kappa2_max > cfg.kappa2_min {
            rng.gen_range(cfg.kappa2_min..cfg.kappa2_max)
        } else {
            cfg.kappa2_min
        };
        let kappa2_2 = if cfg.distinct_kappa2 {
            if cfg.kappa2_max > cfg.kappa2_min {
                rng.gen_range(cfg.kappa2_min..cfg.kappa2_max)
            } else {
                cfg.kappa2_min
            }
        } else {
            kappa2_1
        };
        let beta1 = cfg.intercept1_mean
            + cfg.intercept1_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let beta2 = cfg.intercept2_mean
            + cfg.intercept2_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
        let amp = cross_amp(cfg, kappa2_1, kappa2_2);
        let (w1, w2) = draw_latent(&grid, &amp, cfg.rho2, &mut rng)?;
        let beta_s0 = draw_baseline_intercept(&scfg.mixture, &mut rng);
        let z_term: f64 = scfg
            .zeta_z
            .iter()
            .map(|z| z * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .sum();
        let lambda_nodes: Vec<f64> = (0..grid.len())
            .map(|i| {
                beta_s0
                    + z_term
                    + scfg.zeta_x1 * (beta1 + w1[i])
                    + scfg.zeta_x2 * (beta2 + w2[i])
            })
            .collect();
        let hz = HazardSpec {
            nu: scfg.nu,
            lambda_nodes: &lambda_nodes,
            nodes: &grid,
        };
        let u: f64 = rng.gen();
        let target = -(1.0 - u).ln();
        match solve_event_time(&hz, target, t_max) {
            Some(t) => times.push(t),
            None => times.push(f64::INFINITY),
        }
    }
    Ok(times)
}

/// Expected censoring rate under `C ~ Uniform(0, c)` given event times.
fn expected_censoring_rate(event_times: &[f64], c: f64) -> f64 {
    event_times
        .iter()
        .map(|&t| (t / c).min(1.0))
        .sum::<f64>()
        / event_times.len() as f64
}

/// Solve the Uniform censoring scale so the expected rate on the pilot
/// sample matches the target, to 1e-3 relative.
fn calibrate_c_max(event_times: &[f64], target: f64) -> Result<f64> {
    let mut lo = 1e-6;
    let mut hi = 1e6;
    if expected_censoring_rate(event_times, lo) < target {
        return Err(Error::invalid(
            "censoring target unreachable: rate below target at minimal scale",
        ));
    }
    while expected_censoring_rate(event_times, hi) > target {
        hi *= 10.0;
        if hi > 1e12 {
            return Err(Error::invalid("censoring calibration failed to bracket"));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if expected_censoring_rate(event_times, mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) / hi < 1e-3 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

const PILOT_SIZE: usize = 2000;

/// Generate survival records for a cohort: event times solve
/// `H(T) = −log U` on the subject's latent hazard, censoring is Uniform with
/// a pilot-calibrated scale.
pub fn simulate_survival(
    cohort: &[SimulatedSubject],
    cfg: &SimConfig,
) -> Result<SurvivalOutcome> {
    let scfg = cfg
        .survival
        .as_ref()
        .ok_or_else(|| Error::invalid("config has no survival block"))?;
    if cohort.iter().any(|s| s.latent_nodes.is_empty()) {
        return Err(Error::invalid("cohort lacks latent trajectories"));
    }
    let t_max = SEARCH_FACTOR * cfg.followup_max;

    let c_max = if scfg.censoring_target > 0.0 {
        let pilot = pilot_event_times(cfg, scfg, PILOT_SIZE)?;
        calibrate_c_max(&pilot, scfg.censoring_target)?
    } else {
        f64::INFINITY
    };

    let mut records = Vec::with_capacity(cohort.len());
    let mut admin = 0usize;
    for (s, subj) in cohort.iter().enumerate() {
        let mut rng = subject_rng(cfg, STREAM_SURVIVAL, s as u64);
        let beta_s0 = draw_baseline_intercept(&scfg.mixture, &mut rng);
        let z_term: f64 = scfg
            .zeta_z
            .iter()
            .zip(&subj.z_baseline)
            .map(|(zeta, z)| zeta * z)
            .sum();
        let lambda_nodes: Vec<f64> = (0..subj.latent_nodes.len())
            .map(|i| {
                beta_s0
                    + z_term
                    + scfg.zeta_x1 * subj.latent1_nodes[i]
                    + scfg.zeta_x2 * subj.latent2_nodes[i]
            })
            .collect();
        let hz = HazardSpec {
            nu: scfg.nu,
            lambda_nodes: &lambda_nodes,
            nodes: &subj.latent_nodes,
        };
        let u: f64 = rng.gen();
        let target = -(1.0 - u).ln();
        let c = if c_max.is_finite() {
            rng.gen_range(0.0..c_max)
        } else {
            f64::INFINITY
        };
        let (y, event) = match solve_event_time(&hz, target, t_max) {
            Some(t) => {
                if t <= c {
                    (t, true)
                } else {
                    (c, false)
                }
            }
            None => {
                admin += 1;
                (cfg.followup_max.min(c), false)
            }
        };
        records.push(SurvivalRecord::new(
            subj.long.subject_id.clone(),
            y.max(1e-9),
            event,
            subj.z_baseline.clone(),
        )?);
    }
    Ok(SurvivalOutcome {
        records,
        c_max,
        administratively_censored: admin,
    })
}
