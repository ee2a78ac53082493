//! Hamiltonian Monte Carlo over an unconstrained posterior, with
//! dual-averaging step-size adaptation, diagonal mass estimation from
//! warmup, and split-Rhat/ESS chain diagnostics.
//!
//! Chains are deterministic given (seed, chain index, data, config): each
//! chain draws from its own ChaCha stream.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::JointModel;

/// A target distribution exposing the log-density and its gradient over an
/// unconstrained vector.
pub trait Posterior: Sync {
    fn dim(&self) -> usize;
    /// Log-density; `−∞` marks a rejected (out-of-support) state.
    fn log_density(&self, theta: &DVector<f64>) -> f64;
    fn log_density_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>);
    /// Starting point before per-chain jitter.
    fn initial_point(&self) -> DVector<f64> {
        DVector::zeros(self.dim())
    }
    fn param_names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| format!("theta[{i}]")).collect()
    }
    /// Constrained view of a state (identity for unconstrained targets).
    fn constrain(&self, theta: &DVector<f64>) -> DVector<f64> {
        theta.clone()
    }
}

impl Posterior for JointModel {
    fn dim(&self) -> usize {
        JointModel::dim(self)
    }

    fn log_density(&self, theta: &DVector<f64>) -> f64 {
        self.log_posterior(theta)
            .expect("posterior evaluation failed on a structurally valid state")
    }

    fn log_density_grad(&self, theta: &DVector<f64>) -> (f64, DVector<f64>) {
        self.grad_log_posterior(theta)
            .expect("posterior gradient failed on a structurally valid state")
    }

    fn initial_point(&self) -> DVector<f64> {
        JointModel::initial_point(self)
    }

    fn param_names(&self) -> Vec<String> {
        self.layout().names().to_vec()
    }

    fn constrain(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.constrain_view(theta)
    }
}

/// Sampler configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HmcConfig {
    pub n_warmup: usize,
    pub n_draws: usize,
    pub leapfrog_steps: usize,
    pub target_accept: f64,
    pub seed: u64,
    pub chain_index: u64,
    /// Diagonal mass vector; all-ones when absent.
    pub mass: Option<Vec<f64>>,
    /// Estimate the diagonal mass from warmup variances.
    pub adapt_mass: bool,
    /// Uniform(-j, j) jitter applied to the initial point per chain.
    pub init_jitter: f64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            n_warmup: 500,
            n_draws: 500,
            leapfrog_steps: 20,
            target_accept: 0.8,
            seed: 0,
            chain_index: 0,
            mass: None,
            adapt_mass: true,
            init_jitter: 0.5,
        }
    }
}

impl HmcConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.n_warmup == 0 || self.n_draws == 0 || self.leapfrog_steps == 0 {
            return Err(Error::invalid("iteration counts must be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0,1)"));
        }
        if let Some(m) = &self.mass {
            if m.len() != dim || m.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::invalid(
                    "mass vector must be positive with model dimension",
                ));
            }
        }
        Ok(())
    }
}

/// Ordered posterior draws from one chain, with acceptance and divergence
/// statistics. Only post-warmup states are stored.
#[derive(Debug, Clone)]
pub struct Chain {
    pub param_names: Vec<String>,
    /// Unconstrained states, one row per draw.
    pub draws: DMatrix<f64>,
    /// Constrained view of each stored state.
    pub draws_constrained: DMatrix<f64>,
    pub logp: Vec<f64>,
    pub accept_rate: f64,
    pub step_size: f64,
    pub step_size_trace: Vec<f64>,
    pub divergences: usize,
    pub seed: u64,
    pub chain_index: u64,
}

/// Energy threshold beyond which a trajectory is marked divergent.
const DIVERGENCE_ENERGY: f64 = 1000.0;

/// `L` leapfrog steps of size `eps` under a unit mass matrix.
/// Time-reversible and volume-preserving; a non-finite gradient or state
/// signals a divergent trajectory.
pub fn leapfrog(
    theta: &DVector<f64>,
    momentum: &DVector<f64>,
    eps: f64,
    l_steps: usize,
    grad_fn: &mut impl FnMut(&DVector<f64>) -> DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let mut q = theta.clone();
    let mut p = momentum.clone();
    let mut g = grad_fn(&q);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence("non-finite gradient at start".into()));
    }
    for step in 0..l_steps {
        p += 0.5 * eps * &g;
        q += eps * &p;
        g = grad_fn(&q);
        if g.iter().any(|v| !v.is_finite()) || q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite state at leapfrog step {step}"
            )));
        }
        p += 0.5 * eps * &g;
    }
    Ok((q, p))
}

struct TrajectoryOutcome {
    theta: DVector<f64>,
    logp: f64,
    grad: DVector<f64>,
    accept_prob: f64,
    accepted: bool,
    divergent: bool,
}

/// One HMC transition with a diagonal mass matrix.
#[allow(clippy::too_many_arguments)]
fn transition(
    posterior: &dyn Posterior,
    theta: &DVector<f64>,
    logp: f64,
    grad: &DVector<f64>,
    eps: f64,
    l_steps: usize,
    inv_mass: &DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> TrajectoryOutcome {
    let dim = theta.len();
    let mut p = DVector::zeros(dim);
    for i in 0..dim {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        p[i] = z / inv_mass[i].sqrt();
    }
    let kinetic0: f64 = 0.5 * (0..dim).map(|i| p[i] * p[i] * inv_mass[i]).sum::<f64>();
    let h0 = -logp + kinetic0;

    let mut q = theta.clone();
    let mut mom = p;
    let mut g = grad.clone();
    let mut lp = logp;
    let mut divergent = false;
    for _ in 0..l_steps {
        mom += 0.5 * eps * &g;
        for i in 0..dim {
            q[i] += eps * inv_mass[i] * mom[i];
        }
        let (lp_new, g_new) = posterior.log_density_grad(&q);
        if !lp_new.is_finite() {
            divergent = true;
            break;
        }
        lp = lp_new;
        g = g_new;
        mom += 0.5 * eps * &g;
    }

    let (accept_prob, accepted) = if divergent {
        (0.0, false)
    } else {
        let kinetic1: f64 =
            0.5 * (0..dim).map(|i| mom[i] * mom[i] * inv_mass[i]).sum::<f64>();
        let h1 = -lp + kinetic1;
        let delta = h0 - h1;
        if !delta.is_finite() || -delta > DIVERGENCE_ENERGY {
            divergent = true;
            (0.0, false)
        } else {
            let alpha = delta.exp().min(1.0);
            (alpha, rng.gen::<f64>() < alpha)
        }
    };

    if accepted {
        TrajectoryOutcome {
            theta: q,
            logp: lp,
            grad: g,
            accept_prob,
            accepted,
            divergent,
        }
    } else {
        TrajectoryOutcome {
            theta: theta.clone(),
            logp,
            grad: grad.clone(),
            accept_prob,
            accepted,
            divergent,
        }
    }
}

fn find_initial_eps(
    posterior: &dyn Posterior,
    theta: &DVector<f64>,
    inv_mass: &DVector<f64>,
    rng: &mut ChaCha12Rng,
) -> f64 {
    let dim = theta.len();
    let (lp0, g0) = posterior.log_density_grad(theta);
    let mut eps = 0.1;
    let mut p = DVector::zeros(dim);
    for i in 0..dim {
        let z: f64 = rng.sample(rand_distr::StandardNormal);
        p[i] = z / inv_mass[i].sqrt();
    }
    let kinetic0: f64 = 0.5 * (0..dim).map(|i| p[i] * p[i] * inv_mass[i]).sum::<f64>();
    let h0 = -lp0 + kinetic0;

    let one_step = |eps: f64| -> f64 {
        let mut q = theta.clone();
        let mut mom = p.clone();
        mom += 0.5 * eps * &g0;
        for i in 0..dim {
            q[i] += eps * inv_mass[i] * mom[i];
        }
        let (lp, g) = posterior.log_density_grad(&q);
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        mom += 0.5 * eps * &g;
        let kinetic: f64 =
            0.5 * (0..dim).map(|i| mom[i] * mom[i] * inv_mass[i]).sum::<f64>();
        h0 - (-lp + kinetic)
    };

    let alpha0 = one_step(eps).exp().min(1.0);
    let go_up = alpha0 > 0.5;
    for _ in 0..60 {
        let alpha = one_step(eps).exp().min(1.0);
        if go_up {
            if alpha <= 0.5 {
                break;
            }
            eps *= 2.0;
        } else {
            if alpha >= 0.5 {
                break;
            }
            eps *= 0.5;
        }
        if !(1e-10..=1e6).contains(&eps) {
            break;
        }
    }
    eps.clamp(1e-10, 1e6)
}

struct DualAveraging {
    mu: f64,
    h_bar: f64,
    log_eps: f64,
    log_eps_bar: f64,
    count: usize,
    target: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    fn new(eps0: f64, target: f64) -> Self {
        Self {
            mu: (10.0 * eps0).ln(),
            h_bar: 0.0,
            log_eps: eps0.ln(),
            log_eps_bar: eps0.ln(),
            count: 0,
            target,
        }
    }

    fn update(&mut self, accept_prob: f64) {
        self.count += 1;
        let m = self.count as f64;
        let w = 1.0 / (m + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - m.sqrt() / Self::GAMMA * self.h_bar;
        let m_k = m.powf(-Self::KAPPA);
        self.log_eps_bar = m_k * self.log_eps + (1.0 - m_k) * self.log_eps_bar;
    }

    fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    fn averaged(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// Run one chain: warmup with step-size adaptation (and optional diagonal
/// mass estimation over the second half of warmup), then `n_draws` stored
/// draws.
pub fn run_chain(cfg: &HmcConfig, posterior: &dyn Posterior) -> Result<Chain> {
    let dim = posterior.dim();
    cfg.validate(dim)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.chain_index);

    // jittered init with a finite posterior
    let base = posterior.initial_point();
    let mut theta = base.clone();
    let mut jitter = cfg.init_jitter;
    let mut lp = posterior.log_density(&theta);
    for _ in 0..100 {
        let mut cand = base.clone();
        if jitter > 0.0 {
            for v in cand.iter_mut() {
                *v += rng.gen_range(-jitter..=jitter);
            }
        }
        let lp_c = posterior.log_density(&cand);
        if lp_c.is_finite() {
            theta = cand;
            lp = lp_c;
            break;
        }
        jitter *= 0.5;
    }
    if !lp.is_finite() {
        return Err(Error::Divergence(
            "could not find a finite initial state".into(),
        ));
    }
    let (lp0, mut grad) = posterior.log_density_grad(&theta);
    lp = lp0;

    let mut inv_mass = match &cfg.mass {
        Some(m) => DVector::from_fn(dim, |i, _| 1.0 / m[i]),
        None => DVector::from_element(dim, 1.0),
    };

    let eps0 = find_initial_eps(posterior, &theta, &inv_mass, &mut rng);
    let mut da = DualAveraging::new(eps0, cfg.target_accept);
    let mut step_size_trace = Vec::with_capacity(cfg.n_warmup + 1);

    // diagonal mass window: [n_warmup/2, 9·n_warmup/10)
    let w_lo = cfg.n_warmup / 2;
    let w_hi = (cfg.n_warmup * 9) / 10;
    let window_enabled = cfg.adapt_mass && cfg.mass.is_none() && w_hi > w_lo + 9;
    let mut window: Vec<DVector<f64>> = Vec::new();

    let mut warmup_divergences = 0usize;
    for m in 0..cfg.n_warmup {
        let eps = da.current();
        step_size_trace.push(eps);
        let out = transition(
            posterior,
            &theta,
            lp,
            &grad,
            eps,
            cfg.leapfrog_steps,
            &inv_mass,
            &mut rng,
        );
        if out.divergent {
            warmup_divergences += 1;
        }
        theta = out.theta;
        lp = out.logp;
        grad = out.grad;
        da.update(out.accept_prob);

        if window_enabled && m >= w_lo && m < w_hi {
            window.push(theta.clone());
        }
        if window_enabled && m + 1 == w_hi {
            let n = window.len() as f64;
            let mut var = DVector::zeros(dim);
            let mut mean = DVector::zeros(dim);
            for t in &window {
                mean += t;
            }
            mean /= n;
            for t in &window {
                for i in 0..dim {
                    let d = t[i] - mean[i];
                    var[i] += d * d;
                }
            }
            var /= (n - 1.0).max(1.0);
            let shrink = n / (n + 5.0);
            for i in 0..dim {
                let v = shrink * var[i] + (1.0 - shrink) * 1e-3;
                inv_mass[i] = v.max(1e-12);
            }
            window.clear();
            // retune the step size under the new metric
            let eps_new = find_initial_eps(posterior, &theta, &inv_mass, &mut rng);
            da = DualAveraging::new(eps_new, cfg.target_accept);
        }
    }
    if warmup_divergences * 2 > cfg.n_warmup {
        return Err(Error::Divergence(format!(
            "{warmup_divergences} of {} warmup trajectories diverged",
            cfg.n_warmup
        )));
    }

    let eps = da.averaged();
    step_size_trace.push(eps);
    let mut draws = DMatrix::zeros(cfg.n_draws, dim);
    let mut draws_constrained = DMatrix::zeros(cfg.n_draws, dim);
    let mut logps = Vec::with_capacity(cfg.n_draws);
    let mut accepts = 0usize;
    let mut divergences = 0usize;
    for d in 0..cfg.n_draws {
        let out = transition(
            posterior,
            &theta,
            lp,
            &grad,
            eps,
            cfg.leapfrog_steps,
            &inv_mass,
            &mut rng,
        );
        if out.divergent {
            divergences += 1;
        }
        if out.accepted {
            accepts += 1;
        }
        theta = out.theta;
        lp = out.logp;
        grad = out.grad;
        draws.row_mut(d).copy_from(&theta.transpose());
        draws_constrained
            .row_mut(d)
            .copy_from(&posterior.constrain(&theta).transpose());
        logps.push(lp);
    }

    Ok(Chain {
        param_names: posterior.param_names(),
        draws,
        draws_constrained,
        logp: logps,
        accept_rate: accepts as f64 / cfg.n_draws as f64,
        step_size: eps,
        step_size_trace,
        divergences,
        seed: cfg.seed,
        chain_index: cfg.chain_index,
    })
}

/// Run several chains sequentially; chain `c` uses RNG stream `c`.
pub fn run_chains(
    cfg: &HmcConfig,
    n_chains: usize,
    posterior: &dyn Posterior,
) -> Result<Vec<Chain>> {
    (0..n_chains)
        .map(|c| {
            let chain_cfg = HmcConfig {
                chain_index: cfg.chain_index + c as u64,
                ..cfg.clone()
            };
            run_chain(&chain_cfg, posterior)
        })
        .collect()
}

/// Per-parameter posterior summary.
#[derive(Debug, Clone, Serialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub q97_5: f64,
    pub ess: f64,
    pub rhat: f64,
}

/// Split-half R-hat and ESS over the constrained draws of one or more
/// chains, plus means, standard deviations and central 95% quantiles.
pub fn diagnostics(chains: &[Chain]) -> Result<Vec<ParamSummary>> {
    if chains.is_empty() {
        return Err(Error::invalid("diagnostics need at least one chain"));
    }
    let n = chains[0].draws_constrained.nrows();
    if n < 4 {
        return Err(Error::invalid("diagnostics need at least 4 draws per chain"));
    }
    if chains
        .iter()
        .any(|c| c.draws_constrained.nrows() != n || c.param_names != chains[0].param_names)
    {
        return Err(Error::invalid(
            "chains must have matching draws and parameters",
        ));
    }
    let dim = chains[0].draws_constrained.ncols();
    let mut out = Vec::with_capacity(dim);
    for p in 0..dim {
        // split each chain in half
        let half = n / 2;
        let mut split: Vec<Vec<f64>> = Vec::with_capacity(chains.len() * 2);
        for c in chains {
            let col: Vec<f64> = (0..n).map(|i| c.draws_constrained[(i, p)]).collect();
            split.push(col[0..half].to_vec());
            split.push(col[half..2 * half].to_vec());
        }
        let (rhat, ess) = split_rhat_ess(&split);

        let mut all: Vec<f64> = chains
            .iter()
            .flat_map(|c| (0..n).map(move |i| c.draws_constrained[(i, p)]))
            .collect();
        let total = all.len() as f64;
        let mean = all.iter().sum::<f64>() / total;
        let sd = (all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
            / (total - 1.0).max(1.0))
        .sqrt();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out.push(ParamSummary {
            name: chains[0].param_names[p].clone(),
            mean,
            sd,
            q2_5: quantile(&all, 0.025),
            q97_5: quantile(&all, 0.975),
            ess,
            rhat,
        });
    }
    Ok(out)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Classic split-chain R-hat and ESS with Geyer's initial monotone positive
/// sequence (no rank normalization).
fn split_rhat_ess(split: &[Vec<f64>]) -> (f64, f64) {
    let m = split.len();
    let n = split[0].len();
    let nm = (n * m) as f64;
    let means: Vec<f64> = split
        .iter()
        .map(|c| c.iter().sum::<f64>() / n as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / m as f64;
    let vars: Vec<f64> = split
        .iter()
        .zip(&means)
        .map(|(c, &mu)| {
            c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n as f64 - 1.0)
        })
        .collect();
    let w = vars.iter().sum::<f64>() / m as f64;
    let b_over_n = if m > 1 {
        means
            .iter()
            .map(|mu| (mu - grand) * (mu - grand))
            .sum::<f64>()
            / (m as f64 - 1.0)
    } else {
        0.0
    };
    let var_plus = (n as f64 - 1.0) / n as f64 * w + b_over_n;

    if w <= 0.0 || !w.is_finite() {
        // constant chains: R-hat is 1 by convention
        return (1.0, nm);
    }
    let rhat = (var_plus / w).sqrt();

    // mean autocovariance across split chains at each lag
    let max_lag = n - 1;
    let acov_at = |t: usize| -> f64 {
        let mut acc = 0.0;
        for (c, &mu) in split.iter().zip(&means) {
            let mut s = 0.0;
            for i in 0..n - t {
                s += (c[i] - mu) * (c[i + t] - mu);
            }
            acc += s / n as f64;
        }
        acc / m as f64
    };
    let rho = |acov: f64| -> f64 { 1.0 - (w - acov) / var_plus };

    let mut prev_pair = f64::INFINITY;
    let mut sum_pairs = 0.0;
    let mut t = 0usize;
    while t + 1 <= max_lag {
        let r_even = if t == 0 { 1.0 } else { rho(acov_at(t)) };
        let r_odd = rho(acov_at(t + 1));
        let mut pair = r_even + r_odd;
        if pair <= 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        prev_pair = pair;
        sum_pairs += pair;
        t += 2;
    }
    let tau = (2.0 * sum_pairs - 1.0).max(1e-3);
    let ess = nm / tau;
    (rhat, ess)
}

/// Write one chain as CSV: header of constrained parameter names, one row
/// per draw.
pub fn write_chain_csv(chain: &Chain, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&chain.param_names)?;
    for i in 0..chain.draws_constrained.nrows() {
        let row: Vec<String> = (0..chain.draws_constrained.ncols())
            .map(|j| format!("{}", chain.draws_constrained[(i, j)]))
            .collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Sidecar metadata stored next to each chain CSV.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChainSidecar {
    pub seed: u64,
    pub chain_index: u64,
    pub config: HmcConfig,
    pub accept_rate: f64,
    pub divergences: usize,
    pub step_size: f64,
}

pub fn write_chain_sidecar(chain: &Chain, cfg: &HmcConfig, path: &Path) -> Result<()> {
    let sidecar = ChainSidecar {
        seed: chain.seed,
        chain_index: chain.chain_index,
        config: cfg.clone(),
        accept_rate: chain.accept_rate,
        divergences: chain.divergences,
        step_size: chain.step_size,
    };
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{}", serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

/// Read a chain CSV back as (parameter names, draws matrix).
pub fn read_chain_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> =
            rec.iter().map(|s| s.parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::invalid(format!("bad float in chain csv: {e}")))?);
    }
    if rows.is_empty() {
        return Err(Error::invalid("chain csv has no draws"));
    }
    let n = rows.len();
    let d = names.len();
    let mut m = DMatrix::zeros(n, d);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != d {
            return Err(Error::invalid("ragged chain csv"));
        }
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok((names, m))
}
