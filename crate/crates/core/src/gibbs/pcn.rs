//! Preconditioned Crank–Nicolson Metropolis chain with a Gaussian prior.

use rand::Rng;
use serde::Serialize;

use super::{potential_upto, WeightedEnsemble};
use crate::error::{EquiwaveError, Result};
use crate::measures::{Ensemble, FieldSampler};
use crate::rng;
use crate::soliton::Background;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PcnConfig {
    pub beta: f64,
    pub thin: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for PcnConfig {
    fn default() -> Self {
        PcnConfig { beta: 0.3, thin: 10, burn_in: 1000, seed: 42 }
    }
}

/// Chain state and acceptance statistics.
#[derive(Clone, Debug)]
pub struct PcnChain {
    pub beta: f64,
    pub state: Vec<f64>,
    pub potential: f64,
    pub accepted: usize,
    pub proposed: usize,
    pub seed: u64,
}

impl PcnChain {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Thinned chain output.
#[derive(Clone, Debug)]
pub struct PcnOutput {
    pub ensemble: WeightedEnsemble,
    pub chain: PcnChain,
    /// Potential value at every retained state.
    pub potentials: Vec<f64>,
    pub warning: Option<String>,
}

const PRIOR_STREAM: u64 = 1;
const UNIFORM_STREAM: u64 = 2;

/// Run `steps` pCN proposals targeting exp(-potential) relative to the sampler's law.
pub fn pcn_chain<S, F>(sampler: &S, params: crate::grid::ModelParams, cfg: &PcnConfig, steps: usize, potential: F) -> Result<PcnOutput>
where
    S: FieldSampler,
    F: Fn(&[f64]) -> f64,
{
    if !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(EquiwaveError::InvalidArgument(format!("beta must lie in (0,1) (got {})", cfg.beta)));
    }
    let thin = cfg.thin.max(1);
    let prior_seed = rng::derive_seed(cfg.seed, PRIOR_STREAM);
    let mut uniforms = rng::stream(rng::derive_seed(cfg.seed, UNIFORM_STREAM), 0);
    let keep = (1.0 - cfg.beta * cfg.beta).sqrt();
    let state = sampler.draw(prior_seed, 0);
    let v = potential(&state);
    let mut chain = PcnChain { beta: cfg.beta, state, potential: v, accepted: 0, proposed: 0, seed: cfg.seed };
    let mut samples = Vec::new();
    let mut potentials = Vec::new();
    for step in 0..steps {
        let xi = sampler.draw(prior_seed, step as u64 + 1);
        let proposal: Vec<f64> = chain.state.iter().zip(&xi).map(|(a, b)| keep * a + cfg.beta * b).collect();
        let vp = potential(&proposal);
        let u: f64 = uniforms.gen();
        chain.proposed += 1;
        if u.ln() < chain.potential - vp {
            chain.state = proposal;
            chain.potential = vp;
            chain.accepted += 1;
        }
        if step >= cfg.burn_in && (step - cfg.burn_in) % thin == 0 {
            samples.push(chain.state.clone());
            potentials.push(chain.potential);
        }
    }
    let rate = chain.acceptance_rate();
    let warning = (!(0.1..=0.9).contains(&rate) && cfg.beta < 1.0 && potentials.iter().any(|v| *v != 0.0))
        .then(|| format!("acceptance rate {rate:.3} outside [0.1, 0.9]; retune beta"));
    let ens = Ensemble { params, seed: cfg.seed, grid: sampler.grid(), samples };
    Ok(PcnOutput { ensemble: WeightedEnsemble::unweighted(ens), chain, potentials, warning })
}

/// pCN chain for the Gibbs measure exp(-V_L) d(Gaussian).
pub fn pcn_sample<S: FieldSampler>(
    sampler: &S,
    params: crate::grid::ModelParams,
    cfg: &PcnConfig,
    l: f64,
    bg: &Background,
    steps: usize,
) -> Result<PcnOutput> {
    sampler.grid().check_same(&bg.grid)?;
    let li = bg.grid.index_of(l)?;
    pcn_chain(sampler, params, cfg, steps, |s| potential_upto(s, li, bg))
}
