//! Gaussian measures with covariance A^{-1}, white noise, and covariance diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EquiwaveError, Result};
use crate::grid::{ModelParams, RadialGrid};
use crate::kernels::holder_parts;
use crate::linalg::Ldl;
use crate::operator::{DiscreteOperator, GreensMatrix, SpectralBasis};
use crate::rng;
use crate::stats;

/// Anything that turns (seed, index) into one sample on a grid.
pub trait FieldSampler: Sync {
    fn grid(&self) -> RadialGrid;
    /// Sample `index` of the ensemble keyed by `seed`, boundary values included.
    fn draw(&self, seed: u64, index: u64) -> Vec<f64>;
}

/// Karhunen–Loève sampler psi = sum_m g_m / lambda_m e_m.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    pub params: ModelParams,
    pub basis: SpectralBasis,
    pub cutoff: usize,
}

impl GaussianSampler {
    pub fn new(params: ModelParams, basis: SpectralBasis) -> Result<Self> {
        if let Some(bad) = basis.eigenvalues.iter().find(|l| !(**l > 0.0)) {
            return Err(EquiwaveError::NotPositiveDefinite { smallest: *bad });
        }
        let cutoff = basis.len();
        Ok(GaussianSampler { params, basis, cutoff })
    }

    pub fn with_cutoff(mut self, cutoff: usize) -> Self {
        self.cutoff = cutoff.min(self.basis.len());
        self
    }

    /// The sample belonging to the given mode coefficients g_m.
    pub fn sample_from_normals(&self, g: &[f64]) -> Vec<f64> {
        let len = self.basis.grid.len();
        let mut out = vec![0.0; len];
        for (m, gm) in g.iter().take(self.cutoff).enumerate() {
            let c = gm / self.basis.eigenvalues[m].sqrt();
            for (o, e) in out.iter_mut().zip(self.basis.vector(m)) {
                *o += c * e;
            }
        }
        out
    }
}

impl FieldSampler for GaussianSampler {
    fn grid(&self) -> RadialGrid {
        self.basis.grid
    }

    fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        self.sample_from_normals(&rng::normals(seed, index, self.cutoff))
    }
}

/// Same law through the LDL^T factor: psi = h^{-1/2} L^{-T} D^{-1/2} g, O(M) per sample.
#[derive(Clone, Debug)]
pub struct CholeskySampler {
    pub params: ModelParams,
    grid: RadialGrid,
    ldl: Ldl,
}

impl CholeskySampler {
    pub fn new(op: &DiscreteOperator) -> Result<Self> {
        let ldl = op.matrix.ldl().ok_or_else(|| EquiwaveError::NotPositiveDefinite {
            smallest: op.lowest_eigenvalue(),
        })?;
        Ok(CholeskySampler { params: op.params, grid: op.grid, ldl })
    }

    pub fn sample_from_normals(&self, g: &[f64]) -> Vec<f64> {
        let m = self.grid.intervals();
        let x = self.ldl.solve_root_transpose(g);
        let s = 1.0 / self.grid.spacing().sqrt();
        let mut out = vec![0.0; m + 1];
        for (o, v) in out[1..m].iter_mut().zip(&x) {
            *o = s * v;
        }
        out
    }
}

impl FieldSampler for CholeskySampler {
    fn grid(&self) -> RadialGrid {
        self.grid
    }

    fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        self.sample_from_normals(&rng::normals(seed, index, self.grid.intervals() - 1))
    }
}

/// Samples on a common grid plus their provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub params: ModelParams,
    pub seed: u64,
    pub grid: RadialGrid,
    pub samples: Vec<Vec<f64>>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// `count` samples with indices 0..count, generated in parallel.
pub fn sample_gaussian<S: FieldSampler>(sampler: &S, params: ModelParams, seed: u64, count: usize) -> Ensemble {
    sample_range(sampler, params, seed, 0, count)
}

/// Samples with indices start..start+count.
pub fn sample_range<S: FieldSampler>(sampler: &S, params: ModelParams, seed: u64, start: usize, count: usize) -> Ensemble {
    let samples = (start..start + count)
        .into_par_iter()
        .map(|i| sampler.draw(seed, i as u64))
        .collect();
    Ensemble { params, seed, grid: sampler.grid(), samples }
}

/// Brownian-bridge sampler, the law of the white-noise antiderivative.
pub fn bridge_sampler(radius: f64, intervals: usize) -> Result<CholeskySampler> {
    let params = ModelParams::new(0, 0, radius, intervals)?;
    let grid = params.grid();
    let op = crate::operator::from_potential(params, grid, vec![0.0; grid.len()]);
    CholeskySampler::new(&op)
}

/// Antiderivatives W of white-noise velocities (Brownian bridges on [1, R]).
pub fn sample_white_noise(radius: f64, intervals: usize, seed: u64, count: usize) -> Result<Ensemble> {
    let s = bridge_sampler(radius, intervals)?;
    Ok(sample_gaussian(&s, s.params, seed, count))
}

/// Antiderivative sampler for i.i.d. nodal velocities v_i ~ N(0, 1/h) on interior
/// nodes, the velocity law left invariant by the Dirichlet flow. W is a random walk
/// with free endpoint value W(R).
#[derive(Clone, Copy, Debug)]
pub struct WhiteNoiseSampler {
    pub grid: RadialGrid,
}

impl FieldSampler for WhiteNoiseSampler {
    fn grid(&self) -> RadialGrid {
        self.grid
    }

    fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        let m = self.grid.intervals();
        let scale = self.grid.spacing().sqrt().recip();
        let mut v = vec![0.0; m + 1];
        for (x, g) in v[1..m].iter_mut().zip(rng::normals(seed, index, m - 1)) {
            *x = scale * g;
        }
        crate::grid::cumulative_trapezoid(&v, self.grid.spacing())
    }
}

/// Result of [`mercer_check`].
#[derive(Clone, Debug, Serialize)]
pub struct MercerReport {
    pub samples: usize,
    pub max_standardized_deviation: f64,
    pub worst_pair: (f64, f64),
    /// min over interior r of C(r,r) / ((1 - r/R)(r - 1)) for the empirical covariance.
    pub diagonal_lower_constant: f64,
}

/// Minimum ensemble size for covariance checks.
pub const MERCER_MIN_SAMPLES: usize = 10_000;

/// Empirical second moments sum psi psi^T / S over interior nodes (mean is zero by law).
pub fn empirical_covariance(ens: &Ensemble) -> Vec<f64> {
    let m = ens.grid.intervals();
    let n = m - 1;
    let chunk = 512;
    let partial: Vec<Vec<f64>> = ens
        .samples
        .par_chunks(chunk)
        .map(|block| {
            let mut acc = vec![0.0; n * n];
            for s in block {
                let x = &s[1..m];
                for i in 0..n {
                    let xi = x[i];
                    let row = &mut acc[i * n..i * n + i + 1];
                    for (a, xj) in row.iter_mut().zip(&x[..=i]) {
                        *a += xi * xj;
                    }
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![0.0; n * n];
    for p in &partial {
        for (a, b) in acc.iter_mut().zip(p) {
            *a += b;
        }
    }
    let s = ens.len() as f64;
    for i in 0..n {
        for j in 0..=i {
            let v = acc[i * n + j] / s;
            acc[i * n + j] = v;
            acc[j * n + i] = v;
        }
    }
    acc
}

/// Standardized deviation of the empirical covariance from G.
pub fn mercer_check(ens: &Ensemble, g: &GreensMatrix) -> Result<MercerReport> {
    if ens.len() < MERCER_MIN_SAMPLES {
        return Err(EquiwaveError::TooFewSamples { got: ens.len(), need: MERCER_MIN_SAMPLES });
    }
    ens.grid.check_same(&g.grid)?;
    let m = ens.grid.intervals();
    let n = m - 1;
    let c = empirical_covariance(ens);
    let s = ens.len() as f64;
    let mut worst = 0.0_f64;
    let mut at = (1.0, 1.0);
    for i in 0..n {
        for j in 0..=i {
            let (gi, gj, gij) = (g.get(i + 1, i + 1), g.get(j + 1, j + 1), g.get(i + 1, j + 1));
            let se = ((gi * gj + gij * gij) / s).sqrt();
            let z = (c[i * n + j] - gij).abs() / se;
            if z > worst {
                worst = z;
                at = (ens.grid.node(i + 1), ens.grid.node(j + 1));
            }
        }
    }
    let radius = ens.grid.radius();
    let diag = (0..n)
        .map(|i| {
            let r = ens.grid.node(i + 1);
            c[i * n + i] / ((1.0 - r / radius) * (r - 1.0))
        })
        .fold(f64::INFINITY, f64::min);
    Ok(MercerReport { samples: ens.len(), max_standardized_deviation: worst, worst_pair: at, diagonal_lower_constant: diag })
}

/// Largest standardized deviation of the nodewise variance from the bridge law.
pub fn bridge_variance_deviation(ens: &Ensemble) -> f64 {
    let m = ens.grid.intervals();
    let radius = ens.grid.radius();
    let s = ens.len() as f64;
    (1..m)
        .into_par_iter()
        .map(|i| {
            let r = ens.grid.node(i);
            let exact = (radius - r) * (r - 1.0) / (radius - 1.0);
            let var: f64 = ens.samples.iter().map(|x| x[i] * x[i]).sum::<f64>() / s;
            (var - exact).abs() / (2.0 * exact * exact / s).sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

/// Five-number summary.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Quantiles {
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Quantiles {
    pub fn of(x: &[f64]) -> Self {
        let mut s = x.to_vec();
        s.sort_by(|a, b| a.total_cmp(b));
        let q = |p| stats::quantile_sorted(&s, p);
        Quantiles { q05: q(0.05), q25: q(0.25), median: q(0.5), q75: q(0.75), q95: q(0.95) }
    }
}

/// Result of [`growth_and_holder_diagnostic`].
#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub eps: f64,
    pub holder_exponent: f64,
    pub weight_exponent: f64,
    pub sup_statistic: Quantiles,
    pub holder_statistic: Quantiles,
    /// (p, (E X^p)^{1/p}) for the sup statistic.
    pub sup_moments: Vec<(f64, f64)>,
}

/// Per-sample statistics of the state-space norm with alpha = 1/2 - eps, kappa = -1/2 - eps.
pub fn growth_and_holder_diagnostic(ens: &Ensemble, eps: f64) -> Result<GrowthReport> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(EquiwaveError::InvalidArgument(format!("eps must lie in (0, 1/2) (got {eps})")));
    }
    let alpha = 0.5 - eps;
    let kappa = -0.5 - eps;
    let stats: Vec<[f64; 2]> = ens
        .samples
        .par_iter()
        .map(|s| holder_parts(s, ens.grid, alpha, kappa))
        .collect();
    let sup: Vec<f64> = stats.iter().map(|p| p[0]).collect();
    let hol: Vec<f64> = stats.iter().map(|p| p[1]).collect();
    let sup_moments = [2.0_f64, 4.0, 8.0]
        .iter()
        .map(|&p| (p, stats::mean(&sup.iter().map(|x| x.powf(p)).collect::<Vec<_>>()).powf(1.0 / p)))
        .collect();
    Ok(GrowthReport {
        eps,
        holder_exponent: alpha,
        weight_exponent: kappa,
        sup_statistic: Quantiles::of(&sup),
        holder_statistic: Quantiles::of(&hol),
        sup_moments,
    })
}
