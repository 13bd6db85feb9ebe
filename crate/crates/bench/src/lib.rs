//! Shared fixtures for the sampler benchmarks.

use tvpvarx_core::gibbs::{Observations, Sampler, SamplerOptions};
use tvpvarx_core::numkit::{RngStream, SymMatrix};
use tvpvarx_core::priors::{calibrate, PriorOverrides, PriorSpec};
use tvpvarx_core::simulate::{drifting_theta_spec, simulate_dgp};
use tvpvarx_core::statespace::LinearGaussianSystem;
use tvpvarx_core::{DMatrix, DVector, Dataset, McmcConfig, ModelConfig};

pub const T0: usize = 40;

/// Synthetic bivariate one-lag dataset of `periods` log-differences.
pub fn dataset(periods: usize) -> Dataset {
    simulate_dgp(&drifting_theta_spec(periods, 0.15), &mut RngStream::with_stream(1, 1000))
        .expect("simulation succeeds")
        .dataset
}

pub fn model(constrained: bool) -> ModelConfig {
    ModelConfig { n: 2, k: 1, t0: T0, constraint_enabled: constrained, mcmc: McmcConfig::default(), seed: 1 }
}

pub fn prior(data: &Dataset, constrained: bool) -> PriorSpec {
    calibrate(&data.y, &data.x, &model(constrained), &PriorOverrides::default()).expect("calibration succeeds")
}

/// A sampler warmed up by `warmup` sweeps.
pub fn sampler<'a>(data: &'a Dataset, prior: &'a PriorSpec, warmup: usize, rng: &mut RngStream) -> Sampler<'a> {
    let obs = Observations::new(&data.y, &data.x, 1, T0).expect("valid window");
    let mut s = Sampler::new(obs, prior, SamplerOptions::default()).expect("valid sampler");
    for _ in 0..warmup {
        s.sweep(rng).expect("sweep succeeds");
    }
    s
}

/// Random-walk system with `steps` observations of dimension `obs_dim` and
/// state dimension `state_dim`.
pub fn random_system(steps: usize, obs_dim: usize, state_dim: usize, rng: &mut RngStream) -> LinearGaussianSystem {
    let mut normal = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.standard_normal());
    let design: Vec<_> = (0..steps).map(|_| normal(obs_dim, state_dim)).collect();
    let observations = (0..steps).map(|_| normal(obs_dim, 1).column(0).into_owned()).collect();
    LinearGaussianSystem {
        observations,
        design,
        obs_cov: vec![SymMatrix::identity(obs_dim).into_inner(); steps],
        state_cov: SymMatrix::identity(state_dim).scaled(1e-3).into_inner(),
        init_mean: DVector::zeros(state_dim),
        init_cov: SymMatrix::identity(state_dim).into_inner(),
    }
}
