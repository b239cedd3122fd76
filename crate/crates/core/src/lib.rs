//! Numerical laboratory for stochastic transport-diffusion equations driven
//! by Brownian and compensated-Poisson noise.

pub mod drift_picard;
pub mod harness;
pub mod heat_kernel;
pub mod levy_noise;
pub mod mild_solution;
pub mod quadrature;
pub mod regularity;
pub mod stochastic_integrals;
