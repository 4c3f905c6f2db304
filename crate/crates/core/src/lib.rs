//! Relaxed optimal transport distances.
//!
//! For discrete distributions `mu` on points `x_i` and `nu` on points `y_j`,
//! this crate approximates
//!
//! ```text
//! R_rho(mu, nu) = min_gamma ( sum_ij mu_i nu_j (gamma_ij / (mu_i nu_j) * |x_i - y_j|)^rho )^(1/rho)
//! ```
//!
//! over couplings `gamma`, for `rho` in `(1, 2]`. At `rho = 1` this is the
//! earth mover's distance, and `EMD <= R_rho <= sup (1/(mu_i nu_j))^((rho-1)/rho) EMD`.
//!
//! The solver runs sign-step ascent on the unconstrained concave dual
//!
//! ```text
//! g(alpha, beta) = sum mu_i alpha_i - sum nu_j beta_j - C_s sum mu_i nu_j ((alpha_i - beta_j)^+ / |x_i - y_j|)^s
//! ```
//!
//! with `1/rho + 1/s = 1`. Gradients come either from direct summation
//! ([`Engine::Exact`]) or from weight-augmented kernel density trees
//! ([`Engine::Sampling`], see [`augkde`]).
//!
//! ```
//! use rrho::{compute_distance, Engine, Mode, WeightedPointSet};
//!
//! let mu = WeightedPointSet::uniform(vec![vec![0.0], vec![1.0]]).unwrap();
//! let nu = WeightedPointSet::uniform(vec![vec![0.5], vec![2.0]]).unwrap();
//! let (_, report) = compute_distance(&mu, &nu, 1.5, 0.1, Mode::Practical, Engine::Exact, 7).unwrap();
//! assert!(report.estimate > 0.7 && report.estimate < 1.2);
//! ```

pub mod augkde;
pub mod dual;
pub mod error;
pub mod kde;
pub mod oracles;
pub mod params;
pub mod points;
pub mod preprocess;
pub mod rng;
pub mod solver;
pub mod synth;

pub use augkde::{AugmentedKdeTree, BackendKind, ThresholdSampling, TreeConfig};
pub use dual::{DualState, PairTable};
pub use error::{Error, Result};
pub use kde::{DistancePromise, SmoothKernel};
pub use oracles::{exact_emd, exact_rrho, sinkhorn, ternary_2x2, Certificate, OracleResult};
pub use params::{derive_params, holder_pair, Constants, HolderPair, Mode, Overrides, SolverParams};
pub use points::{Coupling, WeightedPointSet};
pub use preprocess::{preprocess, PreprocessOptions, ProblemInstance};
pub use solver::{compute_distance, solve, solve_with, Engine, Progress, SolveOptions, SolverReport, Termination, Update};
