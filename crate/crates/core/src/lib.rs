//! Numerical core for random Kraus channels.
//!
//! * [`matcore`]: complex matrices, Schatten norms, vec identification, spectra.
//! * [`channels`]: weighted Kraus maps, natural representations, rectification.
//! * [`ensembles`]: seeded Haar / tensor-power / hermitized-unitary samplers.
//! * [`twirl`]: permutation operators, Weingarten matrices, exact and Monte Carlo twirls.
//! * [`bounds`]: matrix Bernstein tails and Kraus-count budgets.
//! * [`spectral`]: deviation norms, gaps, expander certificates, fixed states, entropy.
//!
//! The linear-algebra modules are generic over the real scalar (`f32` or
//! `f64`); the aliases below fix it to `f64`.

pub mod bounds;
pub mod channels;
pub mod ensembles;
pub mod error;
pub mod matcore;
pub mod scalar;
pub mod spectral;
pub mod twirl;

pub use error::{KblError, Result};
pub use scalar::Real;

pub type ComplexMatrix = matcore::CMatrix<f64>;
pub type ComplexVector = matcore::CVector<f64>;
pub type QuantumState = matcore::QuantumState<f64>;
pub type Spectrum = matcore::Spectrum<f64>;
pub type KrausChannel = channels::KrausChannel<f64>;
pub type SuperOpMatrix = channels::SuperOpMatrix<f64>;
pub type TwirlChannel = twirl::TwirlChannel<f64>;
pub type FixedPointResult = spectral::FixedPointResult<f64>;

pub type ComplexMatrix32 = matcore::CMatrix<f32>;
pub type KrausChannel32 = channels::KrausChannel<f32>;
pub type SuperOpMatrix32 = channels::SuperOpMatrix<f32>;
