//! Intensity dot product graphs: latent intensities on `B^d_+ × B^d_+`,
//! graph sampling under several realization rules, closed-form expectations,
//! heat maps, operator spectra, intensity PDEs and food-web models.

pub mod error;
pub mod expectations;
pub mod experiments;
pub mod foodweb;
pub mod heat;
pub mod latent;
pub mod pde;
pub mod rng;
pub mod sampling;
pub mod spectral;

pub use error::{IdpgError, Result};
pub use rng::SeededRng;
