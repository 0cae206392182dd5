//! Grid-based Landau operator, moments and the first-order Landau pairing.

mod fft;
mod grid;
mod landau;
mod pairing;

pub use grid::{maxwellian, moments, DensityGrid, GridSpec, Moments};
pub use landau::{q_landau, q_landau_weak, LandauOperator};
pub use pairing::{free_pairing, landau_collision_pairing, landau_first_order_pairing, PairingResolution};
