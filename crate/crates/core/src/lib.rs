//! Energy management for an energy-harvesting sensor that compresses a
//! noisy observation and sends it over a fading channel.

pub mod feasibility;
pub mod mdp;
pub mod models;
pub mod policies;
pub mod presets;
pub mod quadrature;
pub mod scheduling;
pub mod simulator;
