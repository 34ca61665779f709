//! Simulation of dissipative and coherent dynamical maps on small spin
//! registers, following a trapped-ion open-system quantum simulator.

pub mod channels;
pub mod linalg;
pub mod register;
pub mod gateset;
pub mod maps;
pub mod protocols;
pub mod observables;
pub mod lindblad;
