//! Nash equilibrium seeking for games whose players are single or double
//! integrators with bounded control inputs.
//!
//! The crate is layered bottom-up:
//!
//! - [`game`]: cost functions, pseudo-gradients, monotonicity checks;
//! - [`graph`]: communication graphs, the estimation matrix and its Lyapunov pair;
//! - [`saturation`]: componentwise bounds and their integral energies;
//! - [`strategy`]: the five seeking laws as vector fields;
//! - [`tuner`]: sufficient gain bounds;
//! - [`sim`]: fixed-step integration, diagnostics and sweeps;
//! - [`scenarios`]: the sensor-network case study and seeded random instances.
//!
//! ```
//! use std::sync::Arc;
//! use nes_core::prelude::*;
//!
//! let game = Arc::new(QuadraticGame::sensor_network());
//! let x_star = game.exact_ne().unwrap();
//! let strategy = SatGradientPlay::new(game, Saturation::symmetric(5.0).unwrap()).unwrap();
//! let cfg = SimConfig::new(1e-3, 20.0);
//! let x0 = StrategyState::from_vec(strategy.layout(), vec![10.0, 0.0, 0.0, 5.0, 0.0, 0.0]).unwrap();
//! let traj = integrate(&strategy, &x0, &cfg).unwrap();
//! let err = (traj.final_x() - &x_star).norm();
//! assert!(err < 1e-4);
//! ```

pub mod error;
pub mod game;
pub mod graph;
pub mod saturation;
pub mod scenarios;
pub mod sim;
pub mod strategy;
pub mod tuner;

pub use error::{Error, Result};

/// The commonly used types in one import.
pub mod prelude {
    pub use crate::error::{Error, Result};
    pub use crate::game::{CustomGame, Game, GameExt, QuadraticGame};
    pub use crate::graph::{solve_lyapunov, CommGraph, LyapunovPair, ThetaBar};
    pub use crate::saturation::Saturation;
    pub use crate::sim::{detect_convergence, integrate, monitor_lyapunov, Integrator, SimConfig, Trajectory};
    pub use crate::strategy::{
        build_strategy, DistributedGains, FirstOrderDistributed, GainSet, LyapunovContext, SatGradientPlay,
        SecondOrderCentral, SecondOrderDistributed, Strategy, StrategyKind, StrategyState,
    };
}
