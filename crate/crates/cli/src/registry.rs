//! Built-in non-quadratic games addressable from configs by name.

use nalgebra::{DMatrix, DVector};
use nes_core::game::{CustomGame, Game, GameExt};

use crate::error::{CliError, Result};

pub const NAMES: [&str; 2] = ["bilinear-zero-sum", "soft-coupled"];

pub fn custom_game(name: &str) -> Result<CustomGame> {
    match name {
        "bilinear-zero-sum" => Ok(bilinear_zero_sum()),
        "soft-coupled" => soft_coupled(),
        other => Err(CliError::config(
            "game.name",
            format!("unknown custom game `{other}`; known: {}", NAMES.join(", ")),
        )),
    }
}

/// `f_1 = x_1 x_2`, `f_2 = -x_1 x_2`: monotone but not strongly.
fn bilinear_zero_sum() -> CustomGame {
    CustomGame::new(1, vec![Box::new(|x: &[f64]| x[0] * x[1]), Box::new(|x: &[f64]| -x[0] * x[1])])
        .expect("two players")
        .with_gradients(vec![
            Box::new(|x: &[f64], out: &mut [f64]| out[0] = x[1]),
            Box::new(|x: &[f64], out: &mut [f64]| out[0] = -x[0]),
        ])
        .expect("one gradient per player")
        .with_equilibrium(DVector::zeros(2))
        .expect("two coordinates")
}

const SOFT_OFFSETS: [f64; 3] = [1.0, -2.0, 0.5];

/// Three scalar players with `f_i = x_i^2 + x_i tanh(x_{i+1}) - b_i x_i`
/// (indices cyclic). Strongly monotone with `m >= 1`; the equilibrium is
/// found by Newton's method.
fn soft_coupled() -> Result<CustomGame> {
    let costs = (0..3)
        .map(|i| {
            Box::new(move |x: &[f64]| x[i] * x[i] + x[i] * x[(i + 1) % 3].tanh() - SOFT_OFFSETS[i] * x[i])
                as nes_core::game::CostFn
        })
        .collect();
    let gradients = (0..3)
        .map(|i| {
            Box::new(move |x: &[f64], out: &mut [f64]| out[0] = 2.0 * x[i] + x[(i + 1) % 3].tanh() - SOFT_OFFSETS[i])
                as nes_core::game::GradientFn
        })
        .collect();
    let jacobian = |x: &[f64]| {
        let mut h = DMatrix::identity(3, 3) * 2.0;
        for i in 0..3 {
            let j = (i + 1) % 3;
            h[(i, j)] = 1.0 / x[j].cosh().powi(2);
        }
        h
    };
    let game = CustomGame::new(1, costs)?
        .with_gradients(gradients)?
        .with_jacobian(Box::new(jacobian));
    let mut x = DVector::zeros(3);
    for _ in 0..50 {
        let g = game.pseudo_gradient(x.as_slice())?;
        if g.amax() < 1e-15 {
            break;
        }
        let step = game
            .eval_jacobian(x.as_slice())
            .lu()
            .solve(&g)
            .ok_or(nes_core::Error::Singular("Newton step"))?;
        x -= step;
    }
    Ok(game.with_equilibrium(x)?)
}
