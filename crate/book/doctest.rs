// mdbook cannot run Rust listings against a workspace crate, so every chapter
// is pulled into its own module here and `cargo test --doc` checks them.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/games.md")]
pub mod games {}
#[doc = include_str!("src/graphs.md")]
pub mod graphs {}
#[doc = include_str!("src/saturation.md")]
pub mod saturation {}
#[doc = include_str!("src/strategies.md")]
pub mod strategies {}
#[doc = include_str!("src/gain-bounds.md")]
pub mod gain_bounds {}
#[doc = include_str!("src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
