//! The guide in `book/` is plain mdbook, which cannot resolve workspace
//! crates when testing listings. Each chapter is mounted here as a module doc
//! instead, so `cargo test --doc -p rbocp-book` runs every listing.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/dynamics.md")]
pub mod dynamics {}
#[doc = include_str!("../../../book/src/problems.md")]
pub mod problems {}
#[doc = include_str!("../../../book/src/condensing.md")]
pub mod condensing {}
#[doc = include_str!("../../../book/src/riccati.md")]
pub mod riccati {}
#[doc = include_str!("../../../book/src/solver.md")]
pub mod solver {}
#[doc = include_str!("../../../book/src/baseline.md")]
pub mod baseline {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
