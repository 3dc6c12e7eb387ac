//! Book chapters compiled as doctests. Each chapter is its own module so a
//! failing listing points back to its file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/games.md")]
pub mod games {}
#[doc = include_str!("../../../book/src/feasible-sets.md")]
pub mod feasible_sets {}
#[doc = include_str!("../../../book/src/incentives.md")]
pub mod incentives {}
#[doc = include_str!("../../../book/src/learning.md")]
pub mod learning {}
#[doc = include_str!("../../../book/src/outer-loop.md")]
pub mod outer_loop {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
