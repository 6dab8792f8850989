//! The guide's chapters, compiled so their code listings run as doc-tests.

#[doc = include_str!("../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../book/src/regions.md")]
pub mod regions {}
#[doc = include_str!("../../book/src/conditional.md")]
pub mod conditional {}
#[doc = include_str!("../../book/src/multiplicity.md")]
pub mod multiplicity {}
#[doc = include_str!("../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../book/src/pipeline.md")]
pub mod pipeline {}
