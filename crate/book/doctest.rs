// mdbook cannot compile listings against workspace crates, so every chapter
// is attached to an empty module here and `cargo test` runs the code fences
// as doc-tests. One module per chapter keeps failures traceable.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/characters.md")]
pub mod characters {}
#[doc = include_str!("src/autodiff.md")]
pub mod autodiff {}
#[doc = include_str!("src/references.md")]
pub mod references {}
#[doc = include_str!("src/training.md")]
pub mod training {}
#[doc = include_str!("src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("src/experiments.md")]
pub mod experiments {}
