pub mod algebra;
pub mod matrix;
pub mod tensor_io;
pub mod timeml;
pub mod losses;
pub mod qa;
pub mod repr;
pub mod harness;

// The guide's snippets run as doc-tests so they cannot drift from the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/temporal-algebra.md")]
    struct TemporalAlgebra;
    #[doc = include_str!("../../../book/src/dataset.md")]
    struct Dataset;
    #[doc = include_str!("../../../book/src/losses.md")]
    struct Losses;
    #[doc = include_str!("../../../book/src/cka.md")]
    struct Cka;
    #[doc = include_str!("../../../book/src/toy-experiment.md")]
    struct ToyExperiment;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
