//! Detection of attractiveness commentary in professor reviews, with the
//! corpus-scale statistics built on top of it.
//!
//! The pipeline runs [`corpus`] loading, [`textproc`] analysis, two detectors
//! ([`chunker`] and [`docclf`]), their [`ensemble`], [`eval`]uation against
//! gold labels, and [`stats`] over review-level predictions.

pub mod chunker;
pub mod corpus;
pub mod docclf;
pub mod ensemble;
pub mod eval;
pub mod stats;
pub mod textproc;

// Book chapters run as doctests, one module per chapter.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/text.md")]
    mod text {}
    #[doc = include_str!("../../../book/src/chunker.md")]
    mod chunker {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    mod classifier {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/analyses.md")]
    mod analyses {}
    #[doc = include_str!("../../../book/src/server.md")]
    mod server {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
