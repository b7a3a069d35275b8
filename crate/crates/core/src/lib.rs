pub mod cli;
pub mod corpus;
pub mod decoder;
pub mod error;
pub mod evalstats;
pub mod lexmodel;
pub mod model;
pub mod ngram;
mod serial;
pub mod synth;
pub mod tagset;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/tagset.md")]
    pub mod tagset {}
    #[doc = include_str!("../../../book/src/lexicon.md")]
    pub mod lexicon {}
    #[doc = include_str!("../../../book/src/transitions.md")]
    pub mod transitions {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    pub mod decoding {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    pub mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../book/src/formats.md")]
    pub mod formats {}
}
