//! Lebanese Arabic to English translation: instruction-dataset compiler and
//! evaluation harness.
//!
//! The pipeline runs corpus ingestion, Arabizi transliteration, instruction
//! rendering, remote generation, demonstration selection, prompt building,
//! curriculum planning and evaluation. Remote models sit behind the traits
//! in [`genclient`] so every stage also runs offline.

pub mod corpus;
pub mod curriculum;
pub mod evaluate;
pub mod genclient;
pub mod instruct;
pub mod metric;
#[cfg(feature = "mock")]
pub mod mock;
pub mod normalize;
pub mod prompt;
pub mod select;
pub mod transliterate;
