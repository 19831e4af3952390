//! Variable-width handwritten word synthesis.

pub mod alphabet;
pub mod checkpoint;
pub mod config;
pub mod ctc;
pub mod data;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod grad_balance;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod recognizer;
pub mod shape;
pub mod training;

pub use alphabet::{encode_transcript, Alphabet};
pub use error::{Error, ErrorClass, Result};
pub use generator::{GeneratedBatch, Generator, NormMode};
pub use image::{LabeledSample, UnlabeledSample, WordImage};
pub use noise::{sample_noise, NoiseBundle};
pub use shape::ModelShape;
