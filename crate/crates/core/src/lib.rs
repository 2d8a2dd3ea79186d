//! Evaluation harness for zero- and few-shot visual question answering with
//! pluggable multimodal backends.

pub mod backend;
pub mod captions;
pub mod cot;
pub mod datasets;
pub mod embed;
pub mod exec;
pub mod exemplars;
pub mod metrics;
pub mod runner;
pub mod templates;

pub use exec::ExecMode;
