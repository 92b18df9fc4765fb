//! Bilateral multi-issue negotiation with learnable strategy templates.

pub mod agent;
pub mod domain;
pub mod drl;
pub mod error;
pub mod moea;
pub mod neural;
pub mod opponent;
pub mod pretrain;
pub mod protocol;
pub mod tactics;
pub mod template;
pub mod tournament;

pub use error::{Error, Result};
