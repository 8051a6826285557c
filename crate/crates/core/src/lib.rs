//! Architecture search with alternating BOHB sampling over decoupled
//! skip-connection and generalized-operator spaces, filtered by a
//! graph-convolutional performance predictor.

pub mod baselines;
pub mod benchmark;
pub mod bohb;
pub mod engine;
pub mod harness;
pub mod metrics;
pub mod predictor;
pub mod search_space;
pub mod seeding;
pub mod tpe;
