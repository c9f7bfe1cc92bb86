//! Open-set recognition on top of closed-set classifier activation vectors.
//!
//! Per-class mean activation vectors and Weibull models of the largest
//! training distances to them ([`openmax::calibrate`]) turn a network's
//! scores into `N + 1` probabilities with an explicit unknown class
//! ([`openmax::openmax_scores`]). The [`eval`] module implements the open-set
//! F-measure protocol and [`synth`] a seeded benchmark to exercise it.

pub mod avio;
pub mod error;
pub mod eval;
pub mod evt;
pub mod mav;
pub mod openmax;
pub mod synth;

pub use avio::{ActivationSample, DataFormat, Dataset, Partition, FOOLING_LABEL, OPEN_SET_LABEL};
pub use error::{Error, Result};
pub use eval::{OpenSetCounts, Scorer, SweepCurve};
pub use evt::WeibullModel;
pub use mav::{ClassModel, Metric, MetricConfig};
pub use openmax::{Hyperparams, OpenMaxModel, OpenSetScores, Verdict, Weighting};
pub use synth::{Benchmark, SynthConfig};
