//! Convolutional sparse coding with an online dictionary learner.
//!
//! Signals are coded against a dictionary of `K` small filters through
//! circular convolution. All heavy lifting happens in the frequency domain,
//! where convolution is elementwise and the dictionary subproblem splits into
//! `P` independent `K x K` systems.
//!
//! * [`tensor_freq`]: DFTs, filter padding/cropping, circular convolution.
//! * [`coding`]: ADMM sparse-code inference for one sample.
//! * [`dict_online`]: per-frequency history statistics and the ADMM
//!   dictionary update.
//! * [`pipeline`]: online, batch and FISTA training drivers.
//! * [`eval`]: test objective, PSNR and filter mosaics.
//! * [`io`] and [`cli`]: preprocessing, binary envelopes, reports and the
//!   command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod coding;
pub mod dict_online;
pub mod error;
pub mod eval;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod tensor_freq;

pub use coding::{infer_code, soft_threshold, CodeState, CodingConfig};
pub use dict_online::{dict_ocsc, DictState, HistoryState};
pub use error::{Error, Result};
pub use model::{FreqDictionary, Sample, SpatialDictionary};
pub use pipeline::{OnlineTrainer, TrainConfig, TrainMode, TrainReport};
pub use tensor_freq::{Fourier, SignalShape};
