//! Siamese cross-domain training for few-shot supervised domain adaptation.
//!
//! A single shared feature extractor `f` embeds both source-domain and
//! target-domain images. Source embeddings feed a three-layer prediction head
//! `g` trained with binary cross-entropy, while a pairing loss pulls
//! same-class embeddings of the two domains together and a detaching loss
//! pushes different-class embeddings apart:
//!
//! ```text
//! L_overall = L_c + alpha * (L_cp - L_cd)
//! ```
//!
//! The crate is `no_std` (it needs `alloc`) and carries everything that is
//! pure computation: a small reverse-mode autodiff engine ([`graph`]), the
//! model ([`model`]), the losses ([`losses`]), datasets and the n-shot
//! pairing protocol ([`data`]), SGD training ([`train`]), metrics and
//! confidence intervals ([`eval`], [`stats`]) and the fold-based experiment
//! runners ([`protocol`]). File formats and the command line live in the
//! `xdomain` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

mod error;

pub mod data;
pub mod eval;
pub mod gradcheck;
pub mod graph;
pub mod losses;
pub mod model;
pub mod protocol;
pub mod seed;
pub mod stats;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Gradients, Graph, Var};
pub use tensor::Tensor;
