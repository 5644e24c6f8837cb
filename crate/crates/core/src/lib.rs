//! Local (Euclidean) analysis of information coupling problems over discrete
//! memoryless channels.
//!
//! Around an operating point `P_X`, KL divergence is a weighted squared
//! Euclidean norm and a channel acts on weighted perturbations through its
//! divergence transition matrix (DTM). Coupling problems then reduce to
//! linear algebra:
//!
//! * point-to-point: the second singular pair of the DTM ([`coupling::solve_p2p`]);
//! * broadcast common message: a max-min over `K` quadratic forms
//!   ([`coupling::solve_broadcast`]);
//! * multiple access common source: a stacked DTM ([`coupling::solve_mac_common`]).
//!
//! The [`oracles`] module holds brute-force references for all of these, and
//! [`layered`] builds and simulates layered codes for the ternary example
//! channel.
//!
//! With the default `parallel` feature, grid searches and Monte Carlo trials
//! fan out over rayon; without it the same code runs sequentially and yields
//! identical results.
//!
//! ```
//! use infocoupling::channel::{build_dtm, ChannelMatrix};
//! use infocoupling::prob::Distribution;
//!
//! let w = ChannelMatrix::nested_ternary(0.2, 0.1).unwrap();
//! let px = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
//! let dtm = build_dtm(&w, &px).unwrap();
//! assert!((dtm.sigma1() - 0.4).abs() < 1e-12);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod coupling;
pub mod error;
pub mod layered;
pub mod linalg;
pub mod oracles;
pub mod par;
pub mod prob;
pub mod tensor;

pub use error::{Error, Result};
