//! Few-shot malicious traffic classification over raw packet captures.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`pcap`] and [`repr`] turn capture files into fixed-shape, anonymized
//!    session tensors and persist them in a binary dataset format.
//! 2. [`encoder`] and [`simnet`] implement the model: a hierarchical
//!    bidirectional recurrent session encoder and a similarity network that
//!    scores pairs of encoded sessions. Both are built on the small
//!    reverse-mode autodiff engine in [`tensor`].
//! 3. [`fewshot`] samples episodes (support set + query set), trains the
//!    model with an MSE objective on class-average similarities, and
//!    evaluates it; [`metrics`] turns prediction counts into reports.
//!
//! [`synth`] generates a labeled synthetic corpus so the whole pipeline can
//! be exercised end to end without external captures.

pub mod config;
pub mod encoder;
pub mod fewshot;
pub mod metrics;
pub mod pcap;
pub mod repr;
pub mod simnet;
pub mod synth;
pub mod tensor;
