//! Representation learning lab for continuous glucose monitoring (CGM).
//!
//! Implements masked latent-prediction pretraining (CGM-JEPA) with an optional
//! cross-view Glucodensity objective (X-CGM-JEPA), together with the full data
//! pipeline around it: CSV ingest, OGTT grid alignment, smoothing splines,
//! day-window tokenization, Glucodensity KDE images with a precompute cache,
//! a from-scratch transformer + autodiff substrate, frozen-encoder linear
//! probing, and embedding-quality metrics.

pub mod data;
pub mod glucodensity;
pub mod jepa;
pub mod metrics;
pub mod neural;
pub mod probe;
pub mod rng;
pub mod spline;
pub mod views;
