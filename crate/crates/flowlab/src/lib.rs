//! flowlab: a Monte Carlo laboratory for perturbed reflecting Brownian motion,
//! Brownian local-time flows, and white-noise-driven squared-Bessel / Jacobi
//! flows, together with the statistical experiments that verify their
//! distributional identities.
//!
//! The crate is organized in layers:
//!
//! * [`rng`] / [`path`] — seeded streams and direct simulation of the scalar
//!   processes (Brownian motion, PRBM, BESQ, Jacobi, reflected drifted BM,
//!   Bass–Burdzy lines).
//! * [`local_time`] — occupation-density local times, inverse local times and
//!   the empirical local-time flow extracted from a sample path.
//! * [`transforms`] — the deterministic space-time machinery: the η integral,
//!   the clock change C_f, the path transform Υ and the flow transform Ψ.
//! * [`noise`] / [`flow`] — white-noise grids and coalescing flow integration
//!   (BESQ flows, the two-parameter absorbed variant, Jacobi flows driven by
//!   the bridge-compensated martingale measure, killing and duality).
//! * [`burglar`] — the pre-/post-minimum path pieces rescaled by their
//!   occupation profile, the Eve profile, the zeta time change and the
//!   Bass–Burdzy reconstruction with parameter estimation.
//! * [`stats`] — reference distributions and hypothesis tests.
//! * [`experiments`] / [`report`] — the named experiment registry and the
//!   reproducible CLI harness around it.

pub mod burglar;
pub mod error;
pub mod experiments;
pub mod flow;
pub mod local_time;
pub mod noise;
pub mod path;
pub mod report;
pub mod rng;
pub mod stats;
pub mod transforms;

pub use error::FlowError;
