//! Country attractiveness from geotagged media metadata.
//!
//! Metadata lines are pruned ([`ingest`]), reverse geocoded against
//! country polygons ([`geo`]), attributed to a home country per user
//! ([`home`]), and counted into per-country foreign activity
//! ([`attractiveness`]). Joined with population and area ([`covariates`]),
//! the counts are fitted to power laws `A ∼ a·x^β` and the per-region fit
//! quality is correlated with regional covariates ([`scaling`]).
//!
//! [`pipeline`] strings the stages together with on-disk caching, and
//! [`synth`] builds synthetic worlds with known answers plus brute-force
//! reference implementations for testing.

pub mod attractiveness;
pub mod covariates;
pub mod geo;
pub mod home;
pub mod ingest;
pub mod pipeline;
pub mod scaling;
pub mod synth;
