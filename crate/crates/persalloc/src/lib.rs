//! Budget-constrained personalized-treatment allocation.
//!
//! The allocation problem is a multiple-choice knapsack: every patient must
//! receive exactly one treatment applicable to their illness, maximizing the
//! summed realized clinical success rate (CSR) subject to a budget on summed
//! operational/economic burden (OEB).
//!
//! Crate layout:
//! - [`model`] — domain types ([`model::ScenarioInstance`], [`model::Assignment`]) and validation
//! - [`solver`] — three exact solvers (exhaustive oracle, DP, branch-and-bound)
//! - [`metrics`] — personalization level, least-squares fits, selection binning
//! - [`scenario`] — bladder-cancer catalog, population/CSR sampling, abstract catalogs
//! - [`experiments`] — the three Monte-Carlo studies (Q1 budget sweep, Q2 heatmap, Q3 sensitivity)
//! - [`cli`] — config parsing, scenario files, CSV/JSON writers
//!
//! Repetitions run in parallel via rayon when the default `parallel` feature
//! is enabled; `--no-default-features` swaps in a sequential fallback with the
//! same API (see [`par`]). Results are bit-identical either way: each
//! repetition derives its RNG seed from the root seed and its index.

pub mod cli;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod par;
pub mod scenario;
pub mod solver;
