//! Core of provflow: a small dataflow workflow language, a bounded parallel
//! executor for the expanded task graph, a relational provenance store, the
//! analytics query catalog over that store and a handful of model induction
//! routines that run over provenance-derived datasets.

pub mod analytics;
pub mod api;
pub mod engine;
pub mod lang;
pub mod ml;
pub mod store;
