//! Client event log analytics.
//!
//! Hourly event logs are ingested and validated, a per-day dictionary maps
//! event names to code points by descending frequency, and sessions are
//! materialized as compact unicode strings that counting, funnel, n-gram
//! and collocation queries run over.

pub mod dictionary;
pub mod event_model;
pub mod ingestion;
pub mod sessionizer;
pub mod query;
pub mod modeling;
pub mod catalog;
pub mod generator;
pub mod cli;
