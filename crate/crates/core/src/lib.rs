//! Flash-loan price-manipulation detection: a Solidity subset frontend, an
//! instruction-level IR, inter-procedural taint analysis, path grouping,
//! two-stage reasoning, a defense checker and reporting.

pub mod checker;
pub mod config;
pub mod frontend;
pub mod grouping;
pub mod ir;
pub mod pipeline;
pub mod reasoning;
pub mod report;
pub mod taint;
