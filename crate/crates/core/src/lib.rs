//! Turns static-analysis findings on Solidity projects into executable
//! Foundry tests, then decides exploitability by running an agreed action
//! and state queries before and after the test's trigger.

pub mod bce;
pub mod dv;
pub mod findings;
pub mod gre;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod report;
pub mod solidity;

#[cfg(test)]
mod testutil;
