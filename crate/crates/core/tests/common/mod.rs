// Each test binary uses a different subset of these helpers.
#![allow(dead_code)]

pub mod metric_oracle;
pub mod mots_fixture;
pub mod protocol_fixture;
