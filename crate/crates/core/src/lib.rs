pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod learners;
pub mod pipeline;
pub mod scenarios;
