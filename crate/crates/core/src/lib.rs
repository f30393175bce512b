pub mod matching;
pub mod metrics;
pub mod stats;
pub mod study;
pub mod synth;
pub mod volume;
