pub mod cli;
pub mod decomp;
pub mod error;
pub mod fsutil;
pub mod hcm;
pub mod ingest;
pub mod linalg;
pub mod selection;
pub mod simulation;
pub mod spectrum;
pub mod tensor;
