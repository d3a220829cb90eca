pub mod cluster;
pub mod config;
pub mod factors;
pub mod fixture;
pub mod ingest;
pub mod linalg;
pub mod lsi;
pub mod pipeline;
pub mod regress;
pub mod stats;
pub mod text;
