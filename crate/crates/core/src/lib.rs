pub mod corpus;
pub mod cskg;
pub mod encoder;
pub mod eqlang;
pub mod generator;
pub mod graph;
pub mod metrics;
pub mod numerics;
pub mod train;
