pub mod cli;
pub mod client;
pub mod clock;
pub mod hash;
pub mod http;
pub mod indexer;
pub mod scan;
pub mod server;
pub mod simnet;
pub mod wire;
