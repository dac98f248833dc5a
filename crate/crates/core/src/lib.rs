//! Quantum walk control protocol: a dense state-vector simulator for coined quantum walks that
//! carry control signals across a quantum network, the protocol compilers built on it, and a
//! script-driven command line front end.
//!
//! ```
//! use qwcp::netgraph::NetworkGraph;
//!
//! let g = NetworkGraph::grid(3, 3);
//! assert_eq!(g.hop_distance(0, 8).unwrap(), Some(4));
//! ```

pub mod cli;
pub mod error;
pub mod linalg;
pub mod netgraph;
pub mod oracle;
pub mod protocols;
pub mod statevec;
pub mod walkops;

pub use error::{Error, Result};
