//! Generalized signal alignment for multi-user MIMO two-way relay channels.

pub mod achievable;
pub mod bounds;
pub mod channel;
pub mod error;
pub mod gsa;
pub mod linalg;
pub mod rational;
pub mod relay;
pub mod route;
pub mod sim;

pub use channel::{
    make_pattern, sample_channels, ChannelRealization, DataSwitchMatrix, Model, Pair, Pattern,
    SystemConfig,
};
pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, TolerancePolicy};
