pub mod asymptotics;
pub mod check;
pub mod dsl;
pub mod error;
pub mod flux;
pub mod fourth;
pub mod jet;
pub mod sampling;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use jet::Jet;
