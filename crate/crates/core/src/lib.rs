pub mod error;
pub mod exec;
pub mod linalg;

pub use error::{Error, Result};
pub use exec::ExecPolicy;
pub mod model;
pub mod oracle;
pub mod protocol;
pub mod sampling;
pub mod elimination;
pub mod config;
pub mod table_io;
