pub mod error;
pub mod autodiff;
pub mod bench;
pub mod cli;
pub mod families;
pub mod gan;
pub mod linalg;
pub mod qstate;

pub use error::{Error, Result};
