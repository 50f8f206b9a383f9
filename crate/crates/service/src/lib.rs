pub mod error;
pub mod protocol;
pub mod server;
pub mod session;

pub use error::{Result, ServiceError};
pub use session::{Session, SessionArchive, SessionConfig};
