//! Interactive sessions: a live pilot sends one action per turn and the
//! trained copilot arbitrates exactly as in offline deployment.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{parse_client_message, ClientMessage, ErrorCode, Hud, ServerMessage, PROTOCOL_VERSION};
pub use server::{router, serve};
pub use session::{CheckpointStore, SessionManager, DEFAULT_TTL};
