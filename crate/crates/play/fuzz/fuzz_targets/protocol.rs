#![no_main]

use intervene_play::{parse_client_message, ServerMessage};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    match parse_client_message(text) {
        Ok(_) => {}
        // Rejections are always well-formed error replies.
        Err(reply) => assert!(matches!(reply, ServerMessage::Error { .. })),
    }
});
