#![no_main]

use intervene_core::checkpoint::{from_text, to_text};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ckpt) = from_text(text) {
        // Whatever decodes must encode again.
        let _ = to_text(&ckpt);
    }
});
