#![no_main]

use intervene_core::logs::{from_jsonl, to_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(logs) = from_jsonl(text) {
        let _ = to_jsonl(&logs);
    }
});
