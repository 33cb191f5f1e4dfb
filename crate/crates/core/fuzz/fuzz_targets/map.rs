#![no_main]

use intervene_core::env::{parse_map, render_map};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(map) = parse_map(text) {
        // Accepted maps survive a render round trip.
        let again = parse_map(&render_map(&map)).expect("rendered map reparses");
        assert_eq!(again, map);
    }
});
