//! No-panic properties for the client-message decoder, mirroring the fuzz
//! target and seeded from its corpus.

use std::path::PathBuf;

use intervene_play::{parse_client_message, ClientMessage, ServerMessage};
use proptest::prelude::*;

fn corpus() -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus/protocol");
    let mut seeds: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| std::fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    seeds.sort();
    seeds
}

fn check(text: &str) {
    if let Err(reply) = parse_client_message(text) {
        assert!(matches!(reply, ServerMessage::Error { .. }), "{reply:?}");
    }
}

#[test]
fn corpus_seeds_decode_or_reject_cleanly() {
    let seeds = corpus();
    assert!(seeds.len() >= 5);
    let accepted = seeds.iter().filter(|s| parse_client_message(s).is_ok()).count();
    assert_eq!(accepted, 3);
    for seed in &seeds {
        if let Ok(msg) = parse_client_message(seed) {
            let again: ClientMessage = serde_json::from_str(&serde_json::to_string(&msg).unwrap()).unwrap();
            assert_eq!(again, msg);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn arbitrary_text_gets_a_reply(text in "\\PC{0,200}") {
        check(&text);
    }

    #[test]
    fn mutated_seeds_get_a_reply(which in any::<usize>(), pos in any::<usize>(), byte in any::<u8>(), cut in any::<bool>()) {
        let seeds = corpus();
        let mut bytes = seeds[which % seeds.len()].as_bytes().to_vec();
        let at = pos % bytes.len();
        if cut {
            bytes.truncate(at);
        } else {
            bytes[at] = byte;
        }
        check(&String::from_utf8_lossy(&bytes));
    }
}
