//! No-panic properties for every text decoder, mirroring the fuzz targets
//! and seeded from their checked-in corpus.

use std::path::PathBuf;

use intervene_core::checkpoint::{from_text, to_text};
use intervene_core::config::RunConfig;
use intervene_core::env::{parse_map, render_map};
use intervene_core::harness::{parse_ledger, read_rows};
use intervene_core::logs::{from_jsonl, to_jsonl};
use intervene_core::pilots::{parse_policy, render_policy};
use proptest::prelude::*;

fn corpus(target: &str) -> Vec<String> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut seeds: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| std::fs::read_to_string(e.unwrap().path()).unwrap())
        .collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "no seeds for {target}");
    seeds
}

/// Applies one edit to a seed: truncation, a byte overwrite or a splice.
fn mutate(seed: &str, edit: (u8, usize, u8)) -> String {
    let mut bytes = seed.as_bytes().to_vec();
    let (kind, pos, byte) = edit;
    let at = if bytes.is_empty() { 0 } else { pos % bytes.len() };
    match kind % 3 {
        0 => bytes.truncate(at),
        1 if !bytes.is_empty() => bytes[at] = byte,
        _ => bytes.insert(at, byte),
    }
    String::from_utf8_lossy(&bytes).into_owned()
}

fn decode_all(text: &str) {
    if let Ok(map) = parse_map(text) {
        assert_eq!(parse_map(&render_map(&map)).unwrap(), map);
    }
    if let Ok(policy) = parse_policy(text) {
        assert_eq!(parse_policy(&render_policy(&policy)).unwrap(), policy);
    }
    if let Ok(cfg) = RunConfig::from_json(text) {
        let _ = cfg.validate();
    }
    if let Ok(ckpt) = from_text(text) {
        let _ = to_text(&ckpt);
    }
    if let Ok(logs) = from_jsonl(text) {
        let _ = to_jsonl(&logs);
    }
    let _ = read_rows(text);
    let _ = parse_ledger(text);
}

#[test]
fn corpus_seeds_decode() {
    for seed in corpus("map") {
        parse_map(&seed).unwrap();
    }
    for seed in corpus("policy") {
        parse_policy(&seed).unwrap();
    }
    for seed in corpus("config") {
        RunConfig::from_json(&seed).unwrap().validate().unwrap();
    }
    for seed in corpus("checkpoint") {
        let ckpt = from_text(&seed).unwrap();
        assert_eq!(from_text(&to_text(&ckpt).unwrap()).unwrap(), ckpt);
    }
    for seed in corpus("episode_log") {
        let logs = from_jsonl(&seed).unwrap();
        assert_eq!(from_jsonl(&to_jsonl(&logs).unwrap()).unwrap(), logs);
    }
    for seed in corpus("results_csv") {
        assert!(!read_rows(&seed).unwrap().is_empty());
    }
    for seed in corpus("ledger") {
        assert!(parse_ledger(&seed).unwrap().is_some());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        decode_all(&text);
    }

    #[test]
    fn grid_like_text_never_panics(text in "[.#WGSUDLR\\n]{0,80}") {
        decode_all(&text);
    }

    #[test]
    fn mutated_seeds_never_panic(
        target in prop::sample::select(vec!["map", "policy", "config", "checkpoint", "episode_log", "results_csv", "ledger"]),
        which in any::<usize>(),
        edits in prop::collection::vec((any::<u8>(), any::<usize>(), any::<u8>()), 1..4),
    ) {
        let seeds = corpus(target);
        let mut text = seeds[which % seeds.len()].clone();
        for edit in edits {
            text = mutate(&text, edit);
        }
        decode_all(&text);
    }
}
