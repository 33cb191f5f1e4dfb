//! Plain-text checkpoint format for trained copilots.
//!
//! ```text
//! intervene-checkpoint 1
//! {"method":{...},"env":{...},"encoding":{...},"learner":{...},"seed":7,...}
//! table <keys> <actions>
//! <actions values>            one line per key
//! ```
//!
//! or, for networks,
//!
//! ```text
//! network <n0> <n1> ... <nL>
//! weights <l> <out> <in>
//! <in values>                 one line per output unit
//! bias <l> <out>
//! <out values>
//! ```
//!
//! Line 1 is the magic and format version. Line 2 is a single-line JSON
//! header. Numbers are written in Rust's shortest round-trip decimal form,
//! so save followed by load is bit-exact. A sidecar `<file>.method.json`
//! repeats the method descriptor for tools that do not read weights.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::copilots::{MethodSpec, TrainedCopilot};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::learners::{EncodingSpec, LearnerConfig, Mlp, QFunction, QTable};

pub const MAGIC: &str = "intervene-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

/// Guards against absurd allocations from corrupt headers.
const MAX_VALUES: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub method: MethodSpec,
    pub env: EnvSpec,
    pub encoding: EncodingSpec,
    pub learner: LearnerConfig,
    pub seed: u64,
    pub frames: usize,
    pub action_count: usize,
    #[serde(default)]
    pub final_lambda: Option<f64>,
    #[serde(default)]
    pub pilot: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub qfunction: QFunction,
}

/// Contents of the method descriptor sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodDescriptor {
    pub format_version: u32,
    pub method: MethodSpec,
    pub env: String,
    pub final_lambda: Option<f64>,
    pub pilot: Option<String>,
}

impl Checkpoint {
    pub fn from_trained(trained: &TrainedCopilot) -> Self {
        Self {
            header: CheckpointHeader {
                method: trained.method.clone(),
                env: trained.env.clone(),
                encoding: trained.encoding.clone(),
                learner: trained.learner.clone(),
                seed: trained.seed,
                frames: trained.frames,
                action_count: trained.qfunction.action_count(),
                final_lambda: trained.final_lambda,
                pilot: trained.pilot.clone(),
            },
            qfunction: trained.qfunction.clone(),
        }
    }

    pub fn into_trained(self) -> TrainedCopilot {
        TrainedCopilot {
            method: self.header.method,
            env: self.header.env,
            encoding: self.header.encoding,
            learner: self.header.learner,
            seed: self.header.seed,
            frames: self.header.frames,
            final_lambda: self.header.final_lambda,
            pilot: self.header.pilot,
            qfunction: self.qfunction,
        }
    }

    pub fn descriptor(&self) -> MethodDescriptor {
        MethodDescriptor {
            format_version: FORMAT_VERSION,
            method: self.header.method.clone(),
            env: self.header.env.kind().to_string(),
            final_lambda: self.header.final_lambda,
            pilot: self.header.pilot.clone(),
        }
    }
}

fn push_values(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&v.to_string());
    }
    out.push('\n');
}

pub fn to_text(ckpt: &Checkpoint) -> Result<String> {
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\n");
    out.push_str(&serde_json::to_string(&ckpt.header)?);
    out.push('\n');
    match &ckpt.qfunction {
        QFunction::Table(t) => {
            out.push_str(&format!("table {} {}\n", t.keys(), t.actions()));
            for row in t.values().chunks(t.actions()) {
                push_values(&mut out, row);
            }
        }
        QFunction::Network(net) => {
            out.push_str("network");
            for s in net.sizes() {
                out.push_str(&format!(" {s}"));
            }
            out.push('\n');
            let mut offset = 0;
            for (l, w) in net.sizes().windows(2).enumerate() {
                let (n_in, n_out) = (w[0], w[1]);
                out.push_str(&format!("weights {l} {n_out} {n_in}\n"));
                for row in net.params()[offset..offset + n_in * n_out].chunks(n_in) {
                    push_values(&mut out, row);
                }
                offset += n_in * n_out;
                out.push_str(&format!("bias {l} {n_out}\n"));
                push_values(&mut out, &net.params()[offset..offset + n_out]);
                offset += n_out;
            }
        }
    }
    Ok(out)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
            .ok_or_else(|| Error::Checkpoint(format!("unexpected end of file, expected {what}")))
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Checkpoint(format!("line {line}: {msg}"))
}

fn parse_usize(line: usize, tok: Option<&str>, what: &str) -> Result<usize> {
    tok.ok_or_else(|| bad(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| bad(line, format!("invalid {what}")))
}

fn parse_row(line: usize, text: &str, expected: usize, out: &mut Vec<f64>) -> Result<()> {
    let mut count = 0;
    for tok in text.split(' ') {
        let v: f64 = tok.parse().map_err(|_| bad(line, format!("invalid number {tok:?}")))?;
        if !v.is_finite() {
            return Err(bad(line, "non-finite value"));
        }
        out.push(v);
        count += 1;
    }
    if count != expected {
        return Err(bad(line, format!("expected {expected} values, found {count}")));
    }
    Ok(())
}

fn expect_header(line: usize, text: &str, words: &[&str]) -> Result<()> {
    let got: Vec<&str> = text.split(' ').collect();
    if got != words {
        return Err(bad(line, format!("expected `{}`", words.join(" "))));
    }
    Ok(())
}

pub fn from_text(text: &str) -> Result<Checkpoint> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (n, magic) = lines.next("magic line")?;
    let mut parts = magic.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(bad(n, "not a checkpoint file"));
    }
    let version = parse_usize(n, parts.next(), "format version")?;
    if version != FORMAT_VERSION as usize || parts.next().is_some() {
        return Err(bad(n, format!("unsupported format version {version}")));
    }
    let (n, header_text) = lines.next("header")?;
    let header: CheckpointHeader =
        serde_json::from_str(header_text).map_err(|e| bad(n, format!("header: {e}")))?;
    if header.action_count == 0 {
        return Err(bad(n, "action_count must be positive"));
    }

    let (n, kind_line) = lines.next("value block")?;
    let mut toks = kind_line.split(' ');
    let qfunction = match toks.next() {
        Some("table") => {
            let keys = parse_usize(n, toks.next(), "key count")?;
            let actions = parse_usize(n, toks.next(), "action count")?;
            if toks.next().is_some() {
                return Err(bad(n, "trailing tokens"));
            }
            if actions != header.action_count {
                return Err(bad(n, "action count disagrees with header"));
            }
            if keys.checked_mul(actions).map_or(true, |v| v > MAX_VALUES) {
                return Err(bad(n, "table too large"));
            }
            let mut values = Vec::new();
            for _ in 0..keys {
                let (n, row) = lines.next("table row")?;
                parse_row(n, row, actions, &mut values)?;
            }
            QFunction::Table(QTable::from_parts(keys, actions, values)?)
        }
        Some("network") => {
            let sizes = toks
                .map(|t| t.parse::<usize>().map_err(|_| bad(n, "invalid layer size")))
                .collect::<Result<Vec<_>>>()?;
            if sizes.len() < 2 || sizes.contains(&0) {
                return Err(bad(n, "network needs at least two non-empty layers"));
            }
            if *sizes.last().unwrap() != header.action_count {
                return Err(bad(n, "output size disagrees with header"));
            }
            let mut total: usize = 0;
            for w in sizes.windows(2) {
                total = w[0]
                    .checked_mul(w[1])
                    .and_then(|p| p.checked_add(w[1]))
                    .and_then(|p| p.checked_add(total))
                    .filter(|&t| t <= MAX_VALUES)
                    .ok_or_else(|| bad(n, "network too large"))?;
            }
            let mut params = Vec::new();
            for (l, w) in sizes.windows(2).enumerate() {
                let (n_in, n_out) = (w[0], w[1]);
                let (n, head) = lines.next("weights header")?;
                expect_header(n, head, &["weights", &l.to_string(), &n_out.to_string(), &n_in.to_string()])?;
                for _ in 0..n_out {
                    let (n, row) = lines.next("weight row")?;
                    parse_row(n, row, n_in, &mut params)?;
                }
                let (n, head) = lines.next("bias header")?;
                expect_header(n, head, &["bias", &l.to_string(), &n_out.to_string()])?;
                let (n, row) = lines.next("bias row")?;
                parse_row(n, row, n_out, &mut params)?;
            }
            QFunction::Network(Mlp::from_parts(sizes, params)?)
        }
        _ => return Err(bad(n, "expected `table` or `network`")),
    };
    if let Some((n, extra)) = lines.inner.next() {
        if !extra.trim().is_empty() || lines.inner.any(|(_, l)| !l.trim().is_empty()) {
            return Err(bad(n + 1, "trailing content"));
        }
    }
    Ok(Checkpoint { header, qfunction })
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".method.json");
    PathBuf::from(name)
}

/// Writes the checkpoint and its method sidecar.
pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, to_text(ckpt)?)?;
    let sidecar = serde_json::to_string_pretty(&ckpt.descriptor())?;
    std::fs::write(sidecar_path(path), sidecar + "\n")?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{LearnerKind, OptimizerKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn header(action_count: usize) -> CheckpointHeader {
        CheckpointHeader {
            method: MethodSpec::Penalty { lambda: 0.5 },
            env: EnvSpec::minilander(),
            encoding: EncodingSpec {
                feature_scale: vec![1.0, 10.0],
                discrete_states: None,
                human_actions: Some(action_count),
                budget_cap: None,
            },
            learner: {
                let mut l = LearnerConfig::new(LearnerKind::Ddqn);
                l.optimizer = OptimizerKind::Sgd;
                l
            },
            seed: 42,
            frames: 1000,
            action_count,
            final_lambda: None,
            pilot: Some("sensor".into()),
        }
    }

    #[test]
    fn network_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::init(&[8, 5, 3, 6], &mut rng);
        let ckpt = Checkpoint {
            header: header(6),
            qfunction: QFunction::Network(net),
        };
        let text = to_text(&ckpt).unwrap();
        let back = from_text(&text).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(to_text(&back).unwrap(), text);
    }

    #[test]
    fn table_round_trip() {
        let values = vec![0.1, -2.5, 1e-300, 3.0, f64::MIN_POSITIVE, -0.0, 7.25, 1e300];
        let ckpt = Checkpoint {
            header: header(4),
            qfunction: QFunction::Table(QTable::from_parts(2, 4, values).unwrap()),
        };
        let back = from_text(&to_text(&ckpt).unwrap()).unwrap();
        assert_eq!(back, ckpt);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let ckpt = Checkpoint {
            header: header(2),
            qfunction: QFunction::Table(QTable::from_parts(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()),
        };
        let text = to_text(&ckpt).unwrap();
        assert!(from_text("").is_err());
        assert!(from_text(&text.replace("intervene-checkpoint 1", "intervene-checkpoint 2")).is_err());
        assert!(from_text(&text.replace("3 4", "3")).is_err());
        assert!(from_text(&text.replace("3 4", "3 NaN")).is_err());
        assert!(from_text(&text.replace("table 2 2", "table 99999999999 2")).is_err());
        assert!(from_text(&format!("{text}junk\n")).is_err());
        assert!(from_text(&text[..text.len() - 4]).is_err());
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("copilot.ckpt");
        let ckpt = Checkpoint {
            header: header(2),
            qfunction: QFunction::Table(QTable::new(3, 2)),
        };
        save(&path, &ckpt).unwrap();
        assert_eq!(load(&path).unwrap(), ckpt);
        let side: MethodDescriptor =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(side.method, MethodSpec::Penalty { lambda: 0.5 });
        assert_eq!(side.env, "minilander");
    }
}
