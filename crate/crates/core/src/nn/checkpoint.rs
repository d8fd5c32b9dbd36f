//! Versioned plain-text checkpoints.
//!
//! ```text
//! nextcell-checkpoint 1
//! meta <key> <value...>
//! step <n>
//! param <name> <rows> <cols>
//! value <v...>
//! m <v...>
//! v <v...>
//! end
//! ```
//! Floats are written in shortest round-trip form, so reloading is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::optim::Param;
use super::{ModelState, NnError, Tensor};

pub const CHECKPOINT_MAGIC: &str = "nextcell-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub state: ModelState,
}

fn bad(line: usize, msg: impl Into<String>) -> NnError {
    NnError::Checkpoint(format!("line {line}: {}", msg.into()))
}

impl Checkpoint {
    pub fn new(state: ModelState) -> Self {
        Self { meta: BTreeMap::new(), state }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Result<&str, NnError> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| NnError::Checkpoint(format!("missing meta key {key}")))
    }

    pub fn meta_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<T, NnError> {
        self.meta(key)?.parse().map_err(|_| NnError::Checkpoint(format!("bad value for meta key {key}")))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "meta {k} {v}");
        }
        let _ = writeln!(out, "step {}", self.state.step());
        for (name, p) in self.state.params() {
            let [r, c] = p.value.shape();
            let _ = writeln!(out, "param {name} {r} {c}");
            for (tag, t) in [("value", &p.value), ("m", &p.m), ("v", &p.v)] {
                out.push_str(tag);
                for x in t.data() {
                    let _ = write!(out, " {x:?}");
                }
                out.push('\n');
            }
        }
        out.push_str("end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, NnError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| bad(1, "empty checkpoint"))?;
        let mut head = header.split_whitespace();
        if head.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad(1, "not a checkpoint"));
        }
        let version: u32 = head.next().and_then(|v| v.parse().ok()).ok_or_else(|| bad(1, "missing version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(1, format!("unsupported version {version}")));
        }

        let mut ckpt = Checkpoint::default();
        let mut finished = false;
        while let Some((no, line)) = lines.next() {
            let mut fields = line.splitn(2, ' ');
            match (fields.next(), fields.next()) {
                (Some("meta"), Some(rest)) => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    ckpt.meta.insert(k.to_string(), v.to_string());
                }
                (Some("step"), Some(n)) => {
                    ckpt.state.set_step(n.trim().parse().map_err(|_| bad(no, "bad step"))?);
                }
                (Some("param"), Some(rest)) => {
                    let parts: Vec<&str> = rest.split_whitespace().collect();
                    let [name, r, c] = parts[..] else { return Err(bad(no, "param needs name rows cols")) };
                    let r: usize = r.parse().map_err(|_| bad(no, "bad rows"))?;
                    let c: usize = c.parse().map_err(|_| bad(no, "bad cols"))?;
                    let mut read = |tag: &str| -> Result<Tensor, NnError> {
                        let (no, line) = lines.next().ok_or_else(|| bad(no, format!("missing {tag} row")))?;
                        let mut it = line.split_whitespace();
                        if it.next() != Some(tag) {
                            return Err(bad(no, format!("expected {tag} row")));
                        }
                        let data = it
                            .map(|x| x.parse::<f64>().map_err(|_| bad(no, format!("bad number {x}"))))
                            .collect::<Result<Vec<_>, _>>()?;
                        Tensor::from_vec(r, c, data).map_err(|e| bad(no, e.to_string()))
                    };
                    let value = read("value")?;
                    let m = read("m")?;
                    let v = read("v")?;
                    ckpt.state.insert_param(name.to_string(), Param { value, m, v });
                }
                (Some("end"), None) => {
                    finished = true;
                    break;
                }
                _ => return Err(bad(no, format!("unexpected line {line:?}"))),
            }
        }
        if !finished {
            return Err(NnError::Checkpoint("truncated checkpoint (no end marker)".into()));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        std::fs::write(path, self.to_text()).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let text = std::fs::read_to_string(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}
