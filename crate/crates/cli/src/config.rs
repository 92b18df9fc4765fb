use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use negotiator::agent::DlstConfig;
use negotiator::domain::{GenSpec, OppositionClass};
use negotiator::pretrain::{RecordConfig, SlConfig};
use negotiator::tactics::BaselineKind;
use negotiator::tournament::{Scenario, TournamentConfig, TrainingConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const OUTPUT_ENV: &str = "NEGOTIATOR_OUTPUT";

/// Where the profiles of one scenario come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSource {
    Generate(GenSpec),
    Files {
        domain: PathBuf,
        a: PathBuf,
        b: PathBuf,
    },
}

impl DomainSource {
    pub fn load(&self, base: &Path) -> anyhow::Result<Scenario> {
        Ok(match self {
            DomainSource::Generate(spec) => Scenario::generate(spec)?,
            DomainSource::Files { domain, a, b } => {
                Scenario::load(base.join(domain), base.join(a), base.join(b))
                    .with_context(|| format!("loading domain {}", domain.display()))?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Drives every stochastic component; copied into each section's seed.
    pub seed: u64,
    pub output: PathBuf,
    pub domains: Vec<DomainSource>,
    /// Tournament roster: baseline names or "dlst".
    pub agents: Vec<String>,
    /// Opponents for trace recording, RL training and evaluation.
    pub opponents: Vec<BaselineKind>,
    pub teachers: Vec<BaselineKind>,
    /// Checkpoint used wherever a "dlst" agent is needed.
    pub checkpoint: Option<PathBuf>,
    pub eval_sessions: usize,
    pub tournament: TournamentConfig,
    pub agent: DlstConfig,
    pub record: RecordConfig,
    pub sl: SlConfig,
    pub training: TrainingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let domains = (0..3)
            .map(|k| {
                DomainSource::Generate(
                    GenSpec::uniform(4, 5, 100 + k)
                        .with_opposition(OppositionClass::Medium)
                        .with_name(format!("train{k}")),
                )
            })
            .collect();
        Self {
            seed: 42,
            output: PathBuf::from("out"),
            domains,
            agents: ["boulware", "conceder", "linear", "hardliner", "random"]
                .map(String::from)
                .to_vec(),
            opponents: vec![
                BaselineKind::Boulware,
                BaselineKind::Conceder,
                BaselineKind::Linear,
                BaselineKind::Hardliner,
                BaselineKind::Random,
                BaselineKind::Acceptor,
            ],
            teachers: vec![BaselineKind::Boulware],
            checkpoint: None,
            eval_sessions: 200,
            tournament: TournamentConfig::default(),
            agent: DlstConfig::default(),
            record: RecordConfig::default(),
            sl: SlConfig::default(),
            training: TrainingConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the config file, then `key=value` overrides.
    pub fn build(file: Option<&Path>, overrides: &[String]) -> anyhow::Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let user: Value = serde_json::from_str(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
            merge(&mut value, user);
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .with_context(|| format!("override '{item}' is not key=value"))?;
            let parsed =
                serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut value, key, parsed)?;
        }
        let mut config: RunConfig =
            serde_json::from_value(value).context("invalid configuration")?;
        config.propagate_seed();
        config.agent.validate()?;
        Ok(config)
    }

    pub fn propagate_seed(&mut self) {
        self.tournament.seed = self.seed;
        self.record.seed = self.seed;
        self.sl.seed = self.seed;
        self.training.seed = self.seed;
    }

    pub fn scenarios(&self, base: &Path) -> anyhow::Result<Vec<Scenario>> {
        if self.domains.is_empty() {
            bail!("no domains configured");
        }
        self.domains.iter().map(|d| d.load(base)).collect()
    }
}

/// Objects merge key by key; anything else replaces.
fn merge(base: &mut Value, user: Value) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> anyhow::Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if !map.contains_key(*part) {
                    bail!("unknown configuration key '{key}'");
                }
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.get_mut(*part).unwrap()
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .with_context(|| format!("'{part}' in '{key}' is not an index"))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .with_context(|| format!("index {idx} out of range ({len}) in '{key}'"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => bail!("'{key}' does not name a configuration field"),
        };
    }
    bail!("empty configuration key")
}
