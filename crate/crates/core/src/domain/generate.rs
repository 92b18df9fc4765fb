use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{opposition, write_domain, write_profile, Domain, Issue, PreferenceProfile};
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 10_000;
/// Opposition is only checked exactly below this outcome count.
const OPPOSITION_CAP: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OppositionClass {
    Low,
    Medium,
    High,
}

impl OppositionClass {
    /// Accepted opposition band `[lo, hi)`.
    pub fn band(self) -> (f64, f64) {
        match self {
            OppositionClass::Low => (0.0, 0.15),
            OppositionClass::Medium => (0.15, 0.3),
            OppositionClass::High => (0.3, f64::INFINITY),
        }
    }

    fn mixing(self) -> (f64, f64) {
        match self {
            OppositionClass::Low => (0.0, 0.3),
            OppositionClass::Medium => (0.3, 0.7),
            OppositionClass::High => (0.7, 1.0),
        }
    }
}

impl std::str::FromStr for OppositionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            other => Err(Error::Config(format!(
                "unknown opposition class '{other}' (expected low, medium or high)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub name: String,
    pub value_counts: Vec<usize>,
    pub opposition: Option<OppositionClass>,
    pub reservation: f64,
    pub discount: f64,
    pub seed: u64,
}

impl GenSpec {
    pub fn uniform(issues: usize, values: usize, seed: u64) -> Self {
        Self {
            name: format!("gen-{issues}x{values}-{seed}"),
            value_counts: vec![values; issues],
            opposition: None,
            reservation: 0.0,
            discount: 1.0,
            seed,
        }
    }

    pub fn random_shape(
        seed: u64,
        issues: RangeInclusive<usize>,
        values: RangeInclusive<usize>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_d0a1);
        let n = rng.random_range(issues);
        let counts = (0..n).map(|_| rng.random_range(values.clone())).collect();
        Self {
            name: format!("gen-{seed}"),
            value_counts: counts,
            opposition: None,
            reservation: 0.0,
            discount: 1.0,
            seed,
        }
    }

    pub fn with_opposition(mut self, class: OppositionClass) -> Self {
        self.opposition = Some(class);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedScenario {
    pub domain: Arc<Domain>,
    pub profile_a: PreferenceProfile,
    pub profile_b: PreferenceProfile,
}

fn random_weights(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let sum: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / sum).collect();
    // push rounding residue into the last weight
    let residue = 1.0 - w.iter().sum::<f64>();
    if let Some(last) = w.last_mut() {
        *last = (*last + residue).max(0.0);
    }
    w
}

fn random_evaluations(counts: &[usize], rng: &mut impl Rng) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|&k| (0..k).map(|_| 0.01 + 0.99 * rng.random::<f64>()).collect())
        .collect()
}

/// Generates a domain plus two opposing profiles. When an opposition class is
/// requested, profile pairs are resampled until the exact opposition falls in
/// the class band.
pub fn gen_domain(spec: &GenSpec) -> Result<GeneratedScenario> {
    if spec.value_counts.is_empty() || spec.value_counts.contains(&0) {
        return Err(Error::Config(
            "domain generation needs at least one issue and one value per issue".into(),
        ));
    }
    let issues = spec
        .value_counts
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            Issue::new(
                format!("issue{}", i + 1),
                (0..k).map(|v| format!("v{}", v + 1)),
            )
        })
        .collect();
    let domain = Arc::new(Domain::new(spec.name.clone(), issues)?);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let check = spec
        .opposition
        .filter(|_| domain.outcome_count() <= OPPOSITION_CAP);
    let mixing = spec.opposition.map(|c| c.mixing()).unwrap_or((0.0, 0.0));

    for _ in 0..MAX_ATTEMPTS {
        let wa = random_weights(spec.value_counts.len(), &mut rng);
        let ea = random_evaluations(&spec.value_counts, &mut rng);
        let a = PreferenceProfile::new(domain.clone(), wa, ea, spec.reservation, spec.discount)?;

        let lambda = if mixing.1 > mixing.0 {
            rng.random_range(mixing.0..mixing.1)
        } else {
            mixing.0
        };
        let wb = random_weights(spec.value_counts.len(), &mut rng);
        let noise = random_evaluations(&spec.value_counts, &mut rng);
        let eb = a
            .evaluations()
            .iter()
            .zip(noise)
            .map(|(ea, en)| {
                ea.iter()
                    .zip(en)
                    .map(|(x, r)| (lambda * (1.0 - x) + (1.0 - lambda) * r).max(0.01))
                    .collect()
            })
            .collect();
        let b = PreferenceProfile::new(domain.clone(), wb, eb, spec.reservation, spec.discount)?;

        match check {
            Some(class) => {
                let (lo, hi) = class.band();
                let opp = opposition(&a, &b, OPPOSITION_CAP)?;
                if opp >= lo && opp < hi {
                    return Ok(GeneratedScenario {
                        domain,
                        profile_a: a,
                        profile_b: b,
                    });
                }
            }
            None => {
                return Ok(GeneratedScenario {
                    domain,
                    profile_a: a,
                    profile_b: b,
                })
            }
        }
    }
    Err(Error::Config(format!(
        "no profile pair in the requested opposition class after {MAX_ATTEMPTS} attempts"
    )))
}

/// Writes `<name>.domain.json`, `<name>.a.json` and `<name>.b.json` into `dir`.
pub fn write_generated(
    scenario: &GeneratedScenario,
    dir: impl AsRef<Path>,
) -> Result<[PathBuf; 3]> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let name = scenario.domain.name();
    let paths = [
        dir.join(format!("{name}.domain.json")),
        dir.join(format!("{name}.a.json")),
        dir.join(format!("{name}.b.json")),
    ];
    write_domain(&scenario.domain, &paths[0])?;
    write_profile(&scenario.profile_a, &paths[1])?;
    write_profile(&scenario.profile_b, &paths[2])?;
    Ok(paths)
}
