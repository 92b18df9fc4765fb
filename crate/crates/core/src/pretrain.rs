//! Supervised bootstrapping of the three actors from scripted teachers.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{DlstAgent, DlstConfig, LearnerId};
use crate::domain::PreferenceProfile;
use crate::error::{Error, Result};
use crate::neural::{Adam, Mlp};
use crate::protocol::{run_session, SessionConfig, Side, DEFAULT_ROUNDS};
use crate::tactics::{baseline, concession_floor, concession_target, BaselineKind};
use crate::template::{StrategyTemplate, Tactic, TemplateKind};
use crate::tournament::Scenario;

pub const TRACE_SCHEMA: u32 = 1;
pub const MIN_RECORDS: usize = 100;

/// A scripted policy expressed in the agent's own action space.
///
/// Threshold label: the teacher's concession target (1 for the hardliner).
/// Acceptance: accept at or above the dynamic threshold. Bidding: Boulware
/// bids for Boulware and hardliner teachers, uniform bids above the
/// threshold for the conceding ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    kind: BaselineKind,
}

impl Teacher {
    pub fn new(kind: BaselineKind) -> Result<Self> {
        match kind {
            BaselineKind::Boulware
            | BaselineKind::Conceder
            | BaselineKind::Linear
            | BaselineKind::Hardliner => Ok(Self { kind }),
            _ => Err(Error::Config(format!(
                "'{kind}' has no template equivalent and cannot teach"
            ))),
        }
    }

    pub fn kind(&self) -> BaselineKind {
        self.kind
    }

    pub fn threshold(&self, t: f64, profile: &PreferenceProfile) -> f64 {
        match self.kind.beta() {
            Some(beta) => concession_target(t, beta, concession_floor(profile), 1.0),
            None => 1.0,
        }
    }

    pub fn acceptance_template(&self) -> StrategyTemplate {
        StrategyTemplate::single(TemplateKind::Acceptance, vec![Tactic::Dynamic])
            .expect("valid single-phase template")
    }

    pub fn bidding_template(&self) -> StrategyTemplate {
        let tactic = match self.kind {
            BaselineKind::Boulware => Tactic::Boulware,
            _ => Tactic::RandomAbove,
        };
        StrategyTemplate::single(TemplateKind::Bidding, vec![tactic])
            .expect("valid single-phase template")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub schema: u32,
    pub learner: LearnerId,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub session: u64,
    pub domain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordConfig {
    /// Sessions per teacher.
    pub sessions: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for RecordConfig {
    fn default() -> Self {
        Self {
            sessions: 200,
            rounds: DEFAULT_ROUNDS,
            seed: 42,
        }
    }
}

/// Plays each teacher (inside the agent, so states use its featurization)
/// against the opponents and returns one record per decision point: every
/// turn for the threshold learner, one per session for each template.
pub fn record_traces(
    teachers: &[Teacher],
    opponents: &[BaselineKind],
    scenarios: &[Scenario],
    agent_config: &DlstConfig,
    config: &RecordConfig,
) -> Result<Vec<TraceRecord>> {
    if teachers.is_empty() || opponents.is_empty() || scenarios.is_empty() {
        return Err(Error::Config(
            "trace recording needs teachers, opponents and scenarios".into(),
        ));
    }
    let student = DlstAgent::new(agent_config.clone(), config.seed)?;
    let jobs: Vec<(usize, usize)> = (0..teachers.len())
        .flat_map(|t| (0..config.sessions).map(move |k| (t, k)))
        .collect();
    let per_session: Vec<Vec<TraceRecord>> = jobs
        .into_par_iter()
        .map(|(ti, k)| {
            let session = (ti * config.sessions + k) as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(
                config.seed ^ session.wrapping_mul(0x9e37_79b9_7f4a_7c15),
            );
            let scenario = &scenarios[k % scenarios.len()];
            let opponent_kind = opponents[(k / scenarios.len()) % opponents.len()];
            let side = if rng.random_bool(0.5) {
                Side::A
            } else {
                Side::B
            };
            let starter = if rng.random_bool(0.5) {
                Side::A
            } else {
                Side::B
            };
            let seeds = [rng.random(), rng.random()];
            let mut agent = student.frozen_copy().with_teacher(teachers[ti].clone());
            let mut opponent = baseline(opponent_kind);
            let cfg = SessionConfig {
                rounds: config.rounds,
                starter,
            };
            match side {
                Side::A => run_session(
                    &mut agent,
                    opponent.as_mut(),
                    &scenario.a,
                    &scenario.b,
                    cfg,
                    seeds,
                )?,
                Side::B => run_session(
                    opponent.as_mut(),
                    &mut agent,
                    &scenario.a,
                    &scenario.b,
                    cfg,
                    seeds,
                )?,
            };
            let rec = agent
                .last_record()
                .ok_or_else(|| Error::Protocol("teacher session left no record".into()))?;
            let make = |learner, state: &[f64], action: Vec<f64>| TraceRecord {
                schema: TRACE_SCHEMA,
                learner,
                state: state.to_vec(),
                action,
                session,
                domain: scenario.name.clone(),
            };
            let mut out: Vec<TraceRecord> = rec
                .threshold
                .iter()
                .map(|s| make(LearnerId::Threshold, &s.state, vec![s.action]))
                .collect();
            out.push(make(
                LearnerId::Acceptance,
                &rec.acceptance[0].state,
                rec.acceptance_action.clone(),
            ));
            out.push(make(
                LearnerId::Bidding,
                &rec.bidding_state,
                rec.bidding_action.clone(),
            ));
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_session.into_iter().flatten().collect())
}

/// Appends records to a line-delimited JSON file.
pub fn append_traces(records: &[TraceRecord], path: impl AsRef<Path>) -> Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_traces(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Decode(format!("{}:{}: {e}", path.display(), no + 1)))?;
        if rec.schema != TRACE_SCHEMA {
            return Err(Error::Decode(format!(
                "{}:{}: unsupported trace schema {}",
                path.display(),
                no + 1,
                rec.schema
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SlConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlReport {
    pub train_records: usize,
    pub test_records: usize,
    /// Held-out mean absolute error before and after fitting.
    pub initial_mae: f64,
    pub final_mae: f64,
    pub final_train_mse: f64,
}

fn mae(actor: &Mlp, records: &[&TraceRecord]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in records {
        let y = actor.forward(&r.state)?;
        sum += y
            .iter()
            .zip(&r.action)
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>();
        n += y.len();
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Fits `actor` to the records of `learner` by minibatch MSE with Adam.
pub fn train_supervised(
    records: &[TraceRecord],
    learner: LearnerId,
    actor: &mut Mlp,
    config: &SlConfig,
) -> Result<SlReport> {
    let mut data: Vec<&TraceRecord> = records.iter().filter(|r| r.learner == learner).collect();
    if data.len() < MIN_RECORDS {
        return Err(Error::InsufficientData {
            needed: MIN_RECORDS,
            got: data.len(),
        });
    }
    for r in &data {
        if r.state.len() != actor.input_size() {
            return Err(Error::Shape {
                expected: actor.input_size(),
                got: r.state.len(),
            });
        }
        if r.action.len() != actor.output_size() {
            return Err(Error::Shape {
                expected: actor.output_size(),
                got: r.action.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    data.shuffle(&mut rng);
    let split =
        ((data.len() as f64 * config.train_fraction).round() as usize).clamp(1, data.len() - 1);
    let (train, test) = data.split_at(split);
    let mut train = train.to_vec();
    let initial_mae = mae(actor, test)?;

    let mut adam = Adam::new(actor.n_params(), config.learning_rate);
    let mut grads = vec![0.0; actor.n_params()];
    let m = actor.output_size() as f64;
    let mut last_mse = 0.0;
    for _ in 0..config.epochs {
        train.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in train.chunks(config.batch_size.max(1)) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / (batch.len() as f64 * m);
            for r in batch {
                let trace = actor.trace(&r.state)?;
                let dl: Vec<f64> = trace
                    .output()
                    .iter()
                    .zip(&r.action)
                    .map(|(y, t)| 2.0 * (y - t) * scale)
                    .collect();
                sse += trace
                    .output()
                    .iter()
                    .zip(&r.action)
                    .map(|(y, t)| (y - t).powi(2))
                    .sum::<f64>();
                actor.backward_into(&trace, &dl, &mut grads)?;
            }
            adam.step(actor.params_mut(), &grads)?;
        }
        last_mse = sse / (train.len() as f64 * m);
    }
    Ok(SlReport {
        train_records: train.len(),
        test_records: test.len(),
        initial_mae,
        final_mae: mae(actor, test)?,
        final_train_mse: last_mse,
    })
}

/// Fits all three actors of `agent` and installs them in its learners.
pub fn pretrain_agent(
    agent: &mut DlstAgent,
    records: &[TraceRecord],
    config: &SlConfig,
) -> Result<Vec<(LearnerId, SlReport)>> {
    let learners = agent
        .learners_mut()
        .ok_or_else(|| Error::Config("frozen agents cannot be pretrained".into()))?;
    let mut reports = Vec::new();
    for id in LearnerId::ALL {
        let learner = learners.get_mut(id);
        let mut actor = learner.actor().clone();
        let report = train_supervised(records, id, &mut actor, config)?;
        learner.set_actor(actor)?;
        log::info!(
            "pretrained {} actor: held-out MAE {:.4} -> {:.4}",
            id.as_str(),
            report.initial_mae,
            report.final_mae
        );
        reports.push((id, report));
    }
    agent.sync_actors();
    Ok(reports)
}
