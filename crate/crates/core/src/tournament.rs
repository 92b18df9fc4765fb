//! Round-robin tournaments, per-session logs and the metrics computed from
//! them, plus the sequential RL training loop.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::DlstAgent;
use crate::domain::{
    gen_domain, nondominated, pareto_frontier, parse_domain, parse_profile, Additive,
    FrontierPoint, GenSpec, PreferenceProfile, DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::protocol::{run_session, Agent, SessionConfig, SessionResult, Side, DEFAULT_ROUNDS};
use crate::tactics::{baseline, BaselineKind};

/// Number of uniform bids used to approximate the frontier of large domains.
pub const FRONTIER_SAMPLES: usize = 100_000;

/// A domain with the two profiles played on it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub a: Arc<PreferenceProfile>,
    pub b: Arc<PreferenceProfile>,
}

impl Scenario {
    pub fn new(
        name: impl Into<String>,
        a: PreferenceProfile,
        b: PreferenceProfile,
    ) -> Result<Self> {
        if a.domain() != b.domain() {
            return Err(Error::validation("scenario profiles use different domains"));
        }
        Ok(Self {
            name: name.into(),
            a: Arc::new(a),
            b: Arc::new(b),
        })
    }

    pub fn generate(spec: &GenSpec) -> Result<Self> {
        let g = gen_domain(spec)?;
        Self::new(g.domain.name().to_string(), g.profile_a, g.profile_b)
    }

    pub fn load(
        domain: impl AsRef<Path>,
        profile_a: impl AsRef<Path>,
        profile_b: impl AsRef<Path>,
    ) -> Result<Self> {
        let d = Arc::new(parse_domain(domain)?);
        let a = parse_profile(profile_a, d.clone())?;
        let b = parse_profile(profile_b, d.clone())?;
        Self::new(d.name().to_string(), a, b)
    }

    pub fn profile(&self, side: Side) -> &Arc<PreferenceProfile> {
        match side {
            Side::A => &self.a,
            Side::B => &self.b,
        }
    }

    /// Utility points of the Pareto frontier; exact up to `cap` outcomes,
    /// otherwise the non-dominated subset of a uniform sample.
    pub fn frontier(&self, cap: u64, samples: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
        let points = if self.a.domain().outcome_count() <= cap {
            pareto_frontier(&self.a, &self.b, cap)?
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let domain = self.a.domain();
            let sample = (0..samples)
                .map(|_| {
                    let bid = domain.random_bid(&mut rng);
                    FrontierPoint {
                        ua: self.a.score(&bid),
                        ub: self.b.score(&bid),
                        bid,
                    }
                })
                .collect();
            nondominated(sample)
        };
        Ok(points.into_iter().map(|p| (p.ua, p.ub)).collect())
    }
}

/// Minimum Euclidean distance from `(ua, ub)` to any frontier point.
pub fn pareto_distance(point: (f64, f64), frontier: &[(f64, f64)]) -> f64 {
    frontier
        .iter()
        .map(|&(x, y)| ((point.0 - x).powi(2) + (point.1 - y).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

/// `n(n−1)/2 · 2 · y · z`.
pub fn session_count(agents: usize, domains: usize, repeats: usize) -> usize {
    agents * agents.saturating_sub(1) / 2 * 2 * domains * repeats
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TournamentConfig {
    /// Meetings per ordered pair and domain.
    pub repeats: usize,
    pub rounds: usize,
    pub mode: Mode,
    pub seed: u64,
    pub frontier_cap: u64,
    pub frontier_samples: usize,
}

impl Default for TournamentConfig {
    fn default() -> Self {
        Self {
            repeats: 1,
            rounds: DEFAULT_ROUNDS,
            mode: Mode::Eval,
            seed: 42,
            frontier_cap: DEFAULT_ENUMERATION_CAP,
            frontier_samples: FRONTIER_SAMPLES,
        }
    }
}

/// One CSV row per session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRow {
    pub session: usize,
    pub domain: String,
    #[serde(rename = "agentA")]
    pub agent_a: String,
    #[serde(rename = "agentB")]
    pub agent_b: String,
    pub starter: Side,
    pub result: Outcome,
    pub t_agree: Option<f64>,
    #[serde(rename = "uA")]
    pub u_a: f64,
    #[serde(rename = "uB")]
    pub u_b: f64,
    pub pareto_dist: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Agreement,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Fixture {
    session: usize,
    domain: usize,
    a: usize,
    b: usize,
    starter: Side,
}

/// Every unordered pair meets `2·z` times per domain: each repeat is played
/// with both profile assignments, and the opening side alternates between
/// repeats.
fn schedule(agents: usize, domains: usize, repeats: usize) -> Vec<Fixture> {
    let mut out = Vec::with_capacity(session_count(agents, domains, repeats));
    for domain in 0..domains {
        for i in 0..agents {
            for j in i + 1..agents {
                for r in 0..repeats {
                    let starter = if r % 2 == 0 { Side::A } else { Side::B };
                    for (a, b) in [(i, j), (j, i)] {
                        out.push(Fixture {
                            session: out.len(),
                            domain,
                            a,
                            b,
                            starter,
                        });
                    }
                }
            }
        }
    }
    out
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn session_seeds(seed: u64, session: usize) -> [u64; 2] {
    let base = splitmix(seed ^ splitmix(session as u64));
    [splitmix(base), splitmix(base ^ 1)]
}

fn play(
    fixture: Fixture,
    a: &mut dyn Agent,
    b: &mut dyn Agent,
    scenario: &Scenario,
    frontier: &[(f64, f64)],
    config: &TournamentConfig,
) -> Result<SessionRow> {
    let cfg = SessionConfig {
        rounds: config.rounds,
        starter: fixture.starter,
    };
    let (outcome, _) = run_session(
        a,
        b,
        &scenario.a,
        &scenario.b,
        cfg,
        session_seeds(config.seed, fixture.session),
    )?;
    let (result, t_agree, pareto_dist) = match &outcome.result {
        SessionResult::Agreement { bid, time } => {
            let point = (scenario.a.score(bid), scenario.b.score(bid));
            (
                Outcome::Agreement,
                Some(*time),
                Some(pareto_distance(point, frontier)),
            )
        }
        SessionResult::Failure(_) => (Outcome::Failure, None, None),
    };
    Ok(SessionRow {
        session: fixture.session,
        domain: scenario.name.clone(),
        agent_a: a.name().to_string(),
        agent_b: b.name().to_string(),
        starter: fixture.starter,
        result,
        t_agree,
        u_a: outcome.utilities[0],
        u_b: outcome.utilities[1],
        pareto_dist,
    })
}

#[derive(Debug, Clone)]
pub struct TournamentResult {
    pub rows: Vec<SessionRow>,
    pub report: MetricsReport,
}

/// Plays the full schedule. Eval mode forks every agent per session and runs
/// sessions in parallel; train mode plays sequentially on the roster itself
/// and lets each agent learn after every session.
pub fn run_tournament(
    roster: &mut [Box<dyn Agent>],
    scenarios: &[Scenario],
    config: &TournamentConfig,
) -> Result<TournamentResult> {
    if roster.len() < 2 {
        return Err(Error::Config(
            "a tournament needs at least two agents".into(),
        ));
    }
    if scenarios.is_empty() {
        return Err(Error::Config(
            "a tournament needs at least one scenario".into(),
        ));
    }
    let mut names = HashSet::new();
    for agent in roster.iter() {
        if !names.insert(agent.name().to_string()) {
            return Err(Error::Config(format!(
                "agent name '{}' appears twice in the roster",
                agent.name()
            )));
        }
    }
    let frontiers = scenarios
        .iter()
        .enumerate()
        .map(|(k, s)| {
            s.frontier(
                config.frontier_cap,
                config.frontier_samples,
                config.seed ^ k as u64,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let fixtures = schedule(roster.len(), scenarios.len(), config.repeats);
    log::info!(
        "tournament: {} sessions, mode {:?}",
        fixtures.len(),
        config.mode
    );

    let rows = match config.mode {
        Mode::Eval => {
            for agent in roster.iter_mut() {
                agent.set_training(false);
            }
            let jobs: Vec<_> = fixtures
                .iter()
                .map(|&f| (f, roster[f.a].fork(), roster[f.b].fork()))
                .collect();
            jobs.into_par_iter()
                .map(|(f, mut a, mut b)| {
                    play(
                        f,
                        a.as_mut(),
                        b.as_mut(),
                        &scenarios[f.domain],
                        &frontiers[f.domain],
                        config,
                    )
                })
                .collect::<Result<Vec<_>>>()?
        }
        Mode::Train => {
            for agent in roster.iter_mut() {
                agent.set_training(true);
            }
            let mut rows = Vec::with_capacity(fixtures.len());
            for &f in &fixtures {
                let (a, b) = pair_mut(roster, f.a, f.b);
                let scenario = &scenarios[f.domain];
                rows.push(play(
                    f,
                    a.as_mut(),
                    b.as_mut(),
                    scenario,
                    &frontiers[f.domain],
                    config,
                )?);
                a.learn(&scenario.b);
                b.learn(&scenario.a);
            }
            for agent in roster.iter_mut() {
                agent.set_training(false);
            }
            rows
        }
    };
    let report = MetricsReport::from_rows(&rows);
    Ok(TournamentResult { rows, report })
}

fn pair_mut<T>(items: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert_ne!(i, j);
    if i < j {
        let (lo, hi) = items.split_at_mut(j);
        (&mut lo[i], &mut hi[0])
    } else {
        let (lo, hi) = items.split_at_mut(i);
        (&mut hi[0], &mut lo[j])
    }
}

pub fn write_csv(rows: &[SessionRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<SessionRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                sd: 0.0,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

/// The five tournament metrics for one agent.
///
/// `individual` averages settled utility over all sessions (reservation
/// value on failure), `individual_success` and `social` over agreements
/// only, `pareto` over agreements only, and `success` is the agreement rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent: String,
    /// `None` for the all-domain aggregate.
    pub domain: Option<String>,
    pub sessions: usize,
    pub individual: Stat,
    pub individual_success: Stat,
    pub social: Stat,
    pub pareto: Stat,
    pub success: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Vec<AgentMetrics>,
    pub per_domain: Vec<AgentMetrics>,
}

impl MetricsReport {
    /// Computes every metric from the session log alone.
    pub fn from_rows(rows: &[SessionRow]) -> Self {
        let mut agents: Vec<&str> = Vec::new();
        let mut domains: Vec<&str> = Vec::new();
        for r in rows {
            for name in [r.agent_a.as_str(), r.agent_b.as_str()] {
                if !agents.contains(&name) {
                    agents.push(name);
                }
            }
            if !domains.contains(&r.domain.as_str()) {
                domains.push(&r.domain);
            }
        }
        let overall = agents.iter().map(|a| metrics(rows, a, None)).collect();
        let per_domain = domains
            .iter()
            .flat_map(|d| agents.iter().map(move |a| (a, d)))
            .map(|(a, d)| metrics(rows, a, Some(d)))
            .collect();
        Self {
            overall,
            per_domain,
        }
    }

    pub fn agent(&self, name: &str) -> Option<&AgentMetrics> {
        self.overall.iter().find(|m| m.agent == name)
    }

    pub fn agent_in(&self, name: &str, domain: &str) -> Option<&AgentMetrics> {
        self.per_domain
            .iter()
            .find(|m| m.agent == name && m.domain.as_deref() == Some(domain))
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

fn metrics(rows: &[SessionRow], agent: &str, domain: Option<&str>) -> AgentMetrics {
    let (mut total, mut success_u, mut social, mut pareto, mut success) =
        (vec![], vec![], vec![], vec![], vec![]);
    for r in rows.iter().filter(|r| domain.is_none_or(|d| r.domain == d)) {
        let own = if r.agent_a == agent {
            r.u_a
        } else if r.agent_b == agent {
            r.u_b
        } else {
            continue;
        };
        total.push(own);
        let agreed = r.result == Outcome::Agreement;
        success.push(if agreed { 1.0 } else { 0.0 });
        if agreed {
            success_u.push(own);
            social.push(r.u_a + r.u_b);
            if let Some(p) = r.pareto_dist {
                pareto.push(p);
            }
        }
    }
    AgentMetrics {
        agent: agent.to_string(),
        domain: domain.map(str::to_string),
        sessions: total.len(),
        individual: Stat::of(&total),
        individual_success: Stat::of(&success_u),
        social: Stat::of(&social),
        pareto: Stat::of(&pareto),
        success: Stat::of(&success),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub sessions: usize,
    pub rounds: usize,
    pub seed: u64,
    /// Sessions between progress log lines.
    pub log_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            sessions: 2000,
            rounds: DEFAULT_ROUNDS,
            seed: 42,
            log_every: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub sessions: usize,
    pub agreements: usize,
    pub mean_utility: f64,
}

/// Sequential RL training against scripted opponents. Each session draws
/// the scenario, opponent, side and opening party at random.
pub fn train_rl(
    agent: &mut DlstAgent,
    opponents: &[BaselineKind],
    scenarios: &[Scenario],
    config: &TrainingConfig,
) -> Result<TrainingSummary> {
    if opponents.is_empty() || scenarios.is_empty() {
        return Err(Error::Config(
            "training needs at least one opponent and one scenario".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pool: Vec<Box<dyn Agent>> = opponents.iter().map(|&k| baseline(k)).collect();
    agent.set_training(true);
    let (mut agreements, mut utility) = (0usize, 0.0);
    for k in 0..config.sessions {
        let scenario = &scenarios[rng.random_range(0..scenarios.len())];
        let pick = rng.random_range(0..pool.len());
        let opponent = pool[pick].as_mut();
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
        let cfg = SessionConfig {
            rounds: config.rounds,
            starter,
        };
        let outcome = match side {
            Side::A => run_session(agent, opponent, &scenario.a, &scenario.b, cfg, seeds)?.0,
            Side::B => run_session(opponent, agent, &scenario.a, &scenario.b, cfg, seeds)?.0,
        };
        agent.learn(scenario.profile(side.other()));
        agreements += outcome.is_agreement() as usize;
        utility += outcome.utility(side);
        if config.log_every > 0 && (k + 1) % config.log_every == 0 {
            log::info!(
                "rl session {}: agreement rate {:.3}, mean utility {:.4}",
                k + 1,
                agreements as f64 / (k + 1) as f64,
                utility / (k + 1) as f64
            );
        }
    }
    agent.set_training(false);
    let n = config.sessions.max(1) as f64;
    Ok(TrainingSummary {
        sessions: config.sessions,
        agreements,
        mean_utility: utility / n,
    })
}

/// Individual utility and agreement rate of one agent over a fixed list of
/// sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub individual: Stat,
    pub success: Stat,
}

/// Plays `sessions` frozen sessions of `agent` against opponents drawn from
/// `opponents`. The opponent, side, opening party and seeds depend only on
/// `seed`, so different agents face identical fixtures.
pub fn evaluate(
    agent: &dyn Agent,
    opponents: &[BaselineKind],
    scenario: &Scenario,
    sessions: usize,
    rounds: usize,
    seed: u64,
) -> Result<EvalSummary> {
    if opponents.is_empty() {
        return Err(Error::Config(
            "evaluation needs at least one opponent".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<_> = (0..sessions)
        .map(|_| {
            let kind = opponents[rng.random_range(0..opponents.len())];
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
            let seeds: [u64; 2] = [rng.random(), rng.random()];
            (agent.fork(), baseline(kind), side, starter, seeds)
        })
        .collect();
    let results = jobs
        .into_par_iter()
        .map(|(mut me, mut other, side, starter, seeds)| {
            let cfg = SessionConfig { rounds, starter };
            let outcome = match side {
                Side::A => {
                    run_session(
                        me.as_mut(),
                        other.as_mut(),
                        &scenario.a,
                        &scenario.b,
                        cfg,
                        seeds,
                    )?
                    .0
                }
                Side::B => {
                    run_session(
                        other.as_mut(),
                        me.as_mut(),
                        &scenario.a,
                        &scenario.b,
                        cfg,
                        seeds,
                    )?
                    .0
                }
            };
            Ok((
                outcome.utility(side),
                if outcome.is_agreement() { 1.0 } else { 0.0 },
            ))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (u, s): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    Ok(EvalSummary {
        individual: Stat::of(&u),
        success: Stat::of(&s),
    })
}
