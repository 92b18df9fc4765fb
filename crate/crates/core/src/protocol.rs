//! Alternating-offers session engine.
//!
//! Time is a rounds budget: after `k` offers have been exchanged the clock
//! reads `min(k / R, 1)`. The responder to the offer that brings the clock to 1
//! may still accept; any other answer ends the session in failure.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Bid, Domain, PreferenceProfile};
use crate::error::{Error, Result};

pub const DEFAULT_ROUNDS: usize = 180;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::A => 0,
            Side::B => 1,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionKind {
    Offer(Bid),
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationAction {
    pub kind: ActionKind,
    pub actor: Side,
    pub time: f64,
}

/// What an agent answers to a received offer. A rejection must carry the
/// counter-offer; a bare rejection before the deadline forfeits the session.
#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Accept,
    Reject(Option<Bid>),
}

impl Response {
    pub fn counter(bid: Bid) -> Self {
        Response::Reject(Some(bid))
    }
}

pub fn normalized_time(offers_exchanged: usize, rounds: usize) -> f64 {
    debug_assert!(rounds >= 1);
    (offers_exchanged as f64 / rounds.max(1) as f64).min(1.0)
}

/// Everything an agent learns about a session before it starts.
#[derive(Debug, Clone)]
pub struct SessionSetup {
    pub profile: Arc<PreferenceProfile>,
    pub side: Side,
    pub starts: bool,
    pub rounds: usize,
    pub seed: u64,
}

pub trait Agent: Send {
    fn name(&self) -> &str;

    fn begin(&mut self, setup: &SessionSetup) -> Result<()>;

    fn first_offer(&mut self, t: f64) -> Result<Bid>;

    fn on_offer(&mut self, bid: &Bid, t: f64) -> Result<Response>;

    /// Called exactly once per session.
    fn on_outcome(&mut self, outcome: &SessionOutcome);

    /// Training hook: the harness hands over the opponent's true profile so a
    /// learning agent can compute its rewards. Never called in evaluation.
    fn learn(&mut self, _opponent: &PreferenceProfile) {}

    fn set_training(&mut self, _training: bool) {}

    /// Independent copy for parallel evaluation; learners are frozen.
    fn fork(&self) -> Box<dyn Agent>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FailureReason {
    Deadline,
    Forfeit { side: Side, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SessionResult {
    Agreement { bid: Bid, time: f64 },
    Failure(FailureReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub result: SessionResult,
    /// Settled utility of side A and side B.
    pub utilities: [f64; 2],
}

impl SessionOutcome {
    fn agreement(
        bid: Bid,
        time: f64,
        a: &PreferenceProfile,
        b: &PreferenceProfile,
    ) -> Result<Self> {
        let utilities = [
            a.discounted_utility(&bid, time)?,
            b.discounted_utility(&bid, time)?,
        ];
        Ok(Self {
            result: SessionResult::Agreement { bid, time },
            utilities,
        })
    }

    fn failure(reason: FailureReason, a: &PreferenceProfile, b: &PreferenceProfile) -> Self {
        Self {
            result: SessionResult::Failure(reason),
            utilities: [a.reservation(), b.reservation()],
        }
    }

    pub fn is_agreement(&self) -> bool {
        matches!(self.result, SessionResult::Agreement { .. })
    }

    pub fn agreement_bid(&self) -> Option<&Bid> {
        match &self.result {
            SessionResult::Agreement { bid, .. } => Some(bid),
            SessionResult::Failure(_) => None,
        }
    }

    pub fn agreement_time(&self) -> Option<f64> {
        match self.result {
            SessionResult::Agreement { time, .. } => Some(time),
            SessionResult::Failure(_) => None,
        }
    }

    pub fn utility(&self, side: Side) -> f64 {
        self.utilities[side.index()]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NegotiationHistory {
    pub entries: Vec<NegotiationAction>,
}

impl NegotiationHistory {
    fn push(&mut self, kind: ActionKind, actor: Side, time: f64) {
        self.entries.push(NegotiationAction { kind, actor, time });
    }

    pub fn offers(&self) -> impl Iterator<Item = (Side, &Bid)> {
        self.entries.iter().filter_map(|a| match &a.kind {
            ActionKind::Offer(b) => Some((a.actor, b)),
            _ => None,
        })
    }

    /// Replays every transition and checks the protocol rules: the opening
    /// action is an offer, actors alternate, times never decrease, a terminal
    /// accept or reject appears at most once and only at the end.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        let violation = |msg: String| Err(Error::Protocol(msg));
        let Some(first) = self.entries.first() else {
            return Ok(());
        };
        if !matches!(first.kind, ActionKind::Offer(_)) {
            return violation("history must open with an offer".into());
        }
        for (i, pair) in self.entries.windows(2).enumerate() {
            let (prev, next) = (&pair[0], &pair[1]);
            if next.actor == prev.actor {
                return violation(format!(
                    "actions {i} and {} share actor {}",
                    i + 1,
                    next.actor
                ));
            }
            if next.time < prev.time {
                return violation(format!("time decreases at action {}", i + 1));
            }
            if !matches!(prev.kind, ActionKind::Offer(_)) {
                return violation(format!("action {i} is terminal but the session continued"));
            }
        }
        for (i, a) in self.entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&a.time) {
                return violation(format!("action {i} has time {} outside [0, 1]", a.time));
            }
            if let ActionKind::Offer(b) = &a.kind {
                domain.validate_bid(b)?;
            }
        }
        Ok(())
    }

    /// CSV transcript: header, one action per line
    /// (`t,actor,kind,bid` with value labels joined by `;`), then an outcome
    /// footer line starting with `#`.
    pub fn write_transcript<W: Write>(
        &self,
        domain: &Domain,
        outcome: &SessionOutcome,
        mut out: W,
    ) -> Result<()> {
        writeln!(out, "t,actor,kind,bid")?;
        for a in &self.entries {
            let (kind, bid) = match &a.kind {
                ActionKind::Offer(b) => ("offer", domain.labels(b).collect::<Vec<_>>().join(";")),
                ActionKind::Accept => ("accept", String::new()),
                ActionKind::Reject => ("reject", String::new()),
            };
            writeln!(out, "{},{},{kind},{bid}", a.time, a.actor)?;
        }
        match &outcome.result {
            SessionResult::Agreement { bid, time } => writeln!(
                out,
                "#outcome,agreement,{time},{},{},{}",
                outcome.utilities[0],
                outcome.utilities[1],
                domain.labels(bid).collect::<Vec<_>>().join(";")
            )?,
            SessionResult::Failure(reason) => {
                let why = match reason {
                    FailureReason::Deadline => "deadline".to_string(),
                    FailureReason::Forfeit { side, .. } => format!("forfeit-{side}"),
                };
                writeln!(
                    out,
                    "#outcome,failure,,{},{},{why}",
                    outcome.utilities[0], outcome.utilities[1]
                )?
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub rounds: usize,
    pub starter: Side,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            starter: Side::A,
        }
    }
}

/// Runs one alternating-offers session between `agent_a` (bound to
/// `profile_a`) and `agent_b`. Agent errors and invalid bids forfeit the
/// session for the offending side; they are logged, not returned.
pub fn run_session(
    agent_a: &mut dyn Agent,
    agent_b: &mut dyn Agent,
    profile_a: &Arc<PreferenceProfile>,
    profile_b: &Arc<PreferenceProfile>,
    config: SessionConfig,
    seeds: [u64; 2],
) -> Result<(SessionOutcome, NegotiationHistory)> {
    if profile_a.domain() != profile_b.domain() {
        return Err(Error::validation(
            "agents are bound to profiles over different domains",
        ));
    }
    if config.rounds == 0 {
        return Err(Error::Config("rounds budget must be at least 1".into()));
    }
    let domain = profile_a.domain().clone();
    let mut history = NegotiationHistory::default();

    let setups = [
        SessionSetup {
            profile: profile_a.clone(),
            side: Side::A,
            starts: config.starter == Side::A,
            rounds: config.rounds,
            seed: seeds[0],
        },
        SessionSetup {
            profile: profile_b.clone(),
            side: Side::B,
            starts: config.starter == Side::B,
            rounds: config.rounds,
            seed: seeds[1],
        },
    ];

    let mut agents: [&mut dyn Agent; 2] = [agent_a, agent_b];
    let forfeit = |side: Side, reason: String| {
        log::warn!("side {side} forfeits: {reason}");
        SessionOutcome::failure(
            FailureReason::Forfeit { side, reason },
            profile_a,
            profile_b,
        )
    };

    let outcome = 'session: {
        for (agent, setup) in agents.iter_mut().zip(&setups) {
            if let Err(e) = agent.begin(setup) {
                break 'session forfeit(setup.side, format!("setup failed: {e}"));
            }
        }

        let mut proposer = config.starter;
        let mut offers = 0usize;
        let mut current = match agents[proposer.index()].first_offer(0.0) {
            Ok(bid) => match domain.validate_bid(&bid) {
                Ok(()) => bid,
                Err(e) => break 'session forfeit(proposer, e.to_string()),
            },
            Err(e) => break 'session forfeit(proposer, e.to_string()),
        };
        history.push(ActionKind::Offer(current.clone()), proposer, 0.0);
        offers += 1;

        loop {
            let t = normalized_time(offers, config.rounds);
            let responder = proposer.other();
            let response = match agents[responder.index()].on_offer(&current, t) {
                Ok(r) => r,
                Err(e) => break 'session forfeit(responder, e.to_string()),
            };
            match response {
                Response::Accept => {
                    history.push(ActionKind::Accept, responder, t);
                    match SessionOutcome::agreement(current, t, profile_a, profile_b) {
                        Ok(o) => break 'session o,
                        Err(e) => return Err(e),
                    }
                }
                Response::Reject(_) if t >= 1.0 => {
                    history.push(ActionKind::Reject, responder, t);
                    break 'session SessionOutcome::failure(
                        FailureReason::Deadline,
                        profile_a,
                        profile_b,
                    );
                }
                Response::Reject(None) => {
                    break 'session forfeit(responder, "rejection without counter-offer".into());
                }
                Response::Reject(Some(counter)) => {
                    if let Err(e) = domain.validate_bid(&counter) {
                        break 'session forfeit(responder, e.to_string());
                    }
                    history.push(ActionKind::Offer(counter.clone()), responder, t);
                    offers += 1;
                    current = counter;
                    proposer = responder;
                }
            }
        }
    };

    for agent in agents.iter_mut() {
        agent.on_outcome(&outcome);
    }
    Ok((outcome, history))
}
