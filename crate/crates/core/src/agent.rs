//! The learning agent. A threshold learner sets the dynamic utility
//! threshold every turn; two template learners pick the acceptance and
//! bidding templates once per session.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Additive, Bid, PreferenceProfile, DEFAULT_ENUMERATION_CAP};
use crate::drl::{
    featurize_acceptance, featurize_bidding, featurize_threshold, reward_acceptance,
    reward_bidding, reward_threshold, DdpgConfig, DdpgLearner, Experience, RewardConfig,
    RewardEvent, SessionView, ACCEPTANCE_FEATURES, BIDDING_FEATURES, THRESHOLD_FEATURES,
};
use crate::error::{Error, Result};
use crate::moea::{nsga2, Nsga2Params, ParetoSet};
use crate::neural::Mlp;
use crate::opponent::FrequencyOpponentModel;
use crate::pretrain::Teacher;
use crate::protocol::{Agent, Response, SessionOutcome, SessionResult, SessionSetup};
use crate::tactics::{self, OutcomeSpace, TacticContext, BOULWARE_BETA, DEFAULT_FIXED_THRESHOLD};
use crate::template::{decode, encode, StrategyTemplate, Tactic, TemplateKind, TemplateLayout};

pub const AGENT_NAME: &str = "dlst";
pub const CHECKPOINT_FORMAT: &str = "negotiator-dlst";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Quantile and Pareto parameters `(a, b)` used for state features when the
/// active template has none of its own.
pub const FEATURE_PROBE: (f64, f64) = (0.0, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerId {
    Threshold,
    Acceptance,
    Bidding,
}

impl LearnerId {
    pub const ALL: [LearnerId; 3] = [
        LearnerId::Threshold,
        LearnerId::Acceptance,
        LearnerId::Bidding,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerId::Threshold => "threshold",
            LearnerId::Acceptance => "acceptance",
            LearnerId::Bidding => "bidding",
        }
    }

    pub fn state_dim(self) -> usize {
        match self {
            LearnerId::Threshold => THRESHOLD_FEATURES,
            LearnerId::Acceptance => ACCEPTANCE_FEATURES,
            LearnerId::Bidding => BIDDING_FEATURES,
        }
    }

    pub fn action_dim(self, layout: &TemplateLayout) -> usize {
        match self {
            LearnerId::Threshold => 1,
            _ => layout.action_len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DlstConfig {
    pub phases: usize,
    pub slots: usize,
    /// The fixed acceptance threshold `u`.
    pub fixed_threshold: f64,
    pub boulware_beta: f64,
    /// Turns between Pareto-set refreshes.
    pub pareto_refresh: usize,
    pub enumeration_cap: u64,
    pub nsga2: Nsga2Params,
    pub reward: RewardConfig,
    pub ddpg: DdpgConfig,
}

/// Learner settings for the agent. A short horizon keeps the threshold
/// learner from preferring to collect offers over closing deals, and the
/// warm-up lets the critic settle before it moves a pretrained actor.
pub fn agent_ddpg() -> DdpgConfig {
    DdpgConfig {
        gamma: 0.3,
        actor_warmup_sessions: 300,
        ..DdpgConfig::default()
    }
}

impl Default for DlstConfig {
    fn default() -> Self {
        Self {
            phases: crate::template::DEFAULT_PHASES,
            slots: crate::template::DEFAULT_SLOTS,
            fixed_threshold: DEFAULT_FIXED_THRESHOLD,
            boulware_beta: BOULWARE_BETA,
            pareto_refresh: 10,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            nsga2: Nsga2Params::default(),
            reward: RewardConfig::default(),
            ddpg: agent_ddpg(),
        }
    }
}

impl DlstConfig {
    pub fn layout(&self) -> TemplateLayout {
        TemplateLayout::new(self.phases, self.slots)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases == 0 || self.slots == 0 {
            return Err(Error::Config(
                "template layout needs at least one phase and one slot".into(),
            ));
        }
        if self.pareto_refresh == 0 {
            return Err(Error::Config("pareto_refresh must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fixed_threshold) {
            return Err(Error::Config("fixed_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Read-only policy networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Actors {
    pub threshold: Mlp,
    pub acceptance: Mlp,
    pub bidding: Mlp,
}

impl Actors {
    pub fn get(&self, id: LearnerId) -> &Mlp {
        match id {
            LearnerId::Threshold => &self.threshold,
            LearnerId::Acceptance => &self.acceptance,
            LearnerId::Bidding => &self.bidding,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Learners {
    pub threshold: DdpgLearner,
    pub acceptance: DdpgLearner,
    pub bidding: DdpgLearner,
}

impl Learners {
    pub fn new(config: &DlstConfig, seed: u64) -> Result<Self> {
        let layout = config.layout();
        let make = |id: LearnerId, k: u64| {
            DdpgLearner::new(
                id.state_dim(),
                id.action_dim(&layout),
                config.ddpg.clone(),
                seed.wrapping_add(k),
            )
        };
        Ok(Self {
            threshold: make(LearnerId::Threshold, 0)?,
            acceptance: make(LearnerId::Acceptance, 1)?,
            bidding: make(LearnerId::Bidding, 2)?,
        })
    }

    pub fn get(&self, id: LearnerId) -> &DdpgLearner {
        match id {
            LearnerId::Threshold => &self.threshold,
            LearnerId::Acceptance => &self.acceptance,
            LearnerId::Bidding => &self.bidding,
        }
    }

    pub fn get_mut(&mut self, id: LearnerId) -> &mut DdpgLearner {
        match id {
            LearnerId::Threshold => &mut self.threshold,
            LearnerId::Acceptance => &mut self.acceptance,
            LearnerId::Bidding => &mut self.bidding,
        }
    }

    pub fn actors(&self) -> Actors {
        Actors {
            threshold: self.threshold.actor().clone(),
            acceptance: self.acceptance.actor().clone(),
            bidding: self.bidding.actor().clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: DlstConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdStep {
    pub turn: u32,
    pub t: f64,
    pub state: Vec<f64>,
    pub action: f64,
    /// Offer being answered; `None` for the opening bid.
    pub received: Option<Bid>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptanceStep {
    pub turn: u32,
    pub state: Vec<f64>,
    /// Offer rejected at this step; `None` for the session-start state.
    pub rejected: Option<Bid>,
}

/// Everything the agent saw and chose in one session.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub profile: Arc<PreferenceProfile>,
    pub threshold: Vec<ThresholdStep>,
    pub acceptance: Vec<AcceptanceStep>,
    pub acceptance_action: Vec<f64>,
    pub bidding_state: Vec<f64>,
    pub bidding_action: Vec<f64>,
    pub acceptance_template: StrategyTemplate,
    pub bidding_template: StrategyTemplate,
    pub outcome: Option<SessionOutcome>,
}

struct Session {
    profile: Arc<PreferenceProfile>,
    space: OutcomeSpace,
    opponent: FrequencyOpponentModel,
    rng: ChaCha8Rng,
    pareto: Option<ParetoSet>,
    received: Vec<f64>,
    last_received: Option<Bid>,
    dynamic: f64,
    record: SessionRecord,
}

impl Session {
    fn view(&self, t: f64) -> SessionView<'_> {
        let domain = self.profile.domain();
        SessionView {
            t,
            received: &self.received,
            discount: self.profile.discount(),
            reservation: self.profile.reservation(),
            outcome_count: domain.outcome_count(),
            n_issues: domain.n_issues(),
        }
    }

    fn context<'a>(
        &'a self,
        config: &DlstConfig,
        t: f64,
        planned: Option<&'a Bid>,
    ) -> TacticContext<'a> {
        TacticContext {
            t,
            profile: &self.profile,
            opponent: &self.opponent,
            space: &self.space,
            received_utilities: &self.received,
            dynamic_threshold: self.dynamic,
            fixed_threshold: config.fixed_threshold,
            last_received: self.last_received.as_ref(),
            planned_bid: planned,
            pareto: self.pareto.as_ref(),
            boulware_beta: config.boulware_beta,
        }
    }

    fn refresh_pareto(&mut self, params: &Nsga2Params) {
        match nsga2(
            self.profile.domain(),
            self.profile.as_ref(),
            &self.opponent,
            params,
            &mut self.rng,
        ) {
            Ok(ps) => self.pareto = Some(ps),
            Err(e) => log::warn!("Pareto set refresh failed: {e}"),
        }
    }
}

fn probe_params(template: Option<&StrategyTemplate>, t: f64, quantile: bool) -> (f64, f64) {
    template
        .and_then(|tpl| {
            tpl.phase_at(t).tactics.iter().find_map(|tc| match *tc {
                Tactic::Quantile { a, b } if quantile => Some((a, b)),
                Tactic::Pareto { a, b } if !quantile => Some((a, b)),
                _ => None,
            })
        })
        .unwrap_or(FEATURE_PROBE)
}

/// Acceptance state at time `t` under the session's current threshold.
fn acceptance_state(
    s: &Session,
    config: &DlstConfig,
    t: f64,
    template: Option<&StrategyTemplate>,
) -> Vec<f64> {
    let (a, b) = probe_params(template, t, true);
    let ctx = s.context(config, t, None);
    let q = (a * t + b).clamp(0.0, 1.0);
    featurize_acceptance(
        &s.view(t),
        config.fixed_threshold,
        tactics::dynamic_threshold(&ctx),
        q,
        tactics::quantile_threshold(&ctx, a, b),
    )
}

/// Learning agent driven by three actors.
pub struct DlstAgent {
    name: String,
    config: Arc<DlstConfig>,
    layout: TemplateLayout,
    actors: Arc<Actors>,
    learners: Option<Box<Learners>>,
    teacher: Option<Teacher>,
    training: bool,
    session: Option<Session>,
    last: Option<SessionRecord>,
}

impl DlstAgent {
    /// Fresh agent with randomly initialised learners.
    pub fn new(config: DlstConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let learners = Learners::new(&config, seed)?;
        Ok(Self::from_learners(config, learners))
    }

    pub fn from_learners(config: DlstConfig, learners: Learners) -> Self {
        Self {
            name: AGENT_NAME.to_string(),
            layout: config.layout(),
            config: Arc::new(config),
            actors: Arc::new(learners.actors()),
            learners: Some(Box::new(learners)),
            teacher: None,
            training: false,
            session: None,
            last: None,
        }
    }

    /// Inference-only agent.
    pub fn frozen(config: DlstConfig, actors: Actors) -> Self {
        Self {
            name: AGENT_NAME.to_string(),
            layout: config.layout(),
            config: Arc::new(config),
            actors: Arc::new(actors),
            learners: None,
            teacher: None,
            training: false,
            session: None,
            last: None,
        }
    }

    /// Agent that follows `teacher` instead of its actors, used to record
    /// supervised traces in the agent's own state space.
    pub fn with_teacher(mut self, teacher: Teacher) -> Self {
        self.name = format!("{AGENT_NAME}[{}]", teacher.kind());
        self.teacher = Some(teacher);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn config(&self) -> &DlstConfig {
        &self.config
    }

    pub fn layout(&self) -> &TemplateLayout {
        &self.layout
    }

    pub fn actors(&self) -> &Actors {
        &self.actors
    }

    pub fn learners(&self) -> Option<&Learners> {
        self.learners.as_deref()
    }

    /// Mutable learners; call [`Self::sync_actors`] after changing them.
    pub fn learners_mut(&mut self) -> Option<&mut Learners> {
        self.learners.as_deref_mut()
    }

    pub fn sync_actors(&mut self) {
        if let Some(l) = &self.learners {
            self.actors = Arc::new(l.actors());
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn last_record(&self) -> Option<&SessionRecord> {
        self.last.as_ref()
    }

    fn act(&mut self, id: LearnerId, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        match (&mut self.learners, self.training) {
            (Some(l), true) => l.get_mut(id).select_action(state, explore),
            _ => self.actors.get(id).forward(state),
        }
    }

    fn threshold_action(&mut self, state: &[f64], t: f64, explore: bool) -> Result<f64> {
        if let (Some(teacher), Some(s)) = (&self.teacher, &self.session) {
            return Ok(teacher.threshold(t, &s.profile));
        }
        Ok(self.act(LearnerId::Threshold, state, explore)?[0].clamp(0.0, 1.0))
    }

    fn template_action(&mut self, id: LearnerId, state: &[f64]) -> Result<Vec<f64>> {
        if let Some(teacher) = &self.teacher {
            let template = match id {
                LearnerId::Acceptance => teacher.acceptance_template(),
                _ => teacher.bidding_template(),
            };
            return encode(&self.layout, &template);
        }
        self.act(id, state, true)
    }

    /// Templates the agent would pick at the start of a session on
    /// `profile`, without exploration.
    pub fn preview(
        &self,
        profile: &Arc<PreferenceProfile>,
        seed: u64,
    ) -> Result<(StrategyTemplate, StrategyTemplate)> {
        let mut probe = self.fork_inner(false);
        probe.begin(&SessionSetup {
            profile: profile.clone(),
            side: crate::protocol::Side::A,
            starts: true,
            rounds: 1,
            seed,
        })?;
        let s = probe.session.as_ref().expect("session started");
        Ok((
            s.record.acceptance_template.clone(),
            s.record.bidding_template.clone(),
        ))
    }

    /// One decision turn: observe, set the threshold, plan a bid.
    fn step(&mut self, t: f64, received: Option<&Bid>) -> Result<Bid> {
        let config = self.config.clone();
        let s = self
            .session
            .as_mut()
            .ok_or_else(|| Error::Protocol("dlst agent used before begin".into()))?;
        let turn = s.record.threshold.len() as u32;
        if let Some(bid) = received {
            s.opponent.observe(bid, t);
            s.received.push(s.profile.score(bid));
            s.last_received = Some(bid.clone());
        }
        if turn > 0 && turn as usize % config.pareto_refresh == 0 {
            s.refresh_pareto(&config.nsga2);
        }
        let state = featurize_threshold(&s.view(t));
        let action = self.threshold_action(&state, t, true)?;
        let s = self.session.as_mut().expect("session checked above");
        s.dynamic = action;
        s.record.threshold.push(ThresholdStep {
            turn,
            t,
            state,
            action,
            received: received.cloned(),
        });

        let bidding = s.record.bidding_template.clone();
        let mut rng = s.rng.clone();
        let bid = bidding.next_bid(&s.context(&config, t, None), &mut rng);
        s.rng = rng;
        Ok(bid)
    }

    /// Inference-only copy sharing the actors.
    pub fn frozen_copy(&self) -> DlstAgent {
        self.fork_inner(true)
    }

    fn fork_inner(&self, keep_teacher: bool) -> DlstAgent {
        DlstAgent {
            name: self.name.clone(),
            config: self.config.clone(),
            layout: self.layout.clone(),
            actors: self.actors.clone(),
            learners: None,
            teacher: if keep_teacher {
                self.teacher.clone()
            } else {
                None
            },
            training: false,
            session: None,
            last: None,
        }
    }

    /// Converts the last session into experiences, stores them and runs
    /// the configured number of updates on each learner.
    fn train_on_last(&mut self, opponent: &PreferenceProfile) -> Result<()> {
        let (Some(record), Some(learners)) = (&self.last, self.learners.as_deref_mut()) else {
            return Ok(());
        };
        let Some(outcome) = &record.outcome else {
            return Err(Error::Protocol(
                "learn called before the session ended".into(),
            ));
        };
        let cfg = self.config.reward;
        let own = |b: &Bid| record.profile.score(b);
        let opp = |b: &Bid| opponent.score(b);
        let last_turn = record.threshold.last().map_or(0, |s| s.turn);
        let terminal = match &outcome.result {
            SessionResult::Agreement { bid, .. } => RewardEvent::Agreement {
                own: own(bid),
                opp: opp(bid),
                turn: last_turn,
            },
            SessionResult::Failure(_) => RewardEvent::Failure,
        };

        let steps = &record.threshold;
        for (k, step) in steps.iter().enumerate() {
            let (reward, next, done) = match steps.get(k + 1) {
                Some(next) => {
                    let bid = next
                        .received
                        .as_ref()
                        .ok_or_else(|| Error::Protocol("turn without a received offer".into()))?;
                    let e = RewardEvent::ReceivedOffer {
                        own: own(bid),
                        opp: opp(bid),
                        turn: next.turn,
                    };
                    (reward_threshold(&cfg, &e)?, &next.state, false)
                }
                None => (reward_threshold(&cfg, &terminal)?, &step.state, true),
            };
            learners.threshold.remember(Experience {
                state: step.state.clone(),
                action: vec![step.action],
                reward,
                next_state: next.clone(),
                terminal: done,
            })?;
        }

        let acc = &record.acceptance;
        for (k, step) in acc.iter().enumerate() {
            let (reward, next, done) = match acc.get(k + 1) {
                Some(next) => {
                    let bid = next
                        .rejected
                        .as_ref()
                        .expect("rejection steps carry the rejected bid");
                    let e = RewardEvent::Rejection {
                        own: own(bid),
                        opp: opp(bid),
                        turn: next.turn,
                    };
                    (reward_acceptance(&cfg, &e)?, &next.state, false)
                }
                None => (reward_acceptance(&cfg, &terminal)?, &step.state, true),
            };
            learners.acceptance.remember(Experience {
                state: step.state.clone(),
                action: record.acceptance_action.clone(),
                reward,
                next_state: next.clone(),
                terminal: done,
            })?;
        }

        learners.bidding.remember(Experience {
            state: record.bidding_state.clone(),
            action: record.bidding_action.clone(),
            reward: reward_bidding(&cfg, &terminal)?,
            next_state: record.bidding_state.clone(),
            terminal: true,
        })?;

        for id in LearnerId::ALL {
            let learner = learners.get_mut(id);
            for _ in 0..learner.config().updates_per_session {
                if learner.update()?.is_none() {
                    break;
                }
            }
            learner.end_session();
        }
        self.sync_actors();
        Ok(())
    }

    /// Writes the configuration and all three learners under `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let learners = self
            .learners
            .as_deref()
            .ok_or_else(|| Error::Checkpoint("frozen agents have no learners to save".into()))?;
        fs::create_dir_all(dir)?;
        for id in LearnerId::ALL {
            learners.get(id).save(dir.join(id.as_str()))?;
        }
        let manifest = Manifest {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: (*self.config).clone(),
        };
        fs::write(
            dir.join("agent.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", dir.display()));
        let text = fs::read_to_string(dir.join("agent.json"))
            .map_err(|e| bad(format!("agent.json: {e}")))?;
        let m: Manifest =
            serde_json::from_str(&text).map_err(|e| bad(format!("agent.json: {e}")))?;
        if m.format != CHECKPOINT_FORMAT || m.version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported checkpoint {} v{}",
                m.format, m.version
            )));
        }
        m.config.validate()?;
        let layout = m.config.layout();
        let load = |id: LearnerId| -> Result<DdpgLearner> {
            let l = DdpgLearner::load(dir.join(id.as_str()))?;
            if l.state_dim() != id.state_dim() || l.action_dim() != id.action_dim(&layout) {
                return Err(bad(format!("{} learner has the wrong shape", id.as_str())));
            }
            Ok(l)
        };
        let learners = Learners {
            threshold: load(LearnerId::Threshold)?,
            acceptance: load(LearnerId::Acceptance)?,
            bidding: load(LearnerId::Bidding)?,
        };
        Ok(Self::from_learners(m.config, learners))
    }
}

impl Agent for DlstAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn begin(&mut self, setup: &SessionSetup) -> Result<()> {
        let config = self.config.clone();
        let profile = setup.profile.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
        let space = OutcomeSpace::new(&profile, config.enumeration_cap, &mut rng);
        let opponent = FrequencyOpponentModel::new(profile.domain());
        let placeholder =
            StrategyTemplate::single(TemplateKind::Acceptance, vec![Tactic::Dynamic])?;
        let mut s = Session {
            record: SessionRecord {
                profile: profile.clone(),
                threshold: Vec::new(),
                acceptance: Vec::new(),
                acceptance_action: Vec::new(),
                bidding_state: Vec::new(),
                bidding_action: Vec::new(),
                acceptance_template: placeholder.clone(),
                bidding_template: placeholder,
                outcome: None,
            },
            profile,
            space,
            opponent,
            rng,
            pareto: None,
            received: Vec::new(),
            last_received: None,
            dynamic: 1.0,
        };
        s.refresh_pareto(&config.nsga2);
        let opener = featurize_threshold(&s.view(0.0));
        self.session = Some(s);
        // preview of the opening threshold, not recorded as a decision
        let preview = self.threshold_action(&opener, 0.0, false)?;
        let s = self.session.as_mut().expect("just set");
        s.dynamic = preview;

        let acc_state = acceptance_state(s, &config, 0.0, None);
        let (pa, pb) = FEATURE_PROBE;
        let ctx = s.context(&config, 0.0, None);
        let mut rng = s.rng.clone();
        let candidates = [
            tactics::boulware_bid(&ctx, config.boulware_beta),
            tactics::pareto_bid(&ctx, pa, pb),
            tactics::greedy_opponent_bid(&ctx, &mut rng),
            tactics::random_above(&ctx, &mut rng),
        ]
        .map(|b| ctx.own_utility(&b));
        let bid_state = featurize_bidding(&s.view(0.0), candidates);
        s.rng = rng;

        let acc_action = self.template_action(LearnerId::Acceptance, &acc_state)?;
        let bid_action = self.template_action(LearnerId::Bidding, &bid_state)?;
        let acceptance = decode(&self.layout, TemplateKind::Acceptance, &acc_action)?;
        let bidding = decode(&self.layout, TemplateKind::Bidding, &bid_action)?;
        let s = self.session.as_mut().expect("just set");
        s.record.acceptance.push(AcceptanceStep {
            turn: 0,
            state: acc_state,
            rejected: None,
        });
        s.record.acceptance_action = acc_action;
        s.record.bidding_state = bid_state;
        s.record.bidding_action = bid_action;
        s.record.acceptance_template = acceptance;
        s.record.bidding_template = bidding;
        Ok(())
    }

    fn first_offer(&mut self, t: f64) -> Result<Bid> {
        self.step(t, None)
    }

    fn on_offer(&mut self, bid: &Bid, t: f64) -> Result<Response> {
        let planned = self.step(t, Some(bid))?;
        let config = self.config.clone();
        let s = self.session.as_mut().expect("step checks the session");
        let acceptance = s.record.acceptance_template.clone();
        if acceptance.decide_accept(&s.context(&config, t, Some(&planned))) {
            return Ok(Response::Accept);
        }
        let turn = s.record.threshold.last().map_or(0, |st| st.turn);
        let state = acceptance_state(s, &config, t, Some(&acceptance));
        s.record.acceptance.push(AcceptanceStep {
            turn,
            state,
            rejected: Some(bid.clone()),
        });
        Ok(Response::counter(planned))
    }

    fn on_outcome(&mut self, outcome: &SessionOutcome) {
        if let Some(mut s) = self.session.take() {
            s.record.outcome = Some(outcome.clone());
            self.last = Some(s.record);
        }
    }

    fn learn(&mut self, opponent: &PreferenceProfile) {
        if !self.training {
            return;
        }
        if let Err(e) = self.train_on_last(opponent) {
            log::warn!("{}: skipping update: {e}", self.name);
        }
    }

    fn set_training(&mut self, training: bool) {
        self.training = training && self.learners.is_some() && self.teacher.is_none();
        if !self.training {
            self.sync_actors();
        }
    }

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(self.fork_inner(true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{gen_domain, GenSpec, OppositionClass};
    use crate::protocol::{run_session, SessionConfig, Side};
    use crate::tactics::quantile_threshold;
    use crate::tactics::{baseline, BaselineKind};

    fn small_config() -> DlstConfig {
        let mut c = DlstConfig::default();
        c.ddpg.hidden = vec![16, 16];
        c.ddpg.buffer_capacity = 2000;
        c.ddpg.batch_size = 16;
        c
    }

    fn scenario(seed: u64) -> (Arc<PreferenceProfile>, Arc<PreferenceProfile>) {
        let g = gen_domain(&GenSpec::uniform(3, 4, seed).with_opposition(OppositionClass::Medium))
            .unwrap();
        (Arc::new(g.profile_a), Arc::new(g.profile_b))
    }

    fn play(
        agent: &mut dyn Agent,
        other: BaselineKind,
        seed: u64,
        starter: Side,
    ) -> SessionOutcome {
        let (pa, pb) = scenario(seed);
        let mut opp = baseline(other);
        let cfg = SessionConfig {
            starter,
            ..SessionConfig::default()
        };
        let (outcome, history) =
            run_session(agent, opp.as_mut(), &pa, &pb, cfg, [seed, seed + 1]).unwrap();
        history.validate(pa.domain()).unwrap();
        outcome
    }

    #[test]
    fn untrained_agent_plays_valid_sessions() {
        let mut agent = DlstAgent::new(small_config(), 1).unwrap();
        for (k, kind) in BaselineKind::ALL.into_iter().enumerate() {
            for starter in [Side::A, Side::B] {
                let outcome = play(&mut agent, kind, k as u64, starter);
                assert!(!matches!(
                    outcome.result,
                    SessionResult::Failure(crate::protocol::FailureReason::Forfeit { .. })
                ));
                let rec = agent.last_record().unwrap();
                assert!(!rec.threshold.is_empty());
                assert!(rec
                    .threshold
                    .iter()
                    .all(|s| s.state.len() == THRESHOLD_FEATURES));
                assert!(rec
                    .acceptance
                    .iter()
                    .all(|s| s.state.len() == ACCEPTANCE_FEATURES));
            }
        }
    }

    #[test]
    fn opener_bidding_features_see_the_best_bid() {
        let mut agent = DlstAgent::new(small_config(), 2).unwrap();
        play(&mut agent, BaselineKind::Boulware, 3, Side::A);
        let rec = agent.last_record().unwrap();
        assert_eq!(rec.bidding_state.len(), BIDDING_FEATURES);
        assert!((rec.bidding_state[THRESHOLD_FEATURES] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn acceptance_quantile_feature_matches_tactic() {
        let mut agent = DlstAgent::new(small_config(), 4).unwrap();
        play(&mut agent, BaselineKind::Conceder, 5, Side::B);
        let rec = agent.last_record().unwrap();
        for step in rec.acceptance.iter().skip(1) {
            let k = step.turn as usize;
            let t = rec.threshold[k].t;
            let received: Vec<f64> = rec.threshold[..=k]
                .iter()
                .filter_map(|s| s.received.as_ref())
                .map(|bid| rec.profile.score(bid))
                .collect();
            let (qa, qb) = probe_params(Some(&rec.acceptance_template), t, true);
            let space = OutcomeSpace::new(&rec.profile, 1000, &mut ChaCha8Rng::seed_from_u64(0));
            let opponent = FrequencyOpponentModel::new(rec.profile.domain());
            let ctx = TacticContext {
                t,
                profile: &rec.profile,
                opponent: &opponent,
                space: &space,
                received_utilities: &received,
                dynamic_threshold: rec.threshold[k].action,
                fixed_threshold: DEFAULT_FIXED_THRESHOLD,
                last_received: None,
                planned_bid: None,
                pareto: None,
                boulware_beta: BOULWARE_BETA,
            };
            assert_eq!(
                step.state[THRESHOLD_FEATURES + 3],
                (qa * t + qb).clamp(0.0, 1.0)
            );
            assert_eq!(
                step.state[THRESHOLD_FEATURES + 4],
                quantile_threshold(&ctx, qa, qb)
            );
            assert_eq!(
                step.state[THRESHOLD_FEATURES + 1],
                tactics::dynamic_threshold(&ctx)
            );
        }
    }

    #[test]
    fn feature_vectors_keep_their_length() {
        let mut agent = DlstAgent::new(small_config(), 6).unwrap();
        play(&mut agent, BaselineKind::Linear, 7, Side::A);
        let rec = agent.last_record().unwrap();
        assert!(rec
            .threshold
            .iter()
            .all(|s| s.state.len() == THRESHOLD_FEATURES));
        assert!(rec
            .threshold
            .iter()
            .all(|s| s.state.iter().all(|x| (0.0..=1.0).contains(x))));
    }

    /// Opponent that replays a fixed bid list regardless of its profile.
    struct Replay {
        bids: Vec<Bid>,
        k: usize,
    }

    impl Agent for Replay {
        fn name(&self) -> &str {
            "replay"
        }
        fn begin(&mut self, _: &SessionSetup) -> Result<()> {
            self.k = 0;
            Ok(())
        }
        fn first_offer(&mut self, _: f64) -> Result<Bid> {
            self.k += 1;
            Ok(self.bids[0].clone())
        }
        fn on_offer(&mut self, _: &Bid, _: f64) -> Result<Response> {
            self.k += 1;
            Ok(Response::counter(
                self.bids[self.k % self.bids.len()].clone(),
            ))
        }
        fn on_outcome(&mut self, _: &SessionOutcome) {}
        fn fork(&self) -> Box<dyn Agent> {
            Box::new(Replay {
                bids: self.bids.clone(),
                k: 0,
            })
        }
    }

    /// Changing only the opponent's true preferences leaves every policy
    /// input unchanged.
    #[test]
    fn features_never_depend_on_opponent_preferences() {
        let (pa, pb) = scenario(11);
        let (_, pb2) = scenario(12);
        let domain = pa.domain().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bids: Vec<Bid> = (0..7).map(|_| domain.random_bid(&mut rng)).collect();
        let mut runs = Vec::new();
        for opp_profile in [&pb, &pb2] {
            let opp_profile = Arc::new(
                PreferenceProfile::new(
                    domain.clone(),
                    opp_profile.weights().to_vec(),
                    opp_profile.evaluations().to_vec(),
                    opp_profile.reservation(),
                    opp_profile.discount(),
                )
                .unwrap(),
            );
            let mut agent = DlstAgent::new(small_config(), 3).unwrap();
            let mut other = Replay {
                bids: bids.clone(),
                k: 0,
            };
            run_session(
                &mut agent,
                &mut other,
                &pa,
                &opp_profile,
                SessionConfig::default(),
                [5, 6],
            )
            .unwrap();
            let rec = agent.last_record().unwrap().clone();
            runs.push(rec);
        }
        let (r1, r2) = (&runs[0], &runs[1]);
        assert_eq!(r1.threshold, r2.threshold);
        assert_eq!(r1.acceptance, r2.acceptance);
        assert_eq!(r1.bidding_state, r2.bidding_state);
    }

    #[test]
    fn training_fills_buffers_and_frozen_agents_do_not_learn() {
        let mut agent = DlstAgent::new(small_config(), 8).unwrap();
        agent.set_training(true);
        let (_, pb) = scenario(1);
        for seed in 0..4 {
            play(&mut agent, BaselineKind::Conceder, seed, Side::A);
            agent.learn(&pb);
        }
        let l = agent.learners().unwrap();
        assert_eq!(l.bidding.buffer().len(), 4);
        assert!(l.threshold.buffer().len() >= 4);
        assert_eq!(l.threshold.sessions(), 4);
        assert!(l.threshold.buffer().iter().filter(|e| e.terminal).count() == 4);

        let mut frozen = agent.fork();
        let before = agent.actors().clone();
        play(frozen.as_mut(), BaselineKind::Conceder, 9, Side::B);
        frozen.learn(&pb);
        agent.set_training(false);
        agent.learn(&pb);
        assert_eq!(agent.actors(), &before);
    }

    #[test]
    fn frozen_sessions_are_reproducible() {
        let agent = DlstAgent::new(small_config(), 10).unwrap();
        let mut a = agent.fork();
        let mut b = agent.fork();
        let oa = play(a.as_mut(), BaselineKind::Random, 4, Side::A);
        let ob = play(b.as_mut(), BaselineKind::Random, 4, Side::A);
        assert_eq!(oa, ob);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let agent = DlstAgent::new(small_config(), 12).unwrap();
        agent.save(dir.path()).unwrap();
        let back = DlstAgent::load(dir.path()).unwrap();
        assert_eq!(back.actors(), agent.actors());
        assert_eq!(back.config(), agent.config());
        let (pa, _) = scenario(2);
        assert_eq!(
            back.preview(&pa, 0).unwrap(),
            agent.preview(&pa, 0).unwrap()
        );
    }

    #[test]
    fn boulware_teacher_reproduces_the_baseline() {
        let teacher = Teacher::new(BaselineKind::Boulware).unwrap();
        for seed in 0..5 {
            let mut student = DlstAgent::new(small_config(), 0)
                .unwrap()
                .with_teacher(teacher.clone());
            let mut script = baseline(BaselineKind::Boulware);
            let a = play(&mut student, BaselineKind::Conceder, seed, Side::A);
            let b = play(script.as_mut(), BaselineKind::Conceder, seed, Side::A);
            assert_eq!(a.is_agreement(), b.is_agreement());
            if let (Some(ta), Some(tb)) = (a.agreement_time(), b.agreement_time()) {
                assert!((ta - tb).abs() <= 2.0 / 180.0 + 1e-12, "{ta} vs {tb}");
            }
        }
    }
}
