use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    concession_floor, concession_target, OutcomeSpace, BOULWARE_BETA, CONCEDER_BETA, LINEAR_BETA,
};
use crate::domain::{Additive, Bid, PreferenceProfile, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::protocol::{Agent, Response, SessionOutcome, SessionSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Boulware,
    Conceder,
    Linear,
    Hardliner,
    Random,
    Acceptor,
    #[serde(rename = "tit-for-tat", alias = "tft")]
    TitForTat,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::Boulware,
        BaselineKind::Conceder,
        BaselineKind::Linear,
        BaselineKind::Hardliner,
        BaselineKind::Random,
        BaselineKind::Acceptor,
        BaselineKind::TitForTat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Boulware => "boulware",
            BaselineKind::Conceder => "conceder",
            BaselineKind::Linear => "linear",
            BaselineKind::Hardliner => "hardliner",
            BaselineKind::Random => "random",
            BaselineKind::Acceptor => "acceptor",
            BaselineKind::TitForTat => "tit-for-tat",
        }
    }

    /// Concession exponent of the time-dependent kinds.
    pub fn beta(self) -> Option<f64> {
        match self {
            BaselineKind::Boulware => Some(BOULWARE_BETA),
            BaselineKind::Conceder => Some(CONCEDER_BETA),
            BaselineKind::Linear => Some(LINEAR_BETA),
            _ => None,
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s || (s == "tft" && *k == BaselineKind::TitForTat))
            .ok_or_else(|| Error::Config(format!("unknown baseline '{s}'")))
    }
}

pub fn baseline(kind: BaselineKind) -> Box<dyn Agent> {
    match kind {
        BaselineKind::Boulware | BaselineKind::Conceder | BaselineKind::Linear => {
            Box::new(TimeDependent::new(kind.as_str(), kind.beta().unwrap()))
        }
        BaselineKind::Hardliner => Box::new(Hardliner::default()),
        BaselineKind::Random => Box::new(RandomAgent::default()),
        BaselineKind::Acceptor => Box::new(Acceptor::default()),
        BaselineKind::TitForTat => Box::new(TitForTat::default()),
    }
}

/// Per-session state shared by the scripted agents.
#[derive(Debug, Clone)]
struct Session {
    profile: Arc<PreferenceProfile>,
    space: Arc<OutcomeSpace>,
    rng: ChaCha8Rng,
}

impl Session {
    fn start(setup: &SessionSetup) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
        let space = OutcomeSpace::new(&setup.profile, DEFAULT_ENUMERATION_CAP, &mut rng);
        Self {
            profile: setup.profile.clone(),
            space: Arc::new(space),
            rng,
        }
    }

    fn floor(&self) -> f64 {
        concession_floor(&self.profile)
    }
}

fn active<'a>(session: &'a mut Option<Session>, name: &str) -> Result<&'a mut Session> {
    session
        .as_mut()
        .ok_or_else(|| Error::Protocol(format!("agent '{name}' used before begin")))
}

/// Bids at the concession target and accepts anything that meets it.
#[derive(Debug, Clone)]
pub struct TimeDependent {
    name: String,
    beta: f64,
    session: Option<Session>,
}

impl TimeDependent {
    pub fn new(name: impl Into<String>, beta: f64) -> Self {
        Self {
            name: name.into(),
            beta,
            session: None,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Agent for TimeDependent {
    fn name(&self) -> &str {
        &self.name
    }

    fn begin(&mut self, setup: &SessionSetup) -> Result<()> {
        self.session = Some(Session::start(setup));
        Ok(())
    }

    fn first_offer(&mut self, t: f64) -> Result<Bid> {
        let beta = self.beta;
        let s = active(&mut self.session, &self.name)?;
        Ok(s.space
            .closest_above(concession_target(t, beta, s.floor(), 1.0))
            .0)
    }

    fn on_offer(&mut self, bid: &Bid, t: f64) -> Result<Response> {
        let beta = self.beta;
        let s = active(&mut self.session, &self.name)?;
        let target = concession_target(t, beta, s.floor(), 1.0);
        if s.profile.score(bid) >= target {
            return Ok(Response::Accept);
        }
        Ok(Response::counter(s.space.closest_above(target).0))
    }

    fn on_outcome(&mut self, _outcome: &SessionOutcome) {}

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Repeats its best bid and never accepts.
#[derive(Debug, Clone, Default)]
pub struct Hardliner {
    best: Option<Bid>,
}

impl Agent for Hardliner {
    fn name(&self) -> &str {
        "hardliner"
    }

    fn begin(&mut self, setup: &SessionSetup) -> Result<()> {
        self.best = Some(setup.profile.best_bid());
        Ok(())
    }

    fn first_offer(&mut self, _t: f64) -> Result<Bid> {
        self.best
            .clone()
            .ok_or_else(|| Error::Protocol("agent 'hardliner' used before begin".into()))
    }

    fn on_offer(&mut self, _bid: &Bid, t: f64) -> Result<Response> {
        Ok(Response::counter(self.first_offer(t)?))
    }

    fn on_outcome(&mut self, _outcome: &SessionOutcome) {}

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Accepts whatever it receives; opens with its best bid.
#[derive(Debug, Clone, Default)]
pub struct Acceptor {
    best: Option<Bid>,
}

impl Agent for Acceptor {
    fn name(&self) -> &str {
        "acceptor"
    }

    fn begin(&mut self, setup: &SessionSetup) -> Result<()> {
        self.best = Some(setup.profile.best_bid());
        Ok(())
    }

    fn first_offer(&mut self, _t: f64) -> Result<Bid> {
        self.best
            .clone()
            .ok_or_else(|| Error::Protocol("agent 'acceptor' used before begin".into()))
    }

    fn on_offer(&mut self, _bid: &Bid, _t: f64) -> Result<Response> {
        Ok(Response::Accept)
    }

    fn on_outcome(&mut self, _outcome: &SessionOutcome) {}

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Offers uniformly among bids above the concession floor; accepts an offer
/// at least as good as the bid it would otherwise send.
#[derive(Debug, Clone, Default)]
pub struct RandomAgent {
    session: Option<Session>,
}

impl Agent for RandomAgent {
    fn name(&self) -> &str {
        "random"
    }

    fn begin(&mut self, setup: &SessionSetup) -> Result<()> {
        self.session = Some(Session::start(setup));
        Ok(())
    }

    fn first_offer(&mut self, _t: f64) -> Result<Bid> {
        let s = active(&mut self.session, "random")?;
        let floor = s.floor();
        Ok(s.space.random_at_least(floor, &mut s.rng))
    }

    fn on_offer(&mut self, bid: &Bid, t: f64) -> Result<Response> {
        let next = self.first_offer(t)?;
        let s = active(&mut self.session, "random")?;
        if s.profile.score(bid) >= s.profile.score(&next) {
            Ok(Response::Accept)
        } else {
            Ok(Response::counter(next))
        }
    }

    fn on_outcome(&mut self, _outcome: &SessionOutcome) {}

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

/// Mirrors the opponent's concession, blended evenly with a conceder curve.
///
/// The opponent's concession `c` is how much the own utility of its offers
/// has risen since its first offer.
#[derive(Debug, Clone, Default)]
pub struct TitForTat {
    session: Option<Session>,
    first_received: Option<f64>,
    best_received: f64,
}

impl TitForTat {
    fn target(&self, s: &Session, t: f64) -> f64 {
        let c = self
            .first_received
            .map_or(0.0, |first| (self.best_received - first).max(0.0));
        let conceder = concession_target(t, CONCEDER_BETA, s.floor(), 1.0);
        (0.5 * (1.0 - c) + 0.5 * conceder).max(s.floor())
    }
}

impl Agent for TitForTat {
    fn name(&self) -> &str {
        "tit-for-tat"
    }

    fn begin(&mut self, setup: &SessionSetup) -> Result<()> {
        self.session = Some(Session::start(setup));
        self.first_received = None;
        self.best_received = 0.0;
        Ok(())
    }

    fn first_offer(&mut self, _t: f64) -> Result<Bid> {
        let s = active(&mut self.session, "tit-for-tat")?;
        Ok(s.space.best().clone())
    }

    fn on_offer(&mut self, bid: &Bid, t: f64) -> Result<Response> {
        let s = self
            .session
            .take()
            .ok_or_else(|| Error::Protocol("agent 'tit-for-tat' used before begin".into()))?;
        let u = s.profile.score(bid);
        self.first_received.get_or_insert(u);
        self.best_received = self.best_received.max(u);
        let target = self.target(&s, t);
        let response = if u >= target {
            Response::Accept
        } else {
            Response::counter(s.space.closest_above(target).0)
        };
        self.session = Some(s);
        Ok(response)
    }

    fn on_outcome(&mut self, _outcome: &SessionOutcome) {}

    fn fork(&self) -> Box<dyn Agent> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{gen_domain, GenSpec, OppositionClass};
    use crate::protocol::{run_session, SessionConfig, SessionResult, Side};

    fn scenario(seed: u64, class: OppositionClass) -> crate::domain::GeneratedScenario {
        gen_domain(&GenSpec::uniform(3, 5, seed).with_opposition(class)).unwrap()
    }

    fn play(a: BaselineKind, b: BaselineKind, seed: u64) -> crate::protocol::SessionOutcome {
        play_in(a, b, seed, OppositionClass::Medium)
    }

    fn play_in(
        a: BaselineKind,
        b: BaselineKind,
        seed: u64,
        class: OppositionClass,
    ) -> crate::protocol::SessionOutcome {
        let s = scenario(seed, class);
        let (pa, pb) = (Arc::new(s.profile_a), Arc::new(s.profile_b));
        let (mut x, mut y) = (baseline(a), baseline(b));
        run_session(
            x.as_mut(),
            y.as_mut(),
            &pa,
            &pb,
            SessionConfig::default(),
            [seed, seed + 1],
        )
        .unwrap()
        .0
    }

    #[test]
    fn names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.as_str().parse::<BaselineKind>().unwrap(), k);
            assert_eq!(baseline(k).name(), k.as_str());
        }
        assert!("nope".parse::<BaselineKind>().is_err());
    }

    #[test]
    fn conceder_yields_to_hardliner() {
        let mut agreed = 0;
        for seed in 0..20 {
            let s = scenario(seed, OppositionClass::Low);
            let reachable =
                s.profile_a.score(&s.profile_b.best_bid()) >= concession_floor(&s.profile_a);
            let out = play_in(
                BaselineKind::Conceder,
                BaselineKind::Hardliner,
                seed,
                OppositionClass::Low,
            );
            // the conceder never goes below its floor
            assert_eq!(out.is_agreement(), reachable, "seed {seed}");
            if reachable {
                agreed += 1;
                assert!(
                    out.utility(Side::B) >= 0.9,
                    "seed {seed}: {}",
                    out.utility(Side::B)
                );
            }
        }
        assert!(agreed >= 10, "only {agreed} reachable scenarios");
    }

    #[test]
    fn hardliners_never_agree() {
        let out = play(BaselineKind::Hardliner, BaselineKind::Hardliner, 3);
        assert!(matches!(out.result, SessionResult::Failure(_)));
    }

    #[test]
    fn acceptor_takes_first_offer() {
        let out = play(BaselineKind::Boulware, BaselineKind::Acceptor, 4);
        assert!(out.is_agreement());
        assert_eq!(out.agreement_time(), Some(1.0 / 180.0));
        assert_eq!(out.utility(Side::A), 1.0);
    }

    #[test]
    fn boulware_holds_out_longer_than_conceder() {
        let mean_time = |k: BaselineKind| {
            let times: Vec<f64> = (0..10)
                .filter_map(|seed| play(k, k, seed).agreement_time())
                .collect();
            assert_eq!(times.len(), 10, "{k} self-play failed");
            times.iter().sum::<f64>() / times.len() as f64
        };
        let (boulware, conceder) = (
            mean_time(BaselineKind::Boulware),
            mean_time(BaselineKind::Conceder),
        );
        assert!(
            boulware > conceder,
            "boulware {boulware} vs conceder {conceder}"
        );
    }

    #[test]
    fn every_pair_completes_with_valid_history() {
        let s = gen_domain(&GenSpec::uniform(3, 4, 8)).unwrap();
        let (pa, pb) = (Arc::new(s.profile_a), Arc::new(s.profile_b));
        for a in BaselineKind::ALL {
            for b in BaselineKind::ALL {
                let (mut x, mut y) = (baseline(a), baseline(b));
                let (out, hist) = run_session(
                    x.as_mut(),
                    y.as_mut(),
                    &pa,
                    &pb,
                    SessionConfig::default(),
                    [1, 2],
                )
                .unwrap();
                hist.validate(&s.domain).unwrap();
                assert!(!matches!(
                    out.result,
                    SessionResult::Failure(crate::protocol::FailureReason::Forfeit { .. })
                ));
            }
        }
    }

    #[test]
    fn tit_for_tat_concedes_to_a_conceder() {
        let out = play(BaselineKind::Conceder, BaselineKind::TitForTat, 11);
        assert!(out.is_agreement());
    }
}
