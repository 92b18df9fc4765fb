//! Reinforcement-learning pieces of the learning agent: state features,
//! reward tables, replay memory and DDPG learners.

mod ddpg;
mod replay;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ddpg::{DdpgConfig, DdpgLearner, Losses, CHECKPOINT_VERSION};
pub use replay::{Experience, ReplayBuffer};

pub const THRESHOLD_FEATURES: usize = 9;
pub const ACCEPTANCE_FEATURES: usize = THRESHOLD_FEATURES + 5;
pub const BIDDING_FEATURES: usize = THRESHOLD_FEATURES + 4;
/// RL temporal discount per turn.
pub const DEFAULT_TEMPORAL_DISCOUNT: f64 = 0.99;
/// Outcome-space size mapped to 1 by the log-scale feature.
const OUTCOME_SCALE: f64 = 1e6;

/// What the agent knows about the session, independent of template choice.
#[derive(Debug, Clone, Copy)]
pub struct SessionView<'a> {
    pub t: f64,
    /// Own utility of every received bid, in order.
    pub received: &'a [f64],
    pub discount: f64,
    pub reservation: f64,
    pub outcome_count: u64,
    pub n_issues: usize,
}

/// Mean, population standard deviation and maximum; zeros when empty.
fn stats(xs: &[f64]) -> (f64, f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let best = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), best)
}

/// `[O_best, O_avg, O_sd, U(last received), d_D, u_res, log|Ω|, n/10, t]`.
pub fn featurize_threshold(view: &SessionView) -> Vec<f64> {
    let (avg, sd, best) = stats(view.received);
    let last = view.received.last().copied().unwrap_or(0.0);
    let size = ((view.outcome_count.max(1) as f64).ln() / OUTCOME_SCALE.ln()).clamp(0.0, 1.0);
    let issues = (view.n_issues as f64 / 10.0).min(1.0);
    vec![
        best,
        avg,
        sd,
        last,
        view.discount,
        view.reservation,
        size,
        issues,
        view.t.clamp(0.0, 1.0),
    ]
}

/// Threshold features followed by `[u, ū_t, U(last received), q, Q(q)]`.
pub fn featurize_acceptance(
    view: &SessionView,
    fixed: f64,
    dynamic: f64,
    q: f64,
    quantile: f64,
) -> Vec<f64> {
    let mut f = featurize_threshold(view);
    let last = view.received.last().copied().unwrap_or(0.0);
    f.extend([fixed, dynamic, last, q.clamp(0.0, 1.0), quantile]);
    f
}

/// Threshold features followed by the own utilities of the Boulware,
/// Pareto, greedy and random-above candidate bids.
pub fn featurize_bidding(view: &SessionView, candidates: [f64; 4]) -> Vec<f64> {
    let mut f = featurize_threshold(view);
    f.extend(candidates);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Temporal discount `d`, applied per turn.
    pub temporal_discount: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            temporal_discount: DEFAULT_TEMPORAL_DISCOUNT,
        }
    }
}

impl RewardConfig {
    fn discounted(&self, u: f64, turn: u32) -> f64 {
        u * self.temporal_discount.powi(turn as i32)
    }
}

/// Environment events that earn rewards. `own` and `opp` are the undiscounted
/// utilities of the bid in question for the agent and for its opponent;
/// `turn` counts the agent's turns so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardEvent {
    Agreement { own: f64, opp: f64, turn: u32 },
    ReceivedOffer { own: f64, opp: f64, turn: u32 },
    Rejection { own: f64, opp: f64, turn: u32 },
    Failure,
}

impl RewardEvent {
    fn check(&self) -> Result<()> {
        match *self {
            RewardEvent::Agreement { own, opp, .. }
            | RewardEvent::ReceivedOffer { own, opp, .. }
            | RewardEvent::Rejection { own, opp, .. } => {
                if !(0.0..=1.0).contains(&own) || !(0.0..=1.0).contains(&opp) {
                    return Err(Error::validation(format!(
                        "reward event utilities ({own}, {opp}) outside [0, 1]"
                    )));
                }
                Ok(())
            }
            RewardEvent::Failure => Ok(()),
        }
    }
}

pub fn reward_threshold(cfg: &RewardConfig, event: &RewardEvent) -> Result<f64> {
    event.check()?;
    Ok(match *event {
        RewardEvent::Agreement { own, turn, .. } | RewardEvent::ReceivedOffer { own, turn, .. } => {
            cfg.discounted(own, turn)
        }
        _ => -1.0,
    })
}

pub fn reward_bidding(cfg: &RewardConfig, event: &RewardEvent) -> Result<f64> {
    event.check()?;
    Ok(match *event {
        RewardEvent::Agreement { own, turn, .. } => cfg.discounted(own, turn),
        _ => -1.0,
    })
}

/// Rewards agreements that favour the agent and rejections of offers that
/// favoured the opponent.
pub fn reward_acceptance(cfg: &RewardConfig, event: &RewardEvent) -> Result<f64> {
    event.check()?;
    Ok(match *event {
        RewardEvent::Agreement { own, opp, turn } => {
            let (u, o) = (cfg.discounted(own, turn), cfg.discounted(opp, turn));
            if o <= u {
                u
            } else {
                -1.0
            }
        }
        RewardEvent::Rejection { own, opp, turn } => {
            let (u, o) = (cfg.discounted(own, turn), cfg.discounted(opp, turn));
            if o >= u {
                u
            } else {
                -1.0
            }
        }
        _ => -1.0,
    })
}
