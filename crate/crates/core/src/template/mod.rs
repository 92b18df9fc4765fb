//! Phased strategy templates.
//!
//! A template splits the normalized timeline into phases. Each phase selects
//! a subset of tactics from a fixed menu. Acceptance templates accept an
//! offer when its utility clears every selected threshold; bidding templates
//! pick among the bids proposed by the selected tactics.
//!
//! Templates are produced from a learner's action vector by [`decode`] and
//! turned back into one by [`encode`]. The action layout is
//! `[raw durations; per phase, per slot: (choice, a, b)]`.

mod render;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Additive, Bid};
use crate::error::{Error, Result};
use crate::tactics::{self, TacticContext};

pub use render::{parse, render, render_with, Precision};

pub const DEFAULT_PHASES: usize = 3;
pub const DEFAULT_SLOTS: usize = 4;
/// Lower bound on a raw phase duration before normalization.
pub const DURATION_FLOOR: f64 = 0.05;
pub const A_RANGE: (f64, f64) = (-1.0, 1.0);
pub const B_MAX: f64 = 1.5;
const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Acceptance,
    Bidding,
}

impl TemplateKind {
    /// The tactic menu; slot `j` of a phase offers `menu()[j % 4]`.
    pub fn menu(self) -> [TacticType; 4] {
        match self {
            TemplateKind::Acceptance => [
                TacticType::NextBid,
                TacticType::Quantile,
                TacticType::Dynamic,
                TacticType::Fixed,
            ],
            TemplateKind::Bidding => [
                TacticType::Boulware,
                TacticType::Pareto,
                TacticType::Greedy,
                TacticType::RandomAbove,
            ],
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemplateKind::Acceptance => "acceptance",
            TemplateKind::Bidding => "bidding",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TacticType {
    NextBid,
    Quantile,
    Dynamic,
    Fixed,
    Boulware,
    Pareto,
    Greedy,
    RandomAbove,
}

impl TacticType {
    fn with_params(self, a: f64, b: f64) -> Tactic {
        match self {
            TacticType::NextBid => Tactic::NextBid,
            TacticType::Quantile => Tactic::Quantile { a, b },
            TacticType::Dynamic => Tactic::Dynamic,
            TacticType::Fixed => Tactic::Fixed,
            TacticType::Boulware => Tactic::Boulware,
            TacticType::Pareto => Tactic::Pareto { a, b },
            TacticType::Greedy => Tactic::Greedy,
            TacticType::RandomAbove => Tactic::RandomAbove,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tactic", rename_all = "snake_case")]
pub enum Tactic {
    /// Own utility of the bid about to be proposed.
    NextBid,
    /// Quantile `Q(a·t + b)` of received utilities.
    Quantile {
        a: f64,
        b: f64,
    },
    /// Learned dynamic threshold.
    Dynamic,
    /// Configured fixed threshold.
    Fixed,
    Boulware,
    /// TOPSIS pick from the Pareto set with own weight `a·t + b`.
    Pareto {
        a: f64,
        b: f64,
    },
    Greedy,
    RandomAbove,
}

impl Tactic {
    pub fn kind(&self) -> TacticType {
        match self {
            Tactic::NextBid => TacticType::NextBid,
            Tactic::Quantile { .. } => TacticType::Quantile,
            Tactic::Dynamic => TacticType::Dynamic,
            Tactic::Fixed => TacticType::Fixed,
            Tactic::Boulware => TacticType::Boulware,
            Tactic::Pareto { .. } => TacticType::Pareto,
            Tactic::Greedy => TacticType::Greedy,
            Tactic::RandomAbove => TacticType::RandomAbove,
        }
    }

    pub fn template_kind(&self) -> TemplateKind {
        match self {
            Tactic::NextBid | Tactic::Quantile { .. } | Tactic::Dynamic | Tactic::Fixed => {
                TemplateKind::Acceptance
            }
            _ => TemplateKind::Bidding,
        }
    }

    fn params(&self) -> Option<(f64, f64)> {
        match *self {
            Tactic::Quantile { a, b } | Tactic::Pareto { a, b } => Some((a, b)),
            _ => None,
        }
    }

    /// Threshold of an acceptance tactic.
    pub fn threshold(&self, ctx: &TacticContext) -> f64 {
        match *self {
            Tactic::NextBid => tactics::next_bid_utility(ctx),
            Tactic::Quantile { a, b } => tactics::quantile_threshold(ctx, a, b),
            Tactic::Dynamic => tactics::dynamic_threshold(ctx),
            Tactic::Fixed => tactics::fixed_threshold(ctx),
            _ => panic!("{self:?} is not an acceptance tactic"),
        }
    }

    /// Bid proposed by a bidding tactic.
    pub fn bid<R: Rng + ?Sized>(&self, ctx: &TacticContext, rng: &mut R) -> Bid {
        match *self {
            Tactic::Boulware => tactics::boulware_bid(ctx, ctx.boulware_beta),
            Tactic::Pareto { a, b } => tactics::pareto_bid(ctx, a, b),
            Tactic::Greedy => tactics::greedy_opponent_bid(ctx, rng),
            Tactic::RandomAbove => tactics::random_above(ctx, rng),
            _ => panic!("{self:?} is not a bidding tactic"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start: f64,
    pub end: f64,
    /// Selected tactics in slot order.
    pub tactics: Vec<Tactic>,
}

impl Phase {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate")]
pub struct StrategyTemplate {
    kind: TemplateKind,
    phases: Vec<Phase>,
}

#[derive(Deserialize)]
struct RawTemplate {
    kind: TemplateKind,
    phases: Vec<Phase>,
}

impl TryFrom<RawTemplate> for StrategyTemplate {
    type Error = Error;

    fn try_from(raw: RawTemplate) -> Result<Self> {
        StrategyTemplate::new(raw.kind, raw.phases)
    }
}

impl StrategyTemplate {
    pub fn new(kind: TemplateKind, phases: Vec<Phase>) -> Result<Self> {
        let bad = |msg: String| Err(Error::Decode(msg));
        if phases.is_empty() {
            return bad("a template needs at least one phase".into());
        }
        if phases[0].start != 0.0 {
            return bad(format!(
                "first phase must start at 0, not {}",
                phases[0].start
            ));
        }
        if phases.last().unwrap().end != 1.0 {
            return bad("last phase must end at 1".into());
        }
        for (i, p) in phases.iter().enumerate() {
            if !(p.end > p.start) {
                return bad(format!("phase {} has non-positive duration", i + 1));
            }
            if i + 1 < phases.len() && p.end != phases[i + 1].start {
                return bad(format!("phases {} and {} are not contiguous", i + 1, i + 2));
            }
            if p.tactics.is_empty() {
                return bad(format!("phase {} selects no tactic", i + 1));
            }
            if let Some(t) = p.tactics.iter().find(|t| t.template_kind() != kind) {
                return bad(format!("{t:?} cannot appear in a {kind} template"));
            }
        }
        let total: f64 = phases.iter().map(Phase::duration).sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return bad(format!("phase durations sum to {total}"));
        }
        Ok(Self { kind, phases })
    }

    /// One phase covering the whole timeline.
    pub fn single(kind: TemplateKind, tactics: Vec<Tactic>) -> Result<Self> {
        Self::new(
            kind,
            vec![Phase {
                start: 0.0,
                end: 1.0,
                tactics,
            }],
        )
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    /// Index of the phase containing `t`; the last phase is closed at 1.
    pub fn phase_index(&self, t: f64) -> usize {
        let t = t.clamp(0.0, 1.0);
        self.phases
            .iter()
            .position(|p| t < p.end)
            .unwrap_or(self.phases.len() - 1)
    }

    pub fn phase_at(&self, t: f64) -> &Phase {
        &self.phases[self.phase_index(t)]
    }

    /// Max of the selected thresholds at `ctx.t`.
    pub fn acceptance_threshold(&self, ctx: &TacticContext) -> f64 {
        self.phase_at(ctx.t)
            .tactics
            .iter()
            .map(|tc| tc.threshold(ctx))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Accepts the last received bid iff its own utility clears every
    /// selected threshold. Rejects when nothing has been received.
    pub fn decide_accept(&self, ctx: &TacticContext) -> bool {
        assert_eq!(
            self.kind,
            TemplateKind::Acceptance,
            "decide_accept needs an acceptance template"
        );
        match ctx.last_received {
            Some(bid) => ctx.own_utility(bid) >= self.acceptance_threshold(ctx),
            None => false,
        }
    }

    /// Candidate bids of the active phase, in slot order.
    pub fn candidates<R: Rng + ?Sized>(&self, ctx: &TacticContext, rng: &mut R) -> Vec<Bid> {
        self.phase_at(ctx.t)
            .tactics
            .iter()
            .map(|tc| tc.bid(ctx, rng))
            .collect()
    }

    /// Among candidates clearing the dynamic threshold, the one the opponent
    /// model rates highest; otherwise the candidate best for us.
    pub fn next_bid<R: Rng + ?Sized>(&self, ctx: &TacticContext, rng: &mut R) -> Bid {
        assert_eq!(
            self.kind,
            TemplateKind::Bidding,
            "next_bid needs a bidding template"
        );
        let candidates = self.candidates(ctx, rng);
        let scored: Vec<(f64, f64)> = candidates
            .iter()
            .map(|b| (ctx.own_utility(b), ctx.opponent.score(b)))
            .collect();
        choose_bid(&scored, tactics::dynamic_threshold(ctx))
            .map_or_else(|| ctx.space.best().clone(), |i| candidates[i].clone())
    }
}

/// Index picked by the bidding combination rule from `(own, opp)` scores.
/// Earlier candidates win ties.
pub fn choose_bid(scored: &[(f64, f64)], threshold: f64) -> Option<usize> {
    let first_max = |key: &dyn Fn(usize) -> (f64, f64), idx: &mut dyn Iterator<Item = usize>| {
        idx.fold(None, |best: Option<usize>, i| match best {
            Some(b) if key(b) >= key(i) => Some(b),
            _ => Some(i),
        })
    };
    let above: Vec<usize> = (0..scored.len())
        .filter(|&i| scored[i].0 >= threshold)
        .collect();
    if !above.is_empty() {
        first_max(&|i| (scored[i].1, scored[i].0), &mut above.into_iter())
    } else {
        first_max(&|i| (scored[i].0, 0.0), &mut (0..scored.len()))
    }
}

/// Shape of the action vector: number of phases and tactic slots per phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateLayout {
    pub slots: Vec<usize>,
}

impl Default for TemplateLayout {
    fn default() -> Self {
        Self {
            slots: vec![DEFAULT_SLOTS; DEFAULT_PHASES],
        }
    }
}

impl TemplateLayout {
    pub fn new(phases: usize, slots: usize) -> Self {
        Self {
            slots: vec![slots; phases],
        }
    }

    pub fn phases(&self) -> usize {
        self.slots.len()
    }

    pub fn action_len(&self) -> usize {
        self.phases() + 3 * self.slots.iter().sum::<usize>()
    }
}

/// Builds a template from an action vector in `[0, 1]^L`.
///
/// Raw durations are floored at 0.05 and normalized. A slot is selected when
/// its choice entry exceeds 0.5; a phase with no selection keeps its largest
/// choice entry (first on ties). Parameters map as `a = 2r − 1`, `b = 1.5r`.
/// Adjacent phases with identical tactics are merged.
pub fn decode(
    layout: &TemplateLayout,
    kind: TemplateKind,
    action: &[f64],
) -> Result<StrategyTemplate> {
    if layout.phases() == 0 || layout.slots.contains(&0) {
        return Err(Error::Decode(
            "layout needs at least one phase and one slot per phase".into(),
        ));
    }
    if action.len() != layout.action_len() {
        return Err(Error::Decode(format!(
            "action has {} entries, layout expects {}",
            action.len(),
            layout.action_len()
        )));
    }
    if let Some(x) = action.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::Decode(format!("action entry {x} outside [0, 1]")));
    }
    let n = layout.phases();
    let raw: Vec<f64> = action[..n].iter().map(|r| r.max(DURATION_FLOOR)).collect();
    let total: f64 = raw.iter().sum();
    let menu = kind.menu();

    let mut phases: Vec<Phase> = Vec::with_capacity(n);
    let mut offset = n;
    let mut start = 0.0;
    for (i, &slots) in layout.slots.iter().enumerate() {
        let chunk = &action[offset..offset + 3 * slots];
        offset += 3 * slots;
        let mut chosen: Vec<usize> = (0..slots).filter(|&j| chunk[3 * j] > 0.5).collect();
        if chosen.is_empty() {
            let best = (0..slots).fold(0, |b, j| if chunk[3 * j] > chunk[3 * b] { j } else { b });
            chosen.push(best);
        }
        let tactics: Vec<Tactic> = chosen
            .into_iter()
            .map(|j| {
                menu[j % menu.len()]
                    .with_params(2.0 * chunk[3 * j + 1] - 1.0, B_MAX * chunk[3 * j + 2])
            })
            .collect();
        let end = if i + 1 == n {
            1.0
        } else {
            start + raw[i] / total
        };
        match phases.last_mut() {
            Some(prev) if prev.tactics == tactics => prev.end = end,
            _ => phases.push(Phase {
                start,
                end,
                tactics,
            }),
        }
        start = end;
    }
    StrategyTemplate::new(kind, phases)
}

/// Action vector that decodes to `template` (up to floating-point rounding).
///
/// Phases are split to fill the layout; each selected tactic takes the first
/// free slot of its type. Fails when the template does not fit the layout or
/// its shortest phase is too short relative to its longest to survive the
/// duration floor.
pub fn encode(layout: &TemplateLayout, template: &StrategyTemplate) -> Result<Vec<f64>> {
    let n = layout.phases();
    let k = template.phases.len();
    if k > n {
        return Err(Error::Decode(format!(
            "template has {k} phases, layout only {n}"
        )));
    }
    // split the longest phases until the count matches
    let mut pieces: Vec<(f64, usize)> = template
        .phases
        .iter()
        .enumerate()
        .map(|(i, p)| (p.duration(), i))
        .collect();
    while pieces.len() < n {
        let longest =
            (0..pieces.len()).fold(0, |b, j| if pieces[j].0 > pieces[b].0 { j } else { b });
        let half = pieces[longest].0 / 2.0;
        pieces[longest].0 = half;
        pieces.insert(longest + 1, (half, pieces[longest].1));
    }
    let max = pieces.iter().map(|p| p.0).fold(0.0, f64::max);
    let mut action: Vec<f64> = pieces.iter().map(|p| p.0 / max).collect();
    if action.iter().any(|&r| r < DURATION_FLOOR) {
        return Err(Error::Decode(
            "a phase is too short to encode under the duration floor".into(),
        ));
    }

    let menu = template.kind.menu();
    for (piece, &slots) in pieces.iter().zip(&layout.slots) {
        let phase = &template.phases[piece.1];
        let mut chunk = vec![0.0; 3 * slots];
        for j in 0..slots {
            chunk[3 * j + 1] = 0.5;
            chunk[3 * j + 2] = 0.5;
        }
        let mut used = vec![false; slots];
        for tactic in &phase.tactics {
            let j = (0..slots)
                .find(|&j| !used[j] && menu[j % menu.len()] == tactic.kind())
                .ok_or_else(|| Error::Decode(format!("no free slot for {tactic:?}")))?;
            used[j] = true;
            chunk[3 * j] = 1.0;
            if let Some((a, b)) = tactic.params() {
                if !(A_RANGE.0..=A_RANGE.1).contains(&a) || !(0.0..=B_MAX).contains(&b) {
                    return Err(Error::Decode(format!(
                        "parameters of {tactic:?} out of range"
                    )));
                }
                chunk[3 * j + 1] = (a + 1.0) / 2.0;
                chunk[3 * j + 2] = b / B_MAX;
            }
        }
        action.extend(chunk);
    }
    Ok(action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{gen_domain, GenSpec, PreferenceProfile};
    use crate::opponent::FrequencyOpponentModel;
    use crate::tactics::{OutcomeSpace, BOULWARE_BETA, DEFAULT_FIXED_THRESHOLD};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn layout() -> TemplateLayout {
        TemplateLayout::default()
    }

    #[test]
    fn default_action_length() {
        assert_eq!(layout().action_len(), 39);
        assert_eq!(TemplateLayout::new(2, 3).action_len(), 2 + 18);
    }

    fn action(durations: &[f64], slots: &[[f64; 3]]) -> Vec<f64> {
        let mut v = durations.to_vec();
        for s in slots {
            v.extend_from_slice(s);
        }
        v
    }

    #[test]
    fn durations_normalize() {
        let off = [0.0, 0.5, 0.5];
        let on = [1.0, 0.5, 0.5];
        // distinct tactic sets so the phases stay separate
        let v = action(
            &[1.0, 0.5, 0.5],
            &[on, off, off, off, off, on, off, off, off, off, on, off],
        );
        let t = decode(&layout(), TemplateKind::Acceptance, &v).unwrap();
        let d: Vec<f64> = t.phases().iter().map(Phase::duration).collect();
        assert!(
            (d[0] - 0.5).abs() < 1e-12
                && (d[1] - 0.25).abs() < 1e-12
                && (d[2] - 0.25).abs() < 1e-12
        );
        assert_eq!(t.phases()[0].end, 0.5);
    }

    #[test]
    fn duration_floor_applies() {
        let on = [1.0, 0.5, 0.5];
        let off = [0.0, 0.5, 0.5];
        let v = action(
            &[0.0, 1.0, 1.0],
            &[on, off, off, off, off, on, off, off, off, off, on, off],
        );
        let t = decode(&layout(), TemplateKind::Bidding, &v).unwrap();
        assert!((t.phases()[0].duration() - 0.05 / 2.05).abs() < 1e-12);
    }

    #[test]
    fn empty_phase_forces_argmax() {
        let mut slots = [[0.2, 0.5, 0.5]; 12];
        slots[2][0] = 0.3;
        let v = action(&[1.0, 1.0, 1.0], &slots);
        let t = decode(&layout(), TemplateKind::Acceptance, &v).unwrap();
        // phase 1 forces slot 2; phases 2 and 3 force slot 0 and merge
        assert_eq!(t.phases().len(), 2);
        assert_eq!(t.phases()[0].tactics, vec![Tactic::Dynamic]);
        assert_eq!(t.phases()[1].tactics, vec![Tactic::NextBid]);
        let all_low = action(&[1.0, 1.0, 1.0], &[[0.2, 0.5, 0.5]; 12]);
        let t = decode(&layout(), TemplateKind::Acceptance, &all_low).unwrap();
        assert_eq!(t.phases().len(), 1);
        assert_eq!(t.phases()[0].tactics, vec![Tactic::NextBid]);
    }

    #[test]
    fn parameter_scaling() {
        let mut slots = [[0.0, 0.5, 0.5]; 12];
        slots[1] = [0.9, 0.45, 0.4267];
        let v = action(&[1.0, 1.0, 1.0], &slots);
        let t = decode(&layout(), TemplateKind::Acceptance, &v).unwrap();
        let Tactic::Quantile { a, b } = t.phases()[0].tactics[0] else {
            panic!()
        };
        assert!((a + 0.1).abs() < 1e-12);
        assert!((b - 0.64).abs() < 1e-4);
    }

    #[test]
    fn decode_rejects_bad_vectors() {
        assert!(decode(&layout(), TemplateKind::Acceptance, &[0.5; 38]).is_err());
        let mut v = vec![0.5; 39];
        v[7] = 1.5;
        assert!(decode(&layout(), TemplateKind::Acceptance, &v).is_err());
        v[7] = f64::NAN;
        assert!(decode(&layout(), TemplateKind::Acceptance, &v).is_err());
    }

    proptest! {
        #[test]
        fn decode_is_total(v in prop::collection::vec(0.0f64..=1.0, 39), bidding in any::<bool>()) {
            let kind = if bidding { TemplateKind::Bidding } else { TemplateKind::Acceptance };
            let t = decode(&layout(), kind, &v).unwrap();
            prop_assert!(t.phases().len() <= 3);
            let total: f64 = t.phases().iter().map(Phase::duration).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for p in t.phases() {
                prop_assert!(!p.tactics.is_empty());
                prop_assert!(p.duration() > 0.0);
                for tc in &p.tactics {
                    if let Some((a, b)) = tc.params() {
                        prop_assert!((-1.0..=1.0).contains(&a) && (0.0..=1.5).contains(&b));
                    }
                }
            }
            // phase lookup is total
            for k in 0..=100 {
                let i = t.phase_index(k as f64 / 100.0);
                prop_assert!(i < t.phases().len());
            }
            prop_assert_eq!(t.phase_index(1.0), t.phases().len() - 1);
        }

        #[test]
        fn encode_inverts_decode(v in prop::collection::vec(0.0f64..=1.0, 39), bidding in any::<bool>()) {
            let kind = if bidding { TemplateKind::Bidding } else { TemplateKind::Acceptance };
            let t = decode(&layout(), kind, &v).unwrap();
            if let Ok(enc) = encode(&layout(), &t) {
                let back = decode(&layout(), kind, &enc).unwrap();
                prop_assert_eq!(back.phases().len(), t.phases().len());
                for (p, q) in back.phases().iter().zip(t.phases()) {
                    prop_assert!((p.start - q.start).abs() < 1e-12 && (p.end - q.end).abs() < 1e-12);
                    prop_assert_eq!(p.tactics.len(), q.tactics.len());
                    for (x, y) in p.tactics.iter().zip(&q.tactics) {
                        prop_assert_eq!(x.kind(), y.kind());
                        if let (Some(px), Some(py)) = (x.params(), y.params()) {
                            prop_assert!((px.0 - py.0).abs() < 1e-12 && (px.1 - py.1).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn single_phase_teacher_encodes() {
        let t = StrategyTemplate::single(TemplateKind::Bidding, vec![Tactic::Boulware]).unwrap();
        let v = encode(&layout(), &t).unwrap();
        assert_eq!(v.len(), 39);
        assert_eq!(decode(&layout(), TemplateKind::Bidding, &v).unwrap(), t);
        let too_many = StrategyTemplate::single(
            TemplateKind::Bidding,
            vec![Tactic::Boulware, Tactic::Boulware],
        )
        .unwrap();
        assert!(encode(&layout(), &too_many).is_err());
    }

    #[test]
    fn template_validation() {
        let p = |s: f64, e: f64| Phase {
            start: s,
            end: e,
            tactics: vec![Tactic::Fixed],
        };
        assert!(
            StrategyTemplate::new(TemplateKind::Acceptance, vec![p(0.0, 0.5), p(0.5, 1.0)]).is_ok()
        );
        assert!(
            StrategyTemplate::new(TemplateKind::Acceptance, vec![p(0.0, 0.5), p(0.6, 1.0)])
                .is_err()
        );
        assert!(StrategyTemplate::new(TemplateKind::Acceptance, vec![p(0.1, 1.0)]).is_err());
        assert!(StrategyTemplate::new(TemplateKind::Bidding, vec![p(0.0, 1.0)]).is_err());
        let empty = Phase {
            start: 0.0,
            end: 1.0,
            tactics: vec![],
        };
        assert!(StrategyTemplate::new(TemplateKind::Acceptance, vec![empty]).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let t = StrategyTemplate::single(
            TemplateKind::Acceptance,
            vec![Tactic::Quantile { a: -0.1, b: 0.64 }, Tactic::Dynamic],
        )
        .unwrap();
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<StrategyTemplate>(&s).unwrap(), t);
        let broken = s.replace("\"end\":1.0", "\"end\":0.9");
        assert!(serde_json::from_str::<StrategyTemplate>(&broken).is_err());
    }

    #[test]
    fn bid_choice_rule() {
        assert_eq!(choose_bid(&[(0.8, 0.4), (0.75, 0.9)], 0.7), Some(1));
        assert_eq!(choose_bid(&[(0.5, 0.9), (0.6, 0.1)], 0.7), Some(1));
        assert_eq!(choose_bid(&[(0.9, 0.3)], 0.95), Some(0));
        assert_eq!(choose_bid(&[(0.8, 0.5), (0.8, 0.5)], 0.7), Some(0));
        assert_eq!(choose_bid(&[], 0.7), None);
    }

    struct Fixture {
        profile: PreferenceProfile,
        model: FrequencyOpponentModel,
        space: OutcomeSpace,
    }

    fn fixture() -> Fixture {
        let s = gen_domain(&GenSpec::uniform(3, 4, 2)).unwrap();
        let model = FrequencyOpponentModel::new(&s.domain);
        let space = OutcomeSpace::new(&s.profile_a, 1_000_000, &mut ChaCha8Rng::seed_from_u64(0));
        Fixture {
            profile: s.profile_a,
            model,
            space,
        }
    }

    impl Fixture {
        fn ctx<'a>(
            &'a self,
            t: f64,
            received: &'a [f64],
            last: Option<&'a Bid>,
        ) -> TacticContext<'a> {
            TacticContext {
                t,
                profile: &self.profile,
                opponent: &self.model,
                space: &self.space,
                received_utilities: received,
                dynamic_threshold: 0.5,
                fixed_threshold: DEFAULT_FIXED_THRESHOLD,
                last_received: last,
                planned_bid: None,
                pareto: None,
                boulware_beta: BOULWARE_BETA,
            }
        }

        /// A bid whose own utility is closest to `u`.
        fn bid_near(&self, u: f64) -> Bid {
            self.profile
                .domain()
                .bids()
                .min_by(|a, b| {
                    (self.profile.score(a) - u)
                        .abs()
                        .total_cmp(&(self.profile.score(b) - u).abs())
                })
                .unwrap()
        }
    }

    #[test]
    fn single_fixed_threshold_accepts_above() {
        let f = fixture();
        let t = StrategyTemplate::single(TemplateKind::Acceptance, vec![Tactic::Fixed]).unwrap();
        let hi = f.bid_near(0.7);
        let lo = f.bid_near(0.4);
        assert!(f.profile.score(&hi) >= 0.6 && f.profile.score(&lo) < 0.6);
        assert!(t.decide_accept(&f.ctx(0.3, &[], Some(&hi))));
        assert!(!t.decide_accept(&f.ctx(0.3, &[], Some(&lo))));
        assert!(!t.decide_accept(&f.ctx(0.3, &[], None)));
    }

    #[test]
    fn max_rule_rejects_between_thresholds() {
        let f = fixture();
        // thresholds 0.5 (dynamic) and 0.9 (fixed)
        let t = StrategyTemplate::single(
            TemplateKind::Acceptance,
            vec![Tactic::Dynamic, Tactic::Fixed],
        )
        .unwrap();
        let offer = f.bid_near(0.7);
        let mut ctx = f.ctx(0.3, &[], Some(&offer));
        ctx.fixed_threshold = 0.9;
        assert_eq!(t.acceptance_threshold(&ctx), 0.9);
        assert!(!t.decide_accept(&ctx));
    }

    #[test]
    fn acceptance_is_monotone_in_offer() {
        let f = fixture();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bids: Vec<Bid> = f.profile.domain().bids().collect();
        for _ in 0..200 {
            let v: Vec<f64> = (0..39).map(|_| rng.random()).collect();
            let t = decode(&layout(), TemplateKind::Acceptance, &v).unwrap();
            let received: Vec<f64> = (0..6).map(|_| rng.random()).collect();
            let time = rng.random();
            let planned = bids[rng.random_range(0..bids.len())].clone();
            let mut prev_accept = false;
            let mut sorted = bids.clone();
            sorted.sort_by(|a, b| f.profile.score(a).total_cmp(&f.profile.score(b)));
            for b in &sorted {
                let mut ctx = f.ctx(time, &received, Some(b));
                ctx.planned_bid = Some(&planned);
                let acc = t.decide_accept(&ctx);
                assert!(acc || !prev_accept, "accept flipped to reject");
                prev_accept = acc;
            }
        }
    }

    #[test]
    fn single_bidding_tactic_is_verbatim() {
        let f = fixture();
        let t = StrategyTemplate::single(TemplateKind::Bidding, vec![Tactic::Boulware]).unwrap();
        let ctx = f.ctx(0.0, &[], None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            t.next_bid(&ctx, &mut rng),
            tactics::boulware_bid(&ctx, BOULWARE_BETA)
        );
        let ctx = f.ctx(0.8, &[], None);
        assert_eq!(
            t.next_bid(&ctx, &mut rng),
            tactics::boulware_bid(&ctx, BOULWARE_BETA)
        );
    }

    #[test]
    fn next_bid_is_seed_deterministic() {
        let f = fixture();
        let t = StrategyTemplate::single(
            TemplateKind::Bidding,
            vec![Tactic::Greedy, Tactic::RandomAbove],
        )
        .unwrap();
        let last = f.bid_near(0.3);
        let ctx = f.ctx(0.4, &[0.3], Some(&last));
        let a: Vec<Bid> = (0..5)
            .map(|_| t.next_bid(&ctx, &mut ChaCha8Rng::seed_from_u64(9)))
            .collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
    }
}
