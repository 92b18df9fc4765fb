use std::collections::{HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{crowding_distance, nondominated_members, nondominated_sort, ParetoMember, ParetoSet};
use crate::domain::{Additive, Bid, Domain};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Nsga2Params {
    /// Population as a fraction of `|Ω|`.
    pub population_fraction: f64,
    pub min_population: usize,
    pub max_population: usize,
    /// Exact population size, overriding the fraction.
    pub population: Option<usize>,
    pub generations: usize,
    /// Per-issue mutation probability.
    pub mutation: f64,
    /// Seed the first population with weighted-sum optima and their
    /// single-issue neighbours.
    pub seed_supported: bool,
    /// Rounds of single-issue neighbourhood search on the final archive.
    pub polish_rounds: usize,
}

impl Default for Nsga2Params {
    fn default() -> Self {
        Self {
            population_fraction: 0.02,
            min_population: 4,
            max_population: 500,
            population: None,
            generations: 2,
            mutation: 0.1,
            seed_supported: true,
            polish_rounds: 10,
        }
    }
}

pub fn population_size(outcomes: u64, params: &Nsga2Params) -> usize {
    if let Some(p) = params.population {
        return p.max(1);
    }
    let raw = (params.population_fraction * outcomes as f64).round() as usize;
    raw.clamp(
        params.min_population,
        params.max_population.max(params.min_population),
    )
}

struct Evaluator<'a, A: ?Sized, B: ?Sized> {
    own: &'a A,
    opp: &'a B,
    cache: HashMap<Bid, (f64, f64)>,
}

impl<A: Additive + ?Sized, B: Additive + ?Sized> Evaluator<'_, A, B> {
    fn eval(&mut self, bid: &Bid) -> (f64, f64) {
        if let Some(&p) = self.cache.get(bid) {
            return p;
        }
        let p = (self.own.score(bid), self.opp.score(bid));
        self.cache.insert(bid.clone(), p);
        p
    }
}

/// NSGA-II approximation of the Pareto set of `(own, opp)` over the domain.
///
/// A non-dominated archive of every evaluated bid is kept across
/// generations and returned, so good bids found early are never lost.
pub fn nsga2<A, B, R>(
    domain: &Domain,
    own: &A,
    opp: &B,
    params: &Nsga2Params,
    rng: &mut R,
) -> Result<ParetoSet>
where
    A: Additive + ?Sized,
    B: Additive + ?Sized,
    R: Rng + ?Sized,
{
    let size = domain.outcome_count();
    if size == 0 || own.n_issues() != domain.n_issues() || opp.n_issues() != domain.n_issues() {
        return Err(Error::validation(
            "NSGA-II needs a non-empty domain matching both objectives",
        ));
    }
    let n = population_size(size, params);
    let mut ev = Evaluator {
        own,
        opp,
        cache: HashMap::new(),
    };

    let mut pool: Vec<Bid> = Vec::new();
    if n as u64 >= size {
        pool.extend(domain.bids());
    } else {
        if params.seed_supported {
            pool.extend(supported_with_neighbours(domain, own, opp));
        }
        let mut seen: HashSet<Bid> = pool.iter().cloned().collect();
        let mut attempts = 0;
        while seen.len() < n && attempts < 100 * n {
            let bid = domain.random_bid(rng);
            if seen.insert(bid.clone()) {
                pool.push(bid);
            }
            attempts += 1;
        }
    }
    let mut archive = members(&pool, &mut ev);
    archive = nondominated_members(archive);
    let mut population = select(pool, n, &mut ev);

    for _ in 0..params.generations {
        let offspring = breed(domain, &population, n, params.mutation, &mut ev, rng);
        archive.extend(members(&offspring, &mut ev));
        archive = nondominated_members(archive);
        let mut merged = population;
        let mut seen: HashSet<Bid> = merged.iter().cloned().collect();
        merged.extend(offspring.into_iter().filter(|b| seen.insert(b.clone())));
        population = select(merged, n, &mut ev);
    }

    polish(domain, &mut archive, params.polish_rounds, &mut ev);

    let mut set = ParetoSet::from_members(archive);
    set.generations = params.generations;
    set.evaluations = ev.cache.len();
    Ok(set)
}

/// Pareto local search: evaluate every single-issue neighbour of each new
/// archive member until the archive stops changing.
fn polish<A, B>(
    domain: &Domain,
    archive: &mut Vec<ParetoMember>,
    rounds: usize,
    ev: &mut Evaluator<A, B>,
) where
    A: Additive + ?Sized,
    B: Additive + ?Sized,
{
    let counts = domain.value_counts();
    let mut expanded: HashSet<Bid> = HashSet::new();
    for _ in 0..rounds {
        let fresh: Vec<Bid> = archive
            .iter()
            .map(|m| m.bid.clone())
            .filter(|b| !expanded.contains(b))
            .collect();
        if fresh.is_empty() {
            break;
        }
        let mut neighbours = Vec::new();
        for bid in fresh {
            for (i, &k) in counts.iter().enumerate() {
                for v in (0..k).filter(|&v| v != bid.value(i)) {
                    let nb = bid.with_value(i, v);
                    if !ev.cache.contains_key(&nb) {
                        neighbours.push(nb);
                    }
                }
            }
            expanded.insert(bid);
        }
        archive.extend(members(&neighbours, ev));
        *archive = nondominated_members(std::mem::take(archive));
    }
}

fn members<A, B>(bids: &[Bid], ev: &mut Evaluator<A, B>) -> Vec<ParetoMember>
where
    A: Additive + ?Sized,
    B: Additive + ?Sized,
{
    bids.iter()
        .map(|b| {
            let (own, opp) = ev.eval(b);
            ParetoMember {
                bid: b.clone(),
                own,
                opp,
            }
        })
        .collect()
}

/// Rank and crowding of each bid, as used by the tournament comparison.
fn rank_and_crowd<A, B>(bids: &[Bid], ev: &mut Evaluator<A, B>) -> Vec<(usize, f64)>
where
    A: Additive + ?Sized,
    B: Additive + ?Sized,
{
    let points: Vec<(f64, f64)> = bids.iter().map(|b| ev.eval(b)).collect();
    let mut out = vec![(0, 0.0); bids.len()];
    for (rank, front) in nondominated_sort(&points).iter().enumerate() {
        for (k, d) in crowding_distance(&points, front).into_iter().enumerate() {
            out[front[k]] = (rank, d);
        }
    }
    out
}

/// Environmental selection: whole fronts first, the split front by crowding.
fn select<A, B>(bids: Vec<Bid>, n: usize, ev: &mut Evaluator<A, B>) -> Vec<Bid>
where
    A: Additive + ?Sized,
    B: Additive + ?Sized,
{
    if bids.len() <= n {
        return bids;
    }
    let rc = rank_and_crowd(&bids, ev);
    let mut order: Vec<usize> = (0..bids.len()).collect();
    order.sort_by(|&i, &j| {
        rc[i]
            .0
            .cmp(&rc[j].0)
            .then(rc[j].1.total_cmp(&rc[i].1))
            .then(i.cmp(&j))
    });
    order.truncate(n);
    order.sort_unstable();
    order.into_iter().map(|i| bids[i].clone()).collect()
}

fn breed<A, B, R>(
    domain: &Domain,
    population: &[Bid],
    n: usize,
    mutation: f64,
    ev: &mut Evaluator<A, B>,
    rng: &mut R,
) -> Vec<Bid>
where
    A: Additive + ?Sized,
    B: Additive + ?Sized,
    R: Rng + ?Sized,
{
    let rc = rank_and_crowd(population, ev);
    let counts = domain.value_counts();
    let tournament = |rng: &mut R| {
        let (i, j) = (
            rng.random_range(0..population.len()),
            rng.random_range(0..population.len()),
        );
        let better = rc[i].0 < rc[j].0 || (rc[i].0 == rc[j].0 && rc[i].1 > rc[j].1);
        if better {
            i
        } else {
            j
        }
    };
    (0..n)
        .map(|_| {
            let (p, q) = (&population[tournament(rng)], &population[tournament(rng)]);
            let values = (0..counts.len())
                .map(|i| {
                    let mut v = if rng.random_bool(0.5) {
                        p.value(i)
                    } else {
                        q.value(i)
                    };
                    if counts[i] > 1 && rng.random::<f64>() < mutation {
                        let mut w = rng.random_range(0..counts[i] - 1);
                        if w >= v {
                            w += 1;
                        }
                        v = w;
                    }
                    v
                })
                .collect();
            Bid::new(values)
        })
        .collect()
}

/// Maximizers of `λ·own + (1 − λ)·opp` over every λ region, plus each one's
/// single-issue neighbours.
///
/// Both objectives are additive, so each issue is maximized independently and
/// the argmax can only change where two values' lines cross.
fn supported_with_neighbours<A, B>(domain: &Domain, own: &A, opp: &B) -> Vec<Bid>
where
    A: Additive + ?Sized,
    B: Additive + ?Sized,
{
    let counts = domain.value_counts();
    let lines: Vec<Vec<(f64, f64)>> = counts
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            (0..k)
                .map(|v| (own.contribution(i, v), opp.contribution(i, v)))
                .collect()
        })
        .collect();

    let mut lambdas = vec![0.0, 1.0];
    for issue in &lines {
        for (x, &(a1, b1)) in issue.iter().enumerate() {
            for &(a2, b2) in &issue[x + 1..] {
                let denom = (a1 - b1) - (a2 - b2);
                if denom != 0.0 {
                    let l = (b2 - b1) / denom;
                    if l > 0.0 && l < 1.0 {
                        lambdas.push(l);
                    }
                }
            }
        }
    }
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let mut probes: Vec<f64> = lambdas.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    probes.push(0.0);
    probes.push(1.0);

    let mut seeds: Vec<Bid> = Vec::new();
    let mut seen = HashSet::new();
    for l in probes {
        let bid = Bid::new(
            lines
                .iter()
                .map(|issue| {
                    (0..issue.len())
                        .max_by(|&x, &y| {
                            let (p, q) = (issue[x], issue[y]);
                            let (fp, fq) = (l * p.0 + (1.0 - l) * p.1, l * q.0 + (1.0 - l) * q.1);
                            // at the extremes break ties on the other objective
                            let tie = if l >= 1.0 {
                                p.1.total_cmp(&q.1)
                            } else {
                                p.0.total_cmp(&q.0)
                            };
                            fp.total_cmp(&fq).then(tie).then(y.cmp(&x))
                        })
                        .unwrap_or(0)
                })
                .collect(),
        );
        if seen.insert(bid.clone()) {
            seeds.push(bid);
        }
    }

    let mut out = seeds.clone();
    for seed in &seeds {
        for (i, &k) in counts.iter().enumerate() {
            for v in 0..k {
                if v != seed.value(i) {
                    let nb = seed.with_value(i, v);
                    if seen.insert(nb.clone()) {
                        out.push(nb);
                    }
                }
            }
        }
    }
    out
}
