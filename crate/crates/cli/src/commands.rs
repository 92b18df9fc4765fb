use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use negotiator::agent::{DlstAgent, AGENT_NAME};
use negotiator::domain::{gen_domain, write_generated, GenSpec, OppositionClass};
use negotiator::pretrain::{append_traces, pretrain_agent, record_traces, Teacher};
use negotiator::protocol::{run_session, Agent, SessionConfig};
use negotiator::tactics::{baseline, BaselineKind};
use negotiator::template::{render_with, Precision};
use negotiator::tournament::{evaluate, run_tournament, train_rl, write_csv, EvalSummary};
use serde::Serialize;

use crate::config::RunConfig;
use crate::Command;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Opposition {
    Low,
    Medium,
    High,
}

impl From<Opposition> for OppositionClass {
    fn from(o: Opposition) -> Self {
        match o {
            Opposition::Low => OppositionClass::Low,
            Opposition::Medium => OppositionClass::Medium,
            Opposition::High => OppositionClass::High,
        }
    }
}

pub fn execute(command: &Command, config: RunConfig, base: &Path) -> Result<()> {
    let out = config.output.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match command {
        Command::Run { agents, domain, .. } => run(&config, base, &out, agents, *domain),
        Command::Tournament { .. } => tournament(&config, base, &out),
        Command::TrainSl { .. } => train_sl(&config, base, &out),
        Command::TrainRl { checkpoint, .. } => train(&config, base, &out, checkpoint.as_deref()),
        Command::Render {
            checkpoint,
            domain,
            side,
            exact,
            ..
        } => render(&config, base, checkpoint, *domain, *side, *exact),
        Command::GenDomain {
            issues,
            values,
            opposition,
            name,
            reservation,
            discount,
            ..
        } => {
            let mut spec = GenSpec::uniform(*issues, *values, config.seed);
            spec.reservation = *reservation;
            spec.discount = *discount;
            spec.opposition = opposition.map(Into::into);
            if let Some(n) = name {
                spec.name = n.clone();
            }
            let generated = gen_domain(&spec)?;
            let paths = write_generated(&generated, &out)?;
            println!("|Ω| = {}", generated.domain.outcome_count());
            for p in paths {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            baselines,
            ..
        } => eval(&config, base, &out, checkpoint.as_deref(), *baselines),
    }
}

fn make_agent(name: &str, config: &RunConfig, checkpoint: Option<&Path>) -> Result<Box<dyn Agent>> {
    if name == AGENT_NAME {
        return Ok(Box::new(load_dlst(config, checkpoint)?.frozen_copy()));
    }
    let kind: BaselineKind = name.parse()?;
    Ok(baseline(kind))
}

/// The checkpoint argument, else the configured one, else a fresh agent.
fn load_dlst(config: &RunConfig, checkpoint: Option<&Path>) -> Result<DlstAgent> {
    match checkpoint.or(config.checkpoint.as_deref()) {
        Some(dir) => {
            DlstAgent::load(dir).with_context(|| format!("loading checkpoint {}", dir.display()))
        }
        None => Ok(DlstAgent::new(config.agent.clone(), config.seed)?),
    }
}

fn write_json<T: Serialize>(value: &T, path: PathBuf) -> Result<()> {
    fs::write(&path, serde_json::to_string_pretty(value)?)
        .with_context(|| format!("writing {}", path.display()))
}

fn run(
    config: &RunConfig,
    base: &Path,
    out: &Path,
    agents: &[String],
    domain: usize,
) -> Result<()> {
    let scenarios = config.scenarios(base)?;
    let scenario = scenarios
        .get(domain)
        .with_context(|| format!("domain index {domain} out of range"))?;
    let mut a = make_agent(&agents[0], config, None)?;
    let mut b = make_agent(&agents[1], config, None)?;
    let session = SessionConfig {
        rounds: config.tournament.rounds,
        ..Default::default()
    };
    let seeds = [config.seed, config.seed.wrapping_add(1)];
    let (outcome, history) = run_session(
        a.as_mut(),
        b.as_mut(),
        &scenario.a,
        &scenario.b,
        session,
        seeds,
    )?;
    let file = fs::File::create(out.join("session.csv"))?;
    history.write_transcript(scenario.a.domain(), &outcome, BufWriter::new(file))?;
    write_json(&outcome, out.join("outcome.json"))?;
    println!(
        "{} vs {} on {}: {} (uA {:.4}, uB {:.4})",
        agents[0],
        agents[1],
        scenario.name,
        if outcome.is_agreement() {
            "agreement"
        } else {
            "failure"
        },
        outcome.utilities[0],
        outcome.utilities[1]
    );
    Ok(())
}

fn tournament(config: &RunConfig, base: &Path, out: &Path) -> Result<()> {
    let scenarios = config.scenarios(base)?;
    let mut roster = config
        .agents
        .iter()
        .map(|n| make_agent(n, config, None))
        .collect::<Result<Vec<_>>>()?;
    let result = run_tournament(&mut roster, &scenarios, &config.tournament)?;
    write_csv(&result.rows, out.join("sessions.csv"))?;
    result.report.write_json(out.join("metrics.json"))?;
    println!("{} sessions", result.rows.len());
    println!(
        "{:<12} {:>8} {:>8} {:>8} {:>8}",
        "agent", "U_ind", "U_succ", "social", "success"
    );
    for m in &result.report.overall {
        println!(
            "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.3}",
            m.agent, m.individual.mean, m.individual_success.mean, m.social.mean, m.success.mean
        );
    }
    Ok(())
}

fn train_sl(config: &RunConfig, base: &Path, out: &Path) -> Result<()> {
    let scenarios = config.scenarios(base)?;
    let teachers = config
        .teachers
        .iter()
        .map(|&k| Teacher::new(k))
        .collect::<Result<Vec<_>, _>>()?;
    let records = record_traces(
        &teachers,
        &config.opponents,
        &scenarios,
        &config.agent,
        &config.record,
    )?;
    let traces = out.join("traces.jsonl");
    if traces.exists() {
        fs::remove_file(&traces)?;
    }
    append_traces(&records, &traces)?;
    let mut agent = DlstAgent::new(config.agent.clone(), config.seed)?;
    let reports = pretrain_agent(&mut agent, &records, &config.sl)?;
    agent.save(out.join("checkpoint"))?;
    for (id, r) in &reports {
        println!(
            "{:<10} train {:>6} test {:>6} mae {:.4} -> {:.4}",
            id.as_str(),
            r.train_records,
            r.test_records,
            r.initial_mae,
            r.final_mae
        );
    }
    let by_name: Vec<_> = reports.iter().map(|(id, r)| (id.as_str(), r)).collect();
    write_json(&by_name, out.join("sl_report.json"))
}

fn train(config: &RunConfig, base: &Path, out: &Path, checkpoint: Option<&Path>) -> Result<()> {
    let scenarios = config.scenarios(base)?;
    let mut agent = load_dlst(config, checkpoint)?;
    if agent.learners().is_none() {
        bail!("checkpoint has no learners to train");
    }
    let summary = train_rl(&mut agent, &config.opponents, &scenarios, &config.training)?;
    agent.save(out.join("checkpoint"))?;
    println!(
        "{} sessions, {} agreements, mean utility {:.4}",
        summary.sessions, summary.agreements, summary.mean_utility
    );
    write_json(&summary, out.join("rl_summary.json"))
}

fn render(
    config: &RunConfig,
    base: &Path,
    checkpoint: &Path,
    domain: usize,
    side: Side,
    exact: bool,
) -> Result<()> {
    let scenarios = config.scenarios(base)?;
    let scenario = scenarios
        .get(domain)
        .with_context(|| format!("domain index {domain} out of range"))?;
    let agent = DlstAgent::load(checkpoint)
        .with_context(|| format!("loading checkpoint {}", checkpoint.display()))?;
    let profile = match side {
        Side::A => &scenario.a,
        Side::B => &scenario.b,
    };
    let (acceptance, bidding) = agent.preview(profile, config.seed)?;
    let precision = if exact {
        Precision::Exact
    } else {
        Precision::Fixed(4)
    };
    print!("{}", render_with(&acceptance, precision));
    print!("{}", render_with(&bidding, precision));
    Ok(())
}

#[derive(Serialize)]
struct EvalRow {
    agent: String,
    domain: String,
    #[serde(flatten)]
    summary: EvalSummary,
}

fn eval(
    config: &RunConfig,
    base: &Path,
    out: &Path,
    checkpoint: Option<&Path>,
    baselines: bool,
) -> Result<()> {
    let scenarios = config.scenarios(base)?;
    let mut agents: Vec<Box<dyn Agent>> =
        vec![Box::new(load_dlst(config, checkpoint)?.frozen_copy())];
    if baselines {
        agents.extend(config.opponents.iter().map(|&k| baseline(k)));
    }
    let mut rows = Vec::new();
    for (k, scenario) in scenarios.iter().enumerate() {
        let seed = config.seed.wrapping_add(k as u64);
        for agent in &agents {
            let summary = evaluate(
                agent.as_ref(),
                &config.opponents,
                scenario,
                config.eval_sessions,
                config.training.rounds,
                seed,
            )?;
            println!(
                "{:<12} {:<12} U_ind {:.4} ± {:.4}  success {:.3}",
                agent.name(),
                scenario.name,
                summary.individual.mean,
                summary.individual.sd,
                summary.success.mean
            );
            rows.push(EvalRow {
                agent: agent.name().to_string(),
                domain: scenario.name.clone(),
                summary,
            });
        }
    }
    write_json(&rows, out.join("eval.json"))
}
