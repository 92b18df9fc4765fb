use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::replay::{Experience, ReplayBuffer};
use crate::error::{Error, Result};
use crate::neural::{Activation, Adam, Mlp};

pub const CHECKPOINT_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdpgConfig {
    pub gamma: f64,
    pub tau: f64,
    /// Initial standard deviation of the Gaussian exploration noise.
    pub sigma: f64,
    /// Multiplied into `sigma` after every session.
    pub sigma_decay: f64,
    pub sigma_min: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub hidden: Vec<usize>,
    /// Gradient steps taken at the end of each training session.
    pub updates_per_session: usize,
    /// Sessions during which only the critic is trained, so a pretrained
    /// actor is not steered by an untrained critic.
    pub actor_warmup_sessions: u64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tau: 0.005,
            sigma: 0.2,
            sigma_decay: 0.999,
            sigma_min: 0.01,
            buffer_capacity: 100_000,
            batch_size: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            hidden: vec![64, 64],
            updates_per_session: 8,
            actor_warmup_sessions: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub critic: f64,
    /// Mean Q of the current policy on the sampled states.
    pub mean_q: f64,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: DdpgConfig,
    state_dim: usize,
    action_dim: usize,
    sigma: f64,
    sessions: u64,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Optimizers {
    actor: Adam,
    critic: Adam,
}

/// Actor-critic learner with target networks. Actions live in `[0, 1]^m`.
#[derive(Debug, Clone)]
pub struct DdpgLearner {
    config: DdpgConfig,
    state_dim: usize,
    action_dim: usize,
    actor: Mlp,
    critic: Mlp,
    actor_target: Mlp,
    critic_target: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    sigma: f64,
    sessions: u64,
    seed: u64,
    rng: ChaCha8Rng,
}

impl DdpgLearner {
    pub fn new(state_dim: usize, action_dim: usize, config: DdpgConfig, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&config.gamma)
            || !(0.0..=1.0).contains(&config.tau)
            || config.sigma < 0.0
        {
            return Err(Error::Config(
                "ddpg: gamma and tau must lie in [0, 1], sigma must be non-negative".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut actor_sizes = vec![state_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(action_dim);
        let mut critic_sizes = vec![state_dim + action_dim];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, Activation::Sigmoid, &mut rng)?;
        let critic = Mlp::new(&critic_sizes, Activation::Identity, &mut rng)?;
        let buffer = ReplayBuffer::new(
            config.buffer_capacity,
            config.batch_size,
            state_dim,
            action_dim,
        )?;
        Ok(Self {
            actor_opt: Adam::new(actor.n_params(), config.actor_lr),
            critic_opt: Adam::new(critic.n_params(), config.critic_lr),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            buffer,
            sigma: config.sigma,
            sessions: 0,
            seed,
            rng,
            state_dim,
            action_dim,
            config,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn sessions(&self) -> u64 {
        self.sessions
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Replaces the actor (and its target), e.g. with a pretrained network.
    pub fn set_actor(&mut self, actor: Mlp) -> Result<()> {
        if actor.sizes() != self.actor.sizes() || actor.output_activation() != Activation::Sigmoid {
            return Err(Error::Shape {
                expected: self.actor.n_params(),
                got: actor.n_params(),
            });
        }
        self.actor_target = actor.clone();
        self.actor_opt = Adam::new(actor.n_params(), self.config.actor_lr);
        self.actor = actor;
        Ok(())
    }

    /// Actor output, plus clipped Gaussian noise when exploring.
    pub fn select_action(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        let mut a = self.actor.forward(state)?;
        if explore && self.sigma > 0.0 {
            let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::Config(e.to_string()))?;
            for x in &mut a {
                *x = (*x + noise.sample(&mut self.rng)).clamp(0.0, 1.0);
            }
        }
        Ok(a)
    }

    pub fn remember(&mut self, e: Experience) -> Result<()> {
        self.buffer.push(e)
    }

    /// Decays exploration noise; call once per finished training session.
    pub fn end_session(&mut self) {
        self.sessions += 1;
        self.sigma = (self.sigma * self.config.sigma_decay)
            .max(self.config.sigma_min.min(self.config.sigma));
    }

    fn q(&self, net: &Mlp, s: &[f64], a: &[f64]) -> Result<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        Ok(net.forward(&x)?[0])
    }

    /// Mean critic value of the current policy over `states`.
    pub fn actor_objective(&self, states: &[Vec<f64>]) -> Result<f64> {
        let mut sum = 0.0;
        for s in states {
            let a = self.actor.forward(s)?;
            sum += self.q(&self.critic, s, &a)?;
        }
        Ok(sum / states.len().max(1) as f64)
    }

    /// Gradient of [`Self::actor_objective`] with respect to the actor
    /// parameters, chained through the critic's action input.
    pub fn actor_gradient(&self, states: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.actor.n_params()];
        let scale = 1.0 / states.len().max(1) as f64;
        let mut x = Vec::with_capacity(self.state_dim + self.action_dim);
        for s in states {
            let trace = self.actor.trace(s)?;
            x.clear();
            x.extend_from_slice(s);
            x.extend_from_slice(trace.output());
            let (_, dq_dx) = self.critic.backward(&x, &[scale])?;
            self.actor
                .backward_into(&trace, &dq_dx[self.state_dim..], &mut grads)?;
        }
        Ok(grads)
    }

    /// One minibatch step on critic, actor and targets; `None` until the
    /// buffer holds a full batch.
    pub fn update(&mut self) -> Result<Option<Losses>> {
        let Some(batch) = self.buffer.sample(&mut self.rng) else {
            return Ok(None);
        };
        let batch: Vec<Experience> = batch.into_iter().cloned().collect();
        let k = batch.len() as f64;

        let mut critic_grads = vec![0.0; self.critic.n_params()];
        let mut critic_loss = 0.0;
        let mut x = Vec::with_capacity(self.state_dim + self.action_dim);
        for e in &batch {
            let target = if e.terminal {
                e.reward
            } else {
                let a_next = self.actor_target.forward(&e.next_state)?;
                e.reward
                    + self.config.gamma * self.q(&self.critic_target, &e.next_state, &a_next)?
            };
            x.clear();
            x.extend_from_slice(&e.state);
            x.extend_from_slice(&e.action);
            let trace = self.critic.trace(&x)?;
            let diff = trace.output()[0] - target;
            critic_loss += diff * diff / k;
            self.critic
                .backward_into(&trace, &[2.0 * diff / k], &mut critic_grads)?;
        }
        self.critic_opt
            .step(self.critic.params_mut(), &critic_grads)?;

        let states: Vec<Vec<f64>> = batch.into_iter().map(|e| e.state).collect();
        let mean_q = self.actor_objective(&states)?;
        if self.sessions >= self.config.actor_warmup_sessions {
            let ascent = self.actor_gradient(&states)?;
            let descent: Vec<f64> = ascent.iter().map(|g| -g).collect();
            self.actor_opt.step(self.actor.params_mut(), &descent)?;
        }

        self.actor_target
            .soft_update(&self.actor, self.config.tau)?;
        self.critic_target
            .soft_update(&self.critic, self.config.tau)?;
        Ok(Some(Losses {
            critic: critic_loss,
            mean_q,
        }))
    }

    /// Writes networks, optimizer state and a manifest into `dir`. The
    /// replay memory is not persisted.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.actor.save(dir.join("actor.json"))?;
        self.critic.save(dir.join("critic.json"))?;
        self.actor_target.save(dir.join("actor_target.json"))?;
        self.critic_target.save(dir.join("critic_target.json"))?;
        let opt = Optimizers {
            actor: self.actor_opt.clone(),
            critic: self.critic_opt.clone(),
        };
        fs::write(dir.join("optimizers.json"), serde_json::to_string(&opt)?)?;
        let manifest = Manifest {
            format: "negotiator-ddpg".into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            sigma: self.sigma,
            sessions: self.sessions,
            seed: self.seed,
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let bad = |msg: String| Error::Checkpoint(format!("{}: {msg}", dir.display()));
        let text =
            fs::read_to_string(dir.join(MANIFEST)).map_err(|e| bad(format!("manifest: {e}")))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| bad(format!("manifest: {e}")))?;
        if m.format != "negotiator-ddpg" || m.version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported checkpoint {} v{}",
                m.format, m.version
            )));
        }
        let mut learner = Self::new(m.state_dim, m.action_dim, m.config, m.seed ^ m.sessions)?;
        let load = |name: &str| Mlp::load(dir.join(name)).map_err(|e| bad(format!("{name}: {e}")));
        let nets = [
            load("actor.json")?,
            load("critic.json")?,
            load("actor_target.json")?,
            load("critic_target.json")?,
        ];
        for (net, expected) in nets.iter().zip([
            &learner.actor,
            &learner.critic,
            &learner.actor,
            &learner.critic,
        ]) {
            if net.sizes() != expected.sizes() {
                return Err(bad(format!(
                    "network shape {:?} does not match manifest {:?}",
                    net.sizes(),
                    expected.sizes()
                )));
            }
        }
        let [actor, critic, actor_target, critic_target] = nets;
        let opt_text = fs::read_to_string(dir.join("optimizers.json"))
            .map_err(|e| bad(format!("optimizers: {e}")))?;
        let opt: Optimizers =
            serde_json::from_str(&opt_text).map_err(|e| bad(format!("optimizers: {e}")))?;
        learner.actor = actor;
        learner.critic = critic;
        learner.actor_target = actor_target;
        learner.critic_target = critic_target;
        learner.actor_opt = opt.actor;
        learner.critic_opt = opt.critic;
        learner.sigma = m.sigma;
        learner.sessions = m.sessions;
        learner.seed = m.seed;
        Ok(learner)
    }
}
