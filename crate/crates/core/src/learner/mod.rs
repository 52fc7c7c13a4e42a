//! Masked actor-critic over the joint platoon action space.

pub mod buffer;
pub mod checkpoint;
pub mod loss;
pub mod nn;
pub mod policy;
pub mod update;

use std::fs::File;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use buffer::{compute_advantages, RolloutBuffer, Transition};
pub use checkpoint::Checkpoint;
pub use loss::{loss_and_gradients, total_loss, Batch, LossTerms};
pub use policy::{masked_softmax, ActorCritic, NetworkConfig};
pub use update::{update, Moments, OptimConfig, Optimizer, OptimizerKind, UpdateStats};

use crate::env::{EnvConfig, Episode, JointAction, ObservationMatrix};
use crate::error::{Error, Result};
use crate::fsm::Proposer;
use crate::safety::{admissible_mask, SafetyConfig};
use crate::world::{ScenarioKind, TrafficSetup, WorldState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub setup: TrafficSetup,
    /// Episodes cycle through these scenario kinds.
    pub scenarios: Vec<ScenarioKind>,
    pub env: EnvConfig,
    pub safety: SafetyConfig,
    pub network: NetworkConfig,
    pub optim: OptimConfig,
    pub n_steps: usize,
    pub total_steps: u64,
    pub gamma: f64,
    /// Screen actions with the twin world while collecting rollouts.
    pub use_mask: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            setup: TrafficSetup::default(),
            scenarios: vec![ScenarioKind::Plain, ScenarioKind::FlowOscillation],
            env: EnvConfig::default(),
            safety: SafetyConfig::default(),
            network: NetworkConfig::default(),
            optim: OptimConfig::default(),
            n_steps: 256,
            total_steps: 100_000,
            gamma: 0.8,
            use_mask: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        self.safety.validate()?;
        self.optim.validate()?;
        if self.scenarios.is_empty() {
            return Err(Error::config("scenarios", "at least one scenario kind is required"));
        }
        if self.n_steps == 0 {
            return Err(Error::config("n_steps", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config("gamma", "must lie in [0, 1]"));
        }
        if self.network.hidden.contains(&0) {
            return Err(Error::config("network.hidden", "layers must be non-empty"));
        }
        Ok(())
    }
}

/// One row of the training statistics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub update: u64,
    pub env_steps: u64,
    pub episodes: u64,
    /// Per-step mean `R_global` of the episodes finished during this rollout
    /// (NaN when none finished).
    pub episode_reward: f64,
    pub rollout_reward: f64,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    pub kl: f64,
    pub accepted_epochs: usize,
    pub rollbacks: usize,
    pub learning_rate: f64,
}

fn episode_setup(base: &TrafficSetup, kind: ScenarioKind) -> TrafficSetup {
    let mut setup = base.clone();
    setup.scenario.kind = kind;
    setup
}

/// Collects on-policy rollouts and applies updates.
pub struct Trainer {
    pub config: TrainConfig,
    pub network: ActorCritic,
    pub optimizer: Optimizer,
    pub rng: ChaCha8Rng,
    pub env_steps: u64,
    pub updates: u64,
    episode: Episode,
    episodes_started: u64,
    episode_reward: f64,
    episode_len: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let network = ActorCritic::new(&config.network, config.setup.platoon.size, config.env.max_rows, &mut rng);
        let optimizer = Optimizer::new(&network);
        let episode = Self::spawn(&config, 0, &mut rng)?;
        Ok(Self {
            config,
            network,
            optimizer,
            rng,
            env_steps: 0,
            updates: 0,
            episode,
            episodes_started: 1,
            episode_reward: 0.0,
            episode_len: 0,
        })
    }

    fn spawn(config: &TrainConfig, index: u64, rng: &mut ChaCha8Rng) -> Result<Episode> {
        let kind = config.scenarios[(index % config.scenarios.len() as u64) as usize];
        let seed: u64 = rng.gen();
        Episode::from_setup(&episode_setup(&config.setup, kind), config.env.clone(), seed)
    }

    fn mask(&self, world: &WorldState, ids: &[u32]) -> Result<Vec<bool>> {
        if self.config.use_mask {
            admissible_mask(world, ids, &self.config.safety)
        } else {
            Ok(vec![true; self.network.num_actions()])
        }
    }

    /// Collects `n_steps` transitions and runs one update.
    pub fn iterate(&mut self) -> Result<TrainRecord> {
        let mut buffer = RolloutBuffer::with_capacity(self.config.n_steps);
        let mut finished = Vec::new();
        let mut rollout_reward = 0.0;
        while buffer.len() < self.config.n_steps {
            let obs = self.episode.observe()?;
            let x = self.network.encode(&obs)?;
            let mask = self.mask(&self.episode.world, &self.episode.platoon_ids)?;
            let probs = self.network.distribution(&x, &mask)?;
            let action = policy::sample(&probs, &mut self.rng);
            let value = self.network.value_of(&x);
            let step = self.episode.step_action(action)?;
            buffer.push(Transition {
                observation: x,
                mask,
                action,
                log_prob: probs[action].ln(),
                reward: step.reward,
                value,
                done: step.done,
            });
            rollout_reward += step.reward;
            self.env_steps += 1;
            self.episode_reward += step.reward;
            self.episode_len += 1;
            if step.done {
                finished.push(self.episode_reward / self.episode_len as f64);
                self.episode = Self::spawn(&self.config, self.episodes_started, &mut self.rng)?;
                self.episodes_started += 1;
                self.episode_reward = 0.0;
                self.episode_len = 0;
            }
        }
        let bootstrap = self.network.value_of(&self.network.encode(&self.episode.observe()?)?);
        buffer.finish(bootstrap, self.config.gamma)?;
        let stats = update(&mut self.network, &mut self.optimizer, &buffer, &self.config.optim, &mut self.rng)?;
        self.updates += 1;
        let episode_reward = if finished.is_empty() {
            f64::NAN
        } else {
            finished.iter().sum::<f64>() / finished.len() as f64
        };
        Ok(TrainRecord {
            update: self.updates,
            env_steps: self.env_steps,
            episodes: self.episodes_started - 1,
            episode_reward,
            rollout_reward: rollout_reward / buffer.len() as f64,
            policy_objective: stats.policy_objective,
            value_loss: stats.value_loss,
            entropy: stats.entropy,
            total_loss: stats.total_loss,
            kl: stats.kl,
            accepted_epochs: stats.accepted_epochs,
            rollbacks: stats.rollbacks,
            learning_rate: stats.final_learning_rate,
        })
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        Ok(Checkpoint {
            network: self.network.clone(),
            config_hash: checkpoint::config_hash(&self.config)?,
            env_steps: self.env_steps,
            rng: self.rng.clone(),
        })
    }
}

/// Trains until `total_steps`; each record is appended to `stats_csv` as it
/// is produced when a path is given.
pub fn train(config: TrainConfig, seed: u64, stats_csv: Option<&Path>) -> Result<(Trainer, Vec<TrainRecord>)> {
    let mut trainer = Trainer::new(config, seed)?;
    let mut writer = stats_csv.map(File::create).transpose()?.map(csv::Writer::from_writer);
    let mut history = Vec::new();
    while trainer.env_steps < trainer.config.total_steps {
        let record = trainer.iterate()?;
        if let Some(w) = writer.as_mut() {
            w.serialize(record)?;
            w.flush()?;
        }
        history.push(record);
    }
    Ok((trainer, history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSelection {
    Greedy,
    Sample,
}

/// Per-step mean `R_global` of one episode driven directly by the masked
/// policy.
pub fn policy_episode_reward(
    network: &ActorCritic,
    config: &TrainConfig,
    kind: ScenarioKind,
    seed: u64,
    selection: ActionSelection,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut episode = Episode::from_setup(&episode_setup(&config.setup, kind), config.env.clone(), seed)?;
    let (mut total, mut steps) = (0.0, 0u64);
    while !episode.is_done() {
        let x = network.encode(&episode.observe()?)?;
        let mask = if config.use_mask {
            admissible_mask(&episode.world, &episode.platoon_ids, &config.safety)?
        } else {
            vec![true; network.num_actions()]
        };
        let probs = network.distribution(&x, &mask)?;
        let action = match selection {
            ActionSelection::Greedy => policy::argmax(&probs),
            ActionSelection::Sample => policy::sample(&probs, rng),
        };
        total += episode.step_action(action)?.reward;
        steps += 1;
    }
    Ok(total / steps as f64)
}

/// Proposer backed by a trained network and the admissible mask.
#[derive(Debug, Clone)]
pub struct PolicyProposer {
    pub network: ActorCritic,
    pub safety: SafetyConfig,
    pub selection: ActionSelection,
    pub rng: ChaCha8Rng,
}

impl PolicyProposer {
    pub fn greedy(network: ActorCritic, safety: SafetyConfig) -> Self {
        Self {
            network,
            safety,
            selection: ActionSelection::Greedy,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Proposer for PolicyProposer {
    fn propose(&mut self, world: &WorldState, platoon_ids: &[u32], obs: &ObservationMatrix) -> Result<JointAction> {
        if platoon_ids.len() != self.network.num_vehicles {
            return Err(Error::invalid(format!(
                "network controls {} vehicles, platoon has {}",
                self.network.num_vehicles,
                platoon_ids.len()
            )));
        }
        let x = self.network.encode(obs)?;
        let mask = admissible_mask(world, platoon_ids, &self.safety)?;
        let probs = self.network.distribution(&x, &mask)?;
        let index = match self.selection {
            ActionSelection::Greedy => policy::argmax(&probs),
            ActionSelection::Sample => policy::sample(&probs, &mut self.rng),
        };
        JointAction::from_index(index, platoon_ids.len())
    }

    fn describe(&self) -> String {
        format!("policy({:?})", self.selection)
    }
}
