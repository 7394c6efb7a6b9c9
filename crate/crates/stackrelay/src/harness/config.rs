//! Scenario configuration: TOML sections mapping onto the library's
//! parameter structs, with strict unknown-key rejection and defaults equal
//! to the reference environment.

use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use crate::baselines::{DiscretizationSpec, DqnConfig};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::rl::ddpg::AgentConfig;
use crate::rl::train::TrainSchedule;

/// Which policy a scenario runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Closed-form equilibrium on the current state (genie benchmark).
    Gbs,
    /// Learning relay side, analytic source side on the observed state.
    Lgms,
    /// Discretized Q-learning on both sides.
    Dqn,
    /// Uniform actions.
    Random,
    /// The proposed actor-critic pair.
    Proposed,
}

impl Policy {
    /// Stable lowercase token used in file names and on the command line.
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Gbs => "gbs",
            Policy::Lgms => "lgms",
            Policy::Dqn => "dqn",
            Policy::Random => "random",
            Policy::Proposed => "proposed",
        }
    }

    /// Whether the policy has a training phase.
    pub fn is_learning(self) -> bool {
        matches!(self, Policy::Lgms | Policy::Dqn | Policy::Proposed)
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbs" => Ok(Policy::Gbs),
            "lgms" => Ok(Policy::Lgms),
            "dqn" => Ok(Policy::Dqn),
            "random" => Ok(Policy::Random),
            "proposed" => Ok(Policy::Proposed),
            other => Err(Error::Config(format!(
                "unknown policy {other:?}; expected gbs, lgms, dqn, random, or proposed"
            ))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pricing regime the closed-form benchmark plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Relays jointly maximize total revenue.
    Alliance,
    /// Relays undercut each other for the source's business.
    Competitive,
}

impl Mode {
    /// Stable lowercase token.
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Alliance => "alliance",
            Mode::Competitive => "competitive",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which scalar a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum SweepAxis {
    /// No sweep.
    #[serde(rename = "none")]
    None,
    /// Source transmit power.
    #[serde(rename = "p_s")]
    SourcePower,
    /// Source price sensitivity (the relay reward scale follows it).
    #[serde(rename = "alpha")]
    Alpha,
}

/// `[run]`: identity, policy, pricing mode, and seeds.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Scenario identifier used in file names.
    pub id: String,
    /// Policy to run.
    pub policy: Policy,
    /// Pricing regime for closed-form play.
    pub mode: Mode,
    /// Seeds to run; every seed is reported, none are filtered.
    pub seeds: Vec<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { id: "scenario".to_string(), policy: Policy::Proposed, mode: Mode::Alliance, seeds: vec![0] }
    }
}

/// `[channel]`: fading environment with identical per-relay statistics.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    /// Number of relays.
    pub num_relays: usize,
    /// First-order temporal correlation of both hops.
    pub rho: f64,
    /// Variance of every source-relay and relay-destination link.
    pub link_variance: f64,
    /// Noise power at every relay.
    pub noise_relay: f64,
    /// Noise power at the destination.
    pub noise_dest: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        // The documented reference environment: four unit-variance Rayleigh
        // relays over a 10 dB noise floor.
        Self { num_relays: 4, rho: 0.8, link_variance: 1.0, noise_relay: 0.1, noise_dest: 0.1 }
    }
}

/// `[game]`: utilities and action boxes. Field names match [`GameConfig`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSection {
    /// Source transmit power.
    pub p_s: f64,
    /// Lower bound of the purchasable relay power.
    pub p_min: f64,
    /// Upper bound of the purchasable relay power.
    pub p_max: f64,
    /// Lower bound of the unit price.
    pub c_min: f64,
    /// Upper bound of the unit price.
    pub c_max: f64,
    /// Source price sensitivity.
    pub alpha: f64,
    /// Relay reward scale.
    pub beta: f64,
    /// Undercut margin subtracted from a competitive price cap.
    pub epsilon_price: f64,
}

impl Default for GameSection {
    fn default() -> Self {
        let g = GameConfig::default();
        Self {
            p_s: g.p_s,
            p_min: g.p_min,
            p_max: g.p_max,
            c_min: g.c_min,
            c_max: g.c_max,
            alpha: g.alpha,
            beta: g.beta,
            epsilon_price: g.epsilon_price,
        }
    }
}

/// `[agent]`: actor-critic hyperparameters. Field names match
/// [`AgentConfig`].
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentSection {
    /// Actor learning rate.
    pub actor_lr: f64,
    /// Critic learning rate.
    pub critic_lr: f64,
    /// Soft target-update coefficient.
    pub tau: f64,
    /// Discount on bootstrapped next-state values.
    pub discount: f64,
    /// Transitions per sampled batch.
    pub batch_size: usize,
    /// Replay capacity.
    pub buffer_capacity: usize,
    /// Exploration noise scale at the first trained slot.
    pub noise_start: f64,
    /// Exploration noise scale at the last trained slot.
    pub noise_end: f64,
    /// Priority exponent of the replay sampler.
    pub priority_exponent: f64,
    /// Additive floor keeping every priority positive.
    pub priority_floor: f64,
    /// Hidden layer widths of actors and critics.
    pub hidden_layers: Vec<usize>,
}

impl Default for AgentSection {
    fn default() -> Self {
        let a = AgentConfig::default();
        Self {
            actor_lr: a.actor_lr,
            critic_lr: a.critic_lr,
            tau: a.tau,
            discount: a.discount,
            batch_size: a.batch_size,
            buffer_capacity: a.buffer_capacity,
            noise_start: a.noise_start,
            noise_end: a.noise_end,
            priority_exponent: a.priority_exponent,
            priority_floor: a.priority_floor,
            hidden_layers: a.hidden_layers,
        }
    }
}

/// `[dqn]`: hyperparameters of the discretized baseline.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DqnSection {
    /// Value-network learning rate.
    pub learning_rate: f64,
    /// Soft target-update coefficient.
    pub tau: f64,
    /// Discount on bootstrapped next-state values.
    pub discount: f64,
    /// Transitions per sampled batch.
    pub batch_size: usize,
    /// Replay capacity.
    pub buffer_capacity: usize,
    /// Exploration probability at the first trained slot.
    pub epsilon_start: f64,
    /// Exploration probability at the last trained slot.
    pub epsilon_end: f64,
    /// Number of price grid points.
    pub price_bins: usize,
    /// Number of power grid points.
    pub power_bins: usize,
    /// Hidden layer widths of both value networks.
    pub hidden_layers: Vec<usize>,
}

impl Default for DqnSection {
    fn default() -> Self {
        let d = DqnConfig::default();
        Self {
            learning_rate: d.learning_rate,
            tau: d.tau,
            discount: d.discount,
            batch_size: d.batch_size,
            buffer_capacity: d.buffer_capacity,
            epsilon_start: d.epsilon_start,
            epsilon_end: d.epsilon_end,
            price_bins: d.spec.price_bins,
            power_bins: d.spec.power_bins,
            hidden_layers: d.hidden_layers,
        }
    }
}

/// `[schedule]`: training and evaluation horizons.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// Training episodes, warmup included.
    pub episodes: usize,
    /// Slots per training episode.
    pub slots_per_episode: usize,
    /// Leading episodes driven by uniform random actions.
    pub warmup_episodes: usize,
    /// Evaluation episodes.
    pub eval_episodes: usize,
    /// Slots per evaluation episode.
    pub eval_slots: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let s = TrainSchedule::default();
        Self {
            episodes: s.episodes,
            slots_per_episode: s.slots_per_episode,
            warmup_episodes: s.warmup_episodes,
            eval_episodes: 10,
            eval_slots: 1000,
        }
    }
}

/// `[sweep]`: optional parameter sweep.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Which scalar varies.
    pub axis: SweepAxis,
    /// Values the axis takes, in run order.
    pub values: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { axis: SweepAxis::None, values: Vec::new() }
    }
}

/// A complete experiment description, one TOML file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// `[run]` section.
    pub run: RunSection,
    /// `[channel]` section.
    pub channel: ChannelSection,
    /// `[game]` section.
    pub game: GameSection,
    /// `[agent]` section.
    pub agent: AgentSection,
    /// `[dqn]` section.
    pub dqn: DqnSection,
    /// `[schedule]` section.
    pub schedule: ScheduleSection,
    /// `[sweep]` section.
    pub sweep: SweepSection,
}

impl ScenarioConfig {
    /// Fading environment parameters.
    pub fn channel_params(&self) -> ChannelParams {
        let c = &self.channel;
        ChannelParams::uniform(
            c.num_relays,
            c.rho,
            c.link_variance,
            c.link_variance,
            c.noise_relay,
            c.noise_dest,
        )
    }

    /// Utility and action-box parameters.
    pub fn game_config(&self) -> GameConfig {
        let g = &self.game;
        GameConfig {
            p_s: g.p_s,
            p_min: g.p_min,
            p_max: g.p_max,
            c_min: g.c_min,
            c_max: g.c_max,
            alpha: g.alpha,
            beta: g.beta,
            epsilon_price: g.epsilon_price,
        }
    }

    /// Actor-critic hyperparameters.
    pub fn agent_config(&self) -> AgentConfig {
        let a = &self.agent;
        AgentConfig {
            actor_lr: a.actor_lr,
            critic_lr: a.critic_lr,
            tau: a.tau,
            discount: a.discount,
            batch_size: a.batch_size,
            buffer_capacity: a.buffer_capacity,
            noise_start: a.noise_start,
            noise_end: a.noise_end,
            priority_exponent: a.priority_exponent,
            priority_floor: a.priority_floor,
            hidden_layers: a.hidden_layers.clone(),
        }
    }

    /// Discretized-baseline hyperparameters.
    pub fn dqn_config(&self) -> DqnConfig {
        let d = &self.dqn;
        DqnConfig {
            learning_rate: d.learning_rate,
            tau: d.tau,
            discount: d.discount,
            batch_size: d.batch_size,
            buffer_capacity: d.buffer_capacity,
            epsilon_start: d.epsilon_start,
            epsilon_end: d.epsilon_end,
            spec: DiscretizationSpec { price_bins: d.price_bins, power_bins: d.power_bins },
            hidden_layers: d.hidden_layers.clone(),
        }
    }

    /// Training horizon.
    pub fn train_schedule(&self) -> TrainSchedule {
        let s = &self.schedule;
        TrainSchedule {
            episodes: s.episodes,
            slots_per_episode: s.slots_per_episode,
            warmup_episodes: s.warmup_episodes,
            record_slots: false,
        }
    }

    /// Validates every section and their interactions. Called by
    /// [`load_config`] and again by every runner, so a hand-built config
    /// cannot slip past.
    pub fn validate(&self) -> Result<()> {
        if self.run.id.is_empty()
            || !self.run.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            return Err(Error::Config(format!(
                "run.id {:?} must be non-empty and use only ASCII letters, digits, '-', '_'",
                self.run.id
            )));
        }
        if self.run.seeds.is_empty() {
            return Err(Error::Config("run.seeds must list at least one seed".to_string()));
        }
        let mut sorted = self.run.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.run.seeds.len() {
            return Err(Error::Config("run.seeds contains duplicates".to_string()));
        }
        self.channel_params().validate()?;
        self.game_config().validate()?;
        self.agent_config().validate()?;
        self.dqn_config().validate()?;
        if self.run.policy.is_learning() {
            self.train_schedule().validate()?;
        }
        if self.schedule.eval_episodes == 0 || self.schedule.eval_slots == 0 {
            return Err(Error::Config(
                "schedule.eval_episodes and schedule.eval_slots must be at least 1".to_string(),
            ));
        }
        match self.sweep.axis {
            SweepAxis::None => {
                if !self.sweep.values.is_empty() {
                    return Err(Error::Config(
                        "sweep.values given but sweep.axis is \"none\"".to_string(),
                    ));
                }
            }
            SweepAxis::SourcePower | SweepAxis::Alpha => {
                if self.sweep.values.is_empty() {
                    return Err(Error::Config("sweep.values must be non-empty".to_string()));
                }
                if self.sweep.values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Config(
                        "sweep.values must all be finite and positive".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Parses a TOML scenario description. Unknown keys anywhere are errors.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig =
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a TOML scenario file.
pub fn load_config<P: AsRef<Path>>(path: P) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_config(&text)
}
