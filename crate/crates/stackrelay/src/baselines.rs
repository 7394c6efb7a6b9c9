//! Reference policies the learned agents are measured against.
//!
//! * **GBS** — the closed-form alliance equilibrium computed on the *current*
//!   channel state. No other policy sees the current state, so this is the
//!   ceiling every learner is compared to.
//! * **LGMS** — the relay side learns exactly like the proposed method while
//!   the source side plays its analytic best response on the *observed*
//!   (one-slot-old) state.
//! * **Discretized Q-learning (DQN)** — both sides learn value networks over
//!   discretized action grids with greedy-with-exploration selection and
//!   uniform replay.
//! * **Random** — uniform actions, the floor.
//!
//! The training loops here intentionally mirror [`crate::rl::train::train`]:
//! same RNG stream layout, same warmup convention, same logging, so per-seed
//! channel trajectories are identical across methods.

use ndarray::Array2;
use rand::{Rng, SeedableRng};

use crate::channel::{init_channels_rng, link_quantities, step_channels, ChannelParams, ChannelState};
use crate::error::{Error, Result};
use crate::game::{alliance_equilibrium, best_response_power, GameConfig};
use crate::nn::{Activation, LayerSpec, Mlp, RmsProp};
use crate::rl::ddpg::{AgentConfig, DdpgAgent};
use crate::rl::mdp::{
    argmax, env_step, follower_features, follower_state_dim, leader_act, leader_features,
    leader_state_dim, random_follower_action, random_leader_action, FollowerAction, LeaderAction,
};
use crate::rl::replay::{Experience, PrioritizedBuffer, SampledBatch};
use crate::rl::train::{noise_schedule, EpisodeStats, RngStreams, SlotRecord, TrainSchedule, TrainingLog};

// ---------------------------------------------------------------------------
// GBS: closed-form play on instantaneous state
// ---------------------------------------------------------------------------

/// Plays the exact alliance equilibrium for the *current* channel state.
/// Only this baseline is granted instantaneous state access.
pub fn gbs_policy(
    current: &ChannelState,
    cfg: &GameConfig,
    params: &ChannelParams,
) -> Result<(LeaderAction, FollowerAction)> {
    let eq = alliance_equilibrium(current, cfg, params)?;
    Ok((
        LeaderAction::from_decision(eq.leader.relay, eq.leader.price, params.num_relays, cfg),
        FollowerAction::from_power(eq.follower.power, cfg),
    ))
}

// ---------------------------------------------------------------------------
// Random: uniform play
// ---------------------------------------------------------------------------

/// Uniform relay, uniform price, uniform power.
pub fn random_policy<R: Rng + ?Sized>(
    num_relays: usize,
    cfg: &GameConfig,
    rng: &mut R,
) -> (LeaderAction, FollowerAction) {
    (random_leader_action(num_relays, cfg, rng), random_follower_action(cfg, rng))
}

// ---------------------------------------------------------------------------
// LGMS: learning leader, analytic follower on outdated state
// ---------------------------------------------------------------------------

/// The source side's analytic reply to an announcement, computed from the
/// *observed* (previous-slot) state. A vanished observed link leaves the
/// closed form undefined; buying nothing is the conservative reply.
pub fn lgms_follower_response(
    observed: &ChannelState,
    announced: &LeaderAction,
    cfg: &GameConfig,
    params: &ChannelParams,
) -> FollowerAction {
    match link_quantities(observed, announced.relay, cfg.p_s, params) {
        Ok(lq) => FollowerAction::from_power(
            best_response_power(announced.price, &lq, cfg).power,
            cfg,
        ),
        Err(_) => FollowerAction::from_power(cfg.p_min, cfg),
    }
}

/// Noiseless LGMS play on an observed state: the trained leader actor
/// announces, the analytic follower replies.
pub fn lgms_act(
    leader_actor: &Mlp,
    observed: &ChannelState,
    cfg: &GameConfig,
    params: &ChannelParams,
) -> (LeaderAction, FollowerAction) {
    let obs = leader_features(observed, params);
    // Noiseless acting consumes no randomness; the RNG argument is inert.
    let mut inert = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let leader = leader_act(leader_actor, &obs, 0.0, cfg, &mut inert);
    let follower = lgms_follower_response(observed, &leader, cfg, params);
    (leader, follower)
}

/// Trains the LGMS leader: the same actor-critic learner as the proposed
/// method, against the analytic follower (which also replies during warmup —
/// it is part of the environment, not a learner).
pub fn train_lgms(
    params: &ChannelParams,
    game: &GameConfig,
    agent_cfg: &AgentConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(DdpgAgent, TrainingLog)> {
    params.validate()?;
    game.validate()?;
    agent_cfg.validate()?;
    schedule.validate()?;
    let k = params.num_relays;
    let mut streams = RngStreams::derive(seed);
    let mut leader = DdpgAgent::new(
        leader_state_dim(k),
        LeaderAction::action_dim(k),
        agent_cfg,
        &mut streams.init,
    );
    let mut buffer = PrioritizedBuffer::new(
        agent_cfg.buffer_capacity,
        agent_cfg.priority_exponent,
        agent_cfg.priority_floor,
    );
    let total_trained = ((schedule.episodes - schedule.warmup_episodes)
        * schedule.slots_per_episode) as u64;
    let mut trained = 0u64;
    let mut log = TrainingLog { episodes: Vec::with_capacity(schedule.episodes), slots: Vec::new() };

    for episode in 0..schedule.episodes {
        let warmup = episode < schedule.warmup_episodes;
        let episode_noise = if warmup {
            agent_cfg.noise_start
        } else {
            noise_schedule(trained, total_trained, agent_cfg.noise_start, agent_cfg.noise_end)
        };
        let mut state = init_channels_rng(params, &mut streams.env)?;
        let mut sums = (0.0, 0.0, 0.0);
        for slot in 0..schedule.slots_per_episode {
            let obs = leader_features(&state, params);
            let leader_action = if warmup {
                random_leader_action(k, game, &mut streams.warmup)
            } else {
                let noise = noise_schedule(
                    trained,
                    total_trained,
                    agent_cfg.noise_start,
                    agent_cfg.noise_end,
                );
                leader_act(&leader.actor, &obs, noise, game, &mut streams.leader_noise)
            };
            let follower_action = lgms_follower_response(&state, &leader_action, game, params);
            let next = step_channels(&state, params, &mut streams.env);
            let outcome = env_step(&next, &leader_action, &follower_action, game, params);
            let next_obs = leader_features(&next, params);
            buffer.add(Experience {
                state: obs,
                action: leader_action.action_vector(),
                reward: outcome.reward_leader,
                next_state: next_obs,
            });
            // Same convention as the joint trainer: updates begin with the
            // first full batch, warmup included; warmup only pins the
            // executed actions to uniform and holds the noise anneal.
            if buffer.len() >= agent_cfg.batch_size {
                let batch = buffer.sample(agent_cfg.batch_size, &mut streams.leader_sample)?;
                let stats = leader.critic_train_step(&batch);
                buffer.update_priorities(&batch.indices, &stats.abs);
                leader.actor_train_step(batch.states.view());
                leader.soft_update_targets(agent_cfg.tau);
            }
            if !warmup {
                trained += 1;
            }
            sums.0 += outcome.reward_follower;
            sums.1 += outcome.reward_leader / game.beta;
            sums.2 += outcome.capacity;
            if schedule.record_slots {
                log.slots.push(SlotRecord {
                    episode,
                    slot,
                    channel: next.clone(),
                    leader: leader_action,
                    follower: follower_action,
                    reward_leader: outcome.reward_leader,
                    reward_follower: outcome.reward_follower,
                    capacity: outcome.capacity,
                });
            }
            state = next;
        }
        let slots = schedule.slots_per_episode as f64;
        log.episodes.push(EpisodeStats {
            episode,
            mean_u_source: sums.0 / slots,
            mean_u_relay: sums.1 / slots,
            mean_capacity: sums.2 / slots,
            noise_scale: episode_noise,
        });
    }
    Ok((leader, log))
}

// ---------------------------------------------------------------------------
// Discretized Q-learning
// ---------------------------------------------------------------------------

/// Grid resolution for the discretized baseline. Grids are uniform and
/// include both interval endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizationSpec {
    /// Number of price grid points.
    pub price_bins: usize,
    /// Number of power grid points.
    pub power_bins: usize,
}

impl Default for DiscretizationSpec {
    fn default() -> Self {
        Self { price_bins: 20, power_bins: 20 }
    }
}

impl DiscretizationSpec {
    /// Both grids need at least their two endpoints.
    pub fn validate(&self) -> Result<()> {
        if self.price_bins < 2 || self.power_bins < 2 {
            return Err(Error::Config("discretization needs at least 2 bins per axis".to_string()));
        }
        Ok(())
    }
}

/// Uniform inclusive grid of `bins` points over `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    assert!(bins >= 2 && hi >= lo, "grid needs at least 2 points over a proper interval");
    let step = (hi - lo) / (bins - 1) as f64;
    (0..bins).map(|i| if i == bins - 1 { hi } else { lo + i as f64 * step }).collect()
}

/// Hyperparameters for the discretized baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnConfig {
    /// Value-network learning rate.
    pub learning_rate: f64,
    /// Soft target-update coefficient per training step.
    pub tau: f64,
    /// Discount on the bootstrapped next-state value.
    pub discount: f64,
    /// Transitions per sampled batch.
    pub batch_size: usize,
    /// Replay capacity (uniform sampling).
    pub buffer_capacity: usize,
    /// Exploration probability at the first trained slot.
    pub epsilon_start: f64,
    /// Exploration probability at the last trained slot.
    pub epsilon_end: f64,
    /// Action grid resolution.
    pub spec: DiscretizationSpec,
    /// Hidden layer widths of both value networks.
    pub hidden_layers: Vec<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            tau: 0.001,
            discount: 0.0,
            batch_size: 128,
            buffer_capacity: 10_000,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            spec: DiscretizationSpec::default(),
            hidden_layers: vec![64, 64],
        }
    }
}

impl DqnConfig {
    /// Checks every field against its documented domain.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push("learning_rate must be positive".to_string());
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            problems.push("tau must be in (0, 1]".to_string());
        }
        if !(0.0..=1.0).contains(&self.discount) {
            problems.push("discount must be in [0, 1]".to_string());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".to_string());
        }
        if self.buffer_capacity < self.batch_size {
            problems.push("buffer_capacity must be at least batch_size".to_string());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start)
            || !(0.0..=self.epsilon_start).contains(&self.epsilon_end)
        {
            problems.push("epsilon schedule must satisfy 0 <= end <= start <= 1".to_string());
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            problems.push("hidden layers must be non-empty".to_string());
        }
        if let Err(Error::Config(msg)) = self.spec.validate() {
            problems.push(msg);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// One discretized Q-learner: a value network with one output per discrete
/// action, its trailing target copy, and an optimizer.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    /// Online value network, one output per discrete action.
    pub q: Mlp,
    /// Trailing target copy.
    pub target: Mlp,
    opt: RmsProp,
    num_actions: usize,
}

impl DqnAgent {
    /// Builds a fresh learner over `num_actions` discrete actions.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        num_actions: usize,
        cfg: &DqnConfig,
        rng: &mut R,
    ) -> Self {
        assert!(num_actions >= 1, "need at least one action");
        let mut specs = Vec::with_capacity(cfg.hidden_layers.len() + 1);
        let mut prev = state_dim;
        for &width in &cfg.hidden_layers {
            specs.push(LayerSpec::new(prev, width, Activation::Relu));
            prev = width;
        }
        specs.push(LayerSpec::new(prev, num_actions, Activation::Identity));
        let q = Mlp::new(&specs, rng);
        assert_eq!(q.output_dim(), num_actions, "one output per discrete action");
        let target = q.clone();
        let opt = RmsProp::new(&q, cfg.learning_rate);
        Self { q, target, opt, num_actions }
    }

    /// Wraps an externally loaded network pair (e.g. from checkpoints).
    pub fn from_networks(q: Mlp, target: Mlp, cfg: &DqnConfig) -> Result<Self> {
        if q.output_dim() != target.output_dim() || q.input_dim() != target.input_dim() {
            return Err(Error::Config("value network and target disagree on shape".to_string()));
        }
        let opt = RmsProp::new(&q, cfg.learning_rate);
        let num_actions = q.output_dim();
        Ok(Self { q, target, opt, num_actions })
    }

    /// Number of discrete actions.
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Greedy action: argmax of the online values, ties to the smallest
    /// index.
    pub fn greedy_action(&self, state: &[f64]) -> usize {
        argmax(&self.q.forward_vec(state))
    }

    /// Greedy-with-exploration action: with probability `epsilon` a uniform
    /// action, otherwise the greedy one.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> usize {
        if epsilon > 0.0 && rng.random_range(0.0..1.0) < epsilon {
            rng.random_range(0..self.num_actions)
        } else {
            self.greedy_action(state)
        }
    }

    /// One temporal-difference step on a uniform batch whose action column
    /// holds discrete indices: the target is
    /// `r + discount * max_a' target(s')_a'` and only the taken action's
    /// output receives gradient. Returns the mean absolute error.
    pub fn train_step(&mut self, batch: &SampledBatch, discount: f64) -> f64 {
        let rows = batch.states.nrows();
        assert!(rows >= 1, "empty batch");
        let bootstrap = if discount != 0.0 {
            let (q_next, _) = self.target.forward(batch.next_states.view());
            Some(q_next)
        } else {
            None
        };
        let (q, cache) = self.q.forward(batch.states.view());
        let mut output_grad = Array2::zeros((rows, self.num_actions));
        let mut sum_abs = 0.0;
        for i in 0..rows {
            let action = batch.actions[[i, 0]] as usize;
            assert!(action < self.num_actions, "stored action index out of range");
            let max_next = bootstrap
                .as_ref()
                .map(|qn| qn.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .unwrap_or(0.0);
            let delta = batch.rewards[i] + discount * max_next - q[[i, action]];
            output_grad[[i, action]] = -delta / rows as f64;
            sum_abs += delta.abs();
        }
        let (grads, _) = self.q.backward(&cache, output_grad.view());
        self.opt.step(&mut self.q, &grads);
        sum_abs / rows as f64
    }

    /// Blends the online network into the target by factor `tau`.
    pub fn soft_update_target(&mut self, tau: f64) {
        crate::nn::soft_update(&mut self.target, &self.q, tau);
    }
}

/// The trained pair of discretized learners plus their action grids.
#[derive(Debug, Clone)]
pub struct DqnAgents {
    /// Relay-side learner over `num_relays * price_bins` actions.
    pub leader: DqnAgent,
    /// Source-side learner over `power_bins` actions.
    pub follower: DqnAgent,
    /// Price grid shared by encoding and decoding.
    pub price_grid: Vec<f64>,
    /// Power grid shared by encoding and decoding.
    pub power_grid: Vec<f64>,
    /// Number of relays the leader's action space is laid out for.
    pub num_relays: usize,
}

impl DqnAgents {
    /// Decodes a relay-side action index into `(relay, price)`: indices
    /// enumerate prices fastest, relays slowest.
    pub fn decode_leader(&self, index: usize, cfg: &GameConfig) -> LeaderAction {
        let bins = self.price_grid.len();
        assert!(index < self.num_relays * bins, "leader action index out of range");
        let relay = index / bins;
        let price = self.price_grid[index % bins];
        LeaderAction::from_decision(relay, price, self.num_relays, cfg)
    }

    /// Decodes a source-side action index into a power purchase.
    pub fn decode_follower(&self, index: usize, cfg: &GameConfig) -> FollowerAction {
        FollowerAction::from_power(self.power_grid[index], cfg)
    }

    /// Greedy play on an observed state.
    pub fn act_greedy(
        &self,
        observed: &ChannelState,
        cfg: &GameConfig,
        params: &ChannelParams,
    ) -> (LeaderAction, FollowerAction) {
        let obs = leader_features(observed, params);
        let leader_action = self.decode_leader(self.leader.greedy_action(&obs), cfg);
        let follower_state = follower_features(&obs, &leader_action, self.num_relays);
        let follower_action = self.decode_follower(self.follower.greedy_action(&follower_state), cfg);
        (leader_action, follower_action)
    }
}

/// Trains the discretized baseline: both sides learn value networks over
/// the same observations and rewards as the proposed method, with uniform
/// replay and annealed greedy exploration.
pub fn train_dqn(
    params: &ChannelParams,
    game: &GameConfig,
    cfg: &DqnConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(DqnAgents, TrainingLog)> {
    params.validate()?;
    game.validate()?;
    cfg.validate()?;
    schedule.validate()?;
    let k = params.num_relays;
    let mut streams = RngStreams::derive(seed);
    let leader_actions = k * cfg.spec.price_bins;
    let mut agents = DqnAgents {
        leader: DqnAgent::new(leader_state_dim(k), leader_actions, cfg, &mut streams.init),
        follower: DqnAgent::new(follower_state_dim(k), cfg.spec.power_bins, cfg, &mut streams.init),
        price_grid: uniform_grid(game.c_min, game.c_max, cfg.spec.price_bins),
        power_grid: uniform_grid(game.p_min, game.p_max, cfg.spec.power_bins),
        num_relays: k,
    };
    // Uniform replay: every transition keeps the insertion priority, so
    // proportional sampling degenerates to uniform and (with exponent 0)
    // every importance weight is 1.
    let mut leader_buffer = PrioritizedBuffer::new(cfg.buffer_capacity, 0.0, 1.0);
    let mut follower_buffer = PrioritizedBuffer::new(cfg.buffer_capacity, 0.0, 1.0);

    let total_trained = ((schedule.episodes - schedule.warmup_episodes)
        * schedule.slots_per_episode) as u64;
    let mut trained = 0u64;
    let mut log = TrainingLog { episodes: Vec::with_capacity(schedule.episodes), slots: Vec::new() };

    for episode in 0..schedule.episodes {
        let warmup = episode < schedule.warmup_episodes;
        let episode_epsilon = if warmup {
            cfg.epsilon_start
        } else {
            noise_schedule(trained, total_trained, cfg.epsilon_start, cfg.epsilon_end)
        };
        let mut state = init_channels_rng(params, &mut streams.env)?;
        let mut sums = (0.0, 0.0, 0.0);
        for slot in 0..schedule.slots_per_episode {
            let obs = leader_features(&state, params);
            let (leader_index, follower_index, leader_action, follower_state) = if warmup {
                let li = streams.warmup.random_range(0..leader_actions);
                let la = agents.decode_leader(li, game);
                let fs = follower_features(&obs, &la, k);
                let fi = streams.warmup.random_range(0..cfg.spec.power_bins);
                (li, fi, la, fs)
            } else {
                let epsilon = noise_schedule(
                    trained,
                    total_trained,
                    cfg.epsilon_start,
                    cfg.epsilon_end,
                );
                let li = agents.leader.act(&obs, epsilon, &mut streams.leader_noise);
                let la = agents.decode_leader(li, game);
                let fs = follower_features(&obs, &la, k);
                let fi = agents.follower.act(&fs, epsilon, &mut streams.follower_noise);
                (li, fi, la, fs)
            };
            let follower_action = agents.decode_follower(follower_index, game);
            let next = step_channels(&state, params, &mut streams.env);
            let outcome = env_step(&next, &leader_action, &follower_action, game, params);
            let next_obs = leader_features(&next, params);
            let follower_next = follower_features(&next_obs, &leader_action, k);
            leader_buffer.add(Experience {
                state: obs,
                action: vec![leader_index as f64],
                reward: outcome.reward_leader,
                next_state: next_obs,
            });
            follower_buffer.add(Experience {
                state: follower_state,
                action: vec![follower_index as f64],
                reward: outcome.reward_follower,
                next_state: follower_next,
            });
            // Same convention as the joint trainer: updates begin with the
            // first full batch, warmup included; warmup only pins the
            // executed actions to uniform and holds the epsilon anneal.
            if leader_buffer.len() >= cfg.batch_size {
                let batch = leader_buffer.sample(cfg.batch_size, &mut streams.leader_sample)?;
                agents.leader.train_step(&batch, cfg.discount);
                agents.leader.soft_update_target(cfg.tau);
            }
            if follower_buffer.len() >= cfg.batch_size {
                let batch =
                    follower_buffer.sample(cfg.batch_size, &mut streams.follower_sample)?;
                agents.follower.train_step(&batch, cfg.discount);
                agents.follower.soft_update_target(cfg.tau);
            }
            if !warmup {
                trained += 1;
            }
            sums.0 += outcome.reward_follower;
            sums.1 += outcome.reward_leader / game.beta;
            sums.2 += outcome.capacity;
            if schedule.record_slots {
                log.slots.push(SlotRecord {
                    episode,
                    slot,
                    channel: next.clone(),
                    leader: leader_action,
                    follower: follower_action,
                    reward_leader: outcome.reward_leader,
                    reward_follower: outcome.reward_follower,
                    capacity: outcome.capacity,
                });
            }
            state = next;
        }
        let slots = schedule.slots_per_episode as f64;
        log.episodes.push(EpisodeStats {
            episode,
            mean_u_source: sums.0 / slots,
            mean_u_relay: sums.1 / slots,
            mean_capacity: sums.2 / slots,
            noise_scale: episode_epsilon,
        });
    }
    Ok((agents, log))
}
