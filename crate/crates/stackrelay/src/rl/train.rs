//! The two-agent training loop and the noiseless evaluation runners.
//!
//! Per slot the relay-side agent acts first on the previous slot's channel
//! features, the source-side agent acts on those features plus the announced
//! (relay, price), the channel advances, and both agents are rewarded under
//! the fresh state. Each agent then stores its transition, draws a
//! prioritized batch, takes one critic and one actor step, refreshes the
//! drawn priorities, and soft-updates its targets. The first
//! `warmup_episodes` episodes act uniformly at random and skip all updates,
//! filling the buffers before learning starts.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{init_channels_rng, step_channels, ChannelParams, ChannelState};
use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::rl::ddpg::{AgentConfig, DdpgAgent};
use crate::rl::mdp::{
    env_step, follower_act, follower_features, follower_state_dim, leader_act, leader_features,
    leader_state_dim, random_follower_action, random_leader_action, FollowerAction, LeaderAction,
};
use crate::rl::replay::{Experience, PrioritizedBuffer};

/// Episode/slot layout of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSchedule {
    /// Total episodes, including warmup.
    pub episodes: usize,
    /// Slots per episode.
    pub slots_per_episode: usize,
    /// Leading episodes that act uniformly at random without training.
    pub warmup_episodes: usize,
    /// Record every slot's channel, actions, and rewards into the log
    /// (sized `episodes * slots_per_episode`; off by default).
    pub record_slots: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self { episodes: 100, slots_per_episode: 1000, warmup_episodes: 10, record_slots: false }
    }
}

impl TrainSchedule {
    /// Checks the layout is runnable.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.episodes == 0 {
            problems.push("episodes must be at least 1".to_string());
        }
        if self.slots_per_episode == 0 {
            problems.push("slots_per_episode must be at least 1".to_string());
        }
        if self.warmup_episodes >= self.episodes {
            problems.push("warmup_episodes must be smaller than episodes".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Slots that run with learning enabled.
    fn trained_slots(&self) -> u64 {
        ((self.episodes - self.warmup_episodes) * self.slots_per_episode) as u64
    }
}

/// Per-episode averages logged during training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    /// Zero-based episode index.
    pub episode: usize,
    /// Mean source utility over the episode's slots.
    pub mean_u_source: f64,
    /// Mean relay revenue (price times power) over the episode's slots.
    pub mean_u_relay: f64,
    /// Mean realized capacity over the episode's slots.
    pub mean_capacity: f64,
    /// Exploration noise scale at the episode's first slot (0 in
    /// evaluation and during random-action warmup reporting the schedule
    /// start).
    pub noise_scale: f64,
}

/// Everything one executed slot did, for audits and replays.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// Zero-based episode index.
    pub episode: usize,
    /// Zero-based slot index within the episode.
    pub slot: usize,
    /// The channel state the rewards were settled under.
    pub channel: ChannelState,
    /// Executed relay-side action.
    pub leader: LeaderAction,
    /// Executed source-side action.
    pub follower: FollowerAction,
    /// Relay-side reward.
    pub reward_leader: f64,
    /// Source-side reward.
    pub reward_follower: f64,
    /// Realized capacity.
    pub capacity: f64,
}

/// Output of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    /// One entry per episode, in order.
    pub episodes: Vec<EpisodeStats>,
    /// Per-slot records when the schedule asked for them, else empty.
    pub slots: Vec<SlotRecord>,
}

/// Output of an evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalLog {
    /// One entry per evaluation episode.
    pub episodes: Vec<EpisodeStats>,
    /// Mean source utility over all slots.
    pub mean_u_source: f64,
    /// Mean relay revenue over all slots.
    pub mean_u_relay: f64,
    /// Mean capacity over all slots.
    pub mean_capacity: f64,
    /// Per-slot records when requested, else empty.
    pub slots: Vec<SlotRecord>,
}

/// The trained pair of agents.
#[derive(Debug, Clone)]
pub struct TrainedAgents {
    /// Relay-side (leader) agent.
    pub leader: DdpgAgent,
    /// Source-side (follower) agent.
    pub follower: DdpgAgent,
}

/// Named RNG streams derived from one master seed, so every consumer of
/// randomness advances independently of the others and runs stay
/// reproducible even if one consumer changes how much it draws.
pub(crate) struct RngStreams {
    /// Channel initialization and stepping.
    pub env: ChaCha8Rng,
    /// Network weight initialization, both agents.
    pub init: ChaCha8Rng,
    /// Uniform warmup actions, both agents.
    pub warmup: ChaCha8Rng,
    /// Leader exploration noise.
    pub leader_noise: ChaCha8Rng,
    /// Follower exploration noise.
    pub follower_noise: ChaCha8Rng,
    /// Leader replay sampling.
    pub leader_sample: ChaCha8Rng,
    /// Follower replay sampling.
    pub follower_sample: ChaCha8Rng,
}

impl RngStreams {
    pub fn derive(seed: u64) -> Self {
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let mut next = || ChaCha8Rng::seed_from_u64(master.next_u64());
        Self {
            env: next(),
            init: next(),
            warmup: next(),
            leader_noise: next(),
            follower_noise: next(),
            leader_sample: next(),
            follower_sample: next(),
        }
    }
}

/// Linear annealing from `start` (first trained slot) to `end` (last
/// trained slot) after `done` of `total` trained slots. Drives both the
/// exploration noise here and the greedy-exploration schedule of the
/// discretized baseline.
pub(crate) fn noise_schedule(done: u64, total: u64, start: f64, end: f64) -> f64 {
    if total <= 1 {
        return end;
    }
    let frac = (done.min(total - 1)) as f64 / (total - 1) as f64;
    start + (end - start) * frac
}

/// Runs the full two-agent training loop and returns the trained agents
/// plus the per-episode log. Identical inputs produce identical outputs.
pub fn train(
    params: &ChannelParams,
    game: &GameConfig,
    agent_cfg: &AgentConfig,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(TrainedAgents, TrainingLog)> {
    params.validate()?;
    game.validate()?;
    agent_cfg.validate()?;
    schedule.validate()?;
    let k = params.num_relays;
    let mut streams = RngStreams::derive(seed);
    let leader = DdpgAgent::new(
        leader_state_dim(k),
        LeaderAction::action_dim(k),
        agent_cfg,
        &mut streams.init,
    );
    let follower = DdpgAgent::new(follower_state_dim(k), 1, agent_cfg, &mut streams.init);
    let mut agents = TrainedAgents { leader, follower };
    let mut leader_buffer =
        PrioritizedBuffer::new(agent_cfg.buffer_capacity, agent_cfg.priority_exponent, agent_cfg.priority_floor);
    let mut follower_buffer =
        PrioritizedBuffer::new(agent_cfg.buffer_capacity, agent_cfg.priority_exponent, agent_cfg.priority_floor);

    let total_trained = schedule.trained_slots();
    let mut trained = 0u64;
    let mut log = TrainingLog { episodes: Vec::with_capacity(schedule.episodes), slots: Vec::new() };
    if schedule.record_slots {
        log.slots.reserve(schedule.episodes * schedule.slots_per_episode);
    }

    for episode in 0..schedule.episodes {
        let warmup = episode < schedule.warmup_episodes;
        let episode_noise = if warmup {
            agent_cfg.noise_start
        } else {
            noise_schedule(trained, total_trained, agent_cfg.noise_start, agent_cfg.noise_end)
        };
        let mut state = init_channels_rng(params, &mut streams.env)?;
        let mut sum_u_source = 0.0;
        let mut sum_u_relay = 0.0;
        let mut sum_capacity = 0.0;

        for slot in 0..schedule.slots_per_episode {
            let obs = leader_features(&state, params);
            let (leader_action, follower_state, follower_action) = if warmup {
                let la = random_leader_action(k, game, &mut streams.warmup);
                let fs = follower_features(&obs, &la, k);
                let fa = random_follower_action(game, &mut streams.warmup);
                (la, fs, fa)
            } else {
                let noise = noise_schedule(
                    trained,
                    total_trained,
                    agent_cfg.noise_start,
                    agent_cfg.noise_end,
                );
                let la =
                    leader_act(&agents.leader.actor, &obs, noise, game, &mut streams.leader_noise);
                let fs = follower_features(&obs, &la, k);
                let fa = follower_act(
                    &agents.follower.actor,
                    &fs,
                    noise,
                    game,
                    &mut streams.follower_noise,
                );
                (la, fs, fa)
            };

            let next = step_channels(&state, params, &mut streams.env);
            let outcome = env_step(&next, &leader_action, &follower_action, game, params);
            let next_obs = leader_features(&next, params);
            // The follower's successor state pairs the next observation
            // with the *current* announcement: the next announcement does
            // not exist yet at storage time. With the default discount of 0
            // the successor state never enters any update.
            let follower_next = follower_features(&next_obs, &leader_action, k);

            leader_buffer.add(Experience {
                state: obs,
                action: leader_action.action_vector(),
                reward: outcome.reward_leader,
                next_state: next_obs,
            });
            follower_buffer.add(Experience {
                state: follower_state,
                action: follower_action.action_vector(),
                reward: outcome.reward_follower,
                next_state: follower_next,
            });

            // Updates run from the first full batch onward, warmup included:
            // during warmup the executed actions stay uniform while the
            // critics pre-fit on that maximally diverse data, so the actors
            // start the exploitation phase from informed policies instead of
            // ascending untrained critics. Only post-warmup slots advance the
            // exploration-noise anneal.
            train_agent_once(
                &mut agents.leader,
                &mut leader_buffer,
                agent_cfg,
                &mut streams.leader_sample,
            )?;
            train_agent_once(
                &mut agents.follower,
                &mut follower_buffer,
                agent_cfg,
                &mut streams.follower_sample,
            )?;
            if !warmup {
                trained += 1;
            }

            sum_u_source += outcome.reward_follower;
            sum_u_relay += outcome.reward_leader / game.beta;
            sum_capacity += outcome.capacity;
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
            mean_u_source: sum_u_source / slots,
            mean_u_relay: sum_u_relay / slots,
            mean_capacity: sum_capacity / slots,
            noise_scale: episode_noise,
        });
    }
    Ok((agents, log))
}

/// One sampled update for one agent: critic step, priority refresh, actor
/// step, soft target updates. Skipped silently while the buffer has fewer
/// transitions than one batch.
fn train_agent_once(
    agent: &mut DdpgAgent,
    buffer: &mut PrioritizedBuffer,
    cfg: &AgentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if buffer.len() < cfg.batch_size {
        return Ok(());
    }
    let batch = buffer.sample(cfg.batch_size, rng)?;
    let stats = agent.critic_train_step(&batch);
    buffer.update_priorities(&batch.indices, &stats.abs);
    agent.actor_train_step(batch.states.view());
    agent.soft_update_targets(cfg.tau);
    Ok(())
}

/// Runs any policy over freshly drawn channel trajectories and logs the
/// same statistics as training.
///
/// The policy sees the observed (previous) state and the current state and
/// returns both actions; closed-form baselines read the current state,
/// learned policies the observed one. The channel trajectory depends only on
/// `params`, `episodes`, `slots_per_episode`, and `seed` — never on the
/// policy — so different policies evaluated with the same arguments face
/// byte-identical channel draws.
pub fn evaluate_policy<F>(
    params: &ChannelParams,
    game: &GameConfig,
    episodes: usize,
    slots_per_episode: usize,
    seed: u64,
    record_slots: bool,
    mut policy: F,
) -> Result<EvalLog>
where
    F: FnMut(&ChannelState, &ChannelState) -> Result<(LeaderAction, FollowerAction)>,
{
    params.validate()?;
    game.validate()?;
    if episodes == 0 || slots_per_episode == 0 {
        return Err(Error::Config("evaluation needs at least one episode and slot".to_string()));
    }
    let mut env = RngStreams::derive(seed).env;
    let mut log = EvalLog {
        episodes: Vec::with_capacity(episodes),
        mean_u_source: 0.0,
        mean_u_relay: 0.0,
        mean_capacity: 0.0,
        slots: Vec::new(),
    };
    for episode in 0..episodes {
        let mut state = init_channels_rng(params, &mut env)?;
        let mut sum_u_source = 0.0;
        let mut sum_u_relay = 0.0;
        let mut sum_capacity = 0.0;
        for slot in 0..slots_per_episode {
            let next = step_channels(&state, params, &mut env);
            let (leader_action, follower_action) = policy(&state, &next)?;
            let outcome = env_step(&next, &leader_action, &follower_action, game, params);
            sum_u_source += outcome.reward_follower;
            sum_u_relay += outcome.reward_leader / game.beta;
            sum_capacity += outcome.capacity;
            if record_slots {
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
        let slots = slots_per_episode as f64;
        log.episodes.push(EpisodeStats {
            episode,
            mean_u_source: sum_u_source / slots,
            mean_u_relay: sum_u_relay / slots,
            mean_capacity: sum_capacity / slots,
            noise_scale: 0.0,
        });
    }
    let n = log.episodes.len() as f64;
    log.mean_u_source = log.episodes.iter().map(|e| e.mean_u_source).sum::<f64>() / n;
    log.mean_u_relay = log.episodes.iter().map(|e| e.mean_u_relay).sum::<f64>() / n;
    log.mean_capacity = log.episodes.iter().map(|e| e.mean_capacity).sum::<f64>() / n;
    Ok(log)
}

/// Evaluates trained agents with exploration disabled and parameters
/// frozen: both actors run noiselessly on the observed (previous) state.
pub fn evaluate(
    agents: &TrainedAgents,
    params: &ChannelParams,
    game: &GameConfig,
    episodes: usize,
    slots_per_episode: usize,
    seed: u64,
    record_slots: bool,
) -> Result<EvalLog> {
    let k = params.num_relays;
    // Noiseless acting consumes no randomness; the RNG argument is inert.
    let mut inert = ChaCha8Rng::seed_from_u64(0);
    evaluate_policy(params, game, episodes, slots_per_episode, seed, record_slots, |observed, _current| {
        let obs = leader_features(observed, params);
        let leader_action = leader_act(&agents.leader.actor, &obs, 0.0, game, &mut inert);
        let follower_state = follower_features(&obs, &leader_action, k);
        let follower_action =
            follower_act(&agents.follower.actor, &follower_state, 0.0, game, &mut inert);
        Ok((leader_action, follower_action))
    })
}
