//! Two-agent actor-critic learning for the relay power-pricing game.
//!
//! Both sides of the pricing game are trained as independent deterministic
//! actor-critic agents that only observe the previous slot's channel state:
//!
//! * the relay-side agent picks a relay and a unit price,
//! * the source-side agent picks how much power to buy,
//!
//! while rewards are paid out under the *current* slot's channel, which
//! neither agent sees. The submodules split the machinery:
//!
//! * [`mdp`] — observation features, action encodings, exploration, and the
//!   reward-producing environment step;
//! * [`replay`] — a sum-tree prioritized experience replay buffer with
//!   importance-sampling weights;
//! * [`ddpg`] — one agent: online/target actor and critic networks plus the
//!   temporal-difference and policy-gradient update steps;
//! * [`train`] — the full training loop, evaluation runners, and their logs.

pub mod ddpg;
pub mod mdp;
pub mod replay;
pub mod train;

pub use ddpg::{policy_objective_and_gradient, AgentConfig, DdpgAgent, TdStats};
pub use mdp::{
    env_step, follower_act, follower_features, follower_state_dim, leader_act, leader_features,
    leader_state_dim, random_follower_action, random_leader_action, FollowerAction, LeaderAction,
    StepOutcome,
};
pub use replay::{Experience, PrioritizedBuffer, SampledBatch};
pub use train::{
    evaluate, evaluate_policy, train, EpisodeStats, EvalLog, SlotRecord, TrainSchedule,
    TrainedAgents, TrainingLog,
};
