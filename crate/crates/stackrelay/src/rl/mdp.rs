//! Observations, action encodings, exploration, and the environment step.
//!
//! Agents never see the channel they are paid under: at slot `t` both act on
//! features of the slot `t-1` state, the channel then advances, and rewards
//! are computed with the fresh slot-`t` state. All continuous action heads
//! live on the unit interval (the networks end in a unit-interval squash) and
//! are mapped affinely onto their physical boxes here, so replayed action
//! vectors and network outputs share one scale.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{link_quantities, ChannelParams, ChannelState};
use crate::game::{relay_utility, source_utility, GameConfig};
use crate::nn::Mlp;

/// Relay-side (leader) decision for one slot.
///
/// `scores` holds the executed per-relay preference scores — the actor's
/// squashed outputs with exploration noise already added — because the critic
/// is trained on the action vector the agent actually emitted, not on the
/// collapsed argmax. `price_unit` is the executed price on the unit interval
/// (post-noise, post-clamp); `price` is the same value on `[c_min, c_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaderAction {
    /// Zero-based index of the selected relay (argmax of `scores`).
    pub relay: usize,
    /// Offered price per unit power, within `[c_min, c_max]`.
    pub price: f64,
    /// Executed per-relay scores, one per relay.
    pub scores: Vec<f64>,
    /// Executed price on the unit interval.
    pub price_unit: f64,
}

impl LeaderAction {
    /// The action vector stored in replay and consumed by critics:
    /// the relay scores followed by the unit-interval price.
    pub fn action_vector(&self) -> Vec<f64> {
        let mut v = self.scores.clone();
        v.push(self.price_unit);
        v
    }

    /// Length of [`LeaderAction::action_vector`] for `num_relays` relays.
    pub fn action_dim(num_relays: usize) -> usize {
        num_relays + 1
    }

    /// Builds the action that deterministically selects `relay` at `price`,
    /// e.g. when a closed-form policy rather than an actor network decides.
    /// The selected relay's score is 1, all others 0.
    pub fn from_decision(relay: usize, price: f64, num_relays: usize, cfg: &GameConfig) -> Self {
        assert!(relay < num_relays, "relay index out of range");
        let mut scores = vec![0.0; num_relays];
        scores[relay] = 1.0;
        Self { relay, price, scores, price_unit: interval_to_unit(price, cfg.c_min, cfg.c_max) }
    }
}

/// Source-side (follower) decision for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerAction {
    /// Purchased relay transmit power, within `[p_min, p_max]`.
    pub power: f64,
    /// Executed power on the unit interval.
    pub power_unit: f64,
}

impl FollowerAction {
    /// The single-entry action vector stored in replay.
    pub fn action_vector(&self) -> Vec<f64> {
        vec![self.power_unit]
    }

    /// Builds the action purchasing exactly `power`.
    pub fn from_power(power: f64, cfg: &GameConfig) -> Self {
        Self { power, power_unit: interval_to_unit(power, cfg.p_min, cfg.p_max) }
    }
}

/// Rewards and realized capacity for one executed slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    /// Relay-side reward: `beta * (price * power)`.
    pub reward_leader: f64,
    /// Source-side reward: the source utility (capacity minus payment cost).
    pub reward_follower: f64,
    /// Realized end-to-end capacity in bits/s/Hz.
    pub capacity: f64,
}

/// Maps `u` on the unit interval onto `[lo, hi]`, clamping first.
pub fn unit_to_interval(u: f64, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * u.clamp(0.0, 1.0)
}

/// Maps `x` in `[lo, hi]` back onto the unit interval (0 when the interval
/// is degenerate).
pub fn interval_to_unit(x: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Dimension of the relay-side observation: two squared magnitudes per relay.
pub fn leader_state_dim(num_relays: usize) -> usize {
    2 * num_relays
}

/// Dimension of the source-side observation: the relay-side features plus the
/// announced action (relay one-hot and unit-interval price).
pub fn follower_state_dim(num_relays: usize) -> usize {
    leader_state_dim(num_relays) + num_relays + 1
}

/// Builds the relay-side observation from the previous slot's channel state:
/// `[|h_s1|^2/var_s1, ..., |h_sK|^2/var_sK, |h_1d|^2/var_1d, ..., |h_Kd|^2/var_Kd]`.
///
/// Squared magnitudes are sufficient because every utility in the game
/// depends on the channel only through them; dividing by the configured link
/// variance puts all features on a comparable scale regardless of geometry.
pub fn leader_features(observed: &ChannelState, params: &ChannelParams) -> Vec<f64> {
    let k = params.num_relays;
    assert_eq!(observed.h_sk.len(), k, "channel state does not match params");
    let mut features = Vec::with_capacity(2 * k);
    for i in 0..k {
        features.push(observed.h_sk[i].norm_sqr() / params.var_sk[i]);
    }
    for i in 0..k {
        features.push(observed.h_kd[i].norm_sqr() / params.var_kd[i]);
    }
    features
}

/// Builds the source-side observation: the relay-side features concatenated
/// with a one-hot encoding of the announced relay and the unit-interval
/// price.
pub fn follower_features(
    leader_obs: &[f64],
    announced: &LeaderAction,
    num_relays: usize,
) -> Vec<f64> {
    assert_eq!(leader_obs.len(), leader_state_dim(num_relays), "feature length mismatch");
    assert!(announced.relay < num_relays, "announced relay out of range");
    let mut features = Vec::with_capacity(follower_state_dim(num_relays));
    features.extend_from_slice(leader_obs);
    for i in 0..num_relays {
        features.push(if i == announced.relay { 1.0 } else { 0.0 });
    }
    features.push(announced.price_unit);
    features
}

/// Runs the relay-side actor on an observation and applies exploration.
///
/// The actor emits `K` relay scores plus one price, all on the unit interval.
/// Zero-mean Gaussian noise of standard deviation `noise_scale` is added to
/// every output (`noise_scale == 0.0` draws nothing, so evaluation consumes
/// no randomness); the relay is the argmax of the *noised* scores (ties break
/// to the smallest index) and the price is clamped back to the unit interval
/// before being mapped onto `[c_min, c_max]`.
pub fn leader_act<R: Rng + ?Sized>(
    actor: &Mlp,
    obs: &[f64],
    noise_scale: f64,
    cfg: &GameConfig,
    rng: &mut R,
) -> LeaderAction {
    assert!(noise_scale >= 0.0, "noise scale must be non-negative");
    let mut out = actor.forward_vec(obs);
    assert!(out.len() >= 2, "relay-side actor must emit at least one score and a price");
    if noise_scale > 0.0 {
        for v in &mut out {
            let draw: f64 = rng.sample(StandardNormal);
            *v += noise_scale * draw;
        }
    }
    let price_unit = out.pop().expect("non-empty output").clamp(0.0, 1.0);
    let scores = out;
    let relay = argmax(&scores);
    LeaderAction {
        relay,
        price: unit_to_interval(price_unit, cfg.c_min, cfg.c_max),
        scores,
        price_unit,
    }
}

/// Runs the source-side actor on an observation and applies exploration:
/// a single unit-interval power output, Gaussian-noised and clamped, mapped
/// onto `[p_min, p_max]`.
pub fn follower_act<R: Rng + ?Sized>(
    actor: &Mlp,
    state: &[f64],
    noise_scale: f64,
    cfg: &GameConfig,
    rng: &mut R,
) -> FollowerAction {
    assert!(noise_scale >= 0.0, "noise scale must be non-negative");
    let out = actor.forward_vec(state);
    assert_eq!(out.len(), 1, "source-side actor must emit exactly one output");
    let mut u = out[0];
    if noise_scale > 0.0 {
        let draw: f64 = rng.sample(StandardNormal);
        u += noise_scale * draw;
    }
    let power_unit = u.clamp(0.0, 1.0);
    FollowerAction { power: unit_to_interval(power_unit, cfg.p_min, cfg.p_max), power_unit }
}

/// Draws a uniformly random relay-side action (used to fill replay buffers
/// before any training starts, and by the random baseline).
///
/// Scores are i.i.d. uniform on the unit interval, which makes the selected
/// relay index itself uniform by symmetry.
pub fn random_leader_action<R: Rng + ?Sized>(
    num_relays: usize,
    cfg: &GameConfig,
    rng: &mut R,
) -> LeaderAction {
    assert!(num_relays >= 1, "need at least one relay");
    let scores: Vec<f64> = (0..num_relays).map(|_| rng.random_range(0.0..1.0)).collect();
    let price_unit = rng.random_range(0.0..1.0);
    let relay = argmax(&scores);
    LeaderAction {
        relay,
        price: unit_to_interval(price_unit, cfg.c_min, cfg.c_max),
        scores,
        price_unit,
    }
}

/// Draws a uniformly random source-side action.
pub fn random_follower_action<R: Rng + ?Sized>(cfg: &GameConfig, rng: &mut R) -> FollowerAction {
    let power_unit = rng.random_range(0.0..1.0);
    FollowerAction { power: unit_to_interval(power_unit, cfg.p_min, cfg.p_max), power_unit }
}

/// Executes one slot: prices and power are settled under the *current*
/// channel state, which the agents did not observe when acting.
///
/// The relay side is rewarded `beta * price * power`; the source side is
/// rewarded its utility (capacity minus `alpha * price * power`). If the
/// selected relay's second hop has (numerically) vanished, no data flows:
/// capacity is 0 and the source still pays for the power it bought.
pub fn env_step(
    current: &ChannelState,
    leader: &LeaderAction,
    follower: &FollowerAction,
    cfg: &GameConfig,
    params: &ChannelParams,
) -> StepOutcome {
    assert!(leader.relay < params.num_relays, "selected relay out of range");
    assert!(
        leader.price >= cfg.c_min - 1e-12 && leader.price <= cfg.c_max + 1e-12,
        "price outside its box"
    );
    assert!(
        follower.power >= cfg.p_min - 1e-12 && follower.power <= cfg.p_max + 1e-12,
        "power outside its box"
    );
    let u_relay = relay_utility(follower.power, leader.price);
    let (u_source, capacity) = match link_quantities(current, leader.relay, cfg.p_s, params) {
        Ok(lq) => {
            let u = source_utility(follower.power, leader.price, &lq, cfg.alpha);
            let cap = crate::channel::channel_capacity(follower.power, &lq);
            (u, cap)
        }
        Err(_) => (-cfg.alpha * leader.price * follower.power, 0.0),
    };
    StepOutcome { reward_leader: cfg.beta * u_relay, reward_follower: u_source, capacity }
}

/// Index of the largest value, ties broken to the smallest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    assert!(!values.is_empty(), "argmax of empty slice");
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
