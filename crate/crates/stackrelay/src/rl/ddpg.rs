//! One deterministic actor-critic agent: online and target networks, the
//! weighted temporal-difference critic update, and the chained policy
//! gradient actor update.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Gradients, LayerSpec, Mlp, RmsProp};
use crate::rl::replay::SampledBatch;

/// Hyperparameters shared by both learning agents.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    /// Actor learning rate.
    pub actor_lr: f64,
    /// Critic learning rate.
    pub critic_lr: f64,
    /// Soft target-update coefficient per training step.
    pub tau: f64,
    /// Discount on the bootstrapped next-state value. The pricing game
    /// settles within a single slot, so the default is 0 (no bootstrap);
    /// any value in `[0, 1]` is accepted.
    pub discount: f64,
    /// Transitions per sampled training batch.
    pub batch_size: usize,
    /// Replay buffer capacity.
    pub buffer_capacity: usize,
    /// Exploration noise standard deviation at the first trained slot.
    pub noise_start: f64,
    /// Exploration noise standard deviation at the last trained slot.
    pub noise_end: f64,
    /// Prioritized-replay importance-correction exponent.
    pub priority_exponent: f64,
    /// Additive floor keeping every stored priority positive.
    pub priority_floor: f64,
    /// Hidden layer widths shared by actor and critic networks.
    pub hidden_layers: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            actor_lr: 0.001,
            critic_lr: 0.005,
            tau: 0.001,
            discount: 0.0,
            batch_size: 128,
            buffer_capacity: 10_000,
            noise_start: 0.3,
            noise_end: 0.01,
            priority_exponent: 0.6,
            priority_floor: 1e-3,
            hidden_layers: vec![64, 64],
        }
    }
}

impl AgentConfig {
    /// Checks every field against its documented domain.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.actor_lr > 0.0 && self.actor_lr.is_finite()) {
            problems.push("actor_lr must be positive".to_string());
        }
        if !(self.critic_lr > 0.0 && self.critic_lr.is_finite()) {
            problems.push("critic_lr must be positive".to_string());
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
        if !(self.noise_start >= 0.0 && self.noise_start.is_finite()) {
            problems.push("noise_start must be non-negative".to_string());
        }
        if !(self.noise_end >= 0.0 && self.noise_end <= self.noise_start) {
            problems.push("noise_end must be in [0, noise_start]".to_string());
        }
        if !(self.priority_exponent >= 0.0 && self.priority_exponent.is_finite()) {
            problems.push("priority_exponent must be non-negative".to_string());
        }
        if !(self.priority_floor > 0.0 && self.priority_floor.is_finite()) {
            problems.push("priority_floor must be positive".to_string());
        }
        if self.hidden_layers.iter().any(|&w| w == 0) {
            problems.push("hidden layers must be non-empty".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Per-batch temporal-difference statistics from a critic step.
#[derive(Debug, Clone, PartialEq)]
pub struct TdStats {
    /// Mean absolute temporal-difference error over the batch.
    pub mean_abs: f64,
    /// Absolute error per batch row, for replay priority refreshes.
    pub abs: Vec<f64>,
}

/// A deterministic actor-critic agent with online and target copies of both
/// networks.
///
/// The actor maps an observation to unit-interval action components (its
/// final layer is a unit-interval squash); the critic maps the concatenated
/// `(state, action)` onto one unbounded value. Targets start as exact copies
/// of the online networks and trail them through soft updates.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    /// Online policy network.
    pub actor: Mlp,
    /// Online value network over `(state, action)`.
    pub critic: Mlp,
    /// Slowly trailing copy of the actor used in bootstrap targets.
    pub target_actor: Mlp,
    /// Slowly trailing copy of the critic used in bootstrap targets.
    pub target_critic: Mlp,
    actor_opt: RmsProp,
    critic_opt: RmsProp,
    discount: f64,
}

impl DdpgAgent {
    /// Builds a fresh agent for the given observation/action widths.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        cfg: &AgentConfig,
        rng: &mut R,
    ) -> Self {
        assert!(state_dim >= 1 && action_dim >= 1, "agent dims must be at least 1");
        let actor = Mlp::new(&layer_chain(state_dim, &cfg.hidden_layers, action_dim, Activation::SigmoidScaled), rng);
        let critic = Mlp::new(
            &layer_chain(state_dim + action_dim, &cfg.hidden_layers, 1, Activation::Identity),
            rng,
        );
        let target_actor = actor.clone();
        let target_critic = critic.clone();
        let actor_opt = RmsProp::new(&actor, cfg.actor_lr);
        let critic_opt = RmsProp::new(&critic, cfg.critic_lr);
        Self { actor, critic, target_actor, target_critic, actor_opt, critic_opt, discount: cfg.discount }
    }

    /// Reassembles an agent from externally loaded networks (e.g. from
    /// checkpoints). Optimizer accumulators restart at zero.
    pub fn from_networks(
        actor: Mlp,
        critic: Mlp,
        target_actor: Mlp,
        target_critic: Mlp,
        cfg: &AgentConfig,
    ) -> Result<Self> {
        if actor.input_dim() + actor.output_dim() != critic.input_dim()
            || target_actor.input_dim() != actor.input_dim()
            || target_actor.output_dim() != actor.output_dim()
            || target_critic.input_dim() != critic.input_dim()
            || critic.output_dim() != 1
            || target_critic.output_dim() != 1
        {
            return Err(Error::Config(
                "checkpointed networks have inconsistent dimensions".to_string(),
            ));
        }
        let actor_opt = RmsProp::new(&actor, cfg.actor_lr);
        let critic_opt = RmsProp::new(&critic, cfg.critic_lr);
        Ok(Self { actor, critic, target_actor, target_critic, actor_opt, critic_opt, discount: cfg.discount })
    }

    /// Configured discount on bootstrapped next-state values.
    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// One weighted temporal-difference regression step on the critic.
    ///
    /// Per row `i` the error is
    /// `delta_i = r_i + discount * Q_target(s'_i, actor_target(s'_i)) - Q(s_i, a_i)`
    /// and the minimized loss is `sum_i(w_i * delta_i^2 / 2)`, so rows drawn
    /// more often than their information warrants contribute less. Returns
    /// the absolute errors for replay priority refresh (the errors of the
    /// parameters *before* this step — the ones the step was computed from).
    pub fn critic_train_step(&mut self, batch: &SampledBatch) -> TdStats {
        let rows = batch.states.nrows();
        assert!(rows >= 1, "empty batch");
        assert_eq!(batch.weights.len(), rows, "one weight per batch row");

        // Bootstrap term, skipped entirely at discount 0 where it cannot
        // contribute.
        let bootstrap = if self.discount != 0.0 {
            let (next_actions, _) = self.target_actor.forward(batch.next_states.view());
            let next_inputs =
                concatenate(Axis(1), &[batch.next_states.view(), next_actions.view()])
                    .expect("row counts match");
            let (q_next, _) = self.target_critic.forward(next_inputs.view());
            Some(q_next)
        } else {
            None
        };

        let inputs = concatenate(Axis(1), &[batch.states.view(), batch.actions.view()])
            .expect("row counts match");
        let (q, cache) = self.critic.forward(inputs.view());

        let mut deltas = Vec::with_capacity(rows);
        for i in 0..rows {
            let target = batch.rewards[i]
                + match &bootstrap {
                    Some(q_next) => self.discount * q_next[[i, 0]],
                    None => 0.0,
                };
            deltas.push(target - q[[i, 0]]);
        }

        // d(loss)/d(q_i) = -w_i * delta_i.
        let mut output_grad = Array2::zeros((rows, 1));
        for i in 0..rows {
            output_grad[[i, 0]] = -batch.weights[i] * deltas[i];
        }
        let (grads, _) = self.critic.backward(&cache, output_grad.view());
        self.critic_opt.step(&mut self.critic, &grads);

        let abs: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
        let mean_abs = abs.iter().sum::<f64>() / rows as f64;
        TdStats { mean_abs, abs }
    }

    /// One policy-gradient ascent step on the actor.
    ///
    /// Maximizes `J = mean_i Q(s_i, actor(s_i))` by chaining the critic's
    /// input gradient (restricted to the action columns) into the actor's
    /// backward pass, then stepping along the *negated* gradient with the
    /// descent optimizer. Returns the pre-step objective estimate `J`.
    pub fn actor_train_step(&mut self, states: ArrayView2<'_, f64>) -> f64 {
        let (objective, mut grads) =
            policy_objective_and_gradient(&self.actor, &self.critic, states);
        grads.scale(-1.0);
        self.actor_opt.step(&mut self.actor, &grads);
        objective
    }

    /// Blends both online networks into their targets by factor `tau`.
    pub fn soft_update_targets(&mut self, tau: f64) {
        crate::nn::soft_update(&mut self.target_actor, &self.actor, tau);
        crate::nn::soft_update(&mut self.target_critic, &self.critic, tau);
    }
}

/// Builds the layer chain `input -> hidden... -> output` with rectified
/// hidden layers and the given output activation.
fn layer_chain(
    input_dim: usize,
    hidden: &[usize],
    output_dim: usize,
    output_activation: Activation,
) -> Vec<LayerSpec> {
    let mut specs = Vec::with_capacity(hidden.len() + 1);
    let mut prev = input_dim;
    for &width in hidden {
        specs.push(LayerSpec::new(prev, width, Activation::Relu));
        prev = width;
    }
    specs.push(LayerSpec::new(prev, output_dim, output_activation));
    specs
}

/// Policy objective `J = mean_i Q(s_i, actor(s_i))` and its gradient with
/// respect to the actor parameters, computed by backpropagating the critic's
/// action-input gradient through the actor.
///
/// Exposed separately from [`DdpgAgent::actor_train_step`] so the chained
/// gradient can be verified against finite differences without touching an
/// optimizer.
pub fn policy_objective_and_gradient(
    actor: &Mlp,
    critic: &Mlp,
    states: ArrayView2<'_, f64>,
) -> (f64, Gradients) {
    let rows = states.nrows();
    assert!(rows >= 1, "empty state batch");
    let (actions, actor_cache) = actor.forward(states);
    let inputs =
        concatenate(Axis(1), &[states.view(), actions.view()]).expect("row counts match");
    let (q, critic_cache) = critic.forward(inputs.view());
    let objective = q.column(0).sum() / rows as f64;

    // dJ/dq_i = 1/rows; the critic backward turns that into dJ/d(input_i),
    // of which only the action columns flow back into the actor.
    let output_grad = Array2::from_elem((rows, 1), 1.0 / rows as f64);
    let (_, input_grad) = critic.backward(&critic_cache, output_grad.view());
    let action_grad = input_grad.slice(ndarray::s![.., states.ncols()..]).to_owned();
    let (grads, _) = actor.backward(&actor_cache, action_grad.view());
    (objective, grads)
}
