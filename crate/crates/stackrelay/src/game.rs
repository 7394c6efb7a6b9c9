//! Exact solutions of the power-pricing game between the source and relays.
//!
//! The interaction is a leader/follower game played once per slot. A relay
//! (the leader) announces a per-watt price `c`; the source (the follower)
//! responds by buying the power `p` that maximizes its utility
//!
//! ```text
//! u_source(p, c) = 0.5 * log2(1 + p*gamma_sk/(p + g_k)) - alpha*c*p
//! ```
//!
//! while the relay earns `u_relay = c * p`. Because `u_source` is strictly
//! concave in `p`, the follower's best response has a closed form: an interior
//! branch `p*(c) = sqrt(co1 + co2/c) - co3` that is active for prices between
//! two thresholds `c0` and `c1`, and the power bounds outside that window
//! ([`BestResponseCurve`]). Substituting `p*(c)` into the relay revenue makes
//! the leader's problem one-dimensional and concave on the interior branch,
//! so the optimal price is one of at most four candidates: the price bounds,
//! the interior stationary point ([`interior_optimal_price`]), and `c0`.
//!
//! Two market structures are solved:
//!
//! * [`alliance_equilibrium`] — all relays cooperate and simply pick the
//!   (relay, price) pair with the highest revenue.
//! * [`competitive_equilibrium`] — relays bid against each other; the winner
//!   is the relay the source prefers at base prices, and its price is capped
//!   by the level at which the source would defect to the runner-up.
//!
//! [`grid_oracle`] re-solves the alliance problem by brute force on a price ×
//! power grid and is used to cross-check the closed forms in tests.

use crate::channel::{channel_capacity, link_quantities, ChannelParams, ChannelState, LinkQuantities};
use crate::error::{Error, Result};

const LN2: f64 = std::f64::consts::LN_2;

/// Prices at or below this take the `p_max` branch directly, avoiding a
/// division by (near) zero in the interior formula.
pub const PRICE_ZERO_GUARD: f64 = 1e-12;

/// Below this magnitude the stationary-price denominator counts as singular
/// and the candidate is dropped.
const SINGULAR_DENOMINATOR_FLOOR: f64 = 1e-15;

/// Absolute price tolerance for the competitive price-cap bisection.
const BISECTION_TOLERANCE: f64 = 1e-9;

/// Iteration cap for the competitive price-cap bisection.
const BISECTION_MAX_ITERS: usize = 200;

/// Static parameters of the pricing game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConfig {
    /// Source transmit power `P_s` in watts.
    pub p_s: f64,
    /// Lower bound on purchasable relay power.
    pub p_min: f64,
    /// Upper bound on purchasable relay power.
    pub p_max: f64,
    /// Lower bound on the announced price.
    pub c_min: f64,
    /// Upper bound on the announced price.
    pub c_max: f64,
    /// Weight of the payment term in the source utility.
    pub alpha: f64,
    /// Scale applied to relay revenue when used as a learning reward.
    pub beta: f64,
    /// Margin by which the competitive winner undercuts its price cap.
    pub epsilon_price: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            p_s: 1.0,
            p_min: 0.0,
            p_max: 2.0,
            c_min: 0.0,
            c_max: 10.0,
            alpha: 0.1,
            beta: 0.1,
            epsilon_price: 1e-6 * 10.0,
        }
    }
}

impl GameConfig {
    /// Checks internal consistency of bounds and weights.
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.p_s,
            self.p_min,
            self.p_max,
            self.c_min,
            self.c_max,
            self.alpha,
            self.beta,
            self.epsilon_price,
        ];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("game parameters must be finite".into()));
        }
        if self.p_s <= 0.0 {
            return Err(Error::Config("p_s must be positive".into()));
        }
        if !(0.0 <= self.p_min && self.p_min < self.p_max) {
            return Err(Error::Config(format!(
                "power bounds must satisfy 0 <= p_min < p_max, got [{}, {}]",
                self.p_min, self.p_max
            )));
        }
        if !(0.0 <= self.c_min && self.c_min < self.c_max) {
            return Err(Error::Config(format!(
                "price bounds must satisfy 0 <= c_min < c_max, got [{}, {}]",
                self.c_min, self.c_max
            )));
        }
        if self.alpha <= 0.0 {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.beta <= 0.0 {
            return Err(Error::Config("beta must be positive".into()));
        }
        if !(self.epsilon_price > 0.0 && self.epsilon_price < 0.1 * (self.c_max - self.c_min)) {
            return Err(Error::Config(
                "epsilon_price must be positive and small relative to the price range".into(),
            ));
        }
        Ok(())
    }
}

/// Closed form of the source's best-response power as a function of price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponseCurve {
    /// Constant term under the square root.
    pub co1: f64,
    /// Coefficient of `1/c` under the square root.
    pub co2: f64,
    /// Constant subtracted outside the square root.
    pub co3: f64,
    /// Price below which the response saturates at `p_max`.
    pub c0: f64,
    /// Price above which the response saturates at `p_min`.
    pub c1: f64,
}

/// Price announcement: which relay sells, and at what per-watt price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderDecision {
    /// Zero-based relay index (rendered one-based in CSV output).
    pub relay: usize,
    /// Announced per-watt price, within `[c_min, c_max]`.
    pub price: f64,
}

/// The source's purchase decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerDecision {
    /// Purchased relay power, within `[p_min, p_max]`.
    pub power: f64,
}

/// Which market structure produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumMode {
    /// All relays cooperate and maximize joint revenue.
    Alliance,
    /// Relays compete; the winner's price is capped by the runner-up offer.
    Competitive,
}

/// A solved slot of the pricing game.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumSolution {
    /// Selected relay and its price.
    pub leader: LeaderDecision,
    /// Power the source buys in response.
    pub follower: FollowerDecision,
    /// Relay revenue `price * power`.
    pub u_relay: f64,
    /// Source utility `capacity - alpha * price * power`.
    pub u_source: f64,
    /// End-to-end capacity at the solution, bits/s/Hz.
    pub capacity: f64,
    /// Market structure that produced this solution.
    pub mode: EquilibriumMode,
    /// True when a competitive solve found no price at which the source would
    /// defect to the runner-up, so the price cap never bound. Always false
    /// for alliance solutions.
    pub cap_unbounded: bool,
}

/// Source utility: capacity earned minus weighted payment.
pub fn source_utility(p_k: f64, c_k: f64, lq: &LinkQuantities, alpha: f64) -> f64 {
    debug_assert!(p_k >= 0.0 && c_k >= 0.0);
    channel_capacity(p_k, lq) - alpha * c_k * p_k
}

/// Relay revenue: price times sold power.
pub fn relay_utility(p_k: f64, c_k: f64) -> f64 {
    debug_assert!(p_k >= 0.0 && c_k >= 0.0);
    c_k * p_k
}

/// Computes the closed-form best-response curve of the source for one link.
///
/// The interior stationary point of `u_source` in `p` solves
/// `(p + g)((gamma+1)p + g) = gamma*g / (2 ln2 alpha c)`, whose positive root
/// rearranges to `sqrt(co1 + co2/c) - co3` with the coefficients below. The
/// thresholds invert that expression at the power bounds.
pub fn best_response_curve(lq: &LinkQuantities, cfg: &GameConfig) -> BestResponseCurve {
    let g = lq.gamma_sk;
    let gk = lq.g_k;
    assert!(g >= 0.0, "first-hop SNR must be non-negative");
    assert!(gk > 0.0, "second-hop attenuation must be positive");
    let co1 = (g * gk / (2.0 * (g + 1.0))).powi(2);
    let co2 = g * gk / (2.0 * LN2 * (g + 1.0) * cfg.alpha);
    let co3 = (g + 2.0) * gk / (2.0 * (g + 1.0));
    // co3^2 - co1 = gk^2 (g+1) / (4 (g+1)^2) * ... reduces to gk^2/(g+1) > 0,
    // so the c1 denominator cannot vanish for p_min >= 0.
    let denom0 = (cfg.p_max + co3).powi(2) - co1;
    let denom1 = (cfg.p_min + co3).powi(2) - co1;
    assert!(
        denom1 > 0.0,
        "threshold denominator must be positive (co3^2 > co1 by construction)"
    );
    BestResponseCurve {
        co1,
        co2,
        co3,
        c0: co2 / denom0,
        c1: co2 / denom1,
    }
}

impl BestResponseCurve {
    /// Evaluates the best-response power at price `c` using precomputed
    /// coefficients. Identical to [`best_response_power`] but avoids
    /// recomputing the curve inside tight loops.
    pub fn power_at(&self, c: f64, cfg: &GameConfig) -> f64 {
        debug_assert!(c >= 0.0, "price must be non-negative");
        if c <= PRICE_ZERO_GUARD || c < self.c0 {
            return cfg.p_max;
        }
        if c > self.c1 {
            return cfg.p_min;
        }
        let p = (self.co1 + self.co2 / c).sqrt() - self.co3;
        // The interior formula lands inside the bounds by construction; the
        // clamp only absorbs floating-point drift at the thresholds.
        p.clamp(cfg.p_min, cfg.p_max)
    }
}

/// The source's best response to an announced price: buy `p_max` below `c0`,
/// nothing above `c1` (when `p_min = 0`), and the interior stationary amount
/// in between.
pub fn best_response_power(c_k: f64, lq: &LinkQuantities, cfg: &GameConfig) -> FollowerDecision {
    let curve = best_response_curve(lq, cfg);
    FollowerDecision {
        power: curve.power_at(c_k, cfg),
    }
}

/// Stationary point of the relay revenue `c * p*(c)` on the interior branch.
///
/// Returns [`Error::SingularPrice`] when the closed-form denominator is too
/// small to trust, in which case callers drop this candidate.
pub fn interior_optimal_price(lq: &LinkQuantities, cfg: &GameConfig) -> Result<f64> {
    let g = lq.gamma_sk;
    let gk = lq.g_k;
    assert!(g >= 0.0, "first-hop SNR must be non-negative");
    assert!(gk > 0.0, "second-hop attenuation must be positive");
    let alpha = cfg.alpha;
    let a = LN2 * alpha * alpha * g * g * gk * gk;
    let b = 2.0 * alpha * (g * g + g) * gk;
    let d = alpha * (LN2 * g + 2.0 * LN2) * gk;
    let discriminant = d * d - LN2 * a;
    // d^2 - ln2*a = alpha^2 ln2^2 gk^2 * 4(g+1) >= 0 always.
    assert!(discriminant >= 0.0, "price discriminant must be non-negative");
    let denominator = 2.0 * a * d * d - 2.0 * LN2 * a * a;
    if denominator.abs() < SINGULAR_DENOMINATOR_FLOOR {
        return Err(Error::SingularPrice { denominator });
    }
    let numerator = b * d * discriminant.sqrt() - b * d * d + LN2 * a * b;
    Ok((numerator / denominator).abs())
}

/// Candidate prices for one relay's revenue maximization: the price bounds,
/// the interior stationary price (if numerically sound), and the saturation
/// threshold `c0`, restricted to `[lo, hi]`, sorted and deduplicated.
fn price_candidates(curve: &BestResponseCurve, stationary: Option<f64>, lo: f64, hi: f64) -> Vec<f64> {
    let mut cands = vec![lo, hi];
    if let Some(cs) = stationary {
        cands.push(cs);
    }
    cands.push(curve.c0);
    cands.retain(|c| c.is_finite() && (lo..=hi).contains(c));
    cands.sort_by(|a, b| a.partial_cmp(b).expect("candidate prices are finite"));
    cands.dedup();
    cands
}

/// Links that can actually forward traffic in this state.
fn usable_links(
    state: &ChannelState,
    cfg: &GameConfig,
    params: &ChannelParams,
) -> Vec<(usize, LinkQuantities)> {
    (0..params.num_relays)
        .filter_map(|k| link_quantities(state, k, cfg.p_s, params).ok().map(|lq| (k, lq)))
        .collect()
}

fn build_solution(
    relay: usize,
    price: f64,
    power: f64,
    lq: &LinkQuantities,
    cfg: &GameConfig,
    mode: EquilibriumMode,
    cap_unbounded: bool,
) -> EquilibriumSolution {
    EquilibriumSolution {
        leader: LeaderDecision { relay, price },
        follower: FollowerDecision { power },
        u_relay: relay_utility(power, price),
        u_source: source_utility(power, price, lq, cfg.alpha),
        capacity: channel_capacity(power, lq),
        mode,
        cap_unbounded,
    }
}

/// Solves the game when all relays form one revenue-sharing alliance.
///
/// For every usable relay the revenue `c * p*(c)` is evaluated at each
/// candidate price; the best (relay, price) pair wins. Ties break toward the
/// smallest relay index, then the smallest price, because candidates are
/// scanned in ascending order and only strict improvements replace the
/// incumbent.
pub fn alliance_equilibrium(
    state: &ChannelState,
    cfg: &GameConfig,
    params: &ChannelParams,
) -> Result<EquilibriumSolution> {
    cfg.validate()?;
    params.validate()?;
    let mut best: Option<(f64, usize, f64, f64, LinkQuantities)> = None;
    for (k, lq) in usable_links(state, cfg, params) {
        let curve = best_response_curve(&lq, cfg);
        let stationary = interior_optimal_price(&lq, cfg).ok();
        for c in price_candidates(&curve, stationary, cfg.c_min, cfg.c_max) {
            let p = curve.power_at(c, cfg);
            let ur = relay_utility(p, c);
            if best.as_ref().is_none_or(|b| ur > b.0) {
                best = Some((ur, k, c, p, lq));
            }
        }
    }
    let (_, k, c, p, lq) = best.ok_or(Error::NoEquilibrium)?;
    Ok(build_solution(k, c, p, &lq, cfg, EquilibriumMode::Alliance, false))
}

/// Solves the game when relays compete on price.
///
/// The source would pick whichever relay offers it the most utility at that
/// relay's base price, so that relay wins the market. The winner then raises
/// its price as far as it can without losing the source to the runner-up
/// offer `u_tilde`: the cap is the price at which its offer sinks to
/// `u_tilde`, found by bisection (the offer is non-increasing in price). The
/// winner finally picks the revenue-maximizing candidate strictly below the
/// cap, staying `epsilon_price` under it when the cap itself is the best
/// choice.
///
/// `per_relay_c_min`/`per_relay_c_max` override the global price bounds per
/// relay; pass `None` to use `[cfg.c_min, cfg.c_max]` for everyone. With a
/// single relay there is no competition and the alliance solution is
/// returned.
pub fn competitive_equilibrium(
    state: &ChannelState,
    cfg: &GameConfig,
    params: &ChannelParams,
    per_relay_c_min: Option<&[f64]>,
    per_relay_c_max: Option<&[f64]>,
) -> Result<EquilibriumSolution> {
    cfg.validate()?;
    params.validate()?;
    let k_total = params.num_relays;
    let lo_of = |k: usize| per_relay_c_min.map_or(cfg.c_min, |v| v[k]);
    let hi_of = |k: usize| per_relay_c_max.map_or(cfg.c_max, |v| v[k]);
    for v in [per_relay_c_min, per_relay_c_max].into_iter().flatten() {
        if v.len() != k_total {
            return Err(Error::Config(format!(
                "per-relay price bounds need {k_total} entries, got {}",
                v.len()
            )));
        }
    }
    for k in 0..k_total {
        if !(0.0 <= lo_of(k) && lo_of(k) < hi_of(k)) {
            return Err(Error::Config(format!(
                "relay {k}: per-relay price bounds must satisfy 0 <= min < max"
            )));
        }
    }
    if k_total == 1 {
        return alliance_equilibrium(state, cfg, params);
    }

    let usable = usable_links(state, cfg, params);
    if usable.is_empty() {
        return Err(Error::NoEquilibrium);
    }

    // Source utility of each relay's base offer (its cheapest price).
    let offers: Vec<(usize, LinkQuantities, BestResponseCurve, f64)> = usable
        .into_iter()
        .map(|(k, lq)| {
            let curve = best_response_curve(&lq, cfg);
            let p = curve.power_at(lo_of(k), cfg);
            let us = source_utility(p, lo_of(k), &lq, cfg.alpha);
            (k, lq, curve, us)
        })
        .collect();

    // Winner: the relay the source prefers; ties go to the smallest index.
    let winner_pos = offers
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.3.partial_cmp(&b.3)
                .expect("offer utilities are finite")
                .then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .expect("at least one usable relay");
    let (k, lq, curve, _) = offers[winner_pos];
    let runner_up: Option<f64> = offers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != winner_pos)
        .map(|(_, o)| o.3)
        .max_by(|a, b| a.partial_cmp(b).expect("offer utilities are finite"));

    let (lo, hi) = (lo_of(k), hi_of(k));
    let offer_at = |c: f64| source_utility(curve.power_at(c, cfg), c, &lq, cfg.alpha);

    // Price cap: the point where the winner's offer drops to the runner-up
    // level. No runner-up, or an offer that never drops that low, means the
    // cap never binds.
    let mut cap_unbounded = false;
    let price_cap: Option<f64> = match runner_up {
        Some(u_tilde) if offer_at(hi) <= u_tilde => {
            let (mut lo_c, mut hi_c) = (lo, hi);
            let mut iters = 0;
            while hi_c - lo_c > BISECTION_TOLERANCE && iters < BISECTION_MAX_ITERS {
                let mid = 0.5 * (lo_c + hi_c);
                if offer_at(mid) >= u_tilde {
                    lo_c = mid;
                } else {
                    hi_c = mid;
                }
                iters += 1;
            }
            Some(0.5 * (lo_c + hi_c))
        }
        Some(_) => {
            cap_unbounded = true;
            None
        }
        None => {
            cap_unbounded = true;
            None
        }
    };

    let stationary = interior_optimal_price(&lq, cfg).ok();
    let mut cands = price_candidates(&curve, stationary, lo, hi);
    if let Some(cap) = price_cap {
        cands.push(cap - cfg.epsilon_price);
        cands.retain(|&c| (lo..=hi).contains(&c) && c < cap);
        cands.sort_by(|a, b| a.partial_cmp(b).expect("candidate prices are finite"));
        cands.dedup();
    }
    // All candidates can sit at or above the cap only when the cap collapses
    // onto the winner's own price floor; sell at the floor in that case.
    if cands.is_empty() {
        cands.push(lo);
    }

    let mut best: Option<(f64, f64, f64)> = None;
    for c in cands {
        let p = curve.power_at(c, cfg);
        let ur = relay_utility(p, c);
        if best.is_none_or(|b| ur > b.0) {
            best = Some((ur, c, p));
        }
    }
    let (_, c, p) = best.expect("candidate list is never empty");
    Ok(build_solution(k, c, p, &lq, cfg, EquilibriumMode::Competitive, cap_unbounded))
}

/// Inclusive grid over `[lo, hi]` with the given step; the endpoint is always
/// included even when the range is not an exact multiple of the step.
fn grid_points(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && hi > lo);
    let n = ((hi - lo) / step).floor() as usize;
    let mut points: Vec<f64> = (0..=n).map(|i| lo + i as f64 * step).collect();
    if let Some(&last) = points.last() {
        if last < hi - 1e-12 * step.max(1.0) {
            points.push(hi);
        }
    }
    points
}

/// Index maximizing a concave sequence `f(0..n)`: binary search on the sign
/// of the discrete derivative, then a short guard scan that absorbs
/// floating-point plateaus.
fn grid_argmax_concave(f: impl Fn(usize) -> f64, n: usize) -> usize {
    assert!(n > 0);
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if f(mid + 1) > f(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let mut best = lo;
    for j in lo.saturating_sub(2)..=(lo + 2).min(n - 1) {
        if f(j) > f(best) {
            best = j;
        }
    }
    best
}

/// Analytic bound on the revenue difference between [`alliance_equilibrium`]
/// and [`grid_oracle`] at the given grid resolutions: the revenue is
/// `p_max`-Lipschitz in price, and the follower's grid argmax sits within one
/// power step of its exact response.
pub fn grid_gap_bound(cfg: &GameConfig, c_step: f64, p_step: f64) -> f64 {
    cfg.p_max * c_step + cfg.c_max * p_step
}

/// Brute-force reference solver for the alliance game.
///
/// Scans every usable relay and every grid price; for each price the source's
/// response is the exact argmax of its utility over the power grid (found by
/// bisecting the discrete derivative of the concave utility, with a guard
/// scan). Intended for tests: its revenue differs from the closed form by at
/// most [`grid_gap_bound`].
pub fn grid_oracle(
    state: &ChannelState,
    cfg: &GameConfig,
    params: &ChannelParams,
    c_step: f64,
    p_step: f64,
) -> Result<EquilibriumSolution> {
    cfg.validate()?;
    params.validate()?;
    assert!(c_step > 0.0 && p_step > 0.0, "grid steps must be positive");
    let prices = grid_points(cfg.c_min, cfg.c_max, c_step);
    let powers = grid_points(cfg.p_min, cfg.p_max, p_step);
    let mut best: Option<(f64, usize, f64, f64, LinkQuantities)> = None;
    for (k, lq) in usable_links(state, cfg, params) {
        for &c in &prices {
            let idx = grid_argmax_concave(|i| source_utility(powers[i], c, &lq, cfg.alpha), powers.len());
            let p = powers[idx];
            let ur = relay_utility(p, c);
            if best.as_ref().is_none_or(|b| ur > b.0) {
                best = Some((ur, k, c, p, lq));
            }
        }
    }
    let (_, k, c, p, lq) = best.ok_or(Error::NoEquilibrium)?;
    Ok(build_solution(k, c, p, &lq, cfg, EquilibriumMode::Alliance, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{init_channels_rng, step_channels};
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Link with gamma_sk = 10, g_k = 1.1 used throughout: all frozen numbers
    /// below were computed for it with 50-digit arithmetic.
    fn canonical_link() -> LinkQuantities {
        LinkQuantities { gamma_sk: 10.0, g_k: 1.1 }
    }

    fn reference_game() -> GameConfig {
        GameConfig::default()
    }

    fn reference_params(num_relays: usize) -> ChannelParams {
        ChannelParams::uniform(num_relays, 0.8, 1.0, 1.0, 0.1, 0.1)
    }

    /// Same hand-picked two-relay state as the channel tests:
    /// gamma = (9, 12.5), g = (0.625, 2.2131147540983607).
    fn handpicked_state() -> ChannelState {
        ChannelState {
            h_sk: vec![Complex64::new(0.9, 0.3), Complex64::new(-0.2, 1.1)],
            h_kd: vec![Complex64::new(1.2, -0.4), Complex64::new(0.5, 0.6)],
            slot: 0,
        }
    }

    fn random_link(rng: &mut ChaCha8Rng) -> LinkQuantities {
        LinkQuantities {
            gamma_sk: rng.random_range(0.05..40.0),
            g_k: rng.random_range(0.05..8.0),
        }
    }

    #[test]
    fn config_validation_catches_bad_bounds() {
        let mut cfg = reference_game();
        cfg.p_min = 2.5;
        assert!(cfg.validate().is_err());
        let mut cfg = reference_game();
        cfg.alpha = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = reference_game();
        cfg.c_max = cfg.c_min;
        assert!(cfg.validate().is_err());
        let mut cfg = reference_game();
        cfg.epsilon_price = 5.0;
        assert!(cfg.validate().is_err());
        assert!(reference_game().validate().is_ok());
    }

    #[test]
    fn source_utility_matches_frozen_values() {
        let lq = canonical_link();
        assert_eq!(source_utility(0.0, 3.0, &lq, 0.1), 0.0);
        // 0.5*log2(1 + 10/2.1) - 0.1 computed at 50 digits.
        assert_relative_eq!(
            source_utility(1.0, 1.0, &lq, 0.1),
            1.1632729072479171,
            max_relative = 1e-14
        );
        // Zero price leaves pure capacity.
        assert_relative_eq!(
            source_utility(1.0, 0.0, &lq, 0.1),
            channel_capacity(1.0, &lq),
            max_relative = 1e-15
        );
    }

    #[test]
    fn relay_utility_is_a_symmetric_product() {
        assert_eq!(relay_utility(0.0, 7.0), 0.0);
        assert_eq!(relay_utility(2.0, 10.0), 20.0);
        assert_eq!(relay_utility(1.3, 0.7), relay_utility(0.7, 1.3));
    }

    #[test]
    fn best_response_curve_matches_frozen_values() {
        let curve = best_response_curve(&canonical_link(), &reference_game());
        assert_relative_eq!(curve.co1, 0.25, max_relative = 1e-14);
        assert_relative_eq!(curve.co2, 7.213475204444817, max_relative = 1e-14);
        assert_relative_eq!(curve.co3, 0.6, max_relative = 1e-14);
        assert_relative_eq!(curve.c0, 1.1080607072879903, max_relative = 1e-13);
        assert_relative_eq!(curve.c1, 65.5770473131347, max_relative = 1e-13);
    }

    #[test]
    fn curve_thresholds_invert_the_power_bounds() {
        let cfg = reference_game();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let lq = random_link(&mut rng);
            let curve = best_response_curve(&lq, &cfg);
            assert!(curve.co2 > 0.0 && curve.co3 > 0.0);
            assert!(curve.c0 < curve.c1);
            let at_c0 = (curve.co1 + curve.co2 / curve.c0).sqrt() - curve.co3;
            let at_c1 = (curve.co1 + curve.co2 / curve.c1).sqrt() - curve.co3;
            assert!((at_c0 - cfg.p_max).abs() < 1e-9);
            assert!((at_c1 - cfg.p_min).abs() < 1e-9);
        }
    }

    #[test]
    fn best_response_power_branches_and_interior_value() {
        let cfg = reference_game();
        let lq = canonical_link();
        let curve = best_response_curve(&lq, &cfg);
        assert_eq!(best_response_power(curve.c0 / 2.0, &lq, &cfg).power, cfg.p_max);
        assert_eq!(best_response_power(2.0 * curve.c1, &lq, &cfg).power, cfg.p_min);
        assert_eq!(best_response_power(0.0, &lq, &cfg).power, cfg.p_max);
        assert_eq!(best_response_power(1e-13, &lq, &cfg).power, cfg.p_max);
        // Midpoint of the interior window, frozen at 50 digits.
        let cmid = 0.5 * (curve.c0 + curve.c1);
        assert_relative_eq!(cmid, 33.342554010211345, max_relative = 1e-13);
        assert_relative_eq!(
            best_response_power(cmid, &lq, &cfg).power,
            0.08289414324339679,
            max_relative = 1e-12
        );
    }

    #[test]
    fn best_response_power_is_monotone_and_bounded() {
        let cfg = reference_game();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let lq = random_link(&mut rng);
            let mut prev = f64::INFINITY;
            for i in 0..=2000 {
                let c = i as f64 * 0.04;
                let p = best_response_power(c, &lq, &cfg).power;
                assert!(p >= cfg.p_min && p <= cfg.p_max);
                assert!(p <= prev + 1e-12, "response must be non-increasing in price");
                prev = p;
            }
        }
    }

    /// The interior response maximizes the source utility: cross-check the
    /// closed form against a fine grid scan of u_source over power.
    #[test]
    fn best_response_matches_fine_grid_argmax_of_source_utility() {
        let cfg = reference_game();
        let lq = canonical_link();
        let curve = best_response_curve(&lq, &cfg);
        let cmid = 0.5 * (curve.c0 + curve.c1);
        let step = 1e-6;
        let n = (cfg.p_max / step) as usize;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=n {
            let p = i as f64 * step;
            let us = source_utility(p, cmid, &lq, cfg.alpha);
            if us > best.0 {
                best = (us, p);
            }
        }
        let closed = best_response_power(cmid, &lq, &cfg).power;
        assert!(
            (closed - best.1).abs() <= step + 1e-9,
            "closed form {closed} vs grid argmax {}",
            best.1
        );
    }

    #[test]
    fn interior_optimal_price_matches_frozen_values() {
        let cfg = reference_game();
        let cs = interior_optimal_price(&canonical_link(), &cfg).unwrap();
        assert_relative_eq!(cs, 11.672384886756547, max_relative = 1e-12);
        let mut strong = cfg;
        strong.alpha = 1.0;
        let cs_strong = interior_optimal_price(&canonical_link(), &strong).unwrap();
        assert_relative_eq!(cs_strong, 1.1672384886756547, max_relative = 1e-12);
    }

    /// The stationary price really is the revenue argmax on the interior
    /// branch: compare against a 1e-6-step scan of c * p*(c) over [c0, c1].
    #[test]
    fn interior_optimal_price_matches_grid_argmax_of_revenue() {
        let cfg = reference_game();
        let lq = canonical_link();
        let curve = best_response_curve(&lq, &cfg);
        let cs = interior_optimal_price(&lq, &cfg).unwrap();
        let step = 1e-6;
        let n = ((curve.c1 - curve.c0) / step) as usize;
        let revenue = |i: usize| {
            let c = curve.c0 + i as f64 * step;
            c * curve.power_at(c, &cfg)
        };
        let idx = grid_argmax_concave(revenue, n + 1);
        let c_grid = curve.c0 + idx as f64 * step;
        assert!(
            (cs - c_grid).abs() / cs < 1e-6,
            "closed form {cs} vs grid argmax {c_grid}"
        );
        // First-order condition by central difference.
        let h = 1e-5;
        let g = |c: f64| c * curve.power_at(c, &cfg);
        let deriv = (g(cs + h) - g(cs - h)) / (2.0 * h);
        assert!(deriv.abs() < 1e-6, "revenue derivative at stationary point: {deriv}");
    }

    #[test]
    fn singular_price_is_reported_for_vanishing_snr() {
        let cfg = reference_game();
        let lq = LinkQuantities { gamma_sk: 0.0, g_k: 1.0 };
        assert!(matches!(
            interior_optimal_price(&lq, &cfg),
            Err(Error::SingularPrice { .. })
        ));
    }

    #[test]
    fn alliance_equilibrium_matches_frozen_two_relay_example() {
        let state = handpicked_state();
        let cfg = reference_game();
        let params = reference_params(2);
        let sol = alliance_equilibrium(&state, &cfg, &params).unwrap();
        assert_eq!(sol.mode, EquilibriumMode::Alliance);
        assert!(!sol.cap_unbounded);
        assert_eq!(sol.leader.relay, 1);
        assert_relative_eq!(sol.leader.price, 6.8516708681857265, max_relative = 1e-12);
        assert_relative_eq!(sol.follower.power, 0.6023335433073389, max_relative = 1e-12);
        assert_relative_eq!(sol.u_relay, 4.1269911916099795, max_relative = 1e-12);
        assert_relative_eq!(sol.u_source, 0.5260227563798692, max_relative = 1e-12);
        assert_relative_eq!(sol.capacity, 0.9387218755408671, max_relative = 1e-12);
    }

    #[test]
    fn alliance_revenue_identities_hold_exactly() {
        let state = handpicked_state();
        let cfg = reference_game();
        let params = reference_params(2);
        let sol = alliance_equilibrium(&state, &cfg, &params).unwrap();
        assert_eq!(sol.u_relay, sol.leader.price * sol.follower.power);
        assert_eq!(
            sol.u_source,
            sol.capacity - cfg.alpha * sol.leader.price * sol.follower.power
        );
    }

    #[test]
    fn alliance_beats_every_other_candidate_price() {
        let cfg = reference_game();
        let params = reference_params(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = init_channels_rng(&params, &mut rng).unwrap();
        for _ in 0..50 {
            state = step_channels(&state, &params, &mut rng);
            let Ok(sol) = alliance_equilibrium(&state, &cfg, &params) else {
                continue;
            };
            for k in 0..params.num_relays {
                let Ok(lq) = link_quantities(&state, k, cfg.p_s, &params) else {
                    continue;
                };
                let curve = best_response_curve(&lq, &cfg);
                let stationary = interior_optimal_price(&lq, &cfg).ok();
                for c in price_candidates(&curve, stationary, cfg.c_min, cfg.c_max) {
                    let ur = relay_utility(curve.power_at(c, &cfg), c);
                    assert!(
                        sol.u_relay >= ur - 1e-12,
                        "candidate (k={k}, c={c}) beats the returned equilibrium"
                    );
                }
            }
        }
    }

    #[test]
    fn revenue_maximum_avoids_the_shutdown_threshold() {
        // The revenue maximum can never sit at c1 (where the source stops
        // buying) unless c1 already coincides with or exceeds the price cap.
        let cfg = reference_game();
        let params = reference_params(4);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut state = init_channels_rng(&params, &mut rng).unwrap();
        for _ in 0..100 {
            state = step_channels(&state, &params, &mut rng);
            let Ok(sol) = alliance_equilibrium(&state, &cfg, &params) else {
                continue;
            };
            let lq = link_quantities(&state, sol.leader.relay, cfg.p_s, &params).unwrap();
            let curve = best_response_curve(&lq, &cfg);
            if (sol.leader.price - curve.c1).abs() < 1e-9 {
                assert!(curve.c1 >= cfg.c_max - 1e-9);
            }
        }
    }

    #[test]
    fn all_degenerate_relays_yield_no_equilibrium() {
        let state = ChannelState {
            h_sk: vec![Complex64::new(1.0, 0.0); 2],
            h_kd: vec![Complex64::new(0.0, 0.0); 2],
            slot: 0,
        };
        let cfg = reference_game();
        let params = reference_params(2);
        assert!(matches!(
            alliance_equilibrium(&state, &cfg, &params),
            Err(Error::NoEquilibrium)
        ));
        assert!(matches!(
            competitive_equilibrium(&state, &cfg, &params, None, None),
            Err(Error::NoEquilibrium)
        ));
    }

    #[test]
    fn competitive_equilibrium_matches_frozen_two_relay_example() {
        let state = handpicked_state();
        let cfg = reference_game();
        let params = reference_params(2);
        let sol = competitive_equilibrium(&state, &cfg, &params, None, None).unwrap();
        assert_eq!(sol.mode, EquilibriumMode::Competitive);
        assert!(!sol.cap_unbounded);
        assert_eq!(sol.leader.relay, 0);
        // Bisection tolerance is 1e-9 on the cap, so compare at 1e-8.
        assert!((sol.leader.price - 0.45085929784752905).abs() < 1e-8);
        assert_eq!(sol.follower.power, 2.0);
        assert!((sol.u_relay - 0.9017185956950581).abs() < 2e-8);
        assert!((sol.u_source - 1.3968305361640219).abs() < 1e-8);
        assert_relative_eq!(sol.capacity, 1.4870023957335277, max_relative = 1e-12);
    }

    /// Proposition-style check: at the competitive solution the source still
    /// prefers the winner to the best alternative offer.
    #[test]
    fn competitive_source_prefers_the_winner() {
        let cfg = reference_game();
        let params = reference_params(4);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut state = init_channels_rng(&params, &mut rng).unwrap();
        for _ in 0..100 {
            state = step_channels(&state, &params, &mut rng);
            let Ok(sol) = competitive_equilibrium(&state, &cfg, &params, None, None) else {
                continue;
            };
            let mut best_other = f64::NEG_INFINITY;
            for k in 0..params.num_relays {
                if k == sol.leader.relay {
                    continue;
                }
                let Ok(lq) = link_quantities(&state, k, cfg.p_s, &params) else {
                    continue;
                };
                let p = best_response_power(cfg.c_min, &lq, &cfg).power;
                best_other = best_other.max(source_utility(p, cfg.c_min, &lq, cfg.alpha));
            }
            if best_other.is_finite() && !sol.cap_unbounded {
                assert!(
                    sol.u_source > best_other,
                    "winner offer {} does not beat runner-up {best_other}",
                    sol.u_source
                );
            }
        }
    }

    /// Alliance revenue dominates competitive revenue on every draw: the
    /// alliance maximizes over the whole price interval while competition
    /// restricts it.
    #[test]
    fn alliance_revenue_dominates_competitive_revenue() {
        let cfg = reference_game();
        for k in [2usize, 4, 8] {
            let params = reference_params(k);
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
            let mut state = init_channels_rng(&params, &mut rng).unwrap();
            for _ in 0..100 {
                state = step_channels(&state, &params, &mut rng);
                let (Ok(alliance), Ok(competitive)) = (
                    alliance_equilibrium(&state, &cfg, &params),
                    competitive_equilibrium(&state, &cfg, &params, None, None),
                ) else {
                    continue;
                };
                assert!(
                    alliance.u_relay >= competitive.u_relay - 1e-9,
                    "alliance {} < competitive {}",
                    alliance.u_relay,
                    competitive.u_relay
                );
            }
        }
    }

    #[test]
    fn competitive_single_relay_falls_back_to_alliance() {
        let params = reference_params(1);
        let cfg = reference_game();
        let state = ChannelState {
            h_sk: vec![Complex64::new(0.9, 0.3)],
            h_kd: vec![Complex64::new(1.2, -0.4)],
            slot: 0,
        };
        let sol = competitive_equilibrium(&state, &cfg, &params, None, None).unwrap();
        let alliance = alliance_equilibrium(&state, &cfg, &params).unwrap();
        assert_eq!(sol, alliance);
        assert_eq!(sol.mode, EquilibriumMode::Alliance);
    }

    #[test]
    fn competitive_honors_per_relay_price_bounds() {
        let state = handpicked_state();
        let cfg = reference_game();
        let params = reference_params(2);
        // Raising relay 0's floor to 0.6 makes its base offer worse than
        // relay 1's free offer, flipping the winner. Frozen at 50 digits:
        // relay 1 then prices at its cap 0.14913070215247095 minus epsilon.
        let sol = competitive_equilibrium(&state, &cfg, &params, Some(&[0.6, 0.0]), None).unwrap();
        assert_eq!(sol.leader.relay, 1);
        assert!((sol.leader.price - 0.14912070215247095).abs() < 1e-8);
        assert_eq!(sol.follower.power, 2.0);

        // Squeezing the winner's ceiling below its cap leaves the cap
        // non-binding; the winner then sells at its ceiling.
        let sol = competitive_equilibrium(&state, &cfg, &params, None, Some(&[0.3, 10.0])).unwrap();
        assert_eq!(sol.leader.relay, 0);
        assert!(sol.cap_unbounded);
        assert_relative_eq!(sol.leader.price, 0.3, max_relative = 1e-12);
        assert_relative_eq!(sol.u_relay, 0.6, max_relative = 1e-12);

        // Malformed bounds are rejected.
        assert!(competitive_equilibrium(&state, &cfg, &params, Some(&[0.6]), None).is_err());
        assert!(
            competitive_equilibrium(&state, &cfg, &params, Some(&[0.6, 11.0]), Some(&[10.0, 10.0]))
                .is_err()
        );
    }

    #[test]
    fn competitive_cap_unbinds_against_a_hopeless_rival() {
        // Relay 1 barely receives anything, so no price in bounds drives the
        // source toward it; the winner then prices as an alliance would.
        let state = ChannelState {
            h_sk: vec![Complex64::new(0.9, 0.3), Complex64::new(1e-3, 0.0)],
            h_kd: vec![Complex64::new(1.2, -0.4), Complex64::new(1.0, 0.0)],
            slot: 0,
        };
        let cfg = reference_game();
        let params = reference_params(2);
        let sol = competitive_equilibrium(&state, &cfg, &params, None, None).unwrap();
        assert!(sol.cap_unbounded);
        assert_eq!(sol.leader.relay, 0);
        // Unbounded cap means the winner's candidates match the alliance set
        // restricted to this relay.
        let lq = link_quantities(&state, 0, cfg.p_s, &params).unwrap();
        let curve = best_response_curve(&lq, &cfg);
        let stationary = interior_optimal_price(&lq, &cfg).ok();
        let best_ur = price_candidates(&curve, stationary, cfg.c_min, cfg.c_max)
            .into_iter()
            .map(|c| relay_utility(curve.power_at(c, &cfg), c))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_relative_eq!(sol.u_relay, best_ur, max_relative = 1e-12);
    }

    #[test]
    fn grid_argmax_agrees_with_linear_scan_on_utility_slices() {
        let cfg = reference_game();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let lq = random_link(&mut rng);
            let c = rng.random_range(0.0..10.0);
            let powers = grid_points(cfg.p_min, cfg.p_max, 0.004);
            let f = |i: usize| source_utility(powers[i], c, &lq, cfg.alpha);
            let fast = grid_argmax_concave(f, powers.len());
            let mut slow = 0;
            for i in 1..powers.len() {
                if f(i) > f(slow) {
                    slow = i;
                }
            }
            assert!(
                (f(fast) - f(slow)).abs() < 1e-12,
                "binary-search argmax {fast} misses linear-scan argmax {slow}"
            );
        }
    }

    #[test]
    fn grid_oracle_stays_within_the_analytic_bound() {
        let cfg = reference_game();
        let params = reference_params(4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut state = init_channels_rng(&params, &mut rng).unwrap();
        for _ in 0..20 {
            state = step_channels(&state, &params, &mut rng);
            let Ok(closed) = alliance_equilibrium(&state, &cfg, &params) else {
                continue;
            };
            for (c_step, p_step) in [(0.05, 0.05), (0.01, 0.01)] {
                let grid = grid_oracle(&state, &cfg, &params, c_step, p_step).unwrap();
                let bound = grid_gap_bound(&cfg, c_step, p_step);
                assert!(
                    (closed.u_relay - grid.u_relay).abs() <= bound,
                    "gap {} exceeds bound {bound} at steps ({c_step}, {p_step})",
                    (closed.u_relay - grid.u_relay).abs()
                );
            }
        }
    }

    #[test]
    fn grid_oracle_converges_toward_the_closed_form() {
        let state = handpicked_state();
        let cfg = reference_game();
        let params = reference_params(2);
        let closed = alliance_equilibrium(&state, &cfg, &params).unwrap();
        let mut last_gap = f64::INFINITY;
        for (c_step, p_step) in [(0.2, 0.2), (0.02, 0.02), (0.002, 0.002)] {
            let grid = grid_oracle(&state, &cfg, &params, c_step, p_step).unwrap();
            let gap = (closed.u_relay - grid.u_relay).abs();
            assert!(gap <= grid_gap_bound(&cfg, c_step, p_step));
            assert!(gap <= last_gap + 1e-9, "gap should shrink with the step");
            last_gap = gap;
        }
        assert!(last_gap < 0.01);
    }
}
