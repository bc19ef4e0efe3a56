//! Integrate-and-fire and group-neuron dynamics.
//!
//! Both neuron types use soft reset and fire when the pre-spike potential
//! reaches the threshold (`Heaviside(0) = 1`). Potentials are never clamped,
//! so negative membrane potentials persist across steps.
//!
//! A group neuron (GN) is `tau` IF members with thresholds `i * theta / tau`
//! that share one membrane potential. Every member that fires subtracts
//! `theta / tau` from the shared potential, and the step output is the number
//! of members that fired.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold of a single IF neuron.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IfConfig {
    pub theta: f64,
}

impl IfConfig {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "IF threshold must be positive and finite, got {theta}"
            )));
        }
        Ok(Self { theta })
    }
}

/// Membrane potential of an IF neuron.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct IfState {
    pub v: f64,
}

/// Group-neuron configuration derived from the threshold of the IF neuron it
/// replaces.
#[derive(Clone, Debug, PartialEq)]
pub struct GnConfig {
    theta: f64,
    tau: u32,
    theta_gn: f64,
    member_thresholds: Vec<f64>,
}

impl GnConfig {
    pub fn new(theta: f64, tau: u32) -> Result<Self> {
        IfConfig::new(theta)?;
        if tau < 1 {
            return Err(Error::InvalidConfig(format!(
                "group size tau must be at least 1, got {tau}"
            )));
        }
        let n = f64::from(tau);
        let member_thresholds = (1..=tau)
            .map(|i| {
                // The top member sits exactly at theta so that any p >= theta
                // fires every member.
                if i == tau {
                    theta
                } else {
                    f64::from(i) * theta / n
                }
            })
            .collect();
        Ok(Self {
            theta,
            tau,
            theta_gn: theta / n,
            member_thresholds,
        })
    }

    /// Threshold of the replaced IF neuron.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    /// Group threshold `theta / tau`; also the postsynaptic weight of one spike.
    pub fn theta_gn(&self) -> f64 {
        self.theta_gn
    }

    /// Member thresholds `theta * i / tau` for `i = 1..=tau`, ascending.
    pub fn member_thresholds(&self) -> &[f64] {
        &self.member_thresholds
    }
}

/// Shared membrane potential of all members of a group neuron.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GnState {
    pub v: f64,
}

/// Output of one neuron for one time-step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpikeOut {
    /// Spikes emitted: 0 or 1 for IF, `0..=tau` for GN.
    pub count: u32,
    /// Postsynaptic contribution, `count` times the per-spike weight.
    pub psp: f64,
}

/// Charge, fire and soft-reset one IF neuron.
#[inline]
pub fn if_step(state: IfState, cfg: &IfConfig, input_current: f64) -> (SpikeOut, IfState) {
    let p = state.v + input_current;
    if p >= cfg.theta {
        (
            SpikeOut {
                count: 1,
                psp: cfg.theta,
            },
            IfState { v: p - cfg.theta },
        )
    } else {
        (SpikeOut { count: 0, psp: 0.0 }, IfState { v: p })
    }
}

/// Number of members whose threshold is at or below `p`, without looping over
/// every member.
#[inline]
fn gn_count(cfg: &GnConfig, p: f64) -> u32 {
    let thr = &cfg.member_thresholds;
    let tau = cfg.tau as usize;
    if !(p >= thr[0]) {
        return 0;
    }
    if p >= thr[tau - 1] {
        return cfg.tau;
    }
    let guess = (p * f64::from(cfg.tau) / cfg.theta).floor();
    let mut k = guess.clamp(0.0, f64::from(cfg.tau)) as usize;
    // floor() may land one step off a threshold after rounding; settle on the
    // exact member count.
    while k < tau && p >= thr[k] {
        k += 1;
    }
    while k > 0 && p < thr[k - 1] {
        k -= 1;
    }
    k as u32
}

/// Charge, fire and laterally inhibit one group neuron.
#[inline]
pub fn gn_step(state: GnState, cfg: &GnConfig, input_current: f64) -> (SpikeOut, GnState) {
    let p = state.v + input_current;
    let count = gn_count(cfg, p);
    let drop = cfg.theta_gn * f64::from(count);
    (
        SpikeOut { count, psp: drop },
        GnState { v: p - drop },
    )
}

/// Reference group-neuron step that evaluates every member separately and
/// aggregates their spikes.
pub fn gn_step_memberloop(
    state: GnState,
    cfg: &GnConfig,
    input_current: f64,
) -> (SpikeOut, GnState) {
    let p = state.v + input_current;
    let mut count = 0u32;
    for &threshold in &cfg.member_thresholds {
        let fired = if p - threshold >= 0.0 { 1 } else { 0 };
        count += fired;
    }
    let drop = cfg.theta_gn * f64::from(count);
    (
        SpikeOut { count, psp: drop },
        GnState { v: p - drop },
    )
}

/// Neuron model used by a spiking layer.
#[derive(Clone, Debug, PartialEq)]
pub enum NeuronModel {
    If(IfConfig),
    Gn(GnConfig),
}

impl NeuronModel {
    /// Threshold of the (replaced) IF neuron.
    pub fn theta(&self) -> f64 {
        match self {
            NeuronModel::If(c) => c.theta,
            NeuronModel::Gn(c) => c.theta,
        }
    }

    /// Postsynaptic potential carried by a single spike.
    pub fn per_spike_weight(&self) -> f64 {
        match self {
            NeuronModel::If(c) => c.theta,
            NeuronModel::Gn(c) => c.theta_gn,
        }
    }

    /// Largest spike count a single step can emit.
    pub fn max_count(&self) -> u32 {
        match self {
            NeuronModel::If(_) => 1,
            NeuronModel::Gn(c) => c.tau,
        }
    }

    /// Advance a membrane potential by one step.
    #[inline]
    pub fn step(&self, v: f64, input_current: f64) -> (SpikeOut, f64) {
        match self {
            NeuronModel::If(c) => {
                let (out, s) = if_step(IfState { v }, c, input_current);
                (out, s.v)
            }
            NeuronModel::Gn(c) => {
                let (out, s) = gn_step(GnState { v }, c, input_current);
                (out, s.v)
            }
        }
    }
}

fn spike_floor(v0: f64, x: f64, t: u64, weight: f64) -> i64 {
    ((v0 + t as f64 * x) / weight).floor() as i64
}

/// Total spike count over `steps` steps for a neuron that emits at most `cap`
/// spikes of weight `weight` per step, driven by constant current `x` from
/// potential `v0`.
///
/// With `F(t) = floor((v0 + t x) / weight)` and `theta = cap * weight`:
/// * `0 <= x <= theta`: `F` rises by at most `cap` per step, so the count
///   tracks `F(T)` clamped to `[0, cap T]`.
/// * `x > theta`: nothing fires until the first `t*` with `F(t*) >= 1`; then
///   `min(cap, F(t*))` spikes, and `cap` on every later step.
/// * `x < 0`: the count after `t` steps is `max_s min(cap s, F(s))`, which
///   peaks where `cap s` meets `F(s)`, at `s ~ v0 / (theta - x)`.
fn closed_form_spike_total(x: f64, weight: f64, cap: u32, steps: u32, v0: f64) -> u64 {
    let cap = i64::from(cap);
    let steps_i = i64::from(steps);
    let theta = cap as f64 * weight;
    let f = |t: i64| spike_floor(v0, x, t as u64, weight);

    if (0.0..=theta).contains(&x) {
        return f(steps_i).clamp(0, cap * steps_i) as u64;
    }

    if x > theta {
        let mut first = ((weight - v0) / x).ceil().max(1.0).min((steps_i + 1) as f64) as i64;
        while first <= steps_i && f(first) < 1 {
            first += 1;
        }
        while first > 1 && f(first - 1) >= 1 {
            first -= 1;
        }
        if first > steps_i {
            return 0;
        }
        return (f(first).min(cap) + cap * (steps_i - first)) as u64;
    }

    // x < 0
    let cross = v0 / (theta - x);
    if !(cross > 0.0) {
        return 0;
    }
    let centre = cross.floor().min(steps_i as f64) as i64;
    let lo = (centre - 1).max(1);
    let hi = (centre + 2).min(steps_i);
    (lo..=hi)
        .map(|s| (cap * s).min(f(s)))
        .max()
        .unwrap_or(0)
        .max(0) as u64
}

/// Average postsynaptic potential of an IF neuron under constant input `x`
/// for `t_steps` steps, starting from potential `v0`.
pub fn closed_form_if_rate(x: f64, theta: f64, t_steps: u32, v0: f64) -> f64 {
    assert!(t_steps >= 1, "t_steps must be at least 1");
    assert!(theta > 0.0, "theta must be positive");
    let n = closed_form_spike_total(x, theta, 1, t_steps, v0);
    n as f64 * theta / f64::from(t_steps)
}

/// Average postsynaptic potential of a group neuron (group size `tau`) under
/// constant input `x` for `t_steps` steps, starting from potential `v0`.
pub fn closed_form_gn_rate(x: f64, theta: f64, tau: u32, t_steps: u32, v0: f64) -> f64 {
    assert!(t_steps >= 1, "t_steps must be at least 1");
    assert!(tau >= 1, "tau must be at least 1");
    assert!(theta > 0.0, "theta must be positive");
    let weight = theta / f64::from(tau);
    let n = closed_form_spike_total(x, weight, tau, t_steps, v0);
    n as f64 * weight / f64::from(t_steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simulate(model: &NeuronModel, x: f64, steps: u32, v0: f64) -> f64 {
        let mut v = v0;
        let mut total = 0u64;
        for _ in 0..steps {
            let (out, nv) = model.step(v, x);
            total += u64::from(out.count);
            v = nv;
        }
        total as f64 * model.per_spike_weight() / f64::from(steps)
    }

    #[test]
    fn if_step_examples() {
        let cfg = IfConfig::new(1.0).unwrap();
        let (s, st) = if_step(IfState { v: 0.6 }, &cfg, 0.5);
        assert_eq!(s.count, 1);
        assert!((st.v - 0.1).abs() < 1e-15);

        let (s, st) = if_step(IfState { v: 0.0 }, &cfg, -0.5);
        assert_eq!(s.count, 0);
        assert_eq!(st.v, -0.5);

        let (s, st) = if_step(IfState { v: 0.0 }, &cfg, 1.0);
        assert_eq!((s.count, s.psp), (1, 1.0));
        assert_eq!(st.v, 0.0);
    }

    #[test]
    fn gn_step_examples() {
        let cfg = GnConfig::new(1.0, 3).unwrap();
        let (s, st) = gn_step(GnState { v: 0.0 }, &cfg, 0.7);
        assert_eq!(s.count, 2);
        assert!((st.v - (0.7 - 2.0 / 3.0)).abs() < 1e-15);
        assert!((st.v - 0.0333).abs() < 1e-4);

        let (s, st) = gn_step(GnState { v: 0.0 }, &cfg, 1.0);
        assert_eq!(s.count, 3);
        assert!(st.v.abs() < 1e-15);

        let (s, st) = gn_step(GnState { v: 0.0 }, &cfg, 0.2);
        assert_eq!(s.count, 0);
        assert_eq!(st.v, 0.2);
    }

    #[test]
    fn memberloop_example_all_members_fire() {
        let cfg = GnConfig::new(1.0, 4).unwrap();
        let (s, st) = gn_step_memberloop(GnState { v: 0.1 }, &cfg, 0.9);
        assert_eq!(s.count, 4);
        assert!(st.v.abs() < 1e-15);
        assert_eq!(s.psp, 1.0);
    }

    #[test]
    fn gn_config_thresholds() {
        let cfg = GnConfig::new(2.0, 4).unwrap();
        assert_eq!(cfg.theta_gn(), 0.5);
        assert_eq!(cfg.member_thresholds(), &[0.5, 1.0, 1.5, 2.0]);

        let one = GnConfig::new(2.0, 1).unwrap();
        assert_eq!(one.theta_gn(), 2.0);
        assert_eq!(one.member_thresholds(), &[2.0]);

        assert!(GnConfig::new(1.0, 0).is_err());
        assert!(GnConfig::new(0.0, 2).is_err());
        assert!(IfConfig::new(-1.0).is_err());
        assert!(IfConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn gn_tau_one_matches_if() {
        let ifc = IfConfig::new(0.8).unwrap();
        let gnc = GnConfig::new(0.8, 1).unwrap();
        let inputs = [0.3, 0.9, -0.4, 0.8, 1.7, 0.0, 0.5, -2.0, 0.79];
        let (mut a, mut b) = (IfState { v: 0.4 }, GnState { v: 0.4 });
        for &x in &inputs {
            let (sa, na) = if_step(a, &ifc, x);
            let (sb, nb) = gn_step_memberloop(b, &gnc, x);
            assert_eq!(sa, sb);
            assert_eq!(na.v, nb.v);
            a = na;
            b = nb;
        }
    }

    #[test]
    fn closed_form_if_examples() {
        assert_eq!(closed_form_if_rate(0.125, 1.0, 8, 0.5), 0.125);
        for t in 1..10 {
            assert_eq!(closed_form_if_rate(0.0, 1.3, t, 0.2), 0.0);
        }
        let model = NeuronModel::If(IfConfig::new(1.0).unwrap());
        // brute force: 0.8, 1.1 -> spike (0.1), 0.4, 0.7
        assert_eq!(simulate(&model, 0.3, 4, 0.5), 0.25);
        assert_eq!(closed_form_if_rate(0.3, 1.0, 4, 0.5), 0.25);
    }

    #[test]
    fn closed_form_gn_examples() {
        let theta_gn = 0.25;
        let model = NeuronModel::Gn(GnConfig::new(1.0, 4).unwrap());
        // brute force: p = 0.495 -> 1 spike, 0.615 -> 2, 0.485 -> 1, 0.605 -> 2
        let sim = simulate(&model, 0.37, 4, theta_gn / 2.0);
        assert_eq!(sim, 6.0 * 0.25 / 4.0);
        assert_eq!(closed_form_gn_rate(0.37, 1.0, 4, 4, theta_gn / 2.0), sim);

        for &x in &[-0.3, 0.0, 0.2, 0.5, 0.99, 1.0, 1.4] {
            for t in 1..6 {
                assert_eq!(
                    closed_form_gn_rate(x, 1.0, 1, t, 0.5),
                    closed_form_if_rate(x, 1.0, t, 0.5)
                );
            }
        }
    }

    #[test]
    fn closed_form_gn_staircase_step_width() {
        // with v0 = 0 the risers sit at k / 16 on [0, 1]
        let mut levels = Vec::new();
        for i in 0..=1600 {
            let x = f64::from(i) / 1600.0;
            let r = closed_form_gn_rate(x, 1.0, 4, 4, 0.0);
            if levels.last() != Some(&r) {
                levels.push(r);
            }
        }
        assert_eq!(levels.len(), 17);
        for w in levels.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 16.0).abs() < 1e-12);
        }
    }

    // Inputs avoid exact ties, where the running sum and the closed-form
    // product can round to opposite sides of a threshold.
    #[test]
    fn closed_form_matches_simulation_outside_unit_range() {
        let cases = [
            (1.0, 3, 1.7, 2.9),
            (1.0, 3, -0.4, 2.5),
            (0.5, 4, 0.2, 3.0),
            (0.5, 1, -0.1, 1.23),
            (2.0, 2, 2.5, -3.0),
            (2.0, 5, -1.0, -0.3),
            (1.0, 4, 3.0, -5.0),
        ];
        for &(theta, tau, x, v0) in &cases {
            let model = NeuronModel::Gn(GnConfig::new(theta, tau).unwrap());
            for t in 1..=12 {
                assert_eq!(
                    closed_form_gn_rate(x, theta, tau, t, v0),
                    simulate(&model, x, t, v0),
                    "theta={theta} tau={tau} x={x} v0={v0} T={t}"
                );
            }
        }
    }
}
