//! Conversion-error measurements: firing-rate staircases, last-layer MSE
//! between ANN and SNN, accuracy, and audits of the rate identity
//! `phi^l = W^l phi^(l-1) + b^l - (v^l(T) - v^l(0)) / T`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::network::{ann_forward, phi, snn_forward, ModelSpec, NeuronKind, SimConfig, Tensor, V0Policy};
use crate::neuron::{GnConfig, IfConfig, NeuronModel};

/// Number of uniform samples in a firing-rate curve grid.
pub const CURVE_GRID_POINTS: usize = 2048;

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Mse,
    PhiResidualMax,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Mse => "mse",
            Metric::PhiResidualMax => "phi_residual_max",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "T")]
    pub t_steps: u32,
    pub tau: Option<u32>,
    /// `if`, `gn` or `ann`.
    pub neuron: String,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn push(&mut self, t_steps: u32, neuron: NeuronKind, metric: Metric, value: f64) {
        debug_assert!(value.is_finite(), "{metric:?} = {value}");
        self.rows.push(ReportRow {
            t_steps,
            tau: neuron.tau(),
            neuron: neuron.label().to_string(),
            metric,
            value,
        });
    }

    pub fn values(&self, metric: Metric) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    /// `T,tau,neuron,metric,value` with one row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,tau,neuron,metric,value\n");
        for r in &self.rows {
            let tau = r.tau.map(|t| t.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.t_steps, tau, r.neuron, r.metric.name(), r.value);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }
}

fn neuron_model(kind: NeuronKind, theta: f64) -> Result<NeuronModel> {
    Ok(match kind {
        NeuronKind::If => NeuronModel::If(IfConfig::new(theta)?),
        NeuronKind::Gn { tau } => NeuronModel::Gn(GnConfig::new(theta, tau)?),
    })
}

/// Average postsynaptic potential of one neuron under each constant input in
/// `x_grid`, by step-by-step simulation.
pub fn firing_rate_curve(
    kind: NeuronKind,
    theta: f64,
    t_steps: u32,
    v0: V0Policy,
    x_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if t_steps < 1 {
        return Err(Error::InvalidConfig("T must be at least 1".into()));
    }
    if x_grid.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidConfig("curve grid must be finite".into()));
    }
    let neuron = neuron_model(kind, theta)?;
    let weight = neuron.per_spike_weight();
    let v_start = match v0 {
        V0Policy::Zero => 0.0,
        V0Policy::HalfThreshold => weight / 2.0,
    };
    Ok(x_grid
        .iter()
        .map(|&x| {
            let mut v = v_start;
            let mut total = 0u64;
            for _ in 0..t_steps {
                let (out, next) = neuron.step(v, x);
                total += u64::from(out.count);
                v = next;
            }
            (x, total as f64 * weight / f64::from(t_steps))
        })
        .collect())
}

/// Uniform grid of [`CURVE_GRID_POINTS`] points on `[lo, hi]` merged with the
/// analytic risers `x = (k w - v0) / T` (`w` the per-spike weight) that fall
/// inside the range.
pub fn curve_grid(kind: NeuronKind, theta: f64, t_steps: u32, v0: V0Policy, lo: f64, hi: f64) -> Result<Vec<f64>> {
    let neuron = neuron_model(kind, theta)?;
    if !(lo < hi) || t_steps < 1 {
        return Err(Error::InvalidConfig(format!("empty curve range [{lo}, {hi}]")));
    }
    let weight = neuron.per_spike_weight();
    let v_start = match v0 {
        V0Policy::Zero => 0.0,
        V0Policy::HalfThreshold => weight / 2.0,
    };
    let n = CURVE_GRID_POINTS;
    let mut grid: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    let t = f64::from(t_steps);
    let levels = u64::from(neuron.max_count()) * u64::from(t_steps);
    for k in 0..=levels + 1 {
        let x = (k as f64 * weight - v_start) / t;
        if x >= lo && x <= hi {
            grid.push(x);
        }
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    Ok(grid)
}

/// Positions where a sampled staircase changes level: the first grid point
/// of every new level.
pub fn step_risers(curve: &[(f64, f64)]) -> Vec<f64> {
    curve
        .windows(2)
        .filter(|w| w[1].1 != w[0].1)
        .map(|w| w[1].0)
        .collect()
}

/// Per-sample predictions are computed in parallel and reduced in sample
/// order.
fn per_sample<T: Send>(data: &Dataset, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..data.len()).into_par_iter().map(f).collect()
}

/// Mean squared error between ANN and SNN logits at each `T`, using the
/// neuron kind stored in `snn`.
pub fn conversion_mse(
    ann: &ModelSpec,
    snn: &ModelSpec,
    data: &Dataset,
    t_list: &[u32],
    v0: V0Policy,
) -> Result<EvalReport> {
    ann.same_architecture(snn)?;
    if data.is_empty() {
        return Err(Error::Dataset("dataset is empty".into()));
    }
    let mut report = EvalReport::default();
    if t_list.is_empty() {
        return Ok(report);
    }
    let reference = per_sample(data, |i| ann_forward(ann, &data.input(i)))?;
    for &t in t_list {
        let sim = SimConfig::for_model(snn, t)?.with_v0(v0);
        let errors = per_sample(data, |i| {
            let (logits, _) = snn_forward(snn, &data.input(i), &sim)?;
            Ok(logits
                .iter()
                .zip(&reference[i])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>())
        })?;
        let count = (data.len() * reference[0].len()) as f64;
        report.push(t, sim.neuron, Metric::Mse, errors.iter().sum::<f64>() / count);
    }
    Ok(report)
}

/// How a model is executed for evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EvalMode {
    Ann,
    Snn(SimConfig),
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy_eval(model: &ModelSpec, data: &Dataset, mode: &EvalMode) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Dataset("dataset is empty".into()));
    }
    let hits = per_sample(data, |i| {
        let input = data.input(i);
        let logits = match mode {
            EvalMode::Ann => ann_forward(model, &input)?,
            EvalMode::Snn(sim) => snn_forward(model, &input, sim)?.0,
        };
        Ok(usize::from(argmax(&logits) == data.labels()[i]))
    })?;
    Ok(hits.iter().sum::<usize>() as f64 / data.len() as f64)
}

/// Rate-identity audit of one spiking layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerAudit {
    pub layer: usize,
    /// `max_j |phi_j - (W phi_prev + b - dv_j / T)_j|`.
    pub residual_max: f64,
    /// Mean over neurons of `|v(T) - v(0)| / T`.
    pub mapping_error_mean: f64,
    pub mapping_error_max: f64,
}

/// Recompute every spiking layer's drive from the previous layer's rate and
/// compare it with the simulated rate.
pub fn phi_residual_audit(model: &ModelSpec, input: &Tensor, sim: &SimConfig) -> Result<Vec<LayerAudit>> {
    let (_, trace) = snn_forward(model, input, sim)?;
    let t = f64::from(sim.t_steps);
    let mut drive = input.clone();
    let mut audits = Vec::new();
    for (i, layer) in model.layers.iter().enumerate() {
        let z = layer.kind.forward(i, &drive)?;
        drive = match trace.layer(i) {
            Some(lt) => {
                let rate = phi(&trace, i, lt.per_spike_weight, sim.t_steps)?;
                let mut residual_max = 0.0f64;
                let mut map_sum = 0.0;
                let mut map_max = 0.0f64;
                for (j, (&r, &zj)) in rate.iter().zip(z.data()).enumerate() {
                    let dv = (lt.v_final[j] - lt.v_initial[j]) / t;
                    residual_max = residual_max.max((r - (zj - dv)).abs());
                    map_sum += dv.abs();
                    map_max = map_max.max(dv.abs());
                }
                audits.push(LayerAudit {
                    layer: i,
                    residual_max,
                    mapping_error_mean: map_sum / rate.len().max(1) as f64,
                    mapping_error_max: map_max,
                });
                Tensor::new(z.shape().to_vec(), rate)
            }
            None => z,
        };
    }
    Ok(audits)
}

/// Per-layer audit averaged over a dataset: the largest residual seen and the
/// mean mapping error.
pub fn phi_residual_dataset(model: &ModelSpec, data: &Dataset, sim: &SimConfig) -> Result<Vec<LayerAudit>> {
    let audits = per_sample(data, |i| phi_residual_audit(model, &data.input(i), sim))?;
    let Some(first) = audits.first() else {
        return Ok(Vec::new());
    };
    let n = audits.len() as f64;
    Ok((0..first.len())
        .map(|k| LayerAudit {
            layer: first[k].layer,
            residual_max: audits.iter().map(|a| a[k].residual_max).fold(0.0, f64::max),
            mapping_error_mean: audits.iter().map(|a| a[k].mapping_error_mean).sum::<f64>() / n,
            mapping_error_max: audits.iter().map(|a| a[k].mapping_error_max).fold(0.0, f64::max),
        })
        .collect())
}
