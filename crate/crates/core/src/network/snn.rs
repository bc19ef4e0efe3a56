use serde::{Deserialize, Serialize};

use super::{ModelSpec, Tensor};
use crate::error::{Error, Result};
use crate::neuron::{GnConfig, IfConfig, NeuronModel};

/// Neuron type used for every spiking layer of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuronKind {
    If,
    Gn { tau: u32 },
}

impl NeuronKind {
    pub fn label(&self) -> &'static str {
        match self {
            NeuronKind::If => "if",
            NeuronKind::Gn { .. } => "gn",
        }
    }

    pub fn tau(&self) -> Option<u32> {
        match self {
            NeuronKind::If => None,
            NeuronKind::Gn { tau } => Some(*tau),
        }
    }

    fn build(&self, theta: f64) -> Result<NeuronModel> {
        Ok(match self {
            NeuronKind::If => NeuronModel::If(IfConfig::new(theta)?),
            NeuronKind::Gn { tau } => NeuronModel::Gn(GnConfig::new(theta, *tau)?),
        })
    }
}

/// Initial membrane potential of every spiking neuron.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum V0Policy {
    Zero,
    /// Half of the per-spike weight: `theta / 2` for IF, `theta_gn / 2` for GN.
    #[default]
    HalfThreshold,
}

impl V0Policy {
    fn initial(&self, neuron: &NeuronModel) -> f64 {
        match self {
            V0Policy::Zero => 0.0,
            V0Policy::HalfThreshold => neuron.per_spike_weight() / 2.0,
        }
    }
}

/// Input coding: the raw input is applied as a constant current every step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    #[default]
    DirectConstant,
}

/// Output decoding: the final layer integrates its affine output without
/// spiking; logits are the time average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decoding {
    #[default]
    AccumulateOutput,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_steps: u32,
    pub neuron: NeuronKind,
    pub v0: V0Policy,
    pub encoding: Encoding,
    pub decoding: Decoding,
}

impl SimConfig {
    pub fn new(t_steps: u32, neuron: NeuronKind) -> Result<Self> {
        let cfg = Self {
            t_steps,
            neuron,
            v0: V0Policy::default(),
            encoding: Encoding::default(),
            decoding: Decoding::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Simulation using the neuron kind stored in a converted model.
    pub fn for_model(model: &ModelSpec, t_steps: u32) -> Result<Self> {
        let neuron = match model.group_size() {
            Some(tau) => NeuronKind::Gn { tau },
            None => NeuronKind::If,
        };
        Self::new(t_steps, neuron)
    }

    pub fn with_v0(mut self, v0: V0Policy) -> Self {
        self.v0 = v0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_steps < 1 {
            return Err(Error::InvalidConfig("T must be at least 1".into()));
        }
        if let NeuronKind::Gn { tau: 0 } = self.neuron {
            return Err(Error::InvalidConfig("tau must be at least 1".into()));
        }
        Ok(())
    }
}

/// Spike record of one spiking layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    /// Index of the layer in the model.
    pub layer: usize,
    pub per_spike_weight: f64,
    pub max_count: u32,
    /// `counts[t][j]`: spikes emitted by neuron `j` at step `t + 1`.
    pub counts: Vec<Vec<u32>>,
    pub v_initial: Vec<f64>,
    pub v_final: Vec<f64>,
}

impl LayerTrace {
    /// Total spikes per neuron over the run.
    pub fn totals(&self) -> Vec<u64> {
        let n = self.v_final.len();
        let mut totals = vec![0u64; n];
        for step in &self.counts {
            for (acc, &c) in totals.iter_mut().zip(step) {
                *acc += u64::from(c);
            }
        }
        totals
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub t_steps: u32,
    pub layers: Vec<LayerTrace>,
    /// Final-layer affine output at every step.
    pub outputs: Vec<Vec<f64>>,
}

impl Trace {
    pub fn layer(&self, layer: usize) -> Option<&LayerTrace> {
        self.layers.iter().find(|l| l.layer == layer)
    }
}

/// Average postsynaptic potential per neuron of a spiking layer:
/// `sum_t counts(t) * per_spike_weight / T`.
pub fn phi(trace: &Trace, layer: usize, per_spike_weight: f64, t_steps: u32) -> Result<Vec<f64>> {
    let lt = trace.layer(layer).ok_or(Error::NotSpiking { layer })?;
    let t = f64::from(t_steps);
    Ok(lt
        .totals()
        .into_iter()
        .map(|n| n as f64 * per_spike_weight / t)
        .collect())
}

/// Run a converted model for `sim.t_steps` steps.
///
/// Every activated layer spikes with the neuron kind in `sim` and the
/// threshold assigned at conversion. Spiking layers pass `count *
/// per_spike_weight` downstream; the final layer's affine output is summed
/// over time and averaged into the logits.
pub fn snn_forward(model: &ModelSpec, input: &Tensor, sim: &SimConfig) -> Result<(Vec<f64>, Trace)> {
    sim.validate()?;
    model.check_input(input)?;

    let mut neurons: Vec<Option<NeuronModel>> = Vec::with_capacity(model.layers.len());
    for (i, layer) in model.layers.iter().enumerate() {
        neurons.push(if layer.is_activated() {
            let assigned = layer.neuron.as_ref().ok_or(Error::NotConverted { layer: i })?;
            Some(sim.neuron.build(assigned.theta())?)
        } else {
            None
        });
    }

    let steps = sim.t_steps as usize;
    let mut traces: Vec<LayerTrace> = Vec::new();
    let mut potentials: Vec<Vec<f64>> = Vec::new();
    let mut shape = model.input_shape.clone();
    for (i, layer) in model.layers.iter().enumerate() {
        shape = layer.kind.output_shape(i, &shape)?;
        if let Some(neuron) = &neurons[i] {
            let n: usize = shape.iter().product();
            let v0 = vec![sim.v0.initial(neuron); n];
            potentials.push(v0.clone());
            traces.push(LayerTrace {
                layer: i,
                per_spike_weight: neuron.per_spike_weight(),
                max_count: neuron.max_count(),
                counts: Vec::with_capacity(steps),
                v_initial: v0,
                v_final: Vec::new(),
            });
        }
    }

    let out_len: usize = shape.iter().product();
    let mut accumulated = vec![0.0; out_len];
    let mut outputs = Vec::with_capacity(steps);

    for _ in 0..steps {
        let mut x = input.clone();
        let mut spiking = 0;
        for (i, layer) in model.layers.iter().enumerate() {
            let mut z = layer.kind.forward(i, &x)?;
            if let Some(neuron) = &neurons[i] {
                let v = &mut potentials[spiking];
                let mut counts = Vec::with_capacity(z.len());
                for (zj, vj) in z.data_mut().iter_mut().zip(v.iter_mut()) {
                    let (out, next) = neuron.step(*vj, *zj);
                    *vj = next;
                    *zj = out.psp;
                    counts.push(out.count);
                }
                traces[spiking].counts.push(counts);
                spiking += 1;
            }
            x = z;
        }
        for (acc, v) in accumulated.iter_mut().zip(x.data()) {
            *acc += v;
        }
        outputs.push(x.into_data());
    }

    for (lt, v) in traces.iter_mut().zip(potentials) {
        lt.v_final = v;
    }
    let t = f64::from(sim.t_steps);
    let logits = accumulated.into_iter().map(|v| v / t).collect();
    Ok((
        logits,
        Trace {
            t_steps: sim.t_steps,
            layers: traces,
            outputs,
        },
    ))
}
