//! Named parameter sets, initialization, the recurrent cell, and the
//! two-head classification loss.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{CoreError, Result};
use crate::scalar::{fnv1a64, Scalar};
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

/// Weight init used when no pretrained checkpoint is available.
pub const INIT_STD: f64 = 0.01;
/// Forget-gate bias starts at 1 so early training does not erase cell state.
pub const FORGET_BIAS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Gaussian { std: f64 },
    Const(f64),
}

/// Declaration of one named parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn gaussian(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
            init: Init::Gaussian { std: INIT_STD },
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
            init: Init::Const(0.0),
        }
    }

    pub fn constant(name: impl Into<String>, shape: Vec<usize>, value: f64) -> Self {
        ParamSpec {
            name: name.into(),
            shape,
            init: Init::Const(value),
        }
    }
}

/// Ordered collection of named parameter tensors. Names are unique and
/// iteration is always in name order, which keeps every downstream reduction
/// (gradient norms, SGD updates, checkpoint layout) deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<S: Scalar> {
    params: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Default for ParamSet<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        let name = name.into();
        debug_assert!(
            !self.params.contains_key(&name),
            "duplicate parameter name '{name}'"
        );
        self.params.insert(name, tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.params.get(name).ok_or_else(|| CoreError::MissingParam {
            name: name.to_string(),
        })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| CoreError::MissingParam {
                name: name.to_string(),
            })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<S>)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.keys().cloned().collect()
    }

    pub fn total_elements(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }
}

/// Initialize every declared parameter. Each tensor draws from its own
/// ChaCha stream keyed by `(seed, name)`, so values do not depend on the
/// order parameters are declared in, and renaming one tensor cannot shift
/// another's values.
pub fn init_params<S: Scalar>(specs: &[ParamSpec], seed: u64) -> ParamSet<S> {
    let mut set = ParamSet::new();
    for spec in specs {
        set.insert(spec.name.clone(), init_one(spec, seed));
    }
    set
}

fn init_one<S: Scalar>(spec: &ParamSpec, seed: u64) -> Tensor<S> {
    let n: usize = spec.shape.iter().product();
    let data: Vec<S> = match spec.init {
        Init::Const(v) => vec![S::of_f64(v); n],
        Init::Gaussian { std } => {
            let mut key = Vec::with_capacity(8 + spec.name.len());
            key.extend_from_slice(&seed.to_le_bytes());
            key.extend_from_slice(spec.name.as_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(&key));
            let normal = Normal::new(0.0f64, std).expect("valid std");
            (0..n)
                .map(|_| S::of_f64(normal.sample(&mut rng)))
                .collect()
        }
    };
    Tensor {
        shape: spec.shape.clone(),
        data,
        requires_grad: false,
        grad: None,
    }
}

// ── Dense layer ──────────────────────────────────────────────────────

/// `y = x·W + b` for a row vector `x: [1×in]`, `W: [in×out]`, `b: [1×out]`.
pub fn dense<S: Scalar>(
    tape: &mut Tape<S>,
    x: TensorId,
    weight: TensorId,
    bias: TensorId,
) -> Result<TensorId> {
    let y = tape.matmul(x, weight)?;
    tape.add(y, bias)
}

// ── LSTM cell ────────────────────────────────────────────────────────

/// Tape handles for one LSTM cell's parameters. Weights are
/// `[(in+hidden) × hidden]`, biases `[1×hidden]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParamIds {
    pub w_i: TensorId,
    pub w_f: TensorId,
    pub w_g: TensorId,
    pub w_o: TensorId,
    pub b_i: TensorId,
    pub b_f: TensorId,
    pub b_g: TensorId,
    pub b_o: TensorId,
}

/// Hidden and cell state as row vectors `[1×hidden]` on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LstmStateIds {
    pub h: TensorId,
    pub c: TensorId,
}

/// Zero state for a fresh clip.
pub fn lstm_zero_state<S: Scalar>(tape: &mut Tape<S>, hidden: usize) -> Result<LstmStateIds> {
    let h = tape.leaf(Tensor::zeros(vec![1, hidden]), false)?;
    let c = tape.leaf(Tensor::zeros(vec![1, hidden]), false)?;
    Ok(LstmStateIds { h, c })
}

/// One LSTM step. A continuation marker of 0 (clip boundary) replaces the
/// incoming state with zeros before the gates run, which makes a marked
/// boundary observationally identical to starting a fresh sequence:
///
/// ```text
/// i,f,o = σ(W·[x;h] + b)   g = tanh(W·[x;h] + b)
/// c' = f⊙c + i⊙g           h' = o⊙tanh(c')        y = h'
/// ```
pub fn lstm_step<S: Scalar>(
    tape: &mut Tape<S>,
    x: TensorId,
    state: &LstmStateIds,
    params: &LstmParamIds,
    marker: u8,
) -> Result<(TensorId, LstmStateIds)> {
    let hidden = tape.value(params.b_i).numel();
    let state = if marker == 0 {
        lstm_zero_state(tape, hidden)?
    } else {
        *state
    };
    let xh = tape.concat_cols(x, state.h)?;
    let i_pre = dense(tape, xh, params.w_i, params.b_i)?;
    let f_pre = dense(tape, xh, params.w_f, params.b_f)?;
    let g_pre = dense(tape, xh, params.w_g, params.b_g)?;
    let o_pre = dense(tape, xh, params.w_o, params.b_o)?;
    let i = tape.sigmoid(i_pre)?;
    let f = tape.sigmoid(f_pre)?;
    let g = tape.tanh(g_pre)?;
    let o = tape.sigmoid(o_pre)?;
    let fc = tape.mul(f, state.c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let c_act = tape.tanh(c_next)?;
    let h_next = tape.mul(o, c_act)?;
    Ok((h_next, LstmStateIds { h: h_next, c: c_next }))
}

/// Parameter declarations for one LSTM cell under `prefix`: fan-in-scaled
/// Gaussian weights, biases zero except the forget gate at [`FORGET_BIAS`].
pub fn lstm_param_specs(prefix: &str, input: usize, hidden: usize) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    let std = (1.0 / (input + hidden) as f64).sqrt();
    for gate in ["i", "f", "g", "o"] {
        specs.push(ParamSpec {
            name: format!("{prefix}.w_{gate}"),
            shape: vec![input + hidden, hidden],
            init: Init::Gaussian { std },
        });
        let bias = if gate == "f" { FORGET_BIAS } else { 0.0 };
        specs.push(ParamSpec::constant(
            format!("{prefix}.b_{gate}"),
            vec![1, hidden],
            bias,
        ));
    }
    specs
}

// ── Multi-task loss ──────────────────────────────────────────────────

/// Result of [`multi_task_loss`]: the combined scalar plus the per-head
/// pieces for trace logging and prediction output.
pub struct MultiTaskLoss<S: Scalar> {
    pub total: TensorId,
    pub gesture_loss: TensorId,
    pub task_loss: TensorId,
    pub gesture_probs: Vec<S>,
    pub task_probs: Vec<S>,
}

/// `w_g·CE(gesture) + w_t·CE(task)`. Both heads weigh in equally by default
/// (`(1, 1)`); a zero weight reduces the total to the other head exactly.
pub fn multi_task_loss<S: Scalar>(
    tape: &mut Tape<S>,
    gesture_logits: TensorId,
    task_logits: TensorId,
    gesture_target: usize,
    task_target: usize,
    weights: (f64, f64),
) -> Result<MultiTaskLoss<S>> {
    if weights.0 < 0.0 || weights.1 < 0.0 {
        return Err(CoreError::InvalidArgument {
            op: "multi_task_loss",
            msg: format!("weights must be nonnegative, got {weights:?}"),
        });
    }
    let (gesture_loss, gesture_probs) = tape.softmax_cross_entropy(gesture_logits, gesture_target)?;
    let (task_loss, task_probs) = tape.softmax_cross_entropy(task_logits, task_target)?;
    let wg = tape.scale(gesture_loss, S::of_f64(weights.0))?;
    let wt = tape.scale(task_loss, S::of_f64(weights.1))?;
    let total = tape.add(wg, wt)?;
    Ok(MultiTaskLoss {
        total,
        gesture_loss,
        task_loss,
        gesture_probs,
        task_probs,
    })
}
