//! Plain SGD with coupled L2 weight decay, a step learning-rate schedule,
//! and global-norm gradient clipping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::layers::ParamSet;
use crate::scalar::Scalar;
use crate::tensor::sum_sq_f64;

/// Gradients keyed by parameter name, aligned with a [`ParamSet`].
pub type GradMap<S> = BTreeMap<String, Vec<S>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub iteration: u64,
    pub base_lr: f64,
    pub weight_decay: f64,
    /// Iterations between learning-rate steps; `u64::MAX` never steps.
    pub step_period: u64,
    pub step_factor: f64,
    pub clip_threshold: f64,
}

impl OptimizerState {
    pub fn new(
        base_lr: f64,
        weight_decay: f64,
        step_period: u64,
        step_factor: f64,
        clip_threshold: f64,
    ) -> Self {
        OptimizerState {
            iteration: 0,
            base_lr,
            weight_decay,
            step_period,
            step_factor,
            clip_threshold,
        }
    }

    /// Effective learning rate at `iter`: `base · factor^⌊iter/period⌋`.
    /// Positive bases stay strictly positive even when the power underflows.
    pub fn lr_schedule(&self, iter: u64) -> f64 {
        let steps = (iter / self.step_period.max(1)) as i32;
        let lr = self.base_lr * self.step_factor.powi(steps);
        if self.base_lr > 0.0 && self.step_factor > 0.0 {
            lr.max(f64::MIN_POSITIVE)
        } else {
            lr
        }
    }
}

/// Rescale all gradients so their global L2 norm does not exceed
/// `threshold`. The norm is accumulated in f64 over parameters in name
/// order; direction is preserved exactly and gradients below the threshold
/// pass through untouched. Returns the pre-clip norm.
pub fn clip_gradients<S: Scalar>(grads: &mut GradMap<S>, threshold: f64) -> f64 {
    let norm = grads
        .values()
        .map(|g| sum_sq_f64(g))
        .sum::<f64>()
        .sqrt();
    if norm > threshold {
        let factor = S::of_f64(threshold / norm);
        for g in grads.values_mut() {
            for v in g.iter_mut() {
                *v *= factor;
            }
        }
    }
    norm
}

/// One SGD step over every parameter:
/// `w ← w − lr_eff · (g + wd·w)`, then the iteration counter advances.
/// Every parameter must have a gradient; a silent partial update would be a
/// training bug, not a feature.
pub fn sgd_step<S: Scalar>(
    params: &mut ParamSet<S>,
    grads: &GradMap<S>,
    opt: &mut OptimizerState,
) -> Result<()> {
    let lr = S::of_f64(opt.lr_schedule(opt.iteration));
    let wd = S::of_f64(opt.weight_decay);
    for (name, tensor) in params.iter_mut() {
        let grad = grads.get(name).ok_or_else(|| CoreError::MissingGrad {
            name: name.clone(),
        })?;
        if grad.len() != tensor.numel() {
            return Err(CoreError::ParamShapeMismatch {
                name: name.clone(),
                expected: tensor.shape.clone(),
                found: vec![grad.len()],
            });
        }
        for (w, &g) in tensor.data.iter_mut().zip(grad.iter()) {
            *w = *w - lr * (g + wd * *w);
        }
    }
    opt.iteration += 1;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use proptest::prelude::*;

    fn single_param(w: f64) -> ParamSet<f64> {
        let mut set = ParamSet::new();
        set.insert("w", Tensor::new(vec![1], vec![w]).unwrap());
        set
    }

    #[test]
    fn sgd_forced_arithmetic() {
        let mut params = single_param(1.0);
        let mut grads = GradMap::new();
        grads.insert("w".into(), vec![0.5]);
        let mut opt = OptimizerState::new(0.001, 0.005, 20_000, 0.1, 15.0);
        sgd_step(&mut params, &grads, &mut opt).unwrap();
        let w = params.get("w").unwrap().data[0];
        assert!((w - 0.999495).abs() < 1e-12, "w = {w}");
        assert_eq!(opt.iteration, 1);
    }

    #[test]
    fn sgd_zero_gradient_zero_decay_is_fixed_point() {
        let mut params = single_param(0.75);
        let mut grads = GradMap::new();
        grads.insert("w".into(), vec![0.0]);
        let mut opt = OptimizerState::new(0.1, 0.0, u64::MAX, 0.1, 15.0);
        sgd_step(&mut params, &grads, &mut opt).unwrap();
        assert_eq!(params.get("w").unwrap().data[0].to_bits(), 0.75f64.to_bits());
    }

    #[test]
    fn sgd_missing_gradient_is_an_error() {
        let mut params = single_param(1.0);
        let grads = GradMap::new();
        let mut opt = OptimizerState::new(0.1, 0.0, u64::MAX, 0.1, 15.0);
        let err = sgd_step(&mut params, &grads, &mut opt).unwrap_err();
        assert!(matches!(err, CoreError::MissingGrad { name } if name == "w"));
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // f(w) = ½w², ∇f = w, so w_k = (1 − lr)^k · w_0.
        let mut params = single_param(1.0);
        let mut opt = OptimizerState::new(0.1, 0.0, u64::MAX, 0.1, 15.0);
        for _ in 0..100 {
            let mut grads = GradMap::new();
            grads.insert("w".into(), vec![params.get("w").unwrap().data[0]]);
            sgd_step(&mut params, &grads, &mut opt).unwrap();
        }
        let w = params.get("w").unwrap().data[0];
        let expected = 0.9f64.powi(100);
        assert!((w - expected).abs() / expected < 1e-12, "w = {w}");
        assert!((expected - 2.656e-5).abs() < 1e-8);
    }

    #[test]
    fn lr_schedule_paper_values() {
        let opt = OptimizerState::new(0.001, 0.005, 20_000, 0.1, 15.0);
        assert_eq!(opt.lr_schedule(0), 0.001);
        assert!((opt.lr_schedule(25_000) - 0.0001).abs() < 1e-18);
        assert!((opt.lr_schedule(45_000) - 0.00001).abs() < 1e-18);
    }

    #[test]
    fn lr_schedule_degenerate_period_is_constant() {
        let opt = OptimizerState::new(0.001, 0.0, u64::MAX, 0.1, 15.0);
        for iter in [0, 1, 100_000, 10_000_000] {
            assert_eq!(opt.lr_schedule(iter), 0.001);
        }
    }

    #[test]
    fn clip_single_forced() {
        let mut grads: GradMap<f64> = GradMap::new();
        grads.insert("g".into(), vec![30.0]);
        let norm = clip_gradients(&mut grads, 15.0);
        assert_eq!(norm, 30.0);
        assert!((grads["g"][0] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn clip_below_threshold_is_bit_identical() {
        let data = vec![0.1, -0.2, 0.05];
        let mut grads: GradMap<f64> = GradMap::new();
        grads.insert("g".into(), data.clone());
        clip_gradients(&mut grads, 15.0);
        assert_eq!(
            grads["g"].iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            data.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn clip_rescales_norm_and_preserves_direction() {
        // Two tensors whose joint norm is exactly 100.
        let mut grads: GradMap<f64> = GradMap::new();
        grads.insert("a".into(), vec![60.0, 0.0]);
        grads.insert("b".into(), vec![0.0, 80.0]);
        let before: Vec<f64> = vec![60.0, 0.0, 0.0, 80.0];
        let norm = clip_gradients(&mut grads, 15.0);
        assert!((norm - 100.0).abs() < 1e-9);
        let after: Vec<f64> = grads["a"].iter().chain(grads["b"].iter()).copied().collect();
        let post_norm = after.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((post_norm - 15.0).abs() < 1e-9);
        let dot: f64 = before.iter().zip(&after).map(|(x, y)| x * y).sum();
        let cos = dot / (100.0 * post_norm);
        assert!((cos - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn clip_never_increases_norm(values in proptest::collection::vec(-50.0f64..50.0, 1..32),
                                     threshold in 0.1f64..40.0) {
            let mut grads: GradMap<f64> = GradMap::new();
            grads.insert("g".into(), values.clone());
            let before = values.iter().map(|x| x * x).sum::<f64>().sqrt();
            clip_gradients(&mut grads, threshold);
            let after = grads["g"].iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(after <= before + 1e-9);
            prop_assert!(after <= threshold.max(before) + 1e-9);
        }

        #[test]
        fn schedule_is_positive_and_non_increasing(period in 1u64..100_000,
                                                   iters in proptest::collection::vec(0u64..1_000_000, 2..16)) {
            let opt = OptimizerState::new(0.001, 0.0, period, 0.1, 15.0);
            let mut sorted = iters.clone();
            sorted.sort_unstable();
            let mut last = f64::INFINITY;
            for it in sorted {
                let lr = opt.lr_schedule(it);
                prop_assert!(lr > 0.0);
                prop_assert!(lr <= last);
                last = lr;
            }
        }

        #[test]
        fn sgd_with_zero_lr_is_identity(w in -5.0f64..5.0, g in -5.0f64..5.0) {
            let mut params = single_param(w);
            let mut grads = GradMap::new();
            grads.insert("w".into(), vec![g]);
            let mut opt = OptimizerState::new(0.0, 0.005, 100, 0.1, 15.0);
            sgd_step(&mut params, &grads, &mut opt).unwrap();
            prop_assert_eq!(params.get("w").unwrap().data[0].to_bits(), w.to_bits());
        }
    }
}
