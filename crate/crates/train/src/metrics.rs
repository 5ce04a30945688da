//! Evaluation: joint-correct accuracy (a segment counts only when both
//! heads are right), per-head accuracy, per-class average precision from
//! segment-level scores, and confusion matrices.

use std::fs;
use std::path::Path;

use gestnet_core::network::Network;
use gestnet_core::Scalar;
use gestnet_data::VideoSegment;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, TrainError};
use crate::predict::{predict_segment, SegmentPrediction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split_id: u64,
    pub seed: u64,
    pub config_hash: String,
    pub num_segments: usize,
    /// Fraction of segments with BOTH argmax labels correct.
    pub joint_accuracy: f64,
    pub gesture_accuracy: f64,
    pub task_accuracy: f64,
    /// Per-class average precision; `null` where the class has no positives.
    pub gesture_ap: Vec<Option<f64>>,
    pub task_ap: Vec<Option<f64>>,
    /// Mean AP over classes present in the ground truth.
    pub gesture_mean_ap: f64,
    pub task_mean_ap: f64,
    pub confusion_gesture: Vec<Vec<u32>>,
    pub confusion_task: Vec<Vec<u32>>,
}

impl MetricsReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Average precision of one class from segment-level scores: rank by score
/// descending (ties by index, so evaluation is deterministic), then average
/// precision-at-k over the positive hits. `None` when no positives exist.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    let n_pos = positives.iter().filter(|&&p| p).count();
    if n_pos == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut hits = 0usize;
    let mut sum_precision = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        if positives[idx] {
            hits += 1;
            sum_precision += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum_precision / n_pos as f64)
}

/// Ground truth labels paired with a prediction.
#[derive(Debug, Clone)]
pub struct LabeledPrediction {
    pub gesture_gt: u8,
    pub task_gt: u8,
    pub prediction: SegmentPrediction,
}

/// Metrics over a set of labeled predictions. Pure: the baseline arm feeds
/// this compositions of two single-task models.
pub fn evaluate_predictions(
    items: &[LabeledPrediction],
    gesture_classes: usize,
    task_classes: usize,
    split_id: u64,
    seed: u64,
    config_hash: String,
) -> Result<MetricsReport> {
    if items.is_empty() {
        return Err(TrainError::InvalidArgument {
            op: "evaluate",
            msg: "empty test set".into(),
        });
    }
    let n = items.len() as f64;
    let mut joint = 0usize;
    let mut gesture_right = 0usize;
    let mut task_right = 0usize;
    let mut confusion_gesture = vec![vec![0u32; gesture_classes]; gesture_classes];
    let mut confusion_task = vec![vec![0u32; task_classes]; task_classes];
    for item in items {
        let g_ok = item.prediction.gesture_argmax == item.gesture_gt as usize;
        let t_ok = item.prediction.task_argmax == item.task_gt as usize;
        gesture_right += usize::from(g_ok);
        task_right += usize::from(t_ok);
        joint += usize::from(g_ok && t_ok);
        confusion_gesture[item.gesture_gt as usize][item.prediction.gesture_argmax] += 1;
        confusion_task[item.task_gt as usize][item.prediction.task_argmax] += 1;
    }

    fn gesture_head(it: &LabeledPrediction) -> (&[f64], u8) {
        (&it.prediction.gesture_probs, it.gesture_gt)
    }
    fn task_head(it: &LabeledPrediction) -> (&[f64], u8) {
        (&it.prediction.task_probs, it.task_gt)
    }
    let ap_for = |class: usize, head: for<'a> fn(&'a LabeledPrediction) -> (&'a [f64], u8)| {
        let scores: Vec<f64> = items.iter().map(|it| head(it).0[class]).collect();
        let positives: Vec<bool> = items.iter().map(|it| head(it).1 as usize == class).collect();
        average_precision(&scores, &positives)
    };
    let gesture_ap: Vec<Option<f64>> =
        (0..gesture_classes).map(|c| ap_for(c, gesture_head)).collect();
    let task_ap: Vec<Option<f64>> = (0..task_classes).map(|c| ap_for(c, task_head)).collect();
    let mean = |aps: &[Option<f64>]| {
        let present: Vec<f64> = aps.iter().flatten().copied().collect();
        if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        }
    };

    Ok(MetricsReport {
        split_id,
        seed,
        config_hash,
        num_segments: items.len(),
        joint_accuracy: joint as f64 / n,
        gesture_accuracy: gesture_right as f64 / n,
        task_accuracy: task_right as f64 / n,
        gesture_mean_ap: mean(&gesture_ap),
        task_mean_ap: mean(&task_ap),
        gesture_ap,
        task_ap,
        confusion_gesture,
        confusion_task,
    })
}

/// Predict every test segment with one network, then score.
pub fn evaluate<S: Scalar>(
    network: &Network<S>,
    segments: &[VideoSegment],
    config: &RunConfig,
    split_id: u64,
) -> Result<MetricsReport> {
    if segments.is_empty() {
        return Err(TrainError::InvalidArgument {
            op: "evaluate",
            msg: "empty test set".into(),
        });
    }
    let mut items = Vec::with_capacity(segments.len());
    for segment in segments {
        items.push(LabeledPrediction {
            gesture_gt: segment.gesture,
            task_gt: segment.task,
            prediction: predict_segment(network, segment, config)?,
        });
    }
    evaluate_predictions(
        &items,
        config.architecture.gesture_classes,
        config.architecture.task_classes,
        split_id,
        config.seed,
        config.hash()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(id: &str, gesture: Vec<f64>, task: Vec<f64>) -> SegmentPrediction {
        SegmentPrediction {
            segment_id: id.into(),
            per_frame: vec![],
            clip_means: vec![],
            gesture_argmax: crate::predict::argmax(&gesture),
            task_argmax: crate::predict::argmax(&task),
            gesture_probs: gesture,
            task_probs: task,
        }
    }

    #[test]
    fn counting_example_two_segments() {
        // Both predict gesture class 1 (right); one gets the task wrong.
        let items = vec![
            LabeledPrediction {
                gesture_gt: 1,
                task_gt: 0,
                prediction: pred("a", vec![0.1, 0.8, 0.1], vec![0.9, 0.1, 0.0]),
            },
            LabeledPrediction {
                gesture_gt: 1,
                task_gt: 0,
                prediction: pred("b", vec![0.2, 0.7, 0.1], vec![0.2, 0.7, 0.1]),
            },
        ];
        let report = evaluate_predictions(&items, 3, 3, 0, 0, "x".into()).unwrap();
        assert_eq!(report.joint_accuracy, 0.5);
        assert_eq!(report.gesture_accuracy, 1.0);
        assert_eq!(report.task_accuracy, 0.5);
        assert!(report.joint_accuracy <= report.gesture_accuracy.min(report.task_accuracy));
        assert_eq!(report.confusion_task[0][1], 1);
    }

    #[test]
    fn perfect_predictor_scores_one() {
        let items: Vec<LabeledPrediction> = (0..6)
            .map(|i| {
                let mut gesture = vec![0.0; 4];
                gesture[i % 4] = 1.0;
                let mut task = vec![0.0; 3];
                task[i % 3] = 1.0;
                LabeledPrediction {
                    gesture_gt: (i % 4) as u8,
                    task_gt: (i % 3) as u8,
                    prediction: pred(&format!("s{i}"), gesture, task),
                }
            })
            .collect();
        let report = evaluate_predictions(&items, 4, 3, 0, 0, "x".into()).unwrap();
        assert_eq!(report.joint_accuracy, 1.0);
        assert_eq!(report.gesture_mean_ap, 1.0);
        assert_eq!(report.task_mean_ap, 1.0);
        for (i, row) in report.confusion_task.iter().enumerate() {
            for (j, &count) in row.iter().enumerate() {
                assert_eq!(count > 0, i == j && count > 0);
                if i != j {
                    assert_eq!(count, 0);
                }
            }
        }
    }

    #[test]
    fn average_precision_hand_enumerated_ranking() {
        // Scores rank the five items as: + − + − + (positives at ranks
        // 1, 3, 5). AP = (1/1 + 2/3 + 3/5) / 3 = 34/45.
        let scores = vec![0.9, 0.8, 0.7, 0.6, 0.5];
        let positives = vec![true, false, true, false, true];
        let ap = average_precision(&scores, &positives).unwrap();
        assert!((ap - 34.0 / 45.0).abs() < 1e-12, "ap = {ap}");

        // No positives → undefined.
        assert_eq!(average_precision(&scores, &[false; 5]), None);

        // Ties break by index: item 0 negative, item 1 positive, same score.
        let ap = average_precision(&[0.5, 0.5], &[false, true]).unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_test_set_is_rejected() {
        assert!(evaluate_predictions(&[], 3, 3, 0, 0, "x".into()).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let items = vec![LabeledPrediction {
            gesture_gt: 0,
            task_gt: 0,
            prediction: pred("a", vec![1.0, 0.0], vec![1.0, 0.0]),
        }];
        let report = evaluate_predictions(&items, 2, 2, 3, 7, "deadbeef".into()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.json");
        report.save(&path).unwrap();
        assert_eq!(MetricsReport::load(&path).unwrap(), report);
    }
}
