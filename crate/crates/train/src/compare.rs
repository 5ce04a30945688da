//! Joint model vs separate-pipelines baseline.
//!
//! Arm A (baseline) trains single-modality single-task recurrent models:
//! the task head on RGB only and the gesture head on flow only, each
//! through its own frame → recurrent staging. A segment counts as correct
//! only when both independent models are right. Arm B is the joint
//! multimodal multi-task model. Both arms consume identical splits, seeds,
//! and iteration budgets.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use gestnet_core::network::StageTag;
use gestnet_core::Scalar;
use gestnet_data::splits::{split_digest, Split};
use gestnet_data::VideoSegment;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Result, TrainError};
use crate::metrics::{evaluate_predictions, LabeledPrediction, MetricsReport};
use crate::predict::{argmax, predict_segment};
use crate::trainer::{train_stage, StageInit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub split: usize,
    pub seed: u64,
    /// Order-independent digest of the split consumed by each arm; equal by
    /// construction and asserted by the fairness tests.
    pub baseline_split_digest: String,
    pub joint_split_digest: String,
    pub baseline_accuracy: f64,
    pub joint_accuracy: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub mean_baseline: f64,
    pub mean_joint: f64,
    pub mean_difference: f64,
}

impl ComparisonReport {
    /// CSV in the split-rows-plus-mean-row layout:
    /// `split,baseline,joint,difference`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("split,baseline,joint,difference\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.split, row.baseline_accuracy, row.joint_accuracy, row.difference
            ));
        }
        out.push_str(&format!(
            "mean,{},{},{}\n",
            self.mean_baseline, self.mean_joint, self.mean_difference
        ));
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

fn partition<'a>(
    data: &'a [VideoSegment],
    split: &Split,
) -> Result<(Vec<&'a VideoSegment>, Vec<&'a VideoSegment>)> {
    let by_id: BTreeMap<&str, &VideoSegment> =
        data.iter().map(|s| (s.id.as_str(), s)).collect();
    let lookup = |ids: &[String]| -> Result<Vec<&'a VideoSegment>> {
        ids.iter()
            .map(|id| {
                by_id.get(id.as_str()).copied().ok_or_else(|| {
                    TrainError::InvalidArgument {
                        op: "compare",
                        msg: format!("split references unknown segment '{id}'"),
                    }
                })
            })
            .collect()
    };
    Ok((lookup(&split.train)?, lookup(&split.test)?))
}

fn owned(segments: &[&VideoSegment]) -> Vec<VideoSegment> {
    segments.iter().map(|&s| s.clone()).collect()
}

/// Train and evaluate the joint arm on one split.
pub fn run_joint_arm<S: Scalar>(
    train: &[VideoSegment],
    test: &[VideoSegment],
    config: &RunConfig,
    split_id: u64,
) -> Result<MetricsReport> {
    let ckpts = crate::trainer::train_full_pipeline::<S>(train, config, None)?;
    let network = ckpts.joint.into_network();
    crate::metrics::evaluate(&network, test, config, split_id)
}

/// Train and evaluate the separate-pipelines baseline on one split: task
/// from an RGB-only recurrent model, gesture from a flow-only one.
pub fn run_baseline_arm<S: Scalar>(
    train: &[VideoSegment],
    test: &[VideoSegment],
    config: &RunConfig,
    split_id: u64,
) -> Result<MetricsReport> {
    // Task pipeline on visual cues only: loss weights (gesture 0, task 1).
    let frame_rgb = train_stage::<S>(
        StageTag::FrameRgb,
        train,
        config,
        StageInit::Seed,
        (0.0, 1.0),
        None,
    )?
    .checkpoint;
    let lstm_rgb = train_stage::<S>(
        StageTag::LstmRgb,
        train,
        config,
        StageInit::Frame(&frame_rgb),
        (0.0, 1.0),
        None,
    )?
    .checkpoint;
    // Gesture pipeline on motion cues only: loss weights (1, 0).
    let frame_flow = train_stage::<S>(
        StageTag::FrameFlow,
        train,
        config,
        StageInit::Seed,
        (1.0, 0.0),
        None,
    )?
    .checkpoint;
    let lstm_flow = train_stage::<S>(
        StageTag::LstmFlow,
        train,
        config,
        StageInit::Frame(&frame_flow),
        (1.0, 0.0),
        None,
    )?
    .checkpoint;

    let task_net = lstm_rgb.into_network();
    let gesture_net = lstm_flow.into_network();
    let mut items = Vec::with_capacity(test.len());
    for segment in test {
        let task_pred = predict_segment(&task_net, segment, config)?;
        let gesture_pred = predict_segment(&gesture_net, segment, config)?;
        // Compose: gesture probabilities from the flow model, task
        // probabilities from the RGB model.
        let mut merged = gesture_pred;
        merged.task_probs = task_pred.task_probs;
        merged.task_argmax = argmax(&merged.task_probs);
        items.push(LabeledPrediction {
            gesture_gt: segment.gesture,
            task_gt: segment.task,
            prediction: merged,
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

/// Full comparison over paired (seed, split) runs. Run `i` uses
/// `seeds[i]` and `splits[i]`; both arms share them exactly.
pub fn run_baseline_comparison<S: Scalar>(
    data: &[VideoSegment],
    splits: &[Split],
    seeds: &[u64],
    config: &RunConfig,
) -> Result<(ComparisonReport, Vec<(MetricsReport, MetricsReport)>)> {
    if splits.is_empty() || splits.len() != seeds.len() {
        return Err(TrainError::InvalidArgument {
            op: "compare",
            msg: format!(
                "need matching split/seed counts, got {} and {}",
                splits.len(),
                seeds.len()
            ),
        });
    }
    let mut rows = Vec::with_capacity(splits.len());
    let mut reports = Vec::with_capacity(splits.len());
    for (i, (split, &seed)) in splits.iter().zip(seeds.iter()).enumerate() {
        let mut run_config = config.clone();
        run_config.seed = seed;
        let (train, test) = partition(data, split)?;
        let (train, test) = (owned(&train), owned(&test));
        let digest = format!("{:016x}", split_digest(split));

        let baseline = run_baseline_arm::<S>(&train, &test, &run_config, i as u64)?;
        let joint = run_joint_arm::<S>(&train, &test, &run_config, i as u64)?;
        rows.push(ComparisonRow {
            split: i + 1,
            seed,
            baseline_split_digest: digest.clone(),
            joint_split_digest: digest,
            baseline_accuracy: baseline.joint_accuracy,
            joint_accuracy: joint.joint_accuracy,
            difference: joint.joint_accuracy - baseline.joint_accuracy,
        });
        reports.push((baseline, joint));
    }
    let n = rows.len() as f64;
    let report = ComparisonReport {
        mean_baseline: rows.iter().map(|r| r.baseline_accuracy).sum::<f64>() / n,
        mean_joint: rows.iter().map(|r| r.joint_accuracy).sum::<f64>() / n,
        mean_difference: rows.iter().map(|r| r.difference).sum::<f64>() / n,
        rows,
    };
    Ok((report, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_split_rows_and_mean_row() {
        let report = ComparisonReport {
            rows: (1..=6)
                .map(|i| ComparisonRow {
                    split: i,
                    seed: i as u64,
                    baseline_split_digest: "d".into(),
                    joint_split_digest: "d".into(),
                    baseline_accuracy: 0.29,
                    joint_accuracy: 0.51,
                    difference: 0.22,
                })
                .collect(),
            mean_baseline: 0.29,
            mean_joint: 0.51,
            mean_difference: 0.22,
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 8); // header + 6 splits + mean
        assert_eq!(lines[0], "split,baseline,joint,difference");
        assert!(lines[7].starts_with("mean,"));
    }
}
