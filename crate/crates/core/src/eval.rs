//! AP50 evaluation in original-image coordinates and pixel-budget reports.
//!
//! Matching follows the COCO evaluator: detections are visited in score
//! order, each claims the unmatched ground truth with the highest IoU of at
//! least 0.5, and precision is sampled at 101 recall points after making it
//! monotone. Area-range evaluation marks out-of-range ground truth as
//! ignored instead of removing it, so detections of those objects are not
//! counted as false positives.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::geometry::{eval_size_bucket, iou, EvalSize};
use crate::merge::{rank, GlobalDetection};
use crate::scene::Annotation;

pub const MATCH_IOU: f64 = 0.5;
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    /// `None` when no ground truth falls in the evaluated range.
    pub ap: Option<f64>,
    /// Interpolated precision at recall 0.00, 0.01, ..., 1.00.
    pub precision: Vec<f64>,
    pub matched: usize,
    pub detections: usize,
    pub ground_truth: usize,
}

impl ApResult {
    pub fn recall(&self) -> Option<f64> {
        (self.ground_truth > 0).then(|| self.matched as f64 / self.ground_truth as f64)
    }
}

struct CategoryEval {
    precision: Vec<f64>,
    matched: usize,
    detections: usize,
    ground_truth: usize,
}

fn evaluate_category(
    dets: &[&GlobalDetection],
    gts: &[&Annotation],
    filter: Option<EvalSize>,
) -> CategoryEval {
    let in_range = |b| filter.is_none_or(|f| eval_size_bucket(b) == f);
    // regular ground truth first, ignored last
    let mut gts: Vec<(&Annotation, bool)> = gts.iter().map(|g| (*g, !in_range(&g.bbox))).collect();
    gts.sort_by_key(|(_, ignored)| *ignored);
    let regular = gts.iter().filter(|(_, ig)| !ig).count();

    let mut dets: Vec<&GlobalDetection> = dets.to_vec();
    dets.sort_by(|a, b| rank(a, b));

    let mut gt_taken = vec![false; gts.len()];
    // (is_true_positive) for every detection that is not ignored
    let mut outcomes: Vec<bool> = Vec::with_capacity(dets.len());
    for d in &dets {
        let mut best: Option<usize> = None;
        let mut best_iou = MATCH_IOU.min(1.0 - 1e-10);
        for (g, (gt, ignored)) in gts.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            if let Some(b) = best {
                if !gts[b].1 && *ignored {
                    break;
                }
            }
            let v = iou(&d.bbox, &gt.bbox);
            if v < best_iou {
                continue;
            }
            best_iou = v;
            best = Some(g);
        }
        match best {
            Some(g) => {
                gt_taken[g] = true;
                if !gts[g].1 {
                    outcomes.push(true);
                }
            }
            None => {
                if in_range(&d.bbox) {
                    outcomes.push(false);
                }
            }
        }
    }

    let matched = outcomes.iter().filter(|t| **t).count();
    CategoryEval {
        precision: interpolated_precision(&outcomes, regular),
        matched,
        detections: outcomes.len(),
        ground_truth: regular,
    }
}

/// Precision sampled at the 101 COCO recall thresholds.
pub fn interpolated_precision(outcomes: &[bool], ground_truth: usize) -> Vec<f64> {
    let mut q = vec![0.0; RECALL_POINTS];
    if ground_truth == 0 || outcomes.is_empty() {
        return q;
    }
    let mut recall = Vec::with_capacity(outcomes.len());
    let mut precision = Vec::with_capacity(outcomes.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &hit in outcomes {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / ground_truth as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    for (k, slot) in q.iter_mut().enumerate() {
        let r = k as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&v| v < r);
        if idx < precision.len() {
            *slot = precision[idx];
        }
    }
    q
}

/// AP at IoU 0.5, optionally restricted to one evaluation size bucket.
///
/// Only detections and ground truth of the same category can match; with
/// several categories the precision curves are averaged over categories that
/// have ground truth in range.
pub fn ap50(dets: &[GlobalDetection], gts: &[Annotation], filter: Option<EvalSize>) -> ApResult {
    let categories: BTreeSet<u32> = gts
        .iter()
        .map(|g| g.category)
        .chain(dets.iter().map(|d| d.category))
        .collect();
    let mut sum = vec![0.0; RECALL_POINTS];
    let mut counted = 0usize;
    let (mut matched, mut n_dets, mut n_gts) = (0, 0, 0);
    for c in categories {
        let cd: Vec<&GlobalDetection> = dets.iter().filter(|d| d.category == c).collect();
        let cg: Vec<&Annotation> = gts.iter().filter(|g| g.category == c).collect();
        let r = evaluate_category(&cd, &cg, filter);
        matched += r.matched;
        n_dets += r.detections;
        n_gts += r.ground_truth;
        if r.ground_truth > 0 {
            counted += 1;
            for (s, p) in sum.iter_mut().zip(&r.precision) {
                *s += p;
            }
        }
    }
    let (ap, precision) = if counted == 0 {
        (None, sum)
    } else {
        let curve: Vec<f64> = sum.iter().map(|s| s / counted as f64).collect();
        (
            Some(curve.iter().sum::<f64>() / RECALL_POINTS as f64),
            curve,
        )
    };
    ApResult {
        ap,
        precision,
        matched,
        detections: n_dets,
        ground_truth: n_gts,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ap50: Option<f64>,
    pub ap_small: Option<f64>,
    pub ap_middle: Option<f64>,
    pub ap_large: Option<f64>,
    pub recall: Option<f64>,
    pub matched: usize,
    pub detections: usize,
    pub ground_truth: usize,
    pub buckets: [BucketCounts; 3],
    /// `(recall, precision)` samples of the overall curve.
    pub pr_curve: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketCounts {
    pub bucket: EvalSize,
    pub matched: usize,
    pub detections: usize,
    pub ground_truth: usize,
}

pub fn evaluate(dets: &[GlobalDetection], gts: &[Annotation]) -> EvalReport {
    let all = ap50(dets, gts, None);
    let per = EvalSize::ALL.map(|b| (b, ap50(dets, gts, Some(b))));
    let pr_curve = all
        .precision
        .iter()
        .enumerate()
        .map(|(k, &p)| (k as f64 / (RECALL_POINTS - 1) as f64, p))
        .collect();
    EvalReport {
        ap50: all.ap,
        ap_small: per[0].1.ap,
        ap_middle: per[1].1.ap,
        ap_large: per[2].1.ap,
        recall: all.recall(),
        matched: all.matched,
        detections: all.detections,
        ground_truth: all.ground_truth,
        buckets: per.map(|(bucket, r)| BucketCounts {
            bucket,
            matched: r.matched,
            detections: r.detections,
            ground_truth: r.ground_truth,
        }),
        pr_curve,
    }
}

impl EvalReport {
    pub fn pr_csv(&self) -> String {
        let mut s = String::from("recall,precision\n");
        for (r, p) in &self.pr_curve {
            s.push_str(&format!("{r:.2},{p:.6}\n"));
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>10}", "metric", "value")?;
        writeln!(f, "{:<12} {:>10}", "AP50", opt(self.ap50))?;
        writeln!(f, "{:<12} {:>10}", "AP50-small", opt(self.ap_small))?;
        writeln!(f, "{:<12} {:>10}", "AP50-middle", opt(self.ap_middle))?;
        writeln!(f, "{:<12} {:>10}", "AP50-large", opt(self.ap_large))?;
        writeln!(f, "{:<12} {:>10}", "recall", opt(self.recall))?;
        writeln!(f, "{:<12} {:>10}", "matched", self.matched)?;
        writeln!(f, "{:<12} {:>10}", "detections", self.detections)?;
        write!(f, "{:<12} {:>10}", "ground-truth", self.ground_truth)
    }
}

/// Ratio of two pixel budgets; infinite when the measured run processed
/// nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetRatio {
    Finite(f64),
    Infinite,
}

impl BudgetRatio {
    pub fn value(&self) -> f64 {
        match self {
            BudgetRatio::Finite(v) => *v,
            BudgetRatio::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for BudgetRatio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            BudgetRatio::Finite(v) => s.serialize_f64(*v),
            BudgetRatio::Infinite => s.serialize_str("inf"),
        }
    }
}

impl fmt::Display for BudgetRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetRatio::Finite(v) => write!(f, "{v:.2}x"),
            BudgetRatio::Infinite => f.write_str("inf"),
        }
    }
}

/// Detector workload of one run. Pixel counts are exact and deterministic;
/// wall-clock time is informative only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetReport {
    pub name: String,
    pub pixels_processed: u64,
    pub patch_count: usize,
    pub wall_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_ratio: Option<BudgetRatio>,
}

impl BudgetReport {
    pub fn new(name: impl Into<String>, pixels_processed: u64, patch_count: usize) -> Self {
        Self {
            name: name.into(),
            pixels_processed,
            patch_count,
            wall_seconds: 0.0,
            baseline: None,
            budget_ratio: None,
        }
    }

    pub fn against(mut self, baseline: &BudgetReport) -> Self {
        self.budget_ratio = Some(compare_budgets(&self, baseline));
        self.baseline = Some(baseline.name.clone());
        self
    }
}

/// Baseline pixels divided by measured pixels.
pub fn compare_budgets(measured: &BudgetReport, baseline: &BudgetReport) -> BudgetRatio {
    if measured.pixels_processed == 0 {
        BudgetRatio::Infinite
    } else {
        BudgetRatio::Finite(baseline.pixels_processed as f64 / measured.pixels_processed as f64)
    }
}

/// Aligned text table for a set of budget reports.
pub fn budget_table(reports: &[BudgetReport]) -> String {
    let mut s = format!(
        "{:<14} {:>8} {:>16} {:>10} {:>10}\n",
        "run", "patches", "pixels", "wall_s", "ratio"
    );
    for r in reports {
        let ratio = r
            .budget_ratio
            .map_or_else(|| "-".to_string(), |b| b.to_string());
        s.push_str(&format!(
            "{:<14} {:>8} {:>16} {:>10.3} {:>10}\n",
            r.name, r.patch_count, r.pixels_processed, r.wall_seconds, ratio
        ));
    }
    s.push_str(
        "note: ratios compare deterministic detector pixel budgets; wall-clock is informative\n",
    );
    s
}
