//! COCO-protocol detection evaluation: IoU, greedy matching, 101-point AP,
//! size-stratified AP/AR and precision–recall curves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AnnotationSet, BBox, SizeBucket};
use crate::error::{Error, Result};

/// Metric value reported when nothing defines it (no ground truth).
pub const UNDEFINED: f64 = -1.0;

/// One scored prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: BBox,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectionSet {
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(detections: Vec<Detection>) -> Result<Self> {
        let set = Self { detections };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.detections.iter().enumerate() {
            if !(d.score.is_finite() && (0.0..=1.0).contains(&d.score)) {
                return Err(Error::InvalidAnnotations(format!(
                    "detection {i}: score {} outside [0,1]",
                    d.score
                )));
            }
            if !d.bbox.is_valid() {
                return Err(Error::InvalidAnnotations(format!(
                    "detection {i}: non-positive bbox {:?}",
                    d.bbox
                )));
            }
        }
        Ok(())
    }
}

/// Parses a predictions file: a JSON array of
/// `{image_id, category_id, bbox: [x, y, w, h], score}`.
pub fn parse_predictions(json: &str) -> Result<DetectionSet> {
    let set: DetectionSet = serde_json::from_str(json)?;
    set.validate()?;
    Ok(set)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Result of matching one image's detections against its ground truth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    /// Detection indices by descending score (stable on ties).
    pub order: Vec<usize>,
    /// Matched ground-truth index for each detection (input indexing).
    pub det_to_gt: Vec<Option<usize>>,
    /// Matched detection index for each ground-truth box.
    pub gt_to_det: Vec<Option<usize>>,
}

impl Matching {
    pub fn is_tp(&self, det: usize) -> bool {
        self.det_to_gt[det].is_some()
    }
}

fn score_order(scores: impl Iterator<Item = f64>) -> Vec<usize> {
    let scores: Vec<f64> = scores.collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy matching for one image and threshold. `ious[d][g]` is indexed by
/// the score-sorted detection position. Ignored ground truth is visited
/// after the rest and a detection never trades a regular match for an
/// ignored one. Returns the ground-truth index matched by each detection.
fn greedy(ious: &[Vec<f64>], gt_ignore: &[bool], thr: f64) -> Vec<Option<usize>> {
    let mut gt_order: Vec<usize> = (0..gt_ignore.len()).collect();
    gt_order.sort_by_key(|&g| gt_ignore[g]);
    let mut taken = vec![false; gt_ignore.len()];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for &g in &gt_order {
                if taken[g] {
                    continue;
                }
                if let Some((b, _)) = best {
                    if !gt_ignore[b] && gt_ignore[g] {
                        break;
                    }
                }
                let v = row[g];
                if v < thr {
                    continue;
                }
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                taken[g] = true;
            }
            best.map(|(g, _)| g)
        })
        .collect()
}

fn iou_matrix(dets: &[BBox], gts: &[BBox]) -> Vec<Vec<f64>> {
    dets.iter()
        .map(|d| gts.iter().map(|g| iou(d, g)).collect())
        .collect()
}

/// Matches one image / one category. Detections are visited by descending
/// score; each takes the unmatched ground truth with the highest IoU ≥
/// `iou_thr`, the lower index winning ties.
pub fn match_detections(gt: &[BBox], det: &[(BBox, f64)], iou_thr: f64) -> Matching {
    let order = score_order(det.iter().map(|d| d.1));
    let sorted: Vec<BBox> = order.iter().map(|&i| det[i].0).collect();
    let matched = greedy(&iou_matrix(&sorted, gt), &vec![false; gt.len()], iou_thr);
    let mut det_to_gt = vec![None; det.len()];
    let mut gt_to_det = vec![None; gt.len()];
    for (pos, m) in matched.into_iter().enumerate() {
        if let Some(g) = m {
            det_to_gt[order[pos]] = Some(g);
            gt_to_det[g] = Some(order[pos]);
        }
    }
    Matching {
        order,
        det_to_gt,
        gt_to_det,
    }
}

/// A detection outcome for pooling across images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredMatch {
    pub score: f64,
    pub tp: bool,
}

/// Number of recall sample points.
pub const RECALL_POINTS: usize = 101;

fn recall_thresholds() -> [f64; RECALL_POINTS] {
    std::array::from_fn(|i| i as f64 / 100.0)
}

/// Cumulative `(recall, precision)` after each detection of `tps`.
fn pr_points(tps: &[bool], num_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    tps.iter()
        .enumerate()
        .map(|(i, &t)| {
            tp += t as usize;
            (tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64)
        })
        .collect()
}

/// Running maximum of precision from the right.
fn envelope(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = points.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i].1 = out[i].1.max(out[i + 1].1);
    }
    out
}

/// 101-point interpolated AP and final recall of a score-sorted outcome list.
fn ap_and_recall(tps: &[bool], num_gt: usize) -> (f64, f64) {
    if num_gt == 0 {
        return (UNDEFINED, UNDEFINED);
    }
    let env = envelope(&pr_points(tps, num_gt));
    let mut sum = 0.0;
    let mut p = 0;
    for r in recall_thresholds() {
        while p < env.len() && env[p].0 < r {
            p += 1;
        }
        if p < env.len() {
            sum += env[p].1;
        }
    }
    let recall = env.last().map_or(0.0, |e| e.0);
    (sum / RECALL_POINTS as f64, recall)
}

/// 101-point interpolated average precision over pooled outcomes; sorted by
/// descending score here (stable). [`UNDEFINED`] when `num_gt` is zero.
pub fn average_precision(matches: &[ScoredMatch], num_gt: usize) -> f64 {
    let order = score_order(matches.iter().map(|m| m.score));
    let tps: Vec<bool> = order.iter().map(|&i| matches[i].tp).collect();
    ap_and_recall(&tps, num_gt).0
}

/// Area restriction applied to ground truth and unmatched detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AreaRange {
    All,
    Small,
    Medium,
    Large,
}

impl AreaRange {
    pub const ALL: [AreaRange; 4] = [
        AreaRange::All,
        AreaRange::Small,
        AreaRange::Medium,
        AreaRange::Large,
    ];

    pub fn contains(self, area: f64) -> bool {
        let bucket = SizeBucket::of_area(area);
        match self {
            AreaRange::All => true,
            AreaRange::Small => bucket == SizeBucket::Small,
            AreaRange::Medium => bucket == SizeBucket::Medium,
            AreaRange::Large => bucket == SizeBucket::Large,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalParams {
    pub iou_thresholds: Vec<f64>,
    pub max_dets: usize,
    /// Thresholds for which full PR curves are reported.
    pub pr_thresholds: Vec<f64>,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            max_dets: 100,
            pr_thresholds: vec![0.5, 0.75, 0.9],
        }
    }
}

/// Per-image outcome for one category, area range and all thresholds.
#[derive(Debug, Clone)]
struct ImageEval {
    scores: Vec<f64>,
    /// `[threshold][det]`
    matched: Vec<Vec<bool>>,
    ignored: Vec<Vec<bool>>,
    num_gt: usize,
}

fn evaluate_image(
    gts: &[BBox],
    dets: &[BBox],
    scores: &[f64],
    ious: &[Vec<f64>],
    area: AreaRange,
    thresholds: &[f64],
) -> ImageEval {
    let gt_ignore: Vec<bool> = gts.iter().map(|g| !area.contains(g.area())).collect();
    let (mut matched, mut ignored) = (Vec::new(), Vec::new());
    for &thr in thresholds {
        let m = greedy(ious, &gt_ignore, thr);
        ignored.push(
            m.iter()
                .zip(dets)
                .map(|(g, d)| match g {
                    Some(g) => gt_ignore[*g],
                    None => !area.contains(d.area()),
                })
                .collect(),
        );
        matched.push(m.iter().map(Option::is_some).collect());
    }
    ImageEval {
        scores: scores.to_vec(),
        matched,
        ignored,
        num_gt: gt_ignore.iter().filter(|&&i| !i).count(),
    }
}

/// Pools image results (already in image-id order) and returns the outcome
/// list, score-sorted with ignored detections removed, per threshold.
fn pool(evals: &[&ImageEval], n_thr: usize) -> (Vec<Vec<(f64, bool)>>, usize) {
    let num_gt = evals.iter().map(|e| e.num_gt).sum();
    let mut out = vec![Vec::new(); n_thr];
    let scores: Vec<f64> = evals.iter().flat_map(|e| e.scores.iter().copied()).collect();
    let order = score_order(scores.iter().copied());
    for (t, list) in out.iter_mut().enumerate() {
        let matched: Vec<bool> = evals.iter().flat_map(|e| e.matched[t].iter().copied()).collect();
        let ignored: Vec<bool> = evals.iter().flat_map(|e| e.ignored[t].iter().copied()).collect();
        *list = order
            .iter()
            .filter(|&&i| !ignored[i])
            .map(|&i| (scores[i], matched[i]))
            .collect();
    }
    (out, num_gt)
}

/// One precision–recall curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub iou_thr: f64,
    /// `(recall, precision, score)` after each detection, by descending score.
    pub points: Vec<(f64, f64, f64)>,
    /// Same recalls with precision replaced by its running maximum from the
    /// right.
    pub envelope: Vec<(f64, f64)>,
}

impl PrCurve {
    fn from_outcomes(iou_thr: f64, outcomes: &[(f64, bool)], num_gt: usize) -> Self {
        if num_gt == 0 || outcomes.is_empty() {
            return Self {
                iou_thr,
                points: Vec::new(),
                envelope: Vec::new(),
            };
        }
        let tps: Vec<bool> = outcomes.iter().map(|o| o.1).collect();
        let pts = pr_points(&tps, num_gt);
        Self {
            iou_thr,
            envelope: envelope(&pts),
            points: pts
                .iter()
                .zip(outcomes)
                .map(|(&(r, p), &(s, _))| (r, p, s))
                .collect(),
        }
    }

    /// Rows `iou_thr,recall,precision,envelope,score`, no header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (&(r, p, s), &(_, e)) in self.points.iter().zip(&self.envelope) {
            writeln!(out, "{},{r},{p},{e},{s}", self.iou_thr).expect("write to String");
        }
        out
    }
}

pub const PR_CSV_HEADER: &str = "iou_thr,recall,precision,envelope,score\n";

/// Summary metrics; each is [`UNDEFINED`] when no ground truth defines it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub aps: f64,
    pub apm: f64,
    pub apl: f64,
    pub ar: f64,
    pub ars: f64,
    pub arm: f64,
    pub arl: f64,
    /// Category-pooled curves at the requested thresholds.
    pub pr_curves: Vec<PrCurve>,
}

impl EvalReport {
    pub fn metrics(&self) -> [(&'static str, f64); 10] {
        [
            ("AP", self.ap),
            ("AP50", self.ap50),
            ("AP75", self.ap75),
            ("APs", self.aps),
            ("APm", self.apm),
            ("APl", self.apl),
            ("AR", self.ar),
            ("ARs", self.ars),
            ("ARm", self.arm),
            ("ARl", self.arl),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, v) in self.metrics() {
            writeln!(out, "{name},{v}").expect("write to String");
        }
        out
    }

    pub fn pr_csv(&self) -> String {
        let mut out = String::from(PR_CSV_HEADER);
        for c in &self.pr_curves {
            out.push_str(&c.csv_rows());
        }
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<6} {:>8}", "metric", "value")?;
        for (name, v) in self.metrics() {
            if v == UNDEFINED {
                writeln!(f, "{name:<6} {:>8}", "n/a")?;
            } else {
                writeln!(f, "{name:<6} {v:>8.4}")?;
            }
        }
        Ok(())
    }
}

fn mean_defined(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.filter(|&v| v > UNDEFINED) {
        sum += v;
        n += 1;
    }
    if n == 0 {
        UNDEFINED
    } else {
        sum / n as f64
    }
}

/// Per-(image, category) boxes, detections score-sorted and truncated.
struct Cell {
    gts: Vec<BBox>,
    dets: Vec<BBox>,
    scores: Vec<f64>,
    ious: Vec<Vec<f64>>,
}

fn check_universe(gt: &AnnotationSet, det: &DetectionSet) -> Result<()> {
    gt.validate()?;
    det.validate()?;
    let cats: BTreeSet<u64> = gt.categories.iter().map(|c| c.id).collect();
    let images: BTreeSet<u64> = gt.images.iter().map(|i| i.id).collect();
    for a in &gt.annotations {
        if !cats.contains(&a.category_id) {
            return Err(Error::CategoryMismatch(format!(
                "ground-truth category {} is not declared",
                a.category_id
            )));
        }
    }
    for d in &det.detections {
        if !cats.contains(&d.category_id) {
            return Err(Error::CategoryMismatch(format!(
                "detection category {} is not in the ground truth",
                d.category_id
            )));
        }
        if !images.contains(&d.image_id) {
            return Err(Error::InvalidAnnotations(format!(
                "detection references unknown image {}",
                d.image_id
            )));
        }
    }
    Ok(())
}

/// Builds cells ordered by category id, then image id.
fn build_cells(gt: &AnnotationSet, det: &DetectionSet, max_dets: usize) -> Vec<(u64, Vec<Cell>)> {
    let mut image_ids: Vec<u64> = gt.images.iter().map(|i| i.id).collect();
    image_ids.sort_unstable();
    let mut cat_ids: Vec<u64> = gt.categories.iter().map(|c| c.id).collect();
    cat_ids.sort_unstable();
    cat_ids.dedup();
    let mut gt_by: BTreeMap<(u64, u64), Vec<BBox>> = BTreeMap::new();
    for a in &gt.annotations {
        gt_by.entry((a.category_id, a.image_id)).or_default().push(a.bbox);
    }
    let mut det_by: BTreeMap<(u64, u64), Vec<(BBox, f64)>> = BTreeMap::new();
    for d in &det.detections {
        det_by
            .entry((d.category_id, d.image_id))
            .or_default()
            .push((d.bbox, d.score));
    }
    cat_ids
        .iter()
        .map(|&k| {
            let cells = image_ids
                .par_iter()
                .map(|&img| {
                    let gts = gt_by.get(&(k, img)).cloned().unwrap_or_default();
                    let raw = det_by.get(&(k, img)).map(Vec::as_slice).unwrap_or(&[]);
                    let mut order = score_order(raw.iter().map(|d| d.1));
                    order.truncate(max_dets);
                    let dets: Vec<BBox> = order.iter().map(|&i| raw[i].0).collect();
                    let scores: Vec<f64> = order.iter().map(|&i| raw[i].1).collect();
                    let ious = iou_matrix(&dets, &gts);
                    Cell {
                        gts,
                        dets,
                        scores,
                        ious,
                    }
                })
                .collect();
            (k, cells)
        })
        .collect()
}

/// Full COCO-style summary with the default parameters.
pub fn coco_summary(gt: &AnnotationSet, det: &DetectionSet) -> Result<EvalReport> {
    coco_summary_with(gt, det, &EvalParams::default())
}

pub fn coco_summary_with(
    gt: &AnnotationSet,
    det: &DetectionSet,
    params: &EvalParams,
) -> Result<EvalReport> {
    check_universe(gt, det)?;
    let cells = build_cells(gt, det, params.max_dets);
    let thrs = &params.iou_thresholds;
    // [area][category] -> per-threshold (ap, recall)
    let mut per_area: Vec<Vec<Vec<(f64, f64)>>> = Vec::new();
    for area in AreaRange::ALL {
        let mut per_cat = Vec::new();
        for (_, cat_cells) in &cells {
            let evals: Vec<ImageEval> = cat_cells
                .par_iter()
                .map(|c| evaluate_image(&c.gts, &c.dets, &c.scores, &c.ious, area, thrs))
                .collect();
            let refs: Vec<&ImageEval> = evals.iter().collect();
            let (pooled, num_gt) = pool(&refs, thrs.len());
            per_cat.push(
                pooled
                    .iter()
                    .map(|o| {
                        let tps: Vec<bool> = o.iter().map(|x| x.1).collect();
                        ap_and_recall(&tps, num_gt)
                    })
                    .collect(),
            );
        }
        per_area.push(per_cat);
    }
    let ap_at = |a: usize, t: Option<usize>| {
        mean_defined(per_area[a].iter().flat_map(|cat| {
            cat.iter()
                .enumerate()
                .filter(move |(i, _)| t.is_none_or(|t| *i == t))
                .map(|(_, v)| v.0)
        }))
    };
    let ar_at = |a: usize| mean_defined(per_area[a].iter().flat_map(|cat| cat.iter().map(|v| v.1)));
    let thr_index = |target: f64| thrs.iter().position(|t| (t - target).abs() < 1e-9);
    let pick = |target: f64| thr_index(target).map_or(UNDEFINED, |i| ap_at(0, Some(i)));
    let pr_curves = params
        .pr_thresholds
        .iter()
        .map(|&thr| curve_from_cells(&cells, thr))
        .collect();
    Ok(EvalReport {
        ap: ap_at(0, None),
        ap50: pick(0.5),
        ap75: pick(0.75),
        aps: ap_at(1, None),
        apm: ap_at(2, None),
        apl: ap_at(3, None),
        ar: ar_at(0),
        ars: ar_at(1),
        arm: ar_at(2),
        arl: ar_at(3),
        pr_curves,
    })
}

fn curve_from_cells(cells: &[(u64, Vec<Cell>)], thr: f64) -> PrCurve {
    let evals: Vec<ImageEval> = cells
        .iter()
        .flat_map(|(_, cs)| cs.iter())
        .map(|c| evaluate_image(&c.gts, &c.dets, &c.scores, &c.ious, AreaRange::All, &[thr]))
        .collect();
    let refs: Vec<&ImageEval> = evals.iter().collect();
    let (pooled, num_gt) = pool(&refs, 1);
    PrCurve::from_outcomes(thr, &pooled[0], num_gt)
}

/// Category-pooled precision–recall curve at one IoU threshold.
pub fn pr_curve(gt: &AnnotationSet, det: &DetectionSet, iou_thr: f64) -> Result<PrCurve> {
    check_universe(gt, det)?;
    let cells = build_cells(gt, det, EvalParams::default().max_dets);
    Ok(curve_from_cells(&cells, iou_thr))
}
