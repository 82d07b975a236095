//! Oracles and fixtures shared by the integration and acceptance tests.
//! Everything here is written independently of the library internals.
#![allow(dead_code)]

use polarkit::dataset::{Annotation, AnnotationSet, BBox, Category, ImageInfo};
use polarkit::eval::{Detection, DetectionSet};
use polarkit::mosaic::RawMosaicImage;
use polarkit::plane::Plane;

pub fn bbox(x: f64, y: f64, w: f64, h: f64) -> BBox {
    BBox::new(x, y, w, h)
}

/// Saturation oracle: a quad is valid unless one of its four codes is at
/// full scale.
pub fn brute_force_saturation(raw: &RawMosaicImage) -> Plane<bool> {
    let full = raw.max_code();
    let (w, h) = (raw.width() / 2, raw.height() / 2);
    let mut out = Plane::new(w, h, true);
    for y in 0..raw.height() {
        for x in 0..raw.width() {
            if raw.get(x, y) == full {
                out.set(x / 2, y / 2, false);
            }
        }
    }
    out
}

fn overlap(a: &BBox, b: &BBox) -> f64 {
    let x0 = a.x.max(b.x);
    let y0 = a.y.max(b.y);
    let x1 = (a.x + a.w).min(b.x + b.w);
    let y1 = (a.y + a.h).min(b.y + b.h);
    if x1 <= x0 || y1 <= y0 {
        return 0.0;
    }
    let i = (x1 - x0) * (y1 - y0);
    i / (a.w * a.h + b.w * b.h - i)
}

fn in_range(area: f64, range: usize) -> bool {
    match range {
        0 => true,
        1 => area < 1024.0,
        2 => (1024.0..9216.0).contains(&area),
        _ => area >= 9216.0,
    }
}

/// Brute-force AP: at each recall level r the precision is the best
/// precision among all cut-offs whose recall reaches r.
fn brute_ap(outcomes: &[bool], num_gt: usize) -> (f64, f64) {
    let mut rec = Vec::new();
    let mut prec = Vec::new();
    for cut in 1..=outcomes.len() {
        let tp = outcomes[..cut].iter().filter(|&&t| t).count() as f64;
        rec.push(tp / num_gt as f64);
        prec.push(tp / cut as f64);
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let best = rec
            .iter()
            .zip(&prec)
            .filter(|(rc, _)| **rc >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += best;
    }
    (sum / 101.0, rec.last().copied().unwrap_or(0.0))
}

/// Reference COCO-protocol evaluation. Returns
/// `[AP, AP50, AP75, APs, APm, APl, AR, ARs, ARm, ARl]` with `-1` for
/// undefined entries.
pub fn reference_coco(gt: &AnnotationSet, det: &DetectionSet) -> [f64; 10] {
    let thresholds: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
    let mut cats: Vec<u64> = gt.categories.iter().map(|c| c.id).collect();
    cats.sort();
    let mut images: Vec<u64> = gt.images.iter().map(|i| i.id).collect();
    images.sort();
    // table[range][cat][thr] = (ap, recall)
    let mut table = vec![vec![vec![(-1.0, -1.0); thresholds.len()]; cats.len()]; 4];
    #[allow(clippy::needless_range_loop)]
    for range in 0..4 {
        for (ci, &cat) in cats.iter().enumerate() {
            for (ti, &thr) in thresholds.iter().enumerate() {
                let mut pooled: Vec<(f64, bool)> = Vec::new();
                let mut num_gt = 0;
                for &img in &images {
                    let gts: Vec<BBox> = gt
                        .annotations
                        .iter()
                        .filter(|a| a.image_id == img && a.category_id == cat)
                        .map(|a| a.bbox)
                        .collect();
                    let mut dets: Vec<(BBox, f64)> = det
                        .detections
                        .iter()
                        .filter(|d| d.image_id == img && d.category_id == cat)
                        .map(|d| (d.bbox, d.score))
                        .collect();
                    // insertion sort keeps input order among equal scores
                    for i in 1..dets.len() {
                        let mut j = i;
                        while j > 0 && dets[j - 1].1 < dets[j].1 {
                            dets.swap(j - 1, j);
                            j -= 1;
                        }
                    }
                    dets.truncate(100);
                    let ignored: Vec<bool> = gts.iter().map(|g| !in_range(g.w * g.h, range)).collect();
                    num_gt += ignored.iter().filter(|i| !**i).count();
                    let mut used = vec![false; gts.len()];
                    for (d, score) in &dets {
                        // regular ground truth first, ignored only as a fallback
                        let mut pick = None;
                        for want_ignored in [false, true] {
                            let mut best = thr;
                            for g in 0..gts.len() {
                                if used[g] || ignored[g] != want_ignored {
                                    continue;
                                }
                                let v = overlap(d, &gts[g]);
                                if v >= best && pick.is_none_or(|(_, bv)| v > bv) {
                                    best = v;
                                    pick = Some((g, v));
                                }
                            }
                            if pick.is_some() {
                                break;
                            }
                        }
                        match pick {
                            Some((g, _)) => {
                                used[g] = true;
                                if !ignored[g] {
                                    pooled.push((*score, true));
                                }
                            }
                            None => {
                                if in_range(d.w * d.h, range) {
                                    pooled.push((*score, false));
                                }
                            }
                        }
                    }
                }
                if num_gt == 0 {
                    continue;
                }
                for i in 1..pooled.len() {
                    let mut j = i;
                    while j > 0 && pooled[j - 1].0 < pooled[j].0 {
                        pooled.swap(j - 1, j);
                        j -= 1;
                    }
                }
                let outcomes: Vec<bool> = pooled.iter().map(|p| p.1).collect();
                table[range][ci][ti] = brute_ap(&outcomes, num_gt);
            }
        }
    }
    let mean = |vals: Vec<f64>| {
        let v: Vec<f64> = vals.into_iter().filter(|&x| x > -1.0).collect();
        if v.is_empty() {
            -1.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let ap = |range: usize, thr: Option<usize>| {
        mean(
            table[range]
                .iter()
                .flat_map(|c| c.iter().enumerate())
                .filter(|(t, _)| thr.is_none_or(|x| x == *t))
                .map(|(_, v)| v.0)
                .collect(),
        )
    };
    let ar = |range: usize| mean(table[range].iter().flatten().map(|v| v.1).collect());
    [
        ap(0, None),
        ap(0, Some(0)),
        ap(0, Some(5)),
        ap(1, None),
        ap(2, None),
        ap(3, None),
        ar(0),
        ar(1),
        ar(2),
        ar(3),
    ]
}

fn images(n: u64) -> Vec<ImageInfo> {
    (1..=n)
        .map(|id| ImageInfo {
            id,
            file_name: format!("img_{id}.png"),
            width: Some(640),
            height: Some(480),
        })
        .collect()
}

fn det(image_id: u64, category_id: u64, b: BBox, score: f64) -> Detection {
    Detection {
        image_id,
        category_id,
        bbox: b,
        score,
    }
}

/// Three images, two categories, boxes in every size bucket, duplicates,
/// misses and false positives.
pub fn three_image_fixture() -> (AnnotationSet, DetectionSet) {
    let gt_boxes = [
        (1, 1, bbox(10.0, 10.0, 20.0, 20.0)),
        (1, 1, bbox(100.0, 100.0, 50.0, 50.0)),
        (1, 1, bbox(300.0, 200.0, 120.0, 110.0)),
        (2, 1, bbox(50.0, 50.0, 10.0, 10.0)),
        (2, 1, bbox(200.0, 100.0, 100.0, 100.0)),
        (3, 1, bbox(20.0, 30.0, 60.0, 40.0)),
        (3, 2, bbox(400.0, 50.0, 80.0, 60.0)),
    ];
    let gt = AnnotationSet {
        images: images(3),
        annotations: gt_boxes
            .iter()
            .enumerate()
            .map(|(i, &(image_id, category_id, b))| Annotation {
                id: i as u64 + 1,
                image_id,
                bbox: b,
                category_id,
            })
            .collect(),
        categories: vec![
            Category { id: 1, name: "bottle".into() },
            Category { id: 2, name: "can".into() },
        ],
    };
    let dets = vec![
        det(1, 1, bbox(11.0, 11.0, 20.0, 20.0), 0.9),
        det(1, 1, bbox(100.0, 105.0, 50.0, 50.0), 0.8),
        det(1, 1, bbox(310.0, 200.0, 120.0, 110.0), 0.6),
        det(1, 1, bbox(400.0, 400.0, 30.0, 30.0), 0.7),
        det(1, 1, bbox(12.0, 10.0, 20.0, 20.0), 0.3),
        det(2, 1, bbox(52.0, 50.0, 10.0, 10.0), 0.95),
        det(2, 1, bbox(205.0, 110.0, 100.0, 90.0), 0.5),
        det(2, 1, bbox(0.0, 0.0, 40.0, 40.0), 0.4),
        det(3, 1, bbox(500.0, 300.0, 8.0, 8.0), 0.2),
        det(1, 2, bbox(400.0, 50.0, 80.0, 60.0), 0.65),
        det(3, 2, bbox(405.0, 55.0, 80.0, 60.0), 0.55),
    ];
    (gt, DetectionSet::new(dets).expect("valid detections"))
}

/// Two ground-truth boxes, one found: AP at IoU 0.5 is 51/101.
pub fn half_recall_fixture() -> (AnnotationSet, DetectionSet) {
    let gt = AnnotationSet {
        images: images(3),
        annotations: vec![
            Annotation {
                id: 1,
                image_id: 1,
                bbox: bbox(10.0, 10.0, 40.0, 40.0),
                category_id: 1,
            },
            Annotation {
                id: 2,
                image_id: 2,
                bbox: bbox(100.0, 100.0, 40.0, 40.0),
                category_id: 1,
            },
        ],
        categories: vec![Category { id: 1, name: "bottle".into() }],
    };
    let dets = vec![det(1, 1, bbox(10.0, 10.0, 40.0, 40.0), 0.8)];
    (gt, DetectionSet::new(dets).expect("valid detections"))
}
