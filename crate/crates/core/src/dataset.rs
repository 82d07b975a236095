//! Detection labels in COCO JSON and YOLO text form, split lists, and box
//! statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `x, y, w, h` in pixels; serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<[f64; 4]> for BBox {
    fn from(v: [f64; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center_y(&self) -> f64 {
        self.y + self.h / 2.0
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    /// Intersection with `[0, width] × [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> BBox {
        let x0 = self.x.clamp(0.0, width);
        let y0 = self.y.clamp(0.0, height);
        let x1 = (self.x + self.w).clamp(0.0, width);
        let y1 = (self.y + self.h).clamp(0.0, height);
        BBox::new(x0, y0, x1 - x0, y1 - y0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub file_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default)]
    pub id: u64,
    pub image_id: u64,
    pub bbox: BBox,
    pub category_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
}

/// Ground-truth boxes over a set of images.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
}

impl AnnotationSet {
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for img in &self.images {
            if !ids.insert(img.id) {
                return Err(Error::InvalidAnnotations(format!(
                    "duplicate image id {}",
                    img.id
                )));
            }
        }
        for ann in &self.annotations {
            if !ids.contains(&ann.image_id) {
                return Err(Error::InvalidAnnotations(format!(
                    "annotation {} references missing image {}",
                    ann.id, ann.image_id
                )));
            }
            if !ann.bbox.is_valid() {
                return Err(Error::InvalidAnnotations(format!(
                    "annotation {} has non-positive bbox {:?}",
                    ann.id, ann.bbox
                )));
            }
        }
        Ok(())
    }

    pub fn image_by_name(&self, name: &str) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.file_name == name)
    }

    /// Annotations grouped by image id.
    pub fn by_image(&self) -> HashMap<u64, Vec<&Annotation>> {
        let mut map: HashMap<u64, Vec<&Annotation>> = HashMap::new();
        for a in &self.annotations {
            map.entry(a.image_id).or_default().push(a);
        }
        map
    }

    /// Keeps only images accepted by `keep`, with their annotations.
    pub fn filter_images(&self, keep: impl Fn(&ImageInfo) -> bool) -> AnnotationSet {
        let images: Vec<ImageInfo> = self.images.iter().filter(|i| keep(i)).cloned().collect();
        let ids: HashSet<u64> = images.iter().map(|i| i.id).collect();
        AnnotationSet {
            images,
            annotations: self
                .annotations
                .iter()
                .filter(|a| ids.contains(&a.image_id))
                .cloned()
                .collect(),
            categories: self.categories.clone(),
        }
    }

    /// Clips every box to its image; boxes left with zero area are dropped.
    pub fn clamp_boxes(&self) -> AnnotationSet {
        let dims: HashMap<u64, (Option<u32>, Option<u32>)> = self
            .images
            .iter()
            .map(|i| (i.id, (i.width, i.height)))
            .collect();
        let annotations = self
            .annotations
            .iter()
            .filter_map(|a| {
                let bbox = match dims.get(&a.image_id) {
                    Some((Some(w), Some(h))) => a.bbox.clamp_to(*w as f64, *h as f64),
                    _ => a.bbox,
                };
                bbox.is_valid().then(|| Annotation { bbox, ..a.clone() })
            })
            .collect();
        AnnotationSet {
            annotations,
            ..self.clone()
        }
    }
}

/// Parses a COCO-style JSON document. Unknown fields are ignored.
pub fn parse_coco(json: &str) -> Result<AnnotationSet> {
    let set: AnnotationSet = serde_json::from_str(json)?;
    set.validate()?;
    Ok(set)
}

pub fn to_coco_json(set: &AnnotationSet) -> String {
    serde_json::to_string_pretty(set).expect("annotation set is plain data")
}

/// One row of the YOLO image-size index: `file_name,width,height[,id]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeEntry {
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    pub id: Option<u64>,
}

/// Parses the size index. A first row whose width is not numeric is taken
/// as a header and skipped; blank lines are ignored.
pub fn parse_size_index(text: &str) -> Result<Vec<SizeEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |message: String| Error::LabelLine {
            file: "size index".into(),
            line: n + 1,
            message,
        };
        if fields.len() != 3 && fields.len() != 4 {
            return Err(err(format!("expected 3 or 4 fields, got {}", fields.len())));
        }
        let width = match fields[1].parse::<u32>() {
            Ok(w) => w,
            Err(_) if out.is_empty() && n == 0 => continue,
            Err(_) => return Err(err(format!("bad width '{}'", fields[1]))),
        };
        let height = fields[2]
            .parse::<u32>()
            .map_err(|_| err(format!("bad height '{}'", fields[2])))?;
        let id = fields
            .get(3)
            .map(|s| s.parse::<u64>().map_err(|_| err(format!("bad id '{s}'"))))
            .transpose()?;
        out.push(SizeEntry {
            file_name: fields[0].to_string(),
            width,
            height,
            id,
        });
    }
    Ok(out)
}

/// Parses one YOLO label file (`class cx cy w h`, normalized) into pixel
/// boxes for a `width × height` image.
pub fn parse_yolo_labels(
    text: &str,
    file: &str,
    width: u32,
    height: u32,
) -> Result<Vec<(usize, BBox)>> {
    let (fw, fh) = (width as f64, height as f64);
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::LabelLine {
            file: file.to_string(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", fields.len())));
        }
        let class = fields[0]
            .parse::<usize>()
            .map_err(|_| err(format!("bad class '{}'", fields[0])))?;
        let mut v = [0.0f64; 4];
        for (slot, tok) in v.iter_mut().zip(&fields[1..]) {
            let x: f64 = tok.parse().map_err(|_| err(format!("bad number '{tok}'")))?;
            if !(0.0..=1.0).contains(&x) {
                return Err(err(format!("value {x} outside [0,1]")));
            }
            *slot = x;
        }
        let [cx, cy, w, h] = v;
        if w == 0.0 || h == 0.0 {
            return Err(err("zero-size box".into()));
        }
        out.push((
            class,
            BBox::new((cx - w / 2.0) * fw, (cy - h / 2.0) * fh, w * fw, h * fh),
        ));
    }
    Ok(out)
}

fn label_file_name(file_name: &str) -> String {
    let stem = Path::new(file_name)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| file_name.to_string());
    format!("{stem}.txt")
}

/// Assembles an annotation set from a size index and per-image label text.
///
/// Images are ordered by file name; ids come from the index or are
/// assigned 1, 2, … in that order. YOLO class `k` maps to `categories[k]`.
/// `labels` returns `None` for images without a label file, which are
/// treated as having no boxes.
pub fn assemble_yolo(
    index: &[SizeEntry],
    categories: &[Category],
    labels: impl Fn(&str) -> Result<Option<String>>,
) -> Result<AnnotationSet> {
    let mut entries: Vec<&SizeEntry> = index.iter().collect();
    entries.sort_by(|a, b| a.file_name.cmp(&b.file_name));
    let mut set = AnnotationSet {
        categories: categories.to_vec(),
        ..Default::default()
    };
    for (k, e) in entries.into_iter().enumerate() {
        let id = e.id.unwrap_or(k as u64 + 1);
        set.images.push(ImageInfo {
            id,
            file_name: e.file_name.clone(),
            width: Some(e.width),
            height: Some(e.height),
        });
        let label_name = label_file_name(&e.file_name);
        if let Some(text) = labels(&label_name)? {
            for (class, bbox) in parse_yolo_labels(&text, &label_name, e.width, e.height)? {
                let cat = categories.get(class).ok_or_else(|| {
                    Error::InvalidAnnotations(format!(
                        "{label_name}: class {class} has no category ({} known)",
                        categories.len()
                    ))
                })?;
                set.annotations.push(Annotation {
                    id: set.annotations.len() as u64 + 1,
                    image_id: id,
                    bbox,
                    category_id: cat.id,
                });
            }
        }
    }
    set.validate()?;
    Ok(set)
}

/// Reads `classes.txt`-style names (one per line); class `k` gets id `k`.
pub fn parse_class_names(text: &str) -> Vec<Category> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(k, name)| Category {
            id: k as u64,
            name: name.to_string(),
        })
        .collect()
}

/// Reads YOLO labels from `labels_dir` (`<stem>.txt` per image).
pub fn parse_yolo(
    labels_dir: &Path,
    size_index: &Path,
    categories: &[Category],
) -> Result<AnnotationSet> {
    let index_text =
        std::fs::read_to_string(size_index).map_err(|e| Error::io(size_index, e))?;
    let index = parse_size_index(&index_text)?;
    assemble_yolo(&index, categories, |name| {
        let path = labels_dir.join(name);
        match std::fs::read_to_string(&path) {
            Ok(t) => Ok(Some(t)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    })
}

/// YOLO rendition of an annotation set.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct YoloExport {
    /// `file_name,width,height,id` rows.
    pub size_index: String,
    /// Category names ordered by YOLO class index.
    pub classes: String,
    /// `(label file name, contents)` for every image, including empty ones.
    pub labels: Vec<(String, String)>,
}

/// Converts to YOLO. Classes are the categories sorted by id; boxes are
/// clipped to their image first.
pub fn to_yolo(set: &AnnotationSet) -> Result<YoloExport> {
    set.validate()?;
    let mut cats = set.categories.clone();
    cats.sort_by_key(|c| c.id);
    let class_of: HashMap<u64, usize> = cats.iter().enumerate().map(|(k, c)| (c.id, k)).collect();
    let by_image = set.by_image();
    let mut images: Vec<&ImageInfo> = set.images.iter().collect();
    images.sort_by(|a, b| a.file_name.cmp(&b.file_name));
    let mut out = YoloExport::default();
    for c in &cats {
        writeln!(out.classes, "{}", c.name).expect("write to String");
    }
    for img in images {
        let (w, h) = match (img.width, img.height) {
            (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
            _ => {
                return Err(Error::InvalidAnnotations(format!(
                    "image '{}' has no recorded dimensions",
                    img.file_name
                )))
            }
        };
        writeln!(out.size_index, "{},{},{},{}", img.file_name, w, h, img.id)
            .expect("write to String");
        let (fw, fh) = (w as f64, h as f64);
        let mut text = String::new();
        for a in by_image.get(&img.id).into_iter().flatten() {
            let class = class_of.get(&a.category_id).ok_or_else(|| {
                Error::InvalidAnnotations(format!("unknown category {}", a.category_id))
            })?;
            let b = a.bbox.clamp_to(fw, fh);
            if !b.is_valid() {
                continue;
            }
            writeln!(
                text,
                "{} {:.6} {:.6} {:.6} {:.6}",
                class,
                (b.x + b.w / 2.0) / fw,
                (b.y + b.h / 2.0) / fh,
                b.w / fw,
                b.h / fh
            )
            .expect("write to String");
        }
        out.labels.push((label_file_name(&img.file_name), text));
    }
    Ok(out)
}

/// Writes `sizes.csv`, `classes.txt` and one label file per image into `dir`.
pub fn write_yolo(set: &AnnotationSet, dir: &Path) -> Result<()> {
    let export = to_yolo(set)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write("sizes.csv", &export.size_index)?;
    write("classes.txt", &export.classes)?;
    for (name, text) in &export.labels {
        write(name, text)?;
    }
    Ok(())
}

/// File-name lists for the three partitions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Reads a split list: one file name per line, blank lines and `#`
/// comments skipped.
pub fn parse_split_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSets {
    pub train: AnnotationSet,
    pub val: AnnotationSet,
    pub test: AnnotationSet,
}

impl SplitSets {
    /// `(images, annotations)` per partition.
    pub fn counts(&self) -> [(usize, usize); 3] {
        [&self.train, &self.val, &self.test].map(|s| (s.images.len(), s.annotations.len()))
    }
}

/// Partitions `set` by file name.
pub fn apply_split(set: &AnnotationSet, lists: &SplitLists) -> Result<SplitSets> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (k, list) in [&lists.train, &lists.val, &lists.test].into_iter().enumerate() {
        for name in list {
            if let Some(&prev) = seen.get(name.as_str()) {
                if prev != k {
                    return Err(Error::SplitOverlap(name.clone()));
                }
            }
            seen.insert(name, k);
        }
    }
    let known: HashSet<&str> = set.images.iter().map(|i| i.file_name.as_str()).collect();
    for list in [&lists.train, &lists.val, &lists.test] {
        if let Some(missing) = list.iter().find(|n| !known.contains(n.as_str())) {
            return Err(Error::SplitUnknownName(missing.clone()));
        }
    }
    let part = |k: usize| set.filter_images(|i| seen.get(i.file_name.as_str()) == Some(&k));
    Ok(SplitSets {
        train: part(0),
        val: part(1),
        test: part(2),
    })
}

/// COCO size-bucket edges on box area (pixels²).
pub const SMALL_MAX_AREA: f64 = 32.0 * 32.0;
pub const MEDIUM_MAX_AREA: f64 = 96.0 * 96.0;
/// Boxes below this area are the hardest small targets.
pub const TINY_MAX_AREA: f64 = 14.0 * 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    /// Half-open buckets: `[0, 32²)`, `[32², 96²)`, `[96², ∞)`.
    pub fn of_area(area: f64) -> SizeBucket {
        if area < SMALL_MAX_AREA {
            SizeBucket::Small
        } else if area < MEDIUM_MAX_AREA {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

/// Number of log₂ area bins; bin `k` covers `[2^k, 2^(k+1))`.
pub const AREA_BINS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub total: usize,
    /// Counts per log₂ area bin; areas below 2 land in bin 0, areas at or
    /// above `2^AREA_BINS` in the last bin.
    pub area_histogram: [usize; AREA_BINS],
    pub small: usize,
    pub medium: usize,
    pub large: usize,
    /// Boxes smaller than 14² pixels.
    pub tiny: usize,
    /// Pearson correlation of box area with vertical box center; `None` when
    /// either variable is constant.
    pub pearson_area_y: Option<f64>,
    /// Labels per image → number of images.
    pub labels_per_image: BTreeMap<usize, usize>,
}

fn area_bin(area: f64) -> usize {
    if area < 2.0 {
        0
    } else {
        (area.log2().floor() as usize).min(AREA_BINS - 1)
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn box_stats(set: &AnnotationSet) -> Result<BoxStats> {
    if set.annotations.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut stats = BoxStats {
        total: set.annotations.len(),
        area_histogram: [0; AREA_BINS],
        small: 0,
        medium: 0,
        large: 0,
        tiny: 0,
        pearson_area_y: None,
        labels_per_image: BTreeMap::new(),
    };
    let (mut areas, mut ys) = (Vec::new(), Vec::new());
    for a in &set.annotations {
        let area = a.bbox.area();
        stats.area_histogram[area_bin(area)] += 1;
        match SizeBucket::of_area(area) {
            SizeBucket::Small => stats.small += 1,
            SizeBucket::Medium => stats.medium += 1,
            SizeBucket::Large => stats.large += 1,
        }
        if area < TINY_MAX_AREA {
            stats.tiny += 1;
        }
        areas.push(area);
        ys.push(a.bbox.center_y());
    }
    stats.pearson_area_y = pearson(&areas, &ys);
    let by_image = set.by_image();
    for img in &set.images {
        let n = by_image.get(&img.id).map_or(0, Vec::len);
        *stats.labels_per_image.entry(n).or_default() += 1;
    }
    Ok(stats)
}

impl BoxStats {
    /// Long-format CSV: `section,key,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("section,key,value\n");
        let mut row = |s: &str, k: &str, v: String| {
            writeln!(out, "{s},{k},{v}").expect("write to String");
        };
        row("summary", "total", self.total.to_string());
        row("summary", "small", self.small.to_string());
        row("summary", "medium", self.medium.to_string());
        row("summary", "large", self.large.to_string());
        row("summary", "below_14sq", self.tiny.to_string());
        row(
            "summary",
            "pearson_area_ycenter",
            self.pearson_area_y.map_or("nan".into(), |r| format!("{r}")),
        );
        for (k, c) in self.area_histogram.iter().enumerate() {
            row("area_hist", &format!("2^{k}"), c.to_string());
        }
        for (n, c) in &self.labels_per_image {
            row("labels_per_image", &n.to_string(), c.to_string());
        }
        out
    }
}
