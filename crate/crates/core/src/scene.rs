//! Scene-graph data model and structured visual understanding.
//!
//! A validated [`SceneGraph`] holds object instances (category + bounding box)
//! and predicate-labeled relationships between them. [`build_structured_scene`]
//! reduces it to per-category summaries: instance count, occupied cells of a
//! 3x3 grid, and relationship phrases. That structured representation is what
//! gets chunked and indexed downstream.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue, ValidationReport};

/// Characters that would collide with the chunk grammar if they appeared
/// inside a category or predicate label.
pub const RESERVED_LABEL_CHARS: &[char] = &[',', ':', '[', ']', '(', ')', '\n'];

/// Lowercase, trim, and collapse internal whitespace.
pub fn canonical_label(raw: &str) -> String {
    raw.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

fn reserved_char(label: &str) -> Option<char> {
    label.chars().find(|c| RESERVED_LABEL_CHARS.contains(c))
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Axis-aligned box in image pixel coordinates (origin top-left, y downward).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    /// Builds a box, enforcing the type invariants: finite, non-negative,
    /// min <= max on both axes.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        let mut report = ValidationReport::default();
        b.check(0, &mut report);
        if report.is_empty() {
            Ok(b)
        } else {
            Err(Error::Validation(report))
        }
    }

    fn check(&self, id: u64, report: &mut ValidationReport) {
        let coords = [
            ("x_min", self.x_min),
            ("y_min", self.y_min),
            ("x_max", self.x_max),
            ("y_max", self.y_max),
        ];
        if coords.iter().any(|(_, v)| !v.is_finite()) {
            report.push(ValidationIssue::NonFiniteBbox { id });
            return;
        }
        for (name, v) in coords {
            if v < 0.0 {
                report.push(ValidationIssue::NegativeCoordinate {
                    id,
                    detail: format!("{name} = {v}"),
                });
            }
        }
        if self.x_min > self.x_max {
            report.push(ValidationIssue::InvertedBbox {
                id,
                detail: format!("x_min {} > x_max {}", self.x_min, self.x_max),
            });
        }
        if self.y_min > self.y_max {
            report.push(ValidationIssue::InvertedBbox {
                id,
                detail: format!("y_min {} > y_max {}", self.y_min, self.y_max),
            });
        }
    }
}

/// Center point of a bounding box: the arithmetic mean of opposite corners.
pub fn bbox_center(b: &BoundingBox) -> (f64, f64) {
    ((b.x_min + b.x_max) / 2.0, (b.y_min + b.y_max) / 2.0)
}

// ---------------------------------------------------------------------------
// 3x3 grid
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GridRow {
    Top,
    Center,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GridCol {
    Left,
    Center,
    Right,
}

/// One of nine grid regions. `Ord` follows row-major order, so sorted cells
/// read top-left .. bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridCell {
    pub row: GridRow,
    pub col: GridCol,
}

impl GridRow {
    fn name(self) -> &'static str {
        match self {
            GridRow::Top => "top",
            GridRow::Center => "center",
            GridRow::Bottom => "bottom",
        }
    }
}

impl GridCol {
    fn name(self) -> &'static str {
        match self {
            GridCol::Left => "left",
            GridCol::Center => "center",
            GridCol::Right => "right",
        }
    }
}

impl GridCell {
    pub const fn new(row: GridRow, col: GridCol) -> Self {
        GridCell { row, col }
    }

    /// Canonical rendering: `row-col`, except the middle cell which renders
    /// as plain `center`.
    pub fn name(&self) -> String {
        if self.row == GridRow::Center && self.col == GridCol::Center {
            "center".to_string()
        } else {
            format!("{}-{}", self.row.name(), self.col.name())
        }
    }

    /// Parses a canonical cell name back to a cell. Returns `None` for
    /// anything outside the nine-name vocabulary.
    pub fn parse(name: &str) -> Option<GridCell> {
        let name = name.trim();
        if name.eq_ignore_ascii_case("center") {
            return Some(GridCell::new(GridRow::Center, GridCol::Center));
        }
        let (row, col) = name.split_once('-')?;
        let row = match row.trim().to_ascii_lowercase().as_str() {
            "top" => GridRow::Top,
            "center" => GridRow::Center,
            "bottom" => GridRow::Bottom,
            _ => return None,
        };
        let col = match col.trim().to_ascii_lowercase().as_str() {
            "left" => GridCol::Left,
            "center" => GridCol::Center,
            "right" => GridCol::Right,
            _ => return None,
        };
        Some(GridCell::new(row, col))
    }

    pub fn all() -> impl Iterator<Item = GridCell> {
        [GridRow::Top, GridRow::Center, GridRow::Bottom]
            .into_iter()
            .flat_map(|row| {
                [GridCol::Left, GridCol::Center, GridCol::Right]
                    .into_iter()
                    .map(move |col| GridCell::new(row, col))
            })
    }
}

impl std::fmt::Display for GridCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

impl Serialize for GridCell {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for GridCell {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        GridCell::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown grid cell {s:?}")))
    }
}

/// Maps a point to its 3x3 grid cell using half-open thirds; the right and
/// bottom image edges fold into the last bin.
pub fn grid_cell(point: (f64, f64), width: u32, height: u32) -> Result<GridCell> {
    let (x, y) = point;
    let (w, h) = (width as f64, height as f64);
    let mut report = ValidationReport::default();
    if !(0.0..=w).contains(&x) || !x.is_finite() {
        report.push(ValidationIssue::PointOutOfBounds {
            coordinate: "x",
            value: x,
            limit: w,
        });
    }
    if !(0.0..=h).contains(&y) || !y.is_finite() {
        report.push(ValidationIssue::PointOutOfBounds {
            coordinate: "y",
            value: y,
            limit: h,
        });
    }
    if !report.is_empty() {
        return Err(Error::Validation(report));
    }
    let col_idx = ((3.0 * x / w).floor() as usize).min(2);
    let row_idx = ((3.0 * y / h).floor() as usize).min(2);
    let col = [GridCol::Left, GridCol::Center, GridCol::Right][col_idx];
    let row = [GridRow::Top, GridRow::Center, GridRow::Bottom][row_idx];
    Ok(GridCell::new(row, col))
}

// ---------------------------------------------------------------------------
// Scene graph
// ---------------------------------------------------------------------------

/// One detected object instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: u64,
    pub category: String,
    pub bbox: BoundingBox,
}

/// A predicate-labeled relationship between two object instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relationship {
    pub subject_id: u64,
    pub predicate: String,
    pub object_id: u64,
}

/// Unvalidated scene record as parsed from the canonical file schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSceneGraph {
    pub image_id: String,
    pub width: i64,
    pub height: i64,
    #[serde(default)]
    pub objects: Vec<RawObject>,
    #[serde(default)]
    pub relationships: Vec<RawRelationship>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawObject {
    pub id: u64,
    pub category: String,
    /// `[x_min, y_min, x_max, y_max]` in image pixels.
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRelationship {
    pub subject_id: u64,
    pub predicate: String,
    pub object_id: u64,
}

/// A validated per-image scene graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneGraph {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectInstance>,
    pub relationships: Vec<Relationship>,
}

/// Validates a parsed ingestion record, returning either a scene graph that
/// satisfies every type invariant or the complete list of violations.
///
/// Category and predicate labels are canonicalized (lowercase, trimmed,
/// whitespace collapsed) on the way in.
pub fn validate_scene_graph(raw: &RawSceneGraph) -> Result<SceneGraph> {
    let mut report = ValidationReport::default();

    if raw.width <= 0 || raw.height <= 0 {
        report.push(ValidationIssue::NonPositiveDimensions {
            width: raw.width,
            height: raw.height,
        });
    }
    let (w, h) = (raw.width.max(0) as f64, raw.height.max(0) as f64);

    let mut seen_ids = HashSet::new();
    let mut objects = Vec::with_capacity(raw.objects.len());
    for o in &raw.objects {
        if !seen_ids.insert(o.id) {
            report.push(ValidationIssue::DuplicateObjectId { id: o.id });
        }
        let category = canonical_label(&o.category);
        if category.is_empty() {
            report.push(ValidationIssue::EmptyCategory { id: o.id });
        } else if let Some(ch) = reserved_char(&category) {
            report.push(ValidationIssue::ReservedLabelCharacter { id: o.id, ch });
        }
        let bbox = BoundingBox {
            x_min: o.bbox[0],
            y_min: o.bbox[1],
            x_max: o.bbox[2],
            y_max: o.bbox[3],
        };
        bbox.check(o.id, &mut report);
        if bbox.x_max > w || bbox.y_max > h {
            report.push(ValidationIssue::OutOfBounds {
                id: o.id,
                detail: format!(
                    "bbox extends to ({}, {}) beyond {}x{}",
                    bbox.x_max, bbox.y_max, raw.width, raw.height
                ),
            });
        }
        objects.push(ObjectInstance {
            id: o.id,
            category,
            bbox,
        });
    }

    let ids: HashSet<u64> = objects.iter().map(|o| o.id).collect();
    let mut relationships = Vec::with_capacity(raw.relationships.len());
    for (index, r) in raw.relationships.iter().enumerate() {
        for endpoint in [r.subject_id, r.object_id] {
            if !ids.contains(&endpoint) {
                report.push(ValidationIssue::DanglingReference { index, id: endpoint });
            }
        }
        if r.subject_id == r.object_id {
            report.push(ValidationIssue::SelfLoop {
                index,
                id: r.subject_id,
            });
        }
        let predicate = canonical_label(&r.predicate);
        if predicate.is_empty() {
            report.push(ValidationIssue::EmptyPredicate { index });
        } else if let Some(ch) = reserved_char(&predicate) {
            report.push(ValidationIssue::ReservedPredicateCharacter { index, ch });
        }
        relationships.push(Relationship {
            subject_id: r.subject_id,
            predicate,
            object_id: r.object_id,
        });
    }

    if report.is_empty() {
        Ok(SceneGraph {
            image_id: raw.image_id.clone(),
            width: raw.width as u32,
            height: raw.height as u32,
            objects,
            relationships,
        })
    } else {
        Err(Error::Validation(report))
    }
}

impl SceneGraph {
    /// Parses and validates a canonical scene-graph JSON document.
    pub fn from_json(json: &str) -> Result<SceneGraph> {
        let raw: RawSceneGraph = serde_json::from_str(json).map_err(|e| Error::Format {
            path: "<scene json>".to_string(),
            message: e.to_string(),
        })?;
        validate_scene_graph(&raw)
    }

    pub fn from_file(path: &std::path::Path) -> Result<SceneGraph> {
        let text = std::fs::read_to_string(path)?;
        let raw: RawSceneGraph = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        validate_scene_graph(&raw)
    }
}

// ---------------------------------------------------------------------------
// Structured representation
// ---------------------------------------------------------------------------

/// A category-level relationship triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RelationTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl RelationTriple {
    pub fn phrase(&self) -> String {
        format!("{} {} {}", self.subject, self.predicate, self.object)
    }
}

/// Per-category summary: instance count, occupied grid cells in row-major
/// order, and relationship phrases mentioning the category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategorySummary {
    pub category: String,
    pub count: usize,
    pub cells: Vec<GridCell>,
    pub relation_phrases: Vec<String>,
}

/// The retrieval-ready structured representation of a scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructuredScene {
    pub image_id: String,
    /// One summary per distinct category, sorted by category label.
    pub summaries: Vec<CategorySummary>,
    /// Distinct category-level triples in relationship input order. This is
    /// the ground-truth view the evaluation harness scores against.
    pub relation_triples: Vec<RelationTriple>,
}

/// Exact instance count per category; absent categories are absent from the
/// map.
pub fn count_by_category(objects: &[ObjectInstance]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for o in objects {
        *counts.entry(o.category.clone()).or_insert(0) += 1;
    }
    counts
}

/// Builds the structured visual representation of a validated scene.
pub fn build_structured_scene(g: &SceneGraph) -> Result<StructuredScene> {
    let counts = count_by_category(&g.objects);

    let mut cells: BTreeMap<String, BTreeSet<GridCell>> = BTreeMap::new();
    for o in &g.objects {
        let cell = grid_cell(bbox_center(&o.bbox), g.width, g.height)?;
        cells.entry(o.category.clone()).or_default().insert(cell);
    }

    let category_of: HashMap<u64, &str> = g
        .objects
        .iter()
        .map(|o| (o.id, o.category.as_str()))
        .collect();

    let mut triples: Vec<RelationTriple> = Vec::new();
    let mut phrases: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &g.relationships {
        let subject = category_of[&r.subject_id].to_string();
        let object = category_of[&r.object_id].to_string();
        let triple = RelationTriple {
            subject: subject.clone(),
            predicate: r.predicate.clone(),
            object: object.clone(),
        };
        let phrase = triple.phrase();
        if !triples.contains(&triple) {
            triples.push(triple);
        }
        for cat in [&subject, &object] {
            let list = phrases.entry(cat.clone()).or_default();
            if !list.contains(&phrase) {
                list.push(phrase.clone());
            }
        }
    }

    let summaries = counts
        .iter()
        .map(|(category, &count)| CategorySummary {
            category: category.clone(),
            count,
            cells: cells[category].iter().copied().collect(),
            relation_phrases: phrases.remove(category).unwrap_or_default(),
        })
        .collect();

    Ok(StructuredScene {
        image_id: g.image_id.clone(),
        summaries,
        relation_triples: triples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(id: u64, category: &str, bbox: [f64; 4]) -> RawObject {
        RawObject {
            id,
            category: category.to_string(),
            bbox,
        }
    }

    fn rel(subject_id: u64, predicate: &str, object_id: u64) -> RawRelationship {
        RawRelationship {
            subject_id,
            predicate: predicate.to_string(),
            object_id,
        }
    }

    #[test]
    fn center_of_symmetric_box() {
        let b = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(bbox_center(&b), (5.0, 5.0));
    }

    #[test]
    fn center_is_corner_mean() {
        let b = BoundingBox::new(2.0, 4.0, 6.0, 8.0).unwrap();
        assert_eq!(bbox_center(&b), (4.0, 6.0));
    }

    #[test]
    fn center_of_degenerate_box() {
        let b = BoundingBox::new(5.0, 5.0, 5.0, 5.0).unwrap();
        assert_eq!(bbox_center(&b), (5.0, 5.0));
    }

    #[test]
    fn grid_cell_midpoint_is_center() {
        let cell = grid_cell((150.0, 150.0), 300, 300).unwrap();
        assert_eq!(cell.name(), "center");
    }

    #[test]
    fn grid_cell_first_third_is_top_left() {
        let cell = grid_cell((10.0, 10.0), 300, 300).unwrap();
        assert_eq!(cell.name(), "top-left");
    }

    #[test]
    fn grid_cell_bottom_edge_clamps() {
        // Expected value cross-checked by the exhaustive lattice oracle in
        // the acceptance suite.
        let cell = grid_cell((100.0, 299.0), 300, 300).unwrap();
        assert_eq!(cell.name(), "bottom-center");
    }

    #[test]
    fn grid_cell_right_edge_is_included() {
        let cell = grid_cell((300.0, 0.0), 300, 300).unwrap();
        assert_eq!(cell.name(), "top-right");
    }

    #[test]
    fn grid_cell_rejects_out_of_bounds_naming_coordinate() {
        let err = grid_cell((301.0, 10.0), 300, 300).unwrap_err();
        match err {
            Error::Validation(report) => {
                assert!(matches!(
                    report.issues[0],
                    ValidationIssue::PointOutOfBounds { coordinate: "x", .. }
                ));
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn counts_empty_scene() {
        assert!(count_by_category(&[]).is_empty());
    }

    #[test]
    fn counts_three_cars() {
        let raw = RawSceneGraph {
            image_id: "i".into(),
            width: 100,
            height: 100,
            objects: vec![
                obj(1, "car", [0.0, 0.0, 10.0, 10.0]),
                obj(2, "car", [10.0, 0.0, 20.0, 10.0]),
                obj(3, "car", [20.0, 0.0, 30.0, 10.0]),
            ],
            relationships: vec![],
        };
        let g = validate_scene_graph(&raw).unwrap();
        let counts = count_by_category(&g.objects);
        assert_eq!(counts.len(), 1);
        assert_eq!(counts["car"], 3);
    }

    #[test]
    fn counts_mixed_categories() {
        let raw = RawSceneGraph {
            image_id: "i".into(),
            width: 100,
            height: 100,
            objects: vec![
                obj(1, "car", [0.0, 0.0, 10.0, 10.0]),
                obj(2, "tree", [10.0, 0.0, 20.0, 10.0]),
                obj(3, "car", [20.0, 0.0, 30.0, 10.0]),
            ],
            relationships: vec![],
        };
        let g = validate_scene_graph(&raw).unwrap();
        let counts = count_by_category(&g.objects);
        assert_eq!(counts["car"], 2);
        assert_eq!(counts["tree"], 1);
    }

    /// The exemplar scene: 3 cars (centers in center-left and center cells),
    /// a tree, a man, and the relationships (car near tree), (man in car).
    pub(crate) fn exemplar_raw() -> RawSceneGraph {
        RawSceneGraph {
            image_id: "img_001".into(),
            width: 300,
            height: 300,
            objects: vec![
                obj(1, "car", [20.0, 120.0, 80.0, 180.0]),    // center (50,150) -> center-left
                obj(2, "car", [120.0, 120.0, 180.0, 180.0]),  // center (150,150) -> center
                obj(3, "car", [130.0, 110.0, 190.0, 170.0]),  // center (160,140) -> center
                obj(4, "tree", [220.0, 20.0, 280.0, 80.0]),   // center (250,50) -> top-right
                obj(5, "man", [130.0, 220.0, 170.0, 280.0]),  // center (150,250) -> bottom-center
            ],
            relationships: vec![rel(1, "near", 4), rel(5, "in", 2)],
        }
    }

    #[test]
    fn structured_scene_matches_exemplar() {
        let g = validate_scene_graph(&exemplar_raw()).unwrap();
        let sc = build_structured_scene(&g).unwrap();
        assert_eq!(sc.summaries.len(), 3);

        let car = &sc.summaries[0];
        assert_eq!(car.category, "car");
        assert_eq!(car.count, 3);
        assert_eq!(
            car.cells.iter().map(|c| c.name()).collect::<Vec<_>>(),
            vec!["center-left", "center"]
        );
        assert_eq!(car.relation_phrases, vec!["car near tree", "man in car"]);

        let man = &sc.summaries[1];
        assert_eq!(man.category, "man");
        assert_eq!(man.count, 1);
        assert_eq!(man.relation_phrases, vec!["man in car"]);

        let tree = &sc.summaries[2];
        assert_eq!(tree.category, "tree");
        assert_eq!(tree.relation_phrases, vec!["car near tree"]);

        assert_eq!(
            sc.relation_triples,
            vec![
                RelationTriple {
                    subject: "car".into(),
                    predicate: "near".into(),
                    object: "tree".into()
                },
                RelationTriple {
                    subject: "man".into(),
                    predicate: "in".into(),
                    object: "car".into()
                },
            ]
        );
    }

    #[test]
    fn structured_scene_empty() {
        let raw = RawSceneGraph {
            image_id: "empty".into(),
            width: 10,
            height: 10,
            objects: vec![],
            relationships: vec![],
        };
        let g = validate_scene_graph(&raw).unwrap();
        let sc = build_structured_scene(&g).unwrap();
        assert!(sc.summaries.is_empty());
        assert!(sc.relation_triples.is_empty());
    }

    #[test]
    fn structured_scene_single_object() {
        let raw = RawSceneGraph {
            image_id: "one".into(),
            width: 10,
            height: 10,
            objects: vec![obj(1, "Dog", [0.0, 0.0, 4.0, 4.0])],
            relationships: vec![],
        };
        let g = validate_scene_graph(&raw).unwrap();
        let sc = build_structured_scene(&g).unwrap();
        assert_eq!(sc.summaries.len(), 1);
        assert_eq!(sc.summaries[0].category, "dog");
        assert_eq!(sc.summaries[0].count, 1);
        assert!(sc.summaries[0].relation_phrases.is_empty());
    }

    #[test]
    fn validate_accepts_well_formed_record() {
        let g = validate_scene_graph(&exemplar_raw()).unwrap();
        assert_eq!(g.objects.len(), 5);
        assert_eq!(g.relationships.len(), 2);
    }

    #[test]
    fn validate_rejects_inverted_bbox() {
        let raw = RawSceneGraph {
            image_id: "i".into(),
            width: 100,
            height: 100,
            objects: vec![obj(1, "car", [9.0, 0.0, 3.0, 10.0])],
            relationships: vec![],
        };
        let err = validate_scene_graph(&raw).unwrap_err();
        let Error::Validation(report) = err else {
            panic!("expected validation error");
        };
        assert!(matches!(
            report.issues[0],
            ValidationIssue::InvertedBbox { id: 1, .. }
        ));
    }

    #[test]
    fn validate_rejects_dangling_reference() {
        let raw = RawSceneGraph {
            image_id: "i".into(),
            width: 100,
            height: 100,
            objects: vec![obj(1, "car", [0.0, 0.0, 10.0, 10.0])],
            relationships: vec![rel(1, "near", 99)],
        };
        let err = validate_scene_graph(&raw).unwrap_err();
        let Error::Validation(report) = err else {
            panic!("expected validation error");
        };
        assert!(matches!(
            report.issues[0],
            ValidationIssue::DanglingReference { id: 99, .. }
        ));
    }

    #[test]
    fn validate_collects_all_violations() {
        let raw = RawSceneGraph {
            image_id: "i".into(),
            width: 0,
            height: 100,
            objects: vec![
                obj(1, "car", [9.0, 0.0, 3.0, 10.0]),
                obj(1, "", [0.0, 0.0, 10.0, 10.0]),
            ],
            relationships: vec![rel(1, "near", 1), rel(2, "on", 7)],
        };
        let err = validate_scene_graph(&raw).unwrap_err();
        let Error::Validation(report) = err else {
            panic!("expected validation error");
        };
        let kinds: Vec<&str> = report
            .issues
            .iter()
            .map(|i| match i {
                ValidationIssue::NonPositiveDimensions { .. } => "dims",
                ValidationIssue::InvertedBbox { .. } => "inverted",
                ValidationIssue::DuplicateObjectId { .. } => "dup",
                ValidationIssue::EmptyCategory { .. } => "emptycat",
                ValidationIssue::SelfLoop { .. } => "selfloop",
                ValidationIssue::DanglingReference { .. } => "dangling",
                _ => "other",
            })
            .collect();
        for expected in ["dims", "inverted", "dup", "emptycat", "selfloop", "dangling"] {
            assert!(kinds.contains(&expected), "missing {expected} in {kinds:?}");
        }
    }

    #[test]
    fn validate_rejects_self_loop() {
        let raw = RawSceneGraph {
            image_id: "i".into(),
            width: 100,
            height: 100,
            objects: vec![obj(1, "car", [0.0, 0.0, 10.0, 10.0])],
            relationships: vec![rel(1, "near", 1)],
        };
        assert!(validate_scene_graph(&raw).is_err());
    }

    #[test]
    fn validate_canonicalizes_labels() {
        let raw = RawSceneGraph {
            image_id: "i".into(),
            width: 100,
            height: 100,
            objects: vec![
                obj(1, "  Traffic   Light ", [0.0, 0.0, 10.0, 10.0]),
                obj(2, "car", [10.0, 0.0, 20.0, 10.0]),
            ],
            relationships: vec![rel(2, " Parked  Near", 1)],
        };
        let g = validate_scene_graph(&raw).unwrap();
        assert_eq!(g.objects[0].category, "traffic light");
        assert_eq!(g.relationships[0].predicate, "parked near");
    }

    #[test]
    fn cells_render_row_major() {
        let mut set = BTreeSet::new();
        set.insert(GridCell::new(GridRow::Bottom, GridCol::Left));
        set.insert(GridCell::new(GridRow::Top, GridCol::Right));
        set.insert(GridCell::new(GridRow::Top, GridCol::Left));
        set.insert(GridCell::new(GridRow::Center, GridCol::Center));
        let names: Vec<String> = set.iter().map(|c| c.name()).collect();
        assert_eq!(names, vec!["top-left", "top-right", "center", "bottom-left"]);
    }

    #[test]
    fn cell_names_round_trip() {
        for cell in GridCell::all() {
            assert_eq!(GridCell::parse(&cell.name()), Some(cell));
        }
        assert_eq!(GridCell::parse("center"), Some(GridCell::new(GridRow::Center, GridCol::Center)));
        assert_eq!(GridCell::parse("middle"), None);
    }
}
