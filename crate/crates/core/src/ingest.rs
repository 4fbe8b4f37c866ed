//! Converters from VG-150-style and AUG-style annotation dumps into the
//! canonical scene-graph file format (see `docs/ingestion_formats.md`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{validate_scene_graph, RawObject, RawRelationship, RawSceneGraph, SceneGraph};

/// Supported ingestion source formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    Canonical,
    Vg150,
    Aug,
}

impl std::str::FromStr for SourceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Ok(SourceFormat::Canonical),
            "vg150-annotations" | "vg150" => Ok(SourceFormat::Vg150),
            "aug-annotations" | "aug" => Ok(SourceFormat::Aug),
            other => Err(Error::Config(format!(
                "unknown source format {other:?}, expected canonical|vg150-annotations|aug-annotations"
            ))),
        }
    }
}

/// Outcome of one conversion run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ConversionSummary {
    pub images_converted: usize,
    pub objects: usize,
    pub relationships: usize,
    /// Rejected records with their identifiers and reasons.
    pub rejects: Vec<String>,
}

// VG-style records: objects carry x/y/w/h boxes and a `names` list.
#[derive(Debug, Deserialize)]
struct VgImage {
    image_id: serde_json::Value,
    width: i64,
    height: i64,
    #[serde(default)]
    objects: Vec<VgObject>,
    #[serde(default)]
    relationships: Vec<VgRelationship>,
}

#[derive(Debug, Deserialize)]
struct VgObject {
    object_id: u64,
    #[serde(default)]
    names: Vec<String>,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Debug, Deserialize)]
struct VgRelationship {
    predicate: String,
    subject_id: u64,
    object_id: u64,
}

// AUG-style records: one JSON object per line with corner boxes and triples.
#[derive(Debug, Deserialize)]
struct AugImage {
    image: String,
    size: AugSize,
    #[serde(default)]
    objects: Vec<AugObject>,
    #[serde(default)]
    triples: Vec<(u64, String, u64)>,
}

#[derive(Debug, Deserialize)]
struct AugSize {
    w: i64,
    h: i64,
}

#[derive(Debug, Deserialize)]
struct AugObject {
    id: u64,
    label: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

fn vg_to_raw(img: &VgImage) -> Result<RawSceneGraph> {
    let image_id = match &img.image_id {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => n.to_string(),
        other => {
            return Err(Error::Format {
                path: "<vg record>".to_string(),
                message: format!("image_id must be a string or number, got {other}"),
            })
        }
    };
    let objects = img
        .objects
        .iter()
        .map(|o| {
            let name = o.names.first().ok_or_else(|| Error::Format {
                path: format!("<vg image {image_id}>"),
                message: format!("object {} has no names", o.object_id),
            })?;
            Ok(RawObject {
                id: o.object_id,
                category: name.clone(),
                bbox: [o.x, o.y, o.x + o.w, o.y + o.h],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let relationships = img
        .relationships
        .iter()
        .map(|r| RawRelationship {
            subject_id: r.subject_id,
            predicate: r.predicate.clone(),
            object_id: r.object_id,
        })
        .collect();
    Ok(RawSceneGraph {
        image_id,
        width: img.width,
        height: img.height,
        objects,
        relationships,
    })
}

fn aug_to_raw(img: &AugImage) -> RawSceneGraph {
    RawSceneGraph {
        image_id: img.image.clone(),
        width: img.size.w,
        height: img.size.h,
        objects: img
            .objects
            .iter()
            .map(|o| RawObject {
                id: o.id,
                category: o.label.clone(),
                bbox: o.bbox,
            })
            .collect(),
        relationships: img
            .triples
            .iter()
            .map(|(s, p, o)| RawRelationship {
                subject_id: *s,
                predicate: p.clone(),
                object_id: *o,
            })
            .collect(),
    }
}

/// Reads source records, one `RawSceneGraph` per image, with a record label
/// for error reporting.
fn read_records(format: SourceFormat, path_in: &Path) -> Result<Vec<(String, Result<RawSceneGraph>)>> {
    let mut records = Vec::new();
    match format {
        SourceFormat::Canonical => {
            let mut files = Vec::new();
            if path_in.is_dir() {
                for entry in std::fs::read_dir(path_in)? {
                    let path = entry?.path();
                    if path.extension().is_some_and(|e| e == "json") {
                        files.push(path);
                    }
                }
                files.sort();
            } else {
                files.push(path_in.to_path_buf());
            }
            for file in files {
                let label = file.display().to_string();
                let parsed = std::fs::read_to_string(&file)
                    .map_err(Error::from)
                    .and_then(|text| {
                        serde_json::from_str::<RawSceneGraph>(&text).map_err(|e| Error::Format {
                            path: label.clone(),
                            message: e.to_string(),
                        })
                    });
                records.push((label, parsed));
            }
        }
        SourceFormat::Vg150 => {
            let text = std::fs::read_to_string(path_in)?;
            let images: Vec<serde_json::Value> =
                serde_json::from_str(&text).map_err(|e| Error::Format {
                    path: path_in.display().to_string(),
                    message: format!("expected a JSON array of images: {e}"),
                })?;
            for (i, value) in images.into_iter().enumerate() {
                let label = format!("{}[{}]", path_in.display(), i);
                let parsed = serde_json::from_value::<VgImage>(value)
                    .map_err(|e| Error::Format {
                        path: label.clone(),
                        message: e.to_string(),
                    })
                    .and_then(|img| vg_to_raw(&img));
                records.push((label, parsed));
            }
        }
        SourceFormat::Aug => {
            let text = std::fs::read_to_string(path_in)?;
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let label = format!("{}:{}", path_in.display(), lineno + 1);
                let parsed = serde_json::from_str::<AugImage>(line)
                    .map(|img| aug_to_raw(&img))
                    .map_err(|e| Error::Format {
                        path: label.clone(),
                        message: e.to_string(),
                    });
                records.push((label, parsed));
            }
        }
    }
    Ok(records)
}

fn output_name(image_id: &str) -> String {
    let safe: String = image_id
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

/// Writes one canonical scene-graph JSON file.
pub fn write_canonical(graph: &SceneGraph, out_dir: &Path) -> Result<std::path::PathBuf> {
    let path = out_dir.join(output_name(&graph.image_id));
    let mut text = serde_json::to_string_pretty(graph).expect("scene graph serializes");
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Converts an annotation dump into canonical per-image scene files.
///
/// With `strict` on, the first malformed or invalid record aborts the run,
/// naming the record. Otherwise bad records are skipped and listed in the
/// summary, and partial output is allowed.
pub fn ingest_convert(
    format: SourceFormat,
    path_in: &Path,
    out_dir: &Path,
    strict: bool,
) -> Result<ConversionSummary> {
    if !path_in.exists() {
        return Err(Error::Config(format!(
            "input path {} does not exist",
            path_in.display()
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut summary = ConversionSummary::default();
    for (label, parsed) in read_records(format, path_in)? {
        let validated = parsed.and_then(|raw| validate_scene_graph(&raw));
        match validated {
            Ok(graph) => {
                write_canonical(&graph, out_dir)?;
                summary.images_converted += 1;
                summary.objects += graph.objects.len();
                summary.relationships += graph.relationships.len();
            }
            Err(e) => {
                if strict {
                    return Err(Error::Format {
                        path: label,
                        message: format!("strict mode abort: {e}"),
                    });
                }
                summary.rejects.push(format!("{label}: {e}"));
            }
        }
    }
    Ok(summary)
}
