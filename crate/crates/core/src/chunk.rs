//! Rendering of structured scenes into per-category text chunks.
//!
//! The chunk grammar (see `docs/chunk_grammar.md`):
//!
//! ```text
//! chunk         = category ": " count ", location: [" cells "], relationships: " relationships
//! cells         = cell { ", " cell }          ; row-major order, distinct
//! cell          = "center" | row "-" col
//! relationships = "none" | phrase { ", " phrase }
//! phrase        = subject-category " " predicate " " object-category
//! ```
//!
//! Single space after separators, no trailing punctuation. Reserved grammar
//! characters are rejected in labels at scene validation.

use serde::{Deserialize, Serialize};

use crate::scene::{CategorySummary, StructuredScene};

/// One category's textual rendering, tagged with its source image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub category: String,
    pub text: String,
    pub source_image: String,
}

/// Renders one category summary into its chunk text.
pub fn render_chunk(s: &CategorySummary, image_id: &str) -> Chunk {
    let cells = s
        .cells
        .iter()
        .map(|c| c.name())
        .collect::<Vec<_>>()
        .join(", ");
    let relationships = if s.relation_phrases.is_empty() {
        "none".to_string()
    } else {
        s.relation_phrases.join(", ")
    };
    Chunk {
        category: s.category.clone(),
        text: format!(
            "{}: {}, location: [{}], relationships: {}",
            s.category, s.count, cells, relationships
        ),
        source_image: image_id.to_string(),
    }
}

/// Renders a structured scene into one chunk per category, ordered by
/// category label ascending.
pub fn render_scene(sc: &StructuredScene) -> Vec<Chunk> {
    // Summaries are already sorted by category.
    sc.summaries
        .iter()
        .map(|s| render_chunk(s, &sc.image_id))
        .collect()
}
