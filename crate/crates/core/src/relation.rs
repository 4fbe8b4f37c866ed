//! Inference-only prototype-based relation scorer.
//!
//! Entities and predicates are represented as class prototypes (a linear map
//! of a word-embedding vector) plus a gated, instance-specific residual
//! derived from visual features. Subject and object representations are
//! combined by the fusion function before gating the predicate residual.
//! Predicates are ranked against a query vector by cosine similarity to the
//! predicate prototypes.
//!
//! Parameters are loaded from a text container (`docs/parameter_file.md`) or
//! generated by a seeded initializer; there is no training here.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Word-embedding table for entity categories and predicate labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Array1<f64>>,
}

impl ClassEmbeddingTable {
    pub fn new(dim: usize) -> Self {
        ClassEmbeddingTable {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, label: impl Into<String>, vector: Array1<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Dimension {
                context: "class embedding",
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("non-finite class embedding entry".into()));
        }
        self.entries.insert(label.into(), vector);
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<&Array1<f64>> {
        self.entries.get(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Dense affine map `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl AffineMap {
    pub fn new(weight: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::Dimension {
                context: "affine bias",
                expected: weight.nrows(),
                actual: bias.len(),
            });
        }
        if weight.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("non-finite affine map entry".into()));
        }
        Ok(AffineMap { weight, bias })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    /// Full affine application `W x + b`.
    pub fn apply(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        Ok(self.weight.dot(x) + &self.bias)
    }

    /// Linear part only, `W x`. Prototypes use this form.
    pub fn linear(&self, x: &Array1<f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        Ok(self.weight.dot(x))
    }

    fn check_input(&self, x: &Array1<f64>) -> Result<()> {
        if x.len() != self.in_dim() {
            return Err(Error::Dimension {
                context: "affine input",
                expected: self.in_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Affine layer over the concatenation of two equal-length inputs, squashed
/// through the logistic sigmoid. Output is elementwise in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct GateLayer {
    affine: AffineMap,
}

impl GateLayer {
    pub fn new(affine: AffineMap) -> Result<Self> {
        if affine.in_dim() != 2 * affine.out_dim() {
            return Err(Error::Dimension {
                context: "gate layer input",
                expected: 2 * affine.out_dim(),
                actual: affine.in_dim(),
            });
        }
        Ok(GateLayer { affine })
    }

    pub fn dim(&self) -> usize {
        self.affine.out_dim()
    }

    pub fn affine(&self) -> &AffineMap {
        &self.affine
    }

    pub fn apply(&self, first: &Array1<f64>, second: &Array1<f64>) -> Result<Array1<f64>> {
        let d = self.dim();
        if first.len() != d || second.len() != d {
            return Err(Error::Dimension {
                context: "gate layer operand",
                expected: d,
                actual: if first.len() != d { first.len() } else { second.len() },
            });
        }
        let mut cat = Array1::zeros(2 * d);
        cat.slice_mut(ndarray::s![..d]).assign(first);
        cat.slice_mut(ndarray::s![d..]).assign(second);
        Ok(self.affine.apply(&cat)?.mapv(sigmoid))
    }
}

/// A visual feature vector from the detection stage.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeature(Array1<f64>);

impl VisualFeature {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("non-finite visual feature entry".into()));
        }
        Ok(VisualFeature(Array1::from_vec(values)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }
}

/// Which linear map an entity representation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityRole {
    Subject,
    Object,
}

/// All learnable parameters of the relation scorer, immutable after load.
#[derive(Debug, Clone, PartialEq)]
pub struct PenetParams {
    pub w_subject: AffineMap,
    pub w_object: AffineMap,
    pub w_predicate: AffineMap,
    pub m_entity: AffineMap,
    pub m_union: AffineMap,
    pub gate_entity: GateLayer,
    pub gate_predicate: GateLayer,
    pub class_table: ClassEmbeddingTable,
    d: usize,
    d_v: usize,
    d_w: usize,
}

impl PenetParams {
    pub fn new(
        w_subject: AffineMap,
        w_object: AffineMap,
        w_predicate: AffineMap,
        m_entity: AffineMap,
        m_union: AffineMap,
        gate_entity: GateLayer,
        gate_predicate: GateLayer,
        class_table: ClassEmbeddingTable,
    ) -> Result<Self> {
        let d = w_subject.out_dim();
        let d_v = m_entity.in_dim();
        let d_w = w_subject.in_dim();
        let checks = [
            ("w_object", w_object.out_dim() == d && w_object.in_dim() == d_w),
            ("w_predicate", w_predicate.out_dim() == d && w_predicate.in_dim() == d_w),
            ("m_entity", m_entity.out_dim() == d),
            ("m_union", m_union.out_dim() == d && m_union.in_dim() == d_v),
            ("gate_entity", gate_entity.dim() == d),
            ("gate_predicate", gate_predicate.dim() == d),
            ("class_table", class_table.dim() == d_w),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::Config(format!(
                    "penet parameter component {name} is inconsistent with d={d}, d_v={d_v}, d_w={d_w}"
                )));
            }
        }
        Ok(PenetParams {
            w_subject,
            w_object,
            w_predicate,
            m_entity,
            m_union,
            gate_entity,
            gate_predicate,
            class_table,
            d,
            d_v,
            d_w,
        })
    }

    pub fn semantic_dim(&self) -> usize {
        self.d
    }

    pub fn visual_dim(&self) -> usize {
        self.d_v
    }

    pub fn word_dim(&self) -> usize {
        self.d_w
    }

    /// Deterministic pseudo-random parameters for tests and synthetic runs.
    ///
    /// Weights are uniform in `[-1, 1] / sqrt(in_dim)`, prototype-map biases
    /// are zero, gate and visual-map biases uniform in `[-0.5, 0.5]`, class
    /// embeddings uniform in `[-1, 1]`. Labels are sorted and de-duplicated
    /// before generation so the result does not depend on caller order.
    pub fn seeded(seed: u64, d: usize, d_v: usize, d_w: usize, labels: &[String]) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Array2<f64> {
            let scale = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0) * scale)
        };
        let mut small_bias = |len: usize, rng: &mut ChaCha8Rng| -> Array1<f64> {
            Array1::from_shape_fn(len, |_| rng.random_range(-0.5..0.5))
        };

        let w_subject = AffineMap::new(matrix(d, d_w, &mut rng), Array1::zeros(d))?;
        let w_object = AffineMap::new(matrix(d, d_w, &mut rng), Array1::zeros(d))?;
        let w_predicate = AffineMap::new(matrix(d, d_w, &mut rng), Array1::zeros(d))?;
        let m_entity = AffineMap::new(matrix(d, d_v, &mut rng), small_bias(d, &mut rng))?;
        let m_union = AffineMap::new(matrix(d, d_v, &mut rng), small_bias(d, &mut rng))?;
        let gate_entity = GateLayer::new(AffineMap::new(
            matrix(d, 2 * d, &mut rng),
            small_bias(d, &mut rng),
        )?)?;
        let gate_predicate = GateLayer::new(AffineMap::new(
            matrix(d, 2 * d, &mut rng),
            small_bias(d, &mut rng),
        )?)?;

        let mut sorted: Vec<&String> = labels.iter().collect();
        sorted.sort();
        sorted.dedup();
        let mut class_table = ClassEmbeddingTable::new(d_w);
        for label in sorted {
            let v = Array1::from_shape_fn(d_w, |_| rng.random_range(-1.0..1.0));
            class_table.insert(label.clone(), v)?;
        }

        PenetParams::new(
            w_subject,
            w_object,
            w_predicate,
            m_entity,
            m_union,
            gate_entity,
            gate_predicate,
            class_table,
        )
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Maps a visual feature into the semantic space: `M e + b`.
pub fn visual_to_semantic(e: &VisualFeature, m: &AffineMap) -> Result<Array1<f64>> {
    m.apply(e.as_array())
}

/// Instance-specific residual: `sigma(gate(prototype, mapped)) * mapped`
/// elementwise.
pub fn gated_instance_vector(
    prototype: &Array1<f64>,
    mapped_visual: &Array1<f64>,
    gate: &GateLayer,
) -> Result<Array1<f64>> {
    let g = gate.apply(prototype, mapped_visual)?;
    Ok(g * mapped_visual)
}

/// Fusion function: elementwise `ReLU(a + b) - (a - b)^2`. Symmetric.
pub fn fuse(a: &Array1<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            context: "fuse operand",
            expected: a.len(),
            actual: b.len(),
        });
    }
    let sum = a + b;
    let diff = a - b;
    Ok(sum.mapv(|v| v.max(0.0)) - diff.mapv(|v| v * v))
}

/// Entity representation `o = W t + v` with the gated residual `v`.
pub fn entity_representation(
    category: &str,
    e: &VisualFeature,
    params: &PenetParams,
    role: EntityRole,
) -> Result<Array1<f64>> {
    let t = params.class_table.get(category).ok_or(Error::UnknownLabel {
        kind: "category",
        label: category.to_string(),
    })?;
    let w = match role {
        EntityRole::Subject => &params.w_subject,
        EntityRole::Object => &params.w_object,
    };
    let prototype = w.linear(t)?;
    let mapped = visual_to_semantic(e, &params.m_entity)?;
    let residual = gated_instance_vector(&prototype, &mapped, &params.gate_entity)?;
    Ok(prototype + residual)
}

/// Predicate representation `p = W_p t_p + u_p`, where the gate's first input
/// is the fusion of the subject and object representations.
pub fn predicate_representation(
    o_subj: &Array1<f64>,
    o_obj: &Array1<f64>,
    e_union: &VisualFeature,
    predicate: &str,
    params: &PenetParams,
) -> Result<Array1<f64>> {
    let t = params.class_table.get(predicate).ok_or(Error::UnknownLabel {
        kind: "predicate",
        label: predicate.to_string(),
    })?;
    let prototype = params.w_predicate.linear(t)?;
    let fused = fuse(o_subj, o_obj)?;
    let mapped = visual_to_semantic(e_union, &params.m_union)?;
    let residual = gated_instance_vector(&fused, &mapped, &params.gate_predicate)?;
    Ok(prototype + residual)
}

fn cosine_raw(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}

/// Scores each predicate label by cosine similarity between the query and
/// the label's prototype `W_p t`, descending; exact ties break by label.
///
/// A zero-norm prototype scores 0; a zero-norm query is an error.
pub fn rank_predicates(
    query: &Array1<f64>,
    params: &PenetParams,
    predicate_labels: &[String],
) -> Result<Vec<(String, f64)>> {
    if query.dot(query) == 0.0 {
        return Err(Error::DegenerateQuery);
    }
    if query.len() != params.semantic_dim() {
        return Err(Error::Dimension {
            context: "predicate query",
            expected: params.semantic_dim(),
            actual: query.len(),
        });
    }
    let mut scored = Vec::with_capacity(predicate_labels.len());
    for label in predicate_labels {
        let t = params.class_table.get(label).ok_or(Error::UnknownLabel {
            kind: "predicate",
            label: label.clone(),
        })?;
        let prototype = params.w_predicate.linear(t)?;
        scored.push((label.clone(), cosine_raw(query, &prototype)));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(scored)
}

// ---------------------------------------------------------------------------
// Parameter file I/O (text container, see docs/parameter_file.md)
// ---------------------------------------------------------------------------

const PARAM_HEADER: &str = "penet-params v1";

fn write_matrix(out: &mut String, name: &str, m: &Array2<f64>) {
    out.push_str(&format!("matrix {} {} {}\n", name, m.nrows(), m.ncols()));
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

fn write_vector(out: &mut String, keyword: &str, name: &str, v: &Array1<f64>) {
    out.push_str(&format!("{} {} {}\n", keyword, name, v.len()));
    let line: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    out.push_str(&line.join(" "));
    out.push('\n');
}

impl PenetParams {
    /// Serializes to the documented text container. Floats are written in
    /// shortest round-trip form, so save/load is bit-exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(PARAM_HEADER);
        out.push('\n');
        out.push_str(&format!("dims {} {} {}\n", self.d, self.d_v, self.d_w));
        for (name, map) in [
            ("w_subject", &self.w_subject),
            ("w_object", &self.w_object),
            ("w_predicate", &self.w_predicate),
            ("m_entity", &self.m_entity),
            ("m_union", &self.m_union),
        ] {
            write_matrix(&mut out, &format!("{name}.weight"), map.weight());
            write_vector(&mut out, "vector", &format!("{name}.bias"), map.bias());
        }
        for (name, gate) in [
            ("gate_entity", &self.gate_entity),
            ("gate_predicate", &self.gate_predicate),
        ] {
            write_matrix(&mut out, &format!("{name}.weight"), gate.affine().weight());
            write_vector(&mut out, "vector", &format!("{name}.bias"), gate.affine().bias());
        }
        for label in self.class_table.labels() {
            let v = self.class_table.get(label).unwrap();
            write_vector(&mut out, "class", label, v);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let fail = |message: String| Error::Format {
            path: "<penet params>".to_string(),
            message,
        };
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some(PARAM_HEADER) {
            return Err(fail(format!("missing `{PARAM_HEADER}` header")));
        }

        let mut dims: Option<(usize, usize, usize)> = None;
        let mut matrices: BTreeMap<String, Array2<f64>> = BTreeMap::new();
        let mut vectors: BTreeMap<String, Array1<f64>> = BTreeMap::new();
        let mut classes: Vec<(String, Array1<f64>)> = Vec::new();

        let parse_floats = |line: &str, expected: usize| -> Result<Vec<f64>> {
            let values: std::result::Result<Vec<f64>, _> =
                line.split_whitespace().map(str::parse::<f64>).collect();
            let values = values.map_err(|e| fail(format!("bad float: {e}")))?;
            if values.len() != expected {
                return Err(fail(format!(
                    "expected {expected} values, got {}",
                    values.len()
                )));
            }
            Ok(values)
        };

        while let Some(line) = lines.next() {
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("dims") => {
                    let vals: Vec<usize> = parts
                        .map(|p| p.parse().map_err(|e| fail(format!("bad dims: {e}"))))
                        .collect::<Result<_>>()?;
                    if vals.len() != 3 {
                        return Err(fail("dims needs exactly 3 values".into()));
                    }
                    dims = Some((vals[0], vals[1], vals[2]));
                }
                Some("matrix") => {
                    let name = parts.next().ok_or_else(|| fail("matrix missing name".into()))?;
                    let rows: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| fail(format!("matrix {name}: bad row count")))?;
                    let cols: usize = parts
                        .next()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| fail(format!("matrix {name}: bad col count")))?;
                    let mut data = Vec::with_capacity(rows * cols);
                    for _ in 0..rows {
                        let row_line = lines
                            .next()
                            .ok_or_else(|| fail(format!("matrix {name}: truncated")))?;
                        data.extend(parse_floats(row_line, cols)?);
                    }
                    let m = Array2::from_shape_vec((rows, cols), data)
                        .map_err(|e| fail(format!("matrix {name}: {e}")))?;
                    matrices.insert(name.to_string(), m);
                }
                Some(kw @ ("vector" | "class")) => {
                    let mut name_parts: Vec<&str> = parts.collect();
                    let len: usize = name_parts
                        .pop()
                        .and_then(|p| p.parse().ok())
                        .ok_or_else(|| fail(format!("{kw}: bad length")))?;
                    let name = name_parts.join(" ");
                    if name.is_empty() {
                        return Err(fail(format!("{kw} missing name")));
                    }
                    let data = parse_floats(
                        lines.next().ok_or_else(|| fail(format!("{kw} {name}: truncated")))?,
                        len,
                    )?;
                    let v = Array1::from_vec(data);
                    if kw == "vector" {
                        vectors.insert(name, v);
                    } else {
                        classes.push((name, v));
                    }
                }
                Some(other) => return Err(fail(format!("unknown directive {other:?}"))),
                None => unreachable!(),
            }
        }

        let (d, d_v, d_w) = dims.ok_or_else(|| fail("missing dims line".into()))?;
        let mut affine = |name: &str| -> Result<AffineMap> {
            let weight = matrices
                .remove(&format!("{name}.weight"))
                .ok_or_else(|| fail(format!("missing matrix {name}.weight")))?;
            let bias = vectors
                .remove(&format!("{name}.bias"))
                .ok_or_else(|| fail(format!("missing vector {name}.bias")))?;
            AffineMap::new(weight, bias)
        };
        let w_subject = affine("w_subject")?;
        let w_object = affine("w_object")?;
        let w_predicate = affine("w_predicate")?;
        let m_entity = affine("m_entity")?;
        let m_union = affine("m_union")?;
        let gate_entity = GateLayer::new(affine("gate_entity")?)?;
        let gate_predicate = GateLayer::new(affine("gate_predicate")?)?;
        let mut class_table = ClassEmbeddingTable::new(d_w);
        for (label, v) in classes {
            class_table.insert(label, v)?;
        }

        let params = PenetParams::new(
            w_subject,
            w_object,
            w_predicate,
            m_entity,
            m_union,
            gate_entity,
            gate_predicate,
            class_table,
        )?;
        if params.d != d || params.d_v != d_v || params.d_w != d_w {
            return Err(fail(format!(
                "component shapes disagree with dims {d} {d_v} {d_w}"
            )));
        }
        Ok(params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }
}
