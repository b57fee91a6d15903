//! Checkpoints: `<name>.manifest` (text) plus `<name>.bin` (little-endian f32).
//!
//! Manifest lines starting with `#` describe the model; every other line is
//! `name shape dtype offset`, e.g. `blocks.0.expand.thresholds (31) f32 288`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hadanet::thresholding::ThresholdVariant;

use crate::error::{Result, TrainError};
use crate::model::{BlockSpec, Model, ModelKind, ModelSpec};

const STEM_KIND: &str = "conv3x3";
const HEAD_KIND: &str = "dense";

/// Manifest and blob paths for `base`; a `.manifest` or `.bin` suffix is ignored.
pub fn checkpoint_paths(base: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let base = base.as_ref();
    let stem = match base.extension().and_then(|e| e.to_str()) {
        Some("manifest" | "bin") => base.with_extension(""),
        _ => base.to_path_buf(),
    };
    let s = stem.into_os_string().into_string().unwrap_or_default();
    (PathBuf::from(format!("{s}.manifest")), PathBuf::from(format!("{s}.bin")))
}

fn shape_text(shape: &[usize]) -> String {
    let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
    format!("({})", dims.join(","))
}

/// Writes the manifest and blob for `model`.
pub fn save_checkpoint(model: &Model<f32>, base: impl AsRef<Path>) -> Result<()> {
    let (manifest_path, blob_path) = checkpoint_paths(base);
    let spec = &model.spec;
    let mut manifest = String::new();
    let _ = writeln!(manifest, "# model {}", spec.kind.name());
    let _ = writeln!(manifest, "# threshold {}", spec.variant.name());
    let _ = writeln!(manifest, "# classes {}", spec.classes);
    let _ = writeln!(manifest, "# dropout {}", spec.dropout);
    let _ = writeln!(
        manifest,
        "# layer stem {STEM_KIND} {} {} {}",
        spec.input_channels, spec.stem_channels, spec.stem_stride
    );
    for (i, b) in spec.blocks.iter().enumerate() {
        let _ = writeln!(
            manifest,
            "# layer blocks.{i} {} {} {} {} {}",
            spec.kind.block_kind(),
            b.k,
            b.k_prime,
            spec.expansion,
            b.s
        );
    }
    let _ = writeln!(manifest, "# layer head {HEAD_KIND} {} {}", spec.feature_channels(), spec.classes);
    let mut blob = Vec::new();
    for entry in model.params().into_iter().chain(model.buffers()) {
        let _ = writeln!(manifest, "{} {} f32 {}", entry.name, shape_text(&entry.shape), blob.len());
        for v in entry.values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&manifest_path, manifest).map_err(|e| TrainError::io(&manifest_path, e))?;
    fs::write(&blob_path, blob).map_err(|e| TrainError::io(&blob_path, e))
}

struct Entry {
    line: usize,
    shape: Vec<usize>,
    offset: usize,
}

fn bad(line: usize, reason: impl Into<String>) -> TrainError {
    TrainError::Manifest {
        line,
        reason: reason.into(),
    }
}

fn num<T: std::str::FromStr>(s: Option<&str>, line: usize, what: &str) -> Result<T> {
    s.and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(line, format!("expected {what}")))
}

fn parse_shape(s: &str, line: usize) -> Result<Vec<usize>> {
    let inner = s
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| bad(line, format!("shape `{s}` is not parenthesized")))?;
    inner
        .split(',')
        .map(|d| d.parse().map_err(|_| bad(line, format!("bad dimension `{d}`"))))
        .collect()
}

#[derive(Default)]
struct Header {
    kind: Option<ModelKind>,
    variant: Option<ThresholdVariant>,
    classes: Option<usize>,
    dropout: Option<f64>,
    stem: Option<(usize, usize, usize)>,
    blocks: Vec<(BlockSpec, usize)>,
}

fn parse_header(h: &mut Header, text: &str, line: usize) -> Result<()> {
    let mut it = text.split_whitespace();
    match it.next() {
        Some("model") => {
            let name = it.next().unwrap_or_default();
            h.kind = Some(ModelKind::from_name(name).ok_or_else(|| TrainError::UnknownLayerKind(name.into()))?);
        }
        Some("threshold") => {
            let name = it.next().unwrap_or_default();
            h.variant = Some(
                ThresholdVariant::from_name(name).ok_or_else(|| bad(line, format!("unknown threshold `{name}`")))?,
            );
        }
        Some("classes") => h.classes = Some(num(it.next(), line, "class count")?),
        Some("dropout") => h.dropout = Some(num(it.next(), line, "dropout rate")?),
        Some("layer") => {
            let _name = it.next();
            let kind = it.next().unwrap_or_default();
            let mut n = |what| num::<usize>(it.next(), line, what);
            match kind {
                STEM_KIND => h.stem = Some((n("input channels")?, n("stem channels")?, n("stride")?)),
                "fwht-bottleneck" | "conv-bottleneck" => {
                    let expected = h.kind.map(ModelKind::block_kind);
                    if expected.is_some_and(|e| e != kind) {
                        return Err(bad(line, format!("block kind `{kind}` does not match the model")));
                    }
                    let (k, k_prime, t, s) = (n("k")?, n("k'")?, n("t")?, n("s")?);
                    h.blocks.push((BlockSpec { k, k_prime, s }, t));
                }
                HEAD_KIND => {}
                other => return Err(TrainError::UnknownLayerKind(other.into())),
            }
        }
        _ => {}
    }
    Ok(())
}

fn spec_from_header(h: Header) -> Result<ModelSpec> {
    let missing = |what: &str| bad(0, format!("manifest header lacks {what}"));
    let kind = h.kind.ok_or_else(|| missing("`# model`"))?;
    let (input_channels, stem_channels, stem_stride) = h.stem.ok_or_else(|| missing("the stem layer"))?;
    let expansion = h.blocks.first().map_or(1, |b| b.1);
    if h.blocks.iter().any(|b| b.1 != expansion) {
        return Err(bad(0, "blocks disagree on the expansion factor"));
    }
    Ok(ModelSpec {
        kind,
        variant: h.variant.ok_or_else(|| missing("`# threshold`"))?,
        input_channels,
        stem_channels,
        stem_stride,
        expansion,
        blocks: h.blocks.into_iter().map(|b| b.0).collect(),
        classes: h.classes.ok_or_else(|| missing("`# classes`"))?,
        dropout: h.dropout.unwrap_or(0.0),
    })
}

/// Rebuilds a model from a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(base: impl AsRef<Path>) -> Result<Model<f32>> {
    let (manifest_path, blob_path) = checkpoint_paths(base);
    let text = fs::read_to_string(&manifest_path).map_err(|e| TrainError::io(&manifest_path, e))?;
    let blob = fs::read(&blob_path).map_err(|e| TrainError::io(&blob_path, e))?;
    let mut header = Header::default();
    let mut entries: HashMap<String, Entry> = HashMap::new();
    let mut described = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if let Some(h) = raw.strip_prefix('#') {
            parse_header(&mut header, h, line)?;
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        let [name, shape, dtype, offset] = fields[..] else {
            return Err(bad(line, "expected `name shape dtype offset`"));
        };
        if dtype != "f32" {
            return Err(bad(line, format!("unsupported dtype `{dtype}`")));
        }
        let shape = parse_shape(shape, line)?;
        let offset: usize = num(Some(offset), line, "byte offset")?;
        described = described.max(offset + 4 * shape.iter().product::<usize>());
        entries.insert(name.to_string(), Entry { line, shape, offset });
    }
    if described != blob.len() {
        return Err(TrainError::LengthMismatch {
            expected: described,
            actual: blob.len(),
        });
    }
    let mut model = Model::<f32>::new(spec_from_header(header)?, 0)?;
    let layout: Vec<(String, Vec<usize>)> = model
        .params()
        .into_iter()
        .chain(model.buffers())
        .map(|n| (n.name, n.shape))
        .collect();
    if entries.len() != layout.len() {
        return Err(bad(0, format!("{} entries for a model with {}", entries.len(), layout.len())));
    }
    let fill = |(name, shape): &(String, Vec<usize>), slot: &mut Vec<f32>| -> Result<()> {
        let e = entries.get(name).ok_or_else(|| bad(0, format!("missing entry `{name}`")))?;
        if &e.shape != shape {
            return Err(bad(
                e.line,
                format!("`{name}` has shape {} but the model needs {}", shape_text(&e.shape), shape_text(shape)),
            ));
        }
        let bytes = &blob[e.offset..e.offset + 4 * slot.len()];
        for (v, b) in slot.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
        Ok(())
    };
    let n_params = model.params().len();
    for (entry, slot) in layout[..n_params].iter().zip(model.params_mut()) {
        fill(entry, slot)?;
    }
    for (entry, slot) in layout[n_params..].iter().zip(model.buffers_mut()) {
        fill(entry, slot)?;
    }
    Ok(model)
}
