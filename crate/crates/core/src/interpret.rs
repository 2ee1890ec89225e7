//! Attention and embedding analyses: `[CLS]` embedding extraction, per-head
//! top-k correlated residues for masked positions, attention heatmaps, and
//! cross-referencing against mutagenesis annotations in Ballesteros-
//! Weinstein numbering.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::corpus::ProteinRecord;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::Tensor;
use crate::tokenizer::{decode, MaskedExample, Vocab};

/// One ranked attention hit for a masked query position.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionEntry {
    pub source_id: String,
    /// 1-based head number, matching the reporting convention.
    pub head: usize,
    /// Token index of the masked query position.
    pub mask_pos: usize,
    /// 1-based rank among the top-k weights.
    pub rank: usize,
    /// 0-based residue index (token index minus the `[CLS]` offset).
    pub seq_index: usize,
    pub residue: char,
    pub weight: f64,
    pub bw: Option<String>,
}

/// Top-k selection over one attention row: `[CLS]`, padded columns, and the
/// query's own column are ineligible; ties break toward the lower index.
fn top_k_row(row: &[f32], mask: &[u8], query: usize, k: usize) -> Result<Vec<(usize, f32)>> {
    let mut eligible: Vec<(usize, f32)> = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != 0 && j != query && mask[j] != 0)
        .map(|(j, &w)| (j, w))
        .collect();
    if eligible.len() < k {
        return Err(Error::TooFewColumns {
            eligible: eligible.len(),
            k,
        });
    }
    eligible.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    eligible.truncate(k);
    Ok(eligible)
}

/// Extracts, for every head of the chosen layer (default: last) and every
/// masked position of the example, the `k` residues with the largest
/// attention weights.
pub fn top_k_attention(
    model: &Model<f32>,
    example: &MaskedExample,
    k: usize,
    layer: Option<usize>,
) -> Result<Vec<AttentionEntry>> {
    if example.mask_positions.is_empty() {
        return Err(Error::InvalidArgument {
            name: "top_k_attention",
            msg: format!("example {} has no masked positions", example.source_id),
        });
    }
    let vocab = Vocab::new();
    let out = model.infer(example, true)?;
    let stack = out.attention.expect("attention requested");
    let layer_idx = layer.unwrap_or(stack.layers.len() - 1);
    let heads = stack.layers.get(layer_idx).ok_or(Error::InvalidArgument {
        name: "layer",
        msg: format!("layer {layer_idx} out of range"),
    })?;
    let mut entries = Vec::new();
    for (h, matrix) in heads.iter().enumerate() {
        for &q in &example.mask_positions {
            let row = matrix.row(q);
            for (rank, (j, w)) in top_k_row(row, &example.attention_mask, q, k)?
                .into_iter()
                .enumerate()
            {
                let residue = decode(&vocab, &example.input_ids[j..j + 1])?
                    .chars()
                    .next()
                    .unwrap_or('?');
                entries.push(AttentionEntry {
                    source_id: example.source_id.clone(),
                    head: h + 1,
                    mask_pos: q,
                    rank: rank + 1,
                    seq_index: j - 1,
                    residue,
                    weight: w as f64,
                    bw: None,
                });
            }
        }
    }
    Ok(entries)
}

/// Fills in BW labels from an index→label map for one sequence.
pub fn apply_annotations(entries: &mut [AttentionEntry], annotations: &BTreeMap<usize, String>) {
    for e in entries.iter_mut() {
        e.bw = annotations.get(&e.seq_index).cloned();
    }
}

/// `id,head,mask_pos,rank,seq_index,residue,weight,bw` rows.
pub fn report_csv(entries: &[AttentionEntry]) -> String {
    let mut out = String::from("id,head,mask_pos,rank,seq_index,residue,weight,bw\n");
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            e.source_id,
            e.head,
            e.mask_pos,
            e.rank,
            e.seq_index,
            e.residue,
            e.weight,
            e.bw.as_deref().unwrap_or("")
        ));
    }
    out
}

/// Reads back a report written by [`report_csv`].
pub fn parse_report_csv(path: &Path) -> Result<Vec<AttentionEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "id,head,mask_pos,rank,seq_index,residue,weight,bw" => {}
        _ => {
            return Err(Error::malformed(
                path,
                1,
                "expected header `id,head,mask_pos,rank,seq_index,residue,weight,bw`",
            ))
        }
    }
    let mut entries = Vec::new();
    for (no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::malformed(
                path,
                no + 1,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let bad = |what: &str| Error::malformed(path, no + 1, format!("bad {what}"));
        entries.push(AttentionEntry {
            source_id: fields[0].to_string(),
            head: fields[1].parse().map_err(|_| bad("head"))?,
            mask_pos: fields[2].parse().map_err(|_| bad("mask_pos"))?,
            rank: fields[3].parse().map_err(|_| bad("rank"))?,
            seq_index: fields[4].parse().map_err(|_| bad("seq_index"))?,
            residue: fields[5].chars().next().ok_or_else(|| bad("residue"))?,
            weight: fields[6].parse().map_err(|_| bad("weight"))?,
            bw: if fields[7].is_empty() {
                None
            } else {
                Some(fields[7].to_string())
            },
        });
    }
    Ok(entries)
}

/// Per-class recurrence of attended residue windows: for each receptor
/// class, head, and window (residue plus its next `window_len - 1`
/// successors), the number of sequences in the class whose top-k contains
/// that window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepetitionRow {
    pub receptor_class: String,
    pub head: usize,
    pub window: String,
    pub count: usize,
}

/// Builds the recurrence table from per-example analysis results. Each item
/// is `(receptor_class, restored_sequence, entries)` for one example; the
/// restored sequence carries ground truth at formerly masked positions.
pub fn repetition_table(
    per_example: &[(String, String, Vec<AttentionEntry>)],
    window_len: usize,
) -> Vec<RepetitionRow> {
    let mut seen: BTreeMap<(String, usize, String), BTreeSet<String>> = BTreeMap::new();
    for (class, sequence, entries) in per_example {
        for e in entries {
            let end = (e.seq_index + window_len).min(sequence.len());
            let window: String = sequence[e.seq_index..end].to_string();
            seen.entry((class.clone(), e.head, window))
                .or_default()
                .insert(e.source_id.clone());
        }
    }
    let mut rows: Vec<RepetitionRow> = seen
        .into_iter()
        .map(|((receptor_class, head, window), ids)| RepetitionRow {
            receptor_class,
            head,
            window,
            count: ids.len(),
        })
        .collect();
    rows.sort_by(|a, b| {
        a.receptor_class
            .cmp(&b.receptor_class)
            .then(a.head.cmp(&b.head))
            .then(b.count.cmp(&a.count))
            .then(a.window.cmp(&b.window))
    });
    rows
}

pub fn repetition_csv(rows: &[RepetitionRow]) -> String {
    let mut out = String::from("class,head,window,repetition\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.receptor_class, r.head, r.window, r.count
        ));
    }
    out
}

/// `[CLS]` final-hidden-state matrix over a record set.
#[derive(Debug, Clone)]
pub struct ClsMatrix {
    pub ids: Vec<String>,
    pub classes: Vec<String>,
    /// One row per record, width `d_model`.
    pub rows: Vec<Vec<f64>>,
    /// Ids that failed to tokenize and were skipped.
    pub skipped: Vec<String>,
}

/// Runs every record through the encoder in eval mode and collects the
/// final-layer hidden state at position 0. Records that cannot be encoded
/// (overlength, illegal characters) are skipped and reported.
pub fn extract_cls(model: &Model<f32>, records: &[ProteinRecord]) -> Result<ClsMatrix> {
    let vocab = Vocab::new();
    let mut out = ClsMatrix {
        ids: Vec::new(),
        classes: Vec::new(),
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    for record in records {
        let encoded = crate::tokenizer::encode_query(
            &vocab,
            &record.id,
            &record.sequence,
            record.sequence.len() + 1,
        );
        let example = match encoded {
            Ok(e) if e.input_ids.len() <= model.config().max_len => e,
            _ => {
                out.skipped.push(record.id.clone());
                continue;
            }
        };
        let run = model.infer(&example, false)?;
        let final_hidden = run.layer_hidden.last().expect("at least embedding layer");
        let row: Vec<f64> = final_hidden.row(0).iter().map(|&v| v as f64).collect();
        out.ids.push(record.id.clone());
        out.classes.push(record.receptor_class.clone());
        out.rows.push(row);
    }
    Ok(out)
}

/// `id,class,x,y` rows for embedding coordinates.
pub fn coords_csv(ids: &[String], classes: &[String], coords: &[[f64; 2]]) -> String {
    let mut out = String::from("id,class,x,y\n");
    for ((id, class), xy) in ids.iter().zip(classes).zip(coords) {
        out.push_str(&format!("{},{},{},{}\n", id, class, xy[0], xy[1]));
    }
    out
}

/// Last-layer attention matrices plus their SVG rendering.
#[derive(Debug, Clone)]
pub struct HeatmapOutput {
    /// One `[seq, seq]` matrix per head, bit-identical to the encoder
    /// capture.
    pub matrices: Vec<Tensor<f32>>,
    pub svg: String,
}

/// Captures the last encoder layer's attention for one example and renders
/// all heads as a grayscale grid (darker = larger weight, per-head max
/// normalization). Padded cells are exactly white.
pub fn attention_heatmap(model: &Model<f32>, example: &MaskedExample) -> Result<HeatmapOutput> {
    let out = model.infer(example, true)?;
    let stack = out.attention.expect("attention requested");
    let matrices = stack.layers.last().expect("n_layers >= 1").clone();
    let svg = heatmap_svg(&matrices);
    Ok(HeatmapOutput { matrices, svg })
}

/// Grayscale grid of per-head matrices; one `<rect>` per matrix cell.
pub fn heatmap_svg(matrices: &[Tensor<f32>]) -> String {
    let n_heads = matrices.len();
    let seq = matrices.first().map_or(0, |m| m.rows());
    let grid_cols = (n_heads as f64).sqrt().ceil() as usize;
    let grid_rows = n_heads.div_ceil(grid_cols);
    let gap = (seq / 10).max(4);
    let panel = seq + gap;
    let width = grid_cols * panel + gap;
    let height = grid_rows * panel + gap;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {width} {height}\">\n"
    );
    for (h, matrix) in matrices.iter().enumerate() {
        let ox = gap + (h % grid_cols) * panel;
        let oy = gap + (h / grid_cols) * panel;
        let max = matrix.data().iter().cloned().fold(0.0f32, f32::max);
        svg.push_str(&format!(
            "<g data-head=\"{}\" transform=\"translate({ox},{oy})\">\n",
            h + 1
        ));
        for i in 0..matrix.rows() {
            for j in 0..matrix.cols() {
                let w = matrix.at(i, j);
                let shade = if max > 0.0 {
                    (255.0 * (1.0 - (w / max) as f64)).round() as u8
                } else {
                    255
                };
                svg.push_str(&format!(
                    "<rect x=\"{j}\" y=\"{i}\" width=\"1\" height=\"1\" fill=\"rgb({shade},{shade},{shade})\"/>\n"
                ));
            }
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}

/// 2-D scatter of embedding coordinates colored by class.
pub fn scatter_svg(classes: &[String], coords: &[[f64; 2]]) -> String {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in coords {
        min_x = min_x.min(c[0]);
        max_x = max_x.max(c[0]);
        min_y = min_y.min(c[1]);
        max_y = max_y.max(c[1]);
    }
    if coords.is_empty() {
        min_x = 0.0;
        max_x = 1.0;
        min_y = 0.0;
        max_y = 1.0;
    }
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let size = 600.0;
    let margin = 20.0;
    let palette: Vec<String> = {
        let mut unique: Vec<&String> = classes.iter().collect::<BTreeSet<_>>().into_iter().collect();
        unique.sort();
        unique
            .iter()
            .enumerate()
            .map(|(i, _)| format!("hsl({},70%,45%)", (i * 47) % 360))
            .collect()
    };
    let unique: Vec<String> = classes
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .cloned()
        .collect();
    let color_of = |class: &String| -> &str {
        let idx = unique.binary_search(class).unwrap_or(0);
        &palette[idx]
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {0} {0}\">\n",
        size + 2.0 * margin
    );
    for (class, c) in classes.iter().zip(coords) {
        let x = margin + (c[0] - min_x) / span_x * size;
        let y = margin + (1.0 - (c[1] - min_y) / span_y) * size;
        svg.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"{}\" data-class=\"{class}\"/>\n",
            color_of(class)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// One experimental mutagenesis annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutagenesisRecord {
    pub receptor_class: String,
    /// BW position such as `6.47`, optionally suffixed like `8.49 (H8)`.
    pub bw: String,
    pub effect: String,
}

fn bw_is_valid(s: &str) -> bool {
    let core = s.split(' ').next().unwrap_or("");
    let mut parts = core.split('.');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => {
            !a.is_empty()
                && !b.is_empty()
                && a.chars().all(|c| c.is_ascii_digit())
                && b.chars().all(|c| c.is_ascii_digit())
        }
        _ => false,
    }
}

/// Reads `class,bw,effect` rows.
pub fn parse_mutagenesis_csv(path: &Path) -> Result<Vec<MutagenesisRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "class,bw,effect" => {}
        _ => return Err(Error::malformed(path, 1, "expected header `class,bw,effect`")),
    }
    let mut records = Vec::new();
    for (no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::malformed(
                path,
                no + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let bw = fields[1].trim().to_string();
        if !bw_is_valid(&bw) {
            return Err(Error::malformed(
                path,
                no + 1,
                format!("bad BW position {bw:?}"),
            ));
        }
        records.push(MutagenesisRecord {
            receptor_class: fields[0].trim().to_string(),
            bw,
            effect: fields[2].trim().to_string(),
        });
    }
    Ok(records)
}

/// Reads `id,seq_index,bw_label` rows into a per-id index→label map.
pub fn parse_annotations_csv(path: &Path) -> Result<BTreeMap<String, BTreeMap<usize, String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "id,seq_index,bw_label" => {}
        _ => {
            return Err(Error::malformed(
                path,
                1,
                "expected header `id,seq_index,bw_label`",
            ))
        }
    }
    let mut out: BTreeMap<String, BTreeMap<usize, String>> = BTreeMap::new();
    for (no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::malformed(
                path,
                no + 1,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let idx: usize = fields[1].trim().parse().map_err(|_| {
            Error::malformed(path, no + 1, format!("bad seq_index {:?}", fields[1]))
        })?;
        out.entry(fields[0].trim().to_string())
            .or_default()
            .insert(idx, fields[2].trim().to_string());
    }
    Ok(out)
}

/// Mutagenesis cross-reference outcome for one reported residue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchRow {
    pub source_id: String,
    pub head: usize,
    pub seq_index: usize,
    pub residue: char,
    /// BW label of the reported residue, or `unknown`.
    pub bw: String,
    /// `"<res> <bw> (<effect>)"`, `"<k> before/after <res> <bw> (<effect>)"`,
    /// or `"no match"`.
    pub result: String,
}

/// Cross-references reported residues against mutagenesis records: exact BW
/// match first, then the nearest annotated record within ±`window` sequence
/// positions (smaller offset wins; `after` checked before `before`).
/// Entries with no annotation are kept with BW `unknown`.
pub fn mutagenesis_match(
    entries: &[AttentionEntry],
    sequences: &BTreeMap<String, String>,
    annotations: &BTreeMap<String, BTreeMap<usize, String>>,
    records: &[MutagenesisRecord],
    window: usize,
) -> Vec<MatchRow> {
    let find_record = |bw: &str| records.iter().find(|r| r.bw == bw);
    let residue_at = |id: &str, idx: usize| -> char {
        sequences
            .get(id)
            .and_then(|s| s.chars().nth(idx))
            .unwrap_or('?')
    };
    let mut rows = Vec::with_capacity(entries.len());
    for e in entries {
        let ann = annotations.get(&e.source_id);
        let bw = ann.and_then(|a| a.get(&e.seq_index)).cloned();
        let residue = residue_at(&e.source_id, e.seq_index);
        let mut result = String::from("no match");
        if let (Some(ann), Some(bw)) = (ann, bw.as_deref()) {
            if let Some(rec) = find_record(bw) {
                result = format!("{residue} {} ({})", rec.bw, rec.effect);
            } else {
                'search: for offset in 1..=window {
                    // "k after": the reported residue sits after the record.
                    let candidates = [
                        (e.seq_index.checked_sub(offset), "after"),
                        (e.seq_index.checked_add(offset), "before"),
                    ];
                    for (cand, direction) in candidates {
                        let Some(cand) = cand else { continue };
                        if let Some(cand_bw) = ann.get(&cand) {
                            if let Some(rec) = find_record(cand_bw) {
                                let res = residue_at(&e.source_id, cand);
                                result = format!(
                                    "{offset} {direction} {res} {} ({})",
                                    rec.bw, rec.effect
                                );
                                break 'search;
                            }
                        }
                    }
                }
            }
        }
        rows.push(MatchRow {
            source_id: e.source_id.clone(),
            head: e.head,
            seq_index: e.seq_index,
            residue,
            bw: bw.unwrap_or_else(|| "unknown".into()),
            result,
        });
    }
    rows
}

/// `id,head,seq_index,residue,bw,result` rows.
pub fn match_csv(rows: &[MatchRow]) -> String {
    let mut out = String::from("id,head,seq_index,residue,bw,result\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.source_id, r.head, r.seq_index, r.residue, r.bw, r.result
        ));
    }
    out
}
