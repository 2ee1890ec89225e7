//! Receptor-sequence ingestion and masked-dataset construction: CSV/FASTA
//! parsing, length filtering, motif localization, motif- and span-masked
//! pair generation, deterministic splits, and corpus statistics.

pub mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One receptor entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProteinRecord {
    /// Entry / PDB code.
    pub id: String,
    pub receptor_class: String,
    /// Uppercase over the 26-letter alphabet minus `'J'`.
    pub sequence: String,
    /// Optional Ballesteros-Weinstein labels keyed by 0-based sequence index.
    pub bw_annotations: Option<BTreeMap<usize, String>>,
}

/// Pattern element of a conserved motif template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternElem {
    Fixed(char),
    Wildcard,
    Choice(&'static [char]),
}

impl PatternElem {
    fn matches(&self, ch: char) -> bool {
        match self {
            PatternElem::Fixed(c) => *c == ch,
            PatternElem::Wildcard => true,
            PatternElem::Choice(set) => set.contains(&ch),
        }
    }
}

/// The three conserved motifs and their masking templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotifKind {
    /// `N,P,*,*,Y`; the two wildcards are masked.
    NPxxY,
    /// `C,W,*,P`; the wildcard is masked.
    CWxP,
    /// `{E,D},R,Y`; the choice position is masked.
    EDRY,
}

impl MotifKind {
    pub const ALL: [MotifKind; 3] = [MotifKind::NPxxY, MotifKind::CWxP, MotifKind::EDRY];

    pub fn pattern(&self) -> &'static [PatternElem] {
        use PatternElem::*;
        match self {
            MotifKind::NPxxY => &[Fixed('N'), Fixed('P'), Wildcard, Wildcard, Fixed('Y')],
            MotifKind::CWxP => &[Fixed('C'), Fixed('W'), Wildcard, Fixed('P')],
            MotifKind::EDRY => &[Choice(&['E', 'D']), Fixed('R'), Fixed('Y')],
        }
    }

    /// Offsets of the masked (predicted) positions within the pattern.
    pub fn mask_offsets(&self) -> &'static [usize] {
        match self {
            MotifKind::NPxxY => &[2, 3],
            MotifKind::CWxP => &[2],
            MotifKind::EDRY => &[0],
        }
    }

    /// Sequence-fraction window in which the motif is considered properly
    /// localized (TM7 / TM6 / TM3 occupy these relative positions in class A
    /// receptors).
    pub fn default_window(&self) -> (f64, f64) {
        match self {
            MotifKind::NPxxY => (0.70, 1.00),
            MotifKind::CWxP => (0.50, 0.90),
            MotifKind::EDRY => (0.25, 0.60),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MotifKind::NPxxY => "NPxxY",
            MotifKind::CWxP => "CWxP",
            MotifKind::EDRY => "EDRY",
        }
    }

    pub fn parse(s: &str) -> Option<MotifKind> {
        match s.to_ascii_lowercase().as_str() {
            "npxxy" => Some(MotifKind::NPxxY),
            "cwxp" => Some(MotifKind::CWxP),
            "edry" | "e/dry" => Some(MotifKind::EDRY),
            _ => None,
        }
    }
}

/// A located motif occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct MotifHit {
    pub kind: MotifKind,
    /// 0-based start of the pattern.
    pub start: usize,
    /// Absolute sequence indices of the masked positions.
    pub mask_positions: Vec<usize>,
    /// `start / sequence length`.
    pub position_fraction: f64,
}

/// A masked input/label sequence pair, still at the string level.
/// `input_seq` carries `'J'` exactly at the masked positions; `label_seq`
/// carries the ground truth there and `'J'` everywhere else.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawMaskedPair {
    pub input_seq: String,
    pub label_seq: String,
    pub mask_positions: Vec<usize>,
    pub source_id: String,
}

impl RawMaskedPair {
    /// The original sequence: the input with ground truth restored at the
    /// masked positions.
    pub fn restored(&self) -> String {
        self.input_seq
            .chars()
            .zip(self.label_seq.chars())
            .map(|(i, l)| if i == 'J' { l } else { i })
            .collect()
    }
}

/// Input file format for [`parse_corpus`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Csv,
    Fasta,
}

impl CorpusFormat {
    /// Guesses from the file extension (`.csv`, `.fa`, `.fasta`).
    pub fn from_path(path: &Path) -> Option<CorpusFormat> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("csv") => Some(CorpusFormat::Csv),
            Some("fa") | Some("fasta") => Some(CorpusFormat::Fasta),
            _ => None,
        }
    }
}

fn validate_sequence(id: &str, sequence: &str) -> Result<()> {
    if sequence.is_empty() {
        return Err(Error::IllegalChar {
            id: id.to_string(),
            ch: ' ',
            offset: 0,
        });
    }
    for (offset, ch) in sequence.chars().enumerate() {
        if !ch.is_ascii_uppercase() || ch == 'J' {
            return Err(Error::IllegalChar {
                id: id.to_string(),
                ch,
                offset,
            });
        }
    }
    Ok(())
}

/// Reads a corpus file. CSV needs the exact header
/// `id,receptor_class,sequence`; FASTA headers are `>id|receptor_class`.
/// Sequences are upper-cased before validation, so a lowercase `'j'` is
/// rejected as an illegal `'J'`.
pub fn parse_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<ProteinRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::Csv => parse_csv(path, &text),
        CorpusFormat::Fasta => parse_fasta(path, &text),
    }
}

fn parse_csv(path: &Path, text: &str) -> Result<Vec<ProteinRecord>> {
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line.trim_start_matches('\u{feff}').trim();
                if line.is_empty() {
                    continue;
                }
                break (no + 1, line);
            }
            None => return Err(Error::malformed(path, 1, "empty file, expected header")),
        }
    };
    if header.1 != "id,receptor_class,sequence" {
        return Err(Error::malformed(
            path,
            header.0,
            format!("expected header `id,receptor_class,sequence`, got `{}`", header.1),
        ));
    }
    let mut records = Vec::new();
    for (no, line) in lines {
        let line_no = no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::malformed(
                path,
                line_no,
                format!("expected 3 fields, got {}", fields.len()),
            ));
        }
        let id = fields[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::malformed(path, line_no, "empty id"));
        }
        let sequence = fields[2].trim().to_ascii_uppercase();
        validate_sequence(&id, &sequence)?;
        records.push(ProteinRecord {
            id,
            receptor_class: fields[1].trim().to_string(),
            sequence,
            bw_annotations: None,
        });
    }
    Ok(records)
}

fn parse_fasta(path: &Path, text: &str) -> Result<Vec<ProteinRecord>> {
    let mut records: Vec<ProteinRecord> = Vec::new();
    let mut current: Option<(usize, ProteinRecord)> = None;
    let flush = |current: &mut Option<(usize, ProteinRecord)>,
                 records: &mut Vec<ProteinRecord>|
     -> Result<()> {
        if let Some((line_no, rec)) = current.take() {
            if rec.sequence.is_empty() {
                return Err(Error::malformed(
                    path,
                    line_no,
                    format!("entry {} has no sequence", rec.id),
                ));
            }
            validate_sequence(&rec.id, &rec.sequence)?;
            records.push(rec);
        }
        Ok(())
    };
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with(';') {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            flush(&mut current, &mut records)?;
            let (id, class) = header.split_once('|').ok_or_else(|| {
                Error::malformed(path, line_no, "FASTA header must be `>id|receptor_class`")
            })?;
            let id = id.trim();
            if id.is_empty() {
                return Err(Error::malformed(path, line_no, "empty id in FASTA header"));
            }
            current = Some((
                line_no,
                ProteinRecord {
                    id: id.to_string(),
                    receptor_class: class.trim().to_string(),
                    sequence: String::new(),
                    bw_annotations: None,
                },
            ));
        } else {
            match &mut current {
                Some((_, rec)) => rec.sequence.push_str(&line.to_ascii_uppercase()),
                None => {
                    return Err(Error::malformed(
                        path,
                        line_no,
                        "sequence data before any FASTA header",
                    ))
                }
            }
        }
    }
    flush(&mut current, &mut records)?;
    Ok(records)
}

/// Keeps records with `len(sequence) <= max_len`, preserving order.
pub fn filter_corpus(records: &[ProteinRecord], max_len: usize) -> Vec<ProteinRecord> {
    records
        .iter()
        .filter(|r| r.sequence.len() <= max_len)
        .cloned()
        .collect()
}

/// All pattern matches of `kind` in `sequence`, windowed or not.
fn all_matches(sequence: &str, kind: MotifKind) -> Vec<usize> {
    let pattern = kind.pattern();
    let chars: Vec<char> = sequence.chars().collect();
    if chars.len() < pattern.len() {
        return Vec::new();
    }
    (0..=chars.len() - pattern.len())
        .filter(|&start| {
            pattern
                .iter()
                .enumerate()
                .all(|(k, elem)| elem.matches(chars[start + k]))
        })
        .collect()
}

/// Scans for `kind` and returns the last match whose position fraction lies
/// in `[window.0, window.1]`, or `None` if no match is properly localized.
pub fn locate_motif(
    record: &ProteinRecord,
    kind: MotifKind,
    window: (f64, f64),
) -> Result<Option<MotifHit>> {
    let (lo, hi) = window;
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::InvalidArgument {
            name: "motif window",
            msg: format!("[{lo}, {hi}] is not a valid fraction window"),
        });
    }
    let len = record.sequence.len();
    let hit = all_matches(&record.sequence, kind)
        .into_iter()
        .map(|start| (start, start as f64 / len as f64)).rfind(|&(_, frac)| frac >= lo && frac <= hi);
    Ok(hit.map(|(start, frac)| MotifHit {
        kind,
        start,
        mask_positions: kind.mask_offsets().iter().map(|&o| start + o).collect(),
        position_fraction: frac,
    }))
}

fn pair_from_positions(record: &ProteinRecord, positions: &[usize]) -> RawMaskedPair {
    let mut input: Vec<char> = record.sequence.chars().collect();
    let mut label: Vec<char> = vec!['J'; input.len()];
    for &p in positions {
        label[p] = input[p];
        input[p] = 'J';
    }
    RawMaskedPair {
        input_seq: input.into_iter().collect(),
        label_seq: label.into_iter().collect(),
        mask_positions: positions.to_vec(),
        source_id: record.id.clone(),
    }
}

/// One masked pair per record in which `kind` is properly localized (using
/// the default window); records without an in-window motif are skipped.
pub fn build_motif_dataset(records: &[ProteinRecord], kind: MotifKind) -> Result<Vec<RawMaskedPair>> {
    let window = kind.default_window();
    let mut pairs = Vec::new();
    for record in records {
        if let Some(hit) = locate_motif(record, kind, window)? {
            pairs.push(pair_from_positions(record, &hit.mask_positions));
        }
    }
    Ok(pairs)
}

/// Masks the contiguous positions `[start, start+count)` of every record
/// long enough to contain them; shorter records are skipped.
pub fn build_span_dataset(
    records: &[ProteinRecord],
    start: usize,
    count: usize,
) -> Result<Vec<RawMaskedPair>> {
    if count == 0 {
        return Err(Error::InvalidArgument {
            name: "count",
            msg: "span mask count must be >= 1".into(),
        });
    }
    let positions: Vec<usize> = (start..start + count).collect();
    Ok(records
        .iter()
        .filter(|r| r.sequence.len() >= start + count)
        .map(|r| pair_from_positions(r, &positions))
        .collect())
}

/// Deterministic shuffled split; the train side gets `floor(n * ratio)`
/// pairs. Same `(pairs, ratio, seed)` always produces the same partition.
pub fn split_dataset(
    pairs: &[RawMaskedPair],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<RawMaskedPair>, Vec<RawMaskedPair>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument {
            name: "ratio",
            msg: format!("{ratio} not in (0,1)"),
        });
    }
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let n_train = (pairs.len() as f64 * ratio).floor() as usize;
    let train = indices[..n_train]
        .iter()
        .map(|&i| pairs[i].clone())
        .collect();
    let test = indices[n_train..]
        .iter()
        .map(|&i| pairs[i].clone())
        .collect();
    Ok((train, test))
}

/// One `[lo, hi)` histogram bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistBin {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
}

/// Length histogram (bin width 10 covering min..max) and per-class counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusStats {
    pub length_histogram: Vec<HistBin>,
    pub class_counts: Vec<(String, usize)>,
}

pub fn corpus_stats(records: &[ProteinRecord]) -> CorpusStats {
    if records.is_empty() {
        return CorpusStats {
            length_histogram: Vec::new(),
            class_counts: Vec::new(),
        };
    }
    const WIDTH: usize = 10;
    let min = records.iter().map(|r| r.sequence.len()).min().unwrap();
    let max = records.iter().map(|r| r.sequence.len()).max().unwrap();
    let first = min / WIDTH * WIDTH;
    let last = max / WIDTH * WIDTH;
    let mut bins: Vec<HistBin> = (first..=last)
        .step_by(WIDTH)
        .map(|lo| HistBin {
            lo,
            hi: lo + WIDTH,
            count: 0,
        })
        .collect();
    for r in records {
        let idx = (r.sequence.len() - first) / WIDTH;
        bins[idx].count += 1;
    }
    let mut classes: BTreeMap<String, usize> = BTreeMap::new();
    for r in records {
        *classes.entry(r.receptor_class.clone()).or_insert(0) += 1;
    }
    CorpusStats {
        length_histogram: bins,
        class_counts: classes.into_iter().collect(),
    }
}

impl CorpusStats {
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for b in &self.length_histogram {
            out.push_str(&format!("{},{},{}\n", b.lo, b.hi, b.count));
        }
        out
    }

    pub fn class_counts_csv(&self) -> String {
        let mut out = String::from("class,count\n");
        for (class, count) in &self.class_counts {
            out.push_str(&format!("{class},{count}\n"));
        }
        out
    }
}

/// Serializes pairs to the on-disk CSV schema `id,class,input,label`.
pub fn pairs_to_csv(pairs: &[(String, RawMaskedPair)]) -> String {
    let mut out = String::from("id,class,input,label\n");
    for (class, pair) in pairs {
        out.push_str(&format!(
            "{},{},{},{}\n",
            pair.source_id, class, pair.input_seq, pair.label_seq
        ));
    }
    out
}

/// Reads back the pair CSV written by [`pairs_to_csv`]; returns
/// `(receptor_class, pair)` rows. Mask positions are recovered from the
/// `'J'` placement, which the pair invariant makes lossless.
pub fn pairs_from_csv(path: &Path) -> Result<Vec<(String, RawMaskedPair)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "id,class,input,label" => {}
        Some((no, header)) => {
            return Err(Error::malformed(
                path,
                no + 1,
                format!("expected header `id,class,input,label`, got `{header}`"),
            ))
        }
        None => return Err(Error::malformed(path, 1, "empty pairs file")),
    }
    let mut out = Vec::new();
    for (no, line) in lines {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::malformed(
                path,
                no + 1,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let input = fields[2].trim().to_string();
        let label = fields[3].trim().to_string();
        if input.len() != label.len() {
            return Err(Error::malformed(
                path,
                no + 1,
                "input and label lengths differ",
            ));
        }
        let mask_positions: Vec<usize> = input
            .chars()
            .enumerate()
            .filter(|(_, c)| *c == 'J')
            .map(|(i, _)| i)
            .collect();
        out.push((
            fields[1].trim().to_string(),
            RawMaskedPair {
                input_seq: input,
                label_seq: label,
                mask_positions,
                source_id: fields[0].trim().to_string(),
            },
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn rec(id: &str, class: &str, seq: &str) -> ProteinRecord {
        ProteinRecord {
            id: id.into(),
            receptor_class: class.into(),
            sequence: seq.into(),
            bw_annotations: None,
        }
    }

    fn write_tmp(content: &str, ext: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new()
            .suffix(&format!(".{ext}"))
            .tempfile()
            .unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parse_csv_row() {
        let f = write_tmp("id,receptor_class,sequence\n4GBR,adrb2,MGQPG\n", "csv");
        let recs = parse_corpus(f.path(), CorpusFormat::Csv).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "4GBR");
        assert_eq!(recs[0].receptor_class, "adrb2");
        assert_eq!(recs[0].sequence, "MGQPG");
    }

    #[test]
    fn parse_fasta_entry() {
        let f = write_tmp(">x|opsd\nNPIIY\n", "fasta");
        let recs = parse_corpus(f.path(), CorpusFormat::Fasta).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "x");
        assert_eq!(recs[0].receptor_class, "opsd");
        assert_eq!(recs[0].sequence, "NPIIY");
    }

    #[test]
    fn lowercase_j_is_uppercased_then_rejected() {
        let f = write_tmp("id,receptor_class,sequence\nq,c,AAjAA\n", "csv");
        match parse_corpus(f.path(), CorpusFormat::Csv) {
            Err(Error::IllegalChar { id, ch, offset }) => {
                assert_eq!(id, "q");
                assert_eq!(ch, 'J');
                assert_eq!(offset, 2);
            }
            other => panic!("expected IllegalChar, got {other:?}"),
        }
    }

    #[test]
    fn digit_in_sequence_rejected_with_offset() {
        let f = write_tmp("id,receptor_class,sequence\nq,c,AB9\n", "csv");
        match parse_corpus(f.path(), CorpusFormat::Csv) {
            Err(Error::IllegalChar { ch, offset, .. }) => {
                assert_eq!(ch, '9');
                assert_eq!(offset, 2);
            }
            other => panic!("expected IllegalChar, got {other:?}"),
        }
    }

    #[test]
    fn malformed_row_names_line_number() {
        let f = write_tmp("id,receptor_class,sequence\nok,c,AAA\nbad_row\n", "csv");
        match parse_corpus(f.path(), CorpusFormat::Csv) {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected Malformed, got {other:?}"),
        }
    }

    #[test]
    fn filter_boundary_at_370() {
        let records = vec![
            rec("a", "c", &"A".repeat(300)),
            rec("b", "c", &"A".repeat(370)),
            rec("d", "c", &"A".repeat(371)),
        ];
        let kept = filter_corpus(&records, 370);
        assert_eq!(
            kept.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            vec!["a", "b"]
        );
        assert!(filter_corpus(&records, 0).is_empty());
    }

    #[test]
    fn locate_edry_single_match() {
        let r = rec("a", "c", "AAADRYAAAA");
        let hit = locate_motif(&r, MotifKind::EDRY, (0.25, 0.60))
            .unwrap()
            .unwrap();
        assert_eq!(hit.start, 3);
        assert_eq!(hit.mask_positions, vec![3]);
        assert!((hit.position_fraction - 0.3).abs() < 1e-12);
    }

    #[test]
    fn locate_prefers_last_in_window_match() {
        // NPIIY twice, both inside [0.0..min? window [0.1, 1.0]: last wins.
        let r = rec("a", "c", "NPIIYAANPIIYAAAA");
        let hit = locate_motif(&r, MotifKind::NPxxY, (0.1, 1.0))
            .unwrap()
            .unwrap();
        assert_eq!(hit.start, 7);
    }

    #[test]
    fn locate_out_of_window_is_none() {
        let r = rec("a", "c", "DRYAAAAAAAAAAAAAAAAA"); // frac 0.0
        assert!(locate_motif(&r, MotifKind::EDRY, (0.25, 0.60))
            .unwrap()
            .is_none());
    }

    #[test]
    fn motif_masking_example() {
        let recs = vec![rec("a", "c", "ANPKLYA")];
        // NPxxY at start 1, fraction 1/7 ≈ 0.14 — widen the window by using
        // build over a record where the default window applies.
        let hit = locate_motif(&recs[0], MotifKind::NPxxY, (0.0, 1.0))
            .unwrap()
            .unwrap();
        let pair = pair_from_positions(&recs[0], &hit.mask_positions);
        assert_eq!(pair.input_seq, "ANPJJYA");
        assert_eq!(pair.label_seq, "JJJKLJJ");
        assert_eq!(pair.mask_positions, vec![3, 4]);
    }

    #[test]
    fn span_dataset_boundary() {
        let records = vec![
            rec("short", "c", &"A".repeat(104)),
            rec("exact", "c", &"A".repeat(105)),
        ];
        let pairs = build_span_dataset(&records, 100, 5).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].source_id, "exact");
        assert_eq!(pairs[0].mask_positions, (100..105).collect::<Vec<_>>());
    }

    #[test]
    fn span_dataset_masks_exact_window() {
        let records = vec![rec("r", "c", &"ACDEF".repeat(22))]; // len 110
        let pairs = build_span_dataset(&records, 100, 5).unwrap();
        let jays: Vec<usize> = pairs[0]
            .input_seq
            .chars()
            .enumerate()
            .filter(|(_, c)| *c == 'J')
            .map(|(i, _)| i)
            .collect();
        assert_eq!(jays, (100..105).collect::<Vec<_>>());
    }

    #[test]
    fn split_sizes_match_floor_rule() {
        let pairs: Vec<RawMaskedPair> = (0..238)
            .map(|i| RawMaskedPair {
                input_seq: "J".into(),
                label_seq: "A".into(),
                mask_positions: vec![0],
                source_id: format!("r{i}"),
            })
            .collect();
        let (train, test) = split_dataset(&pairs, 0.75, 7).unwrap();
        assert_eq!(train.len(), 178);
        assert_eq!(test.len(), 60);
        let (train4, test4) = split_dataset(&pairs[..4], 0.75, 7).unwrap();
        assert_eq!((train4.len(), test4.len()), (3, 1));
    }

    #[test]
    fn split_empty_is_error() {
        assert!(matches!(
            split_dataset(&[], 0.75, 0),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn stats_bins_and_classes() {
        let records = vec![
            rec("a", "c1", &"A".repeat(101)),
            rec("b", "c2", &"A".repeat(109)),
        ];
        let stats = corpus_stats(&records);
        assert_eq!(
            stats.length_histogram,
            vec![HistBin {
                lo: 100,
                hi: 110,
                count: 2
            }]
        );
        assert_eq!(
            stats.class_counts,
            vec![("c1".into(), 1), ("c2".into(), 1)]
        );
        assert!(corpus_stats(&[]).length_histogram.is_empty());
    }

    #[test]
    fn pairs_csv_round_trip() {
        let pair = RawMaskedPair {
            input_seq: "ANPJJYA".into(),
            label_seq: "JJJKLJJ".into(),
            mask_positions: vec![3, 4],
            source_id: "a".into(),
        };
        let csv = pairs_to_csv(&[("cls".into(), pair.clone())]);
        let f = write_tmp(&csv, "csv");
        let back = pairs_from_csv(f.path()).unwrap();
        assert_eq!(back, vec![("cls".into(), pair)]);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn residue_seq(max_len: usize) -> impl Strategy<Value = String> {
            proptest::collection::vec(
                proptest::sample::select("ACDEFGHIKLMNPQRSTVWY".chars().collect::<Vec<_>>()),
                1..max_len,
            )
            .prop_map(|cs| cs.into_iter().collect())
        }

        proptest! {
            /// Positions of 'J' in the input and non-'J' in the label are
            /// the identical set for every emitted pair.
            #[test]
            fn mask_positions_are_consistent(seq in residue_seq(120), start in 0usize..100, count in 1usize..8) {
                let records = vec![rec("r", "c", &seq)];
                for pair in build_span_dataset(&records, start, count).unwrap() {
                    let input_j: Vec<usize> = pair.input_seq.chars().enumerate()
                        .filter(|(_, c)| *c == 'J').map(|(i, _)| i).collect();
                    let label_truth: Vec<usize> = pair.label_seq.chars().enumerate()
                        .filter(|(_, c)| *c != 'J').map(|(i, _)| i).collect();
                    prop_assert_eq!(input_j.clone(), label_truth);
                    prop_assert_eq!(input_j, pair.mask_positions);
                }
            }

            #[test]
            fn filter_is_idempotent(lens in proptest::collection::vec(1usize..500, 0..40)) {
                let records: Vec<ProteinRecord> = lens.iter().enumerate()
                    .map(|(i, &l)| rec(&format!("r{i}"), "c", &"A".repeat(l)))
                    .collect();
                let once = filter_corpus(&records, 370);
                let twice = filter_corpus(&once, 370);
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn split_is_deterministic_partition(n in 1usize..60, seed in 0u64..1000) {
                let pairs: Vec<RawMaskedPair> = (0..n).map(|i| RawMaskedPair {
                    input_seq: "J".into(),
                    label_seq: "A".into(),
                    mask_positions: vec![0],
                    source_id: format!("r{i}"),
                }).collect();
                let (tr1, te1) = split_dataset(&pairs, 0.75, seed).unwrap();
                let (tr2, te2) = split_dataset(&pairs, 0.75, seed).unwrap();
                prop_assert_eq!(&tr1, &tr2);
                prop_assert_eq!(&te1, &te2);
                // Disjoint union equals the input set.
                let mut all: Vec<String> = tr1.iter().chain(te1.iter())
                    .map(|p| p.source_id.clone()).collect();
                all.sort();
                let mut expected: Vec<String> = pairs.iter().map(|p| p.source_id.clone()).collect();
                expected.sort();
                prop_assert_eq!(all, expected);
            }

            /// locate_motif agrees with an independent brute-force scan.
            #[test]
            fn locate_agrees_with_bruteforce(seq in residue_seq(80)) {
                let record = rec("r", "c", &seq);
                for kind in MotifKind::ALL {
                    let (lo, hi) = kind.default_window();
                    let got = locate_motif(&record, kind, (lo, hi)).unwrap();
                    // Oracle: regex-free exhaustive scan.
                    let chars: Vec<char> = seq.chars().collect();
                    let pat = kind.pattern();
                    let mut expected: Option<usize> = None;
                    if chars.len() >= pat.len() {
                        for start in 0..=chars.len() - pat.len() {
                            let ok = pat.iter().enumerate().all(|(k, e)| match e {
                                PatternElem::Fixed(c) => chars[start + k] == *c,
                                PatternElem::Wildcard => true,
                                PatternElem::Choice(set) => set.contains(&chars[start + k]),
                            });
                            let frac = start as f64 / chars.len() as f64;
                            if ok && frac >= lo && frac <= hi {
                                expected = Some(start);
                            }
                        }
                    }
                    prop_assert_eq!(got.map(|h| h.start), expected);
                }
            }
        }
    }
}
