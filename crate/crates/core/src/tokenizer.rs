//! Fixed 30-token vocabulary and conversion of masked sequence pairs into
//! padded token-id arrays with `[CLS]`/`[MASK]`/`[PAD]` semantics.

use crate::corpus::RawMaskedPair;
use crate::error::{Error, Result};

/// Label value for positions excluded from loss and accuracy. Negative, so
/// it can never collide with the token ids `0..30`.
pub const IGNORE: i32 = -100;

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const MASK: u32 = 4;

/// Token table: five specials followed by the 25 residue letters in the
/// published protein-LM order, so externally converted checkpoints index
/// identically.
const TOKENS: [&str; 30] = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "L", "A", "G", "V", "E", "S", "I", "K", "R",
    "D", "T", "P", "N", "Q", "F", "Y", "M", "H", "C", "W", "X", "U", "B", "Z", "O",
];

/// The fixed tokenizer vocabulary (size 30, no `'J'`).
#[derive(Debug, Clone)]
pub struct Vocab {
    residue_to_id: [Option<u32>; 26],
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let mut residue_to_id = [None; 26];
        for (id, token) in TOKENS.iter().enumerate().skip(5) {
            let ch = token.as_bytes()[0];
            residue_to_id[(ch - b'A') as usize] = Some(id as u32);
        }
        Vocab { residue_to_id }
    }

    pub fn size(&self) -> usize {
        TOKENS.len()
    }

    /// Token id of a residue letter; `None` for `'J'` or non-letters.
    pub fn residue_id(&self, ch: char) -> Option<u32> {
        if ch.is_ascii_uppercase() {
            self.residue_to_id[(ch as u8 - b'A') as usize]
        } else {
            None
        }
    }

    pub fn token(&self, id: u32) -> Result<&'static str> {
        TOKENS
            .get(id as usize)
            .copied()
            .ok_or(Error::UnknownTokenId {
                id,
                size: TOKENS.len(),
            })
    }

    /// `index,token` rows for the audit dump.
    pub fn dump(&self) -> Vec<(u32, &'static str)> {
        TOKENS
            .iter()
            .enumerate()
            .map(|(i, &t)| (i as u32, t))
            .collect()
    }

    /// FNV-1a hash of the `index,token` dump; embedded in checkpoints so a
    /// file written under a different vocabulary is rejected at load.
    pub fn fingerprint(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for (i, t) in self.dump() {
            for byte in format!("{i},{t}\n").bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        hash
    }
}

/// One tokenized training example, padded to a fixed length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedExample {
    pub input_ids: Vec<u32>,
    /// `IGNORE` everywhere except supervised (masked) positions.
    pub label_ids: Vec<i32>,
    /// 1 for real tokens including `[CLS]`, 0 for `[PAD]`.
    pub attention_mask: Vec<u8>,
    /// Token indices of the masked positions (sequence index + 1 for `[CLS]`).
    pub mask_positions: Vec<usize>,
    pub source_id: String,
}

impl MaskedExample {
    /// Number of real tokens, `[CLS]` included.
    pub fn n_tokens(&self) -> usize {
        self.attention_mask.iter().filter(|&&b| b == 1).count()
    }
}

/// Encodes a masked pair into fixed-length id arrays: `[CLS]` first, then
/// the residues with `'J'` replaced by `[MASK]`, then `[PAD]` up to
/// `max_len`. Labels carry the ground-truth ids at masked positions and
/// `IGNORE` everywhere else.
pub fn encode(vocab: &Vocab, pair: &RawMaskedPair, max_len: usize) -> Result<MaskedExample> {
    let seq_len = pair.input_seq.len();
    if seq_len + 1 > max_len {
        return Err(Error::SequenceTooLong {
            id: pair.source_id.clone(),
            len: seq_len,
            max_len,
        });
    }
    let mut input_ids = vec![PAD; max_len];
    let mut label_ids = vec![IGNORE; max_len];
    let mut attention_mask = vec![0u8; max_len];
    let mut mask_positions = Vec::with_capacity(pair.mask_positions.len());
    input_ids[0] = CLS;
    attention_mask[0] = 1;
    let labels: Vec<char> = pair.label_seq.chars().collect();
    for (i, ch) in pair.input_seq.chars().enumerate() {
        let pos = i + 1;
        attention_mask[pos] = 1;
        if ch == 'J' {
            input_ids[pos] = MASK;
            mask_positions.push(pos);
            let truth = labels[i];
            let id = vocab
                .residue_id(truth)
                .ok_or_else(|| Error::IllegalChar {
                    id: pair.source_id.clone(),
                    ch: truth,
                    offset: i,
                })?;
            label_ids[pos] = id as i32;
        } else {
            input_ids[pos] = vocab.residue_id(ch).ok_or_else(|| Error::IllegalChar {
                id: pair.source_id.clone(),
                ch,
                offset: i,
            })?;
        }
    }
    Ok(MaskedExample {
        input_ids,
        label_ids,
        attention_mask,
        mask_positions,
        source_id: pair.source_id.clone(),
    })
}

/// Encodes a plain sequence (maskable `'J'` characters allowed) without any
/// supervision; labels are all `IGNORE`. Used for prediction and embedding
/// extraction.
pub fn encode_query(vocab: &Vocab, id: &str, sequence: &str, max_len: usize) -> Result<MaskedExample> {
    let seq_len = sequence.len();
    if seq_len + 1 > max_len {
        return Err(Error::SequenceTooLong {
            id: id.to_string(),
            len: seq_len,
            max_len,
        });
    }
    let mut input_ids = vec![PAD; max_len];
    let mut attention_mask = vec![0u8; max_len];
    let mut mask_positions = Vec::new();
    input_ids[0] = CLS;
    attention_mask[0] = 1;
    for (i, ch) in sequence.chars().enumerate() {
        let pos = i + 1;
        attention_mask[pos] = 1;
        if ch == 'J' {
            input_ids[pos] = MASK;
            mask_positions.push(pos);
        } else {
            input_ids[pos] = vocab.residue_id(ch).ok_or_else(|| Error::IllegalChar {
                id: id.to_string(),
                ch,
                offset: i,
            })?;
        }
    }
    Ok(MaskedExample {
        input_ids,
        label_ids: vec![IGNORE; max_len],
        attention_mask,
        mask_positions,
        source_id: id.to_string(),
    })
}

/// Maps ids back to text: drops `[PAD]`/`[CLS]`/`[SEP]`, renders `[MASK]`
/// as `'J'` and `[UNK]` as `'?'`.
pub fn decode(vocab: &Vocab, ids: &[u32]) -> Result<String> {
    let mut out = String::with_capacity(ids.len());
    for &id in ids {
        if id as usize >= vocab.size() {
            return Err(Error::UnknownTokenId {
                id,
                size: vocab.size(),
            });
        }
        match id {
            PAD | CLS | SEP => {}
            MASK => out.push('J'),
            UNK => out.push('?'),
            _ => out.push_str(vocab.token(id)?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(input: &str, label: &str) -> RawMaskedPair {
        let mask_positions = input
            .chars()
            .enumerate()
            .filter(|(_, c)| *c == 'J')
            .map(|(i, _)| i)
            .collect();
        RawMaskedPair {
            input_seq: input.to_string(),
            label_seq: label.to_string(),
            mask_positions,
            source_id: "t".to_string(),
        }
    }

    #[test]
    fn vocab_is_bijective_with_pad_zero() {
        let v = Vocab::new();
        assert_eq!(v.size(), 30);
        assert_eq!(v.token(PAD).unwrap(), "[PAD]");
        assert_eq!(PAD, 0);
        let mut seen = std::collections::HashSet::new();
        for (i, t) in v.dump() {
            assert!(seen.insert(t), "duplicate token {t}");
            if t.len() == 1 {
                assert_eq!(v.residue_id(t.chars().next().unwrap()), Some(i));
            }
        }
        assert_eq!(v.residue_id('J'), None);
    }

    #[test]
    fn encode_spec_example() {
        let v = Vocab::new();
        let ex = encode(&v, &pair("NPJJY", "JJKLJ"), 8).unwrap();
        assert_eq!(ex.input_ids, vec![2, 17, 16, 4, 4, 20, 0, 0]);
        assert_eq!(ex.attention_mask, vec![1, 1, 1, 1, 1, 1, 0, 0]);
        assert_eq!(ex.mask_positions, vec![3, 4]);
        let supervised: Vec<(usize, i32)> = ex
            .label_ids
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != IGNORE)
            .map(|(i, &l)| (i, l))
            .collect();
        assert_eq!(supervised, vec![(3, 12), (4, 5)]); // K, L
    }

    #[test]
    fn encode_empty_mask_set() {
        let v = Vocab::new();
        let ex = encode(&v, &pair("NPY", "JJJ"), 8).unwrap();
        assert!(ex.mask_positions.is_empty());
        assert!(ex.input_ids.iter().all(|&id| id != MASK));
        assert!(ex.label_ids.iter().all(|&l| l == IGNORE));
    }

    #[test]
    fn encode_too_long_names_id() {
        let v = Vocab::new();
        match encode(&v, &pair("NPXXY", "JJJJJ"), 5) {
            Err(Error::SequenceTooLong { id, .. }) => assert_eq!(id, "t"),
            other => panic!("expected SequenceTooLong, got {other:?}"),
        }
    }

    #[test]
    fn attention_mask_sums_to_len_plus_one() {
        let v = Vocab::new();
        let ex = encode(&v, &pair("ACDJ", "JJJW"), 10).unwrap();
        assert_eq!(ex.n_tokens(), 5);
    }

    #[test]
    fn decode_examples() {
        let v = Vocab::new();
        assert_eq!(decode(&v, &[2, 17, 16, 0]).unwrap(), "NP");
        assert_eq!(decode(&v, &[4]).unwrap(), "J");
        assert!(matches!(
            decode(&v, &[30]),
            Err(Error::UnknownTokenId { .. })
        ));
    }
}
