// SPDX-License-Identifier: MIT OR Apache-2.0

//! Byte-level BPE tokenizer matching the published GPT-2 encoder.
//!
//! Loads `vocab.json` + `merges.txt` and reproduces the reference
//! pre-tokenization split, byte-to-unicode mapping, and merge order.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use crate::error::{Error, Result};

/// GPT-2 byte-level BPE encoder/decoder.
pub struct Tokenizer {
    vocab: HashMap<String, u32>,
    inv_vocab: HashMap<u32, String>,
    merge_ranks: HashMap<(String, String), usize>,
    byte_encoder: [char; 256],
    byte_decoder: HashMap<char, u8>,
    // per-word BPE results are deterministic, so memoize them
    cache: Mutex<HashMap<String, Vec<u32>>>,
}

impl Tokenizer {
    pub fn from_files(vocab_path: &Path, merges_path: &Path) -> Result<Self> {
        let vocab_text = std::fs::read_to_string(vocab_path)
            .map_err(|e| Error::io(vocab_path.display().to_string(), e))?;
        let merges_text = std::fs::read_to_string(merges_path)
            .map_err(|e| Error::io(merges_path.display().to_string(), e))?;
        Self::from_strs(&vocab_text, &merges_text)
    }

    pub fn from_strs(vocab_json: &str, merges: &str) -> Result<Self> {
        let vocab: HashMap<String, u32> =
            serde_json::from_str(vocab_json).map_err(|e| Error::Parse {
                what: "vocab.json".into(),
                detail: e.to_string(),
            })?;
        let inv_vocab = vocab.iter().map(|(k, v)| (*v, k.clone())).collect();

        let mut merge_ranks = HashMap::new();
        for (rank, line) in merges
            .lines()
            .filter(|l| !l.starts_with("#version") && !l.is_empty())
            .enumerate()
        {
            let mut it = line.split(' ');
            let (a, b) = match (it.next(), it.next()) {
                (Some(a), Some(b)) => (a.to_string(), b.to_string()),
                _ => {
                    return Err(Error::Parse {
                        what: "merges.txt".into(),
                        detail: format!("bad merge line: {line:?}"),
                    })
                }
            };
            merge_ranks.insert((a, b), rank);
        }

        let byte_encoder = bytes_to_unicode();
        let byte_decoder = byte_encoder
            .iter()
            .enumerate()
            .map(|(b, c)| (*c, b as u8))
            .collect();

        Ok(Tokenizer {
            vocab,
            inv_vocab,
            merge_ranks,
            byte_encoder,
            byte_decoder,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Encode text to token ids. Any string is encodable.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for piece in pre_tokenize(text) {
            let mapped: String = piece
                .as_bytes()
                .iter()
                .map(|&b| self.byte_encoder[b as usize])
                .collect();
            if let Some(ids) = self.cache.lock().unwrap().get(&mapped) {
                out.extend_from_slice(ids);
                continue;
            }
            let ids = self.bpe(&mapped);
            out.extend_from_slice(&ids);
            self.cache.lock().unwrap().insert(mapped, ids);
        }
        out
    }

    /// Decode token ids back to text. Unknown ids decode to nothing.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut bytes = Vec::new();
        for id in ids {
            if let Some(tok) = self.inv_vocab.get(id) {
                for c in tok.chars() {
                    if let Some(&b) = self.byte_decoder.get(&c) {
                        bytes.push(b);
                    }
                }
            }
        }
        String::from_utf8_lossy(&bytes).into_owned()
    }

    /// Id for a string that must map to exactly one token, e.g. `" Mary"`.
    pub fn single_token(&self, text: &str) -> Option<u32> {
        let ids = self.encode(text);
        if ids.len() == 1 {
            Some(ids[0])
        } else {
            None
        }
    }

    fn bpe(&self, mapped: &str) -> Vec<u32> {
        let mut parts: Vec<String> = mapped.chars().map(|c| c.to_string()).collect();
        if parts.is_empty() {
            return Vec::new();
        }
        loop {
            let mut best: Option<(usize, usize)> = None; // (rank, index)
            for i in 0..parts.len() - 1 {
                if let Some(&rank) = self
                    .merge_ranks
                    .get(&(parts[i].clone(), parts[i + 1].clone()))
                {
                    if best.is_none_or(|(r, _)| rank < r) {
                        best = Some((rank, i));
                    }
                }
            }
            let Some((_, i)) = best else { break };
            let merged = format!("{}{}", parts[i], parts[i + 1]);
            // merge every occurrence of this pair, left to right
            let (a, b) = (parts[i].clone(), parts[i + 1].clone());
            let mut next = Vec::with_capacity(parts.len());
            let mut j = 0;
            while j < parts.len() {
                if j + 1 < parts.len() && parts[j] == a && parts[j + 1] == b {
                    next.push(merged.clone());
                    j += 2;
                } else {
                    next.push(parts[j].clone());
                    j += 1;
                }
            }
            parts = next;
            if parts.len() == 1 {
                break;
            }
        }
        parts
            .iter()
            .filter_map(|p| self.vocab.get(p).copied())
            .collect()
    }
}

/// The reference byte-to-unicode table: printable bytes map to themselves,
/// the rest are shifted into unused codepoints above 255.
fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut assigned = [false; 256];
    let printable = (b'!' as u32..=b'~' as u32)
        .chain(0xa1..=0xac)
        .chain(0xae..=0xff);
    for b in printable {
        table[b as usize] = char::from_u32(b).unwrap();
        assigned[b as usize] = true;
    }
    let mut n = 0u32;
    for b in 0..256 {
        if !assigned[b] {
            table[b] = char::from_u32(256 + n).unwrap();
            n += 1;
        }
    }
    table
}

/// Reference pre-tokenization.
///
/// Mirrors the pattern
/// `'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+`
/// as a hand-rolled scanner, since the lookahead branch is not expressible
/// with the `regex` crate. Alternatives are tried in the reference order at
/// each position.
pub fn pre_tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let len = match_at(&chars, i);
        debug_assert!(len > 0);
        pieces.push(chars[i..i + len].iter().collect());
        i += len;
    }
    pieces
}

fn match_at(chars: &[char], i: usize) -> usize {
    // contraction alternatives
    if chars[i] == '\'' {
        for suffix in ["s", "t", "re", "ve", "m", "ll", "d"] {
            let scount = suffix.chars().count();
            if chars.len() - i > scount
                && chars[i + 1..i + 1 + scount]
                    .iter()
                    .copied()
                    .eq(suffix.chars())
            {
                return 1 + scount;
            }
            // '[suffix] at end of text also matches
            if chars.len() - i == scount + 1
                && chars[i + 1..].iter().copied().eq(suffix.chars())
            {
                return 1 + scount;
            }
        }
    }

    // ` ?\p{L}+`, ` ?\p{N}+`, ` ?[^\s\p{L}\p{N}]+`
    for pred in [is_letter, is_number, is_other] {
        let start = if chars[i] == ' ' { i + 1 } else { i };
        if start < chars.len() && pred(chars[start]) {
            let mut j = start;
            while j < chars.len() && pred(chars[j]) {
                j += 1;
            }
            return j - i;
        }
    }

    // `\s+(?!\S)` with backtracking, then `\s+`
    if chars[i].is_whitespace() {
        let mut j = i;
        while j < chars.len() && chars[j].is_whitespace() {
            j += 1;
        }
        if j == chars.len() {
            return j - i; // lookahead succeeds at end of text
        }
        if j - i > 1 {
            return j - i - 1; // backtrack one so the lookahead sees whitespace
        }
        return 1; // single whitespace char before non-space: plain `\s+`
    }

    // unreachable for valid chars, but never loop forever
    1
}

fn is_letter(c: char) -> bool {
    c.is_alphabetic()
}

fn is_number(c: char) -> bool {
    c.is_numeric()
}

fn is_other(c: char) -> bool {
    !c.is_whitespace() && !c.is_alphabetic() && !c.is_numeric()
}
