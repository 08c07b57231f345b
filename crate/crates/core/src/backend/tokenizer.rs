//! Byte-level BPE tokenizer compatible with the CLIP text encoder.
//!
//! Reads the standard merges file (`bpe_simple_vocab_16e6.txt`, optionally
//! gzipped). Vocabulary layout: 256 byte symbols, the same 256 with `</w>`,
//! one entry per merge, then `<|startoftext|>` and `<|endoftext|>`; 49,408
//! entries for the published file.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use regex::Regex;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const START_OF_TEXT: &str = "<|startoftext|>";
pub const END_OF_TEXT: &str = "<|endoftext|>";
/// Text-encoder context length, including the start and end markers.
pub const CONTEXT_LENGTH: usize = 77;
/// Merges kept from the published table.
const MAX_MERGES: usize = 49152 - 256 - 2;

/// Output of [`BpeTokenizer::tokenize`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedText {
    /// Zero-padded to [`CONTEXT_LENGTH`].
    pub ids: Vec<i64>,
    /// Index of the end-of-text marker (the pooled position).
    pub eot_index: usize,
    pub truncated: bool,
}

pub struct BpeTokenizer {
    encoder: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
    byte_encoder: [char; 256],
    pattern: Regex,
    vocab_size: usize,
}

/// GPT-2 style reversible byte → printable-char mapping, in vocabulary order
/// (printable bytes first).
fn byte_symbols() -> Vec<(u8, char)> {
    let mut printable: Vec<u32> = (u32::from(b'!')..=u32::from(b'~'))
        .chain(0xA1..=0xAC)
        .chain(0xAE..=0xFF)
        .collect();
    let mut chars: Vec<u32> = printable.clone();
    let mut n = 0;
    for b in 0..256u32 {
        if !printable.contains(&b) {
            printable.push(b);
            chars.push(256 + n);
            n += 1;
        }
    }
    printable
        .into_iter()
        .zip(chars)
        .map(|(b, c)| (b as u8, char::from_u32(c).expect("valid scalar")))
        .collect()
}

fn bytes_to_unicode() -> [char; 256] {
    let mut table = ['\0'; 256];
    for (b, c) in byte_symbols() {
        table[b as usize] = c;
    }
    table
}

impl BpeTokenizer {
    /// Loads a merges file; `.gz` files are decompressed.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = if path.extension().is_some_and(|e| e == "gz") {
            let mut s = String::new();
            flate2::read::GzDecoder::new(&raw[..])
                .read_to_string(&mut s)
                .map_err(|e| Error::io(path, e))?;
            s
        } else {
            String::from_utf8(raw)
                .map_err(|e| Error::Backend(format!("{}: not UTF-8: {e}", path.display())))?
        };
        Self::from_merges(&text)
    }

    /// Builds the tokenizer from merges text (first line is a header).
    pub fn from_merges(text: &str) -> Result<Self> {
        let byte_encoder = bytes_to_unicode();
        let ordered = byte_symbols();
        let mut vocab: Vec<String> = ordered.iter().map(|(_, c)| c.to_string()).collect();
        vocab.extend(ordered.iter().map(|(_, c)| format!("{c}</w>")));

        let mut ranks = HashMap::new();
        for (rank, line) in text
            .split('\n')
            .skip(1)
            .take(MAX_MERGES)
            .filter(|l| !l.trim().is_empty())
            .enumerate()
        {
            let mut parts = line.split_whitespace();
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Backend(format!(
                    "malformed merge on line {}: {line:?}",
                    rank + 2
                )));
            };
            vocab.push(format!("{a}{b}"));
            ranks.insert((a.to_string(), b.to_string()), rank);
        }
        vocab.push(START_OF_TEXT.to_string());
        vocab.push(END_OF_TEXT.to_string());

        let vocab_size = vocab.len();
        let encoder = vocab
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, i as u32))
            .collect();
        let pattern = Regex::new(
            r"<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+",
        )
        .expect("static pattern");
        Ok(Self {
            encoder,
            ranks,
            byte_encoder,
            pattern,
            vocab_size,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn token_id(&self, symbol: &str) -> Option<u32> {
        self.encoder.get(symbol).copied()
    }

    fn bpe(&self, token: &str) -> Vec<String> {
        if token == START_OF_TEXT || token == END_OF_TEXT {
            return vec![token.to_string()];
        }
        let chars: Vec<char> = token.chars().collect();
        let mut word: Vec<String> = chars.iter().map(|c| c.to_string()).collect();
        if let Some(last) = word.last_mut() {
            last.push_str("</w>");
        }
        while word.len() > 1 {
            let best = word
                .windows(2)
                .filter_map(|p| {
                    self.ranks
                        .get(&(p[0].clone(), p[1].clone()))
                        .map(|&r| (r, p))
                })
                .min_by_key(|(r, _)| *r);
            let Some((_, pair)) = best else { break };
            let (first, second) = (pair[0].clone(), pair[1].clone());
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && word[i] == first && word[i + 1] == second {
                    merged.push(format!("{first}{second}"));
                    i += 2;
                } else {
                    merged.push(word[i].clone());
                    i += 1;
                }
            }
            word = merged;
        }
        word
    }

    /// BPE ids for `text`, without start/end markers.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let cleaned = clean(text);
        let mut ids = Vec::new();
        for m in self.pattern.find_iter(&cleaned) {
            let mapped: String = m
                .as_str()
                .bytes()
                .map(|b| self.byte_encoder[b as usize])
                .collect();
            let mapped = if m.as_str() == START_OF_TEXT || m.as_str() == END_OF_TEXT {
                m.as_str().to_string()
            } else {
                mapped
            };
            for piece in self.bpe(&mapped) {
                if let Some(&id) = self.encoder.get(&piece) {
                    ids.push(id);
                }
            }
        }
        ids
    }

    /// Start marker, ids, end marker; truncated to [`CONTEXT_LENGTH`] and zero-padded.
    pub fn tokenize(&self, text: &str) -> TokenizedText {
        let sot = self.encoder[START_OF_TEXT];
        let eot = self.encoder[END_OF_TEXT];
        let body = self.encode(text);
        let room = CONTEXT_LENGTH - 2;
        let truncated = body.len() > room;
        let mut ids: Vec<i64> = Vec::with_capacity(CONTEXT_LENGTH);
        ids.push(i64::from(sot));
        ids.extend(body.iter().take(room).map(|&i| i64::from(i)));
        ids.push(i64::from(eot));
        let eot_index = ids.len() - 1;
        ids.resize(CONTEXT_LENGTH, 0);
        TokenizedText {
            ids,
            eot_index,
            truncated,
        }
    }
}

/// Lower-cases, unescapes common HTML entities and collapses whitespace.
fn clean(text: &str) -> String {
    let unescaped = text
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&amp;", "&");
    unescaped
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Hex SHA-256 of a file, as recorded in export manifests.
pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
