//! Canonical Huffman codes over small symbol alphabets.
//!
//! Tables are built with the classic two-least-frequent merge, with ties
//! broken toward the smaller symbol id so two builds from identical input
//! are byte-identical. Only the code lengths are serialized; codes are
//! reassigned canonically (ascending length, then ascending symbol id), so
//! a table roundtrips through its lengths alone.

use alloc::collections::BinaryHeap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Reverse;

use super::bits::BitReader;
use super::CodecError;

/// Longest code length the format accepts.
///
/// The merge itself cannot exceed ~92 bits with 64-bit frequencies (the
/// Fibonacci worst case overflows first), so the cap only guards tables
/// read from untrusted bytes.
pub const MAX_CODE_LEN: u8 = 120;

// ── Table ───────────────────────────────────────────────────────────────────

/// One decode group: all codes of a single length are contiguous.
#[derive(Debug, Clone, PartialEq, Eq)]
struct LenGroup {
    len: u8,
    first_code: u128,
    first_idx: usize,
    count: u128,
}

/// A canonical prefix code; maps symbol ids to codes and back.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HuffmanTable {
    /// Symbols in canonical order: ascending (length, symbol id).
    symbols: Vec<u16>,
    /// Code length per symbol, parallel to `symbols`.
    lengths: Vec<u8>,
    /// Code word per symbol, parallel to `symbols`.
    codes: Vec<u128>,
    groups: Vec<LenGroup>,
}

impl HuffmanTable {
    /// A table with no symbols; encodes nothing, decodes nothing.
    pub fn empty() -> Self {
        Self::default()
    }

    /// Number of symbols in the alphabet.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    /// True when the alphabet is empty.
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Builds an optimal code from `(symbol, count)` pairs.
    ///
    /// Pairs with a zero count are rejected; symbols must be unique.
    pub fn build(freqs: &[(u16, u64)]) -> Result<Self, CodecError> {
        if freqs.is_empty() {
            return Err(CodecError::Empty);
        }
        for &(sym, count) in freqs {
            if count == 0 {
                return Err(CodecError::InvalidInput(format!(
                    "symbol {sym} has zero frequency"
                )));
            }
        }
        let mut sorted: Vec<(u16, u64)> = freqs.to_vec();
        sorted.sort_unstable_by_key(|&(sym, _)| sym);
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CodecError::InvalidInput(
                "duplicate symbol in frequency map".into(),
            ));
        }

        if sorted.len() == 1 {
            return Self::from_lengths(&[(sorted[0].0, 1)]);
        }

        // Two-least-frequent merge over an arena of tree nodes. Heap entries
        // carry (freq, smallest symbol id in the subtree) so pop order — and
        // therefore the resulting code lengths — is a deterministic function
        // of the input alone.
        struct Node {
            children: Option<(usize, usize)>,
            symbol: u16,
        }
        let mut arena: Vec<Node> = Vec::with_capacity(2 * sorted.len() - 1);
        let mut heap: BinaryHeap<Reverse<(u64, u16, usize)>> =
            BinaryHeap::with_capacity(sorted.len());
        for &(sym, count) in &sorted {
            heap.push(Reverse((count, sym, arena.len())));
            arena.push(Node {
                children: None,
                symbol: sym,
            });
        }
        while heap.len() > 1 {
            let Reverse((fa, ta, a)) = heap.pop().unwrap();
            let Reverse((fb, tb, b)) = heap.pop().unwrap();
            heap.push(Reverse((fa + fb, ta.min(tb), arena.len())));
            arena.push(Node {
                children: Some((a, b)),
                symbol: 0,
            });
        }

        let Reverse((_, _, root)) = heap.pop().unwrap();
        let mut pairs: Vec<(u16, u8)> = Vec::with_capacity(sorted.len());
        let mut stack: Vec<(usize, u8)> = Vec::with_capacity(arena.len());
        stack.push((root, 0));
        while let Some((idx, depth)) = stack.pop() {
            match arena[idx].children {
                Some((a, b)) => {
                    stack.push((a, depth + 1));
                    stack.push((b, depth + 1));
                }
                None => pairs.push((arena[idx].symbol, depth)),
            }
        }
        Self::from_lengths(&pairs)
    }

    /// Reconstructs a table from `(symbol, length)` pairs.
    ///
    /// Lengths must satisfy Kraft equality (a complete code) except for the
    /// degenerate single-symbol alphabet, which must use length 1.
    pub fn from_lengths(pairs: &[(u16, u8)]) -> Result<Self, CodecError> {
        if pairs.is_empty() {
            return Ok(Self::empty());
        }
        let mut by_sym: Vec<u16> = pairs.iter().map(|p| p.0).collect();
        by_sym.sort_unstable();
        if let Some(w) = by_sym.windows(2).find(|w| w[0] == w[1]) {
            return Err(CodecError::MalformedStream(format!(
                "symbol {} listed twice in code table",
                w[0]
            )));
        }
        let mut ordered: Vec<(u16, u8)> = pairs.to_vec();
        ordered.sort_unstable_by_key(|&(sym, len)| (len, sym));
        for &(sym, len) in &ordered {
            if len == 0 || len > MAX_CODE_LEN {
                return Err(CodecError::MalformedStream(format!(
                    "symbol {sym} has code length {len}, outside 1..={MAX_CODE_LEN}"
                )));
            }
        }
        if ordered.len() == 1 {
            if ordered[0].1 != 1 {
                return Err(CodecError::MalformedStream(
                    "single-symbol table must use a 1-bit code".into(),
                ));
            }
        } else {
            // Kraft equality: Σ 2^(-len) = 1, scaled by 2^127 to stay integral.
            let mut kraft: u128 = 0;
            for &(_, len) in &ordered {
                kraft = kraft
                    .checked_add(1u128 << (127 - len))
                    .ok_or_else(|| CodecError::MalformedStream("code lengths overlap".into()))?;
            }
            if kraft != 1u128 << 127 {
                return Err(CodecError::MalformedStream(
                    "code lengths do not form a complete prefix code".into(),
                ));
            }
        }

        let mut symbols = Vec::with_capacity(ordered.len());
        let mut lengths = Vec::with_capacity(ordered.len());
        let mut codes = Vec::with_capacity(ordered.len());
        let mut groups: Vec<LenGroup> = Vec::new();
        let mut code: u128 = 0;
        let mut prev_len: u8 = 0;
        for (idx, &(sym, len)) in ordered.iter().enumerate() {
            if idx == 0 {
                code = 0;
            } else {
                code = (code + 1) << (len - prev_len);
            }
            prev_len = len;
            symbols.push(sym);
            lengths.push(len);
            codes.push(code);
            match groups.last_mut() {
                Some(g) if g.len == len => g.count += 1,
                _ => groups.push(LenGroup {
                    len,
                    first_code: code,
                    first_idx: idx,
                    count: 1,
                }),
            }
        }
        Ok(Self {
            symbols,
            lengths,
            codes,
            groups,
        })
    }

    /// Canonical `(symbol, length)` pairs, the table's serialized form.
    pub fn symbol_lengths(&self) -> impl Iterator<Item = (u16, u8)> + '_ {
        self.symbols
            .iter()
            .zip(self.lengths.iter())
            .map(|(&s, &l)| (s, l))
    }

    /// Code word and bit length for `symbol`, if it is in the alphabet.
    pub fn encode_symbol(&self, symbol: u16) -> Option<(u128, u8)> {
        // Alphabets here are tiny (≤ a few hundred symbols); a scan beats
        // maintaining a side map.
        self.symbols
            .iter()
            .position(|&s| s == symbol)
            .map(|i| (self.codes[i], self.lengths[i]))
    }

    /// Decodes one symbol starting at bit `pos`, returning it and the
    /// position one past the code's final bit.
    pub fn decode(&self, stream: &BitReader<'_>, mut pos: u64) -> Result<(u16, u64), CodecError> {
        let mut code: u128 = 0;
        let mut have: u8 = 0;
        for g in &self.groups {
            while have < g.len {
                let bit = stream.bit(pos).ok_or_else(|| {
                    CodecError::MalformedStream("bit stream ended mid-code".into())
                })?;
                code = (code << 1) | bit as u128;
                pos += 1;
                have += 1;
            }
            if code >= g.first_code && code - g.first_code < g.count {
                let idx = g.first_idx + (code - g.first_code) as usize;
                return Ok((self.symbols[idx], pos));
            }
        }
        Err(CodecError::MalformedStream(
            "bit pattern matches no code".into(),
        ))
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
