//! Jacobi fixed-point decoding over a deterministic next-token predictor.
//!
//! All `N` positions start from random codes and are recomputed in parallel from the
//! current estimates. Position `i` is final once every estimate before it is final, so the
//! accepted prefix grows by at least one per sweep and the result equals sequential
//! decoding for any deterministic predictor.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, FormatError, Result};
use crate::random;

/// Sweep cap before falling back to sequential decoding.
pub const DEFAULT_CAP: usize = 30;

/// Greedy next-token map. Must be pure: equal arguments give equal results.
pub trait Predictor: Sync {
    fn vocab_size(&self) -> u32;

    /// Code at `position` (0-based) given the codes before it.
    fn next(&self, prefix: &[u32], position: usize, context: &[u8]) -> u32;
}

/// Predictor backed by a closure.
pub struct FnPredictor<F> {
    vocab: u32,
    f: F,
}

impl<F> FnPredictor<F>
where
    F: Fn(&[u32], usize, &[u8]) -> u32 + Sync,
{
    pub fn new(vocab: u32, f: F) -> Self {
        Self { vocab, f }
    }
}

impl<F> Predictor for FnPredictor<F>
where
    F: Fn(&[u32], usize, &[u8]) -> u32 + Sync,
{
    fn vocab_size(&self) -> u32 {
        self.vocab
    }

    fn next(&self, prefix: &[u32], position: usize, context: &[u8]) -> u32 {
        (self.f)(prefix, position, context)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrevKey {
    /// Matches any prefix.
    Any,
    /// Matches the empty prefix (first position).
    Start,
    /// Matches a prefix ending in this code.
    Code(u32),
}

/// Lookup-table predictor keyed on `(position, previous code)`.
///
/// Most specific row wins: exact position and previous code, then exact position, then
/// exact previous code, then the default `(*, *)` row.
#[derive(Debug, Clone, PartialEq)]
pub struct TablePredictor {
    vocab: u32,
    table: HashMap<(Option<usize>, PrevKey), u32>,
}

impl TablePredictor {
    pub fn new(vocab: u32, rows: impl IntoIterator<Item = (Option<usize>, PrevKey, u32)>) -> Result<Self> {
        let mut table = HashMap::new();
        for (pos, prev, next) in rows {
            if next >= vocab {
                return Err(Error::PredictorOutOfRange { code: next, vocab });
            }
            table.insert((pos, prev), next);
        }
        if !table.contains_key(&(None, PrevKey::Any)) {
            return Err(Error::InvalidArgument("predictor table needs a default `*,*` row".into()));
        }
        Ok(Self { vocab, table })
    }

    /// Parses CSV `position,prev_code,next_code`. `*` matches anything; `-` as `prev_code`
    /// matches the first position. `vocab` defaults to one more than the largest
    /// `next_code`.
    pub fn read_csv<R: BufRead>(reader: R, vocab: Option<u32>) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let err = |message: &str| FormatError::Parse { line: i + 1, message: message.to_string() };
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with("position")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err("expected position,prev_code,next_code").into());
            }
            let pos = match fields[0] {
                "*" => None,
                s => Some(s.parse().map_err(|_| err("bad position"))?),
            };
            let prev = match fields[1] {
                "*" => PrevKey::Any,
                "-" => PrevKey::Start,
                s => PrevKey::Code(s.parse().map_err(|_| err("bad prev_code"))?),
            };
            let next: u32 = fields[2].parse().map_err(|_| err("bad next_code"))?;
            rows.push((pos, prev, next));
        }
        let inferred = rows.iter().map(|r| r.2).max().map_or(1, |m| m + 1);
        Self::new(vocab.unwrap_or(inferred), rows)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut rows: Vec<_> = self.table.iter().collect();
        rows.sort_by_key(|((pos, prev), _)| (*pos, format!("{prev:?}")));
        let mut out = String::from("position,prev_code,next_code\n");
        for ((pos, prev), next) in rows {
            let pos = pos.map_or("*".to_string(), |p| p.to_string());
            let prev = match prev {
                PrevKey::Any => "*".to_string(),
                PrevKey::Start => "-".to_string(),
                PrevKey::Code(c) => c.to_string(),
            };
            out.push_str(&format!("{pos},{prev},{next}\n"));
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Table for `t_0 = 0`, `t_i = (t_{i-1} + 1) mod vocab`.
    pub fn successor(vocab: u32) -> Self {
        let rows = (0..vocab)
            .map(|c| (None, PrevKey::Code(c), (c + 1) % vocab))
            .chain([(None, PrevKey::Start, 0), (None, PrevKey::Any, 0)]);
        Self::new(vocab, rows).expect("valid successor table")
    }
}

impl Predictor for TablePredictor {
    fn vocab_size(&self) -> u32 {
        self.vocab
    }

    fn next(&self, prefix: &[u32], position: usize, _context: &[u8]) -> u32 {
        let prev = prefix.last().map_or(PrevKey::Start, |&c| PrevKey::Code(c));
        [(Some(position), prev), (Some(position), PrevKey::Any), (None, prev), (None, PrevKey::Any)]
            .iter()
            .find_map(|k| self.table.get(k).copied())
            .unwrap_or(0)
    }
}

fn checked<P: Predictor + ?Sized>(pred: &P, prefix: &[u32], position: usize, context: &[u8]) -> Result<u32> {
    let code = pred.next(prefix, position, context);
    let vocab = pred.vocab_size();
    if code >= vocab {
        return Err(Error::PredictorOutOfRange { code, vocab });
    }
    Ok(code)
}

/// Token-by-token decoding: exactly `n` predictor calls.
pub fn decode_sequential<P: Predictor + ?Sized>(pred: &P, n: usize, context: &[u8]) -> Result<Vec<u32>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sequence length must be positive".into()));
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let code = checked(pred, &out, i, context)?;
        out.push(code);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JacobiTrace {
    pub sequence: Vec<u32>,
    /// Parallel sweeps performed (at most the cap).
    pub iterations: usize,
    /// Accepted prefix length after each sweep.
    pub accepted: Vec<usize>,
    /// Set when the cap was hit and the tail was decoded sequentially.
    pub fallback: bool,
}

/// Jacobi decoding with at most `cap` parallel sweeps; any positions still unaccepted are
/// then decoded sequentially.
pub fn decode_jacobi<P: Predictor + ?Sized>(
    pred: &P,
    n: usize,
    context: &[u8],
    cap: usize,
    rng_seed: u64,
) -> Result<JacobiTrace> {
    if n == 0 {
        return Err(Error::InvalidArgument("sequence length must be positive".into()));
    }
    if cap == 0 {
        return Err(Error::InvalidArgument("iteration cap must be positive".into()));
    }
    let vocab = pred.vocab_size();
    if vocab == 0 {
        return Err(Error::InvalidArgument("empty vocabulary".into()));
    }
    let mut rng = random::rng(rng_seed);
    let mut estimate: Vec<u32> = (0..n).map(|_| random::below(&mut rng, vocab as u64) as u32).collect();
    let mut accepted = 0usize;
    let mut trace = JacobiTrace { sequence: Vec::new(), iterations: 0, accepted: Vec::new(), fallback: false };
    while accepted < n && trace.iterations < cap {
        trace.iterations += 1;
        let updated = (accepted..n)
            .into_par_iter()
            .map(|i| checked(pred, &estimate[..i], i, context))
            .collect::<Result<Vec<u32>>>()?;
        // The frontier is final; each unchanged estimate after it makes the next one final.
        let unchanged = estimate[accepted..].iter().zip(&updated).take_while(|(a, b)| a == b).count();
        estimate[accepted..].copy_from_slice(&updated);
        accepted = (accepted + unchanged + 1).min(n);
        trace.accepted.push(accepted);
    }
    if accepted < n {
        trace.fallback = true;
        for i in accepted..n {
            estimate[i] = checked(pred, &estimate[..i], i, context)?;
        }
    }
    trace.sequence = estimate;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn sequential_examples() {
        let constant = FnPredictor::new(10, |_: &[u32], _, _: &[u8]| 7);
        assert_eq!(decode_sequential(&constant, 5, b"").unwrap(), vec![7; 5]);
        let succ = TablePredictor::successor(4);
        assert_eq!(decode_sequential(&succ, 6, b"").unwrap(), vec![0, 1, 2, 3, 0, 1]);
        let calls = AtomicUsize::new(0);
        let counting = FnPredictor::new(3, |_: &[u32], _, _: &[u8]| {
            calls.fetch_add(1, Ordering::SeqCst);
            2
        });
        assert_eq!(decode_sequential(&counting, 1, b"").unwrap(), vec![2]);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn out_of_range_prediction_is_an_error() {
        let bad = FnPredictor::new(4, |_: &[u32], _, _: &[u8]| 4);
        assert!(matches!(decode_sequential(&bad, 2, b""), Err(Error::PredictorOutOfRange { code: 4, vocab: 4 })));
        assert!(matches!(decode_jacobi(&bad, 2, b"", 30, 0), Err(Error::PredictorOutOfRange { .. })));
    }

    #[test]
    fn history_free_needs_one_compute_sweep_and_one_check() {
        let pred = FnPredictor::new(16, |_: &[u32], i: usize, ctx: &[u8]| ((i * 7 + ctx.len()) % 16) as u32);
        let trace = decode_jacobi(&pred, 40, b"ctx", 30, 11).unwrap();
        assert_eq!(trace.sequence, decode_sequential(&pred, 40, b"ctx").unwrap());
        assert!(trace.iterations <= 2);
        assert!(!trace.fallback);
    }

    #[test]
    fn successor_converges_within_n() {
        let pred = TablePredictor::successor(5);
        let trace = decode_jacobi(&pred, 32, b"", 64, 3).unwrap();
        assert_eq!(trace.sequence, decode_sequential(&pred, 32, b"").unwrap());
        assert!(trace.iterations <= 32);
        assert!(trace.accepted.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn cap_exhaustion_falls_back() {
        let pred = TablePredictor::successor(1000);
        let trace = decode_jacobi(&pred, 100, b"", 3, 5).unwrap();
        assert!(trace.fallback);
        assert_eq!(trace.iterations, 3);
        assert_eq!(trace.sequence, (0..100).collect::<Vec<u32>>());
    }

    #[test]
    fn table_precedence_and_csv() {
        let src = "position,prev_code,next_code\n*,*,1\n*,-,2\n*,2,3\n3,*,0\n3,3,4\n";
        let t = TablePredictor::read_csv(src.as_bytes(), None).unwrap();
        assert_eq!(t.vocab_size(), 5);
        assert_eq!(decode_sequential(&t, 5, b"").unwrap(), vec![2, 3, 1, 0, 1]);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(TablePredictor::read_csv(out.as_slice(), Some(5)).unwrap(), t);
        assert!(TablePredictor::read_csv("*,-,2\n".as_bytes(), None).is_err());
        assert!(TablePredictor::read_csv("*,*,x\n".as_bytes(), None).is_err());
    }
}
