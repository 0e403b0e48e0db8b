//! The world model ⟨Ω, F⟩: a finite universe of objects and a list of total
//! unary functions over it.
//!
//! Objects are the integers `0..|Ω|` and double as tokens. Functions are
//! addressed by one-based index; `f1` is always the identity.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;
use crate::Token;

/// Function pair that never co-occurs in a compositional script.
pub const DEFAULT_DESIGNATED_PAIR: (usize, usize) = (2, 3);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldModel {
    omega_size: usize,
    seed: u64,
    designated_pair: (usize, usize),
    /// `tables[(f - 1) * omega_size + x] = f(x)`.
    tables: Vec<Token>,
    /// Preimage lists, CSR layout per function.
    pre_offsets: Vec<u32>,
    pre_values: Vec<Token>,
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    omega_size: usize,
    num_functions: usize,
    seed: u64,
    tables: Vec<Vec<Token>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    designated_pair: Option<(usize, usize)>,
}

impl WorldModel {
    /// Samples a world: `f1` is the identity, every other function is an
    /// independent uniform random map Ω → Ω.
    pub fn sample(omega_size: usize, num_functions: usize, seed: u64) -> Result<Self> {
        if omega_size < 2 {
            return Err(Error::Validation(format!(
                "omega_size must be at least 2, got {omega_size}"
            )));
        }
        if num_functions < 1 {
            return Err(Error::Validation(
                "num_functions must be at least 1".to_string(),
            ));
        }
        if omega_size > u16::MAX as usize {
            return Err(Error::Validation(format!(
                "omega_size {omega_size} does not fit the 16-bit token format"
            )));
        }
        let mut rng = rng::stream(seed, "world", 0);
        let mut tables = Vec::with_capacity(omega_size * num_functions);
        tables.extend(0..omega_size as Token);
        for _ in 1..num_functions {
            for _ in 0..omega_size {
                tables.push(rng.random_range(0..omega_size as Token));
            }
        }
        Ok(Self::from_parts(omega_size, seed, DEFAULT_DESIGNATED_PAIR, tables))
    }

    /// Builds a world from explicit tables (`tables[i]` is `f_{i+1}`).
    pub fn from_tables(tables: Vec<Vec<Token>>, seed: u64) -> Result<Self> {
        let omega_size = tables.first().map(Vec::len).unwrap_or(0);
        Self::validate_tables(omega_size, tables.len(), &tables)
            .map_err(Error::Validation)?;
        let flat = tables.into_iter().flatten().collect();
        Ok(Self::from_parts(omega_size, seed, DEFAULT_DESIGNATED_PAIR, flat))
    }

    fn from_parts(
        omega_size: usize,
        seed: u64,
        designated_pair: (usize, usize),
        tables: Vec<Token>,
    ) -> Self {
        let num_functions = tables.len() / omega_size;
        let mut pre_offsets = Vec::with_capacity(num_functions * (omega_size + 1));
        let mut pre_values = Vec::with_capacity(tables.len());
        for f in 0..num_functions {
            let row = &tables[f * omega_size..(f + 1) * omega_size];
            let mut buckets = vec![Vec::new(); omega_size];
            for (x, &y) in row.iter().enumerate() {
                buckets[y as usize].push(x as Token);
            }
            for bucket in buckets {
                pre_offsets.push(pre_values.len() as u32);
                pre_values.extend(bucket);
            }
            pre_offsets.push(pre_values.len() as u32);
        }
        WorldModel {
            omega_size,
            seed,
            designated_pair,
            tables,
            pre_offsets,
            pre_values,
        }
    }

    fn validate_tables(
        omega_size: usize,
        num_functions: usize,
        tables: &[Vec<Token>],
    ) -> std::result::Result<(), String> {
        if omega_size < 2 {
            return Err(format!("omega_size must be at least 2, got {omega_size}"));
        }
        if num_functions < 1 || tables.len() != num_functions {
            return Err(format!(
                "expected {num_functions} function tables, found {}",
                tables.len()
            ));
        }
        for (i, row) in tables.iter().enumerate() {
            if row.len() != omega_size {
                return Err(format!(
                    "table {} has {} entries, expected {omega_size}",
                    i + 1,
                    row.len()
                ));
            }
            if let Some(bad) = row.iter().find(|&&v| v as usize >= omega_size) {
                return Err(format!("table {} contains out-of-range value {bad}", i + 1));
            }
        }
        if tables[0].iter().enumerate().any(|(x, &y)| x as Token != y) {
            return Err("table 1 must be the identity".to_string());
        }
        Ok(())
    }

    pub fn omega_size(&self) -> usize {
        self.omega_size
    }

    pub fn num_functions(&self) -> usize {
        self.tables.len() / self.omega_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn designated_pair(&self) -> (usize, usize) {
        self.designated_pair
    }

    pub fn with_designated_pair(mut self, pair: (usize, usize)) -> Result<Self> {
        let n = self.num_functions();
        if pair.0 == pair.1 || pair.0 < 1 || pair.1 < 1 || pair.0 > n || pair.1 > n {
            return Err(Error::Validation(format!(
                "designated pair {pair:?} invalid for {n} functions"
            )));
        }
        self.designated_pair = pair;
        Ok(self)
    }

    /// Whether the designated-pair mechanism applies (needs |F| ≥ 3).
    pub fn has_designated_pair(&self) -> bool {
        let (a, b) = self.designated_pair;
        self.num_functions() >= 3 && a <= self.num_functions() && b <= self.num_functions()
    }

    /// Function table of `f_index` (one-based). Panics when out of range.
    #[inline]
    pub fn table(&self, f_index: usize) -> &[Token] {
        let start = (f_index - 1) * self.omega_size;
        &self.tables[start..start + self.omega_size]
    }

    /// Unchecked-by-`Result` lookup used on hot paths; indices must be valid.
    #[inline]
    pub fn eval(&self, f_index: usize, x: Token) -> Token {
        self.tables[(f_index - 1) * self.omega_size + x as usize]
    }

    /// `f_index(x)`, validating both arguments.
    pub fn apply(&self, f_index: usize, x: Token) -> Result<Token> {
        self.check(f_index, x)?;
        Ok(self.eval(f_index, x))
    }

    /// Preimage slice `{ x : f(x) = y }` in increasing order; indices must be valid.
    #[inline]
    pub fn preimage_slice(&self, f_index: usize, y: Token) -> &[Token] {
        let base = (f_index - 1) * (self.omega_size + 1) + y as usize;
        let lo = self.pre_offsets[base] as usize;
        let hi = self.pre_offsets[base + 1] as usize;
        &self.pre_values[lo..hi]
    }

    /// `{ x : f_index(x) = y }`, validating both arguments.
    pub fn preimage(&self, f_index: usize, y: Token) -> Result<Vec<Token>> {
        self.check(f_index, y)?;
        Ok(self.preimage_slice(f_index, y).to_vec())
    }

    fn check(&self, f_index: usize, x: Token) -> Result<()> {
        if f_index < 1 || f_index > self.num_functions() {
            return Err(Error::Validation(format!(
                "function index {f_index} outside 1..={}",
                self.num_functions()
            )));
        }
        if x as usize >= self.omega_size {
            return Err(Error::Validation(format!(
                "object {x} outside 0..{}",
                self.omega_size
            )));
        }
        Ok(())
    }

    fn to_file(&self) -> WorldFile {
        WorldFile {
            omega_size: self.omega_size,
            num_functions: self.num_functions(),
            seed: self.seed,
            tables: self
                .tables
                .chunks(self.omega_size)
                .map(<[Token]>::to_vec)
                .collect(),
            designated_pair: (self.designated_pair != DEFAULT_DESIGNATED_PAIR)
                .then_some(self.designated_pair),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("world serialization cannot fail")
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load<R: Read>(mut source: R) -> Result<Self> {
        let mut text = String::new();
        source.read_to_string(&mut text).map_err(|e| Error::Parse {
            offset: 0,
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        let at = |key: &str| text.find(&format!("\"{key}\"")).unwrap_or(0);
        if file.num_functions != file.tables.len() {
            return Err(Error::Parse {
                offset: at("num_functions"),
                message: format!(
                    "num_functions is {} but {} tables are present",
                    file.num_functions,
                    file.tables.len()
                ),
            });
        }
        Self::validate_tables(file.omega_size, file.num_functions, &file.tables).map_err(
            |message| Error::Parse {
                offset: at("tables"),
                message,
            },
        )?;
        let world = Self::from_parts(
            file.omega_size,
            file.seed,
            DEFAULT_DESIGNATED_PAIR,
            file.tables.into_iter().flatten().collect(),
        );
        match file.designated_pair {
            Some(pair) => world.with_designated_pair(pair).map_err(|e| Error::Parse {
                offset: at("designated_pair"),
                message: e.to_string(),
            }),
            None => Ok(world),
        }
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    // Frozen from the first run of WorldModel::sample(6, 3, 42).
    const GOLDEN_6_3_42: [[Token; 6]; 3] = [
        [0, 1, 2, 3, 4, 5],
        [2, 3, 1, 2, 2, 3],
        [1, 2, 1, 4, 1, 4],
    ];

    #[test]
    fn golden_world_is_stable() {
        let w = WorldModel::sample(6, 3, 42).unwrap();
        for (i, row) in GOLDEN_6_3_42.iter().enumerate() {
            assert_eq!(w.table(i + 1), row, "row f{}", i + 1);
        }
        assert_eq!(w.apply(2, 0).unwrap(), GOLDEN_6_3_42[1][0]);
    }

    #[test]
    fn identity_and_totality() {
        let w = WorldModel::sample(30, 10, 1).unwrap();
        for x in 0..30 {
            assert_eq!(w.apply(1, x).unwrap(), x);
            for f in 1..=10 {
                assert!(w.apply(f, x).unwrap() < 30);
            }
        }
        assert_eq!(w.preimage(1, 9).unwrap(), vec![9]);
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = WorldModel::sample(30, 10, 99).unwrap();
        let b = WorldModel::sample(30, 10, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
        assert_ne!(a, WorldModel::sample(30, 10, 100).unwrap());
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(WorldModel::sample(1, 3, 0), Err(Error::Validation(_))));
        assert!(matches!(WorldModel::sample(5, 0, 0), Err(Error::Validation(_))));
    }

    #[test]
    fn out_of_range_lookups_fail() {
        let w = WorldModel::sample(6, 3, 42).unwrap();
        assert!(w.apply(0, 1).is_err());
        assert!(w.apply(4, 1).is_err());
        assert!(w.apply(2, 6).is_err());
        assert!(w.preimage(2, 6).is_err());
    }

    #[test]
    fn preimage_matches_brute_force() {
        let w = WorldModel::sample(6, 3, 42).unwrap();
        for f in 1..=3 {
            let mut total = 0;
            for y in 0..6 {
                let brute: Vec<Token> = (0..6).filter(|&x| w.apply(f, x).unwrap() == y).collect();
                assert_eq!(w.preimage(f, y).unwrap(), brute);
                total += brute.len();
            }
            assert_eq!(total, 6);
        }
    }

    #[test]
    fn identity_only_world_saves_identity_row() {
        let w = WorldModel::sample(4, 1, 5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&w.to_json()).unwrap();
        assert_eq!(v["tables"], serde_json::json!([[0, 1, 2, 3]]));
    }

    #[test]
    fn round_trip_and_corruption() {
        let w = WorldModel::sample(7, 4, 3).unwrap();
        let mut buf = Vec::new();
        w.save(&mut buf).unwrap();
        assert_eq!(WorldModel::load(&buf[..]).unwrap(), w);

        let text = String::from_utf8(buf).unwrap();
        let corrupted = text.replace("\"num_functions\":4", "\"num_functions\":5");
        match WorldModel::from_json(&corrupted) {
            Err(Error::Parse { offset, .. }) => {
                assert_eq!(offset, corrupted.find("\"num_functions\"").unwrap())
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let truncated = &text[..text.len() - 3];
        assert!(matches!(
            WorldModel::from_json(truncated),
            Err(Error::Parse { .. })
        ));
        let trailing = format!("{text} 1");
        assert!(matches!(
            WorldModel::from_json(&trailing),
            Err(Error::Parse { offset, .. }) if offset >= text.len()
        ));
    }

    #[test]
    fn designated_pair_round_trips() {
        let w = WorldModel::sample(5, 4, 3)
            .unwrap()
            .with_designated_pair((3, 4))
            .unwrap();
        let back = WorldModel::from_json(&w.to_json()).unwrap();
        assert_eq!(back.designated_pair(), (3, 4));
        assert!(WorldModel::sample(5, 4, 3)
            .unwrap()
            .with_designated_pair((2, 2))
            .is_err());
    }
}
