use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Token;

use super::{Corpus, GeneratorKind};

pub const DEFAULT_WINDOW_LENGTH: usize = 64;

/// Fixed-length training windows over the concatenation of
/// `StartOfSequence + document` for every document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedStream {
    pub window_length: usize,
    pub sos: Token,
    /// Flat token stream; its length is a multiple of `window_length`.
    pub tokens: Vec<Token>,
}

impl PackedStream {
    pub fn n_windows(&self) -> usize {
        self.tokens.len() / self.window_length
    }

    pub fn windows(&self) -> impl Iterator<Item = &[Token]> {
        self.tokens.chunks_exact(self.window_length)
    }

    /// Raw 16-bit little-endian encoding.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.tokens.iter().flat_map(|&t| (t as u16).to_le_bytes()).collect()
    }

    pub fn from_le_bytes(bytes: &[u8], window_length: usize, sos: Token) -> Result<Self> {
        if bytes.len() % 2 != 0 || (bytes.len() / 2) % window_length != 0 {
            return Err(Error::Validation(format!(
                "{} bytes is not a whole number of {window_length}-token windows",
                bytes.len()
            )));
        }
        let tokens = bytes
            .chunks_exact(2)
            .map(|b| Token::from(u16::from_le_bytes([b[0], b[1]])))
            .collect();
        Ok(PackedStream {
            window_length,
            sos,
            tokens,
        })
    }
}

/// Incremental packer writing complete windows as little-endian u16.
pub struct StreamPacker<W: Write> {
    sink: W,
    window_length: usize,
    sos: Token,
    buffer: Vec<Token>,
    n_windows: u64,
    n_documents: u64,
    n_tokens: u64,
}

impl<W: Write> StreamPacker<W> {
    pub fn new(sink: W, window_length: usize, sos: Token) -> Result<Self> {
        if window_length == 0 {
            return Err(Error::Validation("window_length must be positive".into()));
        }
        if sos > Token::from(u16::MAX) {
            return Err(Error::Validation("vocabulary does not fit in 16 bits".into()));
        }
        Ok(StreamPacker {
            sink,
            window_length,
            sos,
            buffer: Vec::with_capacity(2 * window_length),
            n_windows: 0,
            n_documents: 0,
            n_tokens: 0,
        })
    }

    pub fn push(&mut self, document: &[Token]) -> Result<()> {
        self.buffer.push(self.sos);
        self.buffer.extend_from_slice(document);
        self.n_documents += 1;
        self.n_tokens += document.len() as u64;
        let full = self.buffer.len() / self.window_length * self.window_length;
        if full > 0 {
            let bytes: Vec<u8> = self.buffer[..full]
                .iter()
                .flat_map(|&t| (t as u16).to_le_bytes())
                .collect();
            self.sink.write_all(&bytes)?;
            self.n_windows += (full / self.window_length) as u64;
            self.buffer.drain(..full);
        }
        Ok(())
    }

    /// Drops the trailing partial window; returns `(sink, windows, documents, tokens)`.
    pub fn finish(mut self) -> Result<(W, u64, u64, u64)> {
        self.sink.flush()?;
        Ok((self.sink, self.n_windows, self.n_documents, self.n_tokens))
    }
}

pub fn pack_corpus(corpus: &Corpus, window_length: usize, sos: Token) -> Result<PackedStream> {
    if corpus.is_empty() {
        return Err(Error::Validation("cannot pack an empty corpus".into()));
    }
    if window_length == 0 {
        return Err(Error::Validation("window_length must be positive".into()));
    }
    let mut tokens = Vec::with_capacity(corpus.n_tokens() + corpus.len());
    for d in &corpus.documents {
        tokens.push(sos);
        tokens.extend_from_slice(&d.tokens);
    }
    tokens.truncate(tokens.len() / window_length * window_length);
    Ok(PackedStream {
        window_length,
        sos,
        tokens,
    })
}

/// Splits a packed stream on StartOfSequence. Only documents followed by a
/// later separator are known to be complete, so the trailing one is dropped.
pub fn unpack_documents(stream: &PackedStream) -> Vec<Vec<Token>> {
    let mut docs = Vec::new();
    let mut current: Option<Vec<Token>> = None;
    for &t in &stream.tokens {
        if t == stream.sos {
            if let Some(d) = current.take() {
                docs.push(d);
            }
            current = Some(Vec::new());
        } else if let Some(d) = current.as_mut() {
            d.push(t);
        }
    }
    docs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackManifest {
    pub generator: GeneratorKind,
    pub world_file_hash: String,
    pub seeds: serde_json::Value,
    pub window_length: usize,
    pub n_windows: u64,
    pub vocab_size: usize,
    pub n_documents: u64,
    pub n_tokens: u64,
    /// Generator settings, including the HMM length rule where relevant.
    #[serde(default)]
    pub config: serde_json::Value,
}
