use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::Token;

/// One document per line, tokens as decimal integers separated by spaces.
pub fn write_corpus_text<'a, W, I>(mut sink: W, documents: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a [Token]>,
{
    let mut line = String::new();
    for doc in documents {
        line.clear();
        for (i, t) in doc.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&t.to_string());
        }
        line.push('\n');
        sink.write_all(line.as_bytes())?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_corpus_text<R: BufRead>(source: R) -> Result<Vec<Vec<Token>>> {
    let mut docs = Vec::new();
    let mut offset = 0usize;
    for line in source.lines() {
        let line = line?;
        let mut doc = Vec::new();
        let mut col = 0usize;
        for field in line.split(' ') {
            if !field.is_empty() {
                doc.push(field.parse::<Token>().map_err(|e| Error::Parse {
                    offset: offset + col,
                    message: format!("bad token `{field}`: {e}"),
                })?);
            }
            col += field.len() + 1;
        }
        offset += line.len() + 1;
        docs.push(doc);
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let docs: Vec<Vec<Token>> = vec![vec![1, 2, 3], vec![], vec![29]];
        let mut buf = Vec::new();
        write_corpus_text(&mut buf, docs.iter().map(|d| d.as_slice())).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "1 2 3\n\n29\n");
        assert_eq!(read_corpus_text(&buf[..]).unwrap(), docs);
        assert!(read_corpus_text(&b"1 x\n"[..]).is_err());
    }
}
