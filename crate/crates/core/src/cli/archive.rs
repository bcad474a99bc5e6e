//! Feature archives: for each utterance a text line
//! `MET1 <utt-id> <frames> <dim>` followed by `frames·dim` little-endian
//! f64 values, frame-major.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Matrix;
use crate::pipeline::FeatureSequence;

const TAG: &str = "MET1";

pub fn write_utterance(out: &mut impl Write, id: &str, feats: &Matrix) -> std::io::Result<()> {
    writeln!(out, "{TAG} {id} {} {}", feats.rows(), feats.cols())?;
    let mut buf = Vec::with_capacity(8 * feats.data().len());
    for v in feats.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

pub fn encode_archive<'a>(utts: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Vec<u8> {
    let mut out = Vec::new();
    for (id, m) in utts {
        write_utterance(&mut out, id, m).expect("writing to memory");
    }
    out
}

pub fn write_archive<'a>(path: &Path, utts: impl IntoIterator<Item = (&'a str, &'a Matrix)>) -> Result<()> {
    std::fs::write(path, encode_archive(utts)).map_err(|e| Error::io(path, e))
}

pub fn decode_archive(bytes: &[u8]) -> Result<Vec<(String, FeatureSequence)>> {
    let mut reader = BufReader::new(bytes);
    let mut out = Vec::new();
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = reader
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::format("feature archive", e.to_string()))?;
        if n == 0 {
            break;
        }
        let text = std::str::from_utf8(&line)
            .map_err(|_| Error::format("feature archive", "header is not UTF-8"))?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        let (id, rows, cols) = match fields.as_slice() {
            [tag, id, rows, cols] if *tag == TAG => {
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| Error::format("feature archive", format!("bad size `{s}` for {id}")))
                };
                (id.to_string(), parse(rows)?, parse(cols)?)
            }
            _ => {
                return Err(Error::format(
                    "feature archive",
                    format!("expected `{TAG} <id> <frames> <dim>` header, got `{}`", text.trim_end()),
                ))
            }
        };
        let mut raw = vec![0u8; 8 * rows * cols];
        reader
            .read_exact(&mut raw)
            .map_err(|_| Error::format("feature archive", format!("truncated payload for {id}")))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((id, FeatureSequence::new(Matrix::new(rows, cols, data)?)?));
    }
    Ok(out)
}

pub fn read_archive(path: &Path) -> Result<Vec<(String, FeatureSequence)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_archive(&bytes)
}
