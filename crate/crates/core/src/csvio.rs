//! Versioned CSV files.
//!
//! Every file starts with a `# <schema> v<version>` line. Readers reject other
//! schemas and versions; further `#` lines are comments.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::embedding::FeatureEmbedding;
use crate::error::{Error, Result};

pub const MATRIX_SCHEMA: &str = "ksme-matrix";
pub const EMBEDDING_SCHEMA: &str = "ksme-embedding";
pub const LOSS_SCHEMA: &str = "ksme-loss";
pub const VERSION: u32 = 1;

pub fn header_line(schema: &str) -> String {
    format!("# {schema} v{VERSION}\n")
}

/// Check the version line and return the remaining text.
pub fn strip_header<'a>(text: &'a str, schema: &str) -> Result<&'a str> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.trim_end_matches('\r');
    let Some(tag) = first.strip_prefix("# ") else {
        return Err(Error::Parse(format!("missing `# {schema} v{VERSION}` header")));
    };
    match tag.split_once(' ') {
        Some((s, v)) if s == schema => {
            if v == format!("v{VERSION}") {
                Ok(rest)
            } else {
                Err(Error::Parse(format!("unsupported {schema} version `{v}`")))
            }
        }
        _ => Err(Error::Parse(format!("expected a {schema} file, found `{first}`"))),
    }
}

fn reader(body: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(body.as_bytes())
}

/// Square matrix with a `state,0,1,…` header row and one row per state.
pub fn write_matrix(mut w: impl Write, m: &DMatrix<f64>) -> Result<()> {
    w.write_all(header_line(MATRIX_SCHEMA).as_bytes())?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["state".to_string()];
    header.extend((0..m.ncols()).map(|j| j.to_string()));
    out.write_record(&header)?;
    for (i, row) in m.row_iter().enumerate() {
        let mut record = vec![i.to_string()];
        record.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix(mut r: impl Read) -> Result<DMatrix<f64>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let body = strip_header(&text, MATRIX_SCHEMA)?;
    let mut rdr = reader(body);
    let n_cols = rdr.headers()?.len().saturating_sub(1);
    let mut values = Vec::new();
    let mut rows = 0;
    for record in rdr.records() {
        let record = record?;
        for field in record.iter().skip(1) {
            values.push(parse_f64(field)?);
        }
        rows += 1;
    }
    if values.len() != rows * n_cols {
        return Err(Error::Parse("ragged matrix".into()));
    }
    Ok(DMatrix::from_row_slice(rows, n_cols, &values))
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("not a number: `{field}`")))
}

/// One row per class: index, `;`-joined member states, features.
pub fn write_embedding(mut w: impl Write, emb: &FeatureEmbedding) -> Result<()> {
    w.write_all(header_line(EMBEDDING_SCHEMA).as_bytes())?;
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["class_index".to_string(), "member_states".to_string()];
    header.extend((0..emb.dim()).map(|j| format!("f{j}")));
    out.write_record(&header)?;
    for (c, row) in emb.features.row_iter().enumerate() {
        let members: Vec<String> = emb.quotient.members(c).iter().map(|x| x.to_string()).collect();
        let mut record = vec![c.to_string(), members.join(";")];
        record.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

/// `(members, features)` per class.
pub fn read_embedding(mut r: impl Read) -> Result<Vec<(Vec<usize>, Vec<f64>)>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let body = strip_header(&text, EMBEDDING_SCHEMA)?;
    let mut rdr = reader(body);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let members = record
            .get(1)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad state `{s}`"))))
            .collect::<Result<_>>()?;
        let features = record.iter().skip(2).map(parse_f64).collect::<Result<_>>()?;
        rows.push((members, features));
    }
    Ok(rows)
}

pub fn write_loss(mut w: impl Write, losses: &[f64]) -> Result<()> {
    w.write_all(header_line(LOSS_SCHEMA).as_bytes())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "loss"])?;
    for (step, loss) in losses.iter().enumerate() {
        out.write_record([step.to_string(), loss.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_loss(mut r: impl Read) -> Result<Vec<f64>> {
    let mut text = String::new();
    r.read_to_string(&mut text)?;
    let body = strip_header(&text, LOSS_SCHEMA)?;
    let mut rdr = reader(body);
    rdr.records()
        .map(|rec| parse_f64(rec?.get(1).unwrap_or("")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingKind, QuotientMap};

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.1 + 0.2, 1.0 / 3.0, -1e-300]);
        let mut buf = Vec::new();
        write_matrix(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# ksme-matrix v1\nstate,0,1\n0,0,"));
        assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn unknown_versions_rejected() {
        assert!(read_matrix("# ksme-matrix v2\nstate,0\n0,1\n".as_bytes()).is_err());
        assert!(read_matrix("# ksme-loss v1\nstep,loss\n".as_bytes()).is_err());
        assert!(read_matrix("state,0\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn embedding_round_trip() {
        let emb = FeatureEmbedding {
            features: DMatrix::from_row_slice(2, 2, &[1.5, 0.0, -0.25, 2.0]),
            quotient: QuotientMap::from_labels(&[0, 1, 0]),
            kind: EmbeddingKind::SpectralExact,
        };
        let mut buf = Vec::new();
        write_embedding(&mut buf, &emb).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("0,0;2,1.5,0\n"), "{text}");
        let rows = read_embedding(buf.as_slice()).unwrap();
        assert_eq!(rows[1], (vec![1], vec![-0.25, 2.0]));
    }

    #[test]
    fn loss_round_trip() {
        let mut buf = Vec::new();
        write_loss(&mut buf, &[0.5, 0.25]).unwrap();
        assert_eq!(read_loss(buf.as_slice()).unwrap(), vec![0.5, 0.25]);
    }
}
