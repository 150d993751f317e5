//! Sample matrices and their text/binary file formats.
//!
//! In memory, states are 0-based `u16` values; files store them 1-based.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SAMPLES_FORMAT: &str = "ttns-samples";
pub const SAMPLES_VERSION: u32 = 1;

/// `N x d` matrix of category indices, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteSamples {
    n: Vec<usize>,
    rows: usize,
    data: Vec<u16>,
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
struct Sidecar {
    format: String,
    version: u32,
    d: usize,
    n: Vec<usize>,
    rows: usize,
    encoding: String,
}

impl DiscreteSamples {
    /// `data` holds 0-based states, row-major, one row per sample.
    pub fn new(n: Vec<usize>, data: Vec<u16>) -> Result<Self> {
        let d = n.len();
        if d == 0 {
            return Err(Error::InvalidArgument("samples need at least one variable".into()));
        }
        if n.iter().any(|&s| s == 0 || s > u16::MAX as usize) {
            return Err(Error::InvalidArgument(format!("state counts {n:?} must lie in 1..=65535")));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::ShapeMismatch(format!("{} values is not a multiple of d = {d}", data.len())));
        }
        let rows = data.len() / d;
        for (i, row) in data.chunks(d).enumerate() {
            for (k, &v) in row.iter().enumerate() {
                if v as usize >= n[k] {
                    return Err(Error::StateOutOfRange { row: i + 1, node: k + 1, value: v as usize + 1, n: n[k] });
                }
            }
        }
        Ok(DiscreteSamples { n, rows, data })
    }

    pub fn empty(n: Vec<usize>) -> Self {
        DiscreteSamples { n, rows: 0, data: vec![] }
    }

    pub fn from_rows(n: Vec<usize>, rows: &[Vec<usize>]) -> Result<Self> {
        let d = n.len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::ShapeMismatch(format!("row {} has {} entries, expected {d}", i + 1, r.len())));
            }
            for (k, &v) in r.iter().enumerate() {
                if v >= n[k] {
                    return Err(Error::StateOutOfRange { row: i + 1, node: k + 1, value: v + 1, n: n[k] });
                }
                data.push(v as u16);
            }
        }
        Ok(DiscreteSamples { n, rows: rows.len(), data })
    }

    pub(crate) fn from_raw(n: Vec<usize>, data: Vec<u16>) -> Self {
        let rows = data.len() / n.len();
        DiscreteSamples { n, rows, data }
    }

    pub fn d(&self) -> usize {
        self.n.len()
    }

    pub fn state_counts(&self) -> &[usize] {
        &self.n
    }

    pub fn len(&self) -> usize {
        self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    /// Row `i` (0-based); entry `k - 1` is the state of node `k`.
    pub fn row(&self, i: usize) -> &[u16] {
        let d = self.d();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u16]> {
        self.data.chunks(self.d())
    }

    /// Rows `start..end`.
    pub fn slice(&self, start: usize, end: usize) -> DiscreteSamples {
        let d = self.d();
        DiscreteSamples::from_raw(self.n.clone(), self.data[start * d..end * d].to_vec())
    }

    /// Rows in the order given by `order`.
    pub fn select(&self, order: &[usize]) -> DiscreteSamples {
        let mut data = Vec::with_capacity(order.len() * self.d());
        for &i in order {
            data.extend_from_slice(self.row(i));
        }
        DiscreteSamples::from_raw(self.n.clone(), data)
    }

    pub fn concat(&self, other: &DiscreteSamples) -> Result<DiscreteSamples> {
        if self.n != other.n {
            return Err(Error::ShapeMismatch("sample sets have different state counts".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(DiscreteSamples::from_raw(self.n.clone(), data))
    }

    /// Counts of `(x_i, x_j)` for nodes `i`, `j` (1-based), row-major `n_i x n_j`.
    pub fn pair_counts(&self, i: usize, j: usize) -> Vec<u64> {
        let (a, b) = (i - 1, j - 1);
        let nj = self.n[b];
        let mut counts = vec![0u64; self.n[a] * nj];
        for r in self.rows() {
            counts[r[a] as usize * nj + r[b] as usize] += 1;
        }
        counts
    }

    pub fn counts(&self, i: usize) -> Vec<u64> {
        let mut counts = vec![0u64; self.n[i - 1]];
        for r in self.rows() {
            counts[r[i - 1] as usize] += 1;
        }
        counts
    }

    fn header(&self) -> String {
        let n: Vec<String> = self.n.iter().map(|v| v.to_string()).collect();
        format!("{SAMPLES_FORMAT} v{SAMPLES_VERSION} d={} n={}", self.d(), n.join(","))
    }

    pub fn write_text(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{}", self.header())?;
        let mut line = String::new();
        for r in self.rows() {
            line.clear();
            for (k, v) in r.iter().enumerate() {
                if k > 0 {
                    line.push(' ');
                }
                line.push_str(&(*v as usize + 1).to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_text(r: impl BufRead) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::MalformedHeader("empty file".into()))??;
        let n = parse_header(&header)?;
        let d = n.len();
        let mut data = Vec::new();
        let mut row = 0usize;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            row += 1;
            let mut count = 0;
            for (k, tok) in line.split_whitespace().enumerate() {
                if k >= d {
                    return Err(Error::ShapeMismatch(format!("row {row} has more than {d} entries")));
                }
                let v: usize = tok
                    .parse()
                    .map_err(|_| Error::ShapeMismatch(format!("row {row}: `{tok}` is not an integer")))?;
                if v == 0 || v > n[k] {
                    return Err(Error::StateOutOfRange { row, node: k + 1, value: v, n: n[k] });
                }
                data.push((v - 1) as u16);
                count += 1;
            }
            if count != d {
                return Err(Error::ShapeMismatch(format!("row {row} has {count} entries, expected {d}")));
            }
        }
        Ok(DiscreteSamples::from_raw(n, data))
    }

    pub fn load_text(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_text(BufReader::new(fs::File::open(path)?))
    }

    /// Writes `path` (u16 little-endian, 1-based, row-major) and `path.json`.
    pub fn save_binary(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut bytes = Vec::with_capacity(self.data.len() * 2);
        for &v in &self.data {
            bytes.extend_from_slice(&(v + 1).to_le_bytes());
        }
        fs::write(path, bytes)?;
        let side = Sidecar {
            format: SAMPLES_FORMAT.into(),
            version: SAMPLES_VERSION,
            d: self.d(),
            n: self.n.clone(),
            rows: self.rows,
            encoding: "u16le".into(),
        };
        fs::write(sidecar_path(path), serde_json::to_string_pretty(&side)?)?;
        Ok(())
    }

    pub fn load_binary(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)
            .map_err(|e| Error::MalformedHeader(format!("sidecar: {e}")))?;
        if side.format != SAMPLES_FORMAT {
            return Err(Error::MalformedHeader(format!("unexpected format `{}`", side.format)));
        }
        if side.version != SAMPLES_VERSION {
            return Err(Error::VersionMismatch { found: side.version.to_string(), expected: SAMPLES_VERSION.to_string() });
        }
        if side.encoding != "u16le" || side.d != side.n.len() {
            return Err(Error::MalformedHeader("inconsistent sidecar".into()));
        }
        let bytes = fs::read(path)?;
        if bytes.len() != side.rows * side.d * 2 {
            return Err(Error::ShapeMismatch(format!(
                "binary file has {} bytes, sidecar implies {}",
                bytes.len(),
                side.rows * side.d * 2
            )));
        }
        let mut data = Vec::with_capacity(side.rows * side.d);
        for (i, c) in bytes.chunks_exact(2).enumerate() {
            let v = u16::from_le_bytes([c[0], c[1]]) as usize;
            let k = i % side.d;
            if v == 0 || v > side.n[k] {
                return Err(Error::StateOutOfRange { row: i / side.d + 1, node: k + 1, value: v, n: side.n[k] });
            }
            data.push((v - 1) as u16);
        }
        Ok(DiscreteSamples::from_raw(side.n, data))
    }

    /// Binary when a sidecar exists next to `path`, text otherwise.
    pub fn load_auto(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if sidecar_path(path).exists() {
            Self::load_binary(path)
        } else {
            Self::load_text(path)
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn parse_header(line: &str) -> Result<Vec<usize>> {
    let mut toks = line.split_whitespace();
    if toks.next() != Some(SAMPLES_FORMAT) {
        return Err(Error::MalformedHeader(format!("expected `{SAMPLES_FORMAT}` header, got `{line}`")));
    }
    let version = toks.next().ok_or_else(|| Error::MalformedHeader("missing version".into()))?;
    let v = version
        .strip_prefix('v')
        .ok_or_else(|| Error::MalformedHeader(format!("bad version token `{version}`")))?;
    if v != SAMPLES_VERSION.to_string() {
        return Err(Error::VersionMismatch { found: v.into(), expected: SAMPLES_VERSION.to_string() });
    }
    let d: usize = toks
        .next()
        .and_then(|t| t.strip_prefix("d="))
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::MalformedHeader("missing d=<int>".into()))?;
    let n: Vec<usize> = toks
        .next()
        .and_then(|t| t.strip_prefix("n="))
        .map(|t| t.split(',').map(|s| s.parse::<usize>()).collect::<std::result::Result<Vec<_>, _>>())
        .transpose()
        .map_err(|_| Error::MalformedHeader("n= list is not integers".into()))?
        .ok_or_else(|| Error::MalformedHeader("missing n=<list>".into()))?;
    if toks.next().is_some() {
        return Err(Error::MalformedHeader("trailing tokens in header".into()));
    }
    if n.len() != d || d == 0 {
        return Err(Error::MalformedHeader(format!("d={d} but {} state counts", n.len())));
    }
    if n.iter().any(|&s| s == 0 || s > u16::MAX as usize) {
        return Err(Error::MalformedHeader("state counts must lie in 1..=65535".into()));
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DiscreteSamples {
        DiscreteSamples::from_rows(vec![2, 3], &[vec![0, 2], vec![1, 0], vec![1, 1]]).unwrap()
    }

    #[test]
    fn text_round_trip() {
        let s = small();
        let mut buf = Vec::new();
        s.write_text(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("ttns-samples v1 d=2 n=2,3\n1 3\n"));
        assert_eq!(DiscreteSamples::read_text(&buf[..]).unwrap(), s);
    }

    #[test]
    fn pair_counts_and_select() {
        let s = small();
        assert_eq!(s.pair_counts(1, 2), vec![0, 0, 1, 1, 1, 0]);
        assert_eq!(s.counts(1), vec![1, 2]);
        let r = s.select(&[2, 0]);
        assert_eq!(r.row(0), &[1, 1]);
        assert_eq!(s.slice(1, 3).len(), 2);
    }

    #[test]
    fn text_rejections() {
        let bad_row = "ttns-samples v1 d=2 n=2,2\n1 2\n1 3\n";
        match DiscreteSamples::read_text(bad_row.as_bytes()) {
            Err(Error::StateOutOfRange { row, node, value, .. }) => assert_eq!((row, node, value), (2, 2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            DiscreteSamples::read_text("ttns-samples v2 d=1 n=2\n".as_bytes()),
            Err(Error::VersionMismatch { .. })
        ));
        assert!(matches!(
            DiscreteSamples::read_text("samples d=1 n=2\n".as_bytes()),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            DiscreteSamples::read_text("ttns-samples v1 d=2 n=2,2\n1\n".as_bytes()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let s = small();
        s.save_binary(&p).unwrap();
        assert_eq!(DiscreteSamples::load_binary(&p).unwrap(), s);
        assert_eq!(DiscreteSamples::load_auto(&p).unwrap(), s);
        let raw = fs::read(&p).unwrap();
        assert_eq!(&raw[..4], &[1, 0, 3, 0]);
    }

    #[test]
    fn empty_set() {
        let s = DiscreteSamples::empty(vec![2, 2]);
        assert!(s.is_empty());
        assert_eq!(s.pair_counts(1, 2), vec![0; 4]);
    }
}
