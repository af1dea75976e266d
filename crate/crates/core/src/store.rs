//! Logit matrices, labels and robustness flags, plus their on-disk formats.
//!
//! Two matrix layouts are supported:
//!
//! * text: a `rows,cols` header line followed by one comma-separated line
//!   per row. Values are written with Rust's shortest round-trip float
//!   formatting (at most 17 significant digits), so parsing the file
//!   reproduces every `f64` exactly.
//! * binary: the magic `LGT1`, two little-endian `u32` counts (rows, cols)
//!   and then `rows * cols` little-endian IEEE-754 doubles in row-major
//!   order.
//!
//! Labels and flags are stored one integer per line.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"LGT1";
pub const BINARY_HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Binary,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "binary" => Ok(Format::Binary),
            other => Err(Error::Validation(format!("unknown format {other:?}"))),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Text => "text",
            Format::Binary => "binary",
        })
    }
}

/// Dense row-major matrix of finite logits, `rows >= 1`, `cols >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl LogitMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows < 1 {
            return Err(Error::Validation("logit matrix needs at least one row".into()));
        }
        if cols < 2 {
            return Err(Error::Validation(format!(
                "logit matrix needs at least two columns, got {cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Validation(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(LogitMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Validation(format!(
                "ragged rows: row {bad} has {} values, expected {cols}",
                rows[bad].len()
            )));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.cols)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_shape(&self, other: &LogitMatrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Ground-truth class per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector(pub Vec<usize>);

impl LabelVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

/// `true` marks a sample that survived the external adversarial evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobustFlags(pub Vec<bool>);

impl RobustFlags {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub logits: LogitMatrix,
    pub labels: LabelVector,
    pub flags: Option<RobustFlags>,
    pub class_names: Option<Vec<String>>,
}

impl DatasetBundle {
    pub fn n_samples(&self) -> usize {
        self.logits.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.logits.cols()
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_classes() {
            return Err(Error::Validation(format!(
                "class_names length mismatch: {} names for {} classes",
                names.len(),
                self.n_classes()
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }
}

pub fn validate_bundle(
    logits: LogitMatrix,
    labels: LabelVector,
    flags: Option<RobustFlags>,
) -> Result<DatasetBundle> {
    if labels.len() != logits.rows() {
        return Err(Error::Validation(format!(
            "labels length mismatch: {} labels for {} rows",
            labels.len(),
            logits.rows()
        )));
    }
    if let Some(i) = labels.0.iter().position(|&l| l >= logits.cols()) {
        return Err(Error::Validation(format!(
            "label out of range at index {i}: {} >= {}",
            labels.0[i],
            logits.cols()
        )));
    }
    if let Some(f) = &flags {
        if f.len() != logits.rows() {
            return Err(Error::Validation(format!(
                "flags length mismatch: {} flags for {} rows",
                f.len(),
                logits.rows()
            )));
        }
    }
    Ok(DatasetBundle {
        logits,
        labels,
        flags,
        class_names: None,
    })
}

pub fn load_matrix(path: impl AsRef<Path>, format: Format) -> Result<LogitMatrix> {
    let path = path.as_ref();
    match format {
        Format::Text => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_text(&text)
        }
        Format::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_binary(&bytes)
        }
    }
}

pub fn store_matrix(m: &LogitMatrix, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        Format::Text => encode_text(m).into_bytes(),
        Format::Binary => encode_binary(m),
    };
    write_atomic(path, &bytes)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(bytes).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}

pub fn encode_text(m: &LogitMatrix) -> String {
    let mut out = format!("{},{}\n", m.rows, m.cols);
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_text(text: &str) -> Result<LogitMatrix> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Header("empty file".into()))?;
    let (rows, cols) = parse_header(header)?;
    if rows < 1 || cols < 2 {
        return Err(Error::Header(format!(
            "shape {rows}x{cols} violates rows >= 1, cols >= 2"
        )));
    }
    let mut values = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (line_idx, line) in lines {
        if seen_rows == rows {
            return Err(Error::Parse {
                line: line_idx + 1,
                column: 0,
                message: format!("more than the declared {rows} rows"),
            });
        }
        let mut n = 0;
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: line_idx + 1,
                column: col,
                message: format!("row {seen_rows}, column {col}: not a number: {:?}", field.trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_idx + 1,
                    column: col,
                    message: format!("row {seen_rows}, column {col}: non-finite value {v}"),
                });
            }
            values.push(v);
            n += 1;
        }
        if n != cols {
            return Err(Error::Parse {
                line: line_idx + 1,
                column: n.min(cols),
                message: format!("ragged row {seen_rows}: {n} values, expected {cols}"),
            });
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::Parse {
            line: text.lines().count(),
            column: 0,
            message: format!("expected {rows} rows, found {seen_rows}"),
        });
    }
    LogitMatrix::new(rows, cols, values)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Header(format!("expected \"rows,cols\", got {line:?}")));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Header(format!("bad count {s:?} in {line:?}")))
    };
    Ok((parse(parts[0])?, parse(parts[1])?))
}

pub fn encode_binary(m: &LogitMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + 8 * m.values.len());
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(m.rows as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols as u32).to_le_bytes());
    for v in &m.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_binary(bytes: &[u8]) -> Result<LogitMatrix> {
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(Error::Header(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(Error::Header("missing LGT1 magic".into()));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if rows < 1 || cols < 2 {
        return Err(Error::Header(format!(
            "shape {rows}x{cols} violates rows >= 1, cols >= 2"
        )));
    }
    let body = &bytes[BINARY_HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Header(format!("shape {rows}x{cols} overflows")))?;
    if body.len() != expected {
        return Err(Error::Header(format!(
            "payload is {} bytes, expected {expected} for {rows}x{cols}",
            body.len()
        )));
    }
    let mut values = Vec::with_capacity(rows * cols);
    for (k, chunk) in body.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Parse {
                line: k / cols,
                column: k % cols,
                message: format!("row {}, column {}: non-finite value {v}", k / cols, k % cols),
            });
        }
        values.push(v);
    }
    LogitMatrix::new(rows, cols, values)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_integer_lines(&text).map(LabelVector)
}

pub fn store_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let body: String = labels.0.iter().map(|l| format!("{l}\n")).collect();
    write_atomic(path.as_ref(), body.as_bytes())
}

pub fn load_flags(path: impl AsRef<Path>) -> Result<RobustFlags> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ints = parse_integer_lines(&text)?;
    ints.iter()
        .enumerate()
        .map(|(i, &v)| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Parse {
                line: i + 1,
                column: 0,
                message: format!("flag must be 0 or 1, got {other}"),
            }),
        })
        .collect::<Result<Vec<bool>>>()
        .map(RobustFlags)
}

pub fn store_flags(flags: &RobustFlags, path: impl AsRef<Path>) -> Result<()> {
    let body: String = flags.0.iter().map(|&f| if f { "1\n" } else { "0\n" }).collect();
    write_atomic(path.as_ref(), body.as_bytes())
}

fn parse_integer_lines(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse::<usize>().map_err(|_| Error::Parse {
                line: i + 1,
                column: 0,
                message: format!("not a non-negative integer: {:?}", l.trim()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_two_by_three_text() {
        let m = parse_text("2,3\n1.0,2.0,3.0\n4.0,5.0,6.0\n").unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.cols(), 3);
        assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn nan_is_rejected_with_coordinates() {
        let err = parse_text("2,2\n1,2\n3,NaN\n").unwrap_err();
        match err {
            Error::Parse { line, column, message } => {
                assert_eq!((line, column), (3, 1));
                assert!(message.contains("row 1, column 1"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_and_header_errors_are_distinct() {
        assert!(matches!(parse_text("2,3\n1,2,3\n4,5\n"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(parse_text("two,3\n1,2,3\n"), Err(Error::Header(_))));
        assert!(matches!(parse_text("1,1\n1\n"), Err(Error::Header(_))));
        assert!(matches!(parse_text("1,2\n1,2\n3,4\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn identity_text_layout() {
        let m = LogitMatrix::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(encode_text(&m), "2,2\n1,0\n0,1\n");
    }

    #[test]
    fn binary_size_is_header_plus_payload() {
        let m = LogitMatrix::new(1, 2, vec![0.1, 0.2]).unwrap();
        assert_eq!(encode_binary(&m).len(), BINARY_HEADER_LEN + 16);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(LogitMatrix::new(0, 3, vec![]).is_err());
        assert!(LogitMatrix::from_rows(&[]).is_err());
    }

    #[test]
    fn binary_rejects_bad_magic_and_length() {
        let m = LogitMatrix::new(1, 2, vec![0.1, 0.2]).unwrap();
        let mut bytes = encode_binary(&m);
        bytes.pop();
        assert!(matches!(decode_binary(&bytes), Err(Error::Header(_))));
        let mut bytes = encode_binary(&m);
        bytes[0] = b'X';
        assert!(matches!(decode_binary(&bytes), Err(Error::Header(_))));
        let mut bytes = encode_binary(&m);
        bytes[BINARY_HEADER_LEN..BINARY_HEADER_LEN + 8].copy_from_slice(&f64::INFINITY.to_le_bytes());
        assert!(matches!(decode_binary(&bytes), Err(Error::Parse { line: 0, column: 0, .. })));
    }

    #[test]
    fn bundle_validation() {
        let logits = LogitMatrix::new(3, 10, vec![0.0; 30]).unwrap();
        assert!(validate_bundle(logits.clone(), LabelVector(vec![0, 4, 9]), None).is_ok());

        let err = validate_bundle(logits.clone(), LabelVector(vec![0, 10, 1]), None).unwrap_err();
        assert!(err.to_string().contains("label out of range at index 1"), "{err}");

        let err = validate_bundle(
            logits.clone(),
            LabelVector(vec![0, 1, 2]),
            Some(RobustFlags(vec![true, false])),
        )
        .unwrap_err();
        assert!(err.to_string().contains("flags length mismatch"), "{err}");

        let err = validate_bundle(logits, LabelVector(vec![0, 1]), None).unwrap_err();
        assert!(err.to_string().contains("labels length mismatch"), "{err}");
    }

    #[test]
    fn class_names_must_match_columns() {
        let logits = LogitMatrix::new(1, 3, vec![0.0; 3]).unwrap();
        let b = validate_bundle(logits, LabelVector(vec![0]), None).unwrap();
        assert!(b.clone().with_class_names(vec!["a".into(), "b".into()]).is_err());
        assert!(b.with_class_names(vec!["a".into(), "b".into(), "c".into()]).is_ok());
    }

    #[test]
    fn labels_and_flags_files() {
        let dir = tempfile::tempdir().unwrap();
        let lp = dir.path().join("labels.txt");
        store_labels(&LabelVector(vec![3, 0, 7]), &lp).unwrap();
        assert_eq!(load_labels(&lp).unwrap(), LabelVector(vec![3, 0, 7]));

        let fp = dir.path().join("flags.txt");
        store_flags(&RobustFlags(vec![true, false]), &fp).unwrap();
        assert_eq!(fs::read_to_string(&fp).unwrap(), "1\n0\n");
        assert_eq!(load_flags(&fp).unwrap(), RobustFlags(vec![true, false]));

        fs::write(&fp, "1\n2\n").unwrap();
        assert!(load_flags(&fp).is_err());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_matrix("/nonexistent/m.lgt", Format::Binary).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/m.lgt"));
    }

    fn any_finite() -> impl Strategy<Value = f64> {
        any::<u64>()
            .prop_map(f64::from_bits)
            .prop_filter("finite", |v| v.is_finite())
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(cols in 2usize..6, vals in proptest::collection::vec(any_finite(), 6..60)) {
            let rows = vals.len() / cols;
            let m = LogitMatrix::new(rows, cols, vals[..rows * cols].to_vec()).unwrap();
            let back = decode_binary(&encode_binary(&m)).unwrap();
            prop_assert!(m.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }

        #[test]
        fn text_round_trip_preserves_bits(vals in proptest::collection::vec(any_finite(), 2..40)) {
            let cols = 2;
            let n = vals.len() / cols * cols;
            let m = LogitMatrix::new(n / cols, cols, vals[..n].to_vec()).unwrap();
            let back = parse_text(&encode_text(&m)).unwrap();
            prop_assert!(m.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
