//! Edge-list and GAL readers/writers. Indices in files are 1-based.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::SpatialWeights;
use crate::error::{GsarError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightsFormat {
    EdgeList,
    Gal,
}

impl FromStr for WeightsFormat {
    type Err = GsarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "edge-list" | "edgelist" | "edges" => Ok(Self::EdgeList),
            "gal" => Ok(Self::Gal),
            other => Err(GsarError::InvalidInput(format!("unknown weights format '{other}'"))),
        }
    }
}

/// Reads a weights file. Row standardization is left to the caller.
pub fn load_weights(path: impl AsRef<Path>, format: WeightsFormat) -> Result<SpatialWeights> {
    let text = std::fs::read_to_string(path)?;
    match format {
        WeightsFormat::EdgeList => parse_edge_list(&text),
        WeightsFormat::Gal => parse_gal(&text),
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(k) => &line[..k],
        None => line,
    }
}

fn parse_index(token: &str, n: usize, line: usize) -> Result<usize> {
    let idx: i64 = token.parse().map_err(|_| GsarError::Parse {
        line,
        message: format!("expected an integer index, found '{token}'"),
    })?;
    if idx < 1 || idx as usize > n {
        return Err(GsarError::IndexOutOfBounds { index: idx, n, line });
    }
    Ok(idx as usize - 1)
}

fn parse_count(token: &str, line: usize) -> Result<usize> {
    token.parse().map_err(|_| GsarError::Parse {
        line,
        message: format!("expected a nonnegative integer, found '{token}'"),
    })
}

/// Parses the `n=<int>` / `<i> <j> <w>` edge-list format.
pub fn parse_edge_list(text: &str) -> Result<SpatialWeights> {
    let mut n: Option<usize> = None;
    let mut triplets = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let Some(size) = n else {
            let value = line
                .strip_prefix("n=")
                .or_else(|| line.strip_prefix("n ="))
                .ok_or_else(|| GsarError::Parse {
                    line: line_no,
                    message: "first line must be 'n=<int>'".into(),
                })?;
            let size = parse_count(value.trim(), line_no)?;
            if size < 2 {
                return Err(GsarError::Validation(format!("weights need n >= 2, got {size}")));
            }
            n = Some(size);
            continue;
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 {
            return Err(GsarError::Parse {
                line: line_no,
                message: format!("expected '<i> <j> <w>', found {} fields", tokens.len()),
            });
        }
        let i = parse_index(tokens[0], size, line_no)?;
        let j = parse_index(tokens[1], size, line_no)?;
        let w: f64 = tokens[2].parse().map_err(|_| GsarError::Parse {
            line: line_no,
            message: format!("expected a real weight, found '{}'", tokens[2]),
        })?;
        if i == j {
            return Err(GsarError::Validation(format!(
                "line {line_no}: diagonal entry ({0}, {0}) is not allowed",
                i + 1
            )));
        }
        if !w.is_finite() || w < 0.0 {
            return Err(GsarError::Validation(format!(
                "line {line_no}: weight {w} must be finite and nonnegative"
            )));
        }
        triplets.push((i, j, w));
    }
    let n = n.ok_or_else(|| GsarError::Parse {
        line: 1,
        message: "missing 'n=<int>' header".into(),
    })?;
    SpatialWeights::from_triplets(n, triplets)
}

/// Parses a GAL neighbour file as binary weights.
///
/// The header is either `<n>` or the GeoDa form `0 <n> <layer> <key>`.
pub fn parse_gal(text: &str) -> Result<SpatialWeights> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, strip_comment(l).trim()))
        .collect();
    let mut cursor = lines.iter().copied().skip_while(|(_, l)| l.is_empty()).peekable();

    let (header_line, header) = cursor.next().ok_or_else(|| GsarError::Parse {
        line: 1,
        message: "empty GAL file".into(),
    })?;
    let head: Vec<&str> = header.split_whitespace().collect();
    let n = match head.as_slice() {
        [n] => parse_count(n, header_line)?,
        [_, n, ..] if head.len() == 4 => parse_count(n, header_line)?,
        _ => {
            return Err(GsarError::Parse {
                line: header_line,
                message: "header must be '<n>' or '0 <n> <layer> <key>'".into(),
            })
        }
    };
    if n < 2 {
        return Err(GsarError::Validation(format!("weights need n >= 2, got {n}")));
    }

    let mut seen = vec![false; n];
    let mut triplets = Vec::new();
    while let Some((line_no, line)) = cursor.find(|(_, l)| !l.is_empty()) {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(GsarError::Parse {
                line: line_no,
                message: "expected '<id> <neighbour count>'".into(),
            });
        }
        let id = parse_index(tokens[0], n, line_no)?;
        let k = parse_count(tokens[1], line_no)?;
        if std::mem::replace(&mut seen[id], true) {
            return Err(GsarError::Validation(format!("line {line_no}: unit {} listed twice", id + 1)));
        }
        if k == 0 {
            // an empty neighbour line may or may not follow
            if matches!(cursor.peek(), Some((_, l)) if l.is_empty()) {
                cursor.next();
            }
            continue;
        }
        let (nb_line, neighbours) = cursor.find(|(_, l)| !l.is_empty()).ok_or_else(|| GsarError::Parse {
            line: line_no,
            message: format!("missing neighbour list for unit {}", id + 1),
        })?;
        let ids: Vec<&str> = neighbours.split_whitespace().collect();
        if ids.len() != k {
            return Err(GsarError::Parse {
                line: nb_line,
                message: format!("expected {k} neighbour ids, found {}", ids.len()),
            });
        }
        for token in ids {
            let j = parse_index(token, n, nb_line)?;
            if j == id {
                return Err(GsarError::Validation(format!(
                    "line {nb_line}: unit {} lists itself as a neighbour",
                    id + 1
                )));
            }
            triplets.push((id, j, 1.0));
        }
    }
    SpatialWeights::from_triplets(n, triplets)
}

/// Serializes to the edge-list format with 17 significant digits.
pub fn write_edge_list(w: &SpatialWeights) -> String {
    let mut out = format!("n={}\n", w.n());
    for (i, j, v) in w.entries() {
        writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v).unwrap();
    }
    out
}

/// Serializes the neighbour structure to GAL. Weight values are dropped.
pub fn write_gal(w: &SpatialWeights) -> String {
    let mut out = format!("{}\n", w.n());
    for i in 0..w.n() {
        let ids: Vec<String> = w.row(i).map(|(j, _)| (j + 1).to_string()).collect();
        writeln!(out, "{} {}\n{}", i + 1, ids.len(), ids.join(" ")).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{build_rook_grid, rook_adjacency};
    use proptest::prelude::*;

    #[test]
    fn edge_list_exchange() {
        let w = parse_edge_list("n=2\n1 2 1.0\n2 1 1.0\n").unwrap();
        assert_eq!(w.get(0, 1), 1.0);
        assert_eq!(w.get(1, 0), 1.0);
        assert!(!w.is_row_standardized());
    }

    #[test]
    fn edge_list_comments_and_blanks() {
        let w = parse_edge_list("# header\n\nn=3 # three units\n1 2 0.5 # a\n\n3 1 2\n").unwrap();
        assert_eq!(w.nnz(), 2);
        assert_eq!(w.get(2, 0), 2.0);
    }

    #[test]
    fn edge_list_rejects_diagonal() {
        let err = parse_edge_list("n=2\n1 1 0.5\n").unwrap_err();
        assert!(matches!(err, GsarError::Validation(_)), "{err}");
    }

    #[test]
    fn edge_list_reports_line_numbers() {
        match parse_edge_list("n=3\n1 2 1\n2 x 1\n").unwrap_err() {
            GsarError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        match parse_edge_list("n=3\n1 4 1\n").unwrap_err() {
            GsarError::IndexOutOfBounds { index, line, .. } => assert_eq!((index, line), (4, 2)),
            e => panic!("unexpected {e}"),
        }
        assert!(matches!(parse_edge_list("n=3\n1 2 -1\n").unwrap_err(), GsarError::Validation(_)));
        assert!(matches!(parse_edge_list("1 2 1\n").unwrap_err(), GsarError::Parse { line: 1, .. }));
    }

    #[test]
    fn gal_matches_rook_grid() {
        let gal = write_gal(&build_rook_grid(3, 3).unwrap());
        let loaded = parse_gal(&gal).unwrap();
        assert_eq!(loaded, rook_adjacency(3, 3).unwrap());
        assert_eq!(loaded.row_standardize(), build_rook_grid(3, 3).unwrap());
    }

    #[test]
    fn gal_geoda_header_and_islands() {
        let text = "0 3 grid id\n1 1\n2\n2 1\n1\n3 0\n\n";
        let w = parse_gal(text).unwrap();
        assert_eq!(w.n(), 3);
        assert_eq!(w.empty_rows(), 1);
    }

    #[test]
    fn gal_errors() {
        assert!(matches!(parse_gal("2\n1 2\n2\n").unwrap_err(), GsarError::Parse { line: 3, .. }));
        assert!(matches!(
            parse_gal("2\n1 1\n3\n").unwrap_err(),
            GsarError::IndexOutOfBounds { index: 3, .. }
        ));
        assert!(matches!(parse_gal("2\n1 1\n1\n").unwrap_err(), GsarError::Validation(_)));
    }

    proptest! {
        #[test]
        fn edge_list_round_trip_is_exact(
            n in 2usize..10,
            raw in proptest::collection::vec((0usize..10, 0usize..10, 0.0f64..1e6), 0..30),
        ) {
            let mut seen = std::collections::HashSet::new();
            let triplets: Vec<_> = raw
                .into_iter()
                .filter(|&(i, j, _)| i < n && j < n && i != j && seen.insert((i, j)))
                .map(|(i, j, w)| (i, j, w / 7.0))
                .collect();
            let w = SpatialWeights::from_triplets(n, triplets).unwrap();
            prop_assert_eq!(parse_edge_list(&write_edge_list(&w)).unwrap(), w.clone());
            let binary = SpatialWeights::from_triplets(n, w.entries().map(|(i, j, _)| (i, j, 1.0))).unwrap();
            prop_assert_eq!(parse_gal(&write_gal(&binary)).unwrap(), binary);
        }
    }
}
