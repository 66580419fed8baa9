//! Expression tables (genes x conditions, FPKM) and seeded row subsampling.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fmt17, DataMatrix};

/// Directory searched for relative data paths that do not exist as given.
pub const DATA_DIR_ENV: &str = "HDPCA_DATA_DIR";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    /// Tab if the header line contains one, comma otherwise.
    #[default]
    Auto,
    Tab,
    Comma,
}

impl Delimiter {
    fn resolve(self, header: &str) -> char {
        match self {
            Delimiter::Tab => '\t',
            Delimiter::Comma => ',',
            Delimiter::Auto if header.contains('\t') => '\t',
            Delimiter::Auto => ',',
        }
    }
}

impl fmt::Display for Delimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Delimiter::Auto => "auto",
            Delimiter::Tab => "tab",
            Delimiter::Comma => "comma",
        })
    }
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(Delimiter::Auto),
            "tab" | "\t" | "tsv" => Ok(Delimiter::Tab),
            "comma" | "," | "csv" => Ok(Delimiter::Comma),
            other => Err(Error::input(format!("unknown delimiter {other:?}"))),
        }
    }
}

/// Gene expression values: one row per gene, one column per condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTable {
    gene_ids: Vec<String>,
    condition_names: Vec<String>,
    values: DMatrix<f64>,
}

impl ExpressionTable {
    pub fn new(
        gene_ids: Vec<String>,
        condition_names: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.nrows() != gene_ids.len() || values.ncols() != condition_names.len() {
            return Err(Error::input(format!(
                "labels ({} genes, {} conditions) do not match a {}x{} matrix",
                gene_ids.len(),
                condition_names.len(),
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::input("expression values must be finite and nonnegative"));
        }
        Ok(Self {
            gene_ids,
            condition_names,
            values,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_conditions(&self) -> usize {
        self.values.ncols()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn condition_names(&self) -> &[String] {
        &self.condition_names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// The full table as observations (genes) x dimensions (conditions).
    pub fn as_data_matrix(&self) -> Result<DataMatrix> {
        DataMatrix::new(self.values.clone())?.with_labels(
            Some(self.gene_ids.clone()),
            Some(self.condition_names.clone()),
        )
    }

    /// Writes the table with a `GeneID` header and 17 significant digits.
    pub fn write<W: Write>(&self, mut w: W, delimiter: Delimiter) -> std::io::Result<()> {
        let sep = match delimiter {
            Delimiter::Comma => ",",
            _ => "\t",
        };
        write!(w, "GeneID")?;
        for c in &self.condition_names {
            write!(w, "{sep}{c}")?;
        }
        writeln!(w)?;
        for (i, g) in self.gene_ids.iter().enumerate() {
            write!(w, "{g}")?;
            for v in self.values.row(i).iter() {
                write!(w, "{sep}{}", fmt17(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Parses a delimiter-separated table whose first line holds condition names
/// and whose first column holds gene identifiers.
pub fn parse_expression_table<R: BufRead>(reader: R, delimiter: Delimiter) -> Result<ExpressionTable> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line.map_err(|e| Error::input(format!("line {}: {e}", i + 1)))?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::input("empty expression table")),
        }
    };
    let sep = delimiter.resolve(&header);
    let conditions: Vec<String> = header
        .trim_end_matches(['\r', '\n'])
        .split(sep)
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    if conditions.is_empty() {
        return Err(Error::input("line 1: header has no condition columns"));
    }

    let mut gene_ids = Vec::new();
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::input(format!("line {lineno}: {e}")))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(sep);
        let gene = fields.next().unwrap_or_default().trim().to_string();
        let cells: Vec<&str> = fields.collect();
        if cells.len() != conditions.len() {
            return Err(Error::input(format!(
                "line {lineno}: expected {} values, found {}",
                conditions.len(),
                cells.len()
            )));
        }
        if !seen.insert(gene.clone()) {
            return Err(Error::input(format!("line {lineno}: duplicate GeneID {gene:?}")));
        }
        for cell in cells {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::input(format!("line {lineno}: non-numeric value {:?}", cell.trim()))
            })?;
            if !v.is_finite() || v < 0.0 {
                return Err(Error::input(format!(
                    "line {lineno}: value {v} is not a finite nonnegative FPKM"
                )));
            }
            values.push(v);
        }
        gene_ids.push(gene);
    }
    if gene_ids.is_empty() {
        return Err(Error::input("expression table has no gene rows"));
    }
    let n = gene_ids.len();
    ExpressionTable::new(
        gene_ids,
        conditions.clone(),
        DMatrix::from_row_slice(n, conditions.len(), &values),
    )
}

/// Resolves `path`, falling back to `$HDPCA_DATA_DIR/path` for relative paths
/// that do not exist as given.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
        let candidate = Path::new(&dir).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    path.to_path_buf()
}

pub fn load_expression_table(path: &Path, delimiter: Delimiter) -> Result<ExpressionTable> {
    let resolved = resolve_data_path(path);
    let file = std::fs::File::open(&resolved).map_err(|e| Error::io(&resolved, e))?;
    parse_expression_table(BufReader::new(file), delimiter).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", resolved.display())),
        other => other,
    })
}

/// Draws `n` distinct genes uniformly without replacement and returns them,
/// in table order, as an `n x conditions` data matrix.
pub fn subsample_rows(table: &ExpressionTable, n: usize, seed: u64) -> Result<DataMatrix> {
    if n < 2 || n > table.n_genes() {
        return Err(Error::input(format!(
            "cannot draw n = {n} rows from {} genes (need 2 <= n <= {})",
            table.n_genes(),
            table.n_genes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, table.n_genes(), n).into_vec();
    idx.sort_unstable();
    let p = table.n_conditions();
    let values = DMatrix::from_fn(n, p, |r, c| table.values[(idx[r], c)]);
    DataMatrix::new(values)?.with_labels(
        Some(idx.iter().map(|&i| table.gene_ids[i].clone()).collect()),
        Some(table.condition_names.clone()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "GeneID\tc1\tc2\ng1\t1.5\t0\ng2\t2\t3.25\ng3\t0.1\t7\n";

    #[test]
    fn parses_small_fixture() {
        let t = parse_expression_table(SMALL.as_bytes(), Delimiter::Auto).unwrap();
        assert_eq!((t.n_genes(), t.n_conditions()), (3, 2));
        assert_eq!(t.gene_ids(), &["g1", "g2", "g3"]);
        assert_eq!(t.condition_names(), &["c1", "c2"]);
        assert_eq!(t.values()[(1, 1)], 3.25);
    }

    #[test]
    fn comma_auto_detected() {
        let t = parse_expression_table("GeneID,a,b\nx,1,2\ny,3,4\n".as_bytes(), Delimiter::Auto).unwrap();
        assert_eq!(t.values()[(1, 0)], 3.0);
    }

    #[test]
    fn errors_name_the_line() {
        let na = "GeneID\tc1\tc2\ng1\t1\t2\ng2\tNA\t3\n";
        let err = parse_expression_table(na.as_bytes(), Delimiter::Auto).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let ragged = "GeneID\tc1\tc2\ng1\t1\n";
        let err = parse_expression_table(ragged.as_bytes(), Delimiter::Auto).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");

        let dup = "GeneID\tc1\ng1\t1\ng1\t2\n";
        let err = parse_expression_table(dup.as_bytes(), Delimiter::Auto).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let neg = "GeneID\tc1\ng1\t-1\n";
        assert!(parse_expression_table(neg.as_bytes(), Delimiter::Auto).is_err());
    }

    #[test]
    fn full_draw_is_table_order() {
        let t = parse_expression_table(SMALL.as_bytes(), Delimiter::Auto).unwrap();
        let d = subsample_rows(&t, 3, 99).unwrap();
        assert_eq!(d.values(), t.values());
        assert!(subsample_rows(&t, 4, 0).is_err());
        assert!(subsample_rows(&t, 1, 0).is_err());
    }

    #[test]
    fn write_round_trip() {
        let t = parse_expression_table(SMALL.as_bytes(), Delimiter::Auto).unwrap();
        let mut buf = Vec::new();
        t.write(&mut buf, Delimiter::Tab).unwrap();
        let back = parse_expression_table(buf.as_slice(), Delimiter::Auto).unwrap();
        assert_eq!(back, t);
    }
}
