//! CSV ingestion into a [`FitData`].

use std::path::Path;

use gsar::{FamilyId, FamilySpec, FitData};
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

/// Coefficient name given to the implicit intercept column.
pub const INTERCEPT_NAME: &str = "(Intercept)";

/// A numeric CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub columns: Vec<String>,
    /// Row-major values.
    pub rows: Vec<Vec<f64>>,
}

/// Which columns play which role in a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelColumns {
    pub response: String,
    pub covariates: Vec<String>,
    pub trials: Option<String>,
    pub intercept: bool,
}

impl DataTable {
    pub fn read(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    pub fn from_reader(reader: impl std::io::Read) -> CliResult<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let columns: Vec<String> = rdr
            .headers()
            .map_err(|e| CliError::Input(format!("CSV header: {e}")))?
            .iter()
            .map(str::to_string)
            .collect();
        if columns.is_empty() || columns.iter().any(String::is_empty) {
            return Err(CliError::Input("CSV header has an empty column name".into()));
        }
        for (k, c) in columns.iter().enumerate() {
            if columns[..k].contains(c) {
                return Err(CliError::Input(format!("duplicate column '{c}'")));
            }
        }
        let mut rows = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            // header is line 1
            let line = r + 2;
            let record = record.map_err(|e| CliError::Input(format!("CSV line {line}: {e}")))?;
            let row = record
                .iter()
                .zip(&columns)
                .map(|(field, name)| {
                    if field.is_empty() {
                        return Err(CliError::Input(format!("line {line}: missing value in column '{name}'")));
                    }
                    field
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| CliError::Input(format!("line {line}: '{field}' in column '{name}' is not a finite number")))
                })
                .collect::<CliResult<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(CliError::Input("CSV has no data rows".into()));
        }
        Ok(Self { columns, rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, name: &str) -> CliResult<DVector<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Input(format!("no column named '{name}'")))?;
        Ok(DVector::from_iterator(self.n(), self.rows.iter().map(|r| r[k])))
    }

    /// Builds the response, trials and design for `spec`.
    ///
    /// Binomial responses may be given as proportions or as success counts;
    /// any value above one switches the whole column to counts.
    pub fn to_fit_data(&self, cols: &ModelColumns, spec: FamilySpec) -> CliResult<(FitData, Vec<String>)> {
        let n = self.n();
        let mut y = self.column(&cols.response)?;
        let binomial = spec.family() == FamilyId::Binomial;
        let trials = match (&cols.trials, binomial) {
            (Some(name), true) => self.column(name)?,
            (None, true) => return Err(CliError::Usage("binomial fits need --trials".into())),
            (Some(_), false) => return Err(CliError::Usage("--trials applies to binomial fits only".into())),
            (None, false) => DVector::from_element(n, 1.0),
        };
        if binomial && y.iter().any(|&v| v > 1.0) {
            for i in 0..n {
                y[i] /= trials[i];
            }
        }

        let mut names = Vec::with_capacity(cols.covariates.len() + 1);
        if cols.intercept {
            names.push(INTERCEPT_NAME.to_string());
        }
        if cols.covariates.iter().any(|c| c == &cols.response) {
            return Err(CliError::Usage(format!("response '{}' is also listed as a covariate", cols.response)));
        }
        names.extend(cols.covariates.iter().cloned());
        if names.is_empty() {
            return Err(CliError::Usage("model has no columns; give --covariates or keep the intercept".into()));
        }
        let mut x = DMatrix::zeros(n, names.len());
        let offset = usize::from(cols.intercept);
        if cols.intercept {
            x.column_mut(0).fill(1.0);
        }
        for (k, name) in cols.covariates.iter().enumerate() {
            x.set_column(k + offset, &self.column(name)?);
        }
        Ok((FitData::with_trials(y, trials, x), names))
    }
}
