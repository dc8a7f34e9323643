use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations y₁..yₙ, optionally with binomial trial sizes.
///
/// A set may have one observation marked as omitted (leave-one-out folds).
/// Indices always refer to the full set, so parameter layouts tied to
/// observation indices stay valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    y: Vec<f64>,
    trials: Option<Vec<u64>>,
    omitted: Option<usize>,
}

impl ObservationSet {
    pub fn continuous(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Invalid("observation set is empty".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("observation {i} is not finite")));
        }
        Ok(Self { y, trials: None, omitted: None })
    }

    pub fn binomial(y: Vec<u64>, trials: Vec<u64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::Invalid("observation set is empty".into()));
        }
        if y.len() != trials.len() {
            return Err(Error::Invalid(format!(
                "{} counts but {} trial sizes",
                y.len(),
                trials.len()
            )));
        }
        for (i, (&k, &n)) in y.iter().zip(&trials).enumerate() {
            if n == 0 {
                return Err(Error::Invalid(format!("trial size {i} must be positive")));
            }
            if k > n {
                return Err(Error::Invalid(format!("count {k} exceeds trial size {n} at observation {i}")));
            }
        }
        Ok(Self {
            y: y.into_iter().map(|k| k as f64).collect(),
            trials: Some(trials),
            omitted: None,
        })
    }

    /// Reads a CSV with a `y` column and optional `n_trials` column.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn from_reader<R: std::io::Read>(reader: R, label: &str) -> Result<Self> {
        let parse_err = |line: u64, msg: String| Error::Parse { path: label.to_string(), line, msg };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let y_col = headers
            .iter()
            .position(|h| h == "y")
            .ok_or_else(|| parse_err(1, "missing column `y`".into()))?;
        let n_col = headers.iter().position(|h| h == "n_trials");

        let mut y = Vec::new();
        let mut trials = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |c: usize| rec.get(c).ok_or_else(|| parse_err(line, format!("missing field {c}")));
            let v: f64 = field(y_col)?
                .parse()
                .map_err(|_| parse_err(line, format!("cannot parse y value `{}`", &rec[y_col])))?;
            if !v.is_finite() {
                return Err(parse_err(line, "y is not finite".into()));
            }
            y.push(v);
            if let Some(c) = n_col {
                let n: u64 = field(c)?
                    .parse()
                    .map_err(|_| parse_err(line, format!("cannot parse n_trials `{}`", &rec[c])))?;
                if v < 0.0 || v.fract() != 0.0 || v > n as f64 {
                    return Err(parse_err(line, format!("y = {v} is not a count in 0..={n}")));
                }
                trials.push(n);
            }
        }
        if y.is_empty() {
            return Err(parse_err(1, "no observations".into()));
        }
        if n_col.is_some() {
            Self::binomial(y.into_iter().map(|v| v as u64).collect(), trials)
        } else {
            Self::continuous(y)
        }
    }

    /// Writes the set in the same CSV layout [`Self::from_csv`] accepts.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io { path: path.display().to_string(), source };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        match &self.trials {
            Some(t) => {
                w.write_record(["y", "n_trials"]).map_err(|e| io(e.into()))?;
                for (y, n) in self.y.iter().zip(t) {
                    w.write_record([format!("{}", *y as u64), n.to_string()]).map_err(|e| io(e.into()))?;
                }
            }
            None => {
                w.write_record(["y"]).map_err(|e| io(e.into()))?;
                for y in &self.y {
                    w.write_record([format!("{y:?}")]).map_err(|e| io(e.into()))?;
                }
            }
        }
        w.flush().map_err(io)
    }

    /// Number of active observations.
    pub fn n(&self) -> usize {
        self.y.len() - usize::from(self.omitted.is_some())
    }

    /// Total number of observations, including an omitted one.
    pub fn len_all(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn ys(&self) -> &[f64] {
        &self.y
    }

    pub fn trials(&self) -> Option<&[u64]> {
        self.trials.as_deref()
    }

    pub fn omitted(&self) -> Option<usize> {
        self.omitted
    }

    /// Indices of the active observations, in increasing order.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.y.len()).filter(move |&i| Some(i) != self.omitted)
    }

    /// The same data with observation `i` held out.
    pub fn leave_one_out(&self, i: usize) -> Result<Self> {
        if i >= self.y.len() {
            return Err(Error::Invalid(format!("fold index {i} out of range")));
        }
        if self.omitted.is_some() {
            return Err(Error::Invalid("observation set already has an omitted observation".into()));
        }
        if self.y.len() < 2 {
            return Err(Error::Invalid("leave-one-out needs at least two observations".into()));
        }
        Ok(Self { omitted: Some(i), ..self.clone() })
    }

    /// Sum of the active observations.
    pub fn active_sum(&self) -> f64 {
        self.active().map(|i| self.y[i]).sum()
    }

    /// Copy with observation `i` replaced by `value`.
    pub fn with_value(&self, i: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.y[i] = value;
        out
    }
}
