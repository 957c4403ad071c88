//! Sampled observable curves with provenance, and their CSV form.

/// A sampled observable (T(k), F(k), S(omega), g2(t), ...) together with
/// the grid, the config hash and the solver settings that produced it.
#[derive(Debug, Clone)]
pub struct CurveSeries {
    pub axis_label: String,
    pub columns: Vec<String>,
    pub axis: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    /// Indices of grid points where the solver failed (values are NaN).
    pub flagged: Vec<usize>,
    pub config_hash: u64,
    pub solver_tolerances: String,
    pub source: String,
}

impl CurveSeries {
    pub fn new(
        axis_label: &str,
        columns: &[&str],
        config_hash: u64,
        solver_tolerances: &str,
        source: &str,
    ) -> Self {
        CurveSeries {
            axis_label: axis_label.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            axis: Vec::new(),
            rows: Vec::new(),
            flagged: Vec::new(),
            config_hash,
            solver_tolerances: solver_tolerances.to_string(),
            source: source.to_string(),
        }
    }

    pub fn push(&mut self, x: f64, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.axis.push(x);
        self.rows.push(row);
    }

    pub fn push_flagged(&mut self, x: f64) {
        self.flagged.push(self.axis.len());
        self.axis.push(x);
        self.rows.push(vec![f64::NAN; self.columns.len()]);
    }

    /// Column values by name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Deterministic CSV: provenance header line, column header, data rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# config={:016x} source={} tol={}\n",
            self.config_hash, self.source, self.solver_tolerances
        ));
        out.push_str(&self.axis_label);
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (x, row) in self.axis.iter().zip(self.rows.iter()) {
            out.push_str(&format!("{x:?}"));
            for v in row {
                out.push(',');
                out.push_str(&format!("{v:?}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_deterministic_and_carries_provenance() {
        let mut s = CurveSeries::new("k", &["T"], 0xabcd, "lu=1e-12", "numeric");
        s.push(1.0, vec![0.5]);
        s.push_flagged(2.0);
        let a = s.to_csv();
        let b = s.to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("# config=000000000000abcd source=numeric tol=lu=1e-12\n"));
        assert!(a.contains("k,T\n"));
        assert!(a.contains("NaN"));
    }
}
