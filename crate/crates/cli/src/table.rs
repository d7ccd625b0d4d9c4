//! Convergence tables: CSV emit/parse and empirical convergence orders.

use std::fmt::Write as _;

/// One row per solve: degrees of freedom, error, estimator total.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<(usize, f64, f64)>,
}

pub const CSV_HEADER: &str = "ndof,error,estimator";

impl ConvergenceTable {
    pub fn new(rows: Vec<(usize, f64, f64)>) -> anyhow::Result<Self> {
        for pair in rows.windows(2) {
            if pair[1].0 <= pair[0].0 {
                anyhow::bail!("ndof column must be strictly increasing");
            }
        }
        Ok(Self { rows })
    }

    /// CSV with 17 significant digits and LF line endings, reparsing to the
    /// identical table.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for &(n, e, eta) in &self.rows {
            writeln!(out, "{n},{e:.16e},{eta:.16e}").unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| anyhow::anyhow!("empty csv"))?;
        if header != CSV_HEADER {
            anyhow::bail!("expected header `{CSV_HEADER}`, got `{header}`");
        }
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let mut next = |name: &str| {
                cols.next()
                    .ok_or_else(|| anyhow::anyhow!("row {}: missing column {name}", k + 1))
            };
            let n: usize = next("ndof")?.parse()?;
            let e: f64 = next("error")?.parse()?;
            let eta: f64 = next("estimator")?.parse()?;
            rows.push((n, e, eta));
        }
        Self::new(rows)
    }

    /// Per-step rates −log(e_{i+1}/e_i)/log(n_{i+1}/n_i); None flags an
    /// undefined rate from a zero or negative error.
    pub fn eoc(&self) -> Vec<Option<f64>> {
        self.rows
            .windows(2)
            .map(|w| {
                let (n0, e0, _) = w[0];
                let (n1, e1, _) = w[1];
                if e0 <= 0.0 || e1 <= 0.0 {
                    None
                } else {
                    Some(-(e1 / e0).ln() / ((n1 as f64 / n0 as f64).ln()))
                }
            })
            .collect()
    }

    /// Least-squares slope of log error vs log ndof over the last `window`
    /// rows, as a positive order of convergence.
    pub fn tail_order(&self, window: usize) -> Option<f64> {
        let rows: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.1 > 0.0)
            .collect();
        if rows.len() < 2 {
            return None;
        }
        let tail = &rows[rows.len().saturating_sub(window)..];
        let m = tail.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for r in tail {
            let x = (r.0 as f64).ln();
            let y = r.1.ln();
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let denom = m * sxx - sx * sx;
        if denom == 0.0 {
            return None;
        }
        Some(-(m * sxy - sx * sy) / denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let t = ConvergenceTable::new(vec![
            (100, 0.1234567890123456789, 1.0 / 3.0),
            (400, 1e-300, 2.0f64.sqrt()),
            (900, 5.0, 0.0),
        ])
        .unwrap();
        let back = ConvergenceTable::parse(&t.emit()).unwrap();
        assert_eq!(t, back);
        for (a, b) in t.rows.iter().zip(&back.rows) {
            assert_eq!(a.1.to_bits(), b.1.to_bits());
            assert_eq!(a.2.to_bits(), b.2.to_bits());
        }
    }

    #[test]
    fn header_and_monotonicity_are_enforced() {
        assert!(ConvergenceTable::parse("nope\n1,2,3\n").is_err());
        assert!(ConvergenceTable::new(vec![(10, 1.0, 0.0), (10, 0.5, 0.0)]).is_err());
    }

    #[test]
    fn eoc_closed_forms() {
        let t = ConvergenceTable::new(vec![(100, 1.0, 0.0), (400, 0.25, 0.0)]).unwrap();
        assert!((t.eoc()[0].unwrap() - 1.0).abs() < 1e-12);

        let t = ConvergenceTable::new(vec![(100, 0.7, 0.0), (400, 0.7, 0.0)]).unwrap();
        assert_eq!(t.eoc()[0].unwrap(), 0.0);

        let rows: Vec<_> = (1..=6)
            .map(|k| {
                let n = 100 * k * k;
                (n, (n as f64).powf(-1.5), 0.0)
            })
            .collect();
        let t = ConvergenceTable::new(rows).unwrap();
        for r in t.eoc() {
            assert!((r.unwrap() - 1.5).abs() < 1e-12);
        }
        assert!((t.tail_order(5).unwrap() - 1.5).abs() < 1e-12);

        let t = ConvergenceTable::new(vec![(10, 1.0, 0.0), (20, 0.0, 0.0)]).unwrap();
        assert_eq!(t.eoc()[0], None);
    }
}
