//! Object-count segmentation metrics over a film-count matrix.
//!
//! `p[j][i]` counts films showing `i` teeth (1-based) of which `j` were
//! separated correctly. With `F_i = Σ_j p[j][i]` and `S = Σ_i F_i²`:
//!
//! * optimality = `100 · Σ_i p[i][i]·F_i / S`
//! * failure = `100 · Σ_i p[0][i]·F_i / S`
//! * m-th sub-optimality = `100 · Σ_i p[i][i+m]·F_{i+m} / S`
//!
//! Numerators and the denominator are accumulated as integers and divided
//! once, so the metrics of a consistent matrix add up to exactly 100.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(N + 1) × N` count matrix; rows `j = 0..=N`, columns `i = 1..=N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalMatrix {
    n_max: usize,
    /// `counts[j][i - 1]`
    counts: Vec<Vec<u64>>,
}

impl EvalMatrix {
    pub fn zeros(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::InvalidMatrix("N must be at least 1".into()));
        }
        Ok(Self {
            n_max,
            counts: vec![vec![0; n_max]; n_max + 1],
        })
    }

    /// Builds a matrix from rows `j = 0..=N`, each with `N` entries for `i = 1..=N`.
    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n_max = rows
            .len()
            .checked_sub(1)
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::InvalidMatrix("need rows j = 0..=N with N >= 1".into()))?;
        if let Some((j, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_max) {
            return Err(Error::InvalidMatrix(format!(
                "row j={j} has {} columns, expected {n_max}",
                row.len()
            )));
        }
        let m = Self {
            n_max,
            counts: rows,
        };
        m.check_structure()?;
        Ok(m)
    }

    fn check_structure(&self) -> Result<()> {
        for (j, row) in self.counts.iter().enumerate() {
            for (idx, &c) in row.iter().enumerate() {
                let i = idx + 1;
                if j > i && c != 0 {
                    return Err(Error::InvalidMatrix(format!(
                        "p[{j}][{i}] = {c}: a film cannot have more teeth segmented than it shows"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `p[j][i]`, with `i` 1-based.
    pub fn get(&self, j: usize, i: usize) -> u64 {
        assert!(
            (1..=self.n_max).contains(&i) && j <= self.n_max,
            "p[{j}][{i}] out of range"
        );
        self.counts[j][i - 1]
    }

    pub fn add(&mut self, j: usize, i: usize, count: u64) -> Result<()> {
        if i == 0 || i > self.n_max || j > i {
            return Err(Error::InvalidMatrix(format!(
                "cell p[{j}][{i}] is outside 0 <= j <= i <= {}",
                self.n_max
            )));
        }
        self.counts[j][i - 1] += count;
        Ok(())
    }

    /// Cell-wise sum; used to merge per-worker matrices.
    pub fn merge(&mut self, other: &EvalMatrix) -> Result<()> {
        if other.n_max != self.n_max {
            return Err(Error::InvalidMatrix(format!(
                "cannot merge N={} into N={}",
                other.n_max, self.n_max
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total_films(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Parses the CSV layout
    ///
    /// ```text
    /// j,1,2,...,N
    /// 0,p01,p02,...
    /// ...
    /// N,...
    /// ```
    ///
    /// Blank lines and lines starting with `#` are ignored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidMatrix("empty CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let n_max = cols.len().saturating_sub(1);
        if n_max == 0 {
            return Err(Error::InvalidMatrix("header must list i = 1..=N".into()));
        }
        for (k, c) in cols.iter().enumerate().skip(1) {
            if c.parse::<usize>().ok() != Some(k) {
                return Err(Error::InvalidMatrix(format!(
                    "header column {k} is '{c}', expected {k}"
                )));
            }
        }
        let mut rows = Vec::new();
        for (expected_j, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != n_max + 1 {
                return Err(Error::InvalidMatrix(format!(
                    "row '{line}' has {} fields, expected {}",
                    fields.len(),
                    n_max + 1
                )));
            }
            if fields[0].parse::<usize>().ok() != Some(expected_j) {
                return Err(Error::InvalidMatrix(format!(
                    "expected row j={expected_j}, found '{}'",
                    fields[0]
                )));
            }
            let row = fields[1..]
                .iter()
                .map(|f| {
                    f.parse::<u64>().map_err(|_| {
                        Error::InvalidMatrix(format!("'{f}' is not a non-negative count"))
                    })
                })
                .collect::<Result<Vec<u64>>>()?;
            rows.push(row);
        }
        if rows.len() != n_max + 1 {
            return Err(Error::InvalidMatrix(format!(
                "found {} rows, expected j = 0..={n_max}",
                rows.len()
            )));
        }
        Self::from_rows(rows)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("j");
        for i in 1..=self.n_max {
            let _ = write!(out, ",{i}");
        }
        out.push('\n');
        for (j, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{j}");
            for c in row {
                let _ = write!(out, ",{c}");
            }
            out.push('\n');
        }
        out
    }
}

/// `F_i = Σ_j p[j][i]`, indexed by `i - 1`.
pub fn film_totals(m: &EvalMatrix) -> Vec<u64> {
    (1..=m.n_max)
        .map(|i| (0..=m.n_max).map(|j| m.get(j, i)).sum())
        .collect()
}

/// An exact ratio `numerator / denominator`, reported as a percentage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fraction {
    pub numerator: u128,
    pub denominator: u128,
}

impl Fraction {
    pub fn percent(&self) -> f64 {
        100.0 * self.numerator as f64 / self.denominator as f64
    }
}

fn denominator(m: &EvalMatrix) -> Result<u128> {
    let s: u128 = film_totals(m)
        .iter()
        .map(|&f| u128::from(f) * u128::from(f))
        .sum();
    if s == 0 {
        return Err(Error::InvalidMatrix("matrix holds no films".into()));
    }
    Ok(s)
}

/// Σ over `i` of `p[row(i)][i] · F_i` for the cells selected by `row`.
fn weighted_sum(m: &EvalMatrix, totals: &[u64], row: impl Fn(usize) -> Option<usize>) -> u128 {
    (1..=m.n_max)
        .filter_map(|i| row(i).map(|j| u128::from(m.get(j, i)) * u128::from(totals[i - 1])))
        .sum()
}

pub fn optimality_fraction(m: &EvalMatrix) -> Result<Fraction> {
    let totals = film_totals(m);
    Ok(Fraction {
        numerator: weighted_sum(m, &totals, Some),
        denominator: denominator(m)?,
    })
}

pub fn failure_fraction(m: &EvalMatrix) -> Result<Fraction> {
    let totals = film_totals(m);
    Ok(Fraction {
        numerator: weighted_sum(m, &totals, |_| Some(0)),
        denominator: denominator(m)?,
    })
}

/// Cells `p[i][i + order]` for `i ≥ 1`.
pub fn sub_optimality_fraction(m: &EvalMatrix, order: usize) -> Result<Fraction> {
    if order == 0 || order >= m.n_max {
        return Err(Error::InvalidMatrix(format!(
            "sub-optimality order {order} outside 1..={}",
            m.n_max.saturating_sub(1)
        )));
    }
    let totals = film_totals(m);
    Ok(Fraction {
        numerator: weighted_sum(m, &totals, |col| (col > order).then(|| col - order)),
        denominator: denominator(m)?,
    })
}

pub fn optimality(m: &EvalMatrix) -> Result<f64> {
    optimality_fraction(m).map(|f| f.percent())
}

pub fn failure(m: &EvalMatrix) -> Result<f64> {
    failure_fraction(m).map(|f| f.percent())
}

pub fn sub_optimality(m: &EvalMatrix, order: usize) -> Result<f64> {
    sub_optimality_fraction(m, order).map(|f| f.percent())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `F_i` for `i = 1..=N`.
    pub film_totals: Vec<u64>,
    pub optimality: f64,
    /// Orders `m = 1..=N-1`.
    pub sub_optimality: Vec<f64>,
    pub failure: f64,
}

/// Assembles every metric. When `declared_totals` is given (a film-count
/// row stated alongside a matrix) it must match the column sums.
pub fn report(m: &EvalMatrix, declared_totals: Option<&[u64]>) -> Result<EvalReport> {
    let totals = film_totals(m);
    if let Some(declared) = declared_totals {
        if declared != totals.as_slice() {
            return Err(Error::InvalidMatrix(format!(
                "column sums {totals:?} do not match declared film totals {declared:?}"
            )));
        }
    }
    let opt = optimality_fraction(m)?;
    let fail = failure_fraction(m)?;
    let subs = (1..m.n_max)
        .map(|k| sub_optimality_fraction(m, k))
        .collect::<Result<Vec<_>>>()?;
    // every cell sits on the diagonal, a super-diagonal or row 0
    let mass: u128 =
        opt.numerator + fail.numerator + subs.iter().map(|f| f.numerator).sum::<u128>();
    if mass != opt.denominator {
        return Err(Error::InvalidMatrix(format!(
            "metric numerators sum to {mass}, expected {}",
            opt.denominator
        )));
    }
    Ok(EvalReport {
        film_totals: totals,
        optimality: opt.percent(),
        sub_optimality: subs.iter().map(Fraction::percent).collect(),
        failure: fail.percent(),
    })
}

/// Tallies `(segmented_ok, total_teeth)` pairs, one per film.
pub fn accumulate(
    results: impl IntoIterator<Item = (usize, usize)>,
    n_max: usize,
) -> Result<EvalMatrix> {
    let mut m = EvalMatrix::zeros(n_max)?;
    for (ok, total) in results {
        if total == 0 || ok > total || total > n_max {
            return Err(Error::InvalidMatrix(format!(
                "film result ({ok}, {total}) violates 0 <= ok <= total <= {n_max} with total >= 1"
            )));
        }
        m.add(ok, total, 1)?;
    }
    Ok(m)
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (1, 11) | (2, 12) | (3, 13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

impl EvalReport {
    /// Aligned `Opt 1st 2nd 3rd Fail` table. Orders beyond the third are
    /// shown only when non-zero.
    pub fn to_table(&self) -> String {
        let mut headers = vec!["Opt".to_string()];
        let mut values = vec![self.optimality];
        for (k, &v) in self.sub_optimality.iter().enumerate() {
            let order = k + 1;
            if order <= 3 || v != 0.0 {
                headers.push(ordinal(order));
                values.push(v);
            }
        }
        while headers.len() < 4 {
            headers.push(ordinal(headers.len()));
            values.push(0.0);
        }
        headers.push("Fail".into());
        values.push(self.failure);
        let mut out = String::new();
        for h in &headers {
            let _ = write!(out, "{h:>8}");
        }
        out.push('\n');
        for v in &values {
            let _ = write!(out, "{v:>8.2}");
        }
        out.push('\n');
        out
    }
}

/// Reference 51-film count matrix. Its cells are fixed by requiring the
/// column sums to equal [`REFERENCE_FILM_TOTALS`].
pub const REFERENCE_MATRIX_CSV: &str = "\
j,1,2,3,4,5
0,0,0,0,0,0
1,0,0,0,0,0
2,0,5,2,1,0
3,0,0,14,5,1
4,0,0,0,16,2
5,0,0,0,0,5
";

/// Film totals `F_i` of the reference matrix.
pub const REFERENCE_FILM_TOTALS: [u64; 5] = [0, 5, 16, 22, 8];

#[cfg(test)]
mod tests {
    use super::*;

    fn fig7() -> EvalMatrix {
        EvalMatrix::from_csv(REFERENCE_MATRIX_CSV).unwrap()
    }

    #[test]
    fn film_totals_examples() {
        assert_eq!(film_totals(&fig7()), REFERENCE_FILM_TOTALS.to_vec());
        assert_eq!(film_totals(&EvalMatrix::zeros(4).unwrap()), vec![0; 4]);
        let mut one = EvalMatrix::zeros(4).unwrap();
        one.add(2, 3, 1).unwrap();
        assert_eq!(film_totals(&one), vec![0, 0, 1, 0]);
    }

    #[test]
    fn reference_table_values() {
        let m = fig7();
        let opt = optimality_fraction(&m).unwrap();
        assert_eq!((opt.numerator, opt.denominator), (641, 829));
        assert_eq!(sub_optimality_fraction(&m, 1).unwrap().numerator, 158);
        assert_eq!(sub_optimality_fraction(&m, 2).unwrap().numerator, 30);
        assert_eq!(sub_optimality_fraction(&m, 3).unwrap().numerator, 0);
        assert_eq!(failure_fraction(&m).unwrap().numerator, 0);
        assert!((optimality(&m).unwrap() - 77.32).abs() < 0.005);
        assert!((sub_optimality(&m, 1).unwrap() - 19.06).abs() < 0.005);
        assert!((sub_optimality(&m, 2).unwrap() - 3.62).abs() < 0.005);
    }

    #[test]
    fn diagonal_and_failed_matrices() {
        let diag = EvalMatrix::from_rows(vec![
            vec![0, 0, 0],
            vec![2, 0, 0],
            vec![0, 3, 0],
            vec![0, 0, 4],
        ])
        .unwrap();
        assert_eq!(optimality(&diag).unwrap(), 100.0);
        assert_eq!(failure(&diag).unwrap(), 0.0);
        let failed = EvalMatrix::from_rows(vec![
            vec![2, 3, 4],
            vec![0, 0, 0],
            vec![0, 0, 0],
            vec![0, 0, 0],
        ])
        .unwrap();
        assert_eq!(optimality(&failed).unwrap(), 0.0);
        assert_eq!(failure(&failed).unwrap(), 100.0);
        let mut only_two = EvalMatrix::zeros(5).unwrap();
        only_two.add(0, 2, 5).unwrap();
        assert_eq!(failure(&only_two).unwrap(), 100.0);
    }

    #[test]
    fn empty_matrix_and_bad_orders_are_errors() {
        let z = EvalMatrix::zeros(3).unwrap();
        assert!(optimality(&z).is_err());
        assert!(failure(&z).is_err());
        assert!(sub_optimality(&fig7(), 0).is_err());
        assert!(sub_optimality(&fig7(), 5).is_err());
        assert!(report(&z, None).is_err());
    }

    #[test]
    fn report_checks_declared_totals() {
        let m = fig7();
        let r = report(&m, Some(&REFERENCE_FILM_TOTALS)).unwrap();
        assert_eq!(r.sub_optimality.len(), 4);
        assert!(report(&m, Some(&[0, 5, 16, 22, 9])).is_err());
        let mut single = EvalMatrix::zeros(1).unwrap();
        single.add(1, 1, 1).unwrap();
        let r = report(&single, None).unwrap();
        assert_eq!((r.optimality, r.failure), (100.0, 0.0));
        assert!(r.sub_optimality.is_empty());
    }

    #[test]
    fn structural_zeros_enforced() {
        assert!(EvalMatrix::from_rows(vec![vec![0, 0], vec![0, 0], vec![1, 0]]).is_err());
        let mut m = EvalMatrix::zeros(3).unwrap();
        assert!(m.add(3, 2, 1).is_err());
        assert!(m.add(0, 4, 1).is_err());
    }

    #[test]
    fn accumulate_examples() {
        let m = accumulate([(4, 4), (3, 4)], 5).unwrap();
        assert_eq!((m.get(4, 4), m.get(3, 4)), (1, 1));
        assert_eq!(m.total_films(), 2);
        assert_eq!(
            accumulate(std::iter::empty(), 5).unwrap(),
            EvalMatrix::zeros(5).unwrap()
        );
        assert!(accumulate([(5, 4)], 5).is_err());
        assert!(accumulate([(1, 6)], 5).is_err());
        assert!(accumulate([(0, 0)], 5).is_err());
    }

    #[test]
    fn csv_parsing_errors() {
        assert!(EvalMatrix::from_csv("").is_err());
        assert!(EvalMatrix::from_csv("j,1,3\n0,0,0\n1,0,0\n2,0,0\n").is_err());
        assert!(EvalMatrix::from_csv("j,1,2\n0,0,0\n1,0,0\n").is_err());
        assert!(EvalMatrix::from_csv("j,1,2\n0,0,0\n2,0,0\n1,0,0\n").is_err());
        assert!(EvalMatrix::from_csv("j,1,2\n0,0,0\n1,0,x\n2,0,0\n").is_err());
        assert!(EvalMatrix::from_csv("j,1,2\n0,0,0\n1,0,0\n2,0\n").is_err());
        let m = EvalMatrix::from_csv("# comment\n\nj, 1, 2\n0, 1, 0\n1, 1, 2\n2, 0, 3\n").unwrap();
        assert_eq!(EvalMatrix::from_csv(&m.to_csv()).unwrap(), m);
    }

    #[test]
    fn merge_is_cellwise() {
        let mut a = accumulate([(1, 2)], 3).unwrap();
        let b = accumulate([(1, 2), (3, 3)], 3).unwrap();
        a.merge(&b).unwrap();
        assert_eq!((a.get(1, 2), a.get(3, 3)), (2, 1));
        assert!(a.merge(&EvalMatrix::zeros(2).unwrap()).is_err());
    }

    #[test]
    fn table_layout() {
        let t = report(&fig7(), None).unwrap().to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(
            lines[0].split_whitespace().collect::<Vec<_>>(),
            ["Opt", "1st", "2nd", "3rd", "Fail"]
        );
        assert_eq!(
            lines[1].split_whitespace().collect::<Vec<_>>(),
            ["77.32", "19.06", "3.62", "0.00", "0.00"]
        );
        assert_eq!(ordinal(11), "11th");
        assert_eq!(ordinal(22), "22nd");
    }
}
