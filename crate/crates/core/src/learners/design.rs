use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    n: usize,
    k: usize,
    data: Vec<f64>,
    names: Vec<String>,
    intercept: bool,
}

impl DesignMatrix {
    /// `intercept` declares that column 0 is the constant 1; this is verified.
    pub fn new(
        n: usize,
        k: usize,
        data: Vec<f64>,
        names: Vec<String>,
        intercept: bool,
    ) -> Result<Self> {
        if data.len() != n * k {
            return Err(Error::data(format!(
                "design has {} values, expected {n}x{k}",
                data.len()
            )));
        }
        if names.len() != k {
            return Err(Error::data("one feature name per column required"));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite design entry at row {}, column {}",
                pos / k.max(1),
                pos % k.max(1)
            )));
        }
        if intercept && (k == 0 || (0..n).any(|i| data[i * k] != 1.0)) {
            return Err(Error::data("intercept column must be constant 1"));
        }
        Ok(Self {
            n,
            k,
            data,
            names,
            intercept,
        })
    }

    /// Intercept followed by the given named columns.
    pub fn with_intercept(columns: &[(&str, &[f64])], n: usize) -> Result<Self> {
        let k = columns.len() + 1;
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            data.push(1.0);
            for (_, col) in columns {
                data.push(*col.get(i).ok_or_else(|| Error::data("ragged design columns"))?);
            }
        }
        let mut names = vec!["(intercept)".to_string()];
        names.extend(columns.iter().map(|(n, _)| n.to_string()));
        Self::new(n, k, data, names, true)
    }

    /// Columns without an intercept, as used by tree learners.
    pub fn from_columns(columns: &[(&str, &[f64])], n: usize) -> Result<Self> {
        let k = columns.len();
        let mut data = Vec::with_capacity(n * k);
        for i in 0..n {
            for (_, col) in columns {
                data.push(*col.get(i).ok_or_else(|| Error::data("ragged design columns"))?);
            }
        }
        let names = columns.iter().map(|(n, _)| n.to_string()).collect();
        Self::new(n, k, data, names, false)
    }

    pub fn intercept_only(n: usize) -> Self {
        Self::new(n, 1, vec![1.0; n], vec!["(intercept)".into()], true).expect("valid")
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn ncols(&self) -> usize {
        self.k
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.k + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn dot_row(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.k);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        DesignMatrix {
            n: rows.len(),
            k: self.k,
            data,
            names: self.names.clone(),
            intercept: self.intercept,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> DesignMatrix {
        let mut data = Vec::with_capacity(self.n * cols.len());
        for i in 0..self.n {
            let row = self.row(i);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        DesignMatrix {
            n: self.n,
            k: cols.len(),
            data,
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            intercept: self.intercept && cols.first() == Some(&0),
        }
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.k, &self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_bad_intercept() {
        assert!(DesignMatrix::new(2, 1, vec![1.0, f64::NAN], vec!["a".into()], false).is_err());
        assert!(DesignMatrix::new(2, 1, vec![1.0, 2.0], vec!["a".into()], true).is_err());
    }

    #[test]
    fn builder_layout() {
        let x = [3.0, 4.0];
        let d = DesignMatrix::with_intercept(&[("x", &x)], 2).unwrap();
        assert_eq!(d.row(1), &[1.0, 4.0]);
        assert_eq!(d.names()[1], "x");
        assert_eq!(d.select_rows(&[1]).row(0), &[1.0, 4.0]);
        assert_eq!(d.select_columns(&[1]).column(0), vec![3.0, 4.0]);
    }
}
