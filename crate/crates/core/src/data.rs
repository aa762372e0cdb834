//! Datasets and block-design assembly for models with exogenous covariates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Response `y` (n), predictors `X` (n x k) and instruments `Z` (n x l).
///
/// Construction enforces `n > k`, `n > l`, `l >= k` and finiteness;
/// rank conditions are left to the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
}

fn check_finite(what: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for (col, column) in m.column_iter().enumerate() {
        if let Some(row) = column.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what, row, col });
        }
    }
    Ok(())
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>, z: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if x.nrows() != n {
            return Err(Error::Dimension {
                what: "rows of X",
                expected: n,
                found: x.nrows(),
            });
        }
        if z.nrows() != n {
            return Err(Error::Dimension {
                what: "rows of Z",
                expected: n,
                found: z.nrows(),
            });
        }
        let (k, l) = (x.ncols(), z.ncols());
        if k == 0 {
            return Err(Error::Dimension {
                what: "columns of X",
                expected: 1,
                found: 0,
            });
        }
        if l < k {
            return Err(Error::UnderIdentified {
                instruments: l,
                predictors: k,
            });
        }
        if n <= l {
            return Err(Error::TooFewRows {
                n,
                columns: l,
                what: "Z",
            });
        }
        if let Some(row) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "y",
                row,
                col: 0,
            });
        }
        check_finite("X", &x)?;
        check_finite("Z", &z)?;
        Ok(Self { y, x, z })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn l(&self) -> usize {
        self.z.ncols()
    }

    /// Degrees of freedom `n - k` used by every residual variance.
    pub fn dof(&self) -> usize {
        self.n() - self.k()
    }

    /// TSLS only has finite first and second moments when `l >= k + 2`.
    pub fn lacks_tsls_moments(&self) -> bool {
        self.l() < self.k() + 2
    }

    /// Case-resampled copy: row `i` of the result is row `indices[i]` of `self`.
    ///
    /// The result skips re-validation; resamples of a valid dataset keep the
    /// shape and finiteness invariants.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        Dataset {
            y: DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i])),
            x: self.x.select_rows(indices),
            z: self.z.select_rows(indices),
        }
    }
}

/// Model with endogenous predictors `X1`, exogenous covariates `X2` and
/// excluded instruments `Z1`. Assembles to `X = [X1 X2]`, `Z = [Z1 X2]`,
/// with coefficients ordered endogenous first.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedDataset {
    pub y: DVector<f64>,
    pub endogenous: DMatrix<f64>,
    pub exogenous: DMatrix<f64>,
    pub instruments: DMatrix<f64>,
    /// Append a constant column after the exogenous block.
    pub intercept: bool,
}

impl PartitionedDataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Exogenous block with the intercept column appended when requested.
    fn exogenous_block(&self) -> DMatrix<f64> {
        if self.intercept {
            let k2 = self.exogenous.ncols();
            let mut block = self.exogenous.clone().resize_horizontally(k2 + 1, 1.0);
            block.column_mut(k2).fill(1.0);
            block
        } else {
            self.exogenous.clone()
        }
    }

    /// Column count of the exogenous block after intercept handling.
    pub fn k2(&self) -> usize {
        self.exogenous.ncols() + usize::from(self.intercept)
    }

    pub fn assemble(&self) -> Result<Dataset> {
        let n = self.n();
        for (what, rows) in [
            ("rows of X1", self.endogenous.nrows()),
            ("rows of X2", self.exogenous.nrows()),
            ("rows of Z1", self.instruments.nrows()),
        ] {
            if rows != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    found: rows,
                });
            }
        }
        let (k1, l1) = (self.endogenous.ncols(), self.instruments.ncols());
        if l1 < k1 {
            return Err(Error::UnderIdentified {
                instruments: l1,
                predictors: k1,
            });
        }
        let exo = self.exogenous_block();
        let k2 = exo.ncols();
        let mut x = DMatrix::zeros(n, k1 + k2);
        x.columns_mut(0, k1).copy_from(&self.endogenous);
        x.columns_mut(k1, k2).copy_from(&exo);
        let mut z = DMatrix::zeros(n, l1 + k2);
        z.columns_mut(0, l1).copy_from(&self.instruments);
        z.columns_mut(l1, k2).copy_from(&exo);
        Dataset::new(self.y.clone(), x, z)
    }
}
