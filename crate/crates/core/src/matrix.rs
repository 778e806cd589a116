//! Dense matrices over a finite field with exact Gaussian elimination.
//!
//! Row vectors multiply from the left (`x · M`), matching the convention used
//! for encoding matrices throughout the crate.

use std::fmt;

use crate::error::FieldError;
use crate::field::Field;

#[derive(Clone, PartialEq, Eq)]
pub struct FieldMatrix {
    field: Field,
    rows: usize,
    cols: usize,
    data: Vec<u32>,
}

impl fmt::Debug for FieldMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}x{} over {:?}", self.rows, self.cols, self.field)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

impl FieldMatrix {
    pub fn new(field: &Field, rows: usize, cols: usize, data: Vec<u32>) -> Result<Self, FieldError> {
        if data.len() != rows * cols {
            return Err(FieldError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&v| !field.contains(v)) {
            return Err(FieldError::InvalidElement {
                value: bad as u64,
                order: field.order() as u64,
            });
        }
        Ok(FieldMatrix {
            field: field.clone(),
            rows,
            cols,
            data,
        })
    }

    pub fn zeros(field: &Field, rows: usize, cols: usize) -> Self {
        FieldMatrix {
            field: field.clone(),
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(field: &Field, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from row vectors of canonical values. All rows must
    /// have `cols` entries.
    pub fn from_rows(field: &Field, cols: usize, rows: &[Vec<u32>]) -> Result<Self, FieldError> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(FieldError::DimensionMismatch(format!(
                    "row of length {} in a matrix with {cols} columns",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(field, rows.len(), cols, data)
    }

    /// Builds a matrix from integer rows, reducing each entry into the prime
    /// subfield.
    pub fn from_i64_rows(field: &Field, rows: &[&[i64]]) -> Result<Self, FieldError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let converted: Vec<Vec<u32>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| field.from_i64(v)).collect())
            .collect();
        Self::from_rows(field, cols, &converted)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        debug_assert!(self.field.contains(v));
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_vecs(&self) -> Vec<Vec<u32>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn column(&self, c: usize) -> Vec<u32> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(&self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn mul(&self, other: &FieldMatrix) -> Result<Self, FieldError> {
        self.check_same_field(other)?;
        if self.cols != other.rows {
            return Err(FieldError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = &self.field;
        let mut out = Self::zeros(f, self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0 {
                    continue;
                }
                for c in 0..other.cols {
                    let b = other.get(k, c);
                    if b != 0 {
                        let idx = r * other.cols + c;
                        out.data[idx] = f.add(out.data[idx], f.mul(a, b));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Row vector times matrix: `x · M`.
    pub fn vec_mul(&self, x: &[u32]) -> Result<Vec<u32>, FieldError> {
        if x.len() != self.rows {
            return Err(FieldError::DimensionMismatch(format!(
                "vector of length {} times {}x{} matrix",
                x.len(),
                self.rows,
                self.cols
            )));
        }
        let f = &self.field;
        let mut out = vec![0u32; self.cols];
        for (r, &a) in x.iter().enumerate() {
            if a == 0 {
                continue;
            }
            for (c, slot) in out.iter_mut().enumerate() {
                let b = self.get(r, c);
                if b != 0 {
                    *slot = f.add(*slot, f.mul(a, b));
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, a: u32) -> Self {
        let mut out = self.clone();
        for v in out.data.iter_mut() {
            *v = self.field.mul(*v, a);
        }
        out
    }

    pub fn add(&self, other: &FieldMatrix) -> Result<Self, FieldError> {
        self.check_same_field(other)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(FieldError::DimensionMismatch("matrix sum".into()));
        }
        let mut out = self.clone();
        for (v, &w) in out.data.iter_mut().zip(&other.data) {
            *v = self.field.add(*v, w);
        }
        Ok(out)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        FieldMatrix {
            field: self.field.clone(),
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_cols(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for r in 0..self.rows {
            for &c in idx {
                data.push(self.get(r, c));
            }
        }
        FieldMatrix {
            field: self.field.clone(),
            rows: self.rows,
            cols: idx.len(),
            data,
        }
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &FieldMatrix) -> Result<Self, FieldError> {
        self.check_same_field(other)?;
        if self.cols != other.cols {
            return Err(FieldError::DimensionMismatch("vstack column count".into()));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(FieldMatrix {
            field: self.field.clone(),
            rows: self.rows + other.rows,
            cols: self.cols,
            data,
        })
    }

    /// Places `other` to the right of `self`.
    pub fn hstack(&self, other: &FieldMatrix) -> Result<Self, FieldError> {
        self.check_same_field(other)?;
        if self.rows != other.rows {
            return Err(FieldError::DimensionMismatch("hstack row count".into()));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(FieldMatrix {
            field: self.field.clone(),
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn kronecker(&self, other: &FieldMatrix) -> Result<Self, FieldError> {
        self.check_same_field(other)?;
        let f = &self.field;
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(f, rows, cols);
        for r1 in 0..self.rows {
            for c1 in 0..self.cols {
                let a = self.get(r1, c1);
                if a == 0 {
                    continue;
                }
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out.set(
                            r1 * other.rows + r2,
                            c1 * other.cols + c2,
                            f.mul(a, other.get(r2, c2)),
                        );
                    }
                }
            }
        }
        Ok(out)
    }

    /// Reduced row-echelon form and the pivot column of each nonzero row.
    /// Pivots are chosen as the first nonzero entry in each column.
    pub fn rref(&self) -> (FieldMatrix, Vec<usize>) {
        let mut m = self.clone();
        let pivots = m.rref_in_place();
        (m, pivots)
    }

    fn rref_in_place(&mut self) -> Vec<usize> {
        let f = self.field.clone();
        let (rows, cols) = (self.rows, self.cols);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(p) = (r..rows).find(|&i| self.get(i, c) != 0) else {
                continue;
            };
            if p != r {
                for j in 0..cols {
                    self.data.swap(p * cols + j, r * cols + j);
                }
            }
            let inv = f.inv(self.get(r, c)).expect("pivot is nonzero");
            for j in c..cols {
                let v = self.get(r, j);
                self.set(r, j, f.mul(v, inv));
            }
            for i in 0..rows {
                if i == r {
                    continue;
                }
                let factor = self.get(i, c);
                if factor == 0 {
                    continue;
                }
                for j in c..cols {
                    let v = f.sub(self.get(i, j), f.mul(factor, self.get(r, j)));
                    self.set(i, j, v);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        // Eliminate on the shorter side.
        if self.rows > self.cols {
            self.transpose().rref().1.len()
        } else {
            self.rref().1.len()
        }
    }

    pub fn inverse(&self) -> Result<Self, FieldError> {
        if self.rows != self.cols {
            return Err(FieldError::DimensionMismatch(format!(
                "inverse of a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let aug = self.hstack(&Self::identity(&self.field, n))?;
        let (red, pivots) = aug.rref();
        if pivots.len() < n || pivots[n - 1] >= n {
            return Err(FieldError::Singular);
        }
        let idx: Vec<usize> = (n..2 * n).collect();
        Ok(red.select_cols(&idx))
    }

    /// Basis (as rows) of `{ v : M · vᵀ = 0 }`.
    pub fn right_null_space(&self) -> Self {
        let (red, pivots) = self.rref();
        let free: Vec<usize> = (0..self.cols).filter(|c| !pivots.contains(c)).collect();
        let f = &self.field;
        let mut basis = Self::zeros(f, free.len(), self.cols);
        for (b, &fc) in free.iter().enumerate() {
            basis.set(b, fc, 1);
            for (pr, &pc) in pivots.iter().enumerate() {
                basis.set(b, pc, f.neg(red.get(pr, fc)));
            }
        }
        basis
    }

    /// Basis (as rows) of `{ v : v · M = 0 }`.
    pub fn left_null_space(&self) -> Self {
        self.transpose().right_null_space()
    }

    /// Some `x` with `x · M = b`, or `None` when the system is inconsistent.
    pub fn solve_left(&self, b: &[u32]) -> Result<Option<Vec<u32>>, FieldError> {
        if b.len() != self.cols {
            return Err(FieldError::DimensionMismatch(format!(
                "right-hand side of length {} for {} columns",
                b.len(),
                self.cols
            )));
        }
        // x · M = b  <=>  Mᵀ xᵀ = bᵀ
        let mt = self.transpose();
        let rhs = FieldMatrix {
            field: self.field.clone(),
            rows: self.cols,
            cols: 1,
            data: b.to_vec(),
        };
        let (red, pivots) = mt.hstack(&rhs)?.rref();
        let n = self.rows;
        if pivots.last() == Some(&n) {
            return Ok(None);
        }
        let mut x = vec![0u32; n];
        for (r, &c) in pivots.iter().enumerate() {
            x[c] = red.get(r, n);
        }
        Ok(Some(x))
    }

    /// Whether `v` lies in the row space.
    pub fn row_space_contains(&self, v: &[u32]) -> bool {
        matches!(self.solve_left(v), Ok(Some(_)))
    }

    fn check_same_field(&self, other: &FieldMatrix) -> Result<(), FieldError> {
        if self.field != other.field {
            Err(FieldError::SpecMismatch)
        } else {
            Ok(())
        }
    }
}

/// Incrementally built row-echelon basis. Each stored row has a unit pivot
/// and is zero at the pivots of every earlier row.
#[derive(Clone, Debug)]
pub struct Echelon {
    field: Field,
    cols: usize,
    rows: Vec<(usize, Vec<u32>)>,
}

impl Echelon {
    pub fn new(field: &Field, cols: usize) -> Self {
        Echelon {
            field: field.clone(),
            cols,
            rows: Vec::new(),
        }
    }

    pub fn from_rows<'a>(field: &Field, cols: usize, rows: impl IntoIterator<Item = &'a [u32]>) -> Self {
        let mut e = Self::new(field, cols);
        for r in rows {
            e.insert(r);
        }
        e
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `v` minus its projection onto the span along the pivots.
    pub fn reduce(&self, v: &[u32]) -> Vec<u32> {
        let f = &self.field;
        let mut v = v.to_vec();
        for (p, row) in &self.rows {
            let c = v[*p];
            if c != 0 {
                for (x, &r) in v.iter_mut().zip(row) {
                    *x = f.sub(*x, f.mul(c, r));
                }
            }
        }
        v
    }

    pub fn contains(&self, v: &[u32]) -> bool {
        self.reduce(v).iter().all(|&x| x == 0)
    }

    /// Adds `v`; returns false when it was already in the span.
    pub fn insert(&mut self, v: &[u32]) -> bool {
        let mut r = self.reduce(v);
        let Some(p) = r.iter().position(|&x| x != 0) else {
            return false;
        };
        let inv = self.field.inv(r[p]).expect("nonzero");
        for x in r.iter_mut() {
            *x = self.field.mul(*x, inv);
        }
        self.rows.push((p, r));
        true
    }

    pub fn basis(&self) -> Vec<Vec<u32>> {
        self.rows.iter().map(|(_, r)| r.clone()).collect()
    }
}

/// Dot product of two vectors over `field`.
pub fn dot(field: &Field, a: &[u32], b: &[u32]) -> u32 {
    a.iter()
        .zip(b)
        .fold(0, |acc, (&x, &y)| field.add(acc, field.mul(x, y)))
}

/// Rank of a list of row vectors of equal length `cols`.
pub fn rank_of(field: &Field, cols: usize, rows: &[Vec<u32>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    FieldMatrix::from_rows(field, cols, rows)
        .expect("rows have consistent length")
        .rank()
}
