//! Dense tensor components at one base point.
//!
//! Components are stored row-major with upper indices first, then lower
//! indices. A rank `(r, s)` tensor over an `n`-dimensional chart holds
//! `n^(r+s)` numbers.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Rank {
    pub upper: usize,
    pub lower: usize,
}

impl Rank {
    pub const SCALAR: Rank = Rank { upper: 0, lower: 0 };
    pub const VECTOR: Rank = Rank { upper: 1, lower: 0 };
    pub const COVECTOR: Rank = Rank { upper: 0, lower: 1 };

    pub const fn new(upper: usize, lower: usize) -> Self {
        Self { upper, lower }
    }

    pub fn order(self) -> usize {
        self.upper + self.lower
    }

    pub fn components(self, dim: usize) -> usize {
        dim.pow(self.order() as u32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tensor {
    pub dim: usize,
    pub rank: Rank,
    pub data: Vec<f64>,
}

/// Which index of which operand a contraction consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Upper(usize),
    Lower(usize),
}

impl Tensor {
    pub fn new(dim: usize, rank: Rank, data: Vec<f64>) -> Result<Self> {
        if data.len() != rank.components(dim) {
            return Err(Error::RankMismatch(format!(
                "rank ({}, {}) over dim {dim} needs {} components, got {}",
                rank.upper,
                rank.lower,
                rank.components(dim),
                data.len()
            )));
        }
        Ok(Self { dim, rank, data })
    }

    pub fn zeros(dim: usize, rank: Rank) -> Self {
        Self {
            dim,
            rank,
            data: vec![0.0; rank.components(dim)],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            dim: 0,
            rank: Rank::SCALAR,
            data: vec![value],
        }
    }

    pub fn vector(v: &[f64]) -> Self {
        Self {
            dim: v.len(),
            rank: Rank::VECTOR,
            data: v.to_vec(),
        }
    }

    pub fn covector(p: &[f64]) -> Self {
        Self {
            dim: p.len(),
            rank: Rank::COVECTOR,
            data: p.to_vec(),
        }
    }

    /// Mixed identity `δ^i_j`.
    pub fn kronecker(dim: usize) -> Self {
        let mut t = Self::zeros(dim, Rank::new(1, 1));
        for i in 0..dim {
            t.data[i * dim + i] = 1.0;
        }
        t
    }

    /// Square matrix as a rank `(0, 2)` or `(2, 0)` tensor.
    pub fn from_matrix(m: &nalgebra::DMatrix<f64>, rank: Rank) -> Result<Self> {
        let n = m.nrows();
        let data = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)])
            .collect();
        Self::new(n, rank, data)
    }

    /// Multi-index (upper first, then lower) of flat position `flat`.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let order = self.rank.order();
        let mut idx = vec![0; order];
        for slot in (0..order).rev() {
            idx[slot] = flat % self.dim;
            flat /= self.dim;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest componentwise difference; errors when shapes differ.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.rank != other.rank || self.data.len() != other.data.len() {
            return Err(Error::RankMismatch("tensors of different rank".into()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank != other.rank || self.data.len() != other.data.len() {
            return Err(Error::RankMismatch("tensors of different rank".into()));
        }
        Ok(Tensor {
            dim: self.dim,
            rank: self.rank,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.rank != other.rank || self.data.len() != other.data.len() {
            return Err(Error::RankMismatch("tensors of different rank".into()));
        }
        Ok(Tensor {
            dim: self.dim,
            rank: self.rank,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    fn slot_position(&self, slot: Slot) -> Result<usize> {
        match slot {
            Slot::Upper(i) if i < self.rank.upper => Ok(i),
            Slot::Lower(j) if j < self.rank.lower => Ok(self.rank.upper + j),
            _ => Err(Error::RankMismatch(format!(
                "slot {slot:?} does not exist in a rank ({}, {}) tensor",
                self.rank.upper, self.rank.lower
            ))),
        }
    }
}

/// Contracts one index of `x` with one index of `y`; exactly one of the two
/// slots must be upper.
///
/// The result's indices are: remaining uppers of `x`, remaining uppers of
/// `y`, remaining lowers of `x`, remaining lowers of `y`, each in order.
pub fn contract(x: &Tensor, y: &Tensor, pair: (Slot, Slot)) -> Result<Tensor> {
    let kinds_ok = matches!(pair, (Slot::Upper(_), Slot::Lower(_)) | (Slot::Lower(_), Slot::Upper(_)));
    if !kinds_ok {
        return Err(Error::RankMismatch(
            "contraction needs one upper and one lower index".into(),
        ));
    }
    // a scalar has dim 0 by construction; take the other operand's dim
    let n = x.dim.max(y.dim);
    if x.rank.order() > 0 && y.rank.order() > 0 && x.dim != y.dim {
        return Err(Error::RankMismatch(format!(
            "dimension {} vs {}",
            x.dim, y.dim
        )));
    }
    let px = x.slot_position(pair.0)?;
    let py = y.slot_position(pair.1)?;

    let (xu, xl) = match pair.0 {
        Slot::Upper(_) => (x.rank.upper - 1, x.rank.lower),
        Slot::Lower(_) => (x.rank.upper, x.rank.lower - 1),
    };
    let (yu, yl) = match pair.1 {
        Slot::Upper(_) => (y.rank.upper - 1, y.rank.lower),
        Slot::Lower(_) => (y.rank.upper, y.rank.lower - 1),
    };
    let rank = Rank::new(xu + yu, xl + yl);
    let mut out = Tensor::zeros(n, rank);
    let xs = Tensor { dim: n, ..x.clone() };
    let ys = Tensor { dim: n, ..y.clone() };

    let mut ix = vec![0; x.rank.order()];
    let mut iy = vec![0; y.rank.order()];
    for flat in 0..out.data.len() {
        let idx = out.multi_index(flat);
        // distribute the result index back onto the two operands
        let (ru, rl) = idx.split_at(rank.upper);
        let (rxu, ryu) = ru.split_at(xu);
        let (rxl, ryl) = rl.split_at(xl);
        fill(&mut ix, px, rxu, rxl);
        fill(&mut iy, py, ryu, ryl);
        let mut s = 0.0;
        for k in 0..n {
            if !ix.is_empty() {
                ix[px] = k;
            }
            if !iy.is_empty() {
                iy[py] = k;
            }
            s += xs.data[xs.flat_index(&ix)] * ys.data[ys.flat_index(&iy)];
        }
        out.data[flat] = s;
    }
    Ok(out)
}

// Rebuilds an operand's full index with `skip` left free.
fn fill(full: &mut [usize], skip: usize, uppers: &[usize], lowers: &[usize]) {
    let mut it = uppers.iter().chain(lowers.iter());
    for (pos, slot) in full.iter_mut().enumerate() {
        if pos == skip {
            continue;
        }
        *slot = *it.next().expect("index arity");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kronecker_contracts_to_identity() {
        let w = Tensor::vector(&[1.5, -2.0, 0.25]);
        let out = contract(&Tensor::kronecker(3), &w, (Slot::Lower(0), Slot::Upper(0))).unwrap();
        assert_eq!(out.rank, Rank::VECTOR);
        assert_eq!(out.data, w.data);
    }

    #[test]
    fn metric_times_inverse_is_kronecker() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let gi = g.clone().try_inverse().unwrap();
        let lower = Tensor::from_matrix(&g, Rank::new(0, 2)).unwrap();
        let upper = Tensor::from_matrix(&gi, Rank::new(2, 0)).unwrap();
        let out = contract(&lower, &upper, (Slot::Lower(1), Slot::Upper(0))).unwrap();
        // result index order: upper k of g⁻¹, then lower i of g
        assert_eq!(out.rank, Rank::new(1, 1));
        assert!(out.max_abs_diff(&Tensor::kronecker(2)).unwrap() < 1e-15);
    }

    #[test]
    fn contraction_matches_brute_force_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
            let ta = Tensor::new(3, Rank::new(0, 2), a.clone()).unwrap();
            let tb = Tensor::new(3, Rank::new(2, 0), b.clone()).unwrap();
            let c = contract(&ta, &tb, (Slot::Lower(1), Slot::Upper(0))).unwrap();
            // c[k][i] = Σ_j A_ij B^jk
            for i in 0..3 {
                for k in 0..3 {
                    let mut s = 0.0;
                    for j in 0..3 {
                        s += a[i * 3 + j] * b[j * 3 + k];
                    }
                    assert!((c.data[k * 3 + i] - s).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn scalar_operand_and_errors() {
        let v = Tensor::vector(&[1.0, 2.0]);
        let p = Tensor::covector(&[3.0, 4.0]);
        let s = contract(&v, &p, (Slot::Upper(0), Slot::Lower(0))).unwrap();
        assert_eq!(s.rank, Rank::SCALAR);
        assert_eq!(s.data, vec![11.0]);
        assert!(contract(&v, &v, (Slot::Upper(0), Slot::Upper(0))).is_err());
        assert!(contract(&v, &p, (Slot::Upper(1), Slot::Lower(0))).is_err());
        assert!(Tensor::new(2, Rank::COVECTOR, vec![1.0]).is_err());
    }
}
