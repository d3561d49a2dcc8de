use super::grid::GridSpec;
use crate::error::{Error, Result};

/// Tensor rank of a torus field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rank {
    Scalar,
    Vector,
    /// Symmetric 3×3 tensor stored as (00, 01, 02, 11, 12, 22).
    Sym,
}

impl Rank {
    pub fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => 3,
            Rank::Sym => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Rank::Scalar => "scalar",
            Rank::Vector => "vector",
            Rank::Sym => "sym3x3",
        }
    }

    pub fn code(self) -> u32 {
        match self {
            Rank::Scalar => 0,
            Rank::Vector => 1,
            Rank::Sym => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Rank::Scalar),
            1 => Some(Rank::Vector),
            2 => Some(Rank::Sym),
            _ => None,
        }
    }
}

/// Storage slot of the symmetric entry (i, j).
#[inline]
pub const fn sym_index(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        _ => 5,
    }
}

/// Real field sampled on a [`GridSpec`], one flat C-order array per component.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    grid: GridSpec,
    rank: Rank,
    comps: Vec<Vec<f64>>,
}

impl TorusField {
    pub fn zeros(grid: GridSpec, rank: Rank) -> Self {
        let comps = (0..rank.components())
            .map(|_| vec![0.0; grid.len()])
            .collect();
        Self { grid, rank, comps }
    }

    pub fn from_components(grid: GridSpec, rank: Rank, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != rank.components() || comps.iter().any(|c| c.len() != grid.len()) {
            return Err(Error::Grid(format!(
                "{} field needs {} components of length {}",
                rank.name(),
                rank.components(),
                grid.len()
            )));
        }
        Ok(Self { grid, rank, comps })
    }

    pub fn scalar_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> f64) -> Self {
        let data = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self {
            grid,
            rank: Rank::Scalar,
            comps: vec![data],
        }
    }

    pub fn vector_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid, Rank::Vector);
        for i in 0..grid.len() {
            let v = f(grid.point(i));
            for c in 0..3 {
                out.comps[c][i] = v[c];
            }
        }
        out
    }

    pub fn sym_fn(grid: GridSpec, f: impl Fn([f64; 3]) -> [[f64; 3]; 3]) -> Self {
        let mut out = Self::zeros(grid, Rank::Sym);
        for i in 0..grid.len() {
            let m = f(grid.point(i));
            out.set_sym(i, &m);
        }
        out
    }

    pub fn constant(grid: GridSpec, rank: Rank, values: &[f64]) -> Self {
        let comps = values.iter().map(|&v| vec![v; grid.len()]).collect();
        Self { grid, rank, comps }
    }

    #[inline]
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    #[inline]
    pub fn rank(&self) -> Rank {
        self.rank
    }

    #[inline]
    pub fn comp(&self, c: usize) -> &[f64] {
        &self.comps[c]
    }

    #[inline]
    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn into_components(self) -> Vec<Vec<f64>> {
        self.comps
    }

    pub fn expect_rank(&self, rank: Rank) -> Result<()> {
        if self.rank != rank {
            return Err(Error::RankMismatch {
                expected: rank.name(),
                found: self.rank.name(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn vec_at(&self, i: usize) -> [f64; 3] {
        [self.comps[0][i], self.comps[1][i], self.comps[2][i]]
    }

    #[inline]
    pub fn set_vec(&mut self, i: usize, v: &[f64; 3]) {
        for c in 0..3 {
            self.comps[c][i] = v[c];
        }
    }

    #[inline]
    pub fn sym_at(&self, i: usize) -> [[f64; 3]; 3] {
        let s = |a: usize| self.comps[a][i];
        [
            [s(0), s(1), s(2)],
            [s(1), s(3), s(4)],
            [s(2), s(4), s(5)],
        ]
    }

    #[inline]
    pub fn set_sym(&mut self, i: usize, m: &[[f64; 3]; 3]) {
        self.comps[0][i] = m[0][0];
        self.comps[1][i] = 0.5 * (m[0][1] + m[1][0]);
        self.comps[2][i] = 0.5 * (m[0][2] + m[2][0]);
        self.comps[3][i] = m[1][1];
        self.comps[4][i] = 0.5 * (m[1][2] + m[2][1]);
        self.comps[5][i] = m[2][2];
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        self.expect_rank(other.rank)?;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect())
            .collect();
        Ok(Self {
            grid: self.grid,
            rank: self.rank,
            comps,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.axpy(1.0, other)
    }

    /// self += alpha * other
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        self.expect_rank(other.rank)?;
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.map(|x| alpha * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            rank: self.rank,
            comps: self
                .comps
                .iter()
                .map(|c| c.iter().map(|&x| f(x)).collect())
                .collect(),
        }
    }

    /// Largest absolute value over all components and points.
    pub fn sup_norm(&self) -> f64 {
        self.comps
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0_f64, |m, &x| m.max(x.abs()))
    }

    /// Largest pointwise Euclidean (Frobenius for tensors) magnitude.
    pub fn sup_magnitude(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.point_norm_sq(i).sqrt())
            .fold(0.0, f64::max)
    }

    #[inline]
    pub fn point_norm_sq(&self, i: usize) -> f64 {
        match self.rank {
            Rank::Sym => {
                let c = &self.comps;
                c[0][i].powi(2)
                    + c[3][i].powi(2)
                    + c[5][i].powi(2)
                    + 2.0 * (c[1][i].powi(2) + c[2][i].powi(2) + c[4][i].powi(2))
            }
            _ => self.comps.iter().map(|c| c[i] * c[i]).sum(),
        }
    }

    /// L² norm over the torus (true integral, volume (2π)³).
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = (0..self.grid.len()).map(|i| self.point_norm_sq(i)).sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// L¹ norm of the pointwise magnitude over the torus.
    pub fn l1_norm(&self) -> f64 {
        let s: f64 = (0..self.grid.len())
            .map(|i| self.point_norm_sq(i).sqrt())
            .sum();
        s * self.grid.cell_volume()
    }

    /// Spatial mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let len = self.grid.len() as f64;
        self.comps.iter().map(|c| c.iter().sum::<f64>() / len).collect()
    }

    /// Subtract the spatial mean of each component.
    pub fn remove_mean(&mut self) {
        for c in self.comps.iter_mut() {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter_mut().for_each(|x| *x -= m);
        }
    }

    /// Replace the k = 0 mode of every component by `target`.
    pub fn set_mean(&mut self, target: &[f64]) {
        for (c, &t) in self.comps.iter_mut().zip(target) {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter_mut().for_each(|x| *x += t - m);
        }
    }

    /// Pointwise trace of a symmetric field.
    pub fn trace(&self) -> Result<Self> {
        self.expect_rank(Rank::Sym)?;
        let data = (0..self.grid.len())
            .map(|i| self.comps[0][i] + self.comps[3][i] + self.comps[5][i])
            .collect();
        Ok(Self {
            grid: self.grid,
            rank: Rank::Scalar,
            comps: vec![data],
        })
    }

    /// Vector component `c` as a scalar field.
    pub fn component_field(&self, c: usize) -> Self {
        Self {
            grid: self.grid,
            rank: Rank::Scalar,
            comps: vec![self.comps[c].clone()],
        }
    }

    /// Scalar field times the identity matrix.
    pub fn scalar_times_identity(&self) -> Result<Self> {
        self.expect_rank(Rank::Scalar)?;
        let s = &self.comps[0];
        let z = vec![0.0; self.grid.len()];
        Ok(Self {
            grid: self.grid,
            rank: Rank::Sym,
            comps: vec![s.clone(), z.clone(), z.clone(), s.clone(), z, s.clone()],
        })
    }
}
