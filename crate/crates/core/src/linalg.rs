//! Small direct solvers: tridiagonal elimination and a banded LU with
//! partial pivoting.

use crate::error::{Error, Result};

/// Solves `a[i] x[i-1] + b[i] x[i] + c[i] x[i+1] = d[i]` (`a[0]`, `c[n-1]`
/// ignored). No pivoting; intended for diagonally dominant systems.
pub fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Result<Vec<f64>> {
    let n = d.len();
    assert!(a.len() == n && b.len() == n && c.len() == n);
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let mut denom = b[0];
    for i in 0..n {
        if i > 0 {
            denom = b[i] - a[i] * cp[i - 1];
        }
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Numeric(format!("zero pivot in tridiagonal solve at row {i}")));
        }
        cp[i] = if i + 1 < n { c[i] / denom } else { 0.0 };
        dp[i] = (d[i] - if i > 0 { a[i] * dp[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = dp;
    for i in (0..n - 1).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Ok(x)
}

/// Square matrix with `kl` sub- and `ku` super-diagonals, stored row-wise
/// with room for the fill-in that row pivoting creates.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        // column j sits at offset j + kl - i within row i
        let off = (j + self.kl).checked_sub(i)?;
        (off < self.width).then(|| i * self.width + off)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Sets an entry; panics outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i}, {j}) outside band"
        );
        let k = self.slot(i, j).unwrap();
        self.data[k] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku + self.kl).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// In-place LU factorization with partial pivoting.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::Numeric(format!("singular band matrix at column {k}")));
            }
            piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let a = self.get(k, j);
                    let b = self.get(p, j);
                    self.put(k, j, b);
                    self.put(p, j, a);
                }
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last {
                let f = self.get(i, k) / pivot;
                if f == 0.0 {
                    continue;
                }
                self.put(i, k, f);
                for j in k + 1..=jmax {
                    let v = self.get(i, j) - f * self.get(k, j);
                    self.put(i, j, v);
                }
            }
        }
        Ok(BandLu { m: self, piv })
    }

    fn put(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .slot(i, j)
            .expect("fill-in stays inside the widened band");
        self.data[k] = v;
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let n = m.n;
        let mut x = rhs.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let last = (k + m.kl).min(n - 1);
            for i in k + 1..=last {
                x[i] -= m.get(i, k) * x[k];
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + m.kl + m.ku).min(n - 1);
            let s: f64 = (k + 1..=jmax).map(|j| m.get(k, j) * x[j]).sum();
            x[k] = (x[k] - s) / m.get(k, k);
        }
        x
    }
}
