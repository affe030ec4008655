//! Banded LU with partial pivoting confined to the band.
//!
//! Storage follows the LAPACK `gbtrf` layout: column-major with `2*kl + ku + 1`
//! rows per column so that row interchanges have room for fill in `U`.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::medium_grid::DiscreteOperator;

pub const SINGULAR_PIVOT: f64 = 1e-300;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug)]
pub struct BandMatrix {
    pub n: usize,
    pub kl: usize,
    pub ku: usize,
    ldab: usize,
    ab: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            ldab,
            ab: vec![ZERO; ldab * n],
        }
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        self.kl + self.ku + i - j + j * self.ldab
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku >= j && j + self.kl >= i
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let p = self.pos(i, j);
        self.ab[p] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if self.in_band(i, j) {
            self.ab[self.pos(i, j)]
        } else {
            ZERO
        }
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        for (j, &xj) in x.iter().enumerate().take(self.n) {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, yi) in y.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *yi += self.ab[self.pos(i, j)] * xj;
            }
        }
        y
    }
}

/// Node ordering used for a band factorization of an operator.
#[derive(Clone, Debug, PartialEq)]
enum Ordering {
    Identity,
    /// band index -> storage index
    Transposed { nx: usize, ny: usize },
}

#[derive(Clone, Debug)]
pub struct Factorization {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<C64>,
    ipiv: Vec<usize>,
    ordering: Ordering,
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    /// Raw factor storage, for determinism checks.
    pub fn factors(&self) -> (&[C64], &[usize]) {
        (&self.ab, &self.ipiv)
    }

    #[inline]
    fn to_band(&self, s: usize) -> usize {
        match self.ordering {
            Ordering::Identity => s,
            Ordering::Transposed { nx, ny } => (s / nx) + ny * (s % nx),
        }
    }

    pub fn solve(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        if rhs.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: rhs.len(),
            });
        }
        let mut b = vec![ZERO; self.n];
        for (s, v) in rhs.iter().enumerate() {
            b[self.to_band(s)] = *v;
        }
        self.solve_band_order(&mut b);
        Ok((0..self.n).map(|s| b[self.to_band(s)]).collect())
    }

    /// Solve for every column; identical to calling [`Factorization::solve`] per column.
    pub fn solve_batch(&self, rhs: &[Vec<C64>]) -> Result<Vec<Vec<C64>>> {
        rhs.iter().map(|r| self.solve(r)).collect()
    }

    fn solve_band_order(&self, b: &mut [C64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        let ld = self.ldab;
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != ZERO {
                let km = self.kl.min(n - 1 - j);
                let col = &self.ab[kv + 1 + j * ld..kv + 1 + km + j * ld];
                for (t, l) in col.iter().enumerate() {
                    b[j + 1 + t] -= *l * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[kv + j * ld];
            let bj = b[j];
            if bj != ZERO {
                let top = j.saturating_sub(kv);
                let col_start = kv + top - j + j * ld;
                let col = &self.ab[col_start..kv + j * ld];
                for (t, u) in col.iter().enumerate() {
                    b[top + t] -= *u * bj;
                }
            }
        }
    }
}

/// Factor a band matrix in place with row interchanges restricted to the band.
pub fn factorize_band(a: BandMatrix) -> Result<Factorization> {
    factorize_with_ordering(a, Ordering::Identity)
}

fn factorize_with_ordering(a: BandMatrix, ordering: Ordering) -> Result<Factorization> {
    let BandMatrix {
        n,
        kl,
        ku,
        ldab,
        mut ab,
    } = a;
    let kv = kl + ku;
    let mut ipiv = vec![0usize; n];
    let mut ju = 0usize;
    for j in 0..n {
        let km = kl.min(n - 1 - j);
        let base = kv + j * ldab;
        let mut p = 0usize;
        let mut best = -1.0f64;
        for t in 0..=km {
            let m = ab[base + t].norm();
            if m > best {
                best = m;
                p = t;
            }
        }
        if best.is_nan() || best < SINGULAR_PIVOT {
            return Err(Error::Singular {
                row: j,
                magnitude: best.max(0.0),
            });
        }
        ipiv[j] = j + p;
        ju = ju.max((j + ku + p).min(n - 1));
        if p != 0 {
            for c in j..=ju {
                let a0 = kv + j - c + c * ldab;
                ab.swap(a0, a0 + p);
            }
        }
        let inv = ab[base].inv();
        for t in 1..=km {
            ab[base + t] *= inv;
        }
        if km > 0 {
            for c in j + 1..=ju {
                let s = ab[kv + j - c + c * ldab];
                if s == ZERO {
                    continue;
                }
                // column c's rows j+1.. lie after column j's multipliers in storage
                let dst = kv + j + 1 - c + c * ldab;
                let split = base + 1 + km;
                let (head, tail) = ab.split_at_mut(split);
                let l = &head[base + 1..split];
                let u = &mut tail[dst - split..dst - split + km];
                for (ui, li) in u.iter_mut().zip(l.iter()) {
                    *ui -= *li * s;
                }
            }
        }
    }
    Ok(Factorization {
        n,
        kl,
        ku,
        ldab,
        ab,
        ipiv,
        ordering,
    })
}

/// Band form of an operator with the shorter grid dimension innermost.
pub fn operator_band(op: &DiscreteOperator) -> BandMatrix {
    let r = op.rect;
    let (nx, ny) = (r.unknowns_x(), r.unknowns_y());
    let n = nx * ny;
    let transposed = nx > ny;
    let bw = if transposed { ny } else { nx };
    let mut a = BandMatrix::zeros(n, bw, bw);
    let band_index = |x: usize, y: usize| {
        let (i, j) = (x - r.x0 - 1, y - r.y0 - 1);
        if transposed {
            j + ny * i
        } else {
            i + nx * j
        }
    };
    for y in r.y0 + 1..r.y1 {
        for x in r.x0 + 1..r.x1 {
            let p = band_index(x, y);
            a.set(p, p, op.center(x, y));
            if x + 1 < r.x1 {
                let q = band_index(x + 1, y);
                let c = op.ex_at(x, y);
                a.set(p, q, c);
                a.set(q, p, c);
            }
            if y + 1 < r.y1 {
                let q = band_index(x, y + 1);
                let c = op.ey_at(x, y);
                a.set(p, q, c);
                a.set(q, p, c);
            }
        }
    }
    a
}

pub fn factorize(op: &DiscreteOperator) -> Result<Factorization> {
    let r = op.rect;
    let (nx, ny) = (r.unknowns_x(), r.unknowns_y());
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("operator has no unknowns".into()));
    }
    let ordering = if nx > ny {
        Ordering::Transposed { nx, ny }
    } else {
        Ordering::Identity
    };
    factorize_with_ordering(operator_band(op), ordering)
}
