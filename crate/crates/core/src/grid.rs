//! Periodic tensor-product grids, finite-difference stencils and
//! multilinear interpolation.
//!
//! Points sit at `x_i = -L/2 + i*dx`, `i = 0..n`, with periodic wrap. 2D
//! arrays are row-major with axis 0 slowest, so `index = i0 * n1 + i1`.

use crate::error::{Error, Result};

/// Minimum points per axis accepted by [`GridSpec`].
pub const MIN_POINTS: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    dim: usize,
    extent: [f64; 2],
    points: [usize; 2],
}

impl GridSpec {
    pub fn new(extent: &[f64], points: &[usize]) -> Result<Self> {
        let dim = extent.len();
        if dim == 0 || dim > 2 || points.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2 with one point count per axis (got {} extents, {} counts)",
                extent.len(),
                points.len()
            )));
        }
        let mut e = [1.0; 2];
        let mut p = [1usize; 2];
        for axis in 0..dim {
            if !(extent[axis] > 0.0) || !extent[axis].is_finite() {
                return Err(Error::InvalidGrid(format!("extent[{axis}] = {} must be > 0", extent[axis])));
            }
            if points[axis] < MIN_POINTS || !points[axis].is_power_of_two() {
                return Err(Error::InvalidGrid(format!(
                    "points[{axis}] = {} must be a power of two >= {MIN_POINTS}",
                    points[axis]
                )));
            }
            e[axis] = extent[axis];
            p[axis] = points[axis];
        }
        Ok(Self { dim, extent: e, points: p })
    }

    pub fn line(extent: f64, points: usize) -> Result<Self> {
        Self::new(&[extent], &[points])
    }

    pub fn plane(extent: [f64; 2], points: [usize; 2]) -> Result<Self> {
        Self::new(&extent, &points)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    #[inline]
    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    pub fn point_counts(&self) -> &[usize] {
        &self.points[..self.dim]
    }

    /// Total number of grid points.
    #[inline]
    pub fn len(&self) -> usize {
        self.points[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    /// Volume element `dx^dim`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    #[inline]
    pub fn origin(&self, axis: usize) -> f64 {
        -0.5 * self.extent[axis]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin(axis) + i as f64 * self.spacing(axis)
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Multi-index of a flat index.
    #[inline]
    pub fn split(&self, index: usize) -> [usize; 2] {
        if self.dim == 1 {
            [index, 0]
        } else {
            [index / self.points[1], index % self.points[1]]
        }
    }

    #[inline]
    pub fn flat(&self, i0: usize, i1: usize) -> usize {
        if self.dim == 1 {
            i0
        } else {
            i0 * self.points[1] + i1
        }
    }

    /// Physical position of a grid point (unused components are zero).
    pub fn position(&self, index: usize) -> [f64; 2] {
        let [i0, i1] = self.split(index);
        if self.dim == 1 {
            [self.coord(0, i0), 0.0]
        } else {
            [self.coord(0, i0), self.coord(1, i1)]
        }
    }

    /// Periodic neighbour of `index` displaced by `offset` cells along `axis`.
    #[inline]
    pub fn neighbor(&self, index: usize, axis: usize, offset: isize) -> usize {
        let mut m = self.split(index);
        let n = self.points[axis] as isize;
        m[axis] = (m[axis] as isize + offset).rem_euclid(n) as usize;
        self.flat(m[0], m[1])
    }

    /// Map a coordinate into the fundamental domain `[-L/2, L/2)`.
    #[inline]
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let l = self.extent[axis];
        let o = self.origin(axis);
        o + (x - o).rem_euclid(l)
    }

    /// Angular wavenumbers in FFT ordering.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis];
        let dk = 2.0 * std::f64::consts::PI / self.extent[axis];
        (0..n)
            .map(|i| {
                let s = if i < n / 2 { i as isize } else { i as isize - n as isize };
                s as f64 * dk
            })
            .collect()
    }

    /// `grid:<dim>,<extent...>,<points...>`
    pub fn header(&self) -> String {
        let mut s = format!("grid:{}", self.dim);
        for a in 0..self.dim {
            s.push_str(&format!(",{}", self.extent[a]));
        }
        for a in 0..self.dim {
            s.push_str(&format!(",{}", self.points[a]));
        }
        s
    }

    pub fn parse_header(line: &str) -> Result<Self> {
        let body = line
            .trim()
            .trim_start_matches('#')
            .trim()
            .strip_prefix("grid:")
            .ok_or_else(|| Error::InvalidInput(format!("missing grid header in `{line}`")))?;
        let parts: Vec<&str> = body.split(',').map(str::trim).collect();
        let dim: usize = parts
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidInput("bad grid dimension".into()))?;
        if parts.len() != 1 + 2 * dim {
            return Err(Error::InvalidInput(format!("grid header `{line}` has wrong arity")));
        }
        let ext: Vec<f64> = parts[1..1 + dim]
            .iter()
            .map(|s| s.parse().map_err(|_| Error::InvalidInput(format!("bad extent `{s}`"))))
            .collect::<Result<_>>()?;
        let pts: Vec<usize> = parts[1 + dim..]
            .iter()
            .map(|s| s.parse().map_err(|_| Error::InvalidInput(format!("bad point count `{s}`"))))
            .collect::<Result<_>>()?;
        Self::new(&ext, &pts)
    }

    /// Interpolation stencil for a physical position (periodic, multilinear).
    pub fn stencil(&self, pos: &[f64; 2]) -> Stencil {
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for axis in 0..self.dim {
            let n = self.points[axis];
            let u = (pos[axis] - self.origin(axis)) / self.spacing(axis);
            let fl = u.floor();
            base[axis] = (fl as i64).rem_euclid(n as i64) as usize;
            frac[axis] = u - fl;
        }
        if self.dim == 1 {
            let i1 = (base[0] + 1) % self.points[0];
            Stencil {
                idx: [base[0], i1, 0, 0],
                w: [1.0 - frac[0], frac[0], 0.0, 0.0],
                len: 2,
            }
        } else {
            let a1 = (base[0] + 1) % self.points[0];
            let b1 = (base[1] + 1) % self.points[1];
            let (fx, fy) = (frac[0], frac[1]);
            Stencil {
                idx: [
                    self.flat(base[0], base[1]),
                    self.flat(base[0], b1),
                    self.flat(a1, base[1]),
                    self.flat(a1, b1),
                ],
                w: [(1.0 - fx) * (1.0 - fy), (1.0 - fx) * fy, fx * (1.0 - fy), fx * fy],
                len: 4,
            }
        }
    }

    /// Nearest grid point to a position.
    pub fn nearest(&self, pos: &[f64; 2]) -> usize {
        let mut m = [0usize; 2];
        for axis in 0..self.dim {
            let n = self.points[axis] as i64;
            let u = ((pos[axis] - self.origin(axis)) / self.spacing(axis)).round() as i64;
            m[axis] = u.rem_euclid(n) as usize;
        }
        self.flat(m[0], m[1])
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            Err(Error::GridMismatch(format!("{} vs {}", self.header(), other.header())))
        } else {
            Ok(())
        }
    }
}

/// Corner indices and weights of a multilinear interpolation.
#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub len: usize,
}

impl Stencil {
    #[inline]
    pub fn apply(&self, f: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.len {
            s += self.w[k] * f[self.idx[k]];
        }
        s
    }

    #[inline]
    pub fn corners(&self) -> &[usize] {
        &self.idx[..self.len]
    }
}

/// Periodic 4th-order central finite differences along one axis.
pub mod fd {
    use super::GridSpec;

    fn map_axis(f: &[f64], grid: &GridSpec, axis: usize, op: impl Fn(&dyn Fn(isize) -> f64) -> f64) -> Vec<f64> {
        (0..grid.len())
            .map(|i| {
                let at = |o: isize| f[grid.neighbor(i, axis, o)];
                op(&at)
            })
            .collect()
    }

    /// First derivative, `(-f₂ + 8f₁ - 8f₋₁ + f₋₂) / 12h`.
    pub fn d1(f: &[f64], grid: &GridSpec, axis: usize) -> Vec<f64> {
        let h = grid.spacing(axis);
        map_axis(f, grid, axis, |at| (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h))
    }

    /// Second derivative.
    pub fn d2(f: &[f64], grid: &GridSpec, axis: usize) -> Vec<f64> {
        let h = grid.spacing(axis);
        map_axis(f, grid, axis, |at| {
            (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * h * h)
        })
    }

    /// Third derivative.
    pub fn d3(f: &[f64], grid: &GridSpec, axis: usize) -> Vec<f64> {
        let h = grid.spacing(axis);
        map_axis(f, grid, axis, |at| {
            (-at(3) + 8.0 * at(2) - 13.0 * at(1) + 13.0 * at(-1) - 8.0 * at(-2) + at(-3)) / (8.0 * h * h * h)
        })
    }

    /// Gradient as per-point vectors (second component zero in 1D).
    pub fn gradient(f: &[f64], grid: &GridSpec) -> Vec<[f64; 2]> {
        let gx = d1(f, grid, 0);
        if grid.dim() == 1 {
            gx.into_iter().map(|g| [g, 0.0]).collect()
        } else {
            let gy = d1(f, grid, 1);
            gx.into_iter().zip(gy).map(|(a, b)| [a, b]).collect()
        }
    }

    /// Laplacian.
    pub fn laplacian(f: &[f64], grid: &GridSpec) -> Vec<f64> {
        let mut out = d2(f, grid, 0);
        if grid.dim() == 2 {
            for (o, v) in out.iter_mut().zip(d2(f, grid, 1)) {
                *o += v;
            }
        }
        out
    }

    /// Half-width of the widest stencil used here.
    pub const REACH: isize = 3;
}
