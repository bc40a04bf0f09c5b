//! Uniform Dirichlet grids on intervals and rectangles.
//!
//! Boundary values are implicit zeros and never stored. In 2D the interior
//! values are flattened row-major with rows running along y, so node
//! `(ix, iy)` lives at index `iy * n + ix`.

use serde::{Deserialize, Serialize};

use crate::error::{NlsError, Result};

/// An interval `(a, b)` or a rectangle `(ax, bx) x (ay, by)`, together with
/// the point used as origin for the Pohozaev boundary weight `x . nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub star_center: [f64; 2],
}

impl DomainSpec {
    /// Interval `(a, b)` with the star center at its midpoint.
    pub fn interval(a: f64, b: f64) -> Self {
        Self {
            dim: 1,
            lo: [a, 0.0],
            hi: [b, 0.0],
            star_center: [0.5 * (a + b), 0.0],
        }
    }

    /// Rectangle with the star center at its barycenter.
    pub fn rectangle(ax: f64, bx: f64, ay: f64, by: f64) -> Self {
        Self {
            dim: 2,
            lo: [ax, ay],
            hi: [bx, by],
            star_center: [0.5 * (ax + bx), 0.5 * (ay + by)],
        }
    }

    pub fn unit_interval() -> Self {
        Self::interval(0.0, 1.0)
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 1.0, 0.0, 1.0)
    }

    /// Symmetric box `(-L/2, L/2)^N`.
    pub fn centered_box(dim: usize, side: f64) -> Result<Self> {
        match dim {
            1 => Ok(Self::interval(-0.5 * side, 0.5 * side)),
            2 => Ok(Self::rectangle(
                -0.5 * side,
                0.5 * side,
                -0.5 * side,
                0.5 * side,
            )),
            _ => Err(NlsError::InvalidSpec(format!(
                "dimension {dim} not supported"
            ))),
        }
    }

    pub fn with_center(mut self, center: [f64; 2]) -> Self {
        self.star_center = center;
        self
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(NlsError::InvalidSpec(format!(
                "dimension {} not supported",
                self.dim
            )));
        }
        for axis in 0..self.dim {
            let (a, b) = (self.lo[axis], self.hi[axis]);
            if !a.is_finite() || !b.is_finite() {
                return Err(NlsError::InvalidSpec("non-finite bounds".into()));
            }
            if a >= b {
                return Err(NlsError::InvalidSpec(format!(
                    "degenerate bounds on axis {axis}: ({a}, {b})"
                )));
            }
            let c = self.star_center[axis];
            if !(c > a && c < b) {
                return Err(NlsError::InvalidSpec(format!(
                    "star center {c} not strictly inside ({a}, {b})"
                )));
            }
        }
        Ok(())
    }
}

/// Uniform grid of `n` interior nodes per axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub spec: DomainSpec,
    pub n: usize,
    pub h: [f64; 2],
    pub weight: f64,
}

/// Builds the grid with `h = (b - a) / (n + 1)` on every axis.
pub fn build_grid(spec: DomainSpec, n: usize) -> Result<Grid> {
    spec.validate()?;
    if n < 3 {
        return Err(NlsError::InvalidSpec(format!("need n >= 3, got {n}")));
    }
    let mut h = [0.0; 2];
    for (axis, hx) in h.iter_mut().enumerate().take(spec.dim) {
        *hx = spec.length(axis) / (n + 1) as f64;
    }
    let weight = h[..spec.dim].iter().product();
    Ok(Grid { spec, n, h, weight })
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.spec.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of interior node `i` along `axis` (0-based, so `i = 0` is `a + h`).
    pub fn axis_coord(&self, axis: usize, i: usize) -> f64 {
        self.spec.lo[axis] + (i + 1) as f64 * self.h[axis]
    }

    /// Coordinates of the node with flat index `idx`.
    pub fn coord(&self, idx: usize) -> [f64; 2] {
        match self.spec.dim {
            1 => [self.axis_coord(0, idx), 0.0],
            _ => [
                self.axis_coord(0, idx % self.n),
                self.axis_coord(1, idx / self.n),
            ],
        }
    }

    pub fn coords(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.coord(i)).collect()
    }

    /// Diagonal entry of the finite-difference matrix of `-Laplacian`.
    pub fn laplacian_diagonal(&self) -> f64 {
        (0..self.dim()).map(|a| 2.0 / (self.h[a] * self.h[a])).sum()
    }

    /// The same domain shrunk by `cells` grid cells on every side, keeping `h`.
    /// The shrunk grid's nodes are a subset of this grid's nodes.
    pub fn shrunk_by_cells(&self, cells: usize) -> Result<Grid> {
        if cells == 0 {
            return Ok(self.clone());
        }
        if self.n < 2 * cells + 3 {
            return Err(NlsError::InvalidSpec(format!(
                "cannot remove {cells} cells per side from n = {}",
                self.n
            )));
        }
        let mut spec = self.spec;
        for axis in 0..self.dim() {
            spec.lo[axis] += cells as f64 * self.h[axis];
            spec.hi[axis] -= cells as f64 * self.h[axis];
        }
        let mut grid = build_grid(spec, self.n - 2 * cells)?;
        // keep h bit-identical to the parent grid
        grid.h = self.h;
        grid.weight = self.weight;
        Ok(grid)
    }

    pub fn zeros(&self) -> Field {
        Field {
            grid: self.clone(),
            values: vec![0.0; self.len()],
        }
    }

    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Field {
        let values = (0..self.len())
            .map(|i| {
                let [x, y] = self.coord(i);
                f(x, y)
            })
            .collect();
        Field {
            grid: self.clone(),
            values,
        }
    }
}

/// A grid function, zero on the (implicit) boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(NlsError::GridMismatch);
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid && self.values.len() == other.values.len() {
            Ok(())
        } else {
            Err(NlsError::GridMismatch)
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weighted inner product `sum_i h^N u_i v_i`.
    pub fn dot(&self, other: &Field) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self.grid.weight * dot(&self.values, &other.values))
    }

    pub fn l2_sq(&self) -> f64 {
        self.grid.weight * dot(&self.values, &self.values)
    }

    pub fn lp_p(&self, p: f64) -> f64 {
        self.grid.weight * lp_sum(&self.values, p)
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn scale_mut(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    /// `self + c * other`.
    pub fn add_scaled(&self, c: f64, other: &Field) -> Result<Field> {
        self.same_grid(other)?;
        Ok(Field {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn lp_sum(a: &[f64], p: f64) -> f64 {
    a.iter().map(|v| v.abs().powf(p)).sum()
}

/// Unweighted application of the 3-point / 5-point Dirichlet stencil of `-Laplacian`.
pub(crate) fn laplacian_into(grid: &Grid, u: &[f64], out: &mut [f64]) {
    let n = grid.n;
    match grid.dim() {
        1 => {
            let ih2 = 1.0 / (grid.h[0] * grid.h[0]);
            for i in 0..n {
                let left = if i > 0 { u[i - 1] } else { 0.0 };
                let right = if i + 1 < n { u[i + 1] } else { 0.0 };
                out[i] = (2.0 * u[i] - left - right) * ih2;
            }
        }
        _ => {
            let ihx = 1.0 / (grid.h[0] * grid.h[0]);
            let ihy = 1.0 / (grid.h[1] * grid.h[1]);
            for j in 0..n {
                for i in 0..n {
                    let k = j * n + i;
                    let c = u[k];
                    let w = if i > 0 { u[k - 1] } else { 0.0 };
                    let e = if i + 1 < n { u[k + 1] } else { 0.0 };
                    let s = if j > 0 { u[k - n] } else { 0.0 };
                    let nn = if j + 1 < n { u[k + n] } else { 0.0 };
                    out[k] = (2.0 * c - w - e) * ihx + (2.0 * c - s - nn) * ihy;
                }
            }
        }
    }
}

/// `A u` for the symmetric finite-difference matrix `A` of `-Laplacian`.
pub fn apply_laplacian(grid: &Grid, u: &Field) -> Result<Field> {
    if &u.grid != grid {
        return Err(NlsError::GridMismatch);
    }
    let mut out = vec![0.0; u.len()];
    laplacian_into(grid, &u.values, &mut out);
    Ok(Field {
        grid: grid.clone(),
        values: out,
    })
}

/// The three quadratures entering the action and the energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    /// `||u||_2^2`
    pub l2_sq: f64,
    /// `||u||_p^p`
    pub lp_p: f64,
    /// `<A u, u>`, the discrete Dirichlet energy.
    pub grad_sq: f64,
}

pub fn norms(u: &Field, p: f64) -> Norms {
    let mut au = vec![0.0; u.len()];
    laplacian_into(&u.grid, &u.values, &mut au);
    let w = u.grid.weight;
    Norms {
        l2_sq: w * dot(&u.values, &u.values),
        lp_p: w * lp_sum(&u.values, p),
        grad_sq: w * dot(&au, &u.values),
    }
}

/// `(max(u, 0), min(u, 0))`.
pub fn split(u: &Field) -> (Field, Field) {
    let plus = u
        .values
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.0 })
        .collect();
    let minus = u
        .values
        .iter()
        .map(|&v| if v < 0.0 { v } else { 0.0 })
        .collect();
    (
        Field {
            grid: u.grid.clone(),
            values: plus,
        },
        Field {
            grid: u.grid.clone(),
            values: minus,
        },
    )
}

/// Number of nodal domains minus one.
///
/// Nodes with `|u| <= 1e-12 max|u|` count as zeros; connectivity is along the
/// stencil (neighbours on the axes).
pub fn node_count(u: &Field) -> usize {
    let cut = 1e-12 * u.max_abs();
    let sign = |v: f64| -> i8 {
        if v > cut {
            1
        } else if v < -cut {
            -1
        } else {
            0
        }
    };
    let n = u.grid.n;
    let signs: Vec<i8> = u.values.iter().map(|&v| sign(v)).collect();
    let mut label = vec![usize::MAX; signs.len()];
    let mut domains = 0usize;
    let mut stack = Vec::new();
    for start in 0..signs.len() {
        if signs[start] == 0 || label[start] != usize::MAX {
            continue;
        }
        label[start] = domains;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let mut neighbours = [usize::MAX; 4];
            match u.grid.dim() {
                1 => {
                    if k > 0 {
                        neighbours[0] = k - 1;
                    }
                    if k + 1 < n {
                        neighbours[1] = k + 1;
                    }
                }
                _ => {
                    let (i, j) = (k % n, k / n);
                    if i > 0 {
                        neighbours[0] = k - 1;
                    }
                    if i + 1 < n {
                        neighbours[1] = k + 1;
                    }
                    if j > 0 {
                        neighbours[2] = k - n;
                    }
                    if j + 1 < n {
                        neighbours[3] = k + n;
                    }
                }
            }
            for &m in neighbours.iter().filter(|&&m| m != usize::MAX) {
                if signs[m] == signs[start] && label[m] == usize::MAX {
                    label[m] = domains;
                    stack.push(m);
                }
            }
        }
        domains += 1;
    }
    domains.saturating_sub(1)
}
