//! Magnetostatic energy of thin 3D multistructures on a graded Cartesian grid.
//!
//! The potential `U` lives on grid nodes and the magnetization `M` on cells.
//! The discrete problem minimizes
//! `½ Σ_cells V avg_e |∂U|² − Σ_cells V M·avg_e ∂U`, where each cell averages
//! its four edge differences per axis. This gives a 7-point stencil for
//! `ΔU = div M` with zero Dirichlet data on the box, and the identity
//! `∫ DU·M = ∫ |DU|²` holds exactly for the discrete solution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh2d::CrossSection;
use crate::shape_coeffs::ShapeCoefficients;
use crate::sparse::{conjugate_gradient, CgReport, LinearOperator};
use crate::vector::{norm, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureKind {
    WireFilm,
    WireWire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// Wire `hΘ × [0,1)` on the film `Θ × (−h², 0)`.
    WireFilm { theta: CrossSection },
    /// Wire a `(−h,0)² × [0,1)` joined to wire b `(−h,1) × (−h,0)²`; the
    /// junction cube belongs to wire b.
    WireWire,
    /// A single box, meshed with the given cell size.
    Block { lo: Vec3, hi: Vec3, cell: f64 },
}

/// One branch-labelled body: branch 0 is the wire (wire a), branch 1 the film
/// (wire b). Blocks use branch 0 only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multistructure3D {
    pub geometry: Geometry,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Zone {
    lo: f64,
    hi: f64,
    size: f64,
}

impl Multistructure3D {
    pub fn wire_film(theta: CrossSection, h: f64) -> Result<Self> {
        let s = Self { geometry: Geometry::WireFilm { theta }, h };
        s.validate()?;
        Ok(s)
    }

    pub fn wire_wire(h: f64) -> Result<Self> {
        let s = Self { geometry: Geometry::WireWire, h };
        s.validate()?;
        Ok(s)
    }

    pub fn block(lo: Vec3, hi: Vec3, cell: f64) -> Result<Self> {
        let s = Self { geometry: Geometry::Block { lo, hi, cell }, h: 1.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn kind(&self) -> Option<StructureKind> {
        match self.geometry {
            Geometry::WireFilm { .. } => Some(StructureKind::WireFilm),
            Geometry::WireWire => Some(StructureKind::WireWire),
            Geometry::Block { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.geometry {
            Geometry::Block { lo, hi, cell } => {
                if (0..3).any(|d| !(hi[d] > lo[d])) || !(*cell > 0.0) {
                    return Err(Error::arg("block needs hi > lo and a positive cell size"));
                }
            }
            _ => {
                if !(self.h > 0.0 && self.h < 1.0) {
                    return Err(Error::arg(format!("h must lie in (0, 1), got {}", self.h)));
                }
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding box of the body.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        let h = self.h;
        match &self.geometry {
            Geometry::WireFilm { theta } => {
                let (lo, hi) = theta.bounding_box();
                (
                    [lo[0].min(h * lo[0]), lo[1].min(h * lo[1]), -h * h],
                    [hi[0].max(h * hi[0]), hi[1].max(h * hi[1]), 1.0],
                )
            }
            Geometry::WireWire => ([-h, -h, -h], [1.0, 0.0, 1.0]),
            Geometry::Block { lo, hi, .. } => (*lo, *hi),
        }
    }

    /// Branch containing the point, if any.
    pub fn branch_at(&self, x: &Vec3) -> Option<usize> {
        let h = self.h;
        match &self.geometry {
            Geometry::WireFilm { theta } => {
                if x[2] >= 0.0 && x[2] < 1.0 && theta.contains(&[x[0] / h, x[1] / h]) {
                    Some(0)
                } else if x[2] > -h * h && x[2] < 0.0 && theta.contains(&[x[0], x[1]]) {
                    Some(1)
                } else {
                    None
                }
            }
            Geometry::WireWire => {
                let in_a = x[0] > -h && x[0] < 0.0 && x[1] > -h && x[1] < 0.0 && x[2] >= 0.0 && x[2] < 1.0;
                let in_b = x[0] > -h && x[0] < 1.0 && x[1] > -h && x[1] < 0.0 && x[2] > -h && x[2] < 0.0;
                if in_a {
                    Some(0)
                } else if in_b {
                    Some(1)
                } else {
                    None
                }
            }
            Geometry::Block { lo, hi, .. } => ((0..3).all(|d| x[d] > lo[d] && x[d] < hi[d])).then_some(0),
        }
    }

    /// Intervals per axis that need resolution, with their target cell size.
    fn zones(&self, axis: usize, options: &GridOptions) -> Vec<Zone> {
        let h = self.h;
        let delta = options.delta_fraction * h;
        let zone = |lo: f64, hi: f64, size: f64| Zone { lo, hi, size };
        match &self.geometry {
            Geometry::WireFilm { theta } => {
                let (lo, hi) = theta.bounding_box();
                if axis < 2 {
                    vec![zone(h * lo[axis], h * hi[axis], delta), zone(lo[axis], hi[axis], delta)]
                } else {
                    let film = (h * h / options.film_cells as f64).min(delta);
                    vec![zone(-h * h, 0.0, film), zone(0.0, 1.0, delta)]
                }
            }
            Geometry::WireWire => match axis {
                0 => vec![zone(-h, 0.0, delta), zone(0.0, 1.0, delta)],
                1 => vec![zone(-h, 0.0, delta)],
                _ => vec![zone(-h, 0.0, delta), zone(0.0, 1.0, delta)],
            },
            Geometry::Block { lo, hi, cell } => vec![zone(lo[axis], hi[axis], *cell)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridOptions {
    /// Half width `L` of the box `[−L, L]³`.
    pub box_half_width: f64,
    /// Cell size in the body as a fraction of `h` (at most 1/4).
    pub delta_fraction: f64,
    /// Minimum number of cells across the film thickness.
    pub film_cells: usize,
    /// Growth ratio of neighbouring cells away from the body.
    pub grading: f64,
    /// Largest allowed cell size.
    pub max_cell: f64,
    /// Largest allowed number of grid nodes.
    pub node_budget: usize,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            box_half_width: 4.0,
            delta_fraction: 0.25,
            film_cells: 2,
            grading: 1.2,
            max_cell: 0.5,
            node_budget: 4_000_000,
            tol: 1e-8,
            max_iterations: 20_000,
        }
    }
}

impl GridOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.box_half_width > 0.0 && self.box_half_width.is_finite()) {
            return Err(Error::arg("box half width must be positive"));
        }
        if !(self.delta_fraction > 0.0 && self.delta_fraction <= 0.25) {
            return Err(Error::arg("delta_fraction must lie in (0, 1/4]"));
        }
        if self.film_cells < 2 {
            return Err(Error::arg("the film needs at least 2 cells across"));
        }
        if !(self.grading >= 1.0 && self.grading <= 1.5) {
            return Err(Error::arg("grading ratio must lie in [1, 1.5]"));
        }
        if !(self.max_cell > 0.0) || !(self.tol > 0.0) || self.max_iterations == 0 {
            return Err(Error::arg("max_cell, tol and max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Node coordinates of one axis on `[−L, L]`: every zone boundary is a node,
/// and cell sizes follow `min_i (s_i + (r − 1) dist(x, zone_i))`.
fn build_axis(zones: &[Zone], half_width: f64, grading: f64, max_cell: f64) -> Vec<f64> {
    let size = |x: f64| {
        zones
            .iter()
            .map(|z| {
                let d = if x < z.lo {
                    z.lo - x
                } else if x > z.hi {
                    x - z.hi
                } else {
                    0.0
                };
                z.size + (grading - 1.0) * d
            })
            .fold(max_cell, f64::min)
    };
    let mut breaks: Vec<f64> = vec![-half_width, half_width];
    for z in zones {
        breaks.push(z.lo);
        breaks.push(z.hi);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * half_width);

    let mut nodes = vec![breaks[0]];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        // cumulative cell count t(x) = ∫ dx / size
        let mut xs = vec![a];
        let mut ts = vec![0.0];
        let mut x = a;
        let mut t = 0.0;
        while x < b {
            let step = (size(x) / 32.0).min(b - x);
            let mid = size(x + 0.5 * step);
            x = if b - x - step <= 1e-14 * half_width { b } else { x + step };
            t += step / mid;
            xs.push(x);
            ts.push(t);
        }
        let n = (t - 1e-9).ceil().max(1.0) as usize;
        let mut seg = 1;
        for k in 1..n {
            let target = t * k as f64 / n as f64;
            while ts[seg] < target {
                seg += 1;
            }
            let f = (target - ts[seg - 1]) / (ts[seg] - ts[seg - 1]);
            nodes.push(xs[seg - 1] + f * (xs[seg] - xs[seg - 1]));
        }
        nodes.push(b);
    }
    nodes
}

/// Tensor-product grid with per-cell branch labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3D {
    axes: [Vec<f64>; 3],
    branch: Vec<Option<u8>>,
}

impl Grid3D {
    pub fn build(structure: &Multistructure3D, options: &GridOptions) -> Result<Grid3D> {
        structure.validate()?;
        options.validate()?;
        let l = options.box_half_width;
        let (lo, hi) = structure.bounding_box();
        if (0..3).any(|d| lo[d] < -0.5 * l || hi[d] > 0.5 * l) {
            return Err(Error::arg(format!("body does not keep a margin of L/2 = {} inside the box", 0.5 * l)));
        }
        let axes: [Vec<f64>; 3] =
            std::array::from_fn(|d| build_axis(&structure.zones(d, options), l, options.grading, options.max_cell));
        let nodes = axes.iter().map(Vec::len).product::<usize>();
        if nodes > options.node_budget {
            return Err(Error::BudgetExceeded { h: structure.h, nodes, limit: options.node_budget });
        }
        let (cx, cy, cz) = (axes[0].len() - 1, axes[1].len() - 1, axes[2].len() - 1);
        let mut branch = Vec::with_capacity(cx * cy * cz);
        for k in 0..cz {
            for j in 0..cy {
                for i in 0..cx {
                    let c = [
                        0.5 * (axes[0][i] + axes[0][i + 1]),
                        0.5 * (axes[1][j] + axes[1][j + 1]),
                        0.5 * (axes[2][k] + axes[2][k + 1]),
                    ];
                    branch.push(structure.branch_at(&c).map(|b| b as u8));
                }
            }
        }
        Ok(Grid3D { axes, branch })
    }

    pub fn axis(&self, d: usize) -> &[f64] {
        &self.axes[d]
    }

    pub fn node_dims(&self) -> [usize; 3] {
        [self.axes[0].len(), self.axes[1].len(), self.axes[2].len()]
    }

    pub fn cell_dims(&self) -> [usize; 3] {
        let n = self.node_dims();
        [n[0] - 1, n[1] - 1, n[2] - 1]
    }

    pub fn num_nodes(&self) -> usize {
        self.node_dims().iter().product()
    }

    pub fn num_cells(&self) -> usize {
        self.branch.len()
    }

    /// Smallest cell edge along each axis.
    pub fn min_spacing(&self) -> Vec3 {
        std::array::from_fn(|d| self.axes[d].windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min))
    }

    pub fn cell_branch(&self, c: usize) -> Option<usize> {
        self.branch[c].map(usize::from)
    }

    fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [cx, cy, _] = self.cell_dims();
        (k * cy + j) * cx + i
    }

    fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        let [nx, ny, _] = self.node_dims();
        (k * ny + j) * nx + i
    }

    fn cell_lengths(&self, c: [usize; 3]) -> Vec3 {
        std::array::from_fn(|d| self.axes[d][c[d] + 1] - self.axes[d][c[d]])
    }

    /// Volume of the labelled cells of `branch` (all branches when `None`).
    pub fn body_volume(&self, branch: Option<usize>) -> f64 {
        let [cx, cy, cz] = self.cell_dims();
        let mut v = 0.0;
        for k in 0..cz {
            for j in 0..cy {
                for i in 0..cx {
                    let b = self.cell_branch(self.cell_index(i, j, k));
                    if b.is_some() && (branch.is_none() || b == branch) {
                        let l = self.cell_lengths([i, j, k]);
                        v += l[0] * l[1] * l[2];
                    }
                }
            }
        }
        v
    }
}

/// Cell-centred vector field (zero outside the body).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    values: Vec<Vec3>,
}

impl CellField {
    /// `values[b]` on every cell of branch `b`, zero elsewhere.
    pub fn branch_constants(grid: &Grid3D, values: &[Vec3]) -> Result<CellField> {
        let needed = grid.branch.iter().flatten().map(|&b| b as usize + 1).max().unwrap_or(0);
        if values.len() < needed {
            return Err(Error::arg(format!("{needed} branch values required, got {}", values.len())));
        }
        Ok(CellField { values: grid.branch.iter().map(|b| b.map_or([0.0; 3], |b| values[b as usize])).collect() })
    }

    pub fn from_values(grid: &Grid3D, values: Vec<Vec3>) -> Result<CellField> {
        if values.len() != grid.num_cells() {
            return Err(Error::arg("one value per cell required"));
        }
        for (v, b) in values.iter().zip(&grid.branch) {
            if b.is_none() && *v != [0.0; 3] {
                return Err(Error::arg("magnetization must vanish outside the body"));
            }
        }
        Ok(CellField { values })
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn scaled(&self, a: f64) -> CellField {
        CellField { values: self.values.iter().map(|v| [a * v[0], a * v[1], a * v[2]]).collect() }
    }
}

/// Node-centred scalar field including the (zero) box boundary nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField {
    values: Vec<f64>,
}

impl NodeField {
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// 7-point operator on the interior nodes.
struct GridLaplacian<'a> {
    grid: &'a Grid3D,
    /// Cell lengths per axis.
    len: [Vec<f64>; 3],
    /// Dual lengths per axis at every node.
    dual: [Vec<f64>; 3],
}

impl<'a> GridLaplacian<'a> {
    fn new(grid: &'a Grid3D) -> Self {
        let len: [Vec<f64>; 3] = std::array::from_fn(|d| grid.axes[d].windows(2).map(|w| w[1] - w[0]).collect());
        let dual = std::array::from_fn(|d| {
            let l = &len[d];
            (0..=l.len())
                .map(|i| {
                    let left = if i > 0 { l[i - 1] } else { 0.0 };
                    let right = if i < l.len() { l[i] } else { 0.0 };
                    0.5 * (left + right)
                })
                .collect()
        });
        Self { grid, len, dual }
    }

    fn interior_dims(&self) -> [usize; 3] {
        let n = self.grid.node_dims();
        [n[0] - 2, n[1] - 2, n[2] - 2]
    }

    /// Edge weights to the lower and upper neighbour along each axis.
    fn weights(&self, i: usize, j: usize, k: usize) -> [[f64; 2]; 3] {
        let (dx, dy, dz) = (&self.dual[0], &self.dual[1], &self.dual[2]);
        let ax = dy[j] * dz[k];
        let ay = dx[i] * dz[k];
        let az = dx[i] * dy[j];
        [
            [ax / self.len[0][i - 1], ax / self.len[0][i]],
            [ay / self.len[1][j - 1], ay / self.len[1][j]],
            [az / self.len[2][k - 1], az / self.len[2][k]],
        ]
    }

    /// Full node vector from interior unknowns.
    fn embed(&self, x: &[f64]) -> Vec<f64> {
        let [ix, iy, iz] = self.interior_dims();
        let mut u = vec![0.0; self.grid.num_nodes()];
        for k in 0..iz {
            for j in 0..iy {
                let src = (k * iy + j) * ix;
                let dst = self.grid.node_index(1, j + 1, k + 1);
                u[dst..dst + ix].copy_from_slice(&x[src..src + ix]);
            }
        }
        u
    }
}

impl LinearOperator for GridLaplacian<'_> {
    fn dim(&self) -> usize {
        self.interior_dims().iter().product()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [ix, iy, iz] = self.interior_dims();
        let at = |i: usize, j: usize, k: usize| -> f64 {
            // interior coordinates are shifted by one; boundary values are zero
            if i == 0 || j == 0 || k == 0 || i > ix || j > iy || k > iz {
                0.0
            } else {
                x[((k - 1) * iy + (j - 1)) * ix + (i - 1)]
            }
        };
        y.par_chunks_mut(ix * iy).enumerate().for_each(|(kk, slab)| {
            let k = kk + 1;
            for jj in 0..iy {
                let j = jj + 1;
                for ii in 0..ix {
                    let i = ii + 1;
                    let w = self.weights(i, j, k);
                    let u = at(i, j, k);
                    slab[jj * ix + ii] = w[0][0] * (u - at(i - 1, j, k))
                        + w[0][1] * (u - at(i + 1, j, k))
                        + w[1][0] * (u - at(i, j - 1, k))
                        + w[1][1] * (u - at(i, j + 1, k))
                        + w[2][0] * (u - at(i, j, k - 1))
                        + w[2][1] * (u - at(i, j, k + 1));
                }
            }
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let [ix, iy, iz] = self.interior_dims();
        let mut d = Vec::with_capacity(ix * iy * iz);
        for k in 1..=iz {
            for j in 1..=iy {
                for i in 1..=ix {
                    d.push(self.weights(i, j, k).iter().flatten().sum());
                }
            }
        }
        d
    }
}

/// Corners of a cell grouped as the four edges along each axis:
/// `edges[d][e] = (low node, high node)`.
fn cell_edges(grid: &Grid3D, i: usize, j: usize, k: usize) -> [[(usize, usize); 4]; 3] {
    let n = |a: usize, b: usize, c: usize| grid.node_index(i + a, j + b, k + c);
    [
        [(n(0, 0, 0), n(1, 0, 0)), (n(0, 1, 0), n(1, 1, 0)), (n(0, 0, 1), n(1, 0, 1)), (n(0, 1, 1), n(1, 1, 1))],
        [(n(0, 0, 0), n(0, 1, 0)), (n(1, 0, 0), n(1, 1, 0)), (n(0, 0, 1), n(0, 1, 1)), (n(1, 0, 1), n(1, 1, 1))],
        [(n(0, 0, 0), n(0, 0, 1)), (n(1, 0, 0), n(1, 0, 1)), (n(0, 1, 0), n(0, 1, 1)), (n(1, 1, 0), n(1, 1, 1))],
    ]
}

/// Right-hand side `∫ M·Dφ_n` on all nodes (discrete `−div M`).
fn assemble_source(grid: &Grid3D, m: &CellField) -> Vec<f64> {
    let mut b = vec![0.0; grid.num_nodes()];
    let [cx, cy, cz] = grid.cell_dims();
    for k in 0..cz {
        for j in 0..cy {
            for i in 0..cx {
                let c = grid.cell_index(i, j, k);
                let mv = m.values[c];
                if mv == [0.0; 3] {
                    continue;
                }
                let l = grid.cell_lengths([i, j, k]);
                let vol = l[0] * l[1] * l[2];
                for (d, edges) in cell_edges(grid, i, j, k).iter().enumerate() {
                    let f = 0.25 * vol * mv[d] / l[d];
                    for &(lo, hi) in edges {
                        b[hi] += f;
                        b[lo] -= f;
                    }
                }
            }
        }
    }
    b
}

/// Solves for the potential of `m`; the CG relative residual is at most `tol`.
pub fn solve_potential(grid: &Grid3D, m: &CellField, tol: f64, max_iterations: usize) -> Result<(NodeField, CgReport)> {
    if m.values.len() != grid.num_cells() {
        return Err(Error::arg("magnetization does not match the grid"));
    }
    let op = GridLaplacian::new(grid);
    let full = assemble_source(grid, m);
    let [ix, iy, iz] = op.interior_dims();
    let mut rhs = Vec::with_capacity(ix * iy * iz);
    for k in 1..=iz {
        for j in 1..=iy {
            let start = grid.node_index(1, j, k);
            rhs.extend_from_slice(&full[start..start + ix]);
        }
    }
    let (x, report) = conjugate_gradient(&op, &rhs, tol, max_iterations)?;
    Ok((NodeField { values: op.embed(&x) }, report))
}

/// Both discrete forms of the magnetostatic energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetostaticEnergy {
    /// `½ ∫_Ω DU·M`.
    pub from_magnetization: f64,
    /// `½ ∫ |DU|²` over the box.
    pub from_gradient: f64,
}

impl MagnetostaticEnergy {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.from_magnetization.abs().max(self.from_gradient.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.from_magnetization - self.from_gradient).abs() / scale
        }
    }
}

pub fn magnetostatic_energy(grid: &Grid3D, m: &CellField, u: &NodeField) -> Result<MagnetostaticEnergy> {
    if m.values.len() != grid.num_cells() || u.values.len() != grid.num_nodes() {
        return Err(Error::arg("fields do not match the grid"));
    }
    let [cx, cy, cz] = grid.cell_dims();
    let uv = &u.values;
    let per_slab: Vec<(f64, f64)> = (0..cz)
        .into_par_iter()
        .map(|k| {
            let (mut dm, mut dd) = (0.0, 0.0);
            for j in 0..cy {
                for i in 0..cx {
                    let l = grid.cell_lengths([i, j, k]);
                    let vol = l[0] * l[1] * l[2];
                    let mv = m.values[grid.cell_index(i, j, k)];
                    for (d, edges) in cell_edges(grid, i, j, k).iter().enumerate() {
                        let mut avg = 0.0;
                        let mut sq = 0.0;
                        for &(lo, hi) in edges {
                            let g = (uv[hi] - uv[lo]) / l[d];
                            avg += 0.25 * g;
                            sq += 0.25 * g * g;
                        }
                        dm += vol * mv[d] * avg;
                        dd += vol * sq;
                    }
                }
            }
            (dm, dd)
        })
        .collect();
    let (dm, dd) = per_slab.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(MagnetostaticEnergy { from_magnetization: 0.5 * dm, from_gradient: 0.5 * dd })
}

/// Limit of `E^mag / h²` for branch-constant magnetizations.
pub fn limit_value(structure: &Multistructure3D, coeffs: &ShapeCoefficients, m: &[Vec3; 2]) -> Result<f64> {
    let [a, b] = m;
    match &structure.geometry {
        Geometry::WireFilm { theta } => Ok(0.5 * (coeffs.form(a[0], a[1]) + theta.area() * b[2] * b[2])),
        Geometry::WireWire => Ok(0.5 * (coeffs.form(a[0], a[1]) + coeffs.form(b[1], b[2]))),
        Geometry::Block { .. } => Err(Error::arg("blocks have no thin-structure limit")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub nodes: usize,
    pub cg_iterations: usize,
    pub energy: MagnetostaticEnergy,
    pub e_over_h2: f64,
    pub limit: f64,
    /// `|E/h² − limit| / limit`, or the absolute gap when the limit is zero.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// Errors strictly decrease along the h list.
    pub monotone: bool,
}

impl ConvergenceTable {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "h,E_over_h2,limit,rel_error")?;
        for r in &self.rows {
            writeln!(out, "{},{:e},{:e},{:e}", r.h, r.e_over_h2, r.limit, r.rel_error)?;
        }
        Ok(())
    }
}

/// Structure of the given kind at thickness `h`.
pub fn structure_for(kind: StructureKind, theta: Option<&CrossSection>, h: f64) -> Result<Multistructure3D> {
    match kind {
        StructureKind::WireFilm => {
            let theta = theta.ok_or_else(|| Error::arg("wire_film needs a footprint polygon"))?;
            Multistructure3D::wire_film(theta.clone(), h)
        }
        StructureKind::WireWire => Multistructure3D::wire_wire(h),
    }
}

/// Computes `E^mag / h²` for branch-constant unit magnetizations over a
/// strictly decreasing list of `h` and compares with the limit value.
pub fn convergence_study(
    kind: StructureKind,
    theta: Option<&CrossSection>,
    m_constants: [Vec3; 2],
    h_list: &[f64],
    limit_coeffs: &ShapeCoefficients,
    options: &GridOptions,
) -> Result<ConvergenceTable> {
    options.validate()?;
    if h_list.is_empty() || h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::arg("h list must be nonempty and strictly decreasing"));
    }
    for v in &m_constants {
        if (norm(v) - 1.0).abs() > 1e-12 {
            return Err(Error::arg("branch constants must be unit vectors"));
        }
    }
    // check every level against the budget before solving anything
    let structures = h_list.iter().map(|&h| structure_for(kind, theta, h)).collect::<Result<Vec<_>>>()?;
    let grids = structures.iter().map(|s| Grid3D::build(s, options)).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(h_list.len());
    for (s, grid) in structures.iter().zip(&grids) {
        let m = CellField::branch_constants(grid, &m_constants)?;
        let (u, report) = solve_potential(grid, &m, options.tol, options.max_iterations)?;
        let energy = magnetostatic_energy(grid, &m, &u)?;
        let e_over_h2 = energy.from_magnetization / (s.h * s.h);
        let limit = limit_value(s, limit_coeffs, &m_constants)?;
        let gap = (e_over_h2 - limit).abs();
        rows.push(ConvergenceRow {
            h: s.h,
            nodes: grid.num_nodes(),
            cg_iterations: report.iterations,
            energy,
            e_over_h2,
            limit,
            rel_error: if limit > 0.0 { gap / limit } else { gap },
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].rel_error < w[0].rel_error);
    Ok(ConvergenceTable { rows, monotone })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_options() -> GridOptions {
        GridOptions { box_half_width: 4.0, grading: 1.3, max_cell: 1.0, ..Default::default() }
    }

    #[test]
    fn axis_contains_breakpoints_and_grades() {
        let zones = [Zone { lo: 0.0, hi: 0.1, size: 0.025 }, Zone { lo: 0.0, hi: 1.0, size: 0.1 }];
        let x = build_axis(&zones, 4.0, 1.2, 0.5);
        for b in [-4.0, 0.0, 0.1, 1.0, 4.0] {
            assert!(x.contains(&b), "missing breakpoint {b}");
        }
        let d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        assert!(d.iter().all(|&v| v > 0.0 && v <= 0.5 + 1e-12));
        for w in d.windows(2) {
            let r = w[1] / w[0];
            assert!(r < 1.35 && r > 1.0 / 1.35, "ratio {r}");
        }
        let inside: Vec<f64> = x.windows(2).filter(|w| w[0] >= 0.0 && w[1] <= 0.1).map(|w| w[1] - w[0]).collect();
        assert!(inside.iter().all(|&v| v <= 0.025 + 1e-12));
    }

    #[test]
    fn zero_magnetization_gives_zero_potential() {
        let s = Multistructure3D::wire_wire(0.4).unwrap();
        let g = Grid3D::build(&s, &small_options()).unwrap();
        let m = CellField::branch_constants(&g, &[[0.0; 3], [0.0; 3]]).unwrap();
        let (u, _) = solve_potential(&g, &m, 1e-8, 1000).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
        let e = magnetostatic_energy(&g, &m, &u).unwrap();
        assert_eq!(e.from_magnetization, 0.0);
    }

    #[test]
    fn wire_film_volume_is_exact_on_the_grid() {
        let h = 0.4;
        let s = Multistructure3D::wire_film(CrossSection::unit_square(), h).unwrap();
        let g = Grid3D::build(&s, &small_options()).unwrap();
        assert!((g.body_volume(Some(0)) - h * h).abs() < 1e-12);
        assert!((g.body_volume(Some(1)) - h * h).abs() < 1e-12);
        let dz = g.min_spacing()[2];
        assert!(dz <= 0.5 * h * h + 1e-15);
    }

    #[test]
    fn energy_forms_agree_and_solution_is_linear() {
        let s = Multistructure3D::wire_wire(0.4).unwrap();
        let g = Grid3D::build(&s, &small_options()).unwrap();
        let m = CellField::branch_constants(&g, &[[0.0, 1.0, 0.0], [0.0, 0.6, 0.8]]).unwrap();
        let (u, _) = solve_potential(&g, &m, 1e-10, 5000).unwrap();
        let e = magnetostatic_energy(&g, &m, &u).unwrap();
        assert!(e.from_magnetization > 0.0);
        assert!(e.relative_gap() < 1e-6);
        let (u2, _) = solve_potential(&g, &m.scaled(-2.5), 1e-10, 5000).unwrap();
        let scale = u.values().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in u.values().iter().zip(u2.values()) {
            assert!((b + 2.5 * a).abs() <= 1e-7 * scale);
        }
    }

    #[test]
    fn budget_is_enforced_before_solving() {
        let opts = GridOptions { node_budget: 1000, ..small_options() };
        let err = convergence_study(
            StructureKind::WireWire,
            None,
            [[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            &[0.4, 0.2],
            &ShapeCoefficients::exact(0.5, 0.5, 0.0),
            &opts,
        )
        .unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { h, limit: 1000, .. } if h == 0.4));
    }

    #[test]
    fn body_must_fit_with_margin() {
        let s = Multistructure3D::block([-1.0; 3], [1.0; 3], 0.25).unwrap();
        let opts = GridOptions { box_half_width: 1.5, ..small_options() };
        assert!(Grid3D::build(&s, &opts).is_err());
    }

    #[test]
    fn limit_values() {
        let c = ShapeCoefficients::exact(0.5, 0.5, 0.0);
        let wf = Multistructure3D::wire_film(CrossSection::unit_square(), 0.2).unwrap();
        let v = limit_value(&wf, &c, &[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        assert_eq!(limit_value(&wf, &c, &[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]).unwrap(), 0.0);
        let ww = Multistructure3D::wire_wire(0.2).unwrap();
        let v = limit_value(&ww, &c, &[[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }
}
