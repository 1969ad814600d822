//! Shape coefficients of a wire cross-section.
//!
//! For a bounded section `S` the potentials `p` and `q` are the unique (up to
//! constants) finite-energy functions on the plane with
//!
//! ```text
//! ∫ Dp·Dφ = ∫_S ∂φ/∂y ,   ∫ Dq·Dφ = ∫_S ∂φ/∂z     for every test φ,
//! ```
//!
//! and `α = ∫|Dp|²`, `β = ∫|Dq|²`, `γ = 2∫Dp·Dq`. We discretize with P1
//! elements on a truncated disk, pin the potential to zero on the truncation
//! circle and remove the resulting `c/R²` bias by extrapolating over several
//! radii.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh2d::{triangulate, CrossSection, Mesh2D};
use crate::sparse::{conjugate_gradient, CgReport, CsrMatrix};
use crate::vector::Vec2;

/// Coordinate direction of the right-hand side (`p` uses the first, `q` the second).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    FirstAxis,
    SecondAxis,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Direction::FirstAxis => 0,
            Direction::SecondAxis => 1,
        }
    }
}

/// P1 field, one value per mesh vertex, zero on the truncation circle.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFieldP1 {
    values: Vec<f64>,
}

impl ScalarFieldP1 {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &ScalarFieldP1, b: f64) -> ScalarFieldP1 {
        Self { values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect() }
    }
}

/// Gradients of the three barycentric basis functions and the triangle area.
pub(crate) fn basis_gradients(p: [Vec2; 3]) -> ([Vec2; 3], f64) {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
    let inv = 1.0 / (2.0 * area);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let b = p[(i + 1) % 3];
        let c = p[(i + 2) % 3];
        g[i] = [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv];
    }
    (g, area)
}

fn triangle_points(mesh: &Mesh2D, t: usize) -> [Vec2; 3] {
    mesh.triangles()[t].map(|v| mesh.vertices()[v])
}

/// P1 element stiffness matrix `K_ij = area · ∇λ_i·∇λ_j`.
pub fn element_stiffness(p: [Vec2; 3]) -> Option<[[f64; 3]; 3]> {
    let scale = (0..3)
        .map(|i| {
            let d = [p[(i + 1) % 3][0] - p[i][0], p[(i + 1) % 3][1] - p[i][1]];
            d[0] * d[0] + d[1] * d[1]
        })
        .fold(0.0, f64::max);
    let (g, area) = basis_gradients(p);
    if !(area > 1e-14 * scale) || !area.is_finite() {
        return None;
    }
    let mut k = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            k[i][j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
        }
    }
    Some(k)
}

/// Unconstrained P1 stiffness matrix of the whole mesh.
pub fn assemble_stiffness(mesh: &Mesh2D) -> Result<CsrMatrix> {
    let mut triplets = Vec::with_capacity(9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let k = element_stiffness(triangle_points(mesh, t)).ok_or(Error::AssemblyFailure { triangle: t })?;
        for i in 0..3 {
            for j in 0..3 {
                triplets.push((tri[i], tri[j], k[i][j]));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.num_vertices(), triplets))
}

/// `b_i = ∫_S ∂φ_i/∂x_d` summed over inside triangles.
pub fn assemble_rhs(mesh: &Mesh2D, direction: Direction) -> Vec<f64> {
    let d = direction.index();
    let mut b = vec![0.0; mesh.num_vertices()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !mesh.inside()[t] {
            continue;
        }
        let (g, area) = basis_gradients(triangle_points(mesh, t));
        for i in 0..3 {
            b[tri[i]] += area * g[i][d];
        }
    }
    b
}

/// Same vector through the divergence theorem: `b_i = ∫_{∂S} φ_i ν_d ds`.
pub fn assemble_rhs_boundary(mesh: &Mesh2D, direction: Direction) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_vertices()];
    for e in mesh.interface_edges() {
        let a = mesh.vertices()[e[0]];
        let c = mesh.vertices()[e[1]];
        // outward normal times length is (dy, -dx) for a counterclockwise boundary
        let flux = match direction {
            Direction::FirstAxis => c[1] - a[1],
            Direction::SecondAxis => -(c[0] - a[0]),
        };
        b[e[0]] += 0.5 * flux;
        b[e[1]] += 0.5 * flux;
    }
    b
}

/// Stiffness system with the truncation-circle vertices eliminated; reusable
/// for several right-hand sides on the same mesh.
pub struct TransmissionSolver {
    reduced: CsrMatrix,
    free: Vec<usize>,
    n: usize,
}

impl TransmissionSolver {
    pub fn new(mesh: &Mesh2D) -> Result<Self> {
        let full = assemble_stiffness(mesh)?;
        let keep: Vec<bool> = (0..mesh.num_vertices()).map(|v| !mesh.is_outer_vertex(v)).collect();
        if keep.iter().all(|&k| k) {
            return Err(Error::arg("mesh has no outer boundary to pin the potential"));
        }
        let (reduced, free) = full.principal_submatrix(&keep);
        Ok(Self { reduced, free, n: mesh.num_vertices() })
    }

    pub fn solve(&self, rhs: &[f64], tol: f64) -> Result<(ScalarFieldP1, CgReport)> {
        if rhs.len() != self.n {
            return Err(Error::arg(format!("rhs has {} entries, mesh has {} vertices", rhs.len(), self.n)));
        }
        let b: Vec<f64> = self.free.iter().map(|&i| rhs[i]).collect();
        let cap = (20 * self.free.len()).max(1000);
        let (x, report) = conjugate_gradient(&self.reduced, &b, tol, cap)?;
        let mut values = vec![0.0; self.n];
        for (&i, v) in self.free.iter().zip(x) {
            values[i] = v;
        }
        Ok((ScalarFieldP1 { values }, report))
    }
}

/// Solves the pinned transmission system for one right-hand side.
pub fn solve_transmission(mesh: &Mesh2D, rhs: &[f64], tol: f64) -> Result<ScalarFieldP1> {
    Ok(TransmissionSolver::new(mesh)?.solve(rhs, tol)?.0)
}

fn check_field(mesh: &Mesh2D, u: &ScalarFieldP1) -> Result<()> {
    if u.values.len() != mesh.num_vertices() {
        return Err(Error::arg(format!(
            "field has {} values, mesh has {} vertices",
            u.values.len(),
            mesh.num_vertices()
        )));
    }
    Ok(())
}

/// `∫ Du·Dv` over the truncated disk, exact for P1 fields.
pub fn dirichlet_energy(mesh: &Mesh2D, u: &ScalarFieldP1, v: &ScalarFieldP1) -> Result<f64> {
    check_field(mesh, u)?;
    check_field(mesh, v)?;
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (g, area) = basis_gradients(triangle_points(mesh, t));
        let mut du = [0.0; 2];
        let mut dv = [0.0; 2];
        for i in 0..3 {
            for k in 0..2 {
                du[k] += u.values[tri[i]] * g[i][k];
                dv[k] += v.values[tri[i]] * g[i][k];
            }
        }
        sum += area * (du[0] * dv[0] + du[1] * dv[1]);
    }
    Ok(sum)
}

/// `∫_S ∂q/∂x₁ + ∫_S ∂p/∂x₂`, the volume form of the boundary-integral
/// expression for γ.
pub fn gamma_boundary_check(mesh: &Mesh2D, p: &ScalarFieldP1, q: &ScalarFieldP1) -> Result<f64> {
    check_field(mesh, p)?;
    check_field(mesh, q)?;
    let mut sum = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if !mesh.inside()[t] {
            continue;
        }
        let (g, area) = basis_gradients(triangle_points(mesh, t));
        for i in 0..3 {
            sum += area * (q.values[tri[i]] * g[i][0] + p.values[tri[i]] * g[i][1]);
        }
    }
    Ok(sum)
}

/// Relative energy-norm distance between the solution for the combined
/// right-hand side `c₁ b_p + c₂ b_q` and `c₁ p + c₂ q`.
pub fn superposition_check(mesh: &Mesh2D, c: (f64, f64), tol: f64) -> Result<f64> {
    if c.0 == 0.0 && c.1 == 0.0 {
        return Err(Error::arg("c must be nonzero"));
    }
    let solver = TransmissionSolver::new(mesh)?;
    let bp = assemble_rhs(mesh, Direction::FirstAxis);
    let bq = assemble_rhs(mesh, Direction::SecondAxis);
    let bc: Vec<f64> = bp.iter().zip(&bq).map(|(x, y)| c.0 * x + c.1 * y).collect();
    let (p, _) = solver.solve(&bp, tol)?;
    let (q, _) = solver.solve(&bq, tol)?;
    let (pc, _) = solver.solve(&bc, tol)?;
    let diff = pc.combine(1.0, &p.combine(c.0, &q, c.1), -1.0);
    let num = dirichlet_energy(mesh, &diff, &diff)?;
    let den = dirichlet_energy(mesh, &pc, &pc)?;
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientParams {
    /// Truncation radii; at least two, each at least twice the section diameter.
    pub r_levels: Vec<f64>,
    /// Target edge length in and near the section.
    pub h: f64,
    /// Relative residual of the conjugate gradient solves.
    pub tol: f64,
    /// Also solve at `h/2` on the largest radius and report the change.
    pub refinement_check: bool,
}

impl Default for CoefficientParams {
    fn default() -> Self {
        Self { r_levels: vec![8.0, 16.0], h: 0.05, tol: 1e-10, refinement_check: false }
    }
}

/// Raw values at one truncation radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub radius: f64,
    pub h: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub gamma_boundary: f64,
    pub vertices: usize,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub error_estimate: f64,
    pub levels: Vec<LevelRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_error: Option<f64>,
}

impl ShapeCoefficients {
    /// Coefficients known in closed form (no solve record).
    pub fn exact(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma, error_estimate: 0.0, levels: Vec::new(), mesh_error: None }
    }

    /// `α a² + β b² + γ a b`.
    pub fn form(&self, a: f64, b: f64) -> f64 {
        self.alpha * a * a + self.beta * b * b + self.gamma * a * b
    }

    /// Gradient of [`Self::form`] with respect to `(a, b)`.
    pub fn form_gradient(&self, a: f64, b: f64) -> (f64, f64) {
        (2.0 * self.alpha * a + self.gamma * b, 2.0 * self.beta * b + self.gamma * a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.gamma.is_finite()) {
            return Err(Error::arg("shape coefficients need alpha > 0, beta > 0"));
        }
        if self.gamma.abs() > 2.0 * (self.alpha * self.beta).sqrt() * (1.0 + 1e-12) {
            return Err(Error::arg("shape coefficients violate |gamma| <= 2 sqrt(alpha beta)"));
        }
        Ok(())
    }
}

fn solve_level(section: &CrossSection, radius: f64, h: f64, tol: f64) -> Result<LevelRecord> {
    let mesh = triangulate(section, radius, h)?;
    let solver = TransmissionSolver::new(&mesh)?;
    let (p, rp) = solver.solve(&assemble_rhs(&mesh, Direction::FirstAxis), tol)?;
    let (q, rq) = solver.solve(&assemble_rhs(&mesh, Direction::SecondAxis), tol)?;
    Ok(LevelRecord {
        radius,
        h,
        alpha: dirichlet_energy(&mesh, &p, &p)?,
        beta: dirichlet_energy(&mesh, &q, &q)?,
        gamma: 2.0 * dirichlet_energy(&mesh, &p, &q)?,
        gamma_boundary: gamma_boundary_check(&mesh, &p, &q)?,
        vertices: mesh.num_vertices(),
        cg_iterations: rp.iterations + rq.iterations,
    })
}

/// Least-squares fit of `v(R) = v∞ + c/R²`; returns `v∞`.
pub fn extrapolate_inverse_square(radii: &[f64], values: &[f64]) -> f64 {
    let n = radii.len() as f64;
    let xs: Vec<f64> = radii.iter().map(|r| 1.0 / (r * r)).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = values.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(values).map(|(x, y)| (x - mx) * (y - my)).sum();
    my - (sxy / sxx) * mx
}

/// Computes α, β, γ of `section` with truncation extrapolation.
pub fn coefficients(section: &CrossSection, params: &CoefficientParams) -> Result<ShapeCoefficients> {
    if params.r_levels.len() < 2 {
        return Err(Error::arg("at least two truncation radii are required"));
    }
    if !(params.h > 0.0 && params.h.is_finite()) || !(params.tol > 0.0) {
        return Err(Error::arg("h and tol must be positive"));
    }
    let diam = section.diameter();
    for &r in &params.r_levels {
        if !(r.is_finite() && r >= 2.0 * diam * (1.0 - 1e-12)) {
            return Err(Error::arg(format!(
                "truncation radius {r} is below twice the section diameter ({})",
                2.0 * diam
            )));
        }
    }
    let mut sorted = params.r_levels.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::arg("truncation radii must be distinct"));
    }

    let levels: Vec<LevelRecord> =
        sorted.par_iter().map(|&r| solve_level(section, r, params.h, params.tol)).collect::<Result<_>>()?;

    let radii: Vec<f64> = levels.iter().map(|l| l.radius).collect();
    let fit = |f: fn(&LevelRecord) -> f64| {
        let vals: Vec<f64> = levels.iter().map(f).collect();
        extrapolate_inverse_square(&radii, &vals)
    };
    let alpha = fit(|l| l.alpha);
    let beta = fit(|l| l.beta);
    let gamma = fit(|l| l.gamma);
    let finest = levels.last().expect("at least two levels");
    let error_estimate = (finest.alpha - alpha).abs().max((finest.beta - beta).abs()).max((finest.gamma - gamma).abs());

    let mesh_error = if params.refinement_check {
        let fine = solve_level(section, finest.radius, 0.5 * params.h, params.tol)?;
        Some(
            (fine.alpha - finest.alpha)
                .abs()
                .max((fine.beta - finest.beta).abs())
                .max((fine.gamma - finest.gamma).abs()),
        )
    } else {
        None
    };

    Ok(ShapeCoefficients { alpha, beta, gamma, error_estimate, levels, mesh_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh2d::polygon_from_disc;

    #[test]
    fn reference_element_matrix() {
        let k = element_stiffness([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_triangle_fails_assembly() {
        let mesh = Mesh2D::from_parts(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 0.0], [1.0, 1e-20]],
            vec![[0, 1, 2], [1, 3, 4]],
            vec![true, false],
            vec![],
            vec![],
        );
        // the sliver is positively oriented but numerically degenerate
        let mesh = mesh.unwrap();
        assert_eq!(assemble_stiffness(&mesh), Err(Error::AssemblyFailure { triangle: 1 }));
    }

    #[test]
    fn stiffness_is_symmetric_with_zero_row_sums() {
        let mesh = triangulate(&polygon_from_disc([0.0, 0.0], 1.0, 12).unwrap(), 4.0, 0.3).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        assert!(k.is_symmetric(0.0));
        for i in 0..k.n() {
            let s: f64 = k.row(i).map(|(_, v)| v).sum();
            assert!(s.abs() < 1e-12, "row {i} sums to {s}");
        }
    }

    #[test]
    fn rhs_paths_agree_and_sum_to_zero() {
        let mesh = triangulate(&polygon_from_disc([0.3, -0.2], 1.0, 7).unwrap(), 6.0, 0.2).unwrap();
        for d in [Direction::FirstAxis, Direction::SecondAxis] {
            let vol = assemble_rhs(&mesh, d);
            let bnd = assemble_rhs_boundary(&mesh, d);
            let scale = vol.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (a, b) in vol.iter().zip(&bnd) {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
            assert!(vol.iter().sum::<f64>().abs() < 1e-13);
        }
    }

    #[test]
    fn rhs_vanishes_away_from_the_section() {
        let sq = CrossSection::unit_square();
        let mesh = triangulate(&sq, 8.0, 0.2).unwrap();
        let b = assemble_rhs(&mesh, Direction::FirstAxis);
        for (v, p) in mesh.vertices().iter().enumerate() {
            let far = p[0] < -0.3 || p[0] > 1.3 || p[1] < -0.3 || p[1] > 1.3;
            if far {
                assert_eq!(b[v], 0.0);
            }
        }
    }

    #[test]
    fn corner_entry_of_structured_square() {
        // Square [0,1]^2 split into two triangles along the diagonal (0,0)-(1,1),
        // embedded in a larger square so the corner (0,0) is an interface vertex.
        let v = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mesh = Mesh2D::from_parts(v, vec![[0, 1, 2], [0, 2, 3]], vec![true, true], vec![], vec![]).unwrap();
        // grad φ0 = (-1, 0) on the lower triangle and (0, -1) on the upper one
        let b1 = assemble_rhs(&mesh, Direction::FirstAxis);
        let b2 = assemble_rhs(&mesh, Direction::SecondAxis);
        assert!((b1[0] + 0.5).abs() < 1e-15);
        assert!((b2[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_rhs_gives_zero_field() {
        let mesh = triangulate(&CrossSection::unit_square(), 4.0, 0.3).unwrap();
        let u = solve_transmission(&mesh, &vec![0.0; mesh.num_vertices()], 1e-10).unwrap();
        assert!(u.values().iter().all(|&x| x == 0.0));
        assert_eq!(dirichlet_energy(&mesh, &u, &u).unwrap(), 0.0);
    }

    #[test]
    fn outer_vertices_are_pinned_and_energy_is_symmetric() {
        let mesh = triangulate(&polygon_from_disc([0.0, 0.0], 1.0, 16).unwrap(), 4.0, 0.2).unwrap();
        let solver = TransmissionSolver::new(&mesh).unwrap();
        let (p, _) = solver.solve(&assemble_rhs(&mesh, Direction::FirstAxis), 1e-10).unwrap();
        let (q, _) = solver.solve(&assemble_rhs(&mesh, Direction::SecondAxis), 1e-10).unwrap();
        for v in 0..mesh.num_vertices() {
            if mesh.is_outer_vertex(v) {
                assert_eq!(p.values()[v], 0.0);
            }
        }
        let a = dirichlet_energy(&mesh, &p, &q).unwrap();
        let b = dirichlet_energy(&mesh, &q, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mismatched_field_is_rejected() {
        let mesh = triangulate(&CrossSection::unit_square(), 4.0, 0.5).unwrap();
        let u = ScalarFieldP1::zeros(3);
        assert!(matches!(dirichlet_energy(&mesh, &u, &u), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn extrapolation_is_exact_for_inverse_square_model() {
        let radii = [4.0, 8.0, 16.0];
        let vals: Vec<f64> = radii.iter().map(|r| 1.25 - 3.0 / (r * r)).collect();
        assert!((extrapolate_inverse_square(&radii, &vals) - 1.25).abs() < 1e-14);
    }

    #[test]
    fn too_small_radius_is_rejected() {
        let params = CoefficientParams { r_levels: vec![1.0, 8.0], ..Default::default() };
        assert!(coefficients(&CrossSection::unit_square(), &params).is_err());
        let params = CoefficientParams { r_levels: vec![8.0], ..Default::default() };
        assert!(coefficients(&CrossSection::unit_square(), &params).is_err());
    }

    #[test]
    fn superposition_rejects_zero_combination() {
        let mesh = triangulate(&CrossSection::unit_square(), 4.0, 0.5).unwrap();
        assert!(superposition_check(&mesh, (0.0, 0.0), 1e-10).is_err());
    }
}
