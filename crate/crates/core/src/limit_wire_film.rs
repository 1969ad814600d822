//! Limit energy of the wire–film multistructure.
//!
//! The limit functional splits into a one-dimensional wire part on `[0, 1]`
//! and a two-dimensional film part on the footprint Θ, with no coupling
//! between them, so the two are minimized independently.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh2d::Mesh2D;
use crate::shape_coeffs::{assemble_stiffness, basis_gradients, ShapeCoefficients};
use crate::sparse::CsrMatrix;
use crate::sphere_field::{
    minimize_multistart, AnisotropyModel, DirectorField1D, DirectorField2D, EnergyBreakdown, EnergyFunctional,
    MinimizeOptions, MultistartResult,
};
use crate::vector::{axpy, dot, sub, Vec3};

/// `n` copies of `v`.
pub fn constant_samples(n: usize, v: Vec3) -> Vec<Vec3> {
    vec![v; n]
}

fn check_finite_samples(samples: &[Vec3], what: &str) -> Result<()> {
    if samples.iter().flatten().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::arg(format!("{what} contains non-finite values")))
    }
}

/// Discrete wire energy on a chain of nodes.
///
/// `exchange = λ w Σ |m_{j+1} - m_j|² / Δx`; anisotropy and Zeeman use the
/// trapezoid rule with weight `w`; the magnetostatic term is
/// `½ ∫ (α m_c0² + β m_c1² + γ m_c0 m_c1)` by the trapezoid rule, where
/// `(c0, c1)` are the components paired with the `p` and `q` directions.
/// The chain reads its nodes from a shared array through `index`.
#[derive(Debug, Clone, PartialEq)]
pub struct WireEnergy {
    lambda: f64,
    weight: f64,
    coeffs: ShapeCoefficients,
    components: [usize; 2],
    anisotropy: AnisotropyModel,
    field: Vec<Vec3>,
    index: Vec<usize>,
}

impl WireEnergy {
    /// Chain reading nodes `0..field.len()` in order.
    pub fn new(
        lambda: f64,
        weight: f64,
        coeffs: ShapeCoefficients,
        components: [usize; 2],
        anisotropy: AnisotropyModel,
        field: Vec<Vec3>,
    ) -> Result<Self> {
        let index = (0..field.len()).collect();
        Self::with_index(lambda, weight, coeffs, components, anisotropy, field, index)
    }

    pub fn with_index(
        lambda: f64,
        weight: f64,
        coeffs: ShapeCoefficients,
        components: [usize; 2],
        anisotropy: AnisotropyModel,
        field: Vec<Vec3>,
        index: Vec<usize>,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be positive, got {lambda}")));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::arg(format!("cross-section weight must be positive, got {weight}")));
        }
        coeffs.validate()?;
        anisotropy.validate()?;
        if components[0] > 2 || components[1] > 2 || components[0] == components[1] {
            return Err(Error::arg("component pair must be two distinct indices in 0..3"));
        }
        if field.len() < 3 {
            return Err(Error::arg("a wire needs at least 2 intervals"));
        }
        if index.len() != field.len() {
            return Err(Error::arg(format!("field has {} samples, chain has {} nodes", field.len(), index.len())));
        }
        check_finite_samples(&field, "applied field")?;
        Ok(Self { lambda, weight, coeffs, components, anisotropy, field, index })
    }

    pub fn n_intervals(&self) -> usize {
        self.field.len() - 1
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    fn dx(&self) -> f64 {
        1.0 / self.n_intervals() as f64
    }

    fn trapezoid_weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.n_intervals() {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    fn max_index(&self) -> usize {
        self.index.iter().copied().max().unwrap_or(0)
    }

    /// Energy of the chain read from `m`.
    pub fn breakdown(&self, m: &[Vec3]) -> EnergyBreakdown {
        let dx = self.dx();
        let node = |j: usize| &m[self.index[j]];
        let mut exchange = 0.0;
        for j in 0..self.n_intervals() {
            let d = sub(node(j + 1), node(j));
            exchange += dot(&d, &d);
        }
        exchange *= self.lambda * self.weight / dx;

        let [c0, c1] = self.components;
        let (mut aniso, mut zeeman, mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for j in 0..self.field.len() {
            let w = self.trapezoid_weight(j);
            let v = node(j);
            aniso += w * self.anisotropy.density(v);
            zeeman += w * dot(&self.field[j], v);
            s00 += w * v[c0] * v[c0];
            s11 += w * v[c1] * v[c1];
            s01 += w * v[c0] * v[c1];
        }
        let c = &self.coeffs;
        EnergyBreakdown::new(
            exchange,
            self.weight * aniso,
            -2.0 * self.weight * zeeman,
            0.5 * (c.alpha * s00 + c.beta * s11 + c.gamma * s01),
        )
    }

    /// Magnetostatic term evaluated node by node through the quadratic form.
    pub fn magnetostatic_nodewise(&self, m: &[Vec3]) -> f64 {
        let [c0, c1] = self.components;
        0.5 * (0..self.field.len())
            .map(|j| {
                let v = &m[self.index[j]];
                self.trapezoid_weight(j) * self.coeffs.form(v[c0], v[c1])
            })
            .sum::<f64>()
    }

    /// Adds the Euclidean gradient of [`Self::breakdown`] into `grad`.
    pub fn add_gradient(&self, m: &[Vec3], grad: &mut [Vec3]) {
        let n = self.n_intervals();
        let ex = 2.0 * self.lambda * self.weight / self.dx();
        let [c0, c1] = self.components;
        for j in 0..=n {
            let i = self.index[j];
            let v = &m[i];
            let g = &mut grad[i];
            if j > 0 {
                axpy(g, ex, &sub(v, &m[self.index[j - 1]]));
            }
            if j < n {
                axpy(g, ex, &sub(v, &m[self.index[j + 1]]));
            }
            let w = self.trapezoid_weight(j);
            axpy(g, self.weight * w, &self.anisotropy.gradient(v));
            axpy(g, -2.0 * self.weight * w, &self.field[j]);
            let (ga, gb) = self.coeffs.form_gradient(v[c0], v[c1]);
            g[c0] += 0.5 * w * ga;
            g[c1] += 0.5 * w * gb;
        }
    }
}

impl EnergyFunctional for WireEnergy {
    fn num_nodes(&self) -> usize {
        self.max_index() + 1
    }

    fn energy(&self, m: &[Vec3]) -> EnergyBreakdown {
        self.breakdown(m)
    }

    fn gradient(&self, m: &[Vec3], grad: &mut [Vec3]) {
        grad.fill([0.0; 3]);
        self.add_gradient(m, grad);
    }
}

/// Discrete film energy on a triangulated footprint.
///
/// Exchange is `λ Σ_T |T| |Dm|²` with P1 gradients; anisotropy, Zeeman and
/// the `½ |m₃|²` term use lumped vertex masses. The `½ |m₃|²` term is
/// reported as the magnetostatic part.
#[derive(Debug, Clone)]
pub struct FilmEnergy {
    lambda: f64,
    anisotropy: AnisotropyModel,
    field: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    gradients: Vec<([[f64; 2]; 3], f64)>,
    stiffness: CsrMatrix,
    masses: Vec<f64>,
}

impl FilmEnergy {
    pub fn new(lambda: f64, mesh: &Mesh2D, anisotropy: AnisotropyModel, field: Vec<Vec3>) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be positive, got {lambda}")));
        }
        anisotropy.validate()?;
        if field.len() != mesh.num_vertices() {
            return Err(Error::arg(format!(
                "film field has {} samples, mesh has {} vertices",
                field.len(),
                mesh.num_vertices()
            )));
        }
        check_finite_samples(&field, "applied film field")?;
        let stiffness = assemble_stiffness(mesh)?;
        let gradients = (0..mesh.num_triangles())
            .map(|t| basis_gradients(mesh.triangles()[t].map(|v| mesh.vertices()[v])))
            .collect();
        Ok(Self {
            lambda,
            anisotropy,
            field,
            triangles: mesh.triangles().to_vec(),
            gradients,
            stiffness,
            masses: mesh.lumped_masses(),
        })
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }
}

impl EnergyFunctional for FilmEnergy {
    fn num_nodes(&self) -> usize {
        self.masses.len()
    }

    #[allow(clippy::needless_range_loop)]
    fn energy(&self, m: &[Vec3]) -> EnergyBreakdown {
        let mut exchange = 0.0;
        for (tri, (g, area)) in self.triangles.iter().zip(&self.gradients) {
            let mut sq = 0.0;
            for c in 0..3 {
                let mut d = [0.0; 2];
                for k in 0..3 {
                    d[0] += m[tri[k]][c] * g[k][0];
                    d[1] += m[tri[k]][c] * g[k][1];
                }
                sq += d[0] * d[0] + d[1] * d[1];
            }
            exchange += area * sq;
        }
        let (mut aniso, mut zeeman, mut normal) = (0.0, 0.0, 0.0);
        for ((v, f), w) in m.iter().zip(&self.field).zip(&self.masses) {
            aniso += w * self.anisotropy.density(v);
            zeeman += w * dot(f, v);
            normal += w * v[2] * v[2];
        }
        EnergyBreakdown::new(self.lambda * exchange, aniso, -2.0 * zeeman, 0.5 * normal)
    }

    fn gradient(&self, m: &[Vec3], grad: &mut [Vec3]) {
        let two_lambda = 2.0 * self.lambda;
        for (i, g) in grad.iter_mut().enumerate() {
            let mut km = [0.0; 3];
            for (j, k) in self.stiffness.row(i) {
                axpy(&mut km, k, &m[j]);
            }
            let w = self.masses[i];
            *g = [two_lambda * km[0], two_lambda * km[1], two_lambda * km[2]];
            axpy(g, w, &self.anisotropy.gradient(&m[i]));
            axpy(g, -2.0 * w, &self.field[i]);
            g[2] += w * m[i][2];
        }
    }
}

/// Parameters of the wire–film limit problem.
#[derive(Debug, Clone)]
pub struct WireFilmParams {
    pub lambda: f64,
    /// `|Θ|`.
    pub theta_area: f64,
    pub coeffs: ShapeCoefficients,
    pub anisotropy: AnisotropyModel,
    /// Cross-sectional average of the applied field at `x_j = j/N`.
    pub f_a: Vec<Vec3>,
    /// Thickness integral of the applied field at each film vertex.
    pub f_b: Vec<Vec3>,
    pub film_mesh: Mesh2D,
}

impl WireFilmParams {
    pub fn n_intervals(&self) -> usize {
        self.f_a.len().saturating_sub(1)
    }

    pub fn wire_functional(&self) -> Result<WireEnergy> {
        WireEnergy::new(self.lambda, self.theta_area, self.coeffs.clone(), [0, 1], self.anisotropy, self.f_a.clone())
    }

    pub fn film_functional(&self) -> Result<FilmEnergy> {
        FilmEnergy::new(self.lambda, &self.film_mesh, self.anisotropy, self.f_b.clone())
    }

    pub fn validate(&self) -> Result<()> {
        self.wire_functional()?;
        self.film_functional()?;
        Ok(())
    }
}

pub fn wire_energy(m: &DirectorField1D, params: &WireFilmParams) -> Result<EnergyBreakdown> {
    let f = params.wire_functional()?;
    if m.nodes().len() != params.f_a.len() {
        return Err(Error::arg(format!("field has {} nodes, F_a has {} samples", m.nodes().len(), params.f_a.len())));
    }
    Ok(f.breakdown(m.nodes()))
}

pub fn film_energy(m: &DirectorField2D, params: &WireFilmParams) -> Result<EnergyBreakdown> {
    let f = params.film_functional()?;
    if m.nodes().len() != f.num_nodes() {
        return Err(Error::arg(format!(
            "field has {} nodes, film mesh has {} vertices",
            m.nodes().len(),
            f.num_nodes()
        )));
    }
    Ok(f.energy(m.nodes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireFilmResult {
    pub wire: MultistartResult,
    pub film: MultistartResult,
}

impl WireFilmResult {
    pub fn total(&self) -> EnergyBreakdown {
        self.wire.best_run().breakdown.combine(&self.film.best_run().breakdown)
    }
}

/// Minimizes the wire and film parts independently (and concurrently).
pub fn minimize_wire_film(params: &WireFilmParams, options: &MinimizeOptions) -> Result<WireFilmResult> {
    options.validate()?;
    let wire = params.wire_functional()?;
    let film = params.film_functional()?;
    let (w, f) = rayon::join(|| minimize_multistart(&wire, options), || minimize_multistart(&film, options));
    Ok(WireFilmResult { wire: w?, film: f? })
}
