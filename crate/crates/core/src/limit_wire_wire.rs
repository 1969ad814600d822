//! Coupled limit energy of two wires meeting at a junction.
//!
//! Wire a runs along `x₃`, wire b along `x₁`; both are parametrized by
//! `[0, 1]` and share the node at `0`. The shared node is stored once, so the
//! junction condition holds by construction and the feasible set stays a
//! product of spheres.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_wire_film::WireEnergy;
use crate::shape_coeffs::ShapeCoefficients;
use crate::sphere_field::{
    minimize_from_starts, multistart_starts, AnisotropyModel, EnergyBreakdown, EnergyFunctional, MinimizeOptions,
    MinimizeResult, MultistartResult, UNIT_TOLERANCE,
};
use crate::vector::{norm, Vec3};

/// Two chains sharing node 0.
///
/// Storage layout: `[junction, a_1, ..., a_Na, b_1, ..., b_Nb]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedWireField {
    nodes: Vec<Vec3>,
    n_a: usize,
    n_b: usize,
}

impl JoinedWireField {
    pub fn from_storage(nodes: Vec<Vec3>, n_a: usize, n_b: usize) -> Result<Self> {
        if n_a < 2 || n_b < 2 {
            return Err(Error::arg("each wire needs at least 2 intervals"));
        }
        if nodes.len() != 1 + n_a + n_b {
            return Err(Error::arg(format!("joined field needs {} nodes, got {}", 1 + n_a + n_b, nodes.len())));
        }
        for v in &nodes {
            let dev = (norm(v) - 1.0).abs();
            if !(dev <= UNIT_TOLERANCE) {
                return Err(Error::InvalidState(format!("node length deviates from 1 by {dev:e}")));
            }
        }
        Ok(Self { nodes, n_a, n_b })
    }

    /// Builds the field from two chains whose first nodes must coincide.
    pub fn from_chains(a: &[Vec3], b: &[Vec3]) -> Result<Self> {
        if a.is_empty() || b.is_empty() || a[0] != b[0] {
            return Err(Error::arg("chains must share their first node"));
        }
        let mut nodes = a.to_vec();
        nodes.extend_from_slice(&b[1..]);
        Self::from_storage(nodes, a.len() - 1, b.len() - 1)
    }

    pub fn constant(n_a: usize, n_b: usize, v: Vec3) -> Result<Self> {
        let n = norm(&v);
        Self::from_storage(vec![[v[0] / n, v[1] / n, v[2] / n]; 1 + n_a + n_b], n_a, n_b)
    }

    pub fn storage(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn junction(&self) -> Vec3 {
        self.nodes[0]
    }

    /// Storage slot of node `j` of wire a.
    pub fn slot_a(&self, j: usize) -> usize {
        j
    }

    /// Storage slot of node `j` of wire b.
    pub fn slot_b(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.n_a + j
        }
    }

    pub fn m_a(&self) -> Vec<Vec3> {
        (0..=self.n_a).map(|j| self.nodes[self.slot_a(j)]).collect()
    }

    pub fn m_b(&self) -> Vec<Vec3> {
        (0..=self.n_b).map(|j| self.nodes[self.slot_b(j)]).collect()
    }

    pub fn set_a(&mut self, j: usize, v: Vec3) {
        let s = self.slot_a(j);
        self.nodes[s] = v;
    }

    pub fn set_b(&mut self, j: usize, v: Vec3) {
        let s = self.slot_b(j);
        self.nodes[s] = v;
    }
}

/// Parameters of the wire–wire limit problem. Both cross-sections have unit
/// area, so averages and integrals of the applied field coincide.
#[derive(Debug, Clone, PartialEq)]
pub struct WireWireParams {
    pub lambda: f64,
    /// Coefficients of wire a's cross-section.
    pub coeffs_a: ShapeCoefficients,
    /// Coefficients of wire b's cross-section (normally the same set).
    pub coeffs_b: ShapeCoefficients,
    pub anisotropy: AnisotropyModel,
    /// Applied field along wire a at `x₃ = j/N_a`.
    pub f_a: Vec<Vec3>,
    /// Applied field along wire b at `x₁ = j/N_b`.
    pub f_bl: Vec<Vec3>,
}

impl WireWireParams {
    pub fn n_a(&self) -> usize {
        self.f_a.len().saturating_sub(1)
    }

    pub fn n_b(&self) -> usize {
        self.f_bl.len().saturating_sub(1)
    }

    pub fn functional(&self) -> Result<CoupledWireEnergy> {
        CoupledWireEnergy::new(self)
    }
}

/// Sum of the two wire energies on the shared storage. Wire a pairs
/// `(α, β, γ)` with components `(m₁, m₂)`, wire b with `(m₂, m₃)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledWireEnergy {
    wire_a: WireEnergy,
    wire_b: WireEnergy,
    n_a: usize,
    n_b: usize,
}

impl CoupledWireEnergy {
    pub fn new(params: &WireWireParams) -> Result<Self> {
        let (n_a, n_b) = (params.n_a(), params.n_b());
        if n_a < 2 || n_b < 2 {
            return Err(Error::arg("each wire needs at least 2 intervals"));
        }
        let index_a: Vec<usize> = (0..=n_a).collect();
        let index_b: Vec<usize> = (0..=n_b).map(|j| if j == 0 { 0 } else { n_a + j }).collect();
        let wire_a = WireEnergy::with_index(
            params.lambda,
            1.0,
            params.coeffs_a.clone(),
            [0, 1],
            params.anisotropy,
            params.f_a.clone(),
            index_a,
        )?;
        let wire_b = WireEnergy::with_index(
            params.lambda,
            1.0,
            params.coeffs_b.clone(),
            [1, 2],
            params.anisotropy,
            params.f_bl.clone(),
            index_b,
        )?;
        Ok(Self { wire_a, wire_b, n_a, n_b })
    }

    pub fn wire_a(&self) -> &WireEnergy {
        &self.wire_a
    }

    pub fn wire_b(&self) -> &WireEnergy {
        &self.wire_b
    }
}

impl EnergyFunctional for CoupledWireEnergy {
    fn num_nodes(&self) -> usize {
        1 + self.n_a + self.n_b
    }

    fn energy(&self, m: &[Vec3]) -> EnergyBreakdown {
        self.wire_a.breakdown(m).combine(&self.wire_b.breakdown(m))
    }

    fn gradient(&self, m: &[Vec3], grad: &mut [Vec3]) {
        grad.fill([0.0; 3]);
        self.wire_a.add_gradient(m, grad);
        self.wire_b.add_gradient(m, grad);
    }
}

pub fn coupled_energy(field: &JoinedWireField, params: &WireWireParams) -> Result<EnergyBreakdown> {
    if field.n_a() != params.n_a() || field.n_b() != params.n_b() {
        return Err(Error::arg(format!(
            "field has ({}, {}) intervals, applied fields have ({}, {})",
            field.n_a(),
            field.n_b(),
            params.n_a(),
            params.n_b()
        )));
    }
    Ok(params.functional()?.energy(field.storage()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireWireResult {
    pub field: JoinedWireField,
    pub breakdown: EnergyBreakdown,
    pub converged: bool,
    pub runs: MultistartResult,
}

impl WireWireResult {
    pub fn best_run(&self) -> &MinimizeResult {
        self.runs.best_run()
    }
}

/// Multistart minimization of the coupled energy over joined fields.
pub fn minimize_wire_wire(params: &WireWireParams, options: &MinimizeOptions) -> Result<WireWireResult> {
    options.validate()?;
    let functional = params.functional()?;
    let starts = multistart_starts(functional.num_nodes(), options);
    let runs = minimize_from_starts(&functional, starts, options)?;
    let best = runs.best_run();
    let field = JoinedWireField::from_storage(best.nodes.clone(), params.n_a(), params.n_b())?;
    Ok(WireWireResult { field, breakdown: best.breakdown, converged: best.converged, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::limit_wire_film::constant_samples;
    use crate::sphere_field::{fd_gradient_check, DirectorField1D};

    fn square_params(n_a: usize, n_b: usize) -> WireWireParams {
        let c = ShapeCoefficients::exact(0.5, 0.5, 0.0);
        WireWireParams {
            lambda: 1.0,
            coeffs_a: c.clone(),
            coeffs_b: c,
            anisotropy: AnisotropyModel::Zero,
            f_a: constant_samples(n_a + 1, [0.0; 3]),
            f_bl: constant_samples(n_b + 1, [0.0; 3]),
        }
    }

    #[test]
    fn constant_fields_match_substitution() {
        let p = square_params(8, 6);
        let e = |v| coupled_energy(&JoinedWireField::constant(8, 6, v).unwrap(), &p).unwrap().total;
        assert!((e([0.0, 1.0, 0.0]) - 0.5).abs() < 1e-15);
        assert!((e([0.0, 0.0, 1.0]) - 0.25).abs() < 1e-15);
        assert!((e([1.0, 0.0, 0.0]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn junction_writes_through_either_chain() {
        let p = square_params(4, 5);
        let mut f1 = JoinedWireField::constant(4, 5, [1.0, 0.0, 0.0]).unwrap();
        let mut f2 = f1.clone();
        let v = [0.0, 0.6, 0.8];
        f1.set_a(0, v);
        f2.set_b(0, v);
        assert_eq!(f1, f2);
        assert_eq!(f1.m_a()[0], f1.m_b()[0]);
        assert_eq!(coupled_energy(&f1, &p).unwrap(), coupled_energy(&f2, &p).unwrap());
    }

    #[test]
    fn chains_round_trip() {
        let a = DirectorField1D::random(5, 1).unwrap().into_nodes();
        let mut b = DirectorField1D::random(7, 2).unwrap().into_nodes();
        b[0] = a[0];
        let f = JoinedWireField::from_chains(&a, &b).unwrap();
        assert_eq!(f.m_a(), a);
        assert_eq!(f.m_b(), b);
        b[0] = [0.0, 0.0, 1.0];
        assert!(JoinedWireField::from_chains(&a, &b).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_at_the_junction() {
        let mut p = square_params(9, 7);
        p.coeffs_b = ShapeCoefficients::exact(0.6, 0.3, -0.2);
        p.anisotropy = AnisotropyModel::uniaxial([0.0, 1.0, 1.0], 0.5).unwrap();
        p.f_a = (0..10).map(|j| [0.1 * j as f64, 0.0, 1.0]).collect();
        p.f_bl = (0..8).map(|j| [1.0, -0.05 * j as f64, 0.2]).collect();
        let f = p.functional().unwrap();
        let n = f.num_nodes();
        for seed in 0..3 {
            let m = DirectorField1D::random(n - 1, seed).unwrap();
            let mut d = vec![[0.0; 3]; n];
            d[0] = [0.3, -0.7, 0.2];
            assert!(fd_gradient_check(&f, m.nodes(), &d, 1e-6).unwrap() <= 1e-5);
            let d = DirectorField1D::random(n - 1, seed + 50).unwrap();
            assert!(fd_gradient_check(&f, m.nodes(), d.nodes(), 1e-6).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let p = square_params(4, 4);
        let f = JoinedWireField::constant(4, 5, [1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(coupled_energy(&f, &p), Err(Error::InvalidArgument(_))));
        assert!(JoinedWireField::constant(1, 5, [1.0, 0.0, 0.0]).is_err());
    }
}
