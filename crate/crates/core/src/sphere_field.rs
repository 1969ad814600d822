//! Unit-vector fields and a projected gradient descent on products of spheres.
//!
//! A field is a flat slice of nodes, each constrained to the unit sphere.
//! Every iteration projects the Euclidean gradient onto the tangent planes,
//! takes an Armijo-backtracked step along the negative projected gradient and
//! normalizes each node back onto the sphere. The trial step length comes from
//! the Barzilai–Borwein formula; acceptance is always decided by the Armijo
//! test, so the energy trace is non-increasing.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::{add, dot, norm, scale, sub, Vec3};

/// Nodes must have unit length within this tolerance.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Per-term energy record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub exchange: f64,
    pub anisotropy: f64,
    pub zeeman: f64,
    pub magnetostatic: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(exchange: f64, anisotropy: f64, zeeman: f64, magnetostatic: f64) -> Self {
        Self { exchange, anisotropy, zeeman, magnetostatic, total: exchange + anisotropy + zeeman + magnetostatic }
    }

    /// Term-wise sum.
    pub fn combine(&self, other: &EnergyBreakdown) -> Self {
        Self::new(
            self.exchange + other.exchange,
            self.anisotropy + other.anisotropy,
            self.zeeman + other.zeeman,
            self.magnetostatic + other.magnetostatic,
        )
    }
}

fn unit_deviation(nodes: &[Vec3]) -> f64 {
    nodes.iter().map(|m| (norm(m) - 1.0).abs()).fold(0.0, f64::max)
}

fn check_unit(nodes: &[Vec3]) -> Result<()> {
    let dev = unit_deviation(nodes);
    if !(dev <= UNIT_TOLERANCE) {
        return Err(Error::InvalidState(format!("node length deviates from 1 by {dev:e}")));
    }
    Ok(())
}

fn normalized(v: Vec3) -> Result<Vec3> {
    let n = norm(&v);
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::arg("cannot normalize a zero or non-finite vector"));
    }
    Ok(scale(&v, 1.0 / n))
}

pub fn random_unit_vector<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    [r * phi.cos(), r * phi.sin(), z]
}

/// Unit vectors at the nodes `x_j = j/N` of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectorField1D {
    nodes: Vec<Vec3>,
}

impl DirectorField1D {
    pub fn new(nodes: Vec<Vec3>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::arg(format!("a 1D field needs N >= 2 intervals, got {} nodes", nodes.len())));
        }
        check_unit(&nodes)?;
        Ok(Self { nodes })
    }

    /// `f(x_j)` normalized at every node.
    pub fn from_fn(n_intervals: usize, f: impl Fn(f64) -> Vec3) -> Result<Self> {
        let nodes =
            (0..=n_intervals).map(|j| normalized(f(j as f64 / n_intervals as f64))).collect::<Result<Vec<_>>>()?;
        Self::new(nodes)
    }

    pub fn constant(n_intervals: usize, v: Vec3) -> Result<Self> {
        Self::from_fn(n_intervals, |_| v)
    }

    pub fn random(n_intervals: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::new((0..=n_intervals).map(|_| random_unit_vector(&mut rng)).collect())
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<Vec3> {
        self.nodes
    }

    pub fn n_intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n_intervals() as f64
    }
}

/// Unit vectors at the vertices of a film mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectorField2D {
    nodes: Vec<Vec3>,
}

impl DirectorField2D {
    pub fn new(nodes: Vec<Vec3>) -> Result<Self> {
        check_unit(&nodes)?;
        Ok(Self { nodes })
    }

    pub fn constant(n_vertices: usize, v: Vec3) -> Result<Self> {
        let v = normalized(v)?;
        Ok(Self { nodes: vec![v; n_vertices] })
    }

    pub fn random(n_vertices: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self { nodes: (0..n_vertices).map(|_| random_unit_vector(&mut rng)).collect() }
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn into_nodes(self) -> Vec<Vec3> {
        self.nodes
    }
}

/// Anisotropy energy density `φ`, even and nonnegative on the sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnisotropyModel {
    #[default]
    Zero,
    /// `φ(m) = K (1 - (m·e)²)`.
    Uniaxial { axis: Vec3, strength: f64 },
}

impl AnisotropyModel {
    pub fn uniaxial(axis: Vec3, strength: f64) -> Result<Self> {
        let model = AnisotropyModel::Uniaxial { axis: normalized(axis)?, strength };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AnisotropyModel::Zero => Ok(()),
            AnisotropyModel::Uniaxial { axis, strength } => {
                if (norm(&axis) - 1.0).abs() > 1e-12 {
                    return Err(Error::arg("anisotropy axis must be a unit vector"));
                }
                if !(strength >= 0.0 && strength.is_finite()) {
                    return Err(Error::arg("anisotropy strength must be nonnegative"));
                }
                Ok(())
            }
        }
    }

    pub fn density(&self, m: &Vec3) -> f64 {
        match self {
            AnisotropyModel::Zero => 0.0,
            AnisotropyModel::Uniaxial { axis, strength } => {
                let c = dot(m, axis);
                strength * (1.0 - c * c)
            }
        }
    }

    /// Euclidean gradient of [`Self::density`].
    pub fn gradient(&self, m: &Vec3) -> Vec3 {
        match self {
            AnisotropyModel::Zero => [0.0; 3],
            AnisotropyModel::Uniaxial { axis, strength } => scale(axis, -2.0 * strength * dot(m, axis)),
        }
    }

    /// The same model after permuting vector components: `out[i] = in[perm[i]]`.
    pub fn permuted(&self, perm: [usize; 3]) -> Self {
        match *self {
            AnisotropyModel::Zero => AnisotropyModel::Zero,
            AnisotropyModel::Uniaxial { axis, strength } => {
                AnisotropyModel::Uniaxial { axis: [axis[perm[0]], axis[perm[1]], axis[perm[2]]], strength }
            }
        }
    }
}

/// A smooth energy on a product of unit spheres.
pub trait EnergyFunctional: Sync {
    fn num_nodes(&self) -> usize;
    fn energy(&self, m: &[Vec3]) -> EnergyBreakdown;
    /// Euclidean gradient of the total energy, written into `grad`.
    fn gradient(&self, m: &[Vec3], grad: &mut [Vec3]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    /// Stop once the largest nodal tangent gradient is at most this.
    pub gradient_tolerance: f64,
    pub initial_step: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub seed: u64,
    /// Number of seeded random starts added to the six constant starts.
    pub multistart: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            gradient_tolerance: 1e-8,
            initial_step: 1.0,
            armijo: 1e-4,
            backtrack: 0.5,
            seed: 0,
            multistart: 4,
        }
    }
}

impl MinimizeOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::arg("max_iterations must be positive"));
        }
        if !(self.gradient_tolerance > 0.0) || !(self.initial_step > 0.0) {
            return Err(Error::arg("gradient_tolerance and initial_step must be positive"));
        }
        if !(self.armijo > 0.0 && self.armijo <= 0.5) {
            return Err(Error::arg("armijo constant must lie in (0, 1/2]"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::arg("backtracking ratio must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// `v - (v·m) m`.
pub fn project_tangent(m: &Vec3, v: &Vec3) -> Result<Vec3> {
    let dev = (norm(m) - 1.0).abs();
    if !(dev <= 1e-6) {
        return Err(Error::InvalidState(format!("|m| deviates from 1 by {dev:e}")));
    }
    Ok(tangent(m, v))
}

#[inline]
fn tangent(m: &Vec3, v: &Vec3) -> Vec3 {
    sub(v, &scale(m, dot(v, m)))
}

/// `(m + v) / |m + v|`.
pub fn retract(m: &Vec3, v: &Vec3) -> Result<Vec3> {
    let s = add(m, v);
    let n = norm(&s);
    if !(n > 1e-12) {
        return Err(Error::StepCollapse { norm: n });
    }
    Ok(scale(&s, 1.0 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
    pub step: f64,
    /// Largest `| |m_j| - 1 |` of the iterate.
    pub unit_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeResult {
    pub nodes: Vec<Vec3>,
    pub breakdown: EnergyBreakdown,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl MinimizeResult {
    /// Energy non-increasing along the trace and every iterate unit within tolerance.
    pub fn satisfies_descent_contract(&self) -> bool {
        self.trace.windows(2).all(|w| w[1].energy <= w[0].energy)
            && self.trace.iter().all(|r| r.unit_deviation <= UNIT_TOLERANCE)
    }
}

pub fn minimize<F: EnergyFunctional + ?Sized>(
    functional: &F,
    start: Vec<Vec3>,
    options: &MinimizeOptions,
) -> Result<MinimizeResult> {
    minimize_observed(functional, start, options, &mut |_, _| {})
}

/// [`minimize`] with a callback invoked on every iterate (including the start).
pub fn minimize_observed<F: EnergyFunctional + ?Sized>(
    functional: &F,
    start: Vec<Vec3>,
    options: &MinimizeOptions,
    observer: &mut dyn FnMut(usize, &[Vec3]),
) -> Result<MinimizeResult> {
    options.validate()?;
    let n = functional.num_nodes();
    if start.len() != n {
        return Err(Error::arg(format!("start has {} nodes, functional expects {n}", start.len())));
    }
    check_unit(&start)?;

    let mut m = start;
    let mut energy = functional.energy(&m);
    if !energy.total.is_finite() {
        return Err(Error::Diverged { iteration: 0 });
    }
    let mut grad = vec![[0.0; 3]; n];
    let mut rgrad = vec![[0.0; 3]; n];
    let riemannian = |m: &[Vec3], grad: &mut [Vec3], out: &mut [Vec3]| {
        functional.gradient(m, grad);
        for ((o, g), mj) in out.iter_mut().zip(grad.iter()).zip(m) {
            *o = tangent(mj, g);
        }
    };
    riemannian(&m, &mut grad, &mut rgrad);

    let mut trial = vec![[0.0; 3]; n];
    let mut trial_rgrad = vec![[0.0; 3]; n];
    let mut step = options.initial_step;
    let mut last_step = 0.0;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    loop {
        let gnorm = rgrad.iter().map(norm).fold(0.0, f64::max);
        trace.push(TraceRow {
            iteration,
            energy: energy.total,
            gradient_norm: gnorm,
            step: last_step,
            unit_deviation: unit_deviation(&m),
        });
        observer(iteration, &m);
        if gnorm <= options.gradient_tolerance {
            converged = true;
            break;
        }
        if iteration >= options.max_iterations {
            break;
        }
        let gsq: f64 = rgrad.iter().map(|g| dot(g, g)).sum();

        let trial_energy = loop {
            for ((t, mj), gj) in trial.iter_mut().zip(&m).zip(&rgrad) {
                *t = retract(mj, &scale(gj, -step))?;
            }
            let e = functional.energy(&trial);
            if !e.total.is_finite() {
                return Err(Error::Diverged { iteration });
            }
            if e.total <= energy.total - options.armijo * step * gsq {
                break Some(e);
            }
            step *= options.backtrack;
            if step * gnorm < 1e-18 {
                break None;
            }
        };
        let Some(trial_energy) = trial_energy else {
            // no representable decrease left
            break;
        };

        riemannian(&trial, &mut grad, &mut trial_rgrad);
        let (mut ss, mut sy) = (0.0, 0.0);
        for j in 0..n {
            let s = sub(&trial[j], &m[j]);
            let y = sub(&trial_rgrad[j], &rgrad[j]);
            ss += dot(&s, &s);
            sy += dot(&s, &y);
        }
        last_step = step;
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (2.0 * step).min(1e12) };

        std::mem::swap(&mut m, &mut trial);
        std::mem::swap(&mut rgrad, &mut trial_rgrad);
        energy = trial_energy;
        iteration += 1;
    }

    Ok(MinimizeResult { nodes: m, breakdown: energy, iterations: iteration, converged, trace })
}

/// Constant starts `+e1, -e1, +e2, -e2, +e3, -e3` followed by
/// `options.multistart` seeded random fields.
pub fn multistart_starts(n_nodes: usize, options: &MinimizeOptions) -> Vec<Vec<Vec3>> {
    let mut starts = Vec::with_capacity(6 + options.multistart);
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let mut v = [0.0; 3];
            v[axis] = sign;
            starts.push(vec![v; n_nodes]);
        }
    }
    for k in 0..options.multistart {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed.wrapping_add(k as u64));
        starts.push((0..n_nodes).map(|_| random_unit_vector(&mut rng)).collect());
    }
    starts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistartResult {
    pub runs: Vec<MinimizeResult>,
    /// Index of the run with the lowest total energy (first on ties).
    pub best: usize,
}

impl MultistartResult {
    pub fn best_run(&self) -> &MinimizeResult {
        &self.runs[self.best]
    }

    pub fn into_best(mut self) -> MinimizeResult {
        self.runs.swap_remove(self.best)
    }
}

/// Lowest final energy, ties resolved by the lowest index.
pub fn select_best(energies: &[f64]) -> usize {
    let mut best = 0;
    for (i, &e) in energies.iter().enumerate() {
        if e < energies[best] {
            best = i;
        }
    }
    best
}

/// Runs [`minimize`] from every start concurrently and keeps the best.
pub fn minimize_from_starts<F: EnergyFunctional + ?Sized>(
    functional: &F,
    starts: Vec<Vec<Vec3>>,
    options: &MinimizeOptions,
) -> Result<MultistartResult> {
    if starts.is_empty() {
        return Err(Error::arg("no starting fields"));
    }
    let runs: Vec<MinimizeResult> =
        starts.into_par_iter().map(|s| minimize(functional, s, options)).collect::<Result<_>>()?;
    let energies: Vec<f64> = runs.iter().map(|r| r.breakdown.total).collect();
    let best = select_best(&energies);
    Ok(MultistartResult { runs, best })
}

pub fn minimize_multistart<F: EnergyFunctional + ?Sized>(
    functional: &F,
    options: &MinimizeOptions,
) -> Result<MultistartResult> {
    options.validate()?;
    minimize_from_starts(functional, multistart_starts(functional.num_nodes(), options), options)
}

/// Central-difference check of the analytic gradient along the retraction
/// curve `t ↦ R(m, t d)`. The direction is projected onto the tangent planes
/// first. Returns `|fd - analytic| / max(1, |analytic|)`.
pub fn fd_gradient_check<F: EnergyFunctional + ?Sized>(
    functional: &F,
    m: &[Vec3],
    direction: &[Vec3],
    h_fd: f64,
) -> Result<f64> {
    if !(1e-8..=1e-4).contains(&h_fd) {
        return Err(Error::arg(format!("h_fd must lie in [1e-8, 1e-4], got {h_fd}")));
    }
    if m.len() != functional.num_nodes() || direction.len() != m.len() {
        return Err(Error::arg("field and direction sizes must match the functional"));
    }
    check_unit(m)?;
    let d: Vec<Vec3> = m.iter().zip(direction).map(|(mj, dj)| tangent(mj, dj)).collect();
    let shifted =
        |t: f64| -> Result<Vec<Vec3>> { m.iter().zip(&d).map(|(mj, dj)| retract(mj, &scale(dj, t))).collect() };
    let fd = (functional.energy(&shifted(h_fd)?).total - functional.energy(&shifted(-h_fd)?).total) / (2.0 * h_fd);
    let mut grad = vec![[0.0; 3]; m.len()];
    functional.gradient(m, &mut grad);
    let analytic: f64 = grad.iter().zip(&d).map(|(g, dj)| dot(g, dj)).sum();
    Ok((fd - analytic).abs() / analytic.abs().max(1.0))
}

/// Writes `iteration,energy,gradient_norm,step` rows.
pub fn write_trace_csv<W: Write>(trace: &[TraceRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,energy,gradient_norm,step")?;
    for r in trace {
        writeln!(out, "{},{:e},{:e},{:e}", r.iteration, r.energy, r.gradient_norm, r.step)?;
    }
    Ok(())
}
