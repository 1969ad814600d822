//! Acceptance checks. Prints one PASS/FAIL line per check and exits nonzero
//! if any check fails.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use magjunction::limit_wire_film::{constant_samples, minimize_wire_film, WireFilmParams};
use magjunction::limit_wire_wire::{minimize_wire_wire, JoinedWireField, WireWireParams};
use magjunction::magnetostatic3d::{convergence_study, GridOptions, StructureKind};
use magjunction::mesh2d::{polygon_from_disc, triangulate, triangulate_section, CrossSection};
use magjunction::shape_coeffs::{coefficients, superposition_check, CoefficientParams, ShapeCoefficients};
use magjunction::sphere_field::{
    fd_gradient_check, minimize_observed, multistart_starts, AnisotropyModel, DirectorField2D, EnergyFunctional,
    MinimizeOptions, MinimizeResult, UNIT_TOLERANCE,
};
use magjunction::vector::{norm, Vec3};

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        println!("{} [{id}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failures += 1;
        }
    }
}

fn params() -> CoefficientParams {
    CoefficientParams { r_levels: vec![8.0, 16.0], h: 0.05, tol: 1e-10, refinement_check: false }
}

fn l_shape() -> CrossSection {
    CrossSection::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.5], [0.5, 0.5], [0.5, 1.0], [0.0, 1.0]]).unwrap()
}

fn skew_triangle() -> CrossSection {
    CrossSection::new(vec![[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]]).unwrap()
}

fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let t = golden * i as f64;
            [r * t.cos(), r * t.sin(), z]
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn main() {
    let mut report = Report { failures: 0 };
    let mut all_runs: Vec<MinimizeResult> = Vec::new();

    // disc
    let disc = polygon_from_disc([0.0, 0.0], 1.0, 64).unwrap();
    let t = Instant::now();
    let disc_c = coefficients(&disc, &params()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    report.check(
        "01",
        "disc coefficients",
        rel(disc_c.alpha, FRAC_PI_2) <= 0.02
            && rel(disc_c.beta, FRAC_PI_2) <= 0.02
            && disc_c.gamma.abs() <= 0.02 * disc_c.alpha
            && secs <= 60.0,
        format!(
            "alpha={:.6} beta={:.6} gamma={:.2e} (pi/2={:.6}) in {secs:.1}s",
            disc_c.alpha, disc_c.beta, disc_c.gamma, FRAC_PI_2
        ),
    );

    // superposition
    let hexagon = polygon_from_disc([0.0, 0.0], 1.0, 6).unwrap();
    let hex_mesh = triangulate(&hexagon, 8.0, 0.05).unwrap();
    let disc_sup = superposition_check(&hex_mesh, (3.0, -2.0), 1e-12).unwrap();
    report.check(
        "02",
        "superposition on hexagon",
        disc_sup <= 1e-8,
        format!("relative energy-norm discrepancy {disc_sup:.2e} for c=(3,-2)"),
    );

    // dilation and translation
    let hex_c = coefficients(&hexagon, &params()).unwrap();
    let mut ok = true;
    let mut detail = String::new();
    for t in [0.5, 2.0] {
        let c = coefficients(&hexagon.scaled(t).unwrap(), &params()).unwrap();
        let ea = rel(c.alpha, t * t * hex_c.alpha);
        let eb = rel(c.beta, t * t * hex_c.beta);
        ok &= ea <= 0.01 && eb <= 0.01;
        detail += &format!("t={t}: alpha err {ea:.2e} beta err {eb:.2e}; ");
    }
    let shifted = coefficients(&hexagon.translated([0.7, -1.3]), &params()).unwrap();
    let shift_err = (shifted.alpha - hex_c.alpha)
        .abs()
        .max((shifted.beta - hex_c.beta).abs())
        .max((shifted.gamma - hex_c.gamma).abs());
    ok &= shift_err <= 2.0 * hex_c.error_estimate;
    detail += &format!("shift diff {shift_err:.2e} vs 2*error_estimate {:.2e}", 2.0 * hex_c.error_estimate);
    report.check("03", "dilation law and translation invariance", ok, detail);

    // square
    let neg_square = CrossSection::rectangle([-1.0, -1.0], [0.0, 0.0]).unwrap();
    let square_c = coefficients(&neg_square, &params()).unwrap();
    report.check(
        "04",
        "square symmetry",
        rel(square_c.alpha, square_c.beta) <= 0.01 && square_c.gamma.abs() <= 0.02 * square_c.alpha,
        format!("alpha={:.6} beta={:.6} gamma={:.2e}", square_c.alpha, square_c.beta, square_c.gamma),
    );

    // gamma paths
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut sets = vec![&disc_c, &hex_c, &square_c];
    let l_c = coefficients(&l_shape(), &params()).unwrap();
    let tri_c = coefficients(&skew_triangle(), &params()).unwrap();
    sets.push(&l_c);
    sets.push(&tri_c);
    for c in sets {
        for l in &c.levels {
            let diff = (l.gamma - l.gamma_boundary).abs();
            // sections with γ = 0 by symmetry: both paths must vanish to rounding
            let floor = 1e-10 * (l.alpha + l.beta);
            let pass = diff <= 0.02 * l.gamma.abs() || (l.gamma.abs() <= floor && l.gamma_boundary.abs() <= floor);
            ok &= pass;
            if l.gamma.abs() > floor {
                worst = worst.max(diff / l.gamma.abs());
            }
        }
    }
    report.check(
        "05",
        "gamma definition vs boundary form",
        ok,
        format!("worst relative gap {worst:.2e} (L-shape gamma={:.4}, triangle gamma={:.4})", l_c.gamma, tri_c.gamma),
    );

    // gradients
    let theta = polygon_from_disc([0.0, 0.0], 1.0, 64).unwrap();
    let film_mesh = triangulate_section(&theta, 0.1).unwrap();
    let nv = film_mesh.num_vertices();
    let n = 32;
    let wf = WireFilmParams {
        lambda: 0.7,
        theta_area: theta.area(),
        coeffs: ShapeCoefficients::exact(disc_c.alpha, disc_c.beta, disc_c.gamma),
        anisotropy: AnisotropyModel::uniaxial([0.3, -0.2, 1.0], 0.9).unwrap(),
        f_a: (0..=n).map(|j| [0.2, (j as f64 * 0.3).sin(), 1.0]).collect(),
        f_b: (0..nv).map(|j| [(j as f64 * 0.1).cos(), 0.4, -0.3]).collect(),
        film_mesh: film_mesh.clone(),
    };
    let ww = WireWireParams {
        lambda: 0.7,
        coeffs_a: ShapeCoefficients::exact(square_c.alpha, square_c.beta, square_c.gamma),
        coeffs_b: ShapeCoefficients::exact(square_c.alpha, square_c.beta, square_c.gamma),
        anisotropy: AnisotropyModel::uniaxial([1.0, 1.0, 0.0], 0.5).unwrap(),
        f_a: (0..=n).map(|j| [0.0, 0.1 * j as f64, 1.0]).collect(),
        f_bl: (0..=n).map(|j| [1.0, -0.05 * j as f64, 0.3]).collect(),
    };
    let wire_f = wf.wire_functional().unwrap();
    let film_f = wf.film_functional().unwrap();
    let coupled_f = ww.functional().unwrap();
    let mut worst = [0.0f64; 3];
    for seed in 0..10u64 {
        let checks: [(&dyn EnergyFunctional, usize); 3] = [(&wire_f, 0), (&film_f, 1), (&coupled_f, 2)];
        for (f, slot) in checks {
            let m = DirectorField2D::random(f.num_nodes(), seed);
            let d = DirectorField2D::random(f.num_nodes(), seed + 1000);
            let e = fd_gradient_check(f, m.nodes(), d.nodes(), 1e-6).unwrap();
            worst[slot] = worst[slot].max(e);
        }
    }
    report.check(
        "06",
        "finite-difference gradient check",
        worst.iter().all(|&e| e <= 1e-5),
        format!("worst errors wire {:.2e} film {:.2e} coupled {:.2e}", worst[0], worst[1], worst[2]),
    );

    // wire-film free case
    let free = WireFilmParams {
        lambda: 1.0,
        anisotropy: AnisotropyModel::Zero,
        f_a: constant_samples(n + 1, [0.0; 3]),
        f_b: constant_samples(nv, [0.0; 3]),
        ..wf.clone()
    };
    let opts = MinimizeOptions::default();
    let res = minimize_wire_film(&free, &opts).unwrap();
    let wire = res.wire.best_run();
    let film = res.film.best_run();
    let sign = wire.nodes[0][2].signum();
    let wire_dev = wire.nodes.iter().map(|v| v[0].abs().max(v[1].abs()).max((v[2] - sign).abs())).fold(0.0, f64::max);
    let film_m3 = film.nodes.iter().map(|v| v[2].abs()).fold(0.0, f64::max);
    report.check(
        "07",
        "wire-film free minimizers",
        wire.breakdown.total <= 1e-6 && wire_dev <= 1e-3 && film.breakdown.total <= 1e-6 && film_m3 <= 1e-3,
        format!(
            "wire E={:.2e} |m-(0,0,{sign})|={wire_dev:.2e}; film E={:.2e} max|m3|={film_m3:.2e}",
            wire.breakdown.total, film.breakdown.total
        ),
    );
    all_runs.extend(res.wire.runs.iter().cloned());
    all_runs.extend(res.film.runs.iter().cloned());

    // decoupling
    let base = minimize_wire_film(&wf, &opts).unwrap();
    let mut pb = wf.clone();
    pb.f_b.iter_mut().for_each(|v| v[2] += 0.5);
    let with_b = minimize_wire_film(&pb, &opts).unwrap();
    let mut pa = wf.clone();
    pa.f_a.iter_mut().for_each(|v| v[0] += 0.5);
    let with_a = minimize_wire_film(&pa, &opts).unwrap();
    let ok =
        base.wire == with_b.wire && base.film != with_b.film && base.film == with_a.film && base.wire != with_a.wire;
    report.check(
        "08",
        "wire and film decouple",
        ok,
        format!(
            "F_b perturbed: wire identical={} film changed={}; F_a perturbed: film identical={} wire changed={}",
            base.wire == with_b.wire,
            base.film != with_b.film,
            base.film == with_a.film,
            base.wire != with_a.wire
        ),
    );
    for r in [&base, &with_b, &with_a] {
        all_runs.extend(r.wire.runs.iter().cloned());
        all_runs.extend(r.film.runs.iter().cloned());
    }

    // wire-wire free case
    let alpha = square_c.alpha;
    let sq = ShapeCoefficients::exact(square_c.alpha, square_c.beta, square_c.gamma);
    let wfree = WireWireParams {
        lambda: 100.0,
        coeffs_a: sq.clone(),
        coeffs_b: sq.clone(),
        anisotropy: AnisotropyModel::Zero,
        f_a: constant_samples(65, [0.0; 3]),
        f_bl: constant_samples(65, [0.0; 3]),
    };
    let oracle = fibonacci_sphere(400_000)
        .iter()
        .map(|c| 0.5 * (sq.form(c[0], c[1]) + sq.form(c[1], c[2])))
        .fold(f64::INFINITY, f64::min);
    let result = minimize_wire_wire(&wfree, &opts).unwrap();
    let functional = wfree.functional().unwrap();
    let mut junction_ok = true;
    let mut observed_runs = Vec::new();
    for start in multistart_starts(functional.num_nodes(), &opts) {
        let run = minimize_observed(&functional, start, &opts, &mut |_, m| {
            let f = JoinedWireField::from_storage(m.to_vec(), 64, 64).unwrap();
            junction_ok &= f.m_a()[0] == f.m_b()[0];
        })
        .unwrap();
        observed_runs.push(run);
    }
    let same = observed_runs == result.runs.runs;
    let e = result.breakdown.total;
    let c2 = result.field.junction()[1];
    report.check(
        "09",
        "wire-wire free minimum",
        rel(e, 0.5 * alpha) <= 1e-3 && rel(e, oracle) <= 1e-3 && c2.abs() <= 1e-3 && junction_ok && same,
        format!(
            "E={e:.6} alpha/2={:.6} constant-field oracle={oracle:.6} |c2|={:.1e} junction exact at every iterate={junction_ok} (lambda=100)",
            0.5 * alpha,
            c2.abs()
        ),
    );
    all_runs.extend(observed_runs);

    // 3D trend
    let unit_square_c = coefficients(&CrossSection::unit_square(), &params()).unwrap();
    let t = Instant::now();
    let table = convergence_study(
        StructureKind::WireFilm,
        Some(&CrossSection::unit_square()),
        [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
        &[0.4, 0.2, 0.1],
        &unit_square_c,
        &GridOptions::default(),
    )
    .unwrap();
    let secs = t.elapsed().as_secs_f64();
    let errs: Vec<String> = table.rows.iter().map(|r| format!("h={} err={:.4}", r.h, r.rel_error)).collect();
    let last = table.rows.last().unwrap().rel_error;
    report.check(
        "10",
        "3D magnetostatic trend",
        table.monotone && last <= 0.25 && secs <= 600.0,
        format!("limit={:.4}; {} in {secs:.1}s", table.rows[0].limit, errs.join(", ")),
    );

    // descent contract
    let mut worst_dev = 0.0f64;
    let mut increasing = 0;
    let mut iterates = 0;
    for run in &all_runs {
        for w in run.trace.windows(2) {
            if w[1].energy > w[0].energy {
                increasing += 1;
            }
        }
        for row in &run.trace {
            worst_dev = worst_dev.max(row.unit_deviation);
        }
        iterates += run.trace.len();
        let final_dev = run.nodes.iter().map(|v| (norm(v) - 1.0).abs()).fold(0.0, f64::max);
        worst_dev = worst_dev.max(final_dev);
    }
    report.check(
        "11",
        "descent contract",
        increasing == 0 && worst_dev <= UNIT_TOLERANCE,
        format!(
            "{} runs, {iterates} iterates, {increasing} energy increases, worst ||m|-1| {worst_dev:.1e}",
            all_runs.len()
        ),
    );

    if report.failures > 0 {
        println!("{} check(s) failed", report.failures);
        std::process::exit(1);
    }
}
