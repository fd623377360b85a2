//! Quick self-test of the structural properties on a small grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixedpoint::{FixedPointOptions, FixedPointSolver, SolverState};
use crate::grid::{self, Boundary, Grid, VectorField};
use crate::integrator::{self, energy};
use crate::random::{random_unit_field, random_unit_vector, random_vector_field, smooth_unit_field};
use crate::rotation::{cayley, Mat3};
use crate::scalar::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Measured value.
    pub value: f64,
    pub limit: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<28} {:.3e} (limit {:.1e})", self.name, self.value, self.limit)
    }
}

fn outcome(name: &'static str, value: f64, limit: f64) -> CheckOutcome {
    CheckOutcome {
        name,
        passed: value <= limit,
        value,
        limit,
    }
}

/// Runs every check on `M × M` grids with the given seed.
pub fn run_checks(m: usize, seed: u64) -> crate::Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let torus = Grid::unit(2, m, Boundary::Periodic)?;
    let square = Grid::unit(2, m, Boundary::Neumann)?;
    let mut out = Vec::new();

    let (mut orth, mut implicit) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let dt = rng.gen_range(1e-4..1.0);
        let w = random_unit_vector::<f64, _>(&mut rng) * rng.gen_range(0.0..100.0);
        let d = random_unit_vector::<f64, _>(&mut rng);
        let v = cayley(dt, w);
        orth = orth.max((v.transpose() * v).max_abs_diff(&Mat3::identity()));
        let next = v.mul_vec(d);
        let r = (next - d) * (1.0 / dt) - ((d + next) * 0.5).cross(w);
        implicit = implicit.max(r.max_abs() / (1.0 + w.norm()));
    }
    out.push(outcome("rotation orthogonality", orth, 1e-14));
    out.push(outcome("rotation implicit relation", implicit, 1e-13));

    let mut sbp = 0.0f64;
    let mut identity = 0.0f64;
    for g in [torus, square] {
        let u = random_vector_field(&g, &mut rng);
        let v = random_vector_field(&g, &mut rng);
        let lhs: f64 = grid::inner_product(&grid::laplacian(&u), &v)?;
        let gu = grid::vector_gradient(&u);
        let gv = grid::vector_gradient(&v);
        let mut rhs = 0.0;
        for a in 0..2 {
            rhs -= grid::inner_product(&gu[a], &gv[a])?;
        }
        sbp = sbp.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        let d = random_unit_field(&g, &mut rng);
        let a = integrator::cross_laplacian(&d);
        let b = integrator::cross_laplacian_divergence_form(&d);
        let diff = a.sub(&b)?;
        let scale = g.h() * g.h();
        identity = identity.max(diff.values().iter().map(|x| x.max_abs()).fold(0.0, f64::max) * scale);
    }
    out.push(outcome("summation by parts", sbp, 1e-12));
    out.push(outcome("cross-laplacian identity", identity, 1e-12));

    let d = smooth_unit_field(&torus, &mut rng);
    let w = VectorField::from_fn(torus, |x| Vec3::new(0.3 * (std::f64::consts::TAU * x[1]).sin(), 0.1, 0.0));
    let s0 = SolverState::new(d, w, 0, 0.0)?;
    let dt = 0.5 * torus.h();
    let mut solver = FixedPointSolver::new(FixedPointOptions { tol: 1e-13, max_iter: 200 })?;
    let e0 = energy(&s0);
    let (mut len, mut drift) = (0.0f64, 0.0f64);
    let mut s = s0.clone();
    for _ in 0..20 {
        s = solver.step(&s, dt)?.0;
        len = len.max(s.d().max_unit_deviation());
        drift = drift.max((energy(&s) - e0).abs() / e0);
    }
    out.push(outcome("length preservation", len, 1e-12));
    out.push(outcome("energy conservation", drift, 1e-10));
    for _ in 0..20 {
        s = solver.step(&s, -dt)?.0;
    }
    let back = s.d().sub(s0.d())?.values().iter().chain(s.w().sub(s0.w())?.values()).map(|v| v.max_abs()).fold(0.0, f64::max);
    out.push(outcome("time reversal", back, 1e-8));
    Ok(out)
}
