//! One time step of the angular-momentum midpoint scheme
//!
//! ```text
//! (dᵐ⁺¹ − dᵐ)/Δt = d^{m+½} × w^{m+½}
//! (wᵐ⁺¹ − wᵐ)/Δt = Δ_h d^{m+½} × d^{m+½}
//! ```
//!
//! solved by the length-preserving fixed-point iteration: freeze the
//! angular-momentum midpoint, solve the (linear) director equation exactly
//! with [`rotation::rotate`](crate::rotation::rotate), then update `w` from
//! the resulting director midpoint. The iteration stops once
//! `‖w^{s+1} − w^s‖ + ‖∇_h d^{s+1} − ∇_h d^s‖ < tol` (both `L²`).

use crate::error::{Error, Result};
use crate::grid::{self, Grid, VectorField};
use crate::par;
use crate::rotation::rotate;
use crate::scalar::{Scalar, Vec3};

/// Director and angular momentum at time level `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverState<T: Scalar> {
    d: VectorField<T>,
    w: VectorField<T>,
    step_index: u64,
    t: T,
}

impl<T: Scalar> SolverState<T> {
    /// Checks that `d` and `w` share a grid and that every director has unit length.
    pub fn new(d: VectorField<T>, w: VectorField<T>, step_index: u64, t: T) -> Result<Self> {
        d.check_same_grid(&w)?;
        d.check_finite()?;
        w.check_finite()?;
        let dev = d.max_unit_deviation();
        if dev > unit_tolerance::<T>() {
            return Err(Error::InvalidArgument(format!(
                "director field is not unit length (max deviation {dev:e})"
            )));
        }
        Ok(SolverState { d, w, step_index, t })
    }

    pub(crate) fn from_parts_unchecked(d: VectorField<T>, w: VectorField<T>, step_index: u64, t: T) -> Self {
        SolverState { d, w, step_index, t }
    }

    #[inline]
    pub fn d(&self) -> &VectorField<T> {
        &self.d
    }

    #[inline]
    pub fn w(&self) -> &VectorField<T> {
        &self.w
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        self.d.grid()
    }

    #[inline]
    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    #[inline]
    pub fn t(&self) -> T {
        self.t
    }

    pub fn into_parts(self) -> (VectorField<T>, VectorField<T>) {
        (self.d, self.w)
    }
}

/// Length tolerance accepted for incoming director fields.
pub(crate) fn unit_tolerance<T: Scalar>() -> T {
    T::epsilon() * T::lit(4096.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport<T> {
    /// Number of fixed-point map evaluations performed.
    pub iterations: usize,
    /// Stopping-criterion value of the accepted iterate.
    pub residual: T,
    pub converged: bool,
    /// Stopping-criterion value after every iteration.
    pub residual_history: Vec<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions<T> {
    pub tol: T,
    pub max_iter: usize,
}

impl<T: Scalar> FixedPointOptions<T> {
    pub const DEFAULT_MAX_ITER: usize = 200;

    /// `tol = h²`, `max_iter = 200`.
    pub fn for_grid(grid: &Grid<T>) -> Self {
        FixedPointOptions {
            tol: grid.h() * grid.h(),
            max_iter: Self::DEFAULT_MAX_ITER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > T::zero() && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// `‖w_next − w_prev‖_{L²} + ‖∇_h d_next − ∇_h d_prev‖_{L²}` for iterates
/// given as `(d, w)` pairs.
pub fn residual<T: Scalar>(
    prev: (&VectorField<T>, &VectorField<T>),
    next: (&VectorField<T>, &VectorField<T>),
) -> Result<T> {
    prev.0.check_same_grid(prev.1)?;
    prev.0.check_same_grid(next.0)?;
    prev.0.check_same_grid(next.1)?;
    let dw = next.1.sub(prev.1)?;
    let dd = next.0.sub(prev.0)?;
    Ok(grid::l2_norm(&dw) + grid::gradient_norm_sq(&dd).sqrt())
}

/// Advances `state` by one step of size `dt`.
///
/// A non-converged iteration is not an error: the report carries
/// `converged = false` and the last iterate is returned. Non-finite iterates
/// are a hard [`Error::NumericalFailure`].
pub fn fixed_point_step<T: Scalar>(
    state: &SolverState<T>,
    dt: T,
    opts: &FixedPointOptions<T>,
) -> Result<(SolverState<T>, StepReport<T>)> {
    FixedPointSolver::new(*opts)?.step(state, dt)
}

struct Scratch<T> {
    d_mid: Vec<Vec3<T>>,
    d_next: Vec<Vec3<T>>,
    w_next: Vec<Vec3<T>>,
    diff: Vec<Vec3<T>>,
}

/// Reusable stepper that keeps its work buffers between steps.
pub struct FixedPointSolver<T: Scalar> {
    opts: FixedPointOptions<T>,
    scratch: Option<(Grid<T>, Scratch<T>)>,
}

impl<T: Scalar> FixedPointSolver<T> {
    pub fn new(opts: FixedPointOptions<T>) -> Result<Self> {
        opts.validate()?;
        Ok(FixedPointSolver { opts, scratch: None })
    }

    pub fn options(&self) -> &FixedPointOptions<T> {
        &self.opts
    }

    fn scratch_for(&mut self, grid: &Grid<T>) -> &mut Scratch<T> {
        let stale = !matches!(&self.scratch, Some((g, _)) if g.same_as(grid));
        if stale {
            let n = grid.node_count();
            let z = vec![Vec3::zero(); n];
            self.scratch = Some((
                *grid,
                Scratch {
                    d_mid: z.clone(),
                    d_next: z.clone(),
                    w_next: z.clone(),
                    diff: z,
                },
            ));
        }
        &mut self.scratch.as_mut().expect("just filled").1
    }

    /// One time step; `dt` may be negative to integrate backwards.
    pub fn step(&mut self, state: &SolverState<T>, dt: T) -> Result<(SolverState<T>, StepReport<T>)> {
        if !(dt != T::zero() && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be non-zero and finite, got {dt}")));
        }
        let grid = *state.grid();
        let opts = self.opts;
        let vol = grid.cell_volume();
        let d0 = state.d.values();
        let w0 = state.w.values();
        let mut d_iter = d0.to_vec();
        let mut w_iter = w0.to_vec();
        let s = self.scratch_for(&grid);

        let mut history = Vec::new();
        let mut converged = false;
        let mut res = T::infinity();
        for it in 0..opts.max_iter {
            // director: exact midpoint solve with frozen w̄ = (wᵐ + w^s)/2
            {
                let w_iter = &w_iter;
                par::fill_nodes2(&mut s.d_next, &mut s.d_mid, |p, dn, dm| {
                    let w_bar = (w0[p] + w_iter[p]) * T::half();
                    let next = rotate(dt, w_bar, d0[p]);
                    *dn = next;
                    *dm = (d0[p] + next) * T::half();
                });
            }
            // angular momentum: w^{s+1} = wᵐ + Δt (Δ_h d_mid × d_mid)
            grid::laplacian_slice(&grid, &s.d_mid, &mut s.w_next);
            {
                let d_mid = &s.d_mid;
                par::update_nodes(&mut s.w_next, |p, v| *v = w0[p] + v.cross(d_mid[p]) * dt);
            }

            let mut dw_sq = T::zero();
            for p in 0..s.w_next.len() {
                let e = s.w_next[p] - w_iter[p];
                dw_sq += e.norm_sq();
                s.diff[p] = s.d_next[p] - d_iter[p];
            }
            let dg_sq = grid::gradient_norm_sq_slice(&grid, &s.diff);
            res = (dw_sq * vol).sqrt() + dg_sq.sqrt();
            if !res.is_finite() {
                return Err(Error::NumericalFailure {
                    step: state.step_index,
                    iteration: it + 1,
                    what: "non-finite iterate",
                });
            }
            history.push(res);
            std::mem::swap(&mut d_iter, &mut s.d_next);
            std::mem::swap(&mut w_iter, &mut s.w_next);
            if res < opts.tol {
                converged = true;
                break;
            }
        }

        let next = SolverState {
            d: VectorField::from_vec_unchecked(grid, d_iter),
            w: VectorField::from_vec_unchecked(grid, w_iter),
            step_index: state.step_index + 1,
            t: state.t + dt,
        };
        let report = StepReport {
            iterations: history.len(),
            residual: res,
            converged,
            residual_history: history,
        };
        Ok((next, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::integrator::energy;
    use crate::random::{random_vector_field, smooth_unit_field};
    use crate::rotation::cayley;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus(m: usize) -> Grid<f64> {
        Grid::unit(2, m, Boundary::Periodic).unwrap()
    }

    fn smooth_state(m: usize, seed: u64) -> SolverState<f64> {
        let g = torus(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = smooth_unit_field(&g, &mut rng);
        let w = VectorField::from_fn(g, |x| {
            let s = (std::f64::consts::TAU * (x[0] + 2.0 * x[1])).sin();
            Vec3::new(0.2 * s, -0.1, 0.3 * s)
        });
        SolverState::new(d, w, 0, 0.0).unwrap()
    }

    #[test]
    fn stationary_state_needs_one_iteration() {
        let g = torus(8);
        let s = SolverState::new(VectorField::constant(g, Vec3::new(0.0, 0.0, 1.0)), VectorField::zeros(g), 3, 1.5)
            .unwrap();
        let (next, rep) = fixed_point_step(&s, 0.05, &FixedPointOptions::for_grid(&g)).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.residual, 0.0);
        assert!(rep.converged);
        assert_eq!(next.d(), s.d());
        assert_eq!(next.w(), s.w());
        assert_eq!(next.step_index(), 4);
        assert!((next.t() - 1.55).abs() < 1e-15);
    }

    #[test]
    fn constant_director_precesses_about_constant_momentum() {
        let g = torus(16);
        let dt = 0.5 * g.h();
        let omega = 2.0;
        let d0 = Vec3::new(1.0, 0.0, 0.0);
        let w = Vec3::new(0.0, 0.0, omega);
        let s = SolverState::new(VectorField::constant(g, d0), VectorField::constant(g, w), 0, 0.0).unwrap();
        let (next, rep) = fixed_point_step(&s, dt, &FixedPointOptions::for_grid(&g)).unwrap();
        // Δ_h of a constant field vanishes, so w is untouched and the first
        // sweep is already a fixed point
        assert_eq!(rep.iterations, 1);
        assert_eq!(next.w(), s.w());
        let angle = -2.0 * (dt * omega / 2.0).atan();
        let expect = Vec3::new(angle.cos(), angle.sin(), 0.0);
        for v in next.d().values() {
            assert!((*v - expect).max_abs() < 1e-15);
            assert!((*v - cayley(dt, w).mul_vec(d0)).max_abs() < 1e-15);
        }
    }

    #[test]
    fn residual_examples() {
        let g = torus(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = smooth_unit_field(&g, &mut rng);
        let w = random_vector_field(&g, &mut rng);
        assert_eq!(residual((&d, &w), (&d, &w)).unwrap(), 0.0);

        let c = Vec3::new(0.3, -0.4, 1.2);
        let shifted = w.map(|v| v + c);
        let r = residual((&d, &w), (&d, &shifted)).unwrap();
        assert!((r - c.norm()).abs() < 1e-13);

        let pert = random_vector_field(&g, &mut rng).scale(1e-3);
        let d2 = d.axpy(1.0, &pert).unwrap();
        let w2 = w.axpy(-2.0, &pert).unwrap();
        let h = g.h();
        let m = g.m();
        let mut wsum = 0.0;
        let mut gsum = 0.0;
        for i in 0..m {
            for j in 0..m {
                let p = g.index(i, j, 0);
                wsum += (w2.values()[p] - w.values()[p]).norm_sq();
                let e = |q: usize| d2.values()[q] - d.values()[q];
                let gx = (e(p) - e(g.index((i + m - 1) % m, j, 0))) * (1.0 / h);
                let gy = (e(p) - e(g.index(i, (j + m - 1) % m, 0))) * (1.0 / h);
                gsum += gx.norm_sq() + gy.norm_sq();
            }
        }
        let naive = (h * h * wsum).sqrt() + (h * h * gsum).sqrt();
        let r = residual((&d, &w), (&d2, &w2)).unwrap();
        assert!((r - naive).abs() <= 1e-12 * naive);
    }

    #[test]
    fn residual_decays_geometrically_on_smooth_data() {
        let s = smooth_state(32, 11);
        let dt = 0.5 * s.grid().h();
        let opts = FixedPointOptions { tol: 1e-14, max_iter: 200 };
        let (_, rep) = fixed_point_step(&s, dt, &opts).unwrap();
        assert!(rep.converged);
        let h = &rep.residual_history;
        assert!(h.len() >= 3);
        let mut ratios = Vec::new();
        for k in 1..h.len() {
            if h[k - 1] > 1e-12 {
                ratios.push(h[k] / h[k - 1]);
            }
        }
        assert!(!ratios.is_empty());
        assert!(ratios.iter().all(|&q| q < 0.7), "{ratios:?}");
    }

    #[test]
    fn one_step_keeps_unit_length_and_energy() {
        let s = smooth_state(32, 12);
        let dt = 0.5 * s.grid().h();
        let opts = FixedPointOptions { tol: 1e-13, max_iter: 200 };
        let (next, rep) = fixed_point_step(&s, dt, &opts).unwrap();
        assert!(rep.converged);
        assert!(next.d().max_unit_deviation() <= 1e-12);
        let (e0, e1) = (energy(&s), energy(&next));
        assert!((e1 - e0).abs() <= 1e-12 * e0.max(1.0), "{e0} -> {e1}");
    }

    #[test]
    fn reuse_matches_fresh_solver() {
        let s = smooth_state(16, 13);
        let dt = 0.5 * s.grid().h();
        let opts = FixedPointOptions::for_grid(s.grid());
        let mut solver = FixedPointSolver::new(opts).unwrap();
        let a = solver.step(&s, dt).unwrap().0;
        let b = solver.step(&a, dt).unwrap().0;
        let a2 = fixed_point_step(&s, dt, &opts).unwrap().0;
        let b2 = fixed_point_step(&a2, dt, &opts).unwrap().0;
        assert_eq!(b, b2);
        // a different grid forces fresh buffers
        let other = smooth_state(8, 14);
        let c = solver.step(&other, 0.01).unwrap().0;
        assert_eq!(c, fixed_point_step(&other, 0.01, &opts).unwrap().0);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let g = torus(8);
        let mut w = VectorField::zeros(g);
        w.values_mut()[3] = Vec3::new(f64::NAN, 0.0, 0.0);
        let d = VectorField::constant(g, Vec3::new(1.0, 0.0, 0.0));
        assert!(SolverState::new(d.clone(), w.clone(), 0, 0.0).is_err());

        let s = SolverState::from_parts_unchecked(d, w, 0, 0.0);
        let err = fixed_point_step(&s, 0.1, &FixedPointOptions::for_grid(&g)).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { iteration: 1, .. }), "{err}");
    }

    #[test]
    fn non_unit_director_is_rejected() {
        let g = torus(4);
        let d = VectorField::constant(g, Vec3::new(1.0, 1e-3, 0.0));
        assert!(SolverState::new(d, VectorField::zeros(g), 0, 0.0).is_err());
    }

    #[test]
    fn exhausted_budget_is_reported_not_raised() {
        let s = smooth_state(32, 15);
        let opts = FixedPointOptions { tol: 1e-15, max_iter: 2 };
        let (_, rep) = fixed_point_step(&s, 0.5 * s.grid().h(), &opts).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 2);
        assert!(rep.residual >= 1e-15);
    }

    #[test]
    fn invalid_options_and_step() {
        assert!(FixedPointSolver::new(FixedPointOptions { tol: 0.0, max_iter: 5 }).is_err());
        assert!(FixedPointSolver::new(FixedPointOptions { tol: 1e-3, max_iter: 0 }).is_err());
        let s = smooth_state(8, 16);
        let mut solver = FixedPointSolver::new(FixedPointOptions::for_grid(s.grid())).unwrap();
        assert!(solver.step(&s, 0.0).is_err());
        assert!(solver.step(&s, f64::NAN).is_err());
    }

    #[test]
    fn single_precision_step() {
        let g = Grid::<f32>::unit(2, 16, Boundary::Neumann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = smooth_unit_field(&g, &mut rng);
        let s = SolverState::new(d, VectorField::zeros(g), 0, 0.0).unwrap();
        let (next, rep) = fixed_point_step(&s, 0.5 * g.h(), &FixedPointOptions { tol: 1e-4, max_iter: 50 }).unwrap();
        assert!(rep.converged);
        assert!(next.d().max_unit_deviation() < 1e-5);
    }
}
