//! Time marching: initial data, energies, per-step diagnostics and the run loop.

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPointOptions, FixedPointSolver, SolverState, StepReport};
use crate::grid::{self, VectorField};
use crate::scalar::{Scalar, Vec3};

/// How the initial time derivative is supplied.
#[derive(Clone, Debug)]
pub enum InitialRate<T: Scalar> {
    /// Sampled `d_t(0, x)`; the angular momentum becomes `d_t × d`.
    DirectorRate(VectorField<T>),
    /// Angular momentum given directly.
    AngularMomentum(VectorField<T>),
    /// `w ≡ 0`.
    AtRest,
}

/// Builds the discrete initial state from node samples.
///
/// Director samples are renormalised to unit length (a node sample of a
/// unit field is unit up to rounding; cell averages would not be).
pub fn initialize<T: Scalar>(d0: &VectorField<T>, rate: InitialRate<T>) -> Result<SolverState<T>> {
    let mut d = d0.clone();
    for (p, v) in d.values_mut().iter_mut().enumerate() {
        *v = v
            .normalized()
            .ok_or_else(|| Error::InvalidArgument(format!("director sample at node {p} has zero length")))?;
    }
    let w = match rate {
        InitialRate::DirectorRate(dt) => dt.cross(&d)?,
        InitialRate::AngularMomentum(w) => {
            d.check_same_grid(&w)?;
            w
        }
        InitialRate::AtRest => VectorField::zeros(*d.grid()),
    };
    SolverState::new(d, w, 0, T::zero())
}

/// `E = ½ ∫ |∇_h d|² + |w|² dx`.
pub fn energy<T: Scalar>(state: &SolverState<T>) -> T {
    let w = grid::l2_norm(state.w());
    T::half() * (grid::gradient_norm_sq(state.d()) + w * w)
}

/// `H = ½ ∫ |D_t d|² + |∇_h d|² dx` with `D_t d = (d_next − d)/Δt`.
pub fn kinetic_energy<T: Scalar>(state: &SolverState<T>, next: &SolverState<T>, dt: T) -> Result<T> {
    let rate = next.d().sub(state.d())?.scale(dt.recip());
    Ok(kinetic_energy_with_rate(state, &rate))
}

fn kinetic_energy_with_rate<T: Scalar>(state: &SolverState<T>, rate: &VectorField<T>) -> T {
    let r = grid::l2_norm(rate);
    T::half() * (r * r + grid::gradient_norm_sq(state.d()))
}

/// `‖∇_h d‖_{L∞}`: the largest node-wise Frobenius norm of the backward gradient.
pub fn grad_max<T: Scalar>(state: &SolverState<T>) -> T {
    grid::pointwise_gradient_norm(state.d())
        .values()
        .iter()
        .copied()
        .fold(T::zero(), T::max)
}

/// `d × Δ_h d`, node by node.
pub fn cross_laplacian<T: Scalar>(d: &VectorField<T>) -> VectorField<T> {
    d.cross(&grid::laplacian(d)).expect("same grid")
}

/// The same quantity written in divergence form,
/// `Div_h (d × D⁻_a d)_a`, whose rows are `d⁽ᵏ⁾∇_h d⁽ˡ⁾ − d⁽ˡ⁾∇_h d⁽ᵏ⁾`.
pub fn cross_laplacian_divergence_form<T: Scalar>(d: &VectorField<T>) -> VectorField<T> {
    let dim = d.grid().dim();
    let fluxes: Vec<VectorField<T>> = grid::vector_gradient(d)
        .into_iter()
        .take(dim)
        .map(|g| d.cross(&g).expect("same grid"))
        .collect();
    grid::divergence_of_fluxes(&fluxes).expect("consistent fluxes")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics<T> {
    pub step: u64,
    pub t: T,
    pub energy: T,
    pub kinetic_energy: T,
    pub grad_max: T,
    /// Fixed-point iterations spent on the step leaving this state.
    pub iterations: usize,
    pub residual: T,
    pub cumulative_residual: T,
}

pub trait DiagnosticsSink<T> {
    fn record(&mut self, row: &Diagnostics<T>) -> Result<()>;
}

impl<T: Clone> DiagnosticsSink<T> for Vec<Diagnostics<T>> {
    fn record(&mut self, row: &Diagnostics<T>) -> Result<()> {
        self.push(row.clone());
        Ok(())
    }
}

/// Hooks called by [`run`].
pub trait StepObserver<T: Scalar> {
    /// After every accepted step, with the states on both sides of it.
    fn on_step(&mut self, before: &SolverState<T>, after: &SolverState<T>, report: &StepReport<T>, dt: T)
        -> Result<()>;

    /// Once at the end; `previous` is the state one step earlier, if any.
    fn on_finish(&mut self, _last: &SolverState<T>, _previous: Option<&SolverState<T>>, _dt: T) -> Result<()> {
        Ok(())
    }
}

impl<T: Scalar> StepObserver<T> for () {
    fn on_step(&mut self, _: &SolverState<T>, _: &SolverState<T>, _: &StepReport<T>, _: T) -> Result<()> {
        Ok(())
    }
}

impl<T: Scalar, O: StepObserver<T> + ?Sized> StepObserver<T> for &mut O {
    fn on_step(&mut self, b: &SolverState<T>, a: &SolverState<T>, r: &StepReport<T>, dt: T) -> Result<()> {
        (**self).on_step(b, a, r, dt)
    }
    fn on_finish(&mut self, last: &SolverState<T>, prev: Option<&SolverState<T>>, dt: T) -> Result<()> {
        (**self).on_finish(last, prev, dt)
    }
}

impl<T: Scalar, O: StepObserver<T>> StepObserver<T> for Option<O> {
    fn on_step(&mut self, b: &SolverState<T>, a: &SolverState<T>, r: &StepReport<T>, dt: T) -> Result<()> {
        match self {
            Some(o) => o.on_step(b, a, r, dt),
            None => Ok(()),
        }
    }
    fn on_finish(&mut self, last: &SolverState<T>, prev: Option<&SolverState<T>>, dt: T) -> Result<()> {
        match self {
            Some(o) => o.on_finish(last, prev, dt),
            None => Ok(()),
        }
    }
}

impl<T: Scalar, A: StepObserver<T>, B: StepObserver<T>> StepObserver<T> for (A, B) {
    fn on_step(&mut self, b: &SolverState<T>, a: &SolverState<T>, r: &StepReport<T>, dt: T) -> Result<()> {
        self.0.on_step(b, a, r, dt)?;
        self.1.on_step(b, a, r, dt)
    }
    fn on_finish(&mut self, last: &SolverState<T>, prev: Option<&SolverState<T>>, dt: T) -> Result<()> {
        self.0.on_finish(last, prev, dt)?;
        self.1.on_finish(last, prev, dt)
    }
}

/// Turns steps into [`Diagnostics`] rows.
///
/// Row `m` describes state `m` together with the step `m → m+1` (which
/// provides `D_t dᵐ` for `H_m` and the iteration count). A run without steps
/// produces a single row for the initial state, using `D_t d ≈ d × w`.
pub struct DiagnosticsRecorder<S> {
    sink: S,
    stride: u64,
    cumulative_residual: f64,
}

impl<S> DiagnosticsRecorder<S> {
    pub fn new(sink: S, stride: u64) -> Self {
        DiagnosticsRecorder {
            sink,
            stride: stride.max(1),
            cumulative_residual: 0.0,
        }
    }

    pub fn sink(&self) -> &S {
        &self.sink
    }

    pub fn into_sink(self) -> S {
        self.sink
    }
}

/// Default row stride: every step up to `M = 128`, every 8th above.
pub fn default_stride(m: usize) -> u64 {
    if m <= 128 {
        1
    } else {
        8
    }
}

impl<T: Scalar, S: DiagnosticsSink<T>> StepObserver<T> for DiagnosticsRecorder<S> {
    fn on_step(&mut self, before: &SolverState<T>, after: &SolverState<T>, report: &StepReport<T>, dt: T) -> Result<()> {
        self.cumulative_residual += report.residual.to_f64_lossy();
        if !before.step_index().is_multiple_of(self.stride) {
            return Ok(());
        }
        let row = Diagnostics {
            step: before.step_index(),
            t: before.t(),
            energy: energy(before),
            kinetic_energy: kinetic_energy(before, after, dt)?,
            grad_max: grad_max(before),
            iterations: report.iterations,
            residual: report.residual,
            cumulative_residual: T::lit(self.cumulative_residual),
        };
        self.sink.record(&row)
    }

    fn on_finish(&mut self, last: &SolverState<T>, previous: Option<&SolverState<T>>, _dt: T) -> Result<()> {
        if previous.is_some() {
            return Ok(());
        }
        let rate = last.d().cross(last.w())?;
        let row = Diagnostics {
            step: last.step_index(),
            t: last.t(),
            energy: energy(last),
            kinetic_energy: kinetic_energy_with_rate(last, &rate),
            grad_max: grad_max(last),
            iterations: 0,
            residual: T::zero(),
            cumulative_residual: T::zero(),
        };
        self.sink.record(&row)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions<T> {
    pub dt: T,
    pub t_final: T,
    pub fixed_point: FixedPointOptions<T>,
}

impl<T: Scalar> RunOptions<T> {
    /// `M_T = round(T / Δt)`.
    pub fn step_count(&self) -> u64 {
        (self.t_final / self.dt).round().to_u64().unwrap_or(0)
    }
}

/// Advances `state0` by `round(T/Δt)` uniform steps.
///
/// Aborts with [`Error::NotConverged`] if a step exhausts its iteration
/// budget; numerical failures propagate from the stepper.
pub fn run<T: Scalar, O: StepObserver<T>>(
    state0: SolverState<T>,
    opts: &RunOptions<T>,
    observer: &mut O,
) -> Result<SolverState<T>> {
    if !(opts.dt > T::zero() && opts.dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {}", opts.dt)));
    }
    if !(opts.t_final >= T::zero() && opts.t_final.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be non-negative, got {}", opts.t_final)));
    }
    let steps = opts.step_count();
    let mut solver = FixedPointSolver::new(opts.fixed_point)?;
    let mut current = state0;
    let mut previous = None;
    for _ in 0..steps {
        let (next, report) = solver.step(&current, opts.dt)?;
        if !report.converged {
            return Err(Error::NotConverged {
                step: current.step_index(),
                t: current.t().to_f64_lossy(),
                iterations: report.iterations,
                residual: report.residual.to_f64_lossy(),
            });
        }
        observer.on_step(&current, &next, &report, opts.dt)?;
        previous = Some(std::mem::replace(&mut current, next));
    }
    observer.on_finish(&current, previous.as_ref(), opts.dt)?;
    Ok(current)
}

/// Observer tracking `max_m max_i ||dᵢᵐ| − 1|` and the energy range over a run.
#[derive(Clone, Debug, Default)]
pub struct ConservationMonitor {
    pub max_length_deviation: f64,
    pub initial_energy: Option<f64>,
    pub max_energy_drift: f64,
    pub total_iterations: u64,
    pub steps: u64,
}

impl ConservationMonitor {
    pub fn mean_iterations(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.total_iterations as f64 / self.steps as f64
        }
    }

    fn observe_state<T: Scalar>(&mut self, s: &SolverState<T>) {
        let e = energy(s).to_f64_lossy();
        let e0 = *self.initial_energy.get_or_insert(e);
        self.max_energy_drift = self.max_energy_drift.max((e - e0).abs());
        self.max_length_deviation = self.max_length_deviation.max(s.d().max_unit_deviation().to_f64_lossy());
    }
}

impl<T: Scalar> StepObserver<T> for ConservationMonitor {
    fn on_step(&mut self, before: &SolverState<T>, after: &SolverState<T>, report: &StepReport<T>, _dt: T) -> Result<()> {
        if self.initial_energy.is_none() {
            self.observe_state(before);
        }
        self.observe_state(after);
        self.total_iterations += report.iterations as u64;
        self.steps += 1;
        Ok(())
    }

    fn on_finish(&mut self, last: &SolverState<T>, _previous: Option<&SolverState<T>>, _dt: T) -> Result<()> {
        if self.initial_energy.is_none() {
            self.observe_state(last);
        }
        Ok(())
    }
}

/// `d_t × d` for a director `d` and its rate, node by node.
pub fn angular_momentum<T: Scalar>(d: Vec3<T>, rate: Vec3<T>) -> Vec3<T> {
    rate.cross(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, Grid};
    use crate::random::{random_unit_field, random_vector_field, smooth_unit_field};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus(m: usize) -> Grid<f64> {
        Grid::unit(2, m, Boundary::Periodic).unwrap()
    }

    #[test]
    fn uniform_director_at_rest_has_zero_energy() {
        let g = torus(8);
        let d0 = VectorField::constant(g, Vec3::new(0.0, 0.0, 1.0));
        let s = initialize(&d0, InitialRate::DirectorRate(VectorField::zeros(g))).unwrap();
        assert!(s.w().values().iter().all(|w| *w == Vec3::zero()));
        assert_eq!(energy(&s), 0.0);
    }

    #[test]
    fn planar_angle_data_gives_vertical_momentum() {
        let g = torus(16);
        let theta = |x: [f64; 3]| 0.7 * (6.0 * x[0]).sin() + x[1];
        let theta_t = |x: [f64; 3]| 1.3 * (4.0 * x[1]).cos() - 0.2;
        let d0 = VectorField::from_fn(g, |x| Vec3::new(theta(x).cos(), theta(x).sin(), 0.0));
        let rate = VectorField::from_fn(g, |x| Vec3::new(-theta(x).sin(), theta(x).cos(), 0.0) * theta_t(x));
        let s = initialize(&d0, InitialRate::DirectorRate(rate.clone())).unwrap();
        for p in 0..g.node_count() {
            let expect = Vec3::new(0.0, 0.0, -theta_t(g.coord(p)));
            assert!((s.w().values()[p] - expect).max_abs() < 1e-12);
            let numeric = angular_momentum(s.d().values()[p], rate.values()[p]);
            assert!((s.w().values()[p] - numeric).max_abs() < 1e-12);
        }
    }

    #[test]
    fn zero_director_sample_is_rejected() {
        let g = torus(4);
        let mut d0 = VectorField::constant(g, Vec3::new(1.0, 0.0, 0.0));
        d0.values_mut()[5] = Vec3::zero();
        assert!(matches!(initialize(&d0, InitialRate::AtRest), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn constant_momentum_energy_is_half_its_square() {
        let g = torus(8);
        let c = Vec3::new(0.5, -1.0, 2.0);
        let d = VectorField::constant(g, Vec3::new(0.0, 1.0, 0.0));
        let s = initialize(&d, InitialRate::AngularMomentum(VectorField::constant(g, c))).unwrap();
        assert!((energy(&s) - 0.5 * c.norm_sq()).abs() < 1e-13);
    }

    #[test]
    fn energy_matches_naive_double_loop() {
        for bc in [Boundary::Periodic, Boundary::Neumann] {
            let g = Grid::unit(2, 12, bc).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let d = random_unit_field(&g, &mut rng);
            let w = random_vector_field(&g, &mut rng);
            let s = SolverState::new(d.clone(), w.clone(), 0, 0.0).unwrap();
            let [n0, n1, _] = g.shape();
            let h = g.h();
            let at = |i: usize, j: usize| d.values()[g.index(i, j, 0)];
            let mut sum = 0.0f64;
            for i in 0..n0 {
                for j in 0..n1 {
                    let (im, jm) = match bc {
                        Boundary::Periodic => ((i + n0 - 1) % n0, (j + n1 - 1) % n1),
                        Boundary::Neumann => (i.saturating_sub(1), j.saturating_sub(1)),
                    };
                    let gx = (at(i, j) - at(im, j)) * (1.0 / h);
                    let gy = (at(i, j) - at(i, jm)) * (1.0 / h);
                    sum += gx.norm_sq() + gy.norm_sq() + w.values()[g.index(i, j, 0)].norm_sq();
                }
            }
            let naive = 0.5 * h * h * sum;
            assert!((energy(&s) - naive).abs() <= 1e-12 * naive);
        }
    }

    #[test]
    fn kinetic_energy_special_cases() {
        let g = torus(16);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = smooth_unit_field(&g, &mut rng);
        let s = SolverState::new(d.clone(), VectorField::zeros(g), 0, 0.0).unwrap();
        let h = kinetic_energy(&s, &s, 0.1).unwrap();
        assert!((h - 0.5 * grid::gradient_norm_sq(&d)).abs() < 1e-12);

        let a = SolverState::new(VectorField::constant(g, Vec3::new(1.0, 0.0, 0.0)), VectorField::zeros(g), 0, 0.0).unwrap();
        let b = SolverState::new(VectorField::constant(g, Vec3::new(0.0, 1.0, 0.0)), VectorField::zeros(g), 1, 0.5).unwrap();
        // |D_t d|² = 2 / 0.25 = 8 everywhere
        assert!((kinetic_energy(&a, &b, 0.5).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cross_laplacian_identity_on_random_unit_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for g in [torus(12), Grid::unit(2, 9, Boundary::Neumann).unwrap(), Grid::unit(3, 5, Boundary::Periodic).unwrap()] {
            for _ in 0..10 {
                let d = random_unit_field(&g, &mut rng);
                let lhs = cross_laplacian(&d);
                let rhs = cross_laplacian_divergence_form(&d);
                let scale = 1.0 / (g.h() * g.h());
                for (a, b) in lhs.values().iter().zip(rhs.values()) {
                    assert!((*a - *b).max_abs() <= 1e-12 * scale.max(1.0), "{a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn zero_horizon_returns_the_initial_state() {
        let g = torus(8);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s0 = SolverState::new(smooth_unit_field(&g, &mut rng), VectorField::zeros(g), 0, 0.0).unwrap();
        let opts = RunOptions {
            dt: 0.5 * g.h(),
            t_final: 0.0,
            fixed_point: FixedPointOptions::for_grid(&g),
        };
        let mut rows: DiagnosticsRecorder<Vec<Diagnostics<f64>>> = DiagnosticsRecorder::new(Vec::new(), 1);
        let out = run(s0.clone(), &opts, &mut rows).unwrap();
        assert_eq!(out, s0);
        assert_eq!(rows.sink().len(), 1);
        assert_eq!(rows.sink()[0].iterations, 0);
    }

    #[test]
    fn stationary_state_stays_put() {
        let g = torus(8);
        let s0 = SolverState::new(VectorField::constant(g, Vec3::new(0.6, 0.0, 0.8)), VectorField::zeros(g), 0, 0.0).unwrap();
        let opts = RunOptions {
            dt: 0.5 * g.h(),
            t_final: 1.0,
            fixed_point: FixedPointOptions::for_grid(&g),
        };
        let mut rows = DiagnosticsRecorder::new(Vec::new(), 1);
        let out = run(s0.clone(), &opts, &mut rows).unwrap();
        assert_eq!(out.d(), s0.d());
        assert_eq!(out.w(), s0.w());
        assert_eq!(out.step_index(), 16);
        let rows: Vec<Diagnostics<f64>> = rows.into_sink();
        assert_eq!(rows.len(), 16);
        assert!(rows.iter().all(|r| r.energy == 0.0 && r.iterations == 1));
    }

    #[test]
    fn diagnostics_stride_skips_rows() {
        let g = torus(8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s0 = SolverState::new(smooth_unit_field(&g, &mut rng), VectorField::zeros(g), 0, 0.0).unwrap();
        let opts = RunOptions {
            dt: 0.5 * g.h(),
            t_final: 10.0 * 0.5 * g.h(),
            fixed_point: FixedPointOptions::for_grid(&g),
        };
        let mut rows = DiagnosticsRecorder::new(Vec::new(), 4);
        run(s0, &opts, &mut rows).unwrap();
        let steps: Vec<u64> = rows.sink().iter().map(|r: &Diagnostics<f64>| r.step).collect();
        assert_eq!(steps, vec![0, 4, 8]);
    }

    #[test]
    fn non_convergence_aborts_the_run() {
        let g = torus(16);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s0 = SolverState::new(random_unit_field(&g, &mut rng), VectorField::zeros(g), 0, 0.0).unwrap();
        let opts = RunOptions {
            dt: 0.5 * g.h(),
            t_final: 1.0,
            fixed_point: FixedPointOptions { tol: 1e-14, max_iter: 2 },
        };
        let err = run(s0, &opts, &mut ()).unwrap_err();
        assert!(err.is_not_converged(), "{err}");
    }

    #[test]
    fn whole_run_preserves_length_and_energy() {
        let g = torus(32);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = smooth_unit_field(&g, &mut rng);
        let w = VectorField::from_fn(g, |x| Vec3::new(0.0, (std::f64::consts::TAU * x[0]).sin(), 0.3));
        let s0 = SolverState::new(d, w, 0, 0.0).unwrap();
        let opts = RunOptions {
            dt: 0.5 * g.h(),
            t_final: 0.5,
            fixed_point: FixedPointOptions { tol: 1e-12, max_iter: 200 },
        };
        let mut monitor = ConservationMonitor::default();
        run(s0, &opts, &mut monitor).unwrap();
        assert!(monitor.max_length_deviation <= 1e-11);
        let e0 = monitor.initial_energy.unwrap();
        assert!(monitor.max_energy_drift <= 1e-9 * e0, "drift {}", monitor.max_energy_drift);
    }

    #[test]
    fn stepping_back_retraces_the_trajectory() {
        let g = torus(16);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s0 = SolverState::new(smooth_unit_field(&g, &mut rng), VectorField::zeros(g), 0, 0.0).unwrap();
        let dt = 0.5 * g.h();
        let mut solver = FixedPointSolver::new(FixedPointOptions { tol: 1e-13, max_iter: 200 }).unwrap();
        let mut s = s0.clone();
        for _ in 0..20 {
            s = solver.step(&s, dt).unwrap().0;
        }
        for _ in 0..20 {
            s = solver.step(&s, -dt).unwrap().0;
        }
        let dd = s.d().sub(s0.d()).unwrap();
        let dw = s.w().sub(s0.w()).unwrap();
        let err = dd.values().iter().chain(dw.values()).map(|v| v.max_abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "round trip error {err:e}");
    }
}
