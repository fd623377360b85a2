//! Exact 2-D wave maps built from planar angles.
//!
//! For `d = (cos θ, sin θ, 0)` the wave-map equation reduces to the linear
//! wave equation `θ_tt = Δθ`, which on the plane is solved by superposing
//! travelling waves in the diagonal directions `x + y` and `x − y`:
//!
//! ```text
//! θ = Σ_j  a⁺ sin(k(√2t + s)) + a⁻ sin(k(√2t − s)) + b⁺ cos(k(√2t + s)) + b⁻ cos(k(√2t − s))
//!        + c⁺ sin(k(√2t + r)) + c⁻ sin(k(√2t − r)) + d⁺ cos(k(√2t + r)) + d⁻ cos(k(√2t − r))
//! ```
//!
//! with `k = 2πj`, `s = x + y`, `r = x − y`. The angular momentum is
//! `w = d_t × d = (0, 0, −θ_t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixedpoint::{SolverState, StepReport};
use crate::grid::{self, Grid, VectorField};
use crate::integrator::StepObserver;
use crate::par;
use crate::scalar::{Scalar, Vec3};

/// Amplitudes of one frequency `j`. Missing entries default to zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub j: i32,
    #[serde(default)]
    pub a_plus: f64,
    #[serde(default)]
    pub a_minus: f64,
    #[serde(default)]
    pub b_plus: f64,
    #[serde(default)]
    pub b_minus: f64,
    #[serde(default)]
    pub c_plus: f64,
    #[serde(default)]
    pub c_minus: f64,
    #[serde(default)]
    pub d_plus: f64,
    #[serde(default)]
    pub d_minus: f64,
}

impl Mode {
    pub fn new(j: i32) -> Self {
        Mode { j, ..Mode::default() }
    }

    fn amplitudes(&self) -> [f64; 8] {
        [
            self.a_plus,
            self.a_minus,
            self.b_plus,
            self.b_minus,
            self.c_plus,
            self.c_minus,
            self.d_plus,
            self.d_minus,
        ]
    }

    fn is_zero(&self) -> bool {
        self.amplitudes().iter().all(|&a| a == 0.0)
    }

    fn has_difference_family(&self) -> bool {
        [self.c_plus, self.c_minus, self.d_plus, self.d_minus].iter().any(|&a| a != 0.0)
    }
}

/// A finite set of modes. Every listed term is evaluated as written, so
/// `j = 0` contributes the constant `b⁺ + b⁻ + d⁺ + d⁻` and `±j` entries add up.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DAlembertCoeffs {
    pub modes: Vec<Mode>,
}

impl DAlembertCoeffs {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        let c = DAlembertCoeffs { modes };
        c.validate()?;
        Ok(c)
    }

    /// `a₁± = 1/4`, `a₂± = 1/10`, `b₁⁺ = −b₁⁻ = −2`, `b₂⁺ = −b₂⁻ = 1/100`.
    pub fn reference() -> Self {
        DAlembertCoeffs {
            modes: vec![
                Mode {
                    a_plus: 0.25,
                    a_minus: 0.25,
                    b_plus: -2.0,
                    b_minus: 2.0,
                    ..Mode::new(1)
                },
                Mode {
                    a_plus: 0.1,
                    a_minus: 0.1,
                    b_plus: 0.01,
                    b_minus: -0.01,
                    ..Mode::new(2)
                },
            ],
        }
    }

    /// Largest `|j|`.
    pub fn cutoff(&self) -> u32 {
        self.modes.iter().map(|m| m.j.unsigned_abs()).max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.modes {
            if m.amplitudes().iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite amplitude in mode j = {}", m.j)));
            }
        }
        Ok(())
    }
}

/// `θ`, its time derivative and both spatial derivatives at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AngleJet {
    pub theta: f64,
    pub theta_t: f64,
    pub theta_x: f64,
    pub theta_y: f64,
}

/// Term-by-term evaluation of the sum.
pub fn angle_jet(t: f64, x: f64, y: f64, coeffs: &DAlembertCoeffs) -> AngleJet {
    let tau = std::f64::consts::SQRT_2 * t;
    let mut out = AngleJet::default();
    for m in &coeffs.modes {
        let k = std::f64::consts::TAU * f64::from(m.j);
        // (amplitude, is_sine, sign of the spatial variable, uses x − y)
        let terms = [
            (m.a_plus, true, 1.0, false),
            (m.a_minus, true, -1.0, false),
            (m.b_plus, false, 1.0, false),
            (m.b_minus, false, -1.0, false),
            (m.c_plus, true, 1.0, true),
            (m.c_minus, true, -1.0, true),
            (m.d_plus, false, 1.0, true),
            (m.d_minus, false, -1.0, true),
        ];
        for (amp, sine, sign, diff) in terms {
            if amp == 0.0 {
                continue;
            }
            let xi = if diff { x - y } else { x + y };
            let arg = k * (tau + sign * xi);
            let (value, slope) = if sine {
                (amp * arg.sin(), amp * k * arg.cos())
            } else {
                (amp * arg.cos(), -amp * k * arg.sin())
            };
            out.theta += value;
            out.theta_t += slope * std::f64::consts::SQRT_2;
            out.theta_x += slope * sign;
            out.theta_y += slope * sign * if diff { -1.0 } else { 1.0 };
        }
    }
    out
}

pub fn theta(t: f64, x: f64, y: f64, coeffs: &DAlembertCoeffs) -> f64 {
    angle_jet(t, x, y, coeffs).theta
}

pub fn theta_t(t: f64, x: f64, y: f64, coeffs: &DAlembertCoeffs) -> f64 {
    angle_jet(t, x, y, coeffs).theta_t
}

/// Per-node trigonometric tables for one mode and one diagonal family.
struct FamilyTable {
    /// `(a⁺ + a⁻, b⁺ + b⁻, a⁺ − a⁻, b⁺ − b⁻)` (or the `c`, `d` analogues).
    sums: [f64; 4],
    sin: Vec<f64>,
    cos: Vec<f64>,
}

struct ModeTable {
    k: f64,
    sum: FamilyTable,
    diff: Option<FamilyTable>,
}

/// Fast node sampler for a fixed grid: the spatial sines and cosines are
/// tabulated once, and each time level costs two trig calls per mode plus
/// one `sin_cos(θ)` per node.
pub struct AnalyticSampler<T: Scalar> {
    grid: Grid<T>,
    modes: Vec<ModeTable>,
}

/// All nodal quantities needed by the error metrics at one time.
pub struct AnalyticSample<T: Scalar> {
    pub d: VectorField<T>,
    pub w: VectorField<T>,
    pub d_t: VectorField<T>,
    /// `∂_x d`, `∂_y d`.
    pub grad: [VectorField<T>; 2],
}

impl<T: Scalar> AnalyticSampler<T> {
    pub fn new(grid: &Grid<T>, coeffs: &DAlembertCoeffs) -> Result<Self> {
        coeffs.validate()?;
        if grid.dim() != 2 {
            return Err(Error::InvalidArgument(format!(
                "planar angle solutions need a 2-D grid, got dim = {}",
                grid.dim()
            )));
        }
        let n = grid.node_count();
        let coords: Vec<(f64, f64)> = (0..n)
            .map(|p| {
                let c = grid.coord(p);
                (c[0].to_f64_lossy(), c[1].to_f64_lossy())
            })
            .collect();
        let table = |k: f64, sums: [f64; 4], f: &dyn Fn(f64, f64) -> f64| {
            let (sin, cos) = coords.iter().map(|&(x, y)| (k * f(x, y)).sin_cos()).unzip();
            FamilyTable { sums, sin, cos }
        };
        let modes = coeffs
            .modes
            .iter()
            .filter(|m| !m.is_zero())
            .map(|m| {
                let k = std::f64::consts::TAU * f64::from(m.j);
                let sum = table(
                    k,
                    [m.a_plus + m.a_minus, m.b_plus + m.b_minus, m.a_plus - m.a_minus, m.b_plus - m.b_minus],
                    &|x, y| x + y,
                );
                let diff = m.has_difference_family().then(|| {
                    table(
                        k,
                        [m.c_plus + m.c_minus, m.d_plus + m.d_minus, m.c_plus - m.c_minus, m.d_plus - m.d_minus],
                        &|x, y| x - y,
                    )
                });
                ModeTable { k, sum, diff }
            })
            .collect();
        Ok(AnalyticSampler { grid: *grid, modes })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    /// `θ` and its derivatives at node `p`, time `t`.
    fn jet_at(&self, p: usize, time_terms: &[(f64, f64)]) -> AngleJet {
        let mut out = AngleJet::default();
        for (mode, &(sa, ca)) in self.modes.iter().zip(time_terms) {
            let k = mode.k;
            let mut add = |f: &FamilyTable, y_sign: f64| {
                let [p0, q0, p1, q1] = f.sums;
                let (sb, cb) = (f.sin[p], f.cos[p]);
                // sin(A ± B), cos(A ± B) expanded with A = k√2t and B = kξ
                let even = p0 * sa + q0 * ca;
                let odd = p1 * ca - q1 * sa;
                out.theta += cb * even + sb * odd;
                let even_t = p0 * ca - q0 * sa;
                let odd_t = -p1 * sa - q1 * ca;
                out.theta_t += k * std::f64::consts::SQRT_2 * (cb * even_t + sb * odd_t);
                let slope = k * (cb * odd - sb * even);
                out.theta_x += slope;
                out.theta_y += y_sign * slope;
            };
            add(&mode.sum, 1.0);
            if let Some(diff) = &mode.diff {
                add(diff, -1.0);
            }
        }
        out
    }

    fn time_terms(&self, t: f64) -> Vec<(f64, f64)> {
        let tau = std::f64::consts::SQRT_2 * t;
        self.modes.iter().map(|m| (m.k * tau).sin_cos()).collect()
    }

    /// The angle jet at every node.
    pub fn jets(&self, t: T) -> Vec<AngleJet> {
        let tt = self.time_terms(t.to_f64_lossy());
        let mut out = vec![AngleJet::default(); self.grid.node_count()];
        par::fill_nodes(&mut out, |p| self.jet_at(p, &tt));
        out
    }

    /// `(d, w)` sampled at every node.
    pub fn state(&self, t: T, step_index: u64) -> SolverState<T> {
        let jets = self.jets(t);
        let mut d = vec![Vec3::zero(); jets.len()];
        let mut w = vec![Vec3::zero(); jets.len()];
        par::fill_nodes2(&mut d, &mut w, |p, dp, wp| {
            let (s, c) = jets[p].theta.sin_cos();
            *dp = Vec3::new(T::lit(c), T::lit(s), T::zero());
            *wp = Vec3::new(T::zero(), T::zero(), T::lit(-jets[p].theta_t));
        });
        SolverState::from_parts_unchecked(
            VectorField::from_vec_unchecked(self.grid, d),
            VectorField::from_vec_unchecked(self.grid, w),
            step_index,
            t,
        )
    }

    /// Director, angular momentum, time derivative and spatial gradient.
    pub fn sample(&self, t: T) -> AnalyticSample<T> {
        let jets = self.jets(t);
        let g = self.grid;
        let lift = |f: &(dyn Fn(&AngleJet, f64, f64) -> [f64; 3] + Sync)| {
            let mut v = vec![Vec3::zero(); jets.len()];
            par::fill_nodes(&mut v, |p| {
                let (s, c) = jets[p].theta.sin_cos();
                let [a, b, e] = f(&jets[p], s, c);
                Vec3::new(T::lit(a), T::lit(b), T::lit(e))
            });
            VectorField::from_vec_unchecked(g, v)
        };
        AnalyticSample {
            d: lift(&|_, s, c| [c, s, 0.0]),
            w: lift(&|j, _, _| [0.0, 0.0, -j.theta_t]),
            d_t: lift(&|j, s, c| [-s * j.theta_t, c * j.theta_t, 0.0]),
            grad: [
                lift(&|j, s, c| [-s * j.theta_x, c * j.theta_x, 0.0]),
                lift(&|j, s, c| [-s * j.theta_y, c * j.theta_y, 0.0]),
            ],
        }
    }
}

/// Node-sampled exact state at time `t`.
pub fn analytic_state<T: Scalar>(t: T, coeffs: &DAlembertCoeffs, grid: &Grid<T>) -> Result<SolverState<T>> {
    Ok(AnalyticSampler::new(grid, coeffs)?.state(t, 0))
}

/// Errors at one time level.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub err_d: f64,
    pub err_w: f64,
    pub err_energy: f64,
}

/// Running suprema of the three errors against an exact solution.
///
/// Level `m` is measured when the step `m → m+1` is seen (that step supplies
/// `D_t dᵐ`); the final level reuses the last difference quotient.
pub struct ErrorTracker<T: Scalar> {
    sampler: AnalyticSampler<T>,
    sup: ErrorSample,
    levels: u64,
    history: Option<Vec<ErrorSample>>,
}

impl<T: Scalar> ErrorTracker<T> {
    pub fn new(grid: &Grid<T>, coeffs: &DAlembertCoeffs) -> Result<Self> {
        Ok(ErrorTracker {
            sampler: AnalyticSampler::new(grid, coeffs)?,
            sup: ErrorSample::default(),
            levels: 0,
            history: None,
        })
    }

    /// Also keep the per-level errors.
    pub fn with_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn sampler(&self) -> &AnalyticSampler<T> {
        &self.sampler
    }

    /// Measures one level given its state and a difference quotient for `d_t`.
    pub fn observe(&mut self, state: &SolverState<T>, rate: &VectorField<T>) -> Result<ErrorSample> {
        state.d().check_same_grid(rate)?;
        if !state.grid().same_as(self.sampler.grid()) {
            return Err(Error::GridMismatch);
        }
        let exact = self.sampler.sample(state.t());
        let dist = |a: &VectorField<T>, b: &VectorField<T>| -> Result<f64> {
            let n = grid::l2_norm(&a.sub(b)?).to_f64_lossy();
            Ok(n * n)
        };
        let num_grad = grid::vector_gradient(state.d());
        let mut grad_sq = 0.0;
        for (axis, exact_axis) in exact.grad.iter().enumerate() {
            grad_sq += dist(&num_grad[axis], exact_axis)?;
        }
        let sample = ErrorSample {
            t: state.t().to_f64_lossy(),
            err_d: dist(state.d(), &exact.d)?.sqrt(),
            err_w: dist(state.w(), &exact.w)?.sqrt(),
            err_energy: (grad_sq + dist(rate, &exact.d_t)?).sqrt(),
        };
        self.sup.t = sample.t;
        self.sup.err_d = self.sup.err_d.max(sample.err_d);
        self.sup.err_w = self.sup.err_w.max(sample.err_w);
        self.sup.err_energy = self.sup.err_energy.max(sample.err_energy);
        self.levels += 1;
        if let Some(h) = &mut self.history {
            h.push(sample);
        }
        Ok(sample)
    }

    /// `(sup ℰ^d, sup ℰ^w, sup ℰ^E)` so far; `t` is the last measured time.
    pub fn suprema(&self) -> Result<ErrorSample> {
        if self.levels == 0 {
            return Err(Error::InvalidArgument("no time levels were measured".into()));
        }
        Ok(self.sup)
    }

    pub fn history(&self) -> Option<&[ErrorSample]> {
        self.history.as_deref()
    }
}

impl<T: Scalar> StepObserver<T> for ErrorTracker<T> {
    fn on_step(&mut self, before: &SolverState<T>, after: &SolverState<T>, _: &StepReport<T>, dt: T) -> Result<()> {
        let rate = after.d().sub(before.d())?.scale(dt.recip());
        self.observe(before, &rate).map(|_| ())
    }

    fn on_finish(&mut self, last: &SolverState<T>, previous: Option<&SolverState<T>>, dt: T) -> Result<()> {
        let rate = match previous {
            Some(prev) => last.d().sub(prev.d())?.scale(dt.recip()),
            None => last.d().cross(last.w())?,
        };
        self.observe(last, &rate).map(|_| ())
    }
}
