use crate::error::Result;
use crate::grid::{Field, Grid, Neighbours, ScalarField, VectorField};
use crate::par;
use crate::scalar::{NodeValue, Scalar, Vec3};

/// Runs `f(p, neighbours)` for every node, writing into `out`.
fn sweep<T: Scalar, W: Send>(grid: &Grid<T>, out: &mut [W], f: impl Fn(usize, &[Neighbours; 3]) -> W + Sync) {
    let [_, n1, n2] = grid.shape();
    let dim = grid.dim();
    let row = n1 * n2;
    par::fill_rows(out, row, |i, dst| {
        let base = i * row;
        let none = Neighbours {
            prev: 0,
            next: 0,
            lower_face: false,
            upper_face: false,
        };
        let mut nb = [none; 3];
        for j in 0..n1 {
            for k in 0..n2 {
                let o = j * n2 + k;
                let p = base + o;
                nb[0] = grid.neighbours(0, p, i);
                nb[1] = grid.neighbours(1, p, j);
                if dim == 3 {
                    nb[2] = grid.neighbours(2, p, k);
                }
                dst[o] = f(p, &nb);
            }
        }
    });
}

/// `D⁺` along `axis` (0-based): `(f(x + h e) − f(x)) / h`.
pub fn forward_diff<T: Scalar, V: NodeValue<T>>(f: &Field<T, V>, axis: usize) -> Result<Field<T, V>> {
    let grid = *f.grid();
    grid.check_axis(axis)?;
    let inv_h = grid.h().recip();
    let src = f.values();
    let mut out = vec![V::zero(); src.len()];
    sweep(&grid, &mut out, |p, nb| (src[nb[axis].next] - src[p]) * inv_h);
    Ok(Field::from_vec_unchecked(grid, out))
}

/// `D⁻` along `axis` (0-based): `(f(x) − f(x − h e)) / h`.
pub fn backward_diff<T: Scalar, V: NodeValue<T>>(f: &Field<T, V>, axis: usize) -> Result<Field<T, V>> {
    let grid = *f.grid();
    grid.check_axis(axis)?;
    let inv_h = grid.h().recip();
    let src = f.values();
    let mut out = vec![V::zero(); src.len()];
    sweep(&grid, &mut out, |p, nb| (src[p] - src[nb[axis].prev]) * inv_h);
    Ok(Field::from_vec_unchecked(grid, out))
}

/// Backward gradient `∇_h = [D⁻₁, …, D⁻ₙ]`; the third slot is zero on 2-D grids.
pub fn gradient<T: Scalar>(f: &ScalarField<T>) -> VectorField<T> {
    let grid = *f.grid();
    let dim = grid.dim();
    let inv_h = grid.h().recip();
    let src = f.values();
    let mut out = vec![Vec3::zero(); src.len()];
    sweep(&grid, &mut out, |p, nb| {
        let mut g = Vec3::zero();
        for a in 0..dim {
            g[a] = (src[p] - src[nb[a].prev]) * inv_h;
        }
        g
    });
    Field::from_vec_unchecked(grid, out)
}

/// Backward gradient of every component of a vector field, indexed by axis:
/// `out[a][p] = D⁻_a d(p)`. On 2-D grids `out[2]` is zero.
pub fn vector_gradient<T: Scalar>(d: &VectorField<T>) -> [VectorField<T>; 3] {
    let grid = *d.grid();
    let zero = VectorField::zeros(grid);
    let mut out = [zero.clone(), zero.clone(), zero];
    for (a, slot) in out.iter_mut().enumerate().take(grid.dim()) {
        *slot = backward_diff(d, a).expect("axis < dim");
    }
    out
}

fn divergence_kernel<T: Scalar, V: NodeValue<T>>(
    grid: &Grid<T>,
    flux: impl Fn(usize, usize) -> V + Sync,
) -> Vec<V> {
    let dim = grid.dim();
    let inv_h = grid.h().recip();
    let mut out = vec![V::zero(); grid.node_count()];
    sweep(grid, &mut out, |p, nb| {
        let mut acc = V::zero();
        for (a, n) in nb.iter().enumerate().take(dim) {
            let above = if n.upper_face { V::zero() } else { flux(a, n.next) };
            let here = if n.lower_face { V::zero() } else { flux(a, p) };
            acc = acc + (above - here) * inv_h;
        }
        acc
    });
    out
}

/// Forward divergence `Div_h v = Σ_j D⁺_j v⁽ʲ⁾`, with zero flux through Neumann faces.
pub fn divergence<T: Scalar>(v: &VectorField<T>) -> ScalarField<T> {
    let grid = *v.grid();
    let src = v.values();
    let out = divergence_kernel(&grid, |a, q| src[q][a]);
    Field::from_vec_unchecked(grid, out)
}

/// Forward divergence of a flux given per axis: `Σ_a D⁺_a fluxes[a]`.
/// Only the first `dim` entries are read.
pub fn divergence_of_fluxes<T: Scalar, V: NodeValue<T>>(fluxes: &[Field<T, V>]) -> Result<Field<T, V>> {
    let first = fluxes
        .first()
        .ok_or_else(|| crate::Error::InvalidArgument("no flux components given".into()))?;
    let grid = *first.grid();
    if fluxes.len() < grid.dim() {
        return Err(crate::Error::InvalidArgument(format!(
            "need {} flux components, got {}",
            grid.dim(),
            fluxes.len()
        )));
    }
    for f in &fluxes[..grid.dim()] {
        first.check_same_grid(f)?;
    }
    let out = divergence_kernel(&grid, |a, q| fluxes[a].values()[q]);
    Ok(Field::from_vec_unchecked(grid, out))
}

/// `Δ_h = Σ_j D⁺_j D⁻_j`, applied componentwise for vector fields.
pub fn laplacian<T: Scalar, V: NodeValue<T>>(f: &Field<T, V>) -> Field<T, V> {
    let grid = *f.grid();
    let mut out = vec![V::zero(); f.len()];
    laplacian_slice(&grid, f.values(), &mut out);
    Field::from_vec_unchecked(grid, out)
}

/// [`laplacian`] into a preallocated field on the same grid.
pub fn laplacian_into<T: Scalar, V: NodeValue<T>>(f: &Field<T, V>, out: &mut Field<T, V>) -> Result<()> {
    f.check_same_grid(out)?;
    let grid = *f.grid();
    laplacian_slice(&grid, f.values(), out.values_mut());
    Ok(())
}

// Evaluated as D⁺(D⁻ f) with the same operation order as
// `divergence(gradient(f))`, so the two agree bit-for-bit.
pub(crate) fn laplacian_slice<T: Scalar, V: NodeValue<T>>(grid: &Grid<T>, src: &[V], dst: &mut [V]) {
    let dim = grid.dim();
    let inv_h = grid.h().recip();
    sweep(grid, dst, |p, nb| {
        let mut acc = V::zero();
        for n in nb.iter().take(dim) {
            let up = (src[n.next] - src[p]) * inv_h;
            let down = (src[p] - src[n.prev]) * inv_h;
            acc = acc + (up - down) * inv_h;
        }
        acc
    });
}

/// `‖∇_h f‖²_{L²} = hⁿ Σ_p Σ_a |D⁻_a f(p)|²`.
pub fn gradient_norm_sq<T: Scalar, V: NodeValue<T>>(f: &Field<T, V>) -> T {
    gradient_norm_sq_slice(f.grid(), f.values())
}

pub(crate) fn gradient_norm_sq_slice<T: Scalar, V: NodeValue<T>>(grid: &Grid<T>, src: &[V]) -> T {
    let dim = grid.dim();
    let inv_h = grid.h().recip();
    let [n0, n1, n2] = grid.shape();
    let mut total = T::zero();
    for i in 0..n0 {
        let mut row = T::zero();
        for j in 0..n1 {
            for k in 0..n2 {
                let p = grid.index(i, j, k);
                let idx = [i, j, k];
                for a in 0..dim {
                    let nb = grid.neighbours(a, p, idx[a]);
                    let g = (src[p] - src[nb.prev]) * inv_h;
                    row += g.inner(g);
                }
            }
        }
        total += row;
    }
    total * grid.cell_volume()
}

/// Node-wise Frobenius norm of the backward gradient, `|∇_h f|(p)`.
pub fn pointwise_gradient_norm<T: Scalar, V: NodeValue<T>>(f: &Field<T, V>) -> ScalarField<T> {
    let grid = *f.grid();
    let dim = grid.dim();
    let inv_h = grid.h().recip();
    let src = f.values();
    let mut out = vec![T::zero(); src.len()];
    sweep(&grid, &mut out, |p, nb| {
        let mut s = T::zero();
        for n in nb.iter().take(dim) {
            let g = (src[p] - src[n.prev]) * inv_h;
            s += g.inner(g);
        }
        s.sqrt()
    });
    Field::from_vec_unchecked(grid, out)
}

/// `hⁿ Σ_p a(p)·b(p)`, the discrete `∫_Ω a·b dx`.
pub fn inner_product<T: Scalar, V: NodeValue<T>>(a: &Field<T, V>, b: &Field<T, V>) -> Result<T> {
    a.check_same_grid(b)?;
    let s: T = a.values().iter().zip(b.values()).map(|(x, y)| x.inner(*y)).sum();
    Ok(s * a.grid().cell_volume())
}

pub fn l2_norm<T: Scalar, V: NodeValue<T>>(a: &Field<T, V>) -> T {
    inner_product(a, a).expect("same grid").sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;
    use crate::random::{random_scalar_field, random_vector_field};
    use crate::Error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grids() -> Vec<Grid<f64>> {
        vec![
            Grid::unit(2, 16, Boundary::Periodic).unwrap(),
            Grid::unit(2, 16, Boundary::Neumann).unwrap(),
            Grid::unit(3, 6, Boundary::Periodic).unwrap(),
            Grid::new(3, 5, Boundary::Neumann, [-0.5; 3], 2.0).unwrap(),
        ]
    }

    fn max_abs(a: &ScalarField<f64>, b: &ScalarField<f64>) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_fields_have_zero_differences() {
        for g in grids() {
            let c = ScalarField::constant(g, 3.25);
            for a in 0..g.dim() {
                assert!(forward_diff(&c, a).unwrap().values().iter().all(|v| *v == 0.0));
                assert!(backward_diff(&c, a).unwrap().values().iter().all(|v| *v == 0.0));
            }
            assert!(laplacian(&c).values().iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn invalid_axis_is_an_error() {
        let g = Grid::<f64>::unit(2, 4, Boundary::Periodic).unwrap();
        let f = ScalarField::zeros(g);
        assert!(matches!(forward_diff(&f, 2), Err(Error::InvalidAxis { axis: 2, dim: 2 })));
        assert!(backward_diff(&f, 7).is_err());
    }

    #[test]
    fn linear_field_has_unit_slope_in_the_interior() {
        let g = Grid::<f64>::unit(2, 8, Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0]);
        let fd = forward_diff(&f, 0).unwrap();
        let bd = backward_diff(&f, 0).unwrap();
        for p in 0..g.node_count() {
            let [i, _, _] = g.multi_index(p);
            if i + 1 < 8 {
                assert!((fd.values()[p] - 1.0).abs() < 1e-12);
            }
            if i > 0 {
                assert!((bd.values()[p] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_diff_of_sine_matches_pointwise_quotient() {
        let m = 64;
        let g = Grid::<f64>::unit(2, m, Boundary::Periodic).unwrap();
        let h = g.h();
        let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let fd = forward_diff(&f, 0).unwrap();
        for p in 0..g.node_count() {
            let x = g.coord(p)[0];
            let expect = ((2.0 * PI * (x + h)).sin() - (2.0 * PI * x).sin()) / h;
            assert!((fd.values()[p] - expect).abs() < 1e-11, "node {p}");
        }
    }

    #[test]
    fn backward_diff_is_shifted_forward_diff_on_torus() {
        let g = Grid::<f64>::unit(2, 12, Boundary::Periodic).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_scalar_field(&g, &mut rng);
        let fd = forward_diff(&f, 1).unwrap();
        let bd = backward_diff(&f, 1).unwrap();
        for p in 0..g.node_count() {
            let [i, j, k] = g.multi_index(p);
            let q = g.index(i, (j + 1) % 12, k);
            assert_eq!(bd.values()[q], fd.values()[p]);
        }
    }

    #[test]
    fn neumann_one_sided_differences_vanish_on_faces() {
        let g = Grid::<f64>::unit(2, 8, Boundary::Neumann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_scalar_field(&g, &mut rng);
        for a in 0..2 {
            let fd = forward_diff(&f, a).unwrap();
            let bd = backward_diff(&f, a).unwrap();
            for p in 0..g.node_count() {
                let idx = g.multi_index(p);
                if idx[a] == 0 {
                    assert_eq!(bd.values()[p], 0.0);
                }
                if idx[a] == 8 {
                    assert_eq!(fd.values()[p], 0.0);
                }
            }
        }
    }

    #[test]
    fn sine_is_a_discrete_eigenfunction() {
        let m = 64;
        let g = Grid::<f64>::unit(2, m, Boundary::Periodic).unwrap();
        let h = g.h();
        let f = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).sin());
        let lap = laplacian(&f);
        let lambda = -(4.0 / (h * h)) * (PI * h).sin().powi(2);
        // oracle: three-point stencil written out directly
        for p in 0..g.node_count() {
            let x = g.coord(p)[0];
            let direct = ((2.0 * PI * (x + h)).sin() - 2.0 * (2.0 * PI * x).sin() + (2.0 * PI * (x - h)).sin()) / (h * h);
            assert!((lap.values()[p] - direct).abs() < 1e-8);
            assert!((lap.values()[p] - lambda * f.values()[p]).abs() < 1e-8);
        }
    }

    #[test]
    fn laplacian_is_divergence_of_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in grids() {
            for _ in 0..5 {
                let f = random_scalar_field(&g, &mut rng);
                let lhs = laplacian(&f);
                let rhs = divergence(&gradient(&f));
                assert_eq!(lhs.values(), rhs.values(), "{:?}", g.boundary());
                assert!(max_abs(&lhs, &rhs) <= 1e-13);
            }
        }
    }

    #[test]
    fn summation_by_parts_holds_for_both_closures() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for g in grids() {
            for _ in 0..5 {
                let v = random_vector_field(&g, &mut rng);
                let phi = random_scalar_field(&g, &mut rng);
                let lhs = inner_product(&divergence(&v), &phi).unwrap();
                let rhs = -inner_product(&v, &gradient(&phi)).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn vector_laplacian_acts_componentwise() {
        let g = Grid::<f64>::unit(3, 5, Boundary::Neumann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let v = random_vector_field(&g, &mut rng);
        let lv = laplacian(&v);
        for c in 0..3 {
            assert_eq!(lv.component(c), laplacian(&v.component(c)));
        }
    }

    #[test]
    fn unit_constant_has_unit_mass_on_torus() {
        for dim in [2, 3] {
            let g = Grid::<f64>::unit(dim, 10, Boundary::Periodic).unwrap();
            let one = ScalarField::constant(g, 1.0);
            assert!((inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_norm_matches_vector_gradient() {
        let g = Grid::<f64>::unit(2, 9, Boundary::Neumann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let d = random_vector_field(&g, &mut rng);
        let parts = vector_gradient(&d);
        let expect: f64 = parts.iter().map(|p| inner_product(p, p).unwrap()).sum();
        assert!((gradient_norm_sq(&d) - expect).abs() < 1e-10 * expect);
        let pw = pointwise_gradient_norm(&d);
        for p in 0..g.node_count() {
            let s: f64 = parts.iter().map(|q| q.values()[p].norm_sq()).sum();
            assert!((pw.values()[p] - s.sqrt()).abs() < 1e-12 * (1.0 + s.sqrt()));
        }
    }

    #[test]
    fn divergence_of_fluxes_matches_scalar_divergence() {
        let g = Grid::<f64>::unit(3, 4, Boundary::Neumann).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let v = random_vector_field(&g, &mut rng);
        let fluxes = [v.component(0), v.component(1), v.component(2)];
        assert_eq!(divergence_of_fluxes(&fluxes).unwrap(), divergence(&v));
    }

    #[test]
    fn works_in_single_precision() {
        let g = Grid::<f32>::unit(2, 16, Boundary::Periodic).unwrap();
        let f = ScalarField::from_fn(g, |x| (x[0] * 3.0).cos() + x[1]);
        let lhs = laplacian(&f);
        let rhs = divergence(&gradient(&f));
        assert_eq!(lhs.values(), rhs.values());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn operators_are_linear(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0, neumann in any::<bool>()) {
                let bc = if neumann { Boundary::Neumann } else { Boundary::Periodic };
                let g = Grid::<f64>::unit(2, 7, bc).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let f = random_scalar_field(&g, &mut rng);
                let k = random_scalar_field(&g, &mut rng);
                let combo = f.scale(alpha).axpy(beta, &k).unwrap();
                let lhs = laplacian(&combo);
                let rhs = laplacian(&f).scale(alpha).axpy(beta, &laplacian(&k)).unwrap();
                prop_assert!(max_abs(&lhs, &rhs) < 1e-9);
                let lhs = forward_diff(&combo, 1).unwrap();
                let rhs = forward_diff(&f, 1).unwrap().scale(alpha).axpy(beta, &forward_diff(&k, 1).unwrap()).unwrap();
                prop_assert!(max_abs(&lhs, &rhs) < 1e-11);
            }
        }
    }
}
