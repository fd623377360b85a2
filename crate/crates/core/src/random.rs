//! Seeded random fields for property checks.

use rand::Rng;

use crate::grid::{Grid, ScalarField, VectorField};
use crate::scalar::{Scalar, Vec3};

fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.gen_range(-1.0..1.0))
}

/// Independent uniform values in `[-1, 1)` at every node.
pub fn random_scalar_field<T: Scalar, R: Rng + ?Sized>(grid: &Grid<T>, rng: &mut R) -> ScalarField<T> {
    let values = (0..grid.node_count()).map(|_| uniform(rng)).collect();
    ScalarField::new(*grid, values).expect("finite values")
}

pub fn random_vector_field<T: Scalar, R: Rng + ?Sized>(grid: &Grid<T>, rng: &mut R) -> VectorField<T> {
    let values = (0..grid.node_count())
        .map(|_| Vec3::new(uniform(rng), uniform(rng), uniform(rng)))
        .collect();
    VectorField::new(*grid, values).expect("finite values")
}

/// A random unit vector (rejection sampling from the cube).
pub fn random_unit_vector<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Vec3<T> {
    loop {
        let v: Vec3<T> = Vec3::new(uniform(rng), uniform(rng), uniform(rng));
        let n = v.norm();
        if n > T::lit(1e-3) && n <= T::one() {
            return v * n.recip();
        }
    }
}

/// Independent unit vectors at every node (rough data).
pub fn random_unit_field<T: Scalar, R: Rng + ?Sized>(grid: &Grid<T>, rng: &mut R) -> VectorField<T> {
    let values = (0..grid.node_count()).map(|_| random_unit_vector(rng)).collect();
    VectorField::new(*grid, values).expect("finite values")
}

/// A smooth unit field built from a few random low Fourier modes of two
/// angles, periodic on the unit box. Used where rough data would make the
/// solver's contraction constant meaningless.
pub fn smooth_unit_field<T: Scalar, R: Rng + ?Sized>(grid: &Grid<T>, rng: &mut R) -> VectorField<T> {
    let modes: Vec<[f64; 5]> = (0..3)
        .map(|_| {
            [
                rng.gen_range(1..=2) as f64,
                rng.gen_range(0..=2) as f64,
                rng.gen_range(0.0..std::f64::consts::TAU),
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-0.6..0.6),
            ]
        })
        .collect();
    let tau = std::f64::consts::TAU;
    VectorField::from_fn(*grid, |x| {
        let (x, y, z) = (x[0].to_f64_lossy(), x[1].to_f64_lossy(), x[2].to_f64_lossy());
        let mut polar = 0.9;
        let mut azimuth = 0.3;
        for [kx, ky, phase, a, b] in &modes {
            let arg = tau * (kx * x + ky * y + (kx - ky) * z) + phase;
            polar += a * arg.sin();
            azimuth += b * arg.cos();
        }
        Vec3::new(
            T::lit(polar.sin() * azimuth.cos()),
            T::lit(polar.sin() * azimuth.sin()),
            T::lit(polar.cos()),
        )
    })
}
