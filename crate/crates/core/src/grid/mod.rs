//! Regular lattices and the discrete difference calculus on them.
//!
//! Nodes are stored row-major over three axes; 2-D grids collapse the last
//! axis to a single node so every kernel runs the same code path.
//!
//! Boundary closures:
//!
//! * `Periodic`: `M` nodes per axis at `origin + i·h`, indices wrap.
//! * `Neumann`: `M + 1` nodes per axis including both endpoints. Ghost values
//!   equal the adjacent boundary value, so `D⁻` vanishes on the lower face and
//!   `D⁺` on the upper face, and the divergence sees zero flux through the
//!   boundary. With this closure `Div_h ∘ ∇_h = Δ_h` holds bit-for-bit and
//!   summation by parts holds with uniform `hⁿ` weights.

mod field;
mod ops;

pub use field::{Field, ScalarField, VectorField};
pub use ops::{
    backward_diff, divergence, divergence_of_fluxes, forward_diff, gradient, gradient_norm_sq,
    inner_product, l2_norm, laplacian, laplacian_into, pointwise_gradient_norm, vector_gradient,
};
pub(crate) use ops::{gradient_norm_sq_slice, laplacian_slice};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Neumann,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Periodic => "periodic",
            Boundary::Neumann => "neumann",
        })
    }
}

impl FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "periodic" => Ok(Boundary::Periodic),
            "neumann" => Ok(Boundary::Neumann),
            other => Err(Error::InvalidArgument(format!(
                "unknown boundary rule {other:?} (expected periodic or neumann)"
            ))),
        }
    }
}

/// Metadata of an axis-aligned square/cubic lattice with spacing `h = extent / M`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    m: usize,
    bc: Boundary,
    origin: [T; 3],
    extent: T,
    h: T,
    shape: [usize; 3],
}

impl<T: Scalar> Grid<T> {
    /// Unit box (or unit torus) `[0, 1]ⁿ`.
    pub fn unit(dim: usize, m: usize, bc: Boundary) -> Result<Self> {
        Self::new(dim, m, bc, [T::zero(); 3], T::one())
    }

    pub fn new(dim: usize, m: usize, bc: Boundary, origin: [T; 3], extent: T) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidArgument(format!(
                "grid dimension must be 2 or 3, got {dim}"
            )));
        }
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 cells per axis, got {m}"
            )));
        }
        if !(extent > T::zero() && extent.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "axis length must be positive and finite, got {extent}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument("origin must be finite".into()));
        }
        let per_axis = match bc {
            Boundary::Periodic => m,
            Boundary::Neumann => m + 1,
        };
        let mut shape = [1; 3];
        shape[..dim].fill(per_axis);
        let mut origin = origin;
        if dim == 2 {
            origin[2] = T::zero();
        }
        Ok(Grid {
            dim,
            m,
            bc,
            origin,
            extent,
            h: extent / T::from_usize_lossy(m),
            shape,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis `M`.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    #[inline]
    pub fn boundary(&self) -> Boundary {
        self.bc
    }

    #[inline]
    pub fn origin(&self) -> [T; 3] {
        self.origin
    }

    #[inline]
    pub fn extent(&self) -> T {
        self.extent
    }

    /// Nodes along each storage axis (collapsed axes report 1).
    #[inline]
    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.shape[0] * self.shape[1] * self.shape[2]
    }

    /// Quadrature weight `hⁿ` of a single node.
    #[inline]
    pub fn cell_volume(&self) -> T {
        self.h.powi(self.dim as i32)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.shape[0] && j < self.shape[1] && k < self.shape[2]);
        (i * self.shape[1] + j) * self.shape[2] + k
    }

    #[inline]
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let k = flat % self.shape[2];
        let rest = flat / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], k]
    }

    /// Physical coordinates of a node.
    pub fn coord(&self, flat: usize) -> [T; 3] {
        let idx = self.multi_index(flat);
        let mut x = self.origin;
        for a in 0..self.dim {
            x[a] = self.origin[a] + T::from_usize_lossy(idx[a]) * self.h;
        }
        x
    }

    #[inline]
    pub(crate) fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.shape[1] * self.shape[2],
            1 => self.shape[2],
            _ => 1,
        }
    }

    pub(crate) fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim {
            Ok(())
        } else {
            Err(Error::InvalidAxis {
                axis,
                dim: self.dim,
            })
        }
    }

    /// Neighbour lookup along one axis for the node `p` with axis index `idx`.
    #[inline]
    pub(crate) fn neighbours(&self, axis: usize, p: usize, idx: usize) -> Neighbours {
        let n = self.shape[axis];
        let s = self.stride(axis);
        let lower = idx == 0;
        let upper = idx + 1 == n;
        match self.bc {
            Boundary::Periodic => Neighbours {
                prev: if lower { p + (n - 1) * s } else { p - s },
                next: if upper { p - (n - 1) * s } else { p + s },
                lower_face: false,
                upper_face: false,
            },
            Boundary::Neumann => Neighbours {
                prev: if lower { p } else { p - s },
                next: if upper { p } else { p + s },
                lower_face: lower,
                upper_face: upper,
            },
        }
    }

    /// Same lattice geometry, compared with exact equality of the metadata.
    pub fn same_as(&self, other: &Self) -> bool {
        self == other
    }

    pub fn cast<U: Scalar>(&self) -> Grid<U> {
        Grid {
            dim: self.dim,
            m: self.m,
            bc: self.bc,
            origin: self.origin.map(|o| U::lit(o.to_f64_lossy())),
            extent: U::lit(self.extent.to_f64_lossy()),
            h: U::lit(self.extent.to_f64_lossy()) / U::from_usize_lossy(self.m),
            shape: self.shape,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Neighbours {
    pub prev: usize,
    pub next: usize,
    /// Node sits on a Neumann lower boundary face (no flux enters from below).
    pub lower_face: bool,
    /// Node sits on a Neumann upper boundary face (no flux leaves above).
    pub upper_face: bool,
}
