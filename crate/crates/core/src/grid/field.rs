use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::par;
use crate::scalar::{NodeValue, Scalar, Vec3};

/// One value per grid node.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T, V> {
    grid: Grid<T>,
    values: Vec<V>,
}

pub type ScalarField<T> = Field<T, T>;
pub type VectorField<T> = Field<T, Vec3<T>>;

impl<T: Scalar, V: NodeValue<T>> Field<T, V> {
    /// Wraps node values, checking length and finiteness.
    pub fn new(grid: Grid<T>, values: Vec<V>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} node values, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        if let Some(node) = values.iter().position(|v| !v.all_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(Field { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid<T>, values: Vec<V>) -> Self {
        debug_assert_eq!(values.len(), grid.node_count());
        Field { grid, values }
    }

    pub fn zeros(grid: Grid<T>) -> Self {
        Self::constant(grid, V::zero())
    }

    pub fn constant(grid: Grid<T>, value: V) -> Self {
        Field {
            grid,
            values: vec![value; grid.node_count()],
        }
    }

    /// Samples `f` at every node coordinate.
    pub fn from_fn(grid: Grid<T>, f: impl Fn([T; 3]) -> V + Sync) -> Self {
        let mut values = vec![V::zero(); grid.node_count()];
        par::fill_nodes(&mut values, |p| f(grid.coord(p)));
        Field { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[V] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [V] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<V> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_same_grid<W>(&self, other: &Field<T, W>) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.all_finite()) {
            Some(node) => Err(Error::NonFinite { node }),
            None => Ok(()),
        }
    }

    pub fn map<W: NodeValue<T>>(&self, f: impl Fn(V) -> W + Sync) -> Field<T, W> {
        let mut out = vec![W::zero(); self.len()];
        par::fill_nodes(&mut out, |p| f(self.values[p]));
        Field::from_vec_unchecked(self.grid, out)
    }

    pub fn zip_map<U: NodeValue<T>, W: NodeValue<T>>(
        &self,
        other: &Field<T, U>,
        f: impl Fn(V, U) -> W + Sync,
    ) -> Result<Field<T, W>> {
        self.check_same_grid(other)?;
        let mut out = vec![W::zero(); self.len()];
        par::fill_nodes(&mut out, |p| f(self.values[p], other.values[p]));
        Ok(Field::from_vec_unchecked(self.grid, out))
    }

    /// `self + other · s`
    pub fn axpy(&self, s: T, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b * s)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }
}

impl<T: Scalar> VectorField<T> {
    /// One Cartesian component as a scalar field.
    pub fn component(&self, c: usize) -> ScalarField<T> {
        assert!(c < 3, "component index {c} out of range");
        self.map(|v| v[c])
    }

    pub fn from_components(components: [&ScalarField<T>; 3]) -> Result<Self> {
        components[0].check_same_grid(components[1])?;
        components[0].check_same_grid(components[2])?;
        let grid = *components[0].grid();
        let values = (0..grid.node_count())
            .map(|p| Vec3::new(components[0].values[p], components[1].values[p], components[2].values[p]))
            .collect();
        Ok(Field::from_vec_unchecked(grid, values))
    }

    /// Node-wise cross product `self × other`.
    pub fn cross(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a.cross(b))
    }

    /// Largest deviation of a node's length from one.
    pub fn max_unit_deviation(&self) -> T {
        self.values
            .iter()
            .map(|v| (v.norm() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> VectorField<U> {
        Field {
            grid: self.grid.cast(),
            values: self.values.iter().map(|v| v.cast()).collect(),
        }
    }
}
