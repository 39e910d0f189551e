//! Complex and real samples on a [`RadialGrid`].

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::C64;

/// Complex-valued field `u(r_i)`.
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<C64>,
    pub label: String,
}

/// Real-valued field, e.g. an energy density.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

pub(crate) fn same_grid(a: &Arc<RadialGrid>, b: &Arc<RadialGrid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(alloc::format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Config("field values must be finite".into()));
        }
        Ok(RadialField { grid, values, label: String::new() })
    }

    /// Construct without the finiteness check (stepper internals).
    pub(crate) fn from_raw(grid: Arc<RadialGrid>, values: Vec<C64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        RadialField { grid, values, label: String::new() }
    }

    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self::from_raw(grid.clone(), alloc::vec![C64::new(0.0, 0.0); n])
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> C64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::from_raw(grid.clone(), values)
    }

    pub fn from_real_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |r| C64::new(f(r), 0.0))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[C64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<C64> {
        self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn check_same_grid(&self, other: &RadialField) -> Result<()> {
        if same_grid(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::Dimension("fields live on different grids".into()))
        }
    }

    pub fn map(&self, f: impl Fn(f64, C64) -> C64) -> RadialField {
        let values = self.grid.nodes().iter().zip(&self.values).map(|(&r, &v)| f(r, v)).collect();
        RadialField::from_raw(self.grid.clone(), values)
    }

    pub fn scale(&self, c: C64) -> RadialField {
        self.map(|_, v| v * c)
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: C64, other: &RadialField) -> Result<RadialField> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect();
        Ok(RadialField::from_raw(self.grid.clone(), values))
    }

    pub fn add(&self, other: &RadialField) -> Result<RadialField> {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &RadialField) -> Result<RadialField> {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    pub fn re(&self) -> ScalarField {
        ScalarField::from_raw(self.grid.clone(), self.values.iter().map(|v| v.re).collect())
    }

    pub fn im(&self) -> ScalarField {
        ScalarField::from_raw(self.grid.clone(), self.values.iter().map(|v| v.im).collect())
    }

    pub fn abs(&self) -> ScalarField {
        ScalarField::from_raw(self.grid.clone(), self.values.iter().map(|v| v.norm()).collect())
    }
}

impl ScalarField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(alloc::format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("field values must be finite".into()));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_raw(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_complex(&self) -> RadialField {
        RadialField::from_raw(self.grid.clone(), self.values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }
}
