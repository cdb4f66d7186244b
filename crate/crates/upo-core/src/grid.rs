//! The equidistant input grid: integer indices mapped to real inputs by a
//! fixed spacing, optionally confined to an index interval.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("grid bounds must satisfy min < max, got [{0}, {1}]")]
    InvalidBounds(i64, i64),
    #[error("grid index {index} outside bounds [{min}, {max}]")]
    OutOfBounds { index: i64, min: i64, max: i64 },
}

/// Equidistant input set `u = i * spacing` for integer `i`, with optional
/// index bounds (e.g. a duty cycle confined to (0, 1)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputGrid {
    spacing: f64,
    bounds: Option<(i64, i64)>,
}

impl InputGrid {
    /// Unbounded grid over all integers.
    pub fn new(spacing: f64) -> Result<Self, GridError> {
        if !(spacing > 0.0) {
            return Err(GridError::NonPositiveSpacing(spacing));
        }
        Ok(Self { spacing, bounds: None })
    }

    /// Grid confined to index interval `[min, max]` (inclusive).
    pub fn bounded(spacing: f64, min: i64, max: i64) -> Result<Self, GridError> {
        if !(spacing > 0.0) {
            return Err(GridError::NonPositiveSpacing(spacing));
        }
        if min >= max {
            return Err(GridError::InvalidBounds(min, max));
        }
        Ok(Self { spacing, bounds: Some((min, max)) })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn bounds(&self) -> Option<(i64, i64)> {
        self.bounds
    }

    /// Real input value of grid index `i`.
    pub fn input(&self, i: i64) -> f64 {
        i as f64 * self.spacing
    }

    pub fn contains(&self, i: i64) -> bool {
        match self.bounds {
            Some((lo, hi)) => (lo..=hi).contains(&i),
            None => true,
        }
    }

    pub fn check_bounds(&self, i: i64) -> Result<(), GridError> {
        match self.bounds {
            Some((min, max)) if !(min..=max).contains(&i) => {
                Err(GridError::OutOfBounds { index: i, min, max })
            }
            _ => Ok(()),
        }
    }

    /// Clamp an index into bounds (identity on unbounded grids).
    pub fn clamp(&self, i: i64) -> i64 {
        match self.bounds {
            Some((lo, hi)) => i.clamp(lo, hi),
            None => i,
        }
    }

    /// Midpoint index of a bounded grid, used as the default start input.
    pub fn midpoint_index(&self) -> i64 {
        match self.bounds {
            Some((lo, hi)) => lo + (hi - lo) / 2,
            None => 0,
        }
    }
}
