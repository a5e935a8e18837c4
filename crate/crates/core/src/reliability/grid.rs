//! Named N-dimensional lookup tables with multilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::ReliabilityError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub points: Vec<f64>,
}

impl Axis {
    pub fn new(name: &str, points: &[f64]) -> Self {
        Axis { name: name.to_string(), points: points.to_vec() }
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Lower corner index and weight of the upper corner. Clamps `x` into range.
    fn locate(&self, x: f64) -> (usize, f64, bool) {
        let n = self.points.len();
        if n == 1 {
            return (0, 0.0, x != self.points[0]);
        }
        if x <= self.points[0] {
            return (0, 0.0, x < self.points[0]);
        }
        if x >= self.points[n - 1] {
            return (n - 2, 1.0, x > self.points[n - 1]);
        }
        // first point strictly greater than x
        let hi = self.points.partition_point(|&p| p <= x);
        let lo = hi - 1;
        let w = (x - self.points[lo]) / (self.points[hi] - self.points[lo]);
        (lo, w, false)
    }
}

/// Values stored row-major: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
}

/// An interpolated value and whether any coordinate had to be clamped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lookup {
    pub value: f64,
    pub clamped: bool,
}

impl Grid {
    pub fn new(axes: Vec<Axis>, values: Vec<f64>) -> Result<Self, ReliabilityError> {
        let g = Grid { axes, values };
        g.validate()?;
        Ok(g)
    }

    /// Builds a grid by evaluating `f` at every node.
    pub fn tabulate(axes: Vec<Axis>, f: impl Fn(&[f64]) -> f64) -> Result<Self, ReliabilityError> {
        let shape: Vec<usize> = axes.iter().map(|a| a.points.len()).collect();
        let total: usize = shape.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes.len()];
        let mut coords = vec![0.0; axes.len()];
        for _ in 0..total {
            for (d, &i) in idx.iter().enumerate() {
                coords[d] = axes[d].points[i];
            }
            values.push(f(&coords));
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Grid::new(axes, values)
    }

    pub fn validate(&self) -> Result<(), ReliabilityError> {
        if self.axes.is_empty() {
            return Err(ReliabilityError::Calibration("grid without axes".into()));
        }
        for a in &self.axes {
            if a.points.is_empty() {
                return Err(ReliabilityError::Calibration(format!("axis `{}` has no points", a.name)));
            }
            if a.points.iter().any(|p| !p.is_finite()) || a.points.windows(2).any(|w| w[0] >= w[1]) {
                return Err(ReliabilityError::Calibration(format!(
                    "axis `{}` must be finite and strictly increasing",
                    a.name
                )));
            }
        }
        let expected: usize = self.axes.iter().map(|a| a.points.len()).product();
        if self.values.len() != expected {
            return Err(ReliabilityError::Calibration(format!(
                "grid over {:?} needs {expected} values, found {}",
                self.axis_names(),
                self.values.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(ReliabilityError::Calibration("grid contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn axis_names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn axis(&self, name: &str) -> Option<&Axis> {
        self.axes.iter().find(|a| a.name == name)
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.axes.len()];
        for d in (0..self.axes.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * self.axes[d + 1].points.len();
        }
        strides
    }

    pub fn at(&self, idx: &[usize]) -> f64 {
        let offset: usize = idx.iter().zip(self.strides()).map(|(i, s)| i * s).sum();
        self.values[offset]
    }

    pub fn interpolate(&self, coords: &[f64]) -> Lookup {
        assert_eq!(coords.len(), self.axes.len(), "coordinate arity");
        let strides = self.strides();
        let located: Vec<(usize, f64, bool)> = self.axes.iter().zip(coords).map(|(a, &x)| a.locate(x)).collect();
        let clamped = located.iter().any(|l| l.2);
        let dims = self.axes.len();
        let mut value = 0.0;
        for corner in 0..(1usize << dims) {
            let mut weight = 1.0;
            let mut offset = 0;
            for d in 0..dims {
                let (lo, w, _) = located[d];
                let upper = corner >> d & 1 == 1;
                if upper {
                    if w == 0.0 {
                        weight = 0.0;
                        break;
                    }
                    weight *= w;
                    offset += (lo + 1) * strides[d];
                } else {
                    weight *= 1.0 - w;
                    offset += lo * strides[d];
                }
            }
            if weight != 0.0 {
                value += weight * self.values[offset];
            }
        }
        Lookup { value, clamped }
    }

    /// Checks that values never decrease (or never increase) along `axis`.
    pub fn check_monotone(&self, axis: &str, non_decreasing: bool) -> Result<(), ReliabilityError> {
        let d = self
            .axes
            .iter()
            .position(|a| a.name == axis)
            .ok_or_else(|| ReliabilityError::Calibration(format!("missing axis `{axis}`")))?;
        let strides = self.strides();
        let n = self.axes[d].points.len();
        for (offset, &v) in self.values.iter().enumerate() {
            let i = offset / strides[d] % n;
            if i + 1 < n {
                let next = self.values[offset + strides[d]];
                let ok = if non_decreasing { next >= v } else { next <= v };
                if !ok {
                    return Err(ReliabilityError::Calibration(format!(
                        "values not {} along `{axis}`",
                        if non_decreasing { "non-decreasing" } else { "non-increasing" }
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane() -> Grid {
        // f(x, y) = 2x + 3y + 1 is reproduced exactly by bilinear interpolation
        Grid::tabulate(vec![Axis::new("x", &[0.0, 1.0, 4.0]), Axis::new("y", &[0.0, 10.0])], |c| {
            2.0 * c[0] + 3.0 * c[1] + 1.0
        })
        .unwrap()
    }

    #[test]
    fn nodes_and_interior() {
        let g = plane();
        assert_eq!(g.at(&[2, 1]), 2.0 * 4.0 + 30.0 + 1.0);
        let l = g.interpolate(&[2.5, 3.0]);
        assert!((l.value - (5.0 + 9.0 + 1.0)).abs() < 1e-12);
        assert!(!l.clamped);
    }

    #[test]
    fn clamps_outside_range() {
        let g = plane();
        let l = g.interpolate(&[10.0, -5.0]);
        assert!(l.clamped);
        assert_eq!(l.value, g.at(&[2, 0]));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(vec![Axis::new("x", &[0.0, 1.0])], vec![1.0]).is_err());
        assert!(Grid::new(vec![Axis::new("x", &[1.0, 1.0])], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn monotone_check() {
        let g = plane();
        g.check_monotone("x", true).unwrap();
        g.check_monotone("y", true).unwrap();
        assert!(g.check_monotone("x", false).is_err());
    }

    #[test]
    fn single_point_axis() {
        let g = Grid::new(vec![Axis::new("x", &[3.0]), Axis::new("y", &[0.0, 1.0])], vec![5.0, 7.0]).unwrap();
        assert_eq!(g.interpolate(&[3.0, 0.5]).value, 6.0);
    }
}
