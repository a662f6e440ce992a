//! Uniform grids for the rod/beam pair and the order-reduced midpoint
//! operators.
//!
//! Both sides carry `N` interior nodes plus their two endpoints, so each
//! side has spacing `h = L / (N + 1)`. Rod coordinates run left to right
//! from the clamped (Dirichlet) end at 0 to the interface at `l1`; beam
//! coordinates run from the interface at 0 to the controlled tip at `l2`.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("need at least 2 interior nodes per side, got {0}")]
    NTooSmall(usize),
    #[error("side length `{name}` must be positive, got {value}")]
    NonPositiveLength { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("midpoint index {index} out of range for {len} node values")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Node and midpoint coordinates for one rod/beam discretisation level.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    /// Number of interior nodes per side.
    pub n: usize,
    /// Rod length.
    pub l1: f64,
    /// Beam length.
    pub l2: f64,
    /// Rod spacing `l1 / (N + 1)`.
    pub h1: f64,
    /// Beam spacing `l2 / (N + 1)`.
    pub h2: f64,
    rod_nodes: Vec<f64>,
    beam_nodes: Vec<f64>,
    beam_midpoints: Vec<f64>,
}

impl Grid {
    /// Rod node coordinates `x_0 = 0 .. x_{N+1} = l1` (interface last).
    #[must_use]
    pub fn rod_nodes(&self) -> &[f64] {
        &self.rod_nodes
    }

    /// Beam node coordinates `x_0 = 0 .. x_{N+1} = l2` (interface first).
    #[must_use]
    pub fn beam_nodes(&self) -> &[f64] {
        &self.beam_nodes
    }

    /// Beam cell midpoints `x_{j+1/2}`, exactly `(x_j + x_{j+1}) / 2`.
    #[must_use]
    pub fn beam_midpoints(&self) -> &[f64] {
        &self.beam_midpoints
    }
}

/// Builds the two one-sided grids; `n` is the interior node count per side.
pub fn build_grid(n: usize, l1: f64, l2: f64) -> Result<Grid, GridError> {
    if n < 2 {
        return Err(GridError::NTooSmall(n));
    }
    for (name, value) in [("l1", l1), ("l2", l2)] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(GridError::NonPositiveLength { name, value });
        }
    }
    let cells = (n + 1) as f64;
    // Nodes as length * (k / (N+1)) so the last node lands on L exactly.
    let nodes = |len: f64| -> Vec<f64> {
        (0..=n + 1).map(|k| len * (k as f64) / cells).collect()
    };
    let beam_nodes = nodes(l2);
    let beam_midpoints = beam_nodes
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect();
    Ok(Grid {
        n,
        l1,
        l2,
        h1: l1 / cells,
        h2: l2 / cells,
        rod_nodes: nodes(l1),
        beam_nodes,
        beam_midpoints,
    })
}

/// Average of a node field onto cell midpoint `j`: `(f_j + f_{j+1}) / 2`.
pub fn midpoint_average(values: &[f64], j: usize) -> Result<f64, OperatorError> {
    if j + 1 >= values.len() {
        return Err(OperatorError::IndexOutOfRange { index: j, len: values.len() });
    }
    Ok(0.5 * (values[j] + values[j + 1]))
}

/// Difference quotient of a node field at cell midpoint `j`:
/// `(f_{j+1} - f_j) / h`.
pub fn midpoint_difference(values: &[f64], j: usize, h: f64) -> Result<f64, OperatorError> {
    if j + 1 >= values.len() {
        return Err(OperatorError::IndexOutOfRange { index: j, len: values.len() });
    }
    Ok((values[j + 1] - values[j]) / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn endpoints_and_midpoints_are_exact() {
        let g = build_grid(7, 0.3, 2.5).unwrap();
        assert_eq!(g.rod_nodes().len(), 9);
        assert_eq!(g.rod_nodes()[0], 0.0);
        assert_eq!(g.rod_nodes()[8], 0.3);
        assert_eq!(g.beam_nodes()[8], 2.5);
        for (j, &m) in g.beam_midpoints().iter().enumerate() {
            assert_eq!(m, 0.5 * (g.beam_nodes()[j] + g.beam_nodes()[j + 1]));
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert_eq!(build_grid(1, 1.0, 1.0), Err(GridError::NTooSmall(1)));
        assert!(matches!(
            build_grid(4, 0.0, 1.0),
            Err(GridError::NonPositiveLength { name: "l1", .. })
        ));
    }

    #[test]
    fn operators_reject_out_of_range() {
        let v = [1.0, 2.0, 3.0];
        assert!(midpoint_average(&v, 2).is_err());
        assert!(midpoint_difference(&v, 5, 0.1).is_err());
    }

    #[test]
    fn constant_field_has_exact_average_and_zero_difference() {
        let v = vec![0.75; 12];
        for j in 0..11 {
            assert_eq!(midpoint_average(&v, j).unwrap(), 0.75);
            assert_eq!(midpoint_difference(&v, j, 0.2).unwrap(), 0.0);
        }
    }

    #[test]
    fn midpoint_difference_is_second_order_on_sine() {
        // (f_{j+1} - f_j)/h approximates f'(x_{j+1/2}) to O(h^2).
        let errors: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| {
                let g = build_grid(n, 1.0, 1.0).unwrap();
                let f: Vec<f64> = g
                    .beam_nodes()
                    .iter()
                    .map(|&x| (std::f64::consts::PI * x).sin())
                    .collect();
                (0..=n)
                    .map(|j| {
                        let exact = std::f64::consts::PI
                            * (std::f64::consts::PI * g.beam_midpoints()[j]).cos();
                        (midpoint_difference(&f, j, g.h2).unwrap() - exact).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let order1 = (errors[0] / errors[1]).log2();
        let order2 = (errors[1] / errors[2]).log2();
        assert!(order1 > 1.9, "observed order {order1}");
        assert!(order2 > 1.9, "observed order {order2}");
        assert_relative_eq!(errors[2], 0.0, epsilon = 1e-3);
    }
}
