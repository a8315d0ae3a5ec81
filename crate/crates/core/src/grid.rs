//! Uniform space-time lattice over `[0, T] x [0, 1]`, the fields that live on
//! it, and the discrete norms used throughout the crate.
//!
//! Spatial integrals use the trapezoid rule over the `nx + 1` nodes. Time
//! integrals over controls use the left-endpoint rule, matching the
//! forward-increment convention of the noise sheet.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Largest endpoint value that is snapped to an exact Dirichlet zero.
pub const BOUNDARY_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    nx: usize,
    nt: usize,
    horizon: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub nt: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(spec.nx, spec.nt, spec.horizon)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            nx: g.nx,
            nt: g.nt,
            horizon: g.horizon,
        }
    }
}

impl Grid {
    pub fn new(nx: usize, nt: usize, horizon: f64) -> Result<Self> {
        if nx < 4 || nt < 4 {
            return Err(Error::InvalidConfig(format!(
                "grid needs nx >= 4 and nt >= 4, got nx = {nx}, nt = {nt}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        Ok(Grid { nx, nt, horizon })
    }

    /// Number of spatial cells.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of time steps.
    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Spatial nodes including both boundary points.
    pub fn n_nodes(&self) -> usize {
        self.nx + 1
    }

    /// Interior nodes, where the noise and the unknowns live.
    pub fn n_interior(&self) -> usize {
        self.nx - 1
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 / self.nx as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        self.horizon * k as f64 / self.nt as f64
    }

    /// Trapezoid weight of spatial node `j`.
    pub fn weight(&self, j: usize) -> f64 {
        if j == 0 || j == self.nx {
            0.5 * self.dx()
        } else {
            self.dx()
        }
    }

    /// Same lattice with a different number of cells; used for refinement studies.
    pub fn with_nx(&self, nx: usize) -> Result<Self> {
        Grid::new(nx, self.nt, self.horizon)
    }

    pub fn with_nt(&self, nt: usize) -> Result<Self> {
        Grid::new(self.nx, nt, self.horizon)
    }
}

fn snap_boundary(values: &mut [f64]) -> Result<()> {
    let last = values.len() - 1;
    for idx in [0, last] {
        let v = values[idx];
        if !v.is_finite() || v.abs() > BOUNDARY_SNAP {
            return Err(Error::Domain(format!(
                "field violates the Dirichlet condition: value {v} at boundary node {idx}"
            )));
        }
        values[idx] = 0.0;
    }
    Ok(())
}

/// A field at a fixed time, sampled on all `nx + 1` nodes with zero endpoints.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SpaceField {
    values: Vec<f64>,
}

impl SpaceField {
    pub fn zeros(grid: &Grid) -> Self {
        SpaceField {
            values: vec![0.0; grid.n_nodes()],
        }
    }

    /// Wraps node values; endpoints within [`BOUNDARY_SNAP`] of zero are pinned to zero.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 5 {
            return Err(Error::Dimension {
                expected: 5,
                found: values.len(),
            });
        }
        let mut values = values;
        snap_boundary(&mut values)?;
        Ok(SpaceField { values })
    }

    /// Samples `f` at the grid nodes.
    pub fn sample(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_values((0..grid.n_nodes()).map(|j| f(grid.x(j))).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        SpaceField {
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }
}

/// A field on the full lattice: `nt + 1` frames of `nx + 1` node values.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: &Grid) -> Self {
        SpaceTimeField {
            grid: *grid,
            data: vec![0.0; (grid.nt() + 1) * grid.n_nodes()],
        }
    }

    /// Builds a field from row-major frame data, validating shape and boundary values.
    pub fn from_data(grid: &Grid, data: Vec<f64>) -> Result<Self> {
        let n = grid.n_nodes();
        check_len((grid.nt() + 1) * n, data.len())?;
        let mut data = data;
        for frame in data.chunks_exact_mut(n) {
            snap_boundary(frame)?;
        }
        Ok(SpaceTimeField { grid: *grid, data })
    }

    pub fn from_frames(grid: &Grid, frames: Vec<Vec<f64>>) -> Result<Self> {
        check_len(grid.nt() + 1, frames.len())?;
        let mut data = Vec::with_capacity((grid.nt() + 1) * grid.n_nodes());
        for frame in frames {
            check_len(grid.n_nodes(), frame.len())?;
            data.extend(frame);
        }
        Self::from_data(grid, data)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity((grid.nt() + 1) * grid.n_nodes());
        for k in 0..=grid.nt() {
            for j in 0..grid.n_nodes() {
                data.push(f(grid.t(k), grid.x(j)));
            }
        }
        Self::from_data(grid, data)
    }

    /// Crate-internal constructor for solver output that is zero on the boundary by construction.
    pub(crate) fn from_raw(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), (grid.nt() + 1) * grid.n_nodes());
        SpaceTimeField { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_frames(&self) -> usize {
        self.grid.nt() + 1
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn frame_field(&self, k: usize) -> SpaceField {
        SpaceField {
            values: self.frame(k).to_vec(),
        }
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.grid.n_nodes())
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        SpaceTimeField {
            grid: self.grid,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    /// `self + alpha * other`.
    pub fn axpy(&self, alpha: f64, other: &SpaceTimeField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(SpaceTimeField {
            grid: self.grid,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Element of the discretized control space `L^2([0,T] x [0,1])`.
///
/// One row per time step (left endpoints `t_0 .. t_{nt-1}`), one column per
/// spatial node. Boundary columns enter the norm but never the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    grid: Grid,
    values: Vec<f64>,
}

impl Control {
    pub fn zeros(grid: &Grid) -> Self {
        Control {
            grid: *grid,
            values: vec![0.0; grid.nt() * grid.n_nodes()],
        }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        check_len(grid.nt() * grid.n_nodes(), values.len())?;
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("control value {bad} is not finite")));
        }
        Ok(Control {
            grid: *grid,
            values,
        })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.nt() * grid.n_nodes());
        for k in 0..grid.nt() {
            for j in 0..grid.n_nodes() {
                values.push(f(grid.t(k), grid.x(j)));
            }
        }
        Control {
            grid: *grid,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.grid.n_nodes())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Control {
            grid: self.grid,
            values: self.values.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn axpy(&self, alpha: f64, other: &Control) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Control {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * b)
                .collect(),
        })
    }
}

pub(crate) fn l2_norm_slice(values: &[f64], grid: &Grid) -> f64 {
    weighted_sq_sum(values, grid).sqrt()
}

fn weighted_sq_sum(values: &[f64], grid: &Grid) -> f64 {
    let dx = grid.dx();
    let last = values.len() - 1;
    let interior: f64 = values[1..last].iter().map(|v| v * v).sum();
    dx * interior + 0.5 * dx * (values[0] * values[0] + values[last] * values[last])
}

/// Trapezoid `L^2([0,1])` norm of a spatial field.
pub fn l2_norm(f: &SpaceField, g: &Grid) -> Result<f64> {
    check_len(g.n_nodes(), f.len())?;
    Ok(l2_norm_slice(f.values(), g))
}

/// `sup_t ||u(t, .)||_2` over all frames.
pub fn sup_t_l2(u: &SpaceTimeField, g: &Grid) -> Result<f64> {
    if u.grid() != g {
        return Err(Error::GridMismatch);
    }
    Ok(u
        .frames()
        .map(|frame| l2_norm_slice(frame, g))
        .fold(0.0, f64::max))
}

/// Discrete `L^2([0,T] x [0,1])` norm of a control.
pub fn ht_norm(v: &Control, g: &Grid) -> Result<f64> {
    if v.grid() != g {
        return Err(Error::GridMismatch);
    }
    Ok(ht_inner(v, v)?.sqrt())
}

/// Inner product matching [`ht_norm`].
pub fn ht_inner(v: &Control, z: &Control) -> Result<f64> {
    if v.grid() != z.grid() {
        return Err(Error::GridMismatch);
    }
    let g = v.grid();
    let mut total = 0.0;
    for (rv, rz) in v.rows().zip(z.rows()) {
        total += rv
            .iter()
            .zip(rz)
            .enumerate()
            .map(|(j, (a, b))| g.weight(j) * a * b)
            .sum::<f64>();
    }
    Ok(g.dt() * total)
}

/// Space-time pairing `sum_k dt sum_j w_j a b` over frames `1..=nt`.
///
/// Frame 0 is excluded: every field produced by a control starts at zero.
pub fn spacetime_inner(a: &SpaceTimeField, b: &SpaceTimeField) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let g = a.grid();
    let mut total = 0.0;
    for (fa, fb) in a.frames().zip(b.frames()).skip(1) {
        total += fa
            .iter()
            .zip(fb)
            .enumerate()
            .map(|(j, (x, y))| g.weight(j) * x * y)
            .sum::<f64>();
    }
    Ok(g.dt() * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(nx: usize) -> Grid {
        Grid::new(nx, 8, 1.0).unwrap()
    }

    #[test]
    fn grid_rejects_small_or_bad_dimensions() {
        assert!(Grid::new(3, 8, 1.0).is_err());
        assert!(Grid::new(8, 3, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0).is_err());
        assert!(Grid::new(8, 8, f64::NAN).is_err());
    }

    #[test]
    fn nodes_are_exact_multiples() {
        let g = Grid::new(10, 4, 2.0).unwrap();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(10), 1.0);
        assert_eq!(g.t(4), 2.0);
        assert_eq!(g.dt(), 0.5);
    }

    #[test]
    fn zero_field_has_zero_norm() {
        let g = grid(16);
        assert_eq!(l2_norm(&SpaceField::zeros(&g), &g).unwrap(), 0.0);
    }

    #[test]
    fn sine_norm_matches_quadrature_oracle() {
        // Oracle: composite Simpson on 20000 panels of sin^2(pi x).
        let m = 20_000;
        let h = 1.0 / m as f64;
        let s: f64 = (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * (PI * i as f64 * h).sin().powi(2)
            })
            .sum::<f64>()
            * h
            / 3.0;
        assert!((s - 0.5).abs() < 1e-12);
        let g = grid(200);
        let f = SpaceField::sample(&g, |x| (PI * x).sin()).unwrap();
        let n = l2_norm(&f, &g).unwrap();
        assert!((n - s.sqrt()).abs() < 1e-4, "{n}");
    }

    #[test]
    fn norm_is_homogeneous() {
        let g = grid(32);
        let f = SpaceField::sample(&g, |x| x * (1.0 - x) * (3.0 * x).cos()).unwrap();
        let a = l2_norm(&f.scaled(-3.0), &g).unwrap();
        let b = 3.0 * l2_norm(&f, &g).unwrap();
        assert!((a - b).abs() <= 1e-15 * b);
    }

    #[test]
    fn length_mismatch_is_dimension_error() {
        let g = grid(16);
        let f = SpaceField::zeros(&grid(8));
        assert!(matches!(l2_norm(&f, &g), Err(Error::Dimension { .. })));
    }

    #[test]
    fn dirichlet_violation_is_rejected() {
        assert!(SpaceField::from_values(vec![1.0, 2.0, 3.0, 4.0, 0.0]).is_err());
        let f = SpaceField::from_values(vec![1e-16, 2.0, 3.0, 4.0, -1e-17]).unwrap();
        assert_eq!(f.values()[0], 0.0);
        assert_eq!(f.values()[4], 0.0);
    }

    fn simpson(f: impl Fn(f64) -> f64) -> f64 {
        let m = 200_000;
        let h = 1.0 / m as f64;
        (0..=m)
            .map(|i| {
                let w = if i == 0 || i == m {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    #[test]
    fn refinement_error_ratio_is_second_order() {
        let exact = 0.5 * (std::f64::consts::E.powi(2) - 1.0);
        let err = |nx: usize| {
            let g = grid(nx);
            let values: Vec<f64> = (0..=nx).map(|j| g.x(j).exp()).collect();
            (l2_norm_slice(&values, &g).powi(2) - exact).abs()
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        for ratio in [e1 / e2, e2 / e3] {
            assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn dirichlet_fields_converge_at_least_second_order() {
        // f^2 has vanishing slope at both ends, so the trapezoid rule gains two orders.
        let exact = simpson(|x| (x * (1.0 - x) * x.exp()).powi(2));
        let err = |nx: usize| {
            let g = grid(nx);
            let f = SpaceField::sample(&g, |x| x * (1.0 - x) * x.exp()).unwrap();
            (l2_norm(&f, &g).unwrap().powi(2) - exact).abs()
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        for ratio in [e1 / e2, e2 / e3] {
            assert!(ratio >= 3.0, "ratio {ratio}");
        }
    }

    #[test]
    fn sup_t_l2_cases() {
        let g = grid(16);
        let zero = SpaceTimeField::zeros(&g);
        assert_eq!(sup_t_l2(&zero, &g).unwrap(), 0.0);

        let f = SpaceField::sample(&g, |x| (PI * x).sin()).unwrap();
        let single = SpaceTimeField::from_fn(&g, |t, x| {
            if (t - g.t(3)).abs() < 1e-12 {
                (PI * x).sin()
            } else {
                0.0
            }
        })
        .unwrap();
        assert_eq!(sup_t_l2(&single, &g).unwrap(), l2_norm(&f, &g).unwrap());
    }

    #[test]
    fn sup_t_l2_is_monotone_under_added_frames() {
        let g = Grid::new(16, 6, 0.6).unwrap();
        let u = SpaceTimeField::from_fn(&g, |t, x| t * (PI * x).sin()).unwrap();
        let before = sup_t_l2(&u, &g).unwrap();
        let bigger = Grid::new(16, 7, 0.7).unwrap();
        let mut frames: Vec<Vec<f64>> = u.frames().map(|f| f.to_vec()).collect();
        frames.push(vec![0.0; 17]);
        let v = SpaceTimeField::from_frames(&bigger, frames).unwrap();
        assert!(sup_t_l2(&v, &bigger).unwrap() >= before);
    }

    #[test]
    fn ht_norm_of_constants_and_sine() {
        let g = Grid::new(32, 16, 2.5).unwrap();
        assert_eq!(ht_norm(&Control::zeros(&g), &g).unwrap(), 0.0);
        let one = Control::from_fn(&g, |_, _| 1.0);
        assert!((ht_norm(&one, &g).unwrap() - 2.5_f64.sqrt()).abs() < 1e-12);

        let g1 = Grid::new(400, 16, 1.0).unwrap();
        let s = Control::from_fn(&g1, |_, x| (PI * x).sin());
        let n = ht_norm(&s, &g1).unwrap();
        assert!((n - 0.5_f64.sqrt()).abs() < 1e-5, "{n}");
    }

    fn field_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-5.0..5.0f64, 15),
            prop::collection::vec(-5.0..5.0f64, 15),
        )
    }

    proptest! {
        #[test]
        fn norms_satisfy_triangle_inequality((a, b) in field_strategy(), alpha in -4.0..4.0f64) {
            let g = grid(16);
            let wrap = |v: &Vec<f64>| {
                let mut full = vec![0.0];
                full.extend(v);
                full.push(0.0);
                SpaceField::from_values(full).unwrap()
            };
            let (fa, fb) = (wrap(&a), wrap(&b));
            let sum = SpaceField::from_values(
                fa.values().iter().zip(fb.values()).map(|(x, y)| x + y).collect(),
            ).unwrap();
            let na = l2_norm(&fa, &g).unwrap();
            let nb = l2_norm(&fb, &g).unwrap();
            prop_assert!(l2_norm(&sum, &g).unwrap() <= na + nb + 1e-12);
            let scaled = l2_norm(&fa.scaled(alpha), &g).unwrap();
            prop_assert!((scaled - alpha.abs() * na).abs() <= 1e-12 * (1.0 + na));

            let ga = Grid::new(16, 4, 1.0).unwrap();
            let ca = Control::from_fn(&ga, |t, x| a[(t * 3.0) as usize % 15] * x);
            let cb = Control::from_fn(&ga, |t, x| b[(x * 14.0) as usize] * (1.0 + t));
            let csum = ca.axpy(1.0, &cb).unwrap();
            let (ha, hb) = (ht_norm(&ca, &ga).unwrap(), ht_norm(&cb, &ga).unwrap());
            prop_assert!(ht_norm(&csum, &ga).unwrap() <= ha + hb + 1e-12);
            prop_assert!((ht_norm(&ca.scaled(alpha), &ga).unwrap() - alpha.abs() * ha).abs() <= 1e-12 * (1.0 + ha));

            let ua = SpaceTimeField::from_fn(&ga, |t, x| a[(t * 3.0) as usize % 15] * x * (1.0 - x)).unwrap();
            let ub = SpaceTimeField::from_fn(&ga, |t, x| b[(x * 14.0) as usize] * t * x * (1.0 - x)).unwrap();
            let usum = ua.axpy(1.0, &ub).unwrap();
            let (sa, sb) = (sup_t_l2(&ua, &ga).unwrap(), sup_t_l2(&ub, &ga).unwrap());
            prop_assert!(sup_t_l2(&usum, &ga).unwrap() <= sa + sb + 1e-12);
        }
    }
}
