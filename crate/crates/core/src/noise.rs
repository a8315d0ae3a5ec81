//! Discrete space-time white noise.
//!
//! A [`NoiseSheet`] holds the increments `dW_{k,j} ~ N(0, dt dx)` of a
//! Brownian sheet over the cells `[t_k, t_{k+1}] x` (node `j`), one row per
//! time step and one column per interior node. Each sheet is a pure function
//! of its [`SeedSpec`], so paths can be generated in any order.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::{Control, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub path_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, path_index: u64) -> Self {
        SeedSpec {
            master_seed,
            path_index,
        }
    }

    /// Stream for path `path_index` of this master seed; a distinct ChaCha
    /// stream per path, so no two paths ever share keystream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.path_index);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSheet {
    grid: Grid,
    seed: Option<SeedSpec>,
    increments: Vec<f64>,
}

impl NoiseSheet {
    /// Wraps explicit increments, `nt` rows of `nx - 1` interior values.
    pub fn from_increments(grid: &Grid, increments: Vec<f64>) -> Result<Self> {
        check_len(grid.nt() * grid.n_interior(), increments.len())?;
        if increments.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("noise increments must be finite".into()));
        }
        Ok(NoiseSheet {
            grid: *grid,
            seed: None,
            increments,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        NoiseSheet {
            grid: *grid,
            seed: None,
            increments: vec![0.0; grid.nt() * grid.n_interior()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The seed the sheet was drawn from, if any.
    pub fn seed(&self) -> Option<SeedSpec> {
        self.seed
    }

    /// Increments of step `k`; entry `i` belongs to node `x_{i+1}`.
    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.grid.n_interior();
        &self.increments[k * n..(k + 1) * n]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `W(t_k, x_j)`: the sum of increments over steps `< k` and nodes `1..=j`.
    pub fn integrated(&self, k: usize, j: usize) -> f64 {
        let cols = j.min(self.grid.n_interior());
        (0..k.min(self.grid.nt()))
            .map(|r| self.row(r)[..cols].iter().sum::<f64>())
            .sum()
    }

    /// Debug dump: header `t,x_1..x_{nx-1}`, one row per step.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let g = self.grid;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..g.nx()).map(|j| g.x(j).to_string()));
        w.write_record(&header)?;
        for k in 0..g.nt() {
            let mut rec = vec![g.t(k).to_string()];
            rec.extend(self.row(k).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws i.i.d. `N(0, dt dx)` increments on the interior nodes of `g`.
pub fn sample_sheet(g: &Grid, s: SeedSpec) -> NoiseSheet {
    let scale = (g.dt() * g.dx()).sqrt();
    let mut rng = s.rng();
    let n = g.nt() * g.n_interior();
    let increments = (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    NoiseSheet {
        grid: *g,
        seed: Some(s),
        increments,
    }
}

fn check_control(w: &NoiseSheet, v: &Control) -> Result<()> {
    if w.grid() != v.grid() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// Sheet of `W + h int int v`: `dW_{k,j} + h v_{k,j} dt dx` on interior nodes.
pub fn girsanov_shift(w: &NoiseSheet, v: &Control, h: f64) -> Result<NoiseSheet> {
    check_control(w, v)?;
    let g = w.grid;
    let c = h * g.dt() * g.dx();
    let mut increments = w.increments.clone();
    for (k, row) in increments.chunks_exact_mut(g.n_interior()).enumerate() {
        let vr = &v.row(k)[1..g.nx()];
        for (dw, vk) in row.iter_mut().zip(vr) {
            *dw += c * vk;
        }
    }
    Ok(NoiseSheet {
        grid: g,
        seed: w.seed,
        increments,
    })
}

/// `log dQ/dP = -h sum v dW - (h^2/2) sum v^2 dt dx`, both sums over interior
/// nodes. The quadratic term equals `(h^2/2) ht_norm(v)^2` whenever `v`
/// vanishes on the boundary.
pub fn girsanov_log_density(w: &NoiseSheet, v: &Control, h: f64) -> Result<f64> {
    check_control(w, v)?;
    let g = w.grid;
    let mut linear = 0.0;
    let mut quadratic = 0.0;
    for k in 0..g.nt() {
        for (dw, vk) in w.row(k).iter().zip(&v.row(k)[1..g.nx()]) {
            linear += vk * dw;
            quadratic += vk * vk;
        }
    }
    Ok(-h * linear - 0.5 * h * h * quadratic * g.dt() * g.dx())
}
