//! Implicit diffusion step `(I - dt L) u = rhs` for the Dirichlet Laplacian.

use crate::grid::Grid;

/// Thomas factorization of the constant tridiagonal matrix `I - dt L`
/// acting on the `nx - 1` interior nodes.
#[derive(Debug, Clone)]
pub(crate) struct ImplicitHeat {
    off: f64,
    c_prime: Vec<f64>,
    inv_denom: Vec<f64>,
}

impl ImplicitHeat {
    pub(crate) fn new(g: &Grid) -> Self {
        let n = g.n_interior();
        let r = g.dt() / (g.dx() * g.dx());
        let (diag, off) = (1.0 + 2.0 * r, -r);
        let mut c_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        let mut prev = 0.0;
        for i in 0..n {
            let denom = diag - off * prev;
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = off / denom;
            prev = c_prime[i];
        }
        ImplicitHeat {
            off,
            c_prime,
            inv_denom,
        }
    }

    /// Overwrites the interior right-hand side with the solution.
    pub(crate) fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        debug_assert_eq!(n, self.c_prime.len());
        let mut prev = 0.0;
        for (xi, inv) in x.iter_mut().zip(&self.inv_denom) {
            *xi = (*xi - self.off * prev) * inv;
            prev = *xi;
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.c_prime[i] * x[i + 1];
        }
    }
}

/// Adds `scale * (f_{j+1} - f_{j-1}) / (2 dx)` for each interior node `j` of
/// the full-length array `f` into `out` (interior-indexed).
pub(crate) fn add_central_difference(f: &[f64], scale_over_2dx: f64, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += scale_over_2dx * (f[i + 2] - f[i]);
    }
}
