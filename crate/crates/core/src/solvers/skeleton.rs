use super::{add_central_difference, Guard, ImplicitHeat, SigmaSpec, SolverConfig};
use crate::error::{Error, Result};
use crate::grid::{Control, Grid, SpaceField, SpaceTimeField};

/// Transport coefficient `c` of the skeleton equation as usually printed,
/// `w = -2 int int d_y G w u0 + int int G sigma(u0) v`.
///
/// Linearizing the flux `(u^2/2)_x` instead gives `c = 1`; see
/// [`SkeletonContext::with_transport`].
pub const VERBATIM_TRANSPORT: f64 = 2.0;

/// Everything the linear skeleton map `v -> w` needs besides the control:
/// the deterministic limit, `sigma` evaluated along it and the transport
/// coefficient `c` in `w_t = w_xx + c (u0 w)_x + sigma(u0) v`.
#[derive(Debug, Clone)]
pub struct SkeletonContext {
    u_det: SpaceTimeField,
    sigma_det: Vec<f64>,
    transport: f64,
    heat: ImplicitHeat,
}

impl SkeletonContext {
    pub fn new(u_det: SpaceTimeField, sigma: &SigmaSpec) -> Self {
        let g = *u_det.grid();
        let mut sigma_det = Vec::with_capacity(g.nt() * g.n_interior());
        for k in 0..g.nt() {
            sigma_det.extend(u_det.frame(k)[1..g.nx()].iter().map(|u| sigma.eval(*u)));
        }
        SkeletonContext {
            heat: ImplicitHeat::new(&g),
            u_det,
            sigma_det,
            transport: VERBATIM_TRANSPORT,
        }
    }

    /// Solves the deterministic limit from `u0` and builds the context on it.
    pub fn from_initial(u0: &SpaceField, g: &Grid, sigma: &SigmaSpec, cfg: &SolverConfig) -> Result<Self> {
        Ok(SkeletonContext::new(super::solve_deterministic(u0, g, cfg)?, sigma))
    }

    pub fn with_transport(mut self, c: f64) -> Self {
        self.transport = c;
        self
    }

    pub fn grid(&self) -> &Grid {
        self.u_det.grid()
    }

    pub fn u_det(&self) -> &SpaceTimeField {
        &self.u_det
    }

    pub fn transport(&self) -> f64 {
        self.transport
    }

    pub(crate) fn sigma_row(&self, k: usize) -> &[f64] {
        let n = self.grid().n_interior();
        &self.sigma_det[k * n..(k + 1) * n]
    }

    /// The skeleton solution driven by `v`, frames `0..=nt` starting from zero.
    pub fn forward(&self, v: &Control) -> Result<SpaceTimeField> {
        let g = *self.grid();
        if v.grid() != &g {
            return Err(Error::GridMismatch);
        }
        let guard = Guard::new(&g);
        let (nx, dt, dx) = (g.nx(), g.dt(), g.dx());
        let c = self.transport;
        let mut w = vec![0.0; nx + 1];
        let mut flux = vec![0.0; nx + 1];
        let mut rhs = vec![0.0; nx - 1];
        let mut data = Vec::with_capacity((g.nt() + 1) * g.n_nodes());
        data.extend_from_slice(&w);
        for k in 0..g.nt() {
            let ud = self.u_det.frame(k);
            guard.cfl(k, c.abs() * ud.iter().fold(0.0f64, |m, u| m.max(u.abs())))?;
            for ((f, p), q) in flux.iter_mut().zip(ud).zip(&w) {
                *f = p * q;
            }
            rhs.copy_from_slice(&w[1..nx]);
            add_central_difference(&flux, c * dt / (2.0 * dx), &mut rhs);
            for ((r, s), vk) in rhs.iter_mut().zip(self.sigma_row(k)).zip(&v.row(k)[1..nx]) {
                *r += dt * s * vk;
            }
            self.heat.solve(&mut rhs);
            w[1..nx].copy_from_slice(&rhs);
            guard.frame(k + 1, &w)?;
            data.extend_from_slice(&w);
        }
        Ok(SpaceTimeField::from_raw(g, data))
    }

    /// Transpose of [`forward`](Self::forward) for the pairings
    /// `<w, f> = sum_{k>=1} dt sum_j w_j w f` and `<v, z>_H`.
    ///
    /// Both pairings weigh interior values by `dt dx` and the forward map
    /// ignores boundary columns of `v`, so the adjoint is the plain matrix
    /// transpose with zero boundary columns.
    pub fn adjoint(&self, f: &SpaceTimeField) -> Result<Control> {
        let g = *self.grid();
        if f.grid() != &g {
            return Err(Error::GridMismatch);
        }
        let (nx, dt, dx) = (g.nx(), g.dt(), g.dx());
        let c = self.transport;
        let n = nx - 1;
        let mut z = Control::zeros(&g);
        let mut p = f.frame(g.nt())[1..nx].to_vec();
        let mut q = vec![0.0; n];
        for k in (0..g.nt()).rev() {
            q.copy_from_slice(&p);
            self.heat.solve(&mut q);
            let row = &mut z.values_mut()[k * (nx + 1)..(k + 1) * (nx + 1)];
            for ((zi, s), qi) in row[1..nx].iter_mut().zip(self.sigma_row(k)).zip(&q) {
                *zi = dt * s * qi;
            }
            if k == 0 {
                break;
            }
            let ud = &self.u_det.frame(k)[1..nx];
            let fk = &f.frame(k)[1..nx];
            let scale = c * dt / (2.0 * dx);
            for i in 0..n {
                let right = if i + 1 < n { q[i + 1] } else { 0.0 };
                let left = if i > 0 { q[i - 1] } else { 0.0 };
                p[i] = fk[i] + q[i] - scale * ud[i] * (right - left);
            }
        }
        Ok(z)
    }
}

/// Skeleton solution `w = G0(u0, v)` by semi-implicit stepping of
/// `w_t = w_xx + 2 (u0 w)_x + sigma(u0) v`, `w(0) = 0`.
pub fn solve_skeleton(
    u0: &SpaceField,
    g: &Grid,
    v: &Control,
    sigma: &SigmaSpec,
    u_det: &SpaceTimeField,
    _cfg: &SolverConfig,
) -> Result<SpaceTimeField> {
    check_u_det(u0, g, u_det)?;
    SkeletonContext::new(u_det.clone(), sigma).forward(v)
}

pub(crate) fn check_u_det(u0: &SpaceField, g: &Grid, u_det: &SpaceTimeField) -> Result<()> {
    if u_det.grid() != g {
        return Err(Error::GridMismatch);
    }
    if u_det.frame(0) != u0.values() {
        return Err(Error::Domain(
            "u_det must be the deterministic solution started from u0".into(),
        ));
    }
    Ok(())
}
