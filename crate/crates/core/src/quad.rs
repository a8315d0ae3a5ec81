//! Composite Gauss-Legendre quadrature on caller-chosen panels.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Newton on P_n starting from the Chebyshev-like guess.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let step = p / d;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `int_a^b f`.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Sum of the rule over consecutive panels `[b_i, b_{i+1}]`.
    pub fn integrate_panels(&self, breaks: &[f64], mut f: impl FnMut(f64) -> f64) -> f64 {
        breaks
            .windows(2)
            .map(|w| self.integrate(w[0], w[1], &mut f))
            .sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { p0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Breakpoints on `[0, 1]` that refine geometrically towards each peak, with
/// the coarsest scale `scale * 2^6` and the finest `scale * 2^-6`.
pub(crate) fn peaked_breaks(peaks: &[f64], scale: f64) -> Vec<f64> {
    let mut b = vec![0.0, 1.0];
    for &p in peaks {
        b.push(p);
        for k in -6..=6 {
            let off = scale * 2f64.powi(k);
            b.push(p - off);
            b.push(p + off);
        }
    }
    b.retain(|v| (0.0..=1.0).contains(v));
    b.sort_by(|a, c| a.total_cmp(c));
    b.dedup_by(|a, c| (*a - *c).abs() < 1e-15);
    b
}

/// `int_0^tau_max f(tau) dtau` for `f` with an integrable power singularity at
/// zero, via `tau = r^m` on panels geometric in `tau`.
pub(crate) fn integrate_singular(
    gl: &GaussLegendre,
    tau_max: f64,
    power: u32,
    levels: usize,
    mut f: impl FnMut(f64) -> f64,
) -> f64 {
    let m = power as f64;
    let mut breaks: Vec<f64> = (0..=levels)
        .rev()
        .map(|i| (tau_max * 0.5f64.powi(i as i32)).powf(1.0 / m))
        .collect();
    breaks.insert(0, 0.0);
    gl.integrate_panels(&breaks, |r| {
        let tau = r.powi(power as i32);
        if tau <= 0.0 {
            return 0.0;
        }
        f(tau) * m * r.powi(power as i32 - 1)
    })
}
