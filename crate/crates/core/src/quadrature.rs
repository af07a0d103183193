//! Quadrature rules: Gauss–Legendre, product-integration radial rules,
//! spherical shell rules and geometrically graded time grids.

use std::f64::consts::PI;

use crate::vec3::Vec3;

/// Gauss–Legendre nodes and weights on `[−1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "gauss_legendre needs n > 0");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Nodes and weights of `panels` equal Gauss–Legendre panels of `order`
/// points on `[a, b]`.
pub fn composite_gauss_legendre_rule(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (g, gw) = gauss_legendre(order);
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    let dh = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + dh * p as f64;
        let mid = lo + 0.5 * dh;
        for (x, w) in g.iter().zip(&gw) {
            xs.push(mid + 0.5 * dh * x);
            ws.push(0.5 * dh * w);
        }
    }
    (xs, ws)
}

pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize, order: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let (xs, ws) = composite_gauss_legendre_rule(a, b, panels, order);
    xs.iter().zip(&ws).map(|(x, w)| w * f(*x)).sum()
}

/// Chebyshev points of the first kind mapped to `[a, b]`.
pub fn chebyshev_nodes(n: usize, a: f64, b: f64) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let x = ((2 * k + 1) as f64 * PI / (2 * n) as f64).cos();
            0.5 * (a + b) + 0.5 * (b - a) * x
        })
        .collect()
}

/// Product-integration weights: `Σ_i W_i g(x_i) = ∫_a^b weight(r) g(r) dr`
/// exactly for polynomials `g` of degree `< n`, with `x_i` the Chebyshev
/// nodes. Moments are computed by a fine composite Gauss–Legendre rule.
pub fn product_integration_rule(n: usize, a: f64, b: f64, weight: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let nodes = chebyshev_nodes(n, a, b);
    let (rr, ww) = composite_gauss_legendre_rule(a, b, 400, 12);
    let wv: Vec<f64> = rr.iter().zip(&ww).map(|(r, w)| w * weight(*r)).collect();
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for (r, w) in rr.iter().zip(&wv) {
            let mut l = 1.0;
            for j in 0..n {
                if j != i {
                    l *= (r - nodes[j]) / (nodes[i] - nodes[j]);
                }
            }
            s += w * l;
        }
        weights[i] = s;
    }
    (nodes, weights)
}

/// Cubature over a spherical shell `a ≤ |ξ| ≤ b` for integrands of the form
/// `weight(|ξ|)·g(ξ)` with smooth `g`; `weight` is absorbed in the radial
/// weights together with the Jacobian `ρ²`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalRule {
    pub radial: usize,
    pub polar: usize,
    pub nodes: Vec<Vec3>,
    pub weights: Vec<f64>,
}

impl SphericalRule {
    /// `radial` Chebyshev radii, `polar` Gauss–Legendre points in `cos θ`
    /// and `2·polar` equispaced azimuths.
    pub fn new(radial: usize, polar: usize, a: f64, b: f64, weight: impl Fn(f64) -> f64) -> SphericalRule {
        let (r, wr) = product_integration_rule(radial, a, b, |rho| weight(rho) * rho * rho);
        let (c, wc) = gauss_legendre(polar);
        let naz = 2 * polar;
        let waz = 2.0 * PI / naz as f64;
        let mut nodes = Vec::with_capacity(radial * polar * naz);
        let mut weights = Vec::with_capacity(radial * polar * naz);
        for i in 0..radial {
            for j in 0..polar {
                let s = (1.0 - c[j] * c[j]).sqrt();
                for l in 0..naz {
                    let ph = waz * l as f64;
                    nodes.push([r[i] * s * ph.cos(), r[i] * s * ph.sin(), r[i] * c[j]]);
                    weights.push(wr[i] * wc[j] * waz);
                }
            }
        }
        SphericalRule { radial, polar, nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Time nodes with quadrature weights on `[0, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl TimeGrid {
    /// Composite Simpson on the dyadic pieces `[T/2^{l+1}, T/2^l]`,
    /// `l < levels`, plus `[0, T/2^levels]`, each split into `panels`
    /// Simpson panels. Shared endpoints are merged.
    pub fn geometric_simpson(horizon: f64, levels: usize, panels: usize) -> TimeGrid {
        let panels = panels.max(1);
        let mut cuts = vec![0.0];
        for l in (0..=levels).rev() {
            cuts.push(horizon / 2f64.powi(l as i32));
        }
        if levels == 0 {
            cuts = vec![0.0, horizon];
        }
        let mut nodes = vec![0.0];
        let mut weights = vec![0.0];
        for win in cuts.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let dh = (hi - lo) / panels as f64;
            for p in 0..panels {
                let a = lo + dh * p as f64;
                let last = weights.len() - 1;
                weights[last] += dh / 6.0;
                nodes.push(a + 0.5 * dh);
                weights.push(4.0 * dh / 6.0);
                nodes.push(a + dh);
                weights.push(dh / 6.0);
            }
        }
        TimeGrid { horizon, nodes, weights }
    }

    /// Integrates sampled values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
