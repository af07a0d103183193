//! Second Picard iterate of the barotropic system.
//!
//! The data is a sum of bumps at `±2^k ẽ`, `10 ≤ k ≤ N`. The witness
//! `∫φ(2⁴ξ)Û₁(t, ξ) dξ` is assembled from the atom pairs whose output
//! spectrum reaches the `φ(2⁴·)` shell: the τ-integral is the closed-form
//! Duhamel kernel, the η-integral is the lattice sum of the data patches and
//! the ξ-integral a spherical rule weighted by `φ(2⁴|ξ|)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::besov::{
    besov_norm, chemin_lerner_norm_with, BesovSpec, NormResult, NormSettings, TimeNormSpec, TimeSamples,
};
use crate::error::{Error, Result};
use crate::lp_frame::{make_data_bump, make_lp_frame, LpFrame, SmoothCutoff, PHI_SUPPORT};
use crate::patch_field::{
    add, apply_multiplier, dot, multiply_sum, FourierPatch, Multiplier, PatchField, DEFAULT_SPACING,
};
use crate::quadrature::{composite_gauss_legendre_rule, SphericalRule, TimeGrid};
use crate::semigroup::{
    compressible_projector, duhamel_kernel_difference, duhamel_kernel_from, heat_multiplier,
    incompressible_projector, ViscosityParams,
};
use crate::vec3::{self, Vec3};
use crate::Complex64;

/// Lowest data frequency exponent.
pub const K_MIN: u32 = 10;

/// Data bumps vanish beyond this radius.
pub const BUMP_RADIUS: f64 = 2.0;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

// ---------------------------------------------------------------------------
// Parameters

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTriplet {
    pub p: f64,
    pub p_tilde: f64,
    pub q: f64,
    pub eps: f64,
}

impl ParamTriplet {
    /// The violated feasibility inequalities, each evaluated as written.
    pub fn violations(&self) -> Vec<String> {
        let ParamTriplet { p, p_tilde, q, eps } = *self;
        let mut v = Vec::new();
        if !(p > 6.0) {
            v.push("p > 6".to_string());
        }
        if !(3.0 < q && q < 6.0) {
            v.push("3 < q < 6".to_string());
        }
        if !(6.0 < p_tilde && p_tilde < p) {
            v.push("6 < p_tilde < p".to_string());
        }
        if !(3.0 / p_tilde + 3.0 / q - 1.0 > 0.0) {
            v.push("3/p_tilde + 3/q - 1 > 0".to_string());
        }
        let lower = (2.0 / p_tilde - 1.0 / q - 1.0 / p).max(3.0 / (5.0 * q) - 3.0 / (5.0 * p));
        if !(lower < eps) {
            v.push("max(2/p_tilde - 1/q - 1/p, 3/(5q) - 3/(5p)) < eps".to_string());
        }
        if !(eps < 1.0 / 3.0 - 1.0 / q - 1.0 / p) {
            v.push("eps < 1/3 - 1/q - 1/p".to_string());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Infeasible(v))
        }
    }

    /// `1 − 3/q − 3/p − 3ε`.
    pub fn predicted_exponent(&self) -> f64 {
        1.0 - 3.0 / self.q - 3.0 / self.p - 3.0 * self.eps
    }

    /// Distance of `eps` to the nearer end of its admissible window.
    pub fn slack(&self) -> f64 {
        BAROTROPIC_REGION.slack(self.p, self.p_tilde, self.q, self.eps)
    }
}

/// Shape shared by both feasibility lemmas: `q ∈ q_range`,
/// `p̃_min < p̃ < p`, `3/p̃ + 3/q > sum_bound` and
/// `max(2/p̃ − 1/q − 1/p, (3/5)(1/q − 1/p)) < ε < eps_cap − 1/q − 1/p`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Region {
    pub q_range: (f64, f64),
    pub p_tilde_min: f64,
    pub sum_bound: f64,
    pub eps_cap: f64,
}

pub(crate) const BAROTROPIC_REGION: Region =
    Region { q_range: (3.0, 6.0), p_tilde_min: 6.0, sum_bound: 1.0, eps_cap: 1.0 / 3.0 };

/// Relative margin kept from every open boundary.
const MARGIN: f64 = 1e-4;

impl Region {
    fn lower(&self, p: f64, p_tilde: f64, q: f64) -> f64 {
        (2.0 / p_tilde - 1.0 / q - 1.0 / p).max(0.6 * (1.0 / q - 1.0 / p))
    }

    fn upper(&self, p: f64, q: f64) -> f64 {
        self.eps_cap - 1.0 / q - 1.0 / p
    }

    pub fn slack(&self, p: f64, p_tilde: f64, q: f64, eps: f64) -> f64 {
        (self.upper(p, q) - eps).min(eps - self.lower(p, p_tilde, q))
    }

    /// Best `p̃` for this `q` and the resulting ε-window width. Among the
    /// `p̃` reaching the widest window the midpoint is taken.
    fn best_for_q(&self, p: f64, q: f64) -> Option<(f64, f64)> {
        let gap = self.sum_bound - 3.0 / q + MARGIN;
        let mut hi = p * (1.0 - MARGIN);
        if gap > 0.0 {
            hi = hi.min(3.0 / gap);
        }
        let lo = self.p_tilde_min * (1.0 + MARGIN);
        if !(lo < hi) {
            return None;
        }
        let flat = 0.6 * (1.0 / q - 1.0 / p);
        let knee = 2.0 / (1.0 / q + 1.0 / p + flat);
        let p_tilde = if knee <= hi { 0.5 * (lo.max(knee) + hi) } else { hi };
        let width = self.upper(p, q) - self.lower(p, p_tilde, q);
        Some((p_tilde, width))
    }

    /// Grid search over `q` with five ×10 refinements around the best node.
    pub fn search(&self, p: f64) -> Option<(f64, f64, f64)> {
        let (mut a, mut b) = self.q_range;
        let span = b - a;
        a += MARGIN * span;
        b -= MARGIN * span;
        let mut best: Option<(f64, f64, f64)> = None;
        for _ in 0..6 {
            let n = 200;
            let step = (b - a) / n as f64;
            let mut local: Option<(f64, f64, f64)> = None;
            for i in 0..=n {
                let q = a + step * i as f64;
                if let Some((pt, w)) = self.best_for_q(p, q) {
                    if local.map_or(true, |(_, _, bw)| w > bw) {
                        local = Some((q, pt, w));
                    }
                }
            }
            let (q, _, _) = local?;
            best = local;
            let lo = (q - step).max(self.q_range.0 + MARGIN * span);
            let hi = (q + step).min(self.q_range.1 - MARGIN * span);
            a = lo;
            b = hi;
        }
        let (q, pt, w) = best?;
        if !(w > 0.0) {
            return None;
        }
        let eps = 0.5 * (self.lower(p, pt, q) + self.upper(p, q));
        Some((q, pt, eps))
    }
}

/// Slack-maximizing feasible triplet for `p > 6`.
pub fn choose_parameters(p: f64) -> Result<ParamTriplet> {
    if !(p > 6.0) {
        return Err(Error::Infeasible(vec!["p > 6".to_string()]));
    }
    let (q, p_tilde, eps) = BAROTROPIC_REGION
        .search(p)
        .ok_or_else(|| Error::Infeasible(vec!["empty eps window".to_string()]))?;
    let t = ParamTriplet { p, p_tilde, q, eps };
    t.validate()?;
    Ok(t)
}

// ---------------------------------------------------------------------------
// Data

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub n: u32,
    pub params: ParamTriplet,
    /// `2^{(N/2)(3/q − 3/p + ε)}`.
    pub c_n: f64,
    pub e_dir: Vec3,
    /// Lattice spacing of the data patches.
    pub spacing: f64,
}

pub(crate) fn c_of_n(n: u32, q: f64, p: f64, eps: f64) -> f64 {
    2f64.powf(0.5 * n as f64 * (3.0 / q - 3.0 / p + eps))
}

impl DataSpec {
    /// `n ≥ 9`; for `n < 11` the k-range holds at most one frequency.
    pub fn new(n: u32, params: ParamTriplet, spacing: f64) -> Result<Self> {
        params.validate()?;
        if n < 9 {
            return Err(Error::InvalidParameter(format!("N = {n} below 9")));
        }
        check_spacing(spacing)?;
        let c_n = c_of_n(n, params.q, params.p, params.eps);
        Ok(DataSpec { n, params, c_n, e_dir: [1.0, 1.0, 0.0], spacing })
    }

    pub fn with_default_spacing(n: u32, params: ParamTriplet) -> Result<Self> {
        DataSpec::new(n, params, DEFAULT_SPACING)
    }

    pub fn c_n_sq(&self) -> f64 {
        self.c_n * self.c_n
    }

    pub fn k_range(&self) -> std::ops::RangeInclusive<u32> {
        K_MIN..=self.n
    }

    /// `2^{k(1−3/p)}/C(N)`.
    pub fn amplitude(&self, k: u32) -> f64 {
        2f64.powf(k as f64 * (1.0 - 3.0 / self.params.p)) / self.c_n
    }

    /// `t⋆ = 2^{−2(1+ε)N}`.
    pub fn t_star(&self) -> f64 {
        2f64.powf(-2.0 * (1.0 + self.params.eps) * self.n as f64)
    }

    fn atom_center(&self, k: u32, s: f64) -> Vec3 {
        vec3::scale(s * 2f64.powi(k as i32), self.e_dir)
    }
}

pub(crate) fn check_spacing(h: f64) -> Result<()> {
    let m = BUMP_RADIUS / h;
    if !(h > 0.0) || (m - m.round()).abs() > 1e-9 || m.round() < 4.0 {
        return Err(Error::InvalidParameter(format!("spacing {h} must divide {BUMP_RADIUS} at least 4 times")));
    }
    Ok(())
}

fn bump_patch(bump: &SmoothCutoff, center: Vec3, spacing: f64, amp: Complex64) -> Result<FourierPatch> {
    FourierPatch::radial(center, spacing, BUMP_RADIUS, amp, |r| bump.eval(r))
}

fn velocity_data(spec: &DataSpec) -> Result<PatchField> {
    let bump = make_data_bump();
    let mut c0 = Vec::new();
    let mut c1 = Vec::new();
    for k in spec.k_range() {
        let a = spec.amplitude(k);
        for s in [1.0, -1.0] {
            let c = spec.atom_center(k, s);
            c0.push(bump_patch(&bump, c, spec.spacing, Complex64::new(a, 0.0))?);
            c1.push(bump_patch(&bump, c, spec.spacing, Complex64::new(0.0, s * a))?);
        }
    }
    PatchField::new(vec![c0, c1, Vec::new()], true)
}

/// `(a₀, u₀)`: the centred bump over `C(N)` and the bump pairs at `±2^k ẽ`.
pub fn build_initial_data(spec: &DataSpec) -> Result<(PatchField, PatchField)> {
    if spec.n < 11 {
        return Err(Error::InvalidParameter(format!("initial data needs N ≥ 11, got {}", spec.n)));
    }
    let bump = make_data_bump();
    let a0 = PatchField::scalar(
        vec![bump_patch(&bump, [0.0; 3], spec.spacing, Complex64::new(1.0 / spec.c_n, 0.0))?],
        true,
    )?;
    Ok((a0, velocity_data(spec)?))
}

/// `U₀(t) = P e^{ν̄tΔ}u₀ + Q e^{μ̄tΔ}u₀`.
#[allow(non_snake_case)]
pub fn compute_U0(u0: &PatchField, visc: &ViscosityParams, t: f64) -> Result<PatchField> {
    let p = apply_multiplier(&compressible_projector(), &apply_multiplier(&heat_multiplier(visc.nu_bar(), t)?, u0)?)?;
    let q = apply_multiplier(&incompressible_projector(), &apply_multiplier(&heat_multiplier(visc.mu_bar(), t)?, u0)?)?;
    Ok(add(&p, &q)?.merged())
}

// ---------------------------------------------------------------------------
// Atom pairs

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Part {
    P,
    Q,
}

impl Part {
    pub fn rate(self, visc: &ViscosityParams) -> f64 {
        match self {
            Part::P => visc.nu_bar(),
            Part::Q => visc.mu_bar(),
        }
    }
}

/// Bump `k` with sign `s` of the data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub k: u32,
    pub sign: i8,
}

/// One ordered pair: the velocity atom transports the gradient atom. Each
/// of the four part combinations decays in τ like
/// `e^{−τ(r_a|ζ|² + r_b|η|²)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPair {
    pub velocity: Atom,
    pub gradient: Atom,
    pub center: Vec3,
    /// `(velocity part, gradient part, velocity rate, gradient rate)`.
    pub parts: [(Part, Part, f64, f64); 4],
}

pub fn atoms(spec: &DataSpec) -> Vec<Atom> {
    spec.k_range().flat_map(|k| [1i8, -1].map(|sign| Atom { k, sign })).collect()
}

/// All ordered atom pairs of `U₀·∇U₀`.
pub fn bilinear_transport(spec: &DataSpec, visc: &ViscosityParams) -> Vec<TransportPair> {
    let list = atoms(spec);
    let mut parts = [(Part::P, Part::P, 0.0, 0.0); 4];
    for (i, (a, b)) in [(Part::P, Part::P), (Part::P, Part::Q), (Part::Q, Part::P), (Part::Q, Part::Q)]
        .into_iter()
        .enumerate()
    {
        parts[i] = (a, b, a.rate(visc), b.rate(visc));
    }
    let mut out = Vec::with_capacity(list.len() * list.len());
    for &v in &list {
        for &g in &list {
            let center = vec3::add(spec.atom_center(v.k, v.sign as f64), spec.atom_center(g.k, g.sign as f64));
            out.push(TransportPair { velocity: v, gradient: g, center, parts });
        }
    }
    out
}

/// Pairs whose output support `|ξ − center| < 2·BUMP_RADIUS` meets `|ξ| ≤ radius`.
pub fn prune_pairs(pairs: &[TransportPair], radius: f64) -> Vec<TransportPair> {
    pairs.iter().filter(|p| vec3::norm(p.center) < radius + 2.0 * BUMP_RADIUS).cloned().collect()
}

/// Outer radius of the witness block `φ(2⁴·)`.
pub fn witness_radius() -> f64 {
    PHI_SUPPORT.1 / 16.0
}

// ---------------------------------------------------------------------------
// Witness

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessQuadrature {
    pub radial: usize,
    pub polar: usize,
    pub tol: f64,
    pub max_refinements: usize,
}

impl Default for WitnessQuadrature {
    fn default() -> Self {
        WitnessQuadrature { radial: 4, polar: 3, tol: 1e-6, max_refinements: 3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementStep {
    pub radial: usize,
    pub polar: usize,
    pub nodes: usize,
    pub total_re: f64,
    pub total_im: f64,
    /// Relative change from the previous step (`None` for the first).
    pub change: Option<f64>,
}

pub(crate) fn trace_text(trace: &[RefinementStep]) -> String {
    trace
        .iter()
        .map(|s| format!("{}x{}: {:.6e} (change {:?})", s.radial, s.polar, s.total_re, s.change))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessBreakdown {
    pub u11_11: Complex64,
    pub u11_12: Complex64,
    pub u11_2: Complex64,
    pub u12_1: Complex64,
    pub u12_2: Complex64,
    pub total: Complex64,
    pub t: f64,
    pub trace: Vec<RefinementStep>,
}

impl WitnessBreakdown {
    pub fn components(&self) -> [Complex64; 5] {
        [self.u11_11, self.u11_12, self.u11_2, self.u12_1, self.u12_2]
    }

    /// `|U11_11| − Σ|others|`.
    pub fn dominance_margin(&self) -> f64 {
        self.u11_11.norm() - (self.u11_12.norm() + self.u11_2.norm() + self.u12_1.norm() + self.u12_2.norm())
    }
}

/// `ξ`-rule over the shell `2^{−4}·supp φ` weighted by `φ(2⁴|ξ|)`.
pub fn witness_rule(radial: usize, polar: usize) -> SphericalRule {
    let frame = make_lp_frame(0, 0).expect("single-band frame");
    SphericalRule::new(radial, polar, PHI_SUPPORT.0 / 16.0, PHI_SUPPORT.1 / 16.0, move |rho| frame.phi(16.0 * rho))
}

pub(crate) fn relative_change(new: Complex64, old: Complex64) -> f64 {
    let scale = new.norm().max(old.norm());
    if scale == 0.0 {
        0.0
    } else {
        (new - old).norm() / scale
    }
}

/// Lattice offsets inside the bump support with the bump values.
pub(crate) struct BumpLattice {
    pub offsets: Vec<Vec3>,
    pub values: Vec<f64>,
    pub h3: f64,
}

impl BumpLattice {
    pub fn new(spacing: f64) -> BumpLattice {
        let bump = make_data_bump();
        let m = (BUMP_RADIUS / spacing).round() as i64;
        let mut offsets = Vec::new();
        let mut values = Vec::new();
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    let o = [a as f64 * spacing, b as f64 * spacing, c as f64 * spacing];
                    let v = bump.eval(vec3::norm(o));
                    if v > 0.0 {
                        offsets.push(o);
                        values.push(v);
                    }
                }
            }
        }
        BumpLattice { offsets, values, h3: spacing.powi(3) }
    }
}

/// Per-site data of the gradient atom `η = s2^kẽ + E`.
struct Site {
    eta: Vec3,
    n2: f64,
    /// `(η·w)/|η|²`, so that `P(η)w = η·coef`.
    coef: Complex64,
    e_nu: f64,
    e_mu: f64,
}

struct PairGeometry {
    s: f64,
    center: Vec3,
    weight: f64,
    lead_numerator: f64,
    sites: Vec<Site>,
}

/// `i(P(ζ_c)v·η_c)(Q(η_c)w)₁|ζ_c|²|η_c|²` at the atom centres
/// `η_c = s2^kẽ`, `ζ_c = −η_c`.
pub fn centre_numerator(spec: &DataSpec, k: u32, s: f64) -> Complex64 {
    let ec = spec.atom_center(k, s);
    let zc = vec3::neg(ec);
    let w = [Complex64::new(1.0, 0.0), Complex64::new(0.0, s), ZERO];
    let v = [Complex64::new(1.0, 0.0), Complex64::new(0.0, -s), ZERO];
    let cdot = |a: Vec3, b: &[Complex64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let pz_dot_ec = cdot(zc, &v) * vec3::dot(zc, ec) / vec3::norm2(zc);
    let qe0 = w[0] - ec[0] * cdot(ec, &w) / vec3::norm2(ec);
    I * pz_dot_ec * qe0 * vec3::norm2(zc) * vec3::norm2(ec)
}

struct WitnessKernel {
    nu: f64,
    mu: f64,
    t: f64,
    lattice: BumpLattice,
    pairs: Vec<PairGeometry>,
}

impl WitnessKernel {
    fn new(spec: &DataSpec, visc: &ViscosityParams, t: f64) -> WitnessKernel {
        let lattice = BumpLattice::new(spec.spacing);
        let (nu, mu) = (visc.nu_bar(), visc.mu_bar());
        let pruned = prune_pairs(&bilinear_transport(spec, visc), witness_radius());
        let mut pairs = Vec::with_capacity(pruned.len());
        for pair in &pruned {
            let g = pair.gradient;
            let s = g.sign as f64;
            let center = spec.atom_center(g.k, s);
            let amp = spec.amplitude(g.k) * spec.amplitude(pair.velocity.k);
            let sites = lattice
                .offsets
                .iter()
                .map(|&e| {
                    let eta = vec3::add(center, e);
                    let n2 = vec3::norm2(eta);
                    Site {
                        eta,
                        n2,
                        coef: Complex64::new(eta[0], s * eta[1]) / n2,
                        e_nu: (-nu * t * n2).exp(),
                        e_mu: (-mu * t * n2).exp(),
                    }
                })
                .collect();
            pairs.push(PairGeometry {
                s,
                center,
                weight: amp,
                lead_numerator: centre_numerator(spec, g.k, s).re,
                sites,
            });
        }
        WitnessKernel { nu, mu, t, lattice, pairs }
    }

    /// Contributions at one `ξ`, in breakdown order.
    fn at(&self, xi: Vec3) -> [Complex64; 5] {
        let bump = make_data_bump();
        let t = self.t;
        let x2 = vec3::norm2(xi);
        let (a_nu, a_mu) = (self.nu * x2, self.mu * x2);
        let ea_nu = (-a_nu * t).exp();
        let mut acc = [ZERO; 5];
        let rates = [self.nu, self.mu];
        for (ie, &e) in self.lattice.offsets.iter().enumerate() {
            let d = vec3::sub(xi, e);
            let b2 = bump.eval(vec3::norm(d));
            if b2 == 0.0 {
                continue;
            }
            let base = self.lattice.values[ie] * b2 * self.lattice.h3;
            for pg in &self.pairs {
                let site = &pg.sites[ie];
                let s = pg.s;
                let eta = site.eta;
                let zeta = vec3::sub(d, pg.center);
                let n2z = vec3::norm2(zeta);
                let zeta_eta = vec3::dot(zeta, eta);
                // P(ζ)v = ζ·cz with v = (1, −is, 0)
                let cz = Complex64::new(zeta[0], -s * zeta[1]) / n2z;
                let pz_eta = cz * zeta_eta;
                let v_eta = Complex64::new(eta[0], -s * eta[1]);
                let vel = [I * pz_eta, I * (v_eta - pz_eta)];
                let pe0 = site.coef * eta[0];
                let xi_pe = site.coef * vec3::dot(xi, eta);
                let xi_w = Complex64::new(xi[0], s * xi[1]);
                let x0 = [pe0, Complex64::new(1.0, 0.0) - pe0];
                let xd = [xi_pe, xi_w - xi_pe];
                let ez = [(-self.nu * t * n2z).exp(), (-self.mu * t * n2z).exp()];
                let ee = [site.e_nu, site.e_mu];
                let w = base * pg.weight;
                for a in 0..2 {
                    for b in 0..2 {
                        let big = rates[a] * n2z + rates[b] * site.n2;
                        let eb = ez[a] * ee[b];
                        let k11 = duhamel_kernel_from(a_nu, big, t, ea_nu, eb);
                        let k12 = duhamel_kernel_difference(a_nu, a_mu, big, t, ea_nu, eb);
                        let g0 = vel[a] * x0[b];
                        let qg0 = vel[a] * (x0[b] - xd[b] * (xi[0] / x2));
                        let u11 = g0 * (w * k11);
                        let u12 = qg0 * (w * k12);
                        if a == 0 && b == 1 {
                            let lead = w * pg.lead_numerator / (n2z * site.n2) * k11;
                            acc[0] += lead;
                            acc[1] += u11 - lead;
                            acc[3] += u12;
                        } else {
                            acc[2] += u11;
                            acc[4] += u12;
                        }
                    }
                }
            }
        }
        acc
    }

    fn integrate(&self, rule: &SphericalRule) -> [Complex64; 5] {
        let mut total = [ZERO; 5];
        for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
            let v = self.at(*xi);
            for (t, v) in total.iter_mut().zip(v) {
                *t += v * *w;
            }
        }
        total
    }
}

fn breakdown(v: [Complex64; 5], t: f64, trace: Vec<RefinementStep>) -> WitnessBreakdown {
    WitnessBreakdown {
        u11_11: v[0],
        u11_12: v[1],
        u11_2: v[2],
        u12_1: v[3],
        u12_2: v[4],
        total: v[0] + v[1] + v[2] + v[3] + v[4],
        t,
        trace,
    }
}

fn check_time(n: u32, t: f64) -> Result<()> {
    if !(t >= 0.0) {
        return Err(Error::NegativeTime(t));
    }
    let cap = 2f64.powi(-2 * n as i32);
    if t > cap * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!("t = {t} exceeds 2^(-2N) = {cap}")));
    }
    Ok(())
}

/// Breakdown on a fixed `ξ`-rule.
pub fn witness_with_rule(
    spec: &DataSpec,
    visc: &ViscosityParams,
    t: f64,
    rule: &SphericalRule,
) -> Result<WitnessBreakdown> {
    check_time(spec.n, t)?;
    let kernel = WitnessKernel::new(spec, visc, t);
    Ok(breakdown(kernel.integrate(rule), t, Vec::new()))
}

/// Breakdown of `∫φ(2⁴ξ)Û₁(t, ξ)₁ dξ`, refining the `ξ`-rule ×2 until the
/// total moves by less than `quad.tol`.
pub fn witness(
    spec: &DataSpec,
    visc: &ViscosityParams,
    t: f64,
    quad: &WitnessQuadrature,
) -> Result<WitnessBreakdown> {
    check_time(spec.n, t)?;
    let kernel = WitnessKernel::new(spec, visc, t);
    let (mut radial, mut polar) = (quad.radial, quad.polar);
    let mut trace = Vec::new();
    let mut prev = kernel.integrate(&witness_rule(radial, polar));
    let sum = |v: &[Complex64; 5]| v.iter().sum::<Complex64>();
    trace.push(step(radial, polar, sum(&prev), None));
    for _ in 0..quad.max_refinements {
        radial *= 2;
        polar *= 2;
        let next = kernel.integrate(&witness_rule(radial, polar));
        let change = relative_change(sum(&next), sum(&prev));
        trace.push(step(radial, polar, sum(&next), Some(change)));
        if change < quad.tol {
            return Ok(breakdown(next, t, trace));
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence(format!("N = {}: {}", spec.n, trace_text(&trace))))
}

pub(crate) fn step(radial: usize, polar: usize, total: Complex64, change: Option<f64>) -> RefinementStep {
    RefinementStep { radial, polar, nodes: radial * polar * polar * 2, total_re: total.re, total_im: total.im, change }
}

/// `Û₀(τ, ζ)` from the data formula.
fn u0_hat(spec: &DataSpec, visc: &ViscosityParams, tau: f64, zeta: Vec3) -> [Complex64; 3] {
    let bump = make_data_bump();
    let mut u = [ZERO; 3];
    for k in spec.k_range() {
        for s in [1.0, -1.0] {
            let r = vec3::norm(vec3::sub(zeta, spec.atom_center(k, s)));
            if r >= BUMP_RADIUS {
                continue;
            }
            let a = spec.amplitude(k) * bump.eval(r);
            u[0] += a;
            u[1] += Complex64::new(0.0, s * a);
        }
    }
    let n2 = vec3::norm2(zeta);
    if n2 == 0.0 {
        return u;
    }
    let (ep, eq) = ((-visc.nu_bar() * tau * n2).exp(), (-visc.mu_bar() * tau * n2).exp());
    let proj = (zeta[0] * u[0] + zeta[1] * u[1] + zeta[2] * u[2]) / n2;
    let mut out = [ZERO; 3];
    for d in 0..3 {
        let p = zeta[d] * proj;
        out[d] = p * ep + (u[d] - p) * eq;
    }
    out
}

/// Component 1 of `(P(ξ)e^{−ν̄s|ξ|²} + Q(ξ)e^{−μ̄s|ξ|²}) g`.
pub(crate) fn outer_component(xi: Vec3, g: [Complex64; 3], e_nu: f64, e_mu: f64) -> Complex64 {
    let n2 = vec3::norm2(xi);
    let proj = (xi[0] * g[0] + xi[1] * g[1] + xi[2] * g[2]) / n2;
    let p0 = proj * xi[0];
    p0 * e_nu + (g[0] - p0) * e_mu
}

/// Lattice points of a vector field: the patch keys shared by its
/// components with the three sample vectors.
pub(crate) fn vector_sites(f: &PatchField) -> Vec<(Vec3, [Complex64; 3])> {
    let mut out: Vec<(Vec3, [Complex64; 3])> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (c, p) in f.patches() {
        let s = p.side();
        for i0 in 0..s {
            for i1 in 0..s {
                for i2 in 0..s {
                    let v = p.samples()[p.index(i0, i1, i2)];
                    if v == ZERO {
                        continue;
                    }
                    let x = vec3::add(p.center(), p.offset(i0, i1, i2));
                    let key = x.map(|v| (v / p.spacing()).round() as i64);
                    let slot = *index.entry(key).or_insert_with(|| {
                        out.push((x, [ZERO; 3]));
                        out.len() - 1
                    });
                    out[slot].1[c] += v;
                }
            }
        }
    }
    out
}

/// `∫φ(2⁴ξ)[∫₀ᵗ (P e^{−ν̄(t−τ)|ξ|²} + Q e^{−μ̄(t−τ)|ξ|²}) F(U₀·∇U₀)(τ, ξ) dτ]₁ dξ`
/// with `U₀(τ)` tabulated through the multiplier path on the η side, the
/// data formula on the ζ side and Gauss–Legendre in τ.
pub fn witness_direct(
    spec: &DataSpec,
    visc: &ViscosityParams,
    t: f64,
    rule: &SphericalRule,
    tau_panels: usize,
    tau_order: usize,
) -> Result<Complex64> {
    let u0 = velocity_data(spec)?;
    let (taus, tw) = composite_gauss_legendre_rule(0.0, t, tau_panels, tau_order);
    let h3 = spec.spacing.powi(3);
    let mut total = ZERO;
    for (&tau, &wt) in taus.iter().zip(&tw) {
        let sites = vector_sites(&compute_U0(&u0, visc, tau)?);
        for (xi, wx) in rule.nodes.iter().zip(&rule.weights) {
            let mut g = [ZERO; 3];
            for (eta, ue) in &sites {
                let zeta = vec3::sub(*xi, *eta);
                let uz = u0_hat(spec, visc, tau, zeta);
                if uz.iter().all(|v| *v == ZERO) {
                    continue;
                }
                let transport = I * (uz[0] * eta[0] + uz[1] * eta[1] + uz[2] * eta[2]);
                for d in 0..3 {
                    g[d] += transport * ue[d];
                }
            }
            let x2 = vec3::norm2(*xi);
            let s = t - tau;
            let v = outer_component(*xi, g, (-visc.nu_bar() * s * x2).exp(), (-visc.mu_bar() * s * x2).exp());
            total += v * (h3 * wt * wx);
        }
    }
    Ok(total)
}

// ---------------------------------------------------------------------------
// Growth check

#[derive(Clone, Debug, PartialEq)]
pub struct InflationCheck {
    pub witness_value: f64,
    pub predicted_exponent: f64,
    pub t_star: f64,
    pub breakdown: WitnessBreakdown,
}

/// `|witness(t⋆)|` with `t⋆ = 2^{−2(1+ε)N}`.
pub fn inflation_check(spec: &DataSpec, visc: &ViscosityParams, quad: &WitnessQuadrature) -> Result<InflationCheck> {
    let t_star = spec.t_star();
    let breakdown = witness(spec, visc, t_star, quad)?;
    Ok(InflationCheck {
        witness_value: breakdown.total.norm(),
        predicted_exponent: spec.params.predicted_exponent(),
        t_star,
        breakdown,
    })
}

// ---------------------------------------------------------------------------
// Norm bounds

/// Frame covering every band a data patch of `spec` can meet.
pub fn data_frame(n: u32) -> LpFrame {
    make_lp_frame(-12, n as i32 + 4).expect("data frame")
}

/// Settings for certified upper bounds of quadratic quantities.
pub const BOUND_SETTINGS: NormSettings =
    NormSettings { l_factor: 32.0, tail_tol: 1e-4, refine: true, interpolate: true };

fn heat_flow_norm(u0: &PatchField, rate: f64, t: f64, sigma: f64, r: f64, frame: &LpFrame) -> Result<f64> {
    let grid = TimeGrid::geometric_simpson(t, 0, 8);
    let samples = TimeSamples::from_fn(grid, |tau| apply_multiplier(&heat_multiplier(rate, tau)?, u0))?;
    let spec = TimeNormSpec::new(2.0, BesovSpec::new(sigma, r, 1.0)?, t)?;
    Ok(chemin_lerner_norm_with(&samples, &spec, frame, &BOUND_SETTINGS)?.value)
}

/// Upper bounds for `|U11_2|` and `|U12_2|`: both reduce to
/// `‖e^{ν̄Δτ}u₀‖²_{L̃²_tḂ^{3/p}_{p,1}} + ‖e^{μ̄Δτ}u₀‖²_{L̃²_tḂ^{3/p}_{p,1}}`.
pub fn quadratic_upper_bounds(spec: &DataSpec, visc: &ViscosityParams, t: f64) -> Result<(f64, f64)> {
    if t == 0.0 || spec.n < K_MIN {
        return Ok((0.0, 0.0));
    }
    let u0 = velocity_data(spec)?;
    let frame = data_frame(spec.n);
    let p = spec.params.p;
    let a = heat_flow_norm(&u0, visc.nu_bar(), t, 3.0 / p, p, &frame)?;
    let b = heat_flow_norm(&u0, visc.mu_bar(), t, 3.0 / p, p, &frame)?;
    let v = a * a + b * b;
    Ok((v, v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataNorms {
    /// `‖a₀‖_{Ḃ^{3/q}_{q,1}}`.
    pub a0: NormResult,
    /// `‖u₀‖_{Ḃ^{3/p−1}_{p,1}}`.
    pub u0: NormResult,
}

pub fn initial_data_norms(spec: &DataSpec) -> Result<DataNorms> {
    let (a0, u0) = build_initial_data(spec)?;
    let frame = data_frame(spec.n);
    let (p, q) = (spec.params.p, spec.params.q);
    Ok(DataNorms {
        a0: besov_norm(&a0, &BesovSpec::new(3.0 / q, q, 1.0)?, &frame)?,
        u0: besov_norm(&u0, &BesovSpec::new(3.0 / p - 1.0, p, 1.0)?, &frame)?,
    })
}

/// `‖U₀‖_{L̃²_T Ḃ^{3/p}_{2,1}}` and its predicted size `T^{1/2}2^N/C(N)`.
pub fn smoothing_norm(spec: &DataSpec, visc: &ViscosityParams, horizon: f64) -> Result<(NormResult, f64)> {
    let (_, u0) = build_initial_data(spec)?;
    let frame = data_frame(spec.n);
    let grid = TimeGrid::geometric_simpson(horizon, 0, 16);
    let samples = TimeSamples::from_fn(grid, |tau| compute_U0(&u0, visc, tau))?;
    let nspec = TimeNormSpec::new(2.0, BesovSpec::new(3.0 / spec.params.p, 2.0, 1.0)?, horizon)?;
    let value = chemin_lerner_norm_with(&samples, &nspec, &frame, &NormSettings::default())?;
    Ok((value, horizon.sqrt() * 2f64.powi(spec.n as i32) / spec.c_n))
}

// ---------------------------------------------------------------------------
// Transport identity

fn vector_partials(f: &PatchField) -> Result<Vec<PatchField>> {
    (0..3).map(|l| apply_multiplier(&Multiplier::partial(l), f)).collect()
}

/// `Σ_l a_l ∂_l b` for vector fields.
fn advect(a: &PatchField, b: &PatchField) -> Result<PatchField> {
    let da = vector_partials(b)?;
    let a_l: Vec<PatchField> = (0..3).map(|l| a.component_field(l)).collect();
    let mut comps = Vec::with_capacity(3);
    for m in 0..3 {
        let dm: Vec<PatchField> = da.iter().map(|d| d.component_field(m)).collect();
        let terms: Vec<(&PatchField, &PatchField)> = a_l.iter().zip(&dm).collect();
        comps.push(multiply_sum(&terms)?);
    }
    PatchField::stack(&comps)
}

/// `Σ_l ∂_l(a_l b)`.
fn div_tensor(a: &PatchField, b: &PatchField) -> Result<PatchField> {
    let mut comps = Vec::with_capacity(3);
    for m in 0..3 {
        let bm = b.component_field(m);
        let mut acc = PatchField::zero(1);
        for l in 0..3 {
            let prod = multiply_sum(&[(&a.component_field(l), &bm)])?;
            acc = add(&acc, &apply_multiplier(&Multiplier::partial(l), &prod)?)?;
        }
        comps.push(acc.merged());
    }
    PatchField::stack(&comps)
}

/// Both sides of
/// `U₀·∇U₀ = ½∇|Λ⁻²∇div e^{ν̄Δτ}u₀|² + div(Λ⁻²curl curl e^{μ̄Δτ}u₀ ⊗ U₀)
///  − Λ⁻²∇div e^{ν̄Δτ}u₀ · ∇Λ⁻²curl curl e^{μ̄Δτ}u₀`.
pub fn transport_identity_sides(
    u0: &PatchField,
    visc: &ViscosityParams,
    tau: f64,
) -> Result<(PatchField, PatchField, [PatchField; 3])> {
    let big_u = compute_U0(u0, visc, tau)?;
    let lhs = advect(&big_u, &big_u)?;
    let lap_inv = Multiplier::lambda_power(-2.0);
    let grad_div = Multiplier::gradient().compose(&Multiplier::divergence())?;
    let curl_curl = Multiplier::curl().compose(&Multiplier::curl())?;
    let grad_part = apply_multiplier(
        &lap_inv,
        &apply_multiplier(&grad_div, &apply_multiplier(&heat_multiplier(visc.nu_bar(), tau)?, u0)?)?,
    )?;
    let curl_part = apply_multiplier(
        &lap_inv,
        &apply_multiplier(&curl_curl, &apply_multiplier(&heat_multiplier(visc.mu_bar(), tau)?, u0)?)?,
    )?;
    let half_grad = apply_multiplier(&Multiplier::gradient(), &dot(&grad_part, &grad_part)?)?
        .scale(Complex64::new(0.5, 0.0));
    let div_term = div_tensor(&curl_part, &big_u)?;
    let cross = advect(&grad_part, &curl_part)?.scale(Complex64::new(-1.0, 0.0));
    let rhs = add(&add(&half_grad, &div_term)?, &cross)?.merged();
    Ok((lhs.merged(), rhs, [half_grad, div_term, cross]))
}

/// Largest `|LHS − RHS|` over 200 seeded frequencies in the support of the
/// left side, relative to the largest `|LHS|` met.
pub fn identity_3_7_check(u0: &PatchField, visc: &ViscosityParams, tau: f64) -> Result<f64> {
    if tau < 0.0 {
        return Err(Error::NegativeTime(tau));
    }
    let (lhs, rhs, _) = transport_identity_sides(u0, visc, tau)?;
    Ok(pointwise_residual(&lhs, &rhs, 200, 37))
}

pub(crate) fn pointwise_residual(lhs: &PatchField, rhs: &PatchField, count: usize, seed: u64) -> f64 {
    let patches: Vec<&FourierPatch> = lhs.patches().map(|(_, p)| p).chain(rhs.patches().map(|(_, p)| p)).collect();
    if patches.is_empty() {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for _ in 0..count {
        let p = patches[rng.gen_range(0..patches.len())];
        let w = p.half_width();
        let xi = [0, 1, 2].map(|d| p.center()[d] + rng.gen_range(-w..w));
        let l = lhs.evaluate(xi);
        let r = rhs.evaluate(xi);
        for (a, b) in l.iter().zip(&r) {
            worst = worst.max((a - b).norm());
            scale = scale.max(a.norm()).max(b.norm());
        }
    }
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}
