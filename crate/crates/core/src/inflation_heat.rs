//! Temperature response of the heat-conductive system.
//!
//! The velocity data points along `e₁`; `θ₁` is the heat flow of the
//! dissipation `(μ̃/2)|∇U₀ + (∇U₀)ᵀ|² + λ̃|div U₀|²`. The witness
//! `∫φ(2⁴ξ)θ̂₁(t, ξ) dξ` splits into the `|div U₀|²` part `θ₁₁` and the
//! nine products `ℋ^{JJ'}` of the three symbol pieces of the symmetric
//! gradient.

use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm, time_block_norms, BesovSpec, NormResult, TimeSamples};
use crate::error::{Error, Result};
use crate::inflation_barotropic::{
    c_of_n, check_spacing, compute_U0, data_frame, relative_change, step, trace_text,
    vector_sites, witness_rule, BumpLattice, Region, RefinementStep, WitnessQuadrature, BOUND_SETTINGS,
    BUMP_RADIUS, K_MIN,
};
use crate::lp_frame::{make_data_bump, PHI_SUPPORT};
use crate::patch_field::{add, apply_multiplier, multiply_sum, FourierPatch, Multiplier, PatchField};
use crate::quadrature::{composite_gauss_legendre_rule, SphericalRule, TimeGrid};
use crate::semigroup::{duhamel_kernel_from, heat_multiplier, ThermalParams, ViscosityParams};
use crate::vec3::{self, Vec3};
use crate::Complex64;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

pub(crate) const HEAT_REGION: Region =
    Region { q_range: (2.0, 3.0), p_tilde_min: 3.0, sum_bound: 2.0, eps_cap: 2.0 / 3.0 };

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatParamTriplet {
    pub p: f64,
    pub p_tilde: f64,
    pub q: f64,
    pub eps: f64,
}

impl HeatParamTriplet {
    /// The violated feasibility inequalities, each evaluated as written.
    pub fn violations(&self) -> Vec<String> {
        let HeatParamTriplet { p, p_tilde, q, eps } = *self;
        let mut v = Vec::new();
        if !(p > 3.0) {
            v.push("p > 3".to_string());
        }
        if !(2.0 < q && q < 3.0) {
            v.push("2 < q < 3".to_string());
        }
        if !(3.0 < p_tilde && p_tilde < p) {
            v.push("3 < p_tilde < p".to_string());
        }
        if !(3.0 / p_tilde + 3.0 / q - 2.0 > 0.0) {
            v.push("3/p_tilde + 3/q - 2 > 0".to_string());
        }
        let lower = (2.0 / p_tilde - 1.0 / q - 1.0 / p).max(3.0 / 5.0 * (1.0 / q - 1.0 / p));
        if !(lower < eps) {
            v.push("max{2/p_tilde - 1/q - 1/p, (3/5)(1/q - 1/p)} < eps".to_string());
        }
        if !(eps < 2.0 / 3.0 - 1.0 / q - 1.0 / p) {
            v.push("eps < 2/3 - 1/q - 1/p".to_string());
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

    /// `2 − 3/q − 3/p − 3ε`.
    pub fn predicted_exponent(&self) -> f64 {
        2.0 - 3.0 / self.q - 3.0 / self.p - 3.0 * self.eps
    }

    pub fn slack(&self) -> f64 {
        HEAT_REGION.slack(self.p, self.p_tilde, self.q, self.eps)
    }
}

/// Slack-maximizing feasible triplet for `p > 3`.
pub fn choose_parameters_heat(p: f64) -> Result<HeatParamTriplet> {
    if !(p > 3.0) {
        return Err(Error::Infeasible(vec!["p > 3".to_string()]));
    }
    let (q, p_tilde, eps) =
        HEAT_REGION.search(p).ok_or_else(|| Error::Infeasible(vec!["empty eps window".to_string()]))?;
    let t = HeatParamTriplet { p, p_tilde, q, eps };
    t.validate()?;
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatDataSpec {
    pub n: u32,
    pub params: HeatParamTriplet,
    pub c_n: f64,
    pub e1: Vec3,
    pub spacing: f64,
}

impl HeatDataSpec {
    /// `n ≥ 9`; for `n < 11` the k-range holds at most one frequency.
    pub fn new(n: u32, params: HeatParamTriplet, spacing: f64) -> Result<Self> {
        params.validate()?;
        if n < 9 {
            return Err(Error::InvalidParameter(format!("N = {n} below 9")));
        }
        check_spacing(spacing)?;
        let c_n = c_of_n(n, params.q, params.p, params.eps);
        Ok(HeatDataSpec { n, params, c_n, e1: [1.0, 0.0, 0.0], spacing })
    }

    pub fn c_n_sq(&self) -> f64 {
        self.c_n * self.c_n
    }

    pub fn k_range(&self) -> std::ops::RangeInclusive<u32> {
        K_MIN..=self.n
    }

    pub fn amplitude(&self, k: u32) -> f64 {
        2f64.powf(k as f64 * (1.0 - 3.0 / self.params.p)) / self.c_n
    }

    pub fn t_star(&self) -> f64 {
        2f64.powf(-2.0 * (1.0 + self.params.eps) * self.n as f64)
    }

    fn atom_center(&self, k: u32, s: f64) -> Vec3 {
        vec3::scale(s * 2f64.powi(k as i32), self.e1)
    }
}

fn centred_bump(spacing: f64, amp: f64) -> Result<PatchField> {
    let bump = make_data_bump();
    PatchField::scalar(
        vec![FourierPatch::radial([0.0; 3], spacing, BUMP_RADIUS, Complex64::new(amp, 0.0), |r| bump.eval(r))?],
        true,
    )
}

fn velocity_data(spec: &HeatDataSpec) -> Result<PatchField> {
    let bump = make_data_bump();
    let mut c0 = Vec::new();
    for k in spec.k_range() {
        let a = Complex64::new(spec.amplitude(k), 0.0);
        for s in [1.0, -1.0] {
            c0.push(FourierPatch::radial(spec.atom_center(k, s), spec.spacing, BUMP_RADIUS, a, |r| bump.eval(r))?);
        }
    }
    PatchField::new(vec![c0, Vec::new(), Vec::new()], true)
}

/// `(a₀, u₀, θ₀)` with `a₀ = F⁻¹φ/(2^N C(N))` and `θ₀ = F⁻¹φ/C(N)`.
pub fn build_initial_data_heat(spec: &HeatDataSpec) -> Result<(PatchField, PatchField, PatchField)> {
    if spec.n < 11 {
        return Err(Error::InvalidParameter(format!("initial data needs N ≥ 11, got {}", spec.n)));
    }
    let a0 = centred_bump(spec.spacing, 1.0 / (2f64.powi(spec.n as i32) * spec.c_n))?;
    let theta0 = centred_bump(spec.spacing, 1.0 / spec.c_n)?;
    Ok((a0, velocity_data(spec)?, theta0))
}

// ---------------------------------------------------------------------------
// Dissipation source

/// `∂_l U_m + ∂_m U_l`, row-major in `(l, m)`.
fn symmetric_gradient(u: &PatchField) -> Result<Vec<PatchField>> {
    let mut d = Vec::with_capacity(9);
    for l in 0..3 {
        for m in 0..3 {
            d.push(apply_multiplier(&Multiplier::partial(l), &u.component_field(m))?);
        }
    }
    let mut s = Vec::with_capacity(9);
    for l in 0..3 {
        for m in 0..3 {
            s.push(add(&d[l * 3 + m], &d[m * 3 + l])?.merged());
        }
    }
    Ok(s)
}

fn divergence(u: &PatchField) -> Result<PatchField> {
    Ok(apply_multiplier(&Multiplier::divergence(), u)?.merged())
}

/// `(μ̃/2)|∇U₀ + (∇U₀)ᵀ|² + λ̃|div U₀|²` at time `τ`.
pub fn dissipation_source(
    u0: &PatchField,
    visc: &ViscosityParams,
    thermal: &ThermalParams,
    tau: f64,
) -> Result<PatchField> {
    let big_u = compute_U0(u0, visc, tau)?;
    let s = symmetric_gradient(&big_u)?;
    let terms: Vec<(&PatchField, &PatchField)> = s.iter().map(|f| (f, f)).collect();
    let sym = multiply_sum(&terms)?.scale(Complex64::new(0.5 * thermal.mu_tilde(visc), 0.0));
    let div = divergence(&big_u)?;
    let dd = multiply_sum(&[(&div, &div)])?.scale(Complex64::new(thermal.lambda_tilde(visc), 0.0));
    Ok(add(&sym, &dd)?.merged())
}

/// Time nodes used for `θ₁`: Gauss–Legendre on three equal panels.
const THETA_PANELS: usize = 3;
const THETA_ORDER: usize = 8;

/// `θ₁(t) = ∫₀ᵗ e^{κ̃(t−τ)Δ} S(τ) dτ` with `S` the dissipation source, by
/// Gauss–Legendre in τ over patch products.
pub fn compute_theta1(
    spec: &HeatDataSpec,
    visc: &ViscosityParams,
    thermal: &ThermalParams,
    t: f64,
) -> Result<PatchField> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 || spec.n < K_MIN {
        return Ok(PatchField::zero(1));
    }
    let u0 = velocity_data(spec)?;
    let kappa = thermal.kappa_tilde(visc);
    let (taus, ws) = composite_gauss_legendre_rule(0.0, t, THETA_PANELS, THETA_ORDER);
    let mut acc = PatchField::zero(1);
    for (&tau, &w) in taus.iter().zip(&ws) {
        let src = dissipation_source(&u0, visc, thermal, tau)?;
        let flowed = apply_multiplier(&heat_multiplier(kappa, t - tau)?, &src)?;
        acc = add(&acc, &flowed.scale(Complex64::new(w, 0.0)))?.merged();
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Closed-form pair sums

/// Weights of `Ĥ^J(ζ):Ĥ^{J'}(η)` per unit amplitude, for data along `w = e₁`.
#[inline]
fn contractions(zeta: Vec3, eta: Vec3, n2z: f64, n2e: f64) -> [[f64; 3]; 3] {
    let ze = vec3::dot(zeta, eta);
    let (dz, de) = (zeta[0], eta[0]);
    let gg = ze * ze * dz * de / (n2z * n2e);
    let gs = 2.0 * ze * dz * dz / n2z;
    let sg = 2.0 * ze * de * de / n2e;
    let ss = 2.0 * ze + 2.0 * dz * de;
    // c = (2i, −2i, i); c_J c_J' is real
    let c = [2.0, -2.0, 1.0];
    let mut out = [[0.0; 3]; 3];
    for j in 0..3 {
        for jp in 0..3 {
            let val = match (j < 2, jp < 2) {
                (true, true) => gg,
                (true, false) => gs,
                (false, true) => sg,
                (false, false) => ss,
            };
            out[j][jp] = -c[j] * c[jp] * val;
        }
    }
    out
}

struct HeatRates {
    nu: f64,
    mu: f64,
    kappa: f64,
    mu_t: f64,
    lambda_t: f64,
}

impl HeatRates {
    fn new(visc: &ViscosityParams, thermal: &ThermalParams) -> HeatRates {
        HeatRates {
            nu: visc.nu_bar(),
            mu: visc.mu_bar(),
            kappa: thermal.kappa_tilde(visc),
            mu_t: thermal.mu_tilde(visc),
            lambda_t: thermal.lambda_tilde(visc),
        }
    }
}

/// Adds the `θ₁₁` and `ℋ` integrands of one `(ζ, η)` pair with weight `w`.
#[inline]
#[allow(clippy::too_many_arguments)]
fn accumulate_pair(
    r: &HeatRates,
    t: f64,
    a: f64,
    ea: f64,
    zeta: Vec3,
    eta: Vec3,
    ee: (f64, f64),
    w: f64,
    theta: &mut f64,
    h: &mut [[f64; 3]; 3],
) {
    let n2z = vec3::norm2(zeta);
    let n2e = vec3::norm2(eta);
    let ez = ((-r.nu * t * n2z).exp(), (-r.mu * t * n2z).exp());
    let d_nn = duhamel_kernel_from(a, r.nu * (n2z + n2e), t, ea, ez.0 * ee.0);
    *theta += r.lambda_t * w * (-(zeta[0] * eta[0])) * d_nn;
    let rate = [r.nu, r.mu, r.mu];
    let ezs = [ez.0, ez.1, ez.1];
    let ees = [ee.0, ee.1, ee.1];
    let cm = contractions(zeta, eta, n2z, n2e);
    for j in 0..3 {
        for jp in 0..3 {
            let big = rate[j] * n2z + rate[jp] * n2e;
            let k = duhamel_kernel_from(a, big, t, ea, ezs[j] * ees[jp]);
            h[j][jp] += 0.5 * r.mu_t * w * cm[j][jp] * k;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatWitnessBreakdown {
    pub theta11: Complex64,
    pub h: [[Complex64; 3]; 3],
    pub total: Complex64,
    pub t: f64,
    pub trace: Vec<RefinementStep>,
}

impl HeatWitnessBreakdown {
    fn from_parts(theta: f64, h: [[f64; 3]; 3], t: f64, trace: Vec<RefinementStep>) -> Self {
        let hc = h.map(|row| row.map(|v| Complex64::new(v, 0.0)));
        let total = Complex64::new(theta + h.iter().flatten().sum::<f64>(), 0.0);
        HeatWitnessBreakdown { theta11: Complex64::new(theta, 0.0), h: hc, total, t, trace }
    }

    /// `θ₁₁ + ℋ¹¹`.
    pub fn leading(&self) -> Complex64 {
        self.theta11 + self.h[0][0]
    }

    /// `ℋ³³ + ℋ³²`, `ℋ²² + ℋ²³`, `ℋ¹² + ℋ¹³`, `ℋ²¹ + ℋ³¹`.
    pub fn grouped_cross_terms(&self) -> [Complex64; 4] {
        let h = &self.h;
        [h[2][2] + h[2][1], h[1][1] + h[1][2], h[0][1] + h[0][2], h[1][0] + h[2][0]]
    }

    /// `|θ₁₁ + ℋ¹¹|` minus the summed magnitudes of the grouped cross terms.
    pub fn dominance_margin(&self) -> f64 {
        let others = self.grouped_cross_terms().iter().fold(0.0, |acc, v| acc + v.norm());
        self.leading().norm() - others
    }
}

struct HeatSite {
    eta: Vec3,
    e_nu: f64,
    e_mu: f64,
}

struct HeatKernel {
    rates: HeatRates,
    t: f64,
    lattice: BumpLattice,
    /// `(velocity centre, gradient centre, amplitude product, sites)`.
    pairs: Vec<(Vec3, f64, Vec<HeatSite>)>,
}

impl HeatKernel {
    fn new(spec: &HeatDataSpec, visc: &ViscosityParams, thermal: &ThermalParams, t: f64) -> HeatKernel {
        let rates = HeatRates::new(visc, thermal);
        let lattice = BumpLattice::new(spec.spacing);
        let mut pairs = Vec::new();
        for k in spec.k_range() {
            for s in [1.0, -1.0] {
                let c = spec.atom_center(k, s);
                let sites = lattice
                    .offsets
                    .iter()
                    .map(|&e| {
                        let eta = vec3::add(c, e);
                        let n2 = vec3::norm2(eta);
                        HeatSite { eta, e_nu: (-rates.nu * t * n2).exp(), e_mu: (-rates.mu * t * n2).exp() }
                    })
                    .collect();
                let amp = spec.amplitude(k);
                pairs.push((c, amp * amp, sites));
            }
        }
        HeatKernel { rates, t, lattice, pairs }
    }

    fn at(&self, xi: Vec3) -> (f64, [[f64; 3]; 3]) {
        let bump = make_data_bump();
        let a = self.rates.kappa * vec3::norm2(xi);
        let ea = (-a * self.t).exp();
        let mut theta = 0.0;
        let mut h = [[0.0; 3]; 3];
        for (ie, &e) in self.lattice.offsets.iter().enumerate() {
            let d = vec3::sub(xi, e);
            let b2 = bump.eval(vec3::norm(d));
            if b2 == 0.0 {
                continue;
            }
            let base = self.lattice.values[ie] * b2 * self.lattice.h3;
            for (c, amp2, sites) in &self.pairs {
                let site = &sites[ie];
                let zeta = vec3::sub(d, *c);
                accumulate_pair(
                    &self.rates,
                    self.t,
                    a,
                    ea,
                    zeta,
                    site.eta,
                    (site.e_nu, site.e_mu),
                    base * amp2,
                    &mut theta,
                    &mut h,
                );
            }
        }
        (theta, h)
    }

    fn integrate(&self, rule: &SphericalRule) -> (f64, [[f64; 3]; 3]) {
        let mut theta = 0.0;
        let mut h = [[0.0; 3]; 3];
        for (xi, w) in rule.nodes.iter().zip(&rule.weights) {
            let (th, hh) = self.at(*xi);
            theta += w * th;
            for j in 0..3 {
                for jp in 0..3 {
                    h[j][jp] += w * hh[j][jp];
                }
            }
        }
        (theta, h)
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

fn total_of(v: &(f64, [[f64; 3]; 3])) -> Complex64 {
    Complex64::new(v.0 + v.1.iter().flatten().sum::<f64>(), 0.0)
}

pub fn witness_heat_with_rule(
    spec: &HeatDataSpec,
    visc: &ViscosityParams,
    thermal: &ThermalParams,
    t: f64,
    rule: &SphericalRule,
) -> Result<HeatWitnessBreakdown> {
    check_time(spec.n, t)?;
    let (theta, h) = HeatKernel::new(spec, visc, thermal, t).integrate(rule);
    Ok(HeatWitnessBreakdown::from_parts(theta, h, t, Vec::new()))
}

/// `θ₁₁` and `ℋ^{JJ'}` with the `ξ`-rule refined until the total settles.
pub fn witness_heat(
    spec: &HeatDataSpec,
    visc: &ViscosityParams,
    thermal: &ThermalParams,
    t: f64,
    quad: &WitnessQuadrature,
) -> Result<HeatWitnessBreakdown> {
    check_time(spec.n, t)?;
    let kernel = HeatKernel::new(spec, visc, thermal, t);
    let (mut radial, mut polar) = (quad.radial, quad.polar);
    let mut prev = kernel.integrate(&witness_rule(radial, polar));
    let mut trace = vec![step(radial, polar, total_of(&prev), None)];
    for _ in 0..quad.max_refinements {
        radial *= 2;
        polar *= 2;
        let next = kernel.integrate(&witness_rule(radial, polar));
        let change = relative_change(total_of(&next), total_of(&prev));
        trace.push(step(radial, polar, total_of(&next), Some(change)));
        if change < quad.tol {
            return Ok(HeatWitnessBreakdown::from_parts(next.0, next.1, t, trace));
        }
        prev = next;
    }
    Err(Error::QuadratureNonConvergence(format!("N = {}: {}", spec.n, trace_text(&trace))))
}

/// `θ̂₁(t, ξ)` by the closed-form τ-integral over every atom pair.
pub fn theta1_at(
    spec: &HeatDataSpec,
    visc: &ViscosityParams,
    thermal: &ThermalParams,
    t: f64,
    xi: Vec3,
) -> Complex64 {
    let kernel = HeatKernel::new(spec, visc, thermal, t);
    let bump = make_data_bump();
    let a = kernel.rates.kappa * vec3::norm2(xi);
    let ea = (-a * t).exp();
    let mut theta = 0.0;
    let mut h = [[0.0; 3]; 3];
    for (c, _, sites) in &kernel.pairs {
        for (cv, _, _) in &kernel.pairs {
            let amp = amp_at(spec, *c) * amp_at(spec, *cv);
            for (ie, site) in sites.iter().enumerate() {
                let zeta = vec3::sub(xi, site.eta);
                let b2 = bump.eval(vec3::norm(vec3::sub(zeta, *cv)));
                if b2 == 0.0 {
                    continue;
                }
                let w = kernel.lattice.values[ie] * b2 * kernel.lattice.h3 * amp;
                accumulate_pair(&kernel.rates, t, a, ea, zeta, site.eta, (site.e_nu, site.e_mu), w, &mut theta, &mut h);
            }
        }
    }
    total_of(&(theta, h))
}

fn amp_at(spec: &HeatDataSpec, c: Vec3) -> f64 {
    let k = c[0].abs().log2().round() as u32;
    spec.amplitude(k)
}

/// Û₀(τ, ζ) from the data formula.
fn u0_hat(spec: &HeatDataSpec, visc: &ViscosityParams, tau: f64, zeta: Vec3) -> [Complex64; 3] {
    let bump = make_data_bump();
    let mut a = 0.0;
    for k in spec.k_range() {
        for s in [1.0, -1.0] {
            let r = vec3::norm(vec3::sub(zeta, spec.atom_center(k, s)));
            if r < BUMP_RADIUS {
                a += spec.amplitude(k) * bump.eval(r);
            }
        }
    }
    let n2 = vec3::norm2(zeta);
    if a == 0.0 || n2 == 0.0 {
        return [ZERO; 3];
    }
    let (ep, eq) = ((-visc.nu_bar() * tau * n2).exp(), (-visc.mu_bar() * tau * n2).exp());
    let proj = zeta[0] * a / n2;
    let mut out = [ZERO; 3];
    for d in 0..3 {
        let p = zeta[d] * proj;
        let u = if d == 0 { a } else { 0.0 };
        out[d] = Complex64::new(p * ep + (u - p) * eq, 0.0);
    }
    out
}

/// Full gradient `i x_l u_m` (row-major in `(l, m)`).
fn gradient_matrix(x: Vec3, u: &[Complex64; 3]) -> [Complex64; 9] {
    let mut g = [ZERO; 9];
    for l in 0..3 {
        for m in 0..3 {
            g[l * 3 + m] = Complex64::new(0.0, x[l]) * u[m];
        }
    }
    g
}

/// `∫φ(2⁴ξ)θ̂₁(t, ξ) dξ` with full gradient matrices, `U₀(τ)` tabulated
/// through the multiplier path on the η side, the data formula on the ζ
/// side and Gauss–Legendre in τ.
pub fn witness_heat_direct(
    spec: &HeatDataSpec,
    visc: &ViscosityParams,
    thermal: &ThermalParams,
    t: f64,
    rule: &SphericalRule,
    tau_panels: usize,
    tau_order: usize,
) -> Result<Complex64> {
    let u0 = velocity_data(spec)?;
    let r = HeatRates::new(visc, thermal);
    let (taus, tw) = composite_gauss_legendre_rule(0.0, t, tau_panels, tau_order);
    let h3 = spec.spacing.powi(3);
    let mut total = ZERO;
    for (&tau, &wt) in taus.iter().zip(&tw) {
        let sites = vector_sites(&compute_U0(&u0, visc, tau)?);
        for (xi, wx) in rule.nodes.iter().zip(&rule.weights) {
            let mut acc = ZERO;
            for (eta, ue) in &sites {
                let zeta = vec3::sub(*xi, *eta);
                let uz = u0_hat(spec, visc, tau, zeta);
                if uz.iter().all(|v| *v == ZERO) {
                    continue;
                }
                let gz = gradient_matrix(zeta, &uz);
                let ge = gradient_matrix(*eta, ue);
                let mut sym = ZERO;
                for l in 0..3 {
                    for m in 0..3 {
                        let sz = gz[l * 3 + m] + gz[m * 3 + l];
                        let se = ge[l * 3 + m] + ge[m * 3 + l];
                        sym += sz * se;
                    }
                }
                let dz = gz[0] + gz[4] + gz[8];
                let de = ge[0] + ge[4] + ge[8];
                acc += sym * (0.5 * r.mu_t) + dz * de * r.lambda_t;
            }
            let decay = (-r.kappa * (t - tau) * vec3::norm2(*xi)).exp();
            total += acc * (decay * h3 * wt * wx);
        }
    }
    Ok(total)
}

/// Largest relative deviation between `F(∇U₀ + (∇U₀)ᵀ)` from the multiplier
/// path and `Ĥ¹ + Ĥ² + Ĥ³` from their formulas, over every lattice point of
/// `U₀(τ)`.
pub fn h_split_check(spec: &HeatDataSpec, visc: &ViscosityParams, tau: f64) -> Result<f64> {
    let u0 = velocity_data(spec)?;
    let big_u = compute_U0(&u0, visc, tau)?;
    let s = symmetric_gradient(&big_u)?;
    let bump = make_data_bump();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (eta, _) in vector_sites(&big_u) {
        let mut a = 0.0;
        for k in spec.k_range() {
            for sg in [1.0, -1.0] {
                a += spec.amplitude(k) * bump.eval(vec3::norm(vec3::sub(eta, spec.atom_center(k, sg))));
            }
        }
        let n2 = vec3::norm2(eta);
        let (en, em) = ((-visc.nu_bar() * tau * n2).exp(), (-visc.mu_bar() * tau * n2).exp());
        let u = [a, 0.0, 0.0];
        let eu = eta[0] * a;
        for l in 0..3 {
            for m in 0..3 {
                let h1 = Complex64::new(0.0, 2.0 / n2 * en * eta[l] * eta[m] * eu);
                let h2 = Complex64::new(0.0, -2.0 / n2 * em * eta[l] * eta[m] * eu);
                let h3 = Complex64::new(0.0, em * (eta[l] * u[m] + eta[m] * u[l]));
                let lattice = s[l * 3 + m].evaluate(eta)[0];
                worst = worst.max((lattice - (h1 + h2 + h3)).norm());
                scale = scale.max(lattice.norm());
            }
        }
    }
    Ok(if scale == 0.0 { 0.0 } else { worst / scale })
}

// ---------------------------------------------------------------------------
// Growth check and norm bounds

#[derive(Clone, Debug, PartialEq)]
pub struct HeatInflationCheck {
    pub witness_value: f64,
    pub predicted_exponent: f64,
    pub t_star: f64,
    pub breakdown: HeatWitnessBreakdown,
}

pub fn inflation_check_heat(
    spec: &HeatDataSpec,
    visc: &ViscosityParams,
    thermal: &ThermalParams,
    quad: &WitnessQuadrature,
) -> Result<HeatInflationCheck> {
    let t_star = spec.t_star();
    let breakdown = witness_heat(spec, visc, thermal, t_star, quad)?;
    Ok(HeatInflationCheck {
        witness_value: breakdown.total.norm(),
        predicted_exponent: spec.params.predicted_exponent(),
        t_star,
        breakdown,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatDataNorms {
    /// `‖a₀‖_{Ḃ^{3/q}_{q,1}}`.
    pub a0: NormResult,
    /// `‖θ₀‖_{Ḃ^{−2+3/q}_{q,1}}`.
    pub theta0: NormResult,
    /// `‖u₀‖_{Ḃ^{3/p−1}_{p,1}}`.
    pub u0: NormResult,
}

pub fn initial_data_norms_heat(spec: &HeatDataSpec) -> Result<HeatDataNorms> {
    let (a0, u0, theta0) = build_initial_data_heat(spec)?;
    let frame = data_frame(spec.n);
    let (p, q) = (spec.params.p, spec.params.q);
    Ok(HeatDataNorms {
        a0: besov_norm(&a0, &BesovSpec::new(3.0 / q, q, 1.0)?, &frame)?,
        theta0: besov_norm(&theta0, &BesovSpec::new(3.0 / q - 2.0, q, 1.0)?, &frame)?,
        u0: besov_norm(&u0, &BesovSpec::new(3.0 / p - 1.0, p, 1.0)?, &frame)?,
    })
}

/// Upper bound for `‖θ₁‖_{L¹_TḂ^{3/q}_{q,1}} + ‖θ₁‖_{L̃²_TḂ^{3/q−1}_{q,1}}`
/// from `‖Δ_jθ₁(t)‖_q ≤ g_j(t) = ∫₀ᵗ‖Δ_jS(τ)‖_q dτ`, `g_j` nondecreasing:
/// the bound is `Σ_j (2^{3j/q}T + 2^{j(3/q−1)}T^{1/2}) g_j(T)`.
pub fn theta1_upper_bound_4_12(
    spec: &HeatDataSpec,
    visc: &ViscosityParams,
    thermal: &ThermalParams,
    horizon: f64,
) -> Result<f64> {
    if horizon == 0.0 || spec.n < K_MIN {
        return Ok(0.0);
    }
    let u0 = velocity_data(spec)?;
    let frame = data_frame(spec.n);
    let q = spec.params.q;
    let grid = TimeGrid::geometric_simpson(horizon, 0, 4);
    let samples = TimeSamples::from_fn(grid, |tau| dissipation_source(&u0, visc, thermal, tau))?;
    let blocks = time_block_norms(&samples, 1.0, q, &frame, &BOUND_SETTINGS)?;
    Ok(blocks.iter().fold(0.0, |acc, b| {
        let j = b.j as f64;
        acc + (2f64.powf(3.0 * j / q) * horizon + 2f64.powf(j * (3.0 / q - 1.0)) * horizon.sqrt()) * b.value
    }))
}

/// `T·2^{N(3/q − 3/p + 2)}/C(N)²`.
pub fn theta1_bound_normalizer(spec: &HeatDataSpec, horizon: f64) -> f64 {
    let (p, q) = (spec.params.p, spec.params.q);
    horizon * 2f64.powf(spec.n as f64 * (3.0 / q - 3.0 / p + 2.0)) / spec.c_n_sq()
}

/// Outer radius of the witness block, for callers sizing ξ-rules.
pub fn heat_witness_radius() -> f64 {
    PHI_SUPPORT.1 / 16.0
}
