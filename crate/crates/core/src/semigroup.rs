//! Heat propagators, compressible/incompressible projections and the
//! closed-form Duhamel time kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patch_field::{add, apply_multiplier, Multiplier, PatchField};
use crate::vec3::{self, Vec3};
use crate::Complex64;

/// Dynamic viscosities and reference density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscosityParams {
    pub mu: f64,
    pub lambda: f64,
    pub rho_bar: f64,
}

impl Default for ViscosityParams {
    fn default() -> Self {
        ViscosityParams { mu: 1.0, lambda: 0.0, rho_bar: 1.0 }
    }
}

impl ViscosityParams {
    pub fn new(mu: f64, lambda: f64, rho_bar: f64) -> Result<Self> {
        let v = ViscosityParams { mu, lambda, rho_bar };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!("mu = {} must be positive", self.mu)));
        }
        if !(self.lambda + 2.0 * self.mu > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lambda + 2 mu = {} must be positive",
                self.lambda + 2.0 * self.mu
            )));
        }
        if !(self.rho_bar > 0.0) {
            return Err(Error::InvalidParameter(format!("rho_bar = {} must be positive", self.rho_bar)));
        }
        Ok(())
    }

    pub fn mu_bar(&self) -> f64 {
        self.mu / self.rho_bar
    }

    pub fn lambda_bar(&self) -> f64 {
        self.lambda / self.rho_bar
    }

    /// `ν̄ = λ̄ + 2μ̄`.
    pub fn nu_bar(&self) -> f64 {
        self.lambda_bar() + 2.0 * self.mu_bar()
    }
}

/// Heat conductivity, specific heat and gas constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    pub kappa: f64,
    pub c_v: f64,
    pub gas_r: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams { kappa: 1.0, c_v: 1.0, gas_r: 1.0 }
    }
}

impl ThermalParams {
    pub fn new(kappa: f64, c_v: f64, gas_r: f64) -> Result<Self> {
        let t = ThermalParams { kappa, c_v, gas_r };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa", self.kappa), ("c_v", self.c_v), ("gas_r", self.gas_r)] {
            if !(v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    /// `κ̃ = κ/(c_V ρ̄)`.
    pub fn kappa_tilde(&self, visc: &ViscosityParams) -> f64 {
        self.kappa / (self.c_v * visc.rho_bar)
    }

    /// `R̃ = R/c_V`.
    pub fn r_tilde(&self) -> f64 {
        self.gas_r / self.c_v
    }

    /// `μ̃ = μ/(c_V ρ̄)`.
    pub fn mu_tilde(&self, visc: &ViscosityParams) -> f64 {
        visc.mu / (self.c_v * visc.rho_bar)
    }

    /// `λ̃ = λ/(c_V ρ̄)`.
    pub fn lambda_tilde(&self, visc: &ViscosityParams) -> f64 {
        visc.lambda / (self.c_v * visc.rho_bar)
    }
}

/// `e^{νtΔ}`, symbol `e^{−νt|ξ|²}`.
pub fn heat_multiplier(nu: f64, t: f64) -> Result<Multiplier> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if !(nu >= 0.0) {
        return Err(Error::InvalidParameter(format!("diffusivity {nu}")));
    }
    Ok(Multiplier::scalar(move |xi| Complex64::new((-nu * t * vec3::norm2(xi)).exp(), 0.0), true))
}

fn projector(xi: Vec3, out: &mut [Complex64], compressible: bool) {
    let n2 = vec3::norm2(xi);
    for i in 0..3 {
        for j in 0..3 {
            let p = xi[i] * xi[j] / n2;
            let v = if compressible { p } else { f64::from(u8::from(i == j)) - p };
            out[i * 3 + j] = Complex64::new(v, 0.0);
        }
    }
}

/// Symbol `ξξᵀ/|ξ|²`, i.e. `−Λ⁻²∇div`.
pub fn compressible_projector() -> Multiplier {
    Multiplier::matrix(3, 3, |xi, out| projector(xi, out, true), true)
        .with_homogeneity(0.0)
        .singular_at_origin()
}

/// Symbol `I − ξξᵀ/|ξ|²`, i.e. `Λ⁻²curl curl`.
pub fn incompressible_projector() -> Multiplier {
    Multiplier::matrix(3, 3, |xi, out| projector(xi, out, false), true)
        .with_homogeneity(0.0)
        .singular_at_origin()
}

/// `(P u, Q u)` with `P u + Q u = u`.
pub fn helmholtz_split(u: &PatchField) -> Result<(PatchField, PatchField)> {
    if u.n_components() != 3 {
        return Err(Error::ComponentMismatch { left: 3, right: u.n_components() });
    }
    Ok((apply_multiplier(&compressible_projector(), u)?, apply_multiplier(&incompressible_projector(), u)?))
}

/// `Λ⁻¹div`, symbol `iξᵀ/|ξ|`.
pub fn lambda_inv_div() -> Multiplier {
    Multiplier::matrix(
        1,
        3,
        |xi, out| {
            let r = vec3::norm(xi);
            for d in 0..3 {
                out[d] = Complex64::new(0.0, xi[d] / r);
            }
        },
        true,
    )
    .with_homogeneity(0.0)
    .singular_at_origin()
}

/// `Λ⁻¹curl`, symbol `(iξ×)/|ξ|`.
pub fn lambda_inv_curl() -> Multiplier {
    Multiplier::matrix(
        3,
        3,
        |xi, out| {
            let r = vec3::norm(xi);
            let i = |v: f64| Complex64::new(0.0, v / r);
            let z = Complex64::new(0.0, 0.0);
            out.copy_from_slice(&[z, i(-xi[2]), i(xi[1]), i(xi[2]), z, i(-xi[0]), i(-xi[1]), i(xi[0]), z]);
        },
        true,
    )
    .with_homogeneity(0.0)
    .singular_at_origin()
}

/// `Λ⁻¹∇`, symbol `iξ/|ξ|`.
pub fn lambda_inv_grad() -> Multiplier {
    Multiplier::matrix(
        3,
        1,
        |xi, out| {
            let r = vec3::norm(xi);
            for d in 0..3 {
                out[d] = Complex64::new(0.0, xi[d] / r);
            }
        },
        true,
    )
    .with_homogeneity(0.0)
    .singular_at_origin()
}

/// `h = Λ⁻¹div u`, `Ω = Λ⁻¹curl u`.
pub fn h_omega_from_u(u: &PatchField) -> Result<(PatchField, PatchField)> {
    if u.n_components() != 3 {
        return Err(Error::ComponentMismatch { left: 3, right: u.n_components() });
    }
    Ok((apply_multiplier(&lambda_inv_div(), u)?, apply_multiplier(&lambda_inv_curl(), u)?))
}

/// `u = −Λ⁻¹∇h + Λ⁻¹curl Ω`.
pub fn u_from_h_omega(h: &PatchField, omega: &PatchField) -> Result<PatchField> {
    let grad = apply_multiplier(&lambda_inv_grad(), h)?.scale(Complex64::new(-1.0, 0.0));
    let rot = apply_multiplier(&lambda_inv_curl(), omega)?;
    Ok(add(&grad, &rot)?.merged())
}

/// Branch threshold on `|B − A|·t` below which the series is used.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// `∫₀ᵗ e^{−A(t−τ)} e^{−Bτ} dτ = (e^{−At} − e^{−Bt})/(B − A)`.
#[inline]
pub fn duhamel_kernel(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let x = (b - a) * t;
    let ea = (-a * t).exp();
    if x.abs() < SERIES_THRESHOLD {
        // (1 − e^{−x})/x = Σ (−x)^n/(n+1)!
        let mut term: f64 = 1.0;
        let mut sum = 1.0;
        let mut n = 1.0;
        while term.abs() > 1e-16 {
            term *= -x / (n + 1.0);
            sum += term;
            n += 1.0;
        }
        t * ea * sum
    } else {
        -ea * (-x).exp_m1() / (b - a)
    }
}

/// `D(A, B, t)` given `e^{−At}` and `e^{−Bt}`, for loops that share the
/// exponentials across many kernels.
#[inline]
pub fn duhamel_kernel_from(a: f64, b: f64, t: f64, ea: f64, eb: f64) -> f64 {
    let x = (b - a) * t;
    if x.abs() < SERIES_THRESHOLD {
        t * ea * (1.0 - 0.5 * x + x * x / 6.0)
    } else {
        (ea - eb) / (b - a)
    }
}

/// `D(A₂, B, t) − D(A₁, B, t)` without the cancellation of the plain
/// difference when `|A₂ − A₁|t ≪ 1`; `ea1 = e^{−A₁t}`, `eb = e^{−Bt}`.
#[inline]
pub fn duhamel_kernel_difference(a1: f64, a2: f64, b: f64, t: f64, ea1: f64, eb: f64) -> f64 {
    let d1 = b - a1;
    let d2 = b - a2;
    let delta = a2 - a1;
    if (d1 * t).abs() < 1e-3 || (d2 * t).abs() < 1e-3 {
        return duhamel_kernel(a2, b, t) - duhamel_kernel(a1, b, t);
    }
    let y = -delta * t;
    let phi1 = if y.abs() < 1e-8 { 1.0 + 0.5 * y } else { y.exp_m1() / y };
    delta * (ea1 * (1.0 - d1 * t * phi1) - eb) / (d1 * d2)
}

/// `(D(A, B, t), t)`: the kernel and its leading Taylor value.
pub fn kernel_taylor_check(a: f64, b: f64, t: f64, k_scale: f64) -> (f64, f64) {
    debug_assert!(t * k_scale * k_scale <= 1.0 + 1e-12 || t == 0.0);
    (duhamel_kernel(a, b, t), t)
}
