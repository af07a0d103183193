//! Smooth radial cutoffs and the homogeneous Littlewood–Paley frame.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::patch_field::{FourierPatch, PatchField, MIN_HALF_POINTS};
use crate::vec3::{self, Vec3};
use crate::Complex64;

/// Inner radius of the frame cutoff `χ`.
pub const CHI_INNER: f64 = 0.75;
/// Outer radius of the frame cutoff `χ`.
pub const CHI_OUTER: f64 = 4.0 / 3.0;
/// Support annulus of `φ`: `[3/4, 8/3]`.
pub const PHI_SUPPORT: (f64, f64) = (0.75, 8.0 / 3.0);
/// `φ = 1` on `[4/3, 3/2]`.
pub const PHI_PLATEAU: (f64, f64) = (4.0 / 3.0, 1.5);

#[inline]
fn exp_ramp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// The exponential smoothstep `s(t) = f(t)/(f(t) + f(1−t))`,
/// `f(t) = e^{−1/t}` for `t > 0`.
#[inline]
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = exp_ramp(t);
        a / (a + exp_ramp(1.0 - t))
    }
}

/// Radial profile equal to 1 up to `inner`, 0 from `outer` on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothCutoff {
    inner: f64,
    outer: f64,
}

impl SmoothCutoff {
    pub fn new(inner: f64, outer: f64) -> Result<Self> {
        if !(inner >= 0.0 && outer > inner && outer.is_finite()) {
            return Err(Error::InvalidCutoff { inner, outer });
        }
        Ok(SmoothCutoff { inner, outer })
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer
    }

    #[inline]
    pub fn eval(&self, rho: f64) -> f64 {
        1.0 - smoothstep((rho - self.inner) / (self.outer - self.inner))
    }

    #[inline]
    pub fn eval_at(&self, xi: Vec3) -> f64 {
        self.eval(vec3::norm(xi))
    }

    /// Largest finite-difference derivatives of orders 1..=4 over `n`
    /// uniform steps covering the transition.
    pub fn derivative_bounds(&self, n: usize) -> [f64; 4] {
        let a = self.inner - 0.1 * (self.outer - self.inner);
        let b = self.outer + 0.1 * (self.outer - self.inner);
        let dh = (b - a) / n as f64;
        let vals: Vec<f64> = (0..=n).map(|i| self.eval(a + dh * i as f64)).collect();
        let mut out = [0.0; 4];
        let mut diff = vals;
        for (k, slot) in out.iter_mut().enumerate() {
            diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
            *slot = diff.iter().fold(0.0_f64, |m, d| m.max(d.abs())) / dh.powi(k as i32 + 1);
        }
        out
    }
}

/// The data bump: 1 on `|ξ| ≤ 1`, 0 on `|ξ| ≥ 2`.
pub fn make_data_bump() -> SmoothCutoff {
    SmoothCutoff { inner: 1.0, outer: 2.0 }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpFrame {
    pub chi: SmoothCutoff,
    pub j_min: i32,
    pub j_max: i32,
}

pub fn make_lp_frame(j_min: i32, j_max: i32) -> Result<LpFrame> {
    if j_min > j_max {
        return Err(Error::InvalidBandRange { j_min, j_max });
    }
    Ok(LpFrame { chi: SmoothCutoff { inner: CHI_INNER, outer: CHI_OUTER }, j_min, j_max })
}

impl LpFrame {
    /// `φ(ρ) = χ(ρ/2) − χ(ρ)`.
    #[inline]
    pub fn phi(&self, rho: f64) -> f64 {
        self.chi.eval(0.5 * rho) - self.chi.eval(rho)
    }

    /// `φ(2^{−j}|ξ|)`.
    #[inline]
    pub fn phi_j(&self, j: i32, xi: Vec3) -> f64 {
        self.phi(vec3::norm(xi) * 2f64.powi(-j))
    }

    /// `χ(2^{−j}|ξ|)`, the symbol of `S_j`-type low-pass filters.
    #[inline]
    pub fn chi_j(&self, j: i32, xi: Vec3) -> f64 {
        self.chi.eval(vec3::norm(xi) * 2f64.powi(-j))
    }

    /// Bands `j` whose support annulus `2^j[3/4, 8/3]` meets `[lo, hi]`.
    pub fn bands_meeting(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<i32> {
        let first = if lo > 0.0 { (lo / PHI_SUPPORT.1).log2().floor() as i32 } else { i32::MIN / 2 };
        let last = if hi > 0.0 { (hi / PHI_SUPPORT.0).log2().ceil() as i32 } else { i32::MIN / 2 };
        let first = if lo > 0.0 {
            (first..=last).find(|&j| 2f64.powi(j) * PHI_SUPPORT.1 > lo).unwrap_or(last + 1)
        } else {
            first
        };
        let last = (first..=last)
            .rev()
            .find(|&j| 2f64.powi(j) * PHI_SUPPORT.0 < hi)
            .unwrap_or(first - 1);
        first..=last
    }

    /// `Σ_j φ(2^{−j}ρ)` over bands whose support contains `ρ`.
    pub fn partition_sum(&self, rho: f64) -> f64 {
        self.bands_meeting(rho, rho).map(|j| self.phi(rho * 2f64.powi(-j))).sum()
    }

    /// Frame bands meeting the spectral support of `f`, clipped to
    /// `[j_min, j_max]`.
    pub fn active_bands(&self, f: &PatchField) -> Vec<i32> {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for (_, p) in f.patches() {
            if let Some((a, b)) = p.support_radii() {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        if !lo.is_finite() {
            return Vec::new();
        }
        // every band at or above j_min lies beyond this radius
        let lo = lo.max(0.5 * 2f64.powi(self.j_min) * PHI_SUPPORT.0);
        let r = self.bands_meeting(lo, hi);
        (r.start().to_owned().max(self.j_min)..=r.end().to_owned().min(self.j_max)).collect()
    }

    /// SHA-256 of the tabulated `χ` profile, identifying the frame in
    /// experiment output.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"exp-smoothstep");
        for i in 0..=4096 {
            let rho = 2.0 * i as f64 / 4096.0;
            h.update(self.chi.eval(rho).to_le_bytes());
        }
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Lattice spacing that resolves band `j`.
fn block_spacing(j: i32) -> f64 {
    2f64.powi(j) / 8.0
}

/// Re-tabulates `p` on a lattice fine enough for band `j`, restricted to the
/// part of its box inside the cube `|ξ|_∞ ≤ reach`.
fn refine_for_band(p: &FourierPatch, j: i32, reach: f64) -> Result<FourierPatch> {
    let h = block_spacing(j);
    if p.spacing() <= h {
        return Ok(p.clone());
    }
    let c = p.center();
    let w = p.half_width();
    let mut center = [0.0; 3];
    let mut half: f64 = 0.0;
    for d in 0..3 {
        let lo = (c[d] - w).max(-reach);
        let hi = (c[d] + w).min(reach);
        // snapped to the absolute lattice so refined patches stay aligned
        center[d] = (0.5 * (lo + hi) / h).round() * h;
        half = half.max(0.5 * (hi - lo));
    }
    let m = (((half + 3.0 * h) / h).ceil() as usize).max(MIN_HALF_POINTS);
    FourierPatch::from_fn(center, h, m, |o| p.evaluate(vec3::add(center, o)))
}

/// Pointwise multiplication of every patch by `symbol(ξ)`, dropping patches
/// outside `[lo, hi]`, leaving patches inside the plateau untouched, and
/// refining lattices too coarse for band `j`.
fn radial_filter(
    f: &PatchField,
    j: i32,
    support: (f64, f64),
    plateau: Option<(f64, f64)>,
    symbol: impl Fn(Vec3) -> f64,
) -> Result<PatchField> {
    let mut components = Vec::with_capacity(f.n_components());
    for comp in f.components() {
        let mut out = Vec::new();
        for p in comp {
            let Some((lo, hi)) = p.support_radii() else { continue };
            if hi <= support.0 || lo >= support.1 {
                continue;
            }
            if let Some((a, b)) = plateau {
                if lo >= a && hi <= b {
                    out.push(p.clone());
                    continue;
                }
            }
            let mut q = refine_for_band(p, j, support.1)?;
            q.map_interior(|xi, v| if v == Complex64::new(0.0, 0.0) { v } else { v * symbol(xi) });
            if !q.is_zero() {
                out.push(q);
            }
        }
        components.push(out);
    }
    Ok(PatchField::from_parts(components, f.conj_symmetric()))
}

/// `Δ_j f = φ(2^{−j}D) f`.
pub fn lp_block(frame: &LpFrame, j: i32, f: &PatchField) -> Result<PatchField> {
    let s = 2f64.powi(j);
    radial_filter(
        f,
        j,
        (s * PHI_SUPPORT.0, s * PHI_SUPPORT.1),
        Some((s * PHI_PLATEAU.0, s * PHI_PLATEAU.1)),
        |xi| frame.phi_j(j, xi),
    )
}

/// `χ(2^{−j}D) f`, equal to `Σ_{k ≤ j−1} Δ_k f`.
pub fn low_pass(frame: &LpFrame, j: i32, f: &PatchField) -> Result<PatchField> {
    let s = 2f64.powi(j);
    radial_filter(f, j, (0.0, s * CHI_OUTER), Some((0.0, s * CHI_INNER)), |xi| frame.chi_j(j, xi))
}

/// Multiplies by `φ(2^{scale}ξ)`; `scale = 4` is the witness localizer.
pub fn low_freq_cutoff(f: &PatchField, scale: i32) -> Result<PatchField> {
    let frame = make_lp_frame(-scale, -scale)?;
    lp_block(&frame, -scale, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patch_field::PatchField;

    fn unit_dirs() -> Vec<Vec3> {
        vec![[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.48, -0.6, 0.64], [-0.36, 0.48, -0.8]]
    }

    #[test]
    fn data_bump_values() {
        let b = make_data_bump();
        assert_eq!(b.eval(0.5), 1.0);
        assert_eq!(b.eval(3.0), 0.0);
        let v: Vec<f64> = unit_dirs().into_iter().map(|d| b.eval_at(vec3::scale(1.5, d))).collect();
        assert!(v[0] > 0.0 && v[0] < 1.0);
        assert!(v.iter().all(|x| (x - v[0]).abs() < 1e-15));
        assert_eq!(b.eval(1.5), 0.5);
    }

    #[test]
    fn cutoff_is_monotone_and_smooth() {
        let c = make_lp_frame(0, 0).unwrap().chi;
        let mut prev = 1.0;
        for i in 0..=2000 {
            let v = c.eval(2.0 * i as f64 / 2000.0);
            assert!(v <= prev && (0.0..=1.0).contains(&v));
            prev = v;
        }
        let coarse = c.derivative_bounds(2000);
        let fine = c.derivative_bounds(4000);
        for k in 0..4 {
            assert!(coarse[k].is_finite() && (fine[k] / coarse[k] - 1.0).abs() < 0.05, "order {}", k + 1);
        }
        assert!(SmoothCutoff::new(2.0, 1.0).is_err());
    }

    #[test]
    fn frame_examples() {
        assert!(make_lp_frame(2, 1).is_err());
        let fr = make_lp_frame(-2, 2).unwrap();
        let s: f64 = (-2..=2).map(|j| fr.phi(2f64.powi(-j))).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert_eq!(fr.phi(0.7), 0.0);
        for &rho in &[0.1, 0.8, 1.0, 2.9, 7.0, 100.0] {
            for j in -3..3 {
                assert_eq!(fr.phi(rho * 2f64.powi(-j)) * fr.phi(rho * 2f64.powi(-j - 2)), 0.0);
            }
        }
        assert_eq!(fr.phi(1.4), 1.0);
    }

    #[test]
    fn bands_meeting_is_tight() {
        let fr = make_lp_frame(-10, 10).unwrap();
        for &rho in &[0.05, 0.75, 1.0, 1.4, 2.0, 2.7, 1024.0] {
            for j in fr.bands_meeting(rho, rho) {
                let lo = 2f64.powi(j) * PHI_SUPPORT.0;
                let hi = 2f64.powi(j) * PHI_SUPPORT.1;
                assert!(lo < rho && rho < hi);
            }
            let n = fr.bands_meeting(rho, rho).count();
            assert!((1..=2).contains(&n));
        }
    }

    fn bump_at(center: Vec3, h: f64) -> PatchField {
        let b = make_data_bump();
        let p = FourierPatch::radial(center, h, 2.0, Complex64::new(1.0, 0.0), |r| b.eval(r)).unwrap();
        PatchField::scalar(vec![p], false).unwrap()
    }

    #[test]
    fn lp_block_drop_keep_and_resum() {
        let fr = make_lp_frame(-6, 8).unwrap();
        // support [43, 47] lies in the band-5 plateau 2^5[4/3, 3/2]
        let f = bump_at([45.0, 0.0, 0.0], 0.25);
        let kept = lp_block(&fr, 5, &f).unwrap();
        assert_eq!(kept, f);
        assert!(lp_block(&fr, 1, &f).unwrap().is_empty());
        // resumming the blocks gives back the field at lattice points
        let g = bump_at([6.0, 0.0, 0.0], 0.25);
        let bands = fr.active_bands(&g);
        let blocks: Vec<PatchField> = bands.iter().map(|&j| lp_block(&fr, j, &g).unwrap()).collect();
        let p = &g.component(0)[0];
        for (i0, i1, i2) in [(8, 8, 8), (3, 9, 8), (10, 5, 12), (14, 8, 2)] {
            let xi = vec3::add(p.center(), p.offset(i0, i1, i2));
            let want = g.evaluate(xi)[0];
            let got: Complex64 = blocks.iter().map(|b| b.evaluate(xi)[0]).sum();
            assert!((got - want).norm() <= 1e-10 * want.norm().max(1e-300) + 1e-15);
        }
    }

    #[test]
    fn low_freq_cutoff_examples() {
        let far = bump_at([1024.0, 0.0, 0.0], 0.125);
        assert!(low_freq_cutoff(&far, 4).unwrap().is_empty());
        // a small patch inside 2^{-4}[4/3, 3/2]
        let b = make_data_bump();
        let c = 0.09;
        let p = FourierPatch::radial([c, 0.0, 0.0], 0.001, 0.002, Complex64::new(1.0, 0.0), |r| b.eval(1000.0 * r)).unwrap();
        let f = PatchField::scalar(vec![p], false).unwrap();
        assert_eq!(low_freq_cutoff(&f, 4).unwrap(), f);
        // twice equals the squared profile once
        let g = bump_at([0.0; 3], 0.125);
        let once = low_freq_cutoff(&g, 4).unwrap();
        let twice = low_freq_cutoff(&once, 4).unwrap();
        let fr = make_lp_frame(-4, -4).unwrap();
        let p = &twice.component(0)[0];
        assert_eq!(p.spacing(), 1.0 / 128.0);
        let s = p.side();
        for i0 in 0..s {
            for i1 in 0..s {
                for i2 in 0..s {
                    let xi = vec3::add(p.center(), p.offset(i0, i1, i2));
                    let boundary = [i0, i1, i2].iter().any(|&i| i == 0 || i == s - 1);
                    let want = if boundary { Complex64::new(0.0, 0.0) } else { g.evaluate(xi)[0] * fr.phi_j(-4, xi).powi(2) };
                    assert!((p.samples()[p.index(i0, i1, i2)] - want).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn fingerprint_is_stable() {
        let a = make_lp_frame(0, 1).unwrap().fingerprint();
        let b = make_lp_frame(-3, 9).unwrap().fingerprint();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
    }
}
