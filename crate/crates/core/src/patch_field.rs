//! Fields as finite sums of compactly supported Fourier patches.
//!
//! A [`FourierPatch`] stores complex spectral samples on a cubic lattice of
//! spacing `h` and half-width `m·h` around an arbitrary center frequency.
//! The transform convention is `f(x) = ∫ e^{ix·ξ} f̂(ξ) dξ`, so a pointwise
//! product in space is the plain convolution of spectra and
//! `‖f‖₂² = (2π)³ ∫ |f̂|²`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Smallest allowed `half_width / spacing`.
pub const MIN_HALF_POINTS: usize = 4;

/// Default frequency spacing of data patches.
pub const DEFAULT_SPACING: f64 = 0.125;

/// Identity of a patch lattice: patches with equal keys add sample-wise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchKey {
    center: [u64; 3],
    spacing: u64,
    m: usize,
}

fn canonical_bits(x: f64) -> u64 {
    (x + 0.0).to_bits()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierPatch {
    center: Vec3,
    spacing: f64,
    m: usize,
    samples: Vec<Complex64>,
}

impl FourierPatch {
    /// Validated constructor; `samples` is row-major over `(2m+1)³` with the
    /// last axis fastest and must vanish on the boundary layer.
    pub fn new(center: Vec3, spacing: f64, m: usize, samples: Vec<Complex64>) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidPatch(format!("spacing {spacing}")));
        }
        if m < MIN_HALF_POINTS {
            return Err(Error::InvalidPatch(format!(
                "half_width/spacing = {m} below {MIN_HALF_POINTS}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPatch("non-finite center".into()));
        }
        let side = 2 * m + 1;
        if samples.len() != side * side * side {
            return Err(Error::InvalidPatch(format!(
                "expected {} samples, got {}",
                side * side * side,
                samples.len()
            )));
        }
        let p = FourierPatch { center, spacing, m, samples };
        if let Some(idx) = p.boundary_indices().find(|&i| p.samples[i] != ZERO) {
            return Err(Error::InvalidPatch(format!(
                "nonzero boundary sample at flat index {idx}"
            )));
        }
        Ok(p)
    }

    /// Samples `f(offset)` at interior lattice points; the boundary layer is
    /// left at zero.
    pub fn from_fn(
        center: Vec3,
        spacing: f64,
        m: usize,
        mut f: impl FnMut(Vec3) -> Complex64,
    ) -> Result<Self> {
        let mut p = FourierPatch::zeros(center, spacing, m)?;
        let side = p.side();
        for i0 in 1..side - 1 {
            for i1 in 1..side - 1 {
                for i2 in 1..side - 1 {
                    let o = p.offset(i0, i1, i2);
                    p.samples[(i0 * side + i1) * side + i2] = f(o);
                }
            }
        }
        Ok(p)
    }

    pub fn zeros(center: Vec3, spacing: f64, m: usize) -> Result<Self> {
        let side = 2 * m + 1;
        FourierPatch::new(center, spacing, m, vec![ZERO; side * side * side])
    }

    /// Radial profile `profile(|offset|)` scaled by `amplitude`, on the
    /// smallest lattice whose boundary lies outside `support_radius`.
    pub fn radial(
        center: Vec3,
        spacing: f64,
        support_radius: f64,
        amplitude: Complex64,
        profile: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let m = ((support_radius / spacing).ceil() as usize).max(MIN_HALF_POINTS);
        FourierPatch::from_fn(center, spacing, m, |o| amplitude * profile(vec3::norm(o)))
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn half_width(&self) -> f64 {
        self.m as f64 * self.spacing
    }

    pub fn side(&self) -> usize {
        2 * self.m + 1
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn key(&self) -> PatchKey {
        PatchKey {
            center: [
                canonical_bits(self.center[0]),
                canonical_bits(self.center[1]),
                canonical_bits(self.center[2]),
            ],
            spacing: canonical_bits(self.spacing),
            m: self.m,
        }
    }

    #[inline]
    pub fn offset(&self, i0: usize, i1: usize, i2: usize) -> Vec3 {
        let m = self.m as f64;
        let h = self.spacing;
        [(i0 as f64 - m) * h, (i1 as f64 - m) * h, (i2 as f64 - m) * h]
    }

    #[inline]
    pub fn index(&self, i0: usize, i1: usize, i2: usize) -> usize {
        let s = self.side();
        (i0 * s + i1) * s + i2
    }

    fn boundary_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let s = self.side();
        (0..s * s * s).filter(move |&i| {
            let i2 = i % s;
            let i1 = (i / s) % s;
            let i0 = i / (s * s);
            i0 == 0 || i1 == 0 || i2 == 0 || i0 == s - 1 || i1 == s - 1 || i2 == s - 1
        })
    }

    /// Rewrites interior samples as `f(frequency, value)`; boundary samples
    /// stay zero.
    pub fn map_interior(&mut self, mut f: impl FnMut(Vec3, Complex64) -> Complex64) {
        let s = self.side();
        let c = self.center;
        for i0 in 1..s - 1 {
            for i1 in 1..s - 1 {
                for i2 in 1..s - 1 {
                    let idx = (i0 * s + i1) * s + i2;
                    let v = self.samples[idx];
                    let xi = vec3::add(c, self.offset(i0, i1, i2));
                    self.samples[idx] = f(xi, v);
                }
            }
        }
    }

    pub fn scaled(&self, alpha: Complex64) -> FourierPatch {
        let mut p = self.clone();
        for v in &mut p.samples {
            *v *= alpha;
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|v| *v == ZERO)
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |a, v| a.max(v.norm()))
    }

    /// The patch of `conj(f̂(−ξ))`.
    pub fn reflected_conj(&self) -> FourierPatch {
        let n = self.samples.len();
        let samples = (0..n).map(|i| self.samples[n - 1 - i].conj()).collect();
        FourierPatch {
            center: vec3::neg(self.center),
            spacing: self.spacing,
            m: self.m,
            samples,
        }
    }

    /// Smallest and largest `|ξ|` over the lattice box.
    pub fn box_radii(&self) -> (f64, f64) {
        let w = self.half_width();
        let mut lo2 = 0.0;
        let mut hi2 = 0.0;
        for &c in &self.center {
            let d = (c.abs() - w).max(0.0);
            lo2 += d * d;
            let e = c.abs() + w;
            hi2 += e * e;
        }
        (lo2.sqrt(), hi2.sqrt())
    }

    /// Smallest and largest `|ξ|` over lattice points carrying nonzero
    /// samples, widened by one cell diagonal to cover trilinear support.
    pub fn support_radii(&self) -> Option<(f64, f64)> {
        let s = self.side();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i0 in 0..s {
            for i1 in 0..s {
                for i2 in 0..s {
                    if self.samples[(i0 * s + i1) * s + i2] != ZERO {
                        let r = vec3::norm(vec3::add(self.center, self.offset(i0, i1, i2)));
                        lo = lo.min(r);
                        hi = hi.max(r);
                    }
                }
            }
        }
        if lo.is_finite() {
            let d = 3f64.sqrt() * self.spacing;
            Some(((lo - d).max(0.0), hi + d))
        } else {
            None
        }
    }

    /// Trilinear interpolation; zero outside the lattice box.
    pub fn evaluate(&self, xi: Vec3) -> Complex64 {
        let s = self.side();
        let top = (s - 1) as f64;
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for d in 0..3 {
            let u = (xi[d] - self.center[d]) / self.spacing + self.m as f64;
            if !(0.0..=top).contains(&u) {
                return ZERO;
            }
            let i = (u.floor() as usize).min(s - 2);
            base[d] = i;
            frac[d] = u - i as f64;
        }
        let mut acc = ZERO;
        for c0 in 0..2 {
            let w0 = if c0 == 0 { 1.0 - frac[0] } else { frac[0] };
            for c1 in 0..2 {
                let w1 = if c1 == 0 { 1.0 - frac[1] } else { frac[1] };
                for c2 in 0..2 {
                    let w2 = if c2 == 0 { 1.0 - frac[2] } else { frac[2] };
                    let w = w0 * w1 * w2;
                    if w != 0.0 {
                        acc += self.samples[self.index(base[0] + c0, base[1] + c1, base[2] + c2)] * w;
                    }
                }
            }
        }
        acc
    }

    /// Re-tabulates the trilinear interpolant on a lattice with the given
    /// spacing and half-point count, keeping the center.
    pub fn resample(&self, spacing: f64, m: usize) -> Result<FourierPatch> {
        let c = self.center;
        FourierPatch::from_fn(c, spacing, m, |o| self.evaluate(vec3::add(c, o)))
    }

    /// `h³ Σ |samples|²`.
    pub fn l2_sq(&self) -> f64 {
        let h3 = self.spacing.powi(3);
        h3 * self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    /// `h³ Σ samples`, the integral of the patch.
    pub fn integral(&self) -> Complex64 {
        let h3 = self.spacing.powi(3);
        self.samples.iter().sum::<Complex64>() * h3
    }

    fn add_assign_same_key(&mut self, other: &FourierPatch) {
        debug_assert_eq!(self.key(), other.key());
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += *b;
        }
    }
}

/// Finite per-component sum of patches.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PatchField {
    components: Vec<Vec<FourierPatch>>,
    conj_symmetric: bool,
}

impl PatchField {
    /// Builds a field; when `conj_symmetric` is claimed the claim is verified
    /// exactly.
    pub fn new(components: Vec<Vec<FourierPatch>>, conj_symmetric: bool) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidPatch("field needs at least one component".into()));
        }
        let f = PatchField { components, conj_symmetric: false };
        if conj_symmetric && !f.is_conj_symmetric(0.0) {
            return Err(Error::InvalidPatch("conjugate symmetry claim fails".into()));
        }
        Ok(PatchField { conj_symmetric, ..f })
    }

    /// Builds a field whose flag is trusted, for results of operations that
    /// preserve symmetry mathematically.
    pub(crate) fn from_parts(components: Vec<Vec<FourierPatch>>, conj_symmetric: bool) -> Self {
        PatchField { components, conj_symmetric }
    }

    pub fn zero(n_components: usize) -> Self {
        PatchField { components: vec![Vec::new(); n_components.max(1)], conj_symmetric: true }
    }

    pub fn scalar(patches: Vec<FourierPatch>, conj_symmetric: bool) -> Result<Self> {
        PatchField::new(vec![patches], conj_symmetric)
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, i: usize) -> &[FourierPatch] {
        &self.components[i]
    }

    pub fn components(&self) -> &[Vec<FourierPatch>] {
        &self.components
    }

    /// Component `i` as a scalar field.
    pub fn component_field(&self, i: usize) -> PatchField {
        PatchField {
            components: vec![self.components[i].clone()],
            conj_symmetric: self.conj_symmetric,
        }
    }

    /// Stacks scalar fields into a vector field.
    pub fn stack(fields: &[PatchField]) -> Result<PatchField> {
        let mut comps = Vec::with_capacity(fields.len());
        let mut sym = true;
        for f in fields {
            if f.n_components() != 1 {
                return Err(Error::ComponentMismatch { left: f.n_components(), right: 1 });
            }
            sym &= f.conj_symmetric;
            comps.push(f.components[0].clone());
        }
        Ok(PatchField { components: comps, conj_symmetric: sym })
    }

    pub fn conj_symmetric(&self) -> bool {
        self.conj_symmetric
    }

    pub fn patch_count(&self) -> usize {
        self.components.iter().map(|c| c.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|p| p.is_zero()))
    }

    pub fn patches(&self) -> impl Iterator<Item = (usize, &FourierPatch)> {
        self.components.iter().enumerate().flat_map(|(i, c)| c.iter().map(move |p| (i, p)))
    }

    /// `α·f`; the symmetry flag survives only for real `α`.
    pub fn scale(&self, alpha: Complex64) -> PatchField {
        PatchField {
            components: self
                .components
                .iter()
                .map(|c| c.iter().map(|p| p.scaled(alpha)).collect())
                .collect(),
            conj_symmetric: self.conj_symmetric && alpha.im == 0.0,
        }
    }

    pub fn evaluate(&self, xi: Vec3) -> Vec<Complex64> {
        self.components
            .iter()
            .map(|c| c.iter().map(|p| p.evaluate(xi)).sum())
            .collect()
    }

    /// Sums patches sharing a lattice key (first-occurrence order) and drops
    /// identically zero patches.
    pub fn merged(&self) -> PatchField {
        let components = self.components.iter().map(|c| merge_patches(c.iter().cloned())).collect();
        PatchField { components, conj_symmetric: self.conj_symmetric }
    }

    /// Applies `f` to every patch, dropping patches that become zero.
    pub fn map_patches(&self, mut f: impl FnMut(usize, &FourierPatch) -> Option<FourierPatch>) -> PatchField {
        let components = self
            .components
            .iter()
            .enumerate()
            .map(|(i, c)| c.iter().filter_map(|p| f(i, p)).filter(|p| !p.is_zero()).collect())
            .collect();
        PatchField { components, conj_symmetric: self.conj_symmetric }
    }

    /// Checks `f̂(−ξ) = conj f̂(ξ)` patch-wise after merging equal keys, with
    /// absolute tolerance `tol·max|sample|` (`tol = 0` is exact).
    pub fn is_conj_symmetric(&self, tol: f64) -> bool {
        for comp in &self.components {
            let merged = merge_patches(comp.iter().cloned());
            let scale = merged.iter().fold(0.0_f64, |a, p| a.max(p.max_abs()));
            let by_key: HashMap<PatchKey, &FourierPatch> = merged.iter().map(|p| (p.key(), p)).collect();
            for p in &merged {
                let r = p.reflected_conj();
                match by_key.get(&r.key()) {
                    Some(q) => {
                        let bad = q
                            .samples
                            .iter()
                            .zip(&r.samples)
                            .any(|(a, b)| (*a - *b).norm() > tol * scale);
                        if bad {
                            return false;
                        }
                    }
                    None => {
                        if r.max_abs() > tol * scale {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Resamples every patch onto `spacing` with the same half-width
    /// (rounded up to whole lattice steps).
    pub fn resampled(&self, spacing: f64) -> Result<PatchField> {
        let mut components = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let mut out = Vec::with_capacity(c.len());
            for p in c {
                if p.spacing == spacing {
                    out.push(p.clone());
                } else {
                    let m = ((p.half_width() / spacing).ceil() as usize).max(MIN_HALF_POINTS);
                    out.push(p.resample(spacing, m)?);
                }
            }
            components.push(out);
        }
        Ok(PatchField { components, conj_symmetric: self.conj_symmetric })
    }
}

fn merge_patches(patches: impl Iterator<Item = FourierPatch>) -> Vec<FourierPatch> {
    let mut order: Vec<PatchKey> = Vec::new();
    let mut acc: HashMap<PatchKey, FourierPatch> = HashMap::new();
    for p in patches {
        let k = p.key();
        match acc.get_mut(&k) {
            Some(q) => q.add_assign_same_key(&p),
            None => {
                order.push(k);
                acc.insert(k, p);
            }
        }
    }
    order
        .into_iter()
        .filter_map(|k| acc.remove(&k))
        .filter(|p| !p.is_zero())
        .collect()
}

/// `f + g`: patch lists concatenated per component.
pub fn add(f: &PatchField, g: &PatchField) -> Result<PatchField> {
    if f.n_components() != g.n_components() {
        return Err(Error::ComponentMismatch { left: f.n_components(), right: g.n_components() });
    }
    let components = f
        .components
        .iter()
        .zip(&g.components)
        .map(|(a, b)| a.iter().chain(b.iter()).cloned().collect())
        .collect();
    Ok(PatchField { components, conj_symmetric: f.conj_symmetric && g.conj_symmetric })
}

/// Sum of many fields with equal component counts.
pub fn sum(fields: &[PatchField]) -> Result<PatchField> {
    let first = fields.first().ok_or_else(|| Error::InvalidParameter("empty sum".into()))?;
    let mut acc = first.clone();
    for f in &fields[1..] {
        acc = add(&acc, f)?;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// FFT convolution

struct Fft3Cache {
    planner: FftPlanner<f64>,
    plans: HashMap<(usize, bool), Arc<dyn Fft<f64>>>,
}

impl Fft3Cache {
    fn new() -> Self {
        Fft3Cache { planner: FftPlanner::new(), plans: HashMap::new() }
    }

    fn plan(&mut self, n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
        let planner = &mut self.planner;
        self.plans
            .entry((n, inverse))
            .or_insert_with(|| {
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    }

    fn transform(&mut self, data: &mut [Complex64], n: usize, inverse: bool) {
        let fft = self.plan(n, inverse);
        let mut scratch = vec![ZERO; fft.get_inplace_scratch_len()];
        // last axis: contiguous rows
        fft.process_with_scratch(data, &mut scratch);
        let mut line = vec![ZERO; n];
        // middle axis
        for i0 in 0..n {
            for i2 in 0..n {
                for i1 in 0..n {
                    line[i1] = data[(i0 * n + i1) * n + i2];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for i1 in 0..n {
                    data[(i0 * n + i1) * n + i2] = line[i1];
                }
            }
        }
        // first axis
        for i1 in 0..n {
            for i2 in 0..n {
                for i0 in 0..n {
                    line[i0] = data[(i0 * n + i1) * n + i2];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for i0 in 0..n {
                    data[(i0 * n + i1) * n + i2] = line[i0];
                }
            }
        }
    }

    /// Zero-padded forward transform of a patch onto an `n³` cube.
    fn forward_padded(&mut self, p: &FourierPatch, n: usize) -> Vec<Complex64> {
        let s = p.side();
        let mut buf = vec![ZERO; n * n * n];
        for i0 in 0..s {
            for i1 in 0..s {
                let src = (i0 * s + i1) * s;
                let dst = (i0 * n + i1) * n;
                buf[dst..dst + s].copy_from_slice(&p.samples[src..src + s]);
            }
        }
        self.transform(&mut buf, n, false);
        buf
    }
}

/// Pointwise product of a scalar field with a field of any component count.
pub fn multiply(f: &PatchField, g: &PatchField) -> Result<PatchField> {
    if f.n_components() != 1 {
        return Err(Error::ComponentMismatch { left: f.n_components(), right: 1 });
    }
    let mut comps = Vec::with_capacity(g.n_components());
    for i in 0..g.n_components() {
        let gi = g.component_field(i);
        comps.push(multiply_sum(&[(f, &gi)])?.components.remove(0));
    }
    Ok(PatchField {
        components: comps,
        conj_symmetric: f.conj_symmetric && g.conj_symmetric,
    })
}

/// `Σ_i f_i g_i` for scalar fields.
///
/// Every patch pair `(p, q)` contributes a patch at `c_p + c_q` with
/// half-width `w_p + w_q` whose samples are `h³·(p ∗ q)`; contributions with
/// equal lattice keys are accumulated in the transformed domain so each
/// output lattice costs one inverse transform. Each input patch is
/// transformed once per output size.
pub fn multiply_sum(terms: &[(&PatchField, &PatchField)]) -> Result<PatchField> {
    let mut spacing: Option<f64> = None;
    for (f, g) in terms {
        for fld in [f, g] {
            if fld.n_components() != 1 {
                return Err(Error::ComponentMismatch { left: fld.n_components(), right: 1 });
            }
            for p in fld.component(0) {
                match spacing {
                    None => spacing = Some(p.spacing),
                    Some(h) if h != p.spacing => return Err(Error::IncompatibleSpacing(h, p.spacing)),
                    _ => {}
                }
            }
        }
    }
    let sym = terms.iter().all(|(f, g)| f.conj_symmetric && g.conj_symmetric);
    let Some(h) = spacing else {
        return Ok(PatchField::from_parts(vec![Vec::new()], sym));
    };

    let mut cache = Fft3Cache::new();
    let mut transformed: HashMap<(usize, usize), Vec<Complex64>> = HashMap::new();
    let mut order: Vec<(PatchKey, Vec3, usize)> = Vec::new();
    let mut acc: HashMap<PatchKey, Vec<Complex64>> = HashMap::new();

    for (f, g) in terms {
        for p in f.component(0) {
            if p.is_zero() {
                continue;
            }
            for q in g.component(0) {
                if q.is_zero() {
                    continue;
                }
                let m = p.m + q.m;
                let n = 2 * m + 1;
                let center = vec3::add(p.center, q.center);
                let key = FourierPatch { center, spacing: h, m, samples: Vec::new() }.key();
                for r in [p, q] {
                    let id = (r as *const FourierPatch as usize, n);
                    if !transformed.contains_key(&id) {
                        let t = cache.forward_padded(r, n);
                        transformed.insert(id, t);
                    }
                }
                let tp = &transformed[&(p as *const FourierPatch as usize, n)];
                let tq = &transformed[&(q as *const FourierPatch as usize, n)];
                let slot = acc.entry(key).or_insert_with(|| {
                    order.push((key, center, m));
                    vec![ZERO; n * n * n]
                });
                for ((s, a), b) in slot.iter_mut().zip(tp).zip(tq) {
                    *s += a * b;
                }
            }
        }
    }

    let h3 = h.powi(3);
    let mut out = Vec::with_capacity(order.len());
    for (key, center, m) in order {
        let mut buf = acc.remove(&key).expect("accumulated key");
        let n = 2 * m + 1;
        cache.transform(&mut buf, n, true);
        let scale = h3 / (n * n * n) as f64;
        for v in &mut buf {
            *v *= scale;
        }
        let mut p = FourierPatch { center, spacing: h, m, samples: buf };
        let idx: Vec<usize> = p.boundary_indices().collect();
        for i in idx {
            p.samples[i] = ZERO;
        }
        if !p.is_zero() {
            out.push(p);
        }
    }
    Ok(PatchField::from_parts(vec![out], sym))
}

/// `Σ_i f_i g_i` over the components of two vector fields.
pub fn dot(f: &PatchField, g: &PatchField) -> Result<PatchField> {
    if f.n_components() != g.n_components() {
        return Err(Error::ComponentMismatch { left: f.n_components(), right: g.n_components() });
    }
    let fs: Vec<PatchField> = (0..f.n_components()).map(|i| f.component_field(i)).collect();
    let gs: Vec<PatchField> = (0..g.n_components()).map(|i| g.component_field(i)).collect();
    let terms: Vec<(&PatchField, &PatchField)> = fs.iter().zip(&gs).collect();
    multiply_sum(&terms)
}

// ---------------------------------------------------------------------------
// Multipliers

pub type ScalarSymbol = Arc<dyn Fn(Vec3) -> Complex64 + Send + Sync>;
/// Fills a row-major `rows × cols` buffer with the symbol at `ξ`.
pub type MatrixSymbol = Arc<dyn Fn(Vec3, &mut [Complex64]) + Send + Sync>;

#[derive(Clone)]
pub enum Symbol {
    Scalar(ScalarSymbol),
    Matrix { rows: usize, cols: usize, f: MatrixSymbol },
}

/// Radius of the ball around the origin avoided by singular symbols.
pub const ORIGIN_EXCLUSION: f64 = 1.0 / 1048576.0;

#[derive(Clone)]
pub struct Multiplier {
    pub symbol: Symbol,
    pub homogeneity: Option<f64>,
    pub exclusion_radius: Option<f64>,
    /// `symbol(−ξ) = conj(symbol(ξ))`, which preserves real fields.
    pub hermitian: bool,
}

impl std::fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let shape = match &self.symbol {
            Symbol::Scalar(_) => "scalar".to_string(),
            Symbol::Matrix { rows, cols, .. } => format!("{rows}x{cols}"),
        };
        f.debug_struct("Multiplier")
            .field("shape", &shape)
            .field("homogeneity", &self.homogeneity)
            .field("exclusion_radius", &self.exclusion_radius)
            .field("hermitian", &self.hermitian)
            .finish()
    }
}

impl Multiplier {
    pub fn scalar(f: impl Fn(Vec3) -> Complex64 + Send + Sync + 'static, hermitian: bool) -> Self {
        Multiplier { symbol: Symbol::Scalar(Arc::new(f)), homogeneity: None, exclusion_radius: None, hermitian }
    }

    pub fn matrix(
        rows: usize,
        cols: usize,
        f: impl Fn(Vec3, &mut [Complex64]) + Send + Sync + 'static,
        hermitian: bool,
    ) -> Self {
        Multiplier {
            symbol: Symbol::Matrix { rows, cols, f: Arc::new(f) },
            homogeneity: None,
            exclusion_radius: None,
            hermitian,
        }
    }

    pub fn with_homogeneity(mut self, degree: f64) -> Self {
        self.homogeneity = Some(degree);
        self
    }

    pub fn singular_at_origin(mut self) -> Self {
        self.exclusion_radius = Some(ORIGIN_EXCLUSION);
        self
    }

    /// `Λ^s`, symbol `|ξ|^s`.
    pub fn lambda_power(s: f64) -> Self {
        let m = Multiplier::scalar(move |xi| Complex64::new(vec3::norm(xi).powf(s), 0.0), true)
            .with_homogeneity(s);
        if s < 0.0 {
            m.singular_at_origin()
        } else {
            m
        }
    }

    /// `∂_j`, symbol `iξ_j`.
    pub fn partial(j: usize) -> Self {
        Multiplier::scalar(move |xi| Complex64::new(0.0, xi[j]), true).with_homogeneity(1.0)
    }

    /// Scalar to vector gradient, symbol `iξ`.
    pub fn gradient() -> Self {
        Multiplier::matrix(
            3,
            1,
            |xi, out| {
                for d in 0..3 {
                    out[d] = Complex64::new(0.0, xi[d]);
                }
            },
            true,
        )
        .with_homogeneity(1.0)
    }

    /// Vector to scalar divergence, symbol `iξᵀ`.
    pub fn divergence() -> Self {
        Multiplier::matrix(
            1,
            3,
            |xi, out| {
                for d in 0..3 {
                    out[d] = Complex64::new(0.0, xi[d]);
                }
            },
            true,
        )
        .with_homogeneity(1.0)
    }

    /// Vector curl, symbol `iξ×`.
    pub fn curl() -> Self {
        Multiplier::matrix(
            3,
            3,
            |xi, out| {
                let i = |v: f64| Complex64::new(0.0, v);
                out.copy_from_slice(&[
                    ZERO,
                    i(-xi[2]),
                    i(xi[1]),
                    i(xi[2]),
                    ZERO,
                    i(-xi[0]),
                    i(-xi[1]),
                    i(xi[0]),
                    ZERO,
                ]);
            },
            true,
        )
        .with_homogeneity(1.0)
    }

    /// Composition `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Multiplier) -> Result<Multiplier> {
        let (r1, c1) = self.shape();
        let (r2, c2) = other.shape();
        if c1 != r2 {
            return Err(Error::ComponentMismatch { left: c1, right: r2 });
        }
        let a = self.clone();
        let b = other.clone();
        let excl = match (self.exclusion_radius, other.exclusion_radius) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        };
        let hom = match (self.homogeneity, other.homogeneity) {
            (Some(x), Some(y)) => Some(x + y),
            _ => None,
        };
        let mut m = Multiplier::matrix(
            r1,
            c2,
            move |xi, out| {
                let ma = a.matrix_at(xi);
                let mb = b.matrix_at(xi);
                for i in 0..r1 {
                    for j in 0..c2 {
                        let mut s = ZERO;
                        for k in 0..c1 {
                            s += ma[i * c1 + k] * mb[k * c2 + j];
                        }
                        out[i * c2 + j] = s;
                    }
                }
            },
            self.hermitian && other.hermitian,
        );
        m.exclusion_radius = excl;
        m.homogeneity = hom;
        Ok(m)
    }

    /// `(rows, cols)`; scalar symbols act diagonally and report `(0, 0)`.
    pub fn shape(&self) -> (usize, usize) {
        match &self.symbol {
            Symbol::Scalar(_) => (0, 0),
            Symbol::Matrix { rows, cols, .. } => (*rows, *cols),
        }
    }

    /// Row-major symbol matrix at `ξ` (a 1×1 matrix for scalar symbols).
    pub fn matrix_at(&self, xi: Vec3) -> Vec<Complex64> {
        match &self.symbol {
            Symbol::Scalar(f) => vec![f(xi)],
            Symbol::Matrix { rows, cols, f } => {
                let mut out = vec![ZERO; rows * cols];
                f(xi, &mut out);
                out
            }
        }
    }

    fn check_support(&self, p: &FourierPatch) -> Result<()> {
        let Some(r) = self.exclusion_radius else {
            return Ok(());
        };
        let reach = r + 3f64.sqrt() * p.spacing;
        if p.box_radii().0 >= reach {
            return Ok(());
        }
        let s = p.side();
        for i0 in 0..s {
            for i1 in 0..s {
                for i2 in 0..s {
                    let xi = vec3::add(p.center, p.offset(i0, i1, i2));
                    if vec3::norm(xi) < reach && p.samples[p.index(i0, i1, i2)] != ZERO {
                        return Err(Error::SupportTouchesSingularity { center: p.center, radius: r });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Multiplies samples by the symbol at `center + offset`.
pub fn apply_multiplier(mult: &Multiplier, f: &PatchField) -> Result<PatchField> {
    for (_, p) in f.patches() {
        mult.check_support(p)?;
    }
    let sym = f.conj_symmetric && mult.hermitian;
    match &mult.symbol {
        Symbol::Scalar(s) => {
            let out = f.map_patches(|_, p| {
                let mut q = p.clone();
                q.map_interior(|xi, v| if v == ZERO { ZERO } else { v * s(xi) });
                Some(q)
            });
            Ok(PatchField { conj_symmetric: sym, ..out })
        }
        Symbol::Matrix { rows, cols, f: sf } => {
            if *cols != f.n_components() {
                return Err(Error::ComponentMismatch { left: *cols, right: f.n_components() });
            }
            let mut out: Vec<Vec<FourierPatch>> = vec![Vec::new(); *rows];
            let mut buf = vec![ZERO; rows * cols];
            for (c, p) in f.patches() {
                let mut outs: Vec<FourierPatch> = (0..*rows)
                    .map(|_| FourierPatch { samples: vec![ZERO; p.samples.len()], ..p.clone() })
                    .collect();
                let s = p.side();
                for i0 in 1..s - 1 {
                    for i1 in 1..s - 1 {
                        for i2 in 1..s - 1 {
                            let idx = (i0 * s + i1) * s + i2;
                            let v = p.samples[idx];
                            if v == ZERO {
                                continue;
                            }
                            sf(vec3::add(p.center, p.offset(i0, i1, i2)), &mut buf);
                            for (r, o) in outs.iter_mut().enumerate() {
                                o.samples[idx] = buf[r * cols + c] * v;
                            }
                        }
                    }
                }
                for (r, o) in outs.into_iter().enumerate() {
                    if !o.is_zero() {
                        out[r].push(o);
                    }
                }
            }
            let merged = out.into_iter().map(|c| merge_patches(c.into_iter())).collect();
            Ok(PatchField { components: merged, conj_symmetric: sym })
        }
    }
}

// ---------------------------------------------------------------------------
// Plancherel

/// `‖f‖_{L²} = ((2π)³ ∫ |f̂|²)^{1/2}`, summed over components.
///
/// Overlapping patches are merged onto a union lattice per connected
/// support cluster before squaring, so overlaps are counted exactly.
pub fn plancherel_norm(f: &PatchField) -> f64 {
    let mut total = 0.0;
    for comp in &f.components {
        total += spectral_l2_sq(comp);
    }
    ((2.0 * PI).powi(3) * total).sqrt()
}

/// `∫ |Σ patches|²` for one component.
pub(crate) fn spectral_l2_sq(patches: &[FourierPatch]) -> f64 {
    let merged = merge_patches(patches.iter().cloned());
    let n = merged.len();
    if n == 0 {
        return 0.0;
    }
    // connected components of the box-overlap graph
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut j = i;
        while parent[j] != r {
            let next = parent[j];
            parent[j] = r;
            j = next;
        }
        r
    }
    for i in 0..n {
        for j in i + 1..n {
            if boxes_overlap(&merged[i], &merged[j]) {
                let a = find(&mut parent, i);
                let b = find(&mut parent, j);
                if a != b {
                    parent[b] = a;
                }
            }
        }
    }
    let mut clusters: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut roots = Vec::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        clusters.entry(r).or_insert_with(|| {
            roots.push(r);
            Vec::new()
        });
        clusters.get_mut(&r).expect("cluster").push(i);
    }
    let mut total = 0.0;
    for r in roots {
        let members: Vec<&FourierPatch> = clusters[&r].iter().map(|&i| &merged[i]).collect();
        total += cluster_l2_sq(&members);
    }
    total
}

fn boxes_overlap(a: &FourierPatch, b: &FourierPatch) -> bool {
    let w = a.half_width() + b.half_width();
    (0..3).all(|d| (a.center[d] - b.center[d]).abs() < w)
}

fn cluster_l2_sq(members: &[&FourierPatch]) -> f64 {
    if members.len() == 1 {
        return members[0].l2_sq();
    }
    let h = members.iter().map(|p| p.spacing).fold(f64::INFINITY, f64::min);
    let origin = members[0].center;
    let aligned = members.iter().all(|p| {
        let ratio = p.spacing / h;
        (ratio - ratio.round()).abs() < 1e-12
            && (0..3).all(|d| {
                let u = (p.center[d] - origin[d]) / h;
                (u - u.round()).abs() < 1e-9
            })
    });
    // union box in lattice units relative to `origin`
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for p in members {
        for d in 0..3 {
            let c = ((p.center[d] - origin[d]) / h).round() as i64;
            let w = (p.half_width() / h).round() as i64;
            lo[d] = lo[d].min(c - w);
            hi[d] = hi[d].max(c + w);
        }
    }
    let dims = [(hi[0] - lo[0] + 1) as usize, (hi[1] - lo[1] + 1) as usize, (hi[2] - lo[2] + 1) as usize];
    let mut grid = vec![ZERO; dims[0] * dims[1] * dims[2]];
    if aligned {
        for p in members {
            let step = (p.spacing / h).round() as i64;
            if step != 1 {
                // coarser member: interpolate onto the fine union lattice
                fill_by_evaluation(&mut grid, dims, lo, origin, h, p);
                continue;
            }
            let c: Vec<i64> = (0..3).map(|d| ((p.center[d] - origin[d]) / h).round() as i64).collect();
            let s = p.side();
            let m = p.m as i64;
            for i0 in 0..s {
                let g0 = (c[0] - m + i0 as i64 - lo[0]) as usize;
                for i1 in 0..s {
                    let g1 = (c[1] - m + i1 as i64 - lo[1]) as usize;
                    for i2 in 0..s {
                        let g2 = (c[2] - m + i2 as i64 - lo[2]) as usize;
                        grid[(g0 * dims[1] + g1) * dims[2] + g2] += p.samples[(i0 * s + i1) * s + i2];
                    }
                }
            }
        }
    } else {
        for p in members {
            fill_by_evaluation(&mut grid, dims, lo, origin, h, p);
        }
    }
    h.powi(3) * grid.iter().map(|v| v.norm_sqr()).sum::<f64>()
}

fn fill_by_evaluation(grid: &mut [Complex64], dims: [usize; 3], lo: [i64; 3], origin: Vec3, h: f64, p: &FourierPatch) {
    for g0 in 0..dims[0] {
        for g1 in 0..dims[1] {
            for g2 in 0..dims[2] {
                let xi = [
                    origin[0] + (lo[0] + g0 as i64) as f64 * h,
                    origin[1] + (lo[1] + g1 as i64) as f64 * h,
                    origin[2] + (lo[2] + g2 as i64) as f64 * h,
                ];
                grid[(g0 * dims[1] + g1) * dims[2] + g2] += p.evaluate(xi);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Physical-space synthesis

/// Box and resolution used to synthesize one patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisGrid {
    pub half_width: f64,
    pub points: usize,
}

impl SynthesisGrid {
    /// Default box `L = 16·(2/W)` capped at the lattice period `π/h`, and
    /// the smallest odd point count meeting `Δx ≤ π/(2W)`.
    pub fn for_patch(p: &FourierPatch) -> SynthesisGrid {
        SynthesisGrid::scaled(p, 32.0)
    }

    /// Box `L = l_factor / W` capped at `π/h`.
    pub fn scaled(p: &FourierPatch, l_factor: f64) -> SynthesisGrid {
        let w = p.half_width();
        let l = (l_factor / w).min(PI / p.spacing);
        SynthesisGrid { half_width: l, points: min_points(l, w) }
    }
}

impl SynthesisGrid {
    /// Grid for `‖g‖_{L^r}`: `|g|^r` has per-axis bandwidth `rW`, so the
    /// spacing is `Δx ≤ 2π/(max(r, 4)·W)` with `r = ∞` treated as 8, and the
    /// box for `r = ∞` is widened by half since maxima decay slowest.
    pub fn for_exponent(p: &FourierPatch, r: f64, l_factor: f64) -> SynthesisGrid {
        let w = p.half_width();
        let l_factor = if r.is_infinite() { 1.5 * l_factor } else { l_factor };
        let l = (l_factor / w).min(PI / p.spacing);
        let eff = if r.is_infinite() { 8.0 } else { r.max(4.0) };
        SynthesisGrid { half_width: l, points: min_points(l, eff * w / 4.0) }
    }
}

/// Smallest odd point count with `2L/(n−1) ≤ π/(2W)`.
pub fn min_points(l: f64, w: f64) -> usize {
    let n = (4.0 * l * w / PI - 1e-9).ceil() as usize + 1;
    let n = n.max(3);
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// Demodulated physical profile of one patch on `[−L, L]³`.
#[derive(Clone, Debug)]
pub struct SynthesizedPatch {
    pub component: usize,
    pub center: Vec3,
    pub half_width: f64,
    pub points: usize,
    /// `g(x) = ∫ e^{ix·η} f̂(center + η) dη`, row-major over the grid.
    pub values: Vec<Complex64>,
}

impl SynthesizedPatch {
    pub fn coordinate(&self, a: usize) -> f64 {
        -self.half_width + 2.0 * self.half_width * a as f64 / (self.points - 1) as f64
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }
}

/// Synthesizes every patch; the true field is `Σ e^{i·center·x} g(x)`.
pub fn synthesize(f: &PatchField, half_width: f64, points: usize) -> Result<Vec<SynthesizedPatch>> {
    let mut out = Vec::with_capacity(f.patch_count());
    for (c, p) in f.patches() {
        out.push(SynthesizedPatch {
            component: c,
            center: p.center,
            half_width,
            points,
            values: synthesize_patch(p, half_width, points)?,
        });
    }
    Ok(out)
}

/// `g(x_a) = h³ Σ_o e^{ix_a·o} s(o)` on the `points³` grid of `[−L, L]³`,
/// computed by three separable one-dimensional sums.
pub fn synthesize_patch(p: &FourierPatch, half_width: f64, points: usize) -> Result<Vec<Complex64>> {
    if points < 2 || !(half_width > 0.0) {
        return Err(Error::InvalidParameter(format!("synthesis grid L = {half_width}, n = {points}")));
    }
    let dx = 2.0 * half_width / (points - 1) as f64;
    let limit = PI / (2.0 * p.half_width());
    if dx > limit * (1.0 + 1e-12) {
        return Err(Error::Undersampled { dx, limit });
    }
    if half_width > PI / p.spacing * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "box half-width {half_width} exceeds the lattice period bound {}",
            PI / p.spacing
        )));
    }
    let s = p.side();
    let n = points;
    let xs: Vec<f64> = (0..n).map(|a| -half_width + dx * a as f64).collect();
    let mut e = vec![ZERO; n * s];
    for a in 0..n {
        for i in 0..s {
            let o = (i as f64 - p.m as f64) * p.spacing;
            e[a * s + i] = Complex64::from_polar(1.0, xs[a] * o);
        }
    }
    // t1[i0][i1][a2]
    let mut t1 = vec![ZERO; s * s * n];
    for i0 in 0..s {
        for i1 in 0..s {
            let row = &p.samples[(i0 * s + i1) * s..(i0 * s + i1 + 1) * s];
            if row.iter().all(|v| *v == ZERO) {
                continue;
            }
            let dst = &mut t1[(i0 * s + i1) * n..(i0 * s + i1 + 1) * n];
            for a2 in 0..n {
                let er = &e[a2 * s..(a2 + 1) * s];
                let mut acc = ZERO;
                for (v, w) in row.iter().zip(er) {
                    acc += v * w;
                }
                dst[a2] = acc;
            }
        }
    }
    // t2[i0][a1][a2]
    let mut t2 = vec![ZERO; s * n * n];
    for i0 in 0..s {
        for i1 in 0..s {
            let src = &t1[(i0 * s + i1) * n..(i0 * s + i1 + 1) * n];
            if src.iter().all(|v| *v == ZERO) {
                continue;
            }
            for a1 in 0..n {
                let w = e[a1 * s + i1];
                let dst = &mut t2[(i0 * n + a1) * n..(i0 * n + a1 + 1) * n];
                for (d, v) in dst.iter_mut().zip(src) {
                    *d += w * v;
                }
            }
        }
    }
    // g[a0][a1][a2]
    let h3 = p.spacing.powi(3);
    let mut g = vec![ZERO; n * n * n];
    for a0 in 0..n {
        let dst = &mut g[a0 * n * n..(a0 + 1) * n * n];
        for i0 in 0..s {
            let w = e[a0 * s + i0] * h3;
            let src = &t2[i0 * n * n..(i0 + 1) * n * n];
            for (d, v) in dst.iter_mut().zip(src) {
                *d += w * v;
            }
        }
    }
    Ok(g)
}

/// An `L^r` norm with the relative outer-shell mass that certifies the box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrNorm {
    pub value: f64,
    /// Shell mass of `|g|^r` over total mass (ratio of maxima for `r = ∞`).
    pub tail: f64,
}

/// Trapezoid weight of grid index `a` (half weight on the two ends).
#[inline]
fn trap(a: usize, n: usize) -> f64 {
    if a == 0 || a == n - 1 {
        0.5
    } else {
        1.0
    }
}

/// `L^r` norm of a demodulated magnitude cube `|g|` by trapezoid
/// quadrature (`r = ∞` is the grid maximum).
pub fn lr_norm_of_magnitudes(mag: &[f64], points: usize, dx: f64, r: f64, tail_tol: f64) -> Result<LrNorm> {
    let n = points;
    let mut total = 0.0;
    let mut shell = 0.0;
    for a0 in 0..n {
        let w0 = trap(a0, n);
        for a1 in 0..n {
            let w01 = w0 * trap(a1, n);
            for a2 in 0..n {
                let v = mag[(a0 * n + a1) * n + a2];
                let on_shell = a0 == 0 || a1 == 0 || a2 == 0 || a0 == n - 1 || a1 == n - 1 || a2 == n - 1;
                if r.is_infinite() {
                    total = f64::max(total, v);
                    if on_shell {
                        shell = f64::max(shell, v);
                    }
                } else {
                    let c = w01 * trap(a2, n) * v.powf(r);
                    total += c;
                    if on_shell {
                        shell += c;
                    }
                }
            }
        }
    }
    let (value, tail) = if r.is_infinite() {
        (total, if total > 0.0 { shell / total } else { 0.0 })
    } else {
        let vol = dx.powi(3);
        ((total * vol).powf(1.0 / r), if total > 0.0 { shell / total } else { 0.0 })
    };
    if tail > tail_tol {
        return Err(Error::TailBudgetExceeded { tail, budget: tail_tol });
    }
    Ok(LrNorm { value, tail })
}

/// `L^r` norm of the demodulated profile of one patch.
pub fn patch_lr_norm(p: &FourierPatch, r: f64, half_width: f64, points: usize, tail_tol: f64) -> Result<LrNorm> {
    if !(r >= 1.0) {
        return Err(Error::InvalidParameter(format!("r = {r}")));
    }
    let g = synthesize_patch(p, half_width, points)?;
    let mag: Vec<f64> = g.iter().map(|v| v.norm()).collect();
    let dx = 2.0 * half_width / (points - 1) as f64;
    if covers_period(half_width, p.spacing) {
        // the box is a full period of the lattice sum: nothing lies outside
        let n = lr_norm_of_magnitudes(&mag, points, dx, r, f64::INFINITY)?;
        return Ok(LrNorm { value: n.value, tail: 0.0 });
    }
    lr_norm_of_magnitudes(&mag, points, dx, r, tail_tol)
}

/// Values of the modulated field `Σ e^{i·c·x} g(x)` on the `points³` grid of
/// `[−L, L]³`, one cube per component, plus the cube of `Σ |g|` used to
/// bound the field outside the box.
pub fn field_grid_values(f: &PatchField, half_width: f64, points: usize) -> Result<(Vec<Vec<Complex64>>, Vec<f64>)> {
    let n = points;
    let dx = 2.0 * half_width / (n - 1) as f64;
    let mut out = vec![vec![ZERO; n * n * n]; f.n_components()];
    let mut envelope = vec![0.0; n * n * n];
    for (c, p) in f.patches() {
        let g = synthesize_patch(p, half_width, n)?;
        let phase: Vec<[Complex64; 3]> = (0..n)
            .map(|a| {
                let x = -half_width + dx * a as f64;
                [
                    Complex64::from_polar(1.0, p.center[0] * x),
                    Complex64::from_polar(1.0, p.center[1] * x),
                    Complex64::from_polar(1.0, p.center[2] * x),
                ]
            })
            .collect();
        for a0 in 0..n {
            for a1 in 0..n {
                let e01 = phase[a0][0] * phase[a1][1];
                for a2 in 0..n {
                    let idx = (a0 * n + a1) * n + a2;
                    out[c][idx] += g[idx] * e01 * phase[a2][2];
                    envelope[idx] += g[idx].norm();
                }
            }
        }
    }
    Ok((out, envelope))
}

fn covers_period(half_width: f64, spacing: f64) -> bool {
    half_width >= PI / spacing * (1.0 - 1e-12)
}

/// `f(x) = h³ Σ_k f̂(ξ_k) e^{i x·ξ_k}` per component, summed directly.
pub fn physical_value(f: &PatchField, x: Vec3) -> Vec<Complex64> {
    let mut out = vec![ZERO; f.n_components()];
    for (c, p) in f.patches() {
        let s = p.side();
        let axes: Vec<Vec<Complex64>> = (0..3)
            .map(|d| {
                (0..s)
                    .map(|i| Complex64::from_polar(1.0, x[d] * (p.center[d] + (i as f64 - p.m as f64) * p.spacing)))
                    .collect()
            })
            .collect();
        let mut acc = ZERO;
        for i0 in 0..s {
            for i1 in 0..s {
                let e01 = axes[0][i0] * axes[1][i1];
                let row = &p.samples[(i0 * s + i1) * s..(i0 * s + i1 + 1) * s];
                let mut inner = ZERO;
                for (v, e) in row.iter().zip(&axes[2]) {
                    inner += v * e;
                }
                acc += e01 * inner;
            }
        }
        out[c] += acc * p.spacing.powi(3);
    }
    out
}

fn euclid(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Estimate of `sup_x |f(x)|` (Euclidean norm over components): grid maxima
/// on `[−L, L]³` with `L = min(48/W_min, π/h_min)` and four points per
/// shortest wavelength, polished by compass search on the exact sum. The
/// tail is the largest envelope value `Σ_p |g_p|` on the outer shell over
/// the maximum, and zero when the box is a full lattice period.
pub fn sup_norm(f: &PatchField) -> Result<LrNorm> {
    let mut w_min = f64::INFINITY;
    let mut h_min = f64::INFINITY;
    let mut reach: f64 = 0.0;
    for (_, p) in f.patches() {
        w_min = w_min.min(p.half_width());
        h_min = h_min.min(p.spacing);
        reach = reach.max(vec3::norm_inf(p.center) + p.half_width());
    }
    if !w_min.is_finite() {
        return Ok(LrNorm { value: 0.0, tail: 0.0 });
    }
    let l = (48.0 / w_min).min(PI / h_min);
    let n = min_points(l, reach);
    let dx = 2.0 * l / (n - 1) as f64;
    let (vals, envelope) = field_grid_values(f, l, n)?;
    let mut shell: f64 = 0.0;
    let mut grid_max: Vec<(f64, usize)> = Vec::with_capacity(n * n * n);
    for idx in 0..n * n * n {
        let v = vals.iter().map(|c| c[idx].norm_sqr()).sum::<f64>().sqrt();
        grid_max.push((v, idx));
        let a2 = idx % n;
        let a1 = (idx / n) % n;
        let a0 = idx / (n * n);
        if [a0, a1, a2].iter().any(|&a| a == 0 || a == n - 1) {
            shell = shell.max(envelope[idx]);
        }
    }
    grid_max.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = grid_max.first().map_or(0.0, |g| g.0);
    for &(_, idx) in grid_max.iter().take(8) {
        let coord = |a: usize| -l + dx * a as f64;
        let mut x = [coord(idx / (n * n)), coord((idx / n) % n), coord(idx % n)];
        let mut fx = euclid(&physical_value(f, x));
        let mut step = 0.5 * dx;
        while step > 1e-4 * dx {
            let mut moved = false;
            for d in 0..3 {
                for sgn in [-1.0, 1.0] {
                    let mut y = x;
                    y[d] += sgn * step;
                    let fy = euclid(&physical_value(f, y));
                    if fy > fx {
                        x = y;
                        fx = fy;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best = best.max(fx);
    }
    let tail = if covers_period(l, h_min) || best == 0.0 { 0.0 } else { shell / best };
    Ok(LrNorm { value: best, tail })
}

// ---------------------------------------------------------------------------
// Binary dump

const MAGIC: &[u8; 4] = b"PFLD";
const FORMAT_VERSION: u32 = 1;

/// Writes `f` as: magic, version, component count, symmetry flag, then per
/// component a patch count and per patch center, half-width, spacing and
/// row-major `(re, im)` samples; all little-endian.
pub fn write_field(mut w: impl Write, f: &PatchField) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(f.n_components() as u32).to_le_bytes())?;
    w.write_all(&[f.conj_symmetric as u8])?;
    for comp in &f.components {
        w.write_all(&(comp.len() as u64).to_le_bytes())?;
        for p in comp {
            for c in p.center {
                w.write_all(&c.to_le_bytes())?;
            }
            w.write_all(&p.half_width().to_le_bytes())?;
            w.write_all(&p.spacing.to_le_bytes())?;
            for v in &p.samples {
                w.write_all(&v.re.to_le_bytes())?;
                w.write_all(&v.im.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array::<8>(r)?))
}

pub fn read_field(mut r: impl Read) -> Result<PatchField> {
    if &read_array::<4>(&mut r)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array::<4>(&mut r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let ncomp = u32::from_le_bytes(read_array::<4>(&mut r)?) as usize;
    let sym = read_array::<1>(&mut r)?[0] != 0;
    let mut components = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        let count = u64::from_le_bytes(read_array::<8>(&mut r)?) as usize;
        let mut patches = Vec::with_capacity(count);
        for _ in 0..count {
            let center = [read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?];
            let hw = read_f64(&mut r)?;
            let h = read_f64(&mut r)?;
            let m = (hw / h).round() as usize;
            let side = 2 * m + 1;
            let mut samples = Vec::with_capacity(side * side * side);
            for _ in 0..side * side * side {
                let re = read_f64(&mut r)?;
                let im = read_f64(&mut r)?;
                samples.push(Complex64::new(re, im));
            }
            patches.push(FourierPatch::new(center, h, m, samples)?);
        }
        components.push(patches);
    }
    Ok(PatchField { components, conj_symmetric: sym })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp_frame::make_data_bump;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn bump_patch(center: Vec3, h: f64) -> FourierPatch {
        let b = make_data_bump();
        FourierPatch::radial(center, h, 2.0, c(1.0), |r| b.eval(r)).unwrap()
    }

    /// `∫ bump(|ξ|)^k dξ` by composite Gauss–Legendre in the radius.
    fn radial_oracle(power: i32) -> f64 {
        let b = make_data_bump();
        crate::quadrature::composite_gauss_legendre(0.0, 2.0, 400, 10, |r| {
            4.0 * PI * r * r * b.eval(r).powi(power)
        })
    }

    #[test]
    fn rejects_coarse_or_dirty_patches() {
        assert!(FourierPatch::zeros([0.0; 3], 0.5, 3).is_err());
        let mut s = vec![ZERO; 9 * 9 * 9];
        s[0] = c(1.0);
        assert!(FourierPatch::new([0.0; 3], 0.5, 4, s).is_err());
    }

    #[test]
    fn evaluate_hits_lattice_and_reproduces_linear_data() {
        let p = FourierPatch::from_fn([3.0, -1.0, 0.5], 0.25, 6, |o| {
            Complex64::new(1.0 + 2.0 * o[0] - o[1] + 0.5 * o[2], o[0])
        })
        .unwrap();
        let xi = vec3::add(p.center(), p.offset(4, 7, 9));
        assert_eq!(p.evaluate(xi), p.samples()[p.index(4, 7, 9)]);
        let mid = vec3::add(p.center(), [0.125, -0.375, 0.0625]);
        let o = vec3::sub(mid, p.center());
        let want = Complex64::new(1.0 + 2.0 * o[0] - o[1] + 0.5 * o[2], o[0]);
        assert!((p.evaluate(mid) - want).norm() < 1e-14);
        assert_eq!(p.evaluate([100.0, 0.0, 0.0]), ZERO);
    }

    #[test]
    fn add_zero_and_cancellation() {
        let f = PatchField::scalar(vec![bump_patch([4.0, 0.0, 0.0], 0.25)], false).unwrap();
        let z = PatchField::zero(1);
        let s = add(&f, &z).unwrap();
        assert_eq!(s.evaluate([4.3, 0.1, 0.0]), f.evaluate([4.3, 0.1, 0.0]));
        let d = add(&f, &f.scale(c(-1.0))).unwrap();
        for xi in [[4.0, 0.0, 0.0], [4.7, -0.3, 0.2]] {
            assert_eq!(d.evaluate(xi)[0], ZERO);
        }
        let two = add(&f, &f).unwrap();
        let xi = [4.2, 0.4, -0.1];
        assert!((two.evaluate(xi)[0] - f.evaluate(xi)[0] * 2.0).norm() < 1e-15);
    }

    /// Direct `O(n²)` convolution used as the reference for the FFT path.
    fn direct_convolution(p: &FourierPatch, q: &FourierPatch) -> Vec<Complex64> {
        let (sp, sq) = (p.side(), q.side());
        let n = sp + sq - 1;
        let mut out = vec![ZERO; n * n * n];
        let h3 = p.spacing().powi(3);
        for a0 in 0..sp {
            for a1 in 0..sp {
                for a2 in 0..sp {
                    let va = p.samples()[(a0 * sp + a1) * sp + a2];
                    if va == ZERO {
                        continue;
                    }
                    for b0 in 0..sq {
                        for b1 in 0..sq {
                            for b2 in 0..sq {
                                let vb = q.samples()[(b0 * sq + b1) * sq + b2];
                                out[((a0 + b0) * n + a1 + b1) * n + a2 + b2] += va * vb * h3;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn fft_convolution_matches_direct_sum_and_mass() {
        let h = 0.5;
        let p = bump_patch([0.0; 3], h);
        let q = FourierPatch::from_fn([0.0; 3], h, 4, |o| {
            Complex64::new(1.0, 0.3 * o[1]) * make_data_bump().eval(vec3::norm(o))
        })
        .unwrap();
        let f = PatchField::scalar(vec![p.clone()], false).unwrap();
        let g = PatchField::scalar(vec![q.clone()], false).unwrap();
        let prod = multiply(&f, &g).unwrap();
        let out = &prod.component(0)[0];
        assert_eq!(out.m(), p.m() + q.m());
        assert_eq!(out.center(), [0.0; 3]);
        let direct = direct_convolution(&p, &q);
        let scale = direct.iter().fold(0.0_f64, |a, v| a.max(v.norm()));
        for (a, b) in out.samples().iter().zip(&direct) {
            assert!((a - b).norm() < 1e-12 * scale);
        }
        // mass of the product equals the product of masses
        let m_out = out.integral();
        let want = p.integral() * q.integral();
        assert!((m_out - want).norm() < 1e-8 * want.norm());
        // support radius at most 4 = 2 + 2
        for i0 in 0..out.side() {
            for i1 in 0..out.side() {
                for i2 in 0..out.side() {
                    if vec3::norm(out.offset(i0, i1, i2)) > 4.0 + 1e-12 {
                        assert!(out.samples()[out.index(i0, i1, i2)].norm() < 1e-12 * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn product_centers_and_widths_add_exactly() {
        let h = 0.5;
        let k = 1024.0;
        let f = PatchField::scalar(vec![bump_patch([k, k, 0.0], h)], false).unwrap();
        let g = PatchField::scalar(vec![bump_patch([-k, -k, 0.0], h), bump_patch([k, 0.0, 3.0], h)], false).unwrap();
        let prod = multiply(&f, &g).unwrap();
        let centers: Vec<Vec3> = prod.component(0).iter().map(|p| p.center()).collect();
        assert_eq!(centers, vec![[0.0, 0.0, 0.0], [2.0 * k, k, 3.0]]);
        assert!(prod.component(0).iter().all(|p| p.half_width() == 4.0));
        let zero = multiply(&f, &PatchField::zero(1)).unwrap();
        assert_eq!(zero.patch_count(), 0);
    }

    #[test]
    fn multiply_rejects_mixed_spacing() {
        let f = PatchField::scalar(vec![bump_patch([0.0; 3], 0.5)], false).unwrap();
        let g = PatchField::scalar(vec![bump_patch([0.0; 3], 0.25)], false).unwrap();
        assert!(matches!(multiply(&f, &g), Err(Error::IncompatibleSpacing(..))));
    }

    #[test]
    fn plancherel_matches_radial_oracle_and_counts_overlaps() {
        let f = PatchField::scalar(vec![bump_patch([0.0; 3], 0.0625)], true).unwrap();
        let want = ((2.0 * PI).powi(3) * radial_oracle(2)).sqrt();
        let got = plancherel_norm(&f);
        assert!((got - want).abs() < 1e-6 * want, "{got} vs {want}");
        let doubled = f.scale(c(2.0));
        assert_eq!(plancherel_norm(&doubled), 2.0 * got);
        assert_eq!(plancherel_norm(&PatchField::zero(3)), 0.0);
        // two overlapping copies shifted by one lattice step behave as their sum
        let a = bump_patch([0.0; 3], 0.125);
        let b = bump_patch([0.125, 0.0, 0.0], 0.125);
        let pair = PatchField::scalar(vec![a.clone(), b.clone()], false).unwrap();
        let direct = {
            let s = a.side();
            let mut acc = 0.0;
            for i0 in 0..s + 1 {
                for i1 in 0..s {
                    for i2 in 0..s {
                        let xi = [(i0 as f64 - a.m() as f64) * 0.125, (i1 as f64 - a.m() as f64) * 0.125, (i2 as f64 - a.m() as f64) * 0.125];
                        acc += (a.evaluate(xi) + b.evaluate(xi)).norm_sqr();
                    }
                }
            }
            ((2.0 * PI).powi(3) * acc * 0.125f64.powi(3)).sqrt()
        };
        assert!((plancherel_norm(&pair) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn synthesis_at_origin_is_the_mass() {
        let p = bump_patch([0.0; 3], 0.0625);
        let grid = SynthesisGrid::for_patch(&p);
        let g = synthesize_patch(&p, grid.half_width, grid.points).unwrap();
        let mid = grid.points / 2;
        let g0 = g[(mid * grid.points + mid) * grid.points + mid];
        let want = radial_oracle(1);
        assert!((g0.re - want).abs() < 1e-6 * want && g0.im.abs() < 1e-12);
    }

    #[test]
    fn synthesis_is_translation_invariant_in_modulus() {
        let a = bump_patch([0.0; 3], 0.25);
        let b = bump_patch([512.0, -7.0, 3.0], 0.25);
        let ga = synthesize_patch(&a, 8.0, 23).unwrap();
        let gb = synthesize_patch(&b, 8.0, 23).unwrap();
        for (x, y) in ga.iter().zip(&gb) {
            assert!((x.norm() - y.norm()).abs() < 1e-13);
        }
        let z = FourierPatch::zeros([1.0; 3], 0.25, 8).unwrap();
        assert!(synthesize_patch(&z, 8.0, 23).unwrap().iter().all(|v| *v == ZERO));
        assert!(matches!(synthesize_patch(&a, 8.0, 5), Err(Error::Undersampled { .. })));
    }

    #[test]
    fn lr_norms_agree_with_plancherel_and_scale() {
        let p = bump_patch([0.0; 3], 0.25);
        // one full lattice period: the trapezoid rule is exact for |g|²
        let l = PI / p.spacing();
        let n = min_points(l, p.half_width());
        let l2 = patch_lr_norm(&p, 2.0, l, n, 1.0).unwrap();
        let pl = plancherel_norm(&PatchField::scalar(vec![p.clone()], true).unwrap());
        assert!((l2.value - pl).abs() < 1e-10 * pl, "{} vs {pl}", l2.value);
        let grid = SynthesisGrid::for_patch(&p);
        let a = patch_lr_norm(&p, 4.0, grid.half_width, grid.points, 1e-4).unwrap();
        let b = patch_lr_norm(&p.scaled(c(3.0)), 4.0, grid.half_width, grid.points, 1e-4).unwrap();
        assert!((b.value - 3.0 * a.value).abs() < 1e-12 * b.value);
    }

    #[test]
    fn sup_norm_of_bump_sits_at_the_origin() {
        let p = bump_patch([0.0; 3], 0.0625);
        let grid = SynthesisGrid::for_patch(&p);
        let inf = patch_lr_norm(&p, f64::INFINITY, grid.half_width, grid.points, 1.0).unwrap();
        // dense search along the axes and diagonals near the origin
        let mut best: f64 = 0.0;
        for k in 0..=200 {
            let r = k as f64 * 0.01;
            for dir in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.577, 0.577, 0.577]] {
                let x = vec3::scale(r, dir);
                let mut acc = ZERO;
                let s = p.side();
                for i0 in 0..s {
                    for i1 in 0..s {
                        for i2 in 0..s {
                            let v = p.samples()[p.index(i0, i1, i2)];
                            if v != ZERO {
                                acc += v * Complex64::from_polar(1.0, vec3::dot(x, p.offset(i0, i1, i2)));
                            }
                        }
                    }
                }
                best = best.max(acc.norm() * p.spacing().powi(3));
            }
        }
        assert!((inf.value - best).abs() < 1e-9 * best);
        assert!((inf.value - radial_oracle(1)).abs() < 1e-6 * inf.value);
    }

    #[test]
    fn tail_budget_rejects_tiny_boxes() {
        let p = bump_patch([0.0; 3], 0.125);
        let res = patch_lr_norm(&p, 2.0, 2.0, min_points(2.0, 2.0), 1e-4);
        assert!(matches!(res, Err(Error::TailBudgetExceeded { .. })));
    }

    #[test]
    fn multipliers_act_pointwise() {
        let k = 1024.0;
        let f = PatchField::scalar(vec![bump_patch([k, 0.0, 0.0], 0.25)], false).unwrap();
        let d1 = apply_multiplier(&Multiplier::partial(0), &f).unwrap();
        let v = d1.evaluate([k, 0.0, 0.0])[0];
        assert!((v - Complex64::new(0.0, k)).norm() < 1e-12 * k);
        let up = apply_multiplier(&Multiplier::lambda_power(1.0), &f).unwrap();
        let back = apply_multiplier(&Multiplier::lambda_power(-1.0), &up).unwrap();
        for (a, b) in back.component(0)[0].samples().iter().zip(f.component(0)[0].samples()) {
            assert!((a - b).norm() < 1e-12);
        }
        let origin = PatchField::scalar(vec![bump_patch([0.0; 3], 0.25)], true).unwrap();
        assert!(matches!(
            apply_multiplier(&Multiplier::lambda_power(-1.0), &origin),
            Err(Error::SupportTouchesSingularity { .. })
        ));
    }

    #[test]
    fn conjugate_symmetry_tracks_real_fields() {
        let b = make_data_bump();
        let k = 64.0;
        let p = FourierPatch::radial([k, 0.0, 0.0], 0.25, 2.0, Complex64::new(0.5, 0.25), |r| b.eval(r)).unwrap();
        let f = PatchField::new(vec![vec![p.clone(), p.reflected_conj()]], true).unwrap();
        assert!(PatchField::new(vec![vec![p.clone()]], true).is_err());
        let sq = multiply(&f, &f).unwrap();
        assert!(sq.conj_symmetric() && sq.is_conj_symmetric(1e-12));
        let d = apply_multiplier(&Multiplier::partial(0), &f).unwrap();
        assert!(d.conj_symmetric() && d.is_conj_symmetric(0.0));
    }

    #[test]
    fn binary_dump_round_trips() {
        let f = PatchField::new(
            vec![vec![bump_patch([8.0, 0.0, 0.0], 0.5)], vec![], vec![bump_patch([0.0; 3], 0.5).scaled(Complex64::new(0.0, 2.0))]],
            false,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let g = read_field(buf.as_slice()).unwrap();
        assert_eq!(f, g);
        assert!(read_field(&b"XXXX"[..]).is_err());
    }
}
