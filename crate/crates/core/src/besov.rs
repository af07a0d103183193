//! Besov and Chemin–Lerner norm engines, Bony's decomposition and the
//! measured-constant harnesses for the product, paraproduct, composition
//! and heat estimates.
//!
//! Norms come in three modes. `r = 2` blocks are exact through Plancherel,
//! a block holding a single patch is exact through synthesis of its
//! demodulated profile, and anything else is bounded above by the triangle
//! inequality over patches. Lower bounds pair each block with a test
//! function whose transform is 1 on the block's annulus.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp_frame::{lp_block, make_data_bump, LpFrame, SmoothCutoff, CHI_INNER, CHI_OUTER, PHI_PLATEAU, PHI_SUPPORT};
use crate::patch_field::{
    add, apply_multiplier, multiply, multiply_sum, patch_lr_norm, plancherel_norm, sup_norm, FourierPatch,
    Multiplier, PatchField, SynthesisGrid,
};
use crate::quadrature::{composite_gauss_legendre_rule, TimeGrid};
use crate::semigroup::{duhamel_kernel, heat_multiplier};
use crate::vec3::{self, Vec3};
use crate::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovSpec {
    pub sigma: f64,
    pub r: f64,
    pub s: f64,
}

impl BesovSpec {
    pub fn new(sigma: f64, r: f64, s: f64) -> Result<Self> {
        if !(r >= 1.0) || !(s >= 1.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!("Besov indices sigma={sigma}, r={r}, s={s}")));
        }
        Ok(BesovSpec { sigma, r, s })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeNormSpec {
    pub rho: f64,
    pub besov: BesovSpec,
    pub horizon: f64,
}

impl TimeNormSpec {
    pub fn new(rho: f64, besov: BesovSpec, horizon: f64) -> Result<Self> {
        if !(rho >= 1.0) || !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("time exponent {rho}, horizon {horizon}")));
        }
        Ok(TimeNormSpec { rho, besov, horizon })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    Exact,
    UpperBound,
    LowerBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormResult {
    pub value: f64,
    pub mode: NormMode,
    /// Largest relative shell mass met while synthesizing (0 when no
    /// synthesis was needed).
    pub tail_report: f64,
}

/// Synthesis box used for `r ≠ 2` block norms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSettings {
    /// Box half-width is `l_factor / half_width` of the patch.
    pub l_factor: f64,
    /// Largest admissible relative shell mass.
    pub tail_tol: f64,
    /// Re-tabulate coarse lattices for low bands; otherwise each symbol is
    /// applied on the field's own lattice.
    pub refine: bool,
    /// Bound `r > 2` patches by `‖g‖_2^{2/r}(∫|ĝ|)^{1−2/r}` instead of
    /// synthesizing them.
    pub interpolate: bool,
}

impl Default for NormSettings {
    fn default() -> Self {
        NormSettings { l_factor: 32.0, tail_tol: 1e-4, refine: true, interpolate: false }
    }
}

/// `‖Δ_j f‖_{L^r}` for one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockNorm {
    pub j: i32,
    pub value: f64,
    pub exact: bool,
    pub tail: f64,
}

fn block_value(block: &PatchField, r: f64, settings: &NormSettings) -> Result<(f64, bool, f64)> {
    if r == 2.0 {
        return Ok((plancherel_norm(block), true, 0.0));
    }
    let merged = block.merged();
    let patches: Vec<&FourierPatch> = merged.patches().map(|(_, p)| p).collect();
    let mut total = 0.0;
    let mut tail: f64 = 0.0;
    for p in &patches {
        if settings.interpolate && r > 2.0 {
            total += interpolation_bound(p, r);
            continue;
        }
        let grid = SynthesisGrid::for_exponent(p, r, settings.l_factor);
        let n = patch_lr_norm(p, r, grid.half_width, grid.points, settings.tail_tol)?;
        total += n.value;
        tail = tail.max(n.tail);
    }
    Ok((total, patches.len() <= 1 && !(settings.interpolate && r > 2.0), tail))
}

/// `‖g‖_r ≤ ‖g‖_2^{2/r}‖g‖_∞^{1−2/r}` with `‖g‖_∞ ≤ ∫|ĝ|`.
fn interpolation_bound(p: &FourierPatch, r: f64) -> f64 {
    let h3 = p.spacing().powi(3);
    let l1 = h3 * p.samples().iter().fold(0.0, |a, v| a + v.norm());
    if r.is_infinite() {
        return l1;
    }
    let l2 = ((2.0 * PI).powi(3) * p.l2_sq()).sqrt();
    l2.powf(2.0 / r) * l1.powf(1.0 - 2.0 / r)
}

/// Block norms over the frame bands meeting the support of `f`.
pub fn block_norms(f: &PatchField, r: f64, frame: &LpFrame, settings: &NormSettings) -> Result<Vec<BlockNorm>> {
    let mut out = Vec::new();
    for j in frame.active_bands(f) {
        let block = band_block(frame, j, f, settings.refine)?;
        if block.is_empty() {
            continue;
        }
        let (value, exact, tail) = block_value(&block, r, settings)?;
        out.push(BlockNorm { j, value, exact, tail });
    }
    Ok(out)
}

fn lp_sum(values: impl Iterator<Item = f64>, s: f64) -> f64 {
    if s.is_infinite() {
        values.fold(0.0, f64::max)
    } else if s == 1.0 {
        values.fold(0.0, |a, v| a + v)
    } else {
        values.fold(0.0, |a, v| a + v.powf(s)).powf(1.0 / s)
    }
}

fn aggregate(blocks: &[BlockNorm], spec: &BesovSpec, mode_if_exact: NormMode) -> NormResult {
    let value = lp_sum(blocks.iter().map(|b| 2f64.powf(b.j as f64 * spec.sigma) * b.value), spec.s);
    let exact = blocks.iter().all(|b| b.exact);
    NormResult {
        value,
        mode: if exact { mode_if_exact } else { NormMode::UpperBound },
        tail_report: blocks.iter().fold(0.0, |m, b| m.max(b.tail)),
    }
}

/// `‖f‖_{Ḃ^σ_{r,s}}`, exact or bounded above.
pub fn besov_norm(f: &PatchField, spec: &BesovSpec, frame: &LpFrame) -> Result<NormResult> {
    besov_norm_with(f, spec, frame, &NormSettings::default())
}

pub fn besov_norm_with(f: &PatchField, spec: &BesovSpec, frame: &LpFrame, settings: &NormSettings) -> Result<NormResult> {
    let blocks = block_norms(f, spec.r, frame, settings)?;
    Ok(aggregate(&blocks, spec, NormMode::Exact))
}

/// Radial profile of `ψ₀ = F⁻¹[χ(·/4)]` on a Gauss–Legendre grid of
/// `[0, 120]`, with the quadrature weights of that grid.
struct PsiTable {
    rho: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
    at_zero: f64,
}

fn psi_table() -> &'static PsiTable {
    static TABLE: OnceLock<PsiTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let chi = SmoothCutoff::new(CHI_INNER, CHI_OUTER).expect("frame cutoff");
        let (s, ws) = composite_gauss_legendre_rule(0.0, 4.0 * CHI_OUTER, 400, 10);
        let wk: Vec<f64> = s.iter().zip(&ws).map(|(s, w)| 4.0 * PI * w * chi.eval(s / 4.0) * s * s).collect();
        let (rho, weights) = composite_gauss_legendre_rule(0.0, 120.0, 2400, 10);
        let values = rho
            .iter()
            .map(|&r| {
                s.iter()
                    .zip(&wk)
                    .map(|(s, w)| {
                        let x = r * s;
                        w * if x == 0.0 { 1.0 } else { x.sin() / x }
                    })
                    .sum()
            })
            .collect();
        let at_zero = wk.iter().sum();
        PsiTable { rho, weights, values, at_zero }
    })
}

/// `‖ψ₀‖_{L^{r'}}` with `1/r + 1/r' = 1`.
pub fn psi0_dual_norm(r: f64) -> f64 {
    let t = psi_table();
    if r == 1.0 {
        return t.at_zero;
    }
    let rp = if r.is_infinite() { 1.0 } else { r / (r - 1.0) };
    let integral: f64 = t
        .rho
        .iter()
        .zip(&t.weights)
        .zip(&t.values)
        .map(|((r, w), v)| w * v.abs().powf(rp) * r * r)
        .sum();
    (4.0 * PI * integral).powf(1.0 / rp)
}

/// `‖Δ_j f‖_r ≥ (2π)³|∫Δ̂_j f|/‖ψ_j‖_{r'}` with `‖ψ_j‖_{r'} = 2^{3j/r}‖ψ₀‖_{r'}`;
/// for `r = ∞` the bound is `|Δ_j f(0)| = |∫Δ̂_j f|`. Vector fields use the
/// largest component.
pub fn block_lower_bound(block: &PatchField, j: i32, r: f64) -> f64 {
    let mut best: f64 = 0.0;
    for c in block.components() {
        let integral: Complex64 = c.iter().map(|p| p.integral()).sum();
        best = best.max(integral.norm());
    }
    if r.is_infinite() {
        best
    } else {
        (2.0 * PI).powi(3) * best / (2f64.powf(3.0 * j as f64 / r) * psi0_dual_norm(r))
    }
}

/// Lower bound for `‖f‖_{Ḃ^σ_{r,s}}`.
pub fn besov_lower_bound(f: &PatchField, spec: &BesovSpec, frame: &LpFrame) -> Result<NormResult> {
    let mut blocks = Vec::new();
    for j in frame.active_bands(f) {
        let block = lp_block(frame, j, f)?;
        blocks.push(BlockNorm { j, value: block_lower_bound(&block, j, spec.r), exact: true, tail: 0.0 });
    }
    Ok(aggregate(&blocks, spec, NormMode::LowerBound))
}

/// A field sampled on a time grid.
#[derive(Clone, Debug)]
pub struct TimeSamples {
    pub grid: TimeGrid,
    pub fields: Vec<PatchField>,
}

impl TimeSamples {
    pub fn new(grid: TimeGrid, fields: Vec<PatchField>) -> Result<Self> {
        if grid.is_empty() || fields.is_empty() {
            return Err(Error::EmptyTimeGrid);
        }
        if grid.len() != fields.len() {
            return Err(Error::InvalidParameter(format!(
                "{} time nodes but {} fields",
                grid.len(),
                fields.len()
            )));
        }
        Ok(TimeSamples { grid, fields })
    }

    /// Samples `f(t)` at every node of `grid`.
    pub fn from_fn(grid: TimeGrid, mut f: impl FnMut(f64) -> Result<PatchField>) -> Result<Self> {
        let fields = grid.nodes.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        TimeSamples::new(grid, fields)
    }
}

/// Per-band `‖Δ_k f‖_{L^ρ(0,T; L^r)}` by time quadrature.
pub fn time_block_norms(
    samples: &TimeSamples,
    rho: f64,
    r: f64,
    frame: &LpFrame,
    settings: &NormSettings,
) -> Result<Vec<BlockNorm>> {
    let mut bands: Vec<i32> = samples.fields.iter().flat_map(|f| frame.active_bands(f)).collect();
    bands.sort_unstable();
    bands.dedup();
    let mut out = Vec::with_capacity(bands.len());
    for j in bands {
        let mut vals = Vec::with_capacity(samples.fields.len());
        let mut exact = true;
        let mut tail: f64 = 0.0;
        for f in &samples.fields {
            let block = band_block(frame, j, f, settings.refine)?;
            let (v, e, t) = block_value(&block, r, settings)?;
            vals.push(v);
            exact &= e;
            tail = tail.max(t);
        }
        let value = if rho.is_infinite() {
            vals.iter().fold(0.0_f64, |m, v| m.max(*v))
        } else {
            let p: Vec<f64> = vals.iter().map(|v| v.powf(rho)).collect();
            samples.grid.integrate(&p).max(0.0).powf(1.0 / rho)
        };
        out.push(BlockNorm { j, value, exact, tail });
    }
    Ok(out)
}

/// `‖f‖_{L̃^ρ_T Ḃ^σ_{r,s}}`.
pub fn chemin_lerner_norm(samples: &TimeSamples, spec: &TimeNormSpec, frame: &LpFrame) -> Result<NormResult> {
    chemin_lerner_norm_with(samples, spec, frame, &NormSettings::default())
}

pub fn chemin_lerner_norm_with(
    samples: &TimeSamples,
    spec: &TimeNormSpec,
    frame: &LpFrame,
    settings: &NormSettings,
) -> Result<NormResult> {
    let blocks = time_block_norms(samples, spec.rho, spec.besov.r, frame, settings)?;
    Ok(aggregate(&blocks, &spec.besov, NormMode::Exact))
}

// ---------------------------------------------------------------------------
// Bony decomposition

/// Radial band multiplier applied on the patch's own lattice, so that the
/// symbol identities behind Bony's decomposition hold sample by sample. The
/// symbol vanishes off `(lo, hi)` and equals 1 on `plateau`.
fn on_lattice(f: &PatchField, lo: f64, hi: f64, plateau: (f64, f64), symbol: impl Fn(f64) -> f64) -> PatchField {
    f.map_patches(|_, p| {
        let (a, b) = p.support_radii()?;
        if b <= lo || a >= hi {
            return None;
        }
        if a >= plateau.0 && b <= plateau.1 {
            return Some(p.clone());
        }
        let mut q = p.clone();
        q.map_interior(|xi, v| {
            let rho = vec3::norm(xi);
            if rho <= lo || rho >= hi {
                Complex64::new(0.0, 0.0)
            } else if rho >= plateau.0 && rho <= plateau.1 {
                v
            } else {
                v * symbol(rho)
            }
        });
        (!q.is_zero()).then_some(q)
    })
}

fn phi_block(frame: &LpFrame, j: i32, f: &PatchField) -> PatchField {
    let s = 2f64.powi(j);
    let plateau = (s * PHI_PLATEAU.0, s * PHI_PLATEAU.1);
    on_lattice(f, s * PHI_SUPPORT.0, s * PHI_SUPPORT.1, plateau, |rho| frame.phi(rho / s))
}

fn chi_block(frame: &LpFrame, j: i32, f: &PatchField) -> PatchField {
    let s = 2f64.powi(j);
    on_lattice(f, -1.0, s * CHI_OUTER, (0.0, s * CHI_INNER), |rho| frame.chi.eval(rho / s))
}

/// `Δ_j f`, refined or on the field's lattice.
pub fn band_block(frame: &LpFrame, j: i32, f: &PatchField, refine: bool) -> Result<PatchField> {
    if refine {
        lp_block(frame, j, f)
    } else {
        Ok(phi_block(frame, j, f))
    }
}

fn bands_of(frame: &LpFrame, f: &PatchField) -> Vec<i32> {
    frame.active_bands(f)
}

/// `T_f g = Σ_j S_{j−1} f Δ_j g` with `S_{j−1}` the low-pass `χ(2^{1−j}D)`.
pub fn paraproduct(f: &PatchField, g: &PatchField, frame: &LpFrame) -> Result<PatchField> {
    let mut lows = Vec::new();
    let mut highs = Vec::new();
    for j in bands_of(frame, g) {
        let low = chi_block(frame, j - 1, f);
        let high = phi_block(frame, j, g);
        if !low.is_empty() && !high.is_empty() {
            lows.push(low);
            highs.push(high);
        }
    }
    let terms: Vec<(&PatchField, &PatchField)> = lows.iter().zip(&highs).collect();
    Ok(multiply_sum(&terms)?.merged())
}

/// `R(f, g) = Σ_{|j−j'| ≤ 1} Δ_j f Δ_{j'} g`.
pub fn remainder(f: &PatchField, g: &PatchField, frame: &LpFrame) -> Result<PatchField> {
    let fb = bands_of(frame, f);
    let gb = bands_of(frame, g);
    let f_blocks: Vec<(i32, PatchField)> =
        fb.iter().map(|&j| (j, phi_block(frame, j, f))).filter(|(_, b)| !b.is_empty()).collect();
    let g_blocks: Vec<(i32, PatchField)> =
        gb.iter().map(|&j| (j, phi_block(frame, j, g))).filter(|(_, b)| !b.is_empty()).collect();
    let mut terms = Vec::new();
    for (j, a) in &f_blocks {
        for (k, b) in &g_blocks {
            if (j - k).abs() <= 1 {
                terms.push((a, b));
            }
        }
    }
    Ok(multiply_sum(&terms)?.merged())
}

// ---------------------------------------------------------------------------
// Estimate harnesses

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lemma {
    /// Product estimate with `L^∞` factors.
    L2_5,
    /// Product estimate in two Besov indices.
    L2_6,
    /// Paraproduct, first form.
    L2_8i,
    /// Paraproduct, integrability exchange.
    L2_8ii,
    /// Remainder.
    L2_8iii,
    /// Composition with `F(a) = a/(1+a)`.
    L2_7,
    /// Heat smoothing.
    P2_4,
}

impl Lemma {
    pub const ALL: [Lemma; 7] =
        [Lemma::L2_5, Lemma::L2_6, Lemma::L2_8i, Lemma::L2_8ii, Lemma::L2_8iii, Lemma::L2_7, Lemma::P2_4];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessParams {
    pub trials: usize,
    pub seed: u64,
    pub r: f64,
    pub b: f64,
    pub sigma: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub alpha: f64,
    /// Source time exponent for the heat estimate.
    pub rho: f64,
    /// Solution time exponent for the heat estimate.
    pub rho1: f64,
    pub horizon: f64,
    pub spacing: f64,
}

impl Default for HarnessParams {
    fn default() -> Self {
        HarnessParams {
            trials: 50,
            seed: 0,
            r: 2.0,
            b: 2.0,
            sigma: 0.5,
            sigma1: 1.5,
            sigma2: 1.5,
            alpha: 0.5,
            rho: 1.0,
            rho1: 2.0,
            horizon: 0.05,
            spacing: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub lemma: Lemma,
    pub trials: usize,
    pub max_ratio: f64,
    pub ratios: Vec<f64>,
}

fn check_hypotheses(lemma: Lemma, p: &HarnessParams) -> Result<()> {
    let bad = |msg: String| Err(Error::HypothesisViolation(msg));
    if !(p.r >= 1.0 && p.b >= 1.0) {
        return bad(format!("integrability r={}, b={}", p.r, p.b));
    }
    match lemma {
        Lemma::L2_5 | Lemma::L2_7 => {
            if !(p.sigma > 0.0) {
                return bad(format!("sigma = {} must be positive", p.sigma));
            }
        }
        Lemma::L2_6 => {
            let cap = 3.0 / p.r;
            if p.sigma1 > cap || p.sigma2 > cap {
                return bad(format!("sigma1, sigma2 must not exceed 3/r = {cap}"));
            }
            let floor = 3.0 * (2.0 / p.r - 1.0).max(0.0);
            if !(p.sigma1 + p.sigma2 > floor) {
                return bad(format!("sigma1 + sigma2 must exceed {floor}"));
            }
        }
        Lemma::L2_8i => {
            if p.alpha < 0.0 {
                return bad(format!("alpha = {} must be non-negative", p.alpha));
            }
        }
        Lemma::L2_8ii => {
            if 3.0 / p.r - 3.0 / p.b + p.alpha < 0.0 || p.r < p.b {
                return bad("needs 3/r − 3/b + alpha ≥ 0 and r ≥ b".into());
            }
        }
        Lemma::L2_8iii => {
            if !(3.0 / p.r + p.sigma > 0.0) {
                return bad("needs 3/r + sigma > 0".into());
            }
        }
        Lemma::P2_4 => {
            if !(p.rho1 >= p.rho && p.rho >= 1.0) || !(p.horizon > 0.0) {
                return bad("needs 1 ≤ rho ≤ rho1 and T > 0".into());
            }
        }
    }
    Ok(())
}

/// Frame wide enough for every harness trial field and product.
pub fn harness_frame() -> LpFrame {
    crate::lp_frame::make_lp_frame(-8, 7).expect("valid band range")
}

/// Random real band-limited scalar field: `pairs` conjugate bump pairs of
/// radius 1 at centers with `1.5 ≤ |c| ≤ 6`.
pub fn trial_field(rng: &mut ChaCha8Rng, pairs: usize, spacing: f64) -> Result<PatchField> {
    let bump = make_data_bump();
    let mut patches = Vec::with_capacity(2 * pairs);
    for _ in 0..pairs {
        let dir = loop {
            let v: Vec3 = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n = vec3::norm(v);
            if n > 0.1 && n <= 1.0 {
                break vec3::scale(1.0 / n, v);
            }
        };
        let radius = rng.gen_range(1.5..6.0);
        // centers on the lattice so conjugate partners share keys with sums
        let c = vec3::scale(radius, dir).map(|x| (x / spacing).round() * spacing);
        let amp = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let p = FourierPatch::radial(c, spacing, 1.0, amp, |r| bump.eval(2.0 * r))?;
        patches.push(p.reflected_conj());
        patches.push(p);
    }
    PatchField::scalar(patches, true)
}

/// Block norms of one harness field, reused across regularity indices.
struct Blocks(Vec<BlockNorm>);

impl Blocks {
    fn of(f: &PatchField, r: f64, frame: &LpFrame) -> Result<Blocks> {
        Ok(Blocks(block_norms(f, r, frame, &HARNESS_SETTINGS)?))
    }

    fn besov(&self, sigma: f64) -> f64 {
        self.0.iter().fold(0.0, |acc, b| acc + 2f64.powf(b.j as f64 * sigma) * b.value)
    }
}

/// Harness norms work on the trial lattice itself, the setting in which
/// Bony's decomposition is exact.
const HARNESS_SETTINGS: NormSettings =
    NormSettings { l_factor: 32.0, tail_tol: 1e-4, refine: false, interpolate: false };

fn norm(f: &PatchField, sigma: f64, r: f64, frame: &LpFrame) -> Result<f64> {
    Ok(Blocks::of(f, r, frame)?.besov(sigma))
}

/// Rescales `f` so that `sup|f| = target`.
fn with_sup(f: &PatchField, target: f64) -> Result<PatchField> {
    let s = sup_norm(f)?.value;
    Ok(f.scale(Complex64::new(target / s, 0.0)))
}

/// `a − a² + a³ − …`, truncated once `‖a‖_∞^{k+1} < 1e−6`.
fn rational_composition(a: &PatchField, sup: f64) -> Result<PatchField> {
    let mut acc = a.clone();
    let mut power = a.clone();
    let mut k = 1;
    while sup.powi(k + 1) >= 1e-6 {
        power = multiply(&power, a)?.merged();
        k += 1;
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        acc = add(&acc, &power.scale(Complex64::new(sign, 0.0)))?;
    }
    Ok(acc.merged())
}

fn one_trial(lemma: Lemma, p: &HarnessParams, rng: &mut ChaCha8Rng, frame: &LpFrame) -> Result<f64> {
    // powers of a single pair stay on k + 1 lattices
    let pairs_f = if lemma == Lemma::L2_7 { 1 } else { rng.gen_range(1..=2) };
    let pairs_g = rng.gen_range(1..=2);
    let f = trial_field(rng, pairs_f, p.spacing)?;
    let g = trial_field(rng, pairs_g, p.spacing)?;
    let ratio = match lemma {
        Lemma::L2_5 => {
            let lhs = norm(&multiply(&f, &g)?, p.sigma, p.r, frame)?;
            let rhs = sup_norm(&f)?.value * norm(&g, p.sigma, p.r, frame)?
                + sup_norm(&g)?.value * norm(&f, p.sigma, p.r, frame)?;
            lhs / rhs
        }
        Lemma::L2_6 => {
            let lhs = norm(&multiply(&f, &g)?, p.sigma1 + p.sigma2 - 3.0 / p.r, p.r, frame)?;
            lhs / (norm(&f, p.sigma1, p.r, frame)? * norm(&g, p.sigma2, p.r, frame)?)
        }
        Lemma::L2_8i => {
            let lhs = norm(&paraproduct(&f, &g, frame)?, p.sigma, p.b, frame)?;
            lhs / (norm(&f, 3.0 / p.r - p.alpha, p.r, frame)? * norm(&g, p.sigma + p.alpha, p.b, frame)?)
        }
        Lemma::L2_8ii => {
            let lhs = norm(&paraproduct(&f, &g, frame)?, p.sigma, p.b, frame)?;
            let shift = 3.0 / p.r - 3.0 / p.b + p.alpha;
            lhs / (norm(&f, 3.0 / p.r - p.alpha, p.b, frame)? * norm(&g, p.sigma + shift, p.r, frame)?)
        }
        Lemma::L2_8iii => {
            let lhs = norm(&remainder(&f, &g, frame)?, p.sigma, p.b, frame)?;
            lhs / (norm(&f, 3.0 / p.r - p.alpha, p.r, frame)? * norm(&g, p.sigma + p.alpha, p.b, frame)?)
        }
        Lemma::L2_7 => {
            let sup = rng.gen_range(0.05..0.25);
            let a = with_sup(&f, sup)?;
            let fa = rational_composition(&a, sup)?;
            let lhs = norm(&fa, p.sigma, p.r, frame)?;
            let power = p.sigma.floor() as i32 + 2;
            lhs / ((1.0 + sup).powi(power) * norm(&a, p.sigma, p.r, frame)?)
        }
        Lemma::P2_4 => {
            let mu = rng.gen_range(0.5..2.0);
            let src_scale = rng.gen_range(0.0..4.0);
            let src = g.scale(Complex64::new(src_scale, 0.0));
            heat_ratio(&f, &src, mu, p, frame)?
        }
    };
    Ok(ratio)
}

/// Solution of `∂_t u − μΔu = f`, `u(0) = u₀`, with time-independent `f`.
pub fn heat_solution(u0: &PatchField, source: &PatchField, mu: f64, t: f64) -> Result<PatchField> {
    let free = apply_multiplier(&heat_multiplier(mu, t)?, u0)?;
    let duhamel = Multiplier::scalar(
        move |xi| Complex64::new(duhamel_kernel(mu * vec3::norm2(xi), 0.0, t), 0.0),
        true,
    );
    let forced = apply_multiplier(&duhamel, source)?;
    add(&free, &forced)
}

/// `μ^{1/ρ₁}‖u‖_{L̃^{ρ₁}_T Ḃ^{σ+2/ρ₁}_{r,1}}` over
/// `‖u₀‖_{Ḃ^σ_{r,1}} + ‖f‖_{L̃^ρ_T Ḃ^{σ−2+2/ρ}_{r,1}}`.
pub fn heat_ratio(u0: &PatchField, source: &PatchField, mu: f64, p: &HarnessParams, frame: &LpFrame) -> Result<f64> {
    let grid = TimeGrid::geometric_simpson(p.horizon, 10, 4);
    let samples = TimeSamples::from_fn(grid, |t| heat_solution(u0, source, mu, t))?;
    let inv1 = if p.rho1.is_infinite() { 0.0 } else { 1.0 / p.rho1 };
    let blocks = time_block_norms(&samples, p.rho1, p.r, frame, &HARNESS_SETTINGS)?;
    let lhs = mu.powf(inv1) * Blocks(blocks).besov(p.sigma + 2.0 * inv1);
    let inv = if p.rho.is_infinite() { 0.0 } else { 1.0 / p.rho };
    let src = if source.is_empty() {
        0.0
    } else {
        p.horizon.powf(inv) * norm(source, p.sigma - 2.0 + 2.0 * inv, p.r, frame)?
    };
    let rhs = norm(u0, p.sigma, p.r, frame)? + src;
    Ok(if rhs > 0.0 { lhs / rhs } else { 0.0 })
}

/// Largest LHS/RHS ratio of `lemma` over `params.trials` random trials.
/// Trial `i` depends only on `(seed, i)`, so longer runs extend shorter ones.
pub fn estimate_harness(lemma: Lemma, params: &HarnessParams) -> Result<HarnessReport> {
    check_hypotheses(lemma, params)?;
    let frame = harness_frame();
    let mut ratios = Vec::with_capacity(params.trials);
    for i in 0..params.trials {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(i as u64 + 1);
        let v = one_trial(lemma, params, &mut rng, &frame)?;
        ratios.push(if v.is_finite() { v } else { f64::INFINITY });
    }
    let max_ratio = ratios.iter().fold(0.0_f64, |m, v| m.max(*v));
    Ok(HarnessReport { lemma, trials: params.trials, max_ratio, ratios })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp_frame::make_lp_frame;
    use crate::patch_field::{add, multiply};

    fn bump_field(center: Vec3, h: f64, radius: f64, amp: f64) -> PatchField {
        let b = make_data_bump();
        let p = FourierPatch::radial(center, h, radius, Complex64::new(amp, 0.0), |r| b.eval(2.0 * r / radius)).unwrap();
        PatchField::scalar(vec![p], false).unwrap()
    }

    #[test]
    fn single_block_norm_is_exact() {
        let fr = make_lp_frame(-4, 10).unwrap();
        // support [43, 47] inside the plateau of band 5
        let f = bump_field([45.0, 0.0, 0.0], 0.125, 2.0, 1.0);
        let spec = BesovSpec::new(0.7, 4.0, 1.0).unwrap();
        let res = besov_norm(&f, &spec, &fr).unwrap();
        assert_eq!(res.mode, NormMode::Exact);
        let p = &f.component(0)[0];
        let g = SynthesisGrid::for_exponent(p, 4.0, 32.0);
        let direct = patch_lr_norm(p, 4.0, g.half_width, g.points, 1e-4).unwrap().value;
        assert!((res.value - 2f64.powf(5.0 * 0.7) * direct).abs() < 1e-12 * res.value);
    }

    #[test]
    fn l2_dilation_scaling() {
        // f(λ·) has transform λ^{-3} f̂(·/λ): rebuild the patch at doubled
        // center, spacing and width
        let fr = make_lp_frame(-6, 12).unwrap();
        let b = make_data_bump();
        let mk = |lam: f64| {
            let p = FourierPatch::radial([12.0 * lam, 3.0 * lam, 0.0], 0.25 * lam, 2.0 * lam, Complex64::new(lam.powi(-3), 0.0), |r| b.eval(r / lam)).unwrap();
            PatchField::scalar(vec![p], false).unwrap()
        };
        let spec = BesovSpec::new(0.4, 2.0, 1.0).unwrap();
        let n1 = besov_norm(&mk(1.0), &spec, &fr).unwrap();
        let n2 = besov_norm(&mk(2.0), &spec, &fr).unwrap();
        let want = 2f64.powf(0.4 - 1.5);
        assert!((n2.value / n1.value - want).abs() < 1e-10 * want);
        assert_eq!(n1.mode, NormMode::Exact);
    }

    #[test]
    fn lower_exact_upper_ordering() {
        let fr = make_lp_frame(-4, 10).unwrap();
        let f = bump_field([45.0, 0.0, 0.0], 0.125, 2.0, 1.0);
        for r in [2.0, 4.0, 8.0, f64::INFINITY] {
            let spec = BesovSpec::new(-0.25, r, 1.0).unwrap();
            let lo = besov_lower_bound(&f, &spec, &fr).unwrap();
            let ex = besov_norm(&f, &spec, &fr).unwrap();
            assert_eq!(lo.mode, NormMode::LowerBound);
            assert!(lo.value <= ex.value * (1.0 + 1e-6), "r={r}: {} > {}", lo.value, ex.value);
        }
        // two well separated patches in one block: upper bound mode
        let mut two = bump_field([45.0, 0.0, 0.0], 0.125, 2.0, 1.0);
        two = add(&two, &bump_field([0.0, 45.0, 0.0], 0.125, 2.0, 1.0)).unwrap();
        let spec = BesovSpec::new(0.0, 4.0, 1.0).unwrap();
        let up = besov_norm(&two, &spec, &fr).unwrap();
        assert_eq!(up.mode, NormMode::UpperBound);
        let lo = besov_lower_bound(&two, &spec, &fr).unwrap();
        assert!(lo.value <= up.value);
    }

    #[test]
    fn psi_dual_norms() {
        // r' = 2 is Plancherel of χ(·/4)
        let chi = SmoothCutoff::new(CHI_INNER, CHI_OUTER).unwrap();
        let l2 = crate::quadrature::composite_gauss_legendre(0.0, 16.0 / 3.0, 400, 10, |s| 4.0 * PI * s * s * chi.eval(s / 4.0).powi(2));
        let want = ((2.0 * PI).powi(3) * l2).sqrt();
        assert!((psi0_dual_norm(2.0) - want).abs() < 1e-8 * want);
        assert!(psi0_dual_norm(8.0) > psi0_dual_norm(4.0));
        // ‖ψ₀‖₁ ≥ |∫ψ₀| = (2π)³
        assert!(psi0_dual_norm(f64::INFINITY) >= (2.0 * PI).powi(3));
    }

    #[test]
    fn ell_s_monotonicity() {
        let fr = make_lp_frame(-6, 8).unwrap();
        let f = add(&bump_field([6.0, 0.0, 0.0], 0.25, 2.0, 1.0), &bump_field([0.0, 30.0, 0.0], 0.25, 2.0, 0.5)).unwrap();
        let a = besov_norm(&f, &BesovSpec::new(0.3, 2.0, 1.0).unwrap(), &fr).unwrap();
        let b = besov_norm(&f, &BesovSpec::new(0.3, 2.0, 2.0).unwrap(), &fr).unwrap();
        let c = besov_norm(&f, &BesovSpec::new(0.3, 2.0, f64::INFINITY).unwrap(), &fr).unwrap();
        assert!(a.value >= b.value && b.value >= c.value);
    }

    #[test]
    fn chemin_lerner_examples() {
        let fr = make_lp_frame(-6, 8).unwrap();
        let f = bump_field([6.0, 1.0, 0.0], 0.25, 2.0, 1.0);
        let spec = BesovSpec::new(0.5, 2.0, 1.0).unwrap();
        let grid = TimeGrid::geometric_simpson(0.3, 4, 2);
        let samples = TimeSamples::from_fn(grid.clone(), |_| Ok(f.clone())).unwrap();
        let b = besov_norm(&f, &spec, &fr).unwrap().value;
        for rho in [1.0, 2.0, 3.5, f64::INFINITY] {
            let cl = chemin_lerner_norm(&samples, &TimeNormSpec::new(rho, spec, 0.3).unwrap(), &fr).unwrap();
            let want = if rho.is_infinite() { b } else { 0.3f64.powf(1.0 / rho) * b };
            assert!((cl.value - want).abs() < 1e-12 * want);
        }
        // ρ = s = 1 equals the time integral of the Besov norm
        let heat = TimeSamples::from_fn(grid.clone(), |t| heat_solution(&f, &PatchField::zero(1), 1.0, t)).unwrap();
        let cl = chemin_lerner_norm(&heat, &TimeNormSpec::new(1.0, spec, 0.3).unwrap(), &fr).unwrap();
        let pointwise: Vec<f64> = heat.fields.iter().map(|g| besov_norm(g, &spec, &fr).unwrap().value).collect();
        let integral = grid.integrate(&pointwise);
        assert!((cl.value - integral).abs() < 1e-12 * integral);
        let zero = TimeSamples::from_fn(grid, |_| Ok(PatchField::zero(1))).unwrap();
        assert_eq!(chemin_lerner_norm(&zero, &TimeNormSpec::new(2.0, spec, 0.3).unwrap(), &fr).unwrap().value, 0.0);
        assert!(TimeSamples::new(TimeGrid { horizon: 1.0, nodes: vec![], weights: vec![] }, vec![]).is_err());
    }

    fn rand_pair(seed: u64) -> (PatchField, PatchField) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (trial_field(&mut rng, 2, 0.25).unwrap(), trial_field(&mut rng, 2, 0.25).unwrap())
    }

    fn probe(rng: &mut ChaCha8Rng) -> Vec3 {
        [rng.gen_range(-12.0..12.0), rng.gen_range(-12.0..12.0), rng.gen_range(-12.0..12.0)]
    }

    #[test]
    fn bony_reconstruction() {
        let fr = harness_frame();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..3 {
            let (f, g) = rand_pair(seed);
            let sum = add(&add(&paraproduct(&f, &g, &fr).unwrap(), &paraproduct(&g, &f, &fr).unwrap()).unwrap(), &remainder(&f, &g, &fr).unwrap()).unwrap();
            let prod = multiply(&f, &g).unwrap();
            let scale = prod.component(0).iter().fold(0.0_f64, |m, p| m.max(p.max_abs()));
            for _ in 0..100 {
                let xi = probe(&mut rng);
                let d = (sum.evaluate(xi)[0] - prod.evaluate(xi)[0]).norm();
                assert!(d < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn paraproduct_properties() {
        let fr = harness_frame();
        let (f, g) = rand_pair(5);
        let alpha = Complex64::new(-1.7, 0.0);
        let a = paraproduct(&f.scale(alpha), &g, &fr).unwrap();
        let b = paraproduct(&f, &g, &fr).unwrap().scale(alpha);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let xi = probe(&mut rng);
            let (x, y) = (a.evaluate(xi)[0], b.evaluate(xi)[0]);
            assert!((x - y).norm() <= 1e-12 * y.norm().max(1e-3));
        }
        // f above every block of g: low-pass of f vanishes
        let high = bump_field([200.0, 0.0, 0.0], 0.25, 2.0, 1.0);
        let low = bump_field([3.0, 0.0, 0.0], 0.25, 1.0, 1.0);
        assert!(paraproduct(&high, &low, &fr).unwrap().is_empty());
        // remainder symmetry and separation
        let r1 = remainder(&f, &g, &fr).unwrap();
        let r2 = remainder(&g, &f, &fr).unwrap();
        for _ in 0..50 {
            let xi = probe(&mut rng);
            assert!((r1.evaluate(xi)[0] - r2.evaluate(xi)[0]).norm() < 1e-12);
        }
        assert!(remainder(&high, &low, &fr).unwrap().is_empty());
    }

    #[test]
    fn harness_hypotheses_are_enforced() {
        let p = HarnessParams { sigma1: 2.0, ..HarnessParams::default() };
        assert!(matches!(estimate_harness(Lemma::L2_6, &p), Err(Error::HypothesisViolation(_))));
        let p = HarnessParams { sigma: -1.0, ..HarnessParams::default() };
        assert!(estimate_harness(Lemma::L2_5, &p).is_err());
        let p = HarnessParams { r: 2.0, b: 4.0, ..HarnessParams::default() };
        assert!(estimate_harness(Lemma::L2_8ii, &p).is_err());
    }

    #[test]
    fn heat_harness_contracts_single_blocks() {
        let fr = harness_frame();
        let u0 = bump_field([4.0, 0.0, 0.0], 0.25, 1.0, 1.0);
        let p = HarnessParams { rho1: f64::INFINITY, ..HarnessParams::default() };
        let r = heat_ratio(&u0, &PatchField::zero(1), 1.0, &p, &fr).unwrap();
        assert!(r <= 1.0 + 1e-12 && r > 0.5, "{r}");
    }

    #[test]
    fn zero_trial_contributes_nothing() {
        let fr = harness_frame();
        let (f, _) = rand_pair(1);
        let z = PatchField::zero(1);
        assert_eq!(norm(&multiply(&f, &z).unwrap(), 0.5, 2.0, &fr).unwrap(), 0.0);
    }
}
