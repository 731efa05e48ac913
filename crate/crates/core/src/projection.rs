//! Projection of SL(2,ℝ) perturbations of a Schrödinger cocycle onto
//! Schrödinger form, and the gap-opening pipeline built on it.
//!
//! Localization uses a partition of unity transported along backward orbits:
//! with σ a bump supported in f(V) and equal to one on a plateau,
//!
//!   Ψ(x) = Π(Σ_m ρ_m(x)·P_m(x)),  ρ_m(x) = σ(f⁻ᵐx)·∏_{j<m}(1 − σ(f⁻ʲx)),
//!   P_m(x) = [A(f⁻¹x)⋯A(f⁻ᵐx)]·[B(f⁻¹x)⋯B(f⁻ᵐx)]⁻¹,
//!
//! so that Ψ(f(x))·B(x)·Ψ(x)⁻¹ = A(x) whenever x ∉ V, and Φ(B) is defined as
//! that product on V and as A elsewhere. The sum stops at the first backward
//! visit to the plateau, which happens within a bounded time by minimality.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basedyn::{BasePoint, BaseSystem, centered};
use crate::cocycle::{Cocycle, Conjugacy, OrbitTable, RealFn, UhCertificate, UhParams, uh_test};
use crate::error::{Error, Result, StageExt};
use crate::hypgeom::Mat2;
use crate::rigidity::{RigidityParams, UhApproximationReport, approximate_by_uh};
use crate::schrodinger::{Potential, schrodinger_cocycle};

/// Smallest |d| accepted by [`eta`].
pub const ETA_MIN_D: f64 = 1e-12;

/// Π(M) = (det M)^{−1/2}·M.
pub fn pi_normalize(m: &Mat2) -> Result<Mat2> {
    let det = m.det();
    if !(det > 0.0 && det.is_finite()) {
        return Err(Error::Degenerate(format!("Π needs a positive determinant, got {det}")));
    }
    Ok(m.scale(1.0 / det.sqrt()))
}

/// Parameters of three Schrödinger matrices S(t₁), S(t₂), S(t₃).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct STriple {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl STriple {
    /// S(t₃)·S(t₂)·S(t₁).
    pub fn product(&self) -> Mat2 {
        Mat2::schrodinger(self.t3) * Mat2::schrodinger(self.t2) * Mat2::schrodinger(self.t1)
    }
}

/// Inverse of (t₁, t₂, t₃) ↦ S(t₃)S(t₂)S(t₁) on matrices with d ≠ 0.
///
/// The product is (t₃(t₂t₁ − 1) − t₁, 1 − t₃t₂; t₂t₁ − 1, −t₂).
pub fn eta(m: &Mat2) -> Result<STriple> {
    if !(m.d.abs() > ETA_MIN_D) || !m.is_finite() {
        return Err(Error::Degenerate(format!(
            "matrix {m:?} is not a product of three Schrödinger matrices: |d| ≤ {ETA_MIN_D}"
        )));
    }
    Ok(STriple {
        t1: -(m.c + 1.0) / m.d,
        t2: -m.d,
        t3: (m.b - 1.0) / m.d,
    })
}

/// Open coordinate box on a torus base; `half[1] ≥ 0.5` spans the whole
/// second circle, and the second coordinate is ignored on the circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxWindow {
    pub center: [f64; 2],
    pub half: [f64; 2],
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

impl BoxWindow {
    pub fn interval(center: f64, half: f64) -> Self {
        BoxWindow {
            center: [center, 0.0],
            half: [half, 0.5],
        }
    }

    fn offsets(&self, base: &BaseSystem, x: &BasePoint) -> [f64; 2] {
        let c = base.coords(x);
        let dy = if base.is_two_dimensional() && self.half[1] < 0.5 {
            centered(c[1] - self.center[1]).abs()
        } else {
            0.0
        };
        [centered(c[0] - self.center[0]).abs(), dy]
    }

    pub fn contains(&self, base: &BaseSystem, x: &BasePoint) -> bool {
        let o = self.offsets(base, x);
        o[0] < self.half[0] && (o[1] < self.half[1] || self.half[1] >= 0.5)
    }

    /// Membership in the closed box.
    pub fn contains_closed(&self, base: &BaseSystem, x: &BasePoint) -> bool {
        let o = self.offsets(base, x);
        o[0] <= self.half[0] && (o[1] <= self.half[1] || self.half[1] >= 0.5)
    }

    /// C¹ piecewise-cubic bump: one where every offset is at most
    /// `plateau`·half, zero on the boundary and outside.
    pub fn profile(&self, base: &BaseSystem, x: &BasePoint, plateau: f64) -> f64 {
        let o = self.offsets(base, x);
        let ramp = |u: f64, h: f64| {
            if h >= 0.5 || u <= plateau * h {
                1.0
            } else if u >= h {
                0.0
            } else {
                smoothstep((h - u) / ((1.0 - plateau) * h))
            }
        };
        let ry = if base.is_two_dimensional() { ramp(o[1], self.half[1]) } else { 1.0 };
        ramp(o[0], self.half[0]) * ry
    }

    /// Closed box disjoint from its images under f and f²; decided on the
    /// first coordinate, which every built-in base rotates rigidly (and on
    /// the second one as well for a translation of 𝕋²).
    pub fn separated(&self, base: &BaseSystem) -> Result<bool> {
        let width = 2.0 * self.half[0];
        let apart = |shift: f64, w: f64| w < 1.0 && centered(shift).abs() > w;
        match *base {
            BaseSystem::Circle { alpha } | BaseSystem::SkewShift { alpha, .. } => {
                Ok((1..=2).all(|j| apart(j as f64 * alpha, width)))
            }
            BaseSystem::Torus { alpha } => {
                let height = if self.half[1] >= 0.5 { 1.0 } else { 2.0 * self.half[1] };
                Ok((1..=2).all(|j| apart(j as f64 * alpha[0], width) || apart(j as f64 * alpha[1], height)))
            }
            BaseSystem::Odometer { .. } => Err(Error::Input(
                "projection windows are coordinate boxes; the odometer is not supported".into(),
            )),
        }
    }

    /// Points of a `side`-per-axis lattice inside the closed box.
    fn lattice(&self, base: &BaseSystem, side: usize) -> Vec<BasePoint> {
        let side = side.max(2);
        let ys: Vec<f64> = if base.is_two_dimensional() {
            let h = self.half[1].min(0.5);
            (0..side).map(|j| self.center[1] - h + 2.0 * h * j as f64 / (side - 1) as f64).collect()
        } else {
            vec![0.0]
        };
        let mut out = Vec::new();
        for i in 0..side {
            let x = self.center[0] - self.half[0] + 2.0 * self.half[0] * i as f64 / (side - 1) as f64;
            for &y in &ys {
                out.push(base.point(x, y));
            }
        }
        out
    }
}

/// Window V with closure K, the plateau of the bump, and the backward
/// first-entry horizon measured on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedWindow {
    pub base: BaseSystem,
    pub window: BoxWindow,
    /// Fraction of each half-width on which the bump equals one.
    pub plateau: f64,
    /// Max over the grid of the first m ≥ 0 with σ(f⁻ᵐx) = 1.
    pub horizon: usize,
    /// Backward walks longer than this are reported as failures.
    pub cap: usize,
    pub grid: usize,
}

impl LocalizedWindow {
    pub fn new(base: BaseSystem, window: BoxWindow, plateau: f64, grid: usize) -> Result<Self> {
        if !(plateau > 0.0 && plateau < 1.0) {
            return Err(Error::Input(format!("plateau fraction must lie in (0, 1), got {plateau}")));
        }
        if !(window.half[0] > 0.0 && window.half[1] > 0.0) {
            return Err(Error::Input(format!("window {window:?} is empty")));
        }
        if !window.separated(&base)? {
            return Err(Error::Precondition(format!(
                "window {window:?} meets its image under f or f²"
            )));
        }
        let mut lw = LocalizedWindow {
            base,
            window,
            plateau,
            horizon: 0,
            cap: 1 << 22,
            grid,
        };
        let entries: Vec<Option<usize>> = base.grid(grid).par_iter().map(|x| lw.first_entry(x)).collect();
        if entries.iter().any(Option::is_none) {
            return Err(Error::Resolution(format!(
                "some backward orbit misses the plateau of {window:?} within {} steps",
                lw.cap
            )));
        }
        lw.horizon = entries.into_iter().flatten().max().unwrap_or(0);
        lw.cap = 16 * lw.horizon + 256;
        Ok(lw)
    }

    pub fn contains(&self, x: &BasePoint) -> bool {
        self.window.contains(&self.base, x)
    }

    /// σ(x): the bump of V read at f⁻¹(x), so supported in f(V).
    fn sigma_at_preimage(&self, pre: &BasePoint) -> f64 {
        self.window.profile(&self.base, pre, self.plateau)
    }

    fn first_entry(&self, x: &BasePoint) -> Option<usize> {
        let mut y = self.base.step(x, -1);
        (0..self.cap).find(|_| {
            let hit = self.sigma_at_preimage(&y) >= 1.0;
            y = self.base.step(&y, -1);
            hit
        })
    }
}

struct Localizer {
    a: Cocycle,
    b: Cocycle,
    lw: LocalizedWindow,
}

impl Localizer {
    /// (Ψ(x), ‖Σρ_mP_m − Id‖); NaN when the walk exceeds the cap.
    fn psi(&self, x: &BasePoint) -> (Mat2, f64) {
        let base = &self.lw.base;
        let mut y = *x;
        let mut pre = base.step(&y, -1);
        let mut sum = Mat2::new(0.0, 0.0, 0.0, 0.0);
        let mut rest = 1.0;
        let mut pa = Mat2::IDENTITY;
        let mut pb = Mat2::IDENTITY;
        let mut exact = true;
        for m in 0..=self.lw.cap {
            if m > 0 {
                let (am, bm) = (self.a.eval(&y), self.b.eval(&y));
                exact &= am == bm;
                pa = pa * am;
                pb = pb * bm;
            }
            let sigma = self.lw.sigma_at_preimage(&pre);
            if sigma > 0.0 {
                let p = if exact { Mat2::IDENTITY } else { pa * pb.inv() };
                sum = sum.add(&p.scale(rest * sigma));
                rest *= 1.0 - sigma;
            }
            if sigma >= 1.0 {
                if exact {
                    return (Mat2::IDENTITY, 0.0);
                }
                let dev = sum.dist(&Mat2::IDENTITY);
                return match pi_normalize(&sum) {
                    Ok(p) => (p, dev),
                    Err(_) => (Mat2::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN), f64::INFINITY),
                };
            }
            y = pre;
            pre = base.step(&y, -1);
        }
        (Mat2::new(f64::NAN, f64::NAN, f64::NAN, f64::NAN), f64::INFINITY)
    }

    fn phi(&self, x: &BasePoint) -> Mat2 {
        if !self.lw.contains(x) {
            return self.a.eval(x);
        }
        let fx = self.lw.base.step(x, 1);
        self.psi(&fx).0 * self.b.eval(x) * self.psi(x).0.inv()
    }
}

/// Grid verification of a conjugacy Ψ(f(x))·B(x)·Ψ(x)⁻¹ = Φ(B)(x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub points: usize,
    /// max ‖Ψ(f(x))B(x)Ψ(x)⁻¹ − Φ(B)(x)‖.
    pub identity_residual: f64,
    /// max ‖B − A‖ over the grid.
    pub input_distance: f64,
    /// max ‖Φ(B) − A‖ over the grid.
    pub output_distance: f64,
    /// max ‖Ψ − Id‖.
    pub conjugacy_distance: f64,
    /// Φ(B)(x) and A(x) are bitwise equal at every grid point off the
    /// documented support.
    pub off_support_exact: bool,
    pub support_points: usize,
}

fn conjugacy_report(
    base: &BaseSystem,
    grid: usize,
    a: &Cocycle,
    b: &Cocycle,
    phi: &Cocycle,
    psi: &Conjugacy,
    support: &(dyn Fn(&BasePoint) -> bool + Sync),
) -> ConjugacyReport {
    let rows: Vec<(f64, f64, f64, f64, bool, bool)> = base
        .grid(grid)
        .par_iter()
        .map(|x| {
            let (ax, bx, px) = (a.eval(x), b.eval(x), phi.eval(x));
            let lhs = psi.eval(&base.step(x, 1)) * bx * psi.eval(x).inv();
            let inside = support(x);
            let r = lhs.dist(&px);
            (
                if r.is_nan() { f64::INFINITY } else { r },
                bx.dist(&ax),
                px.dist(&ax),
                psi.eval(x).dist(&Mat2::IDENTITY),
                inside,
                inside || px == ax,
            )
        })
        .collect();
    let max = |k: fn(&(f64, f64, f64, f64, bool, bool)) -> f64| rows.iter().map(k).fold(0.0, f64::max);
    ConjugacyReport {
        points: rows.len(),
        identity_residual: max(|r| r.0),
        input_distance: max(|r| r.1),
        output_distance: max(|r| r.2),
        conjugacy_distance: max(|r| r.3),
        off_support_exact: rows.iter().all(|r| r.5),
        support_points: rows.iter().filter(|r| r.4).count(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizeReport {
    pub window: LocalizedWindow,
    /// max ‖Σρ_mP_m − Id‖ on the grid, and the admissibility bound.
    pub deviation: f64,
    pub admissible: f64,
    pub check: ConjugacyReport,
}

#[derive(Clone)]
pub struct Localization {
    /// Equal to A outside V.
    pub phi: Cocycle,
    pub psi: Conjugacy,
    pub report: LocalizeReport,
}

/// Conservative fraction of the unit ball around Id in which Π is applied.
pub const ADMISSIBLE_DEVIATION: f64 = 0.25;

/// B ↦ (Φ(B), Ψ(B)) with Φ(B) = A off V and Ψ(B)(f(x))B(x)Ψ(B)(x)⁻¹ = Φ(B)(x).
pub fn localize(a: &Cocycle, window: &LocalizedWindow, b: &Cocycle, verify_grid: usize) -> Result<Localization> {
    let base = window.base;
    if a.base() != &base || b.base() != &base {
        return Err(Error::Input("cocycles and window live on different bases".into()));
    }
    let loc = Arc::new(Localizer {
        a: a.clone(),
        b: b.clone(),
        lw: window.clone(),
    });
    let deviation = base
        .grid(verify_grid)
        .par_iter()
        .map(|x| loc.psi(x).1)
        .fold(|| 0.0, f64::max)
        .reduce(|| 0.0, f64::max);
    if !(deviation <= ADMISSIBLE_DEVIATION) {
        return Err(Error::Budget(format!(
            "‖B − A‖ exceeds the admissibility radius: deviation {deviation:.3e} > {ADMISSIBLE_DEVIATION} \
             (margin {:.3e})",
            ADMISSIBLE_DEVIATION - deviation
        )));
    }
    let phi = {
        let loc = loc.clone();
        Cocycle::from_fn(base, "localized perturbation", move |x| loc.phi(x))
    };
    let psi = {
        let loc = loc.clone();
        Conjugacy::genuine(base, "localizing conjugacy", move |x| loc.psi(x).0)
    };
    let lw = window.clone();
    let check = conjugacy_report(&base, verify_grid, a, b, &phi, &psi, &move |x| lw.contains(x));
    Ok(Localization {
        phi,
        psi,
        report: LocalizeReport {
            window: window.clone(),
            deviation,
            admissible: ADMISSIBLE_DEVIATION,
            check,
        },
    })
}

/// S-form check: (t, −1; 1, 0) up to the value of t.
pub fn is_schrodinger_form(m: &Mat2) -> bool {
    m.b == -1.0 && m.c == 1.0 && m.d == 0.0 && m.a.is_finite()
}

struct Projector {
    a: Cocycle,
    b: Cocycle,
    k: BoxWindow,
    base: BaseSystem,
}

impl Projector {
    /// (t₁, t₂, t₃) at z ∈ K, read off A(f(z))·B(z)·A(f⁻¹(z)).
    fn triple(&self, z: &BasePoint) -> Result<STriple> {
        let (prev, next) = (self.base.step(z, -1), self.base.step(z, 1));
        let (ap, an) = (self.a.eval(&prev), self.a.eval(&next));
        eta(&(an * self.b.eval(z) * ap))
    }

    fn t(&self, x: &BasePoint) -> f64 {
        let base = &self.base;
        // Where B(z) = A(z) the orbit segment is untouched; reading A at x
        // itself avoids the rounding of f(f⁻¹(x)).
        let pick = |z: BasePoint, f: fn(&STriple) -> f64| {
            if self.unperturbed(&z) {
                return self.a.eval(x).a;
            }
            self.triple(&z).map(|t| f(&t)).unwrap_or(f64::NAN)
        };
        if self.k.contains_closed(base, x) {
            return pick(*x, |t| t.t2);
        }
        let next = base.step(x, 1);
        if self.k.contains_closed(base, &next) {
            return pick(next, |t| t.t1);
        }
        let prev = base.step(x, -1);
        if self.k.contains_closed(base, &prev) {
            return pick(prev, |t| t.t3);
        }
        self.a.eval(x).a
    }

    fn phi(&self, x: &BasePoint) -> Mat2 {
        Mat2::schrodinger(self.t(x))
    }

    /// Id off K ∪ f(K); Φ(f⁻¹z)A(f⁻¹z)⁻¹ on K; Φ(z)⁻¹A(z) on f(K).
    fn psi(&self, x: &BasePoint) -> Mat2 {
        let base = &self.base;
        if self.k.contains_closed(base, x) {
            if self.unperturbed(x) {
                return Mat2::IDENTITY;
            }
            let prev = base.step(x, -1);
            return self.phi(&prev) * self.a.eval(&prev).inv();
        }
        let prev = base.step(x, -1);
        if self.k.contains_closed(base, &prev) {
            if self.unperturbed(&prev) {
                return Mat2::IDENTITY;
            }
            return self.phi(x).inv() * self.a.eval(x);
        }
        Mat2::IDENTITY
    }

    fn unperturbed(&self, z: &BasePoint) -> bool {
        self.b.eval(z) == self.a.eval(z)
    }

    fn in_support(&self, x: &BasePoint) -> bool {
        let base = &self.base;
        [-1, 0, 1].iter().any(|&j| self.k.contains_closed(base, &base.step(x, j)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub window: BoxWindow,
    /// min |tr A| over a lattice of K.
    pub min_trace: f64,
    /// min |d| of A(f(z))B(z)A(f⁻¹(z)) over the same lattice.
    pub min_d: f64,
    /// Every grid value of Φ(B) has the form (t, −1; 1, 0).
    pub s_form: bool,
    pub check: ConjugacyReport,
}

#[derive(Clone)]
pub struct Projection {
    /// S-valued, equal to A off f⁻¹(K) ∪ K ∪ f(K).
    pub phi: Cocycle,
    pub psi: Conjugacy,
    /// The parameter t of Φ(B)(x) = S(t(x)).
    pub t: RealFn,
    pub report: ProjectionReport,
}

fn s_valued(a: &Cocycle, grid: usize) -> bool {
    a.base().grid(grid).iter().all(|x| is_schrodinger_form(&a.eval(x)))
}

/// S-valued replacement of a perturbation B of the S-valued A supported in
/// the closed box K.
pub fn schrodinger_project(a: &Cocycle, k: &BoxWindow, b: &Cocycle, verify_grid: usize) -> Result<Projection> {
    let base = *a.base();
    if b.base() != &base {
        return Err(Error::Input("cocycles live on different bases".into()));
    }
    if !k.separated(&base)? {
        return Err(Error::Precondition(format!("window {k:?} meets its image under f or f²")));
    }
    if !s_valued(a, verify_grid.min(4096)) {
        return Err(Error::Precondition("the unperturbed cocycle is not in Schrödinger form".into()));
    }
    let side = if base.is_two_dimensional() { 64 } else { 2048 };
    let lattice = k.lattice(&base, side);
    let min_trace = lattice.iter().map(|z| a.eval(z).trace().abs()).fold(f64::INFINITY, f64::min);
    if !(min_trace > ETA_MIN_D) {
        return Err(Error::Precondition(format!("tr A vanishes on the window {k:?}")));
    }
    let outside = base
        .grid(verify_grid)
        .into_par_iter()
        .find_any(|x| !k.contains_closed(&base, x) && b.eval(x) != a.eval(x));
    if let Some(x) = outside {
        return Err(Error::Precondition(format!("B differs from A at {x:?}, outside the window")));
    }
    let proj = Arc::new(Projector {
        a: a.clone(),
        b: b.clone(),
        k: *k,
        base,
    });
    let min_d = lattice
        .par_iter()
        .map(|z| {
            let (prev, next) = (base.step(z, -1), base.step(z, 1));
            (a.eval(&next) * b.eval(z) * a.eval(&prev)).d.abs()
        })
        .reduce(|| f64::INFINITY, f64::min);
    if !(min_d > ETA_MIN_D) {
        return Err(Error::Degenerate(format!(
            "η undefined on the window (min |d| = {min_d:.3e}); shrink the perturbation"
        )));
    }
    let t = {
        let p = proj.clone();
        RealFn::custom(move |x| p.t(x))
    };
    let phi = {
        let p = proj.clone();
        Cocycle::from_fn(base, "projected Schrödinger cocycle", move |x| p.phi(x))
    };
    let psi = {
        let p = proj.clone();
        Conjugacy::genuine(base, "projecting conjugacy", move |x| p.psi(x))
    };
    let support = {
        let p = proj.clone();
        move |x: &BasePoint| p.in_support(x)
    };
    let check = conjugacy_report(&base, verify_grid, a, b, &phi, &psi, &support);
    let s_form = s_valued(&phi, verify_grid);
    Ok(Projection {
        phi,
        psi,
        t,
        report: ProjectionReport {
            window: *k,
            min_trace,
            min_d,
            s_form,
            check,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceZeroReport {
    pub changed: bool,
    pub window: Option<BoxWindow>,
    pub amplitude: f64,
    /// max ‖Ã − A‖.
    pub distance: f64,
    /// max ‖B(f(x))A(x)B(x)⁻¹ − Ã(x)‖.
    pub residual: f64,
    /// max |tr Ã(z) + tr Ã(f²(z))| over V.
    pub balance: f64,
    pub points: usize,
}

#[derive(Clone)]
pub struct TraceZeroFix {
    /// S-valued, with nonzero trace on the plateau of V.
    pub perturbed: Cocycle,
    /// The parameter of the perturbed Schrödinger matrices.
    pub t: RealFn,
    pub conjugacy: Conjugacy,
    pub report: TraceZeroReport,
}

/// For S-valued A with tr A ≡ 0: an S-valued Ã = S(s), s = τ·bump on V and
/// −τ·bump∘f⁻² on f²(V), with B(f(x))A(x)B(x)⁻¹ = Ã(x) for B = Ã(f⁻¹x)R_{−π/2}
/// on f(V), R_{−π/2}Ã(f⁻²x) on f²(V) and Id elsewhere.
pub fn trace_zero_fix(
    a: &Cocycle,
    window: &BoxWindow,
    amplitude: f64,
    plateau: f64,
    verify_grid: usize,
) -> Result<TraceZeroFix> {
    let base = *a.base();
    if !s_valued(a, verify_grid.min(4096)) {
        return Err(Error::Precondition("the cocycle is not in Schrödinger form".into()));
    }
    let traceless = base.grid(verify_grid).iter().all(|x| a.eval(x).a == 0.0);
    if !traceless {
        return Ok(TraceZeroFix {
            perturbed: a.clone(),
            t: {
                let a = a.clone();
                RealFn::custom(move |x| a.eval(x).a)
            },
            conjugacy: Conjugacy::identity(base),
            report: TraceZeroReport {
                changed: false,
                window: None,
                amplitude: 0.0,
                distance: 0.0,
                residual: 0.0,
                balance: 0.0,
                points: 0,
            },
        });
    }
    if !window.separated(&base)? {
        return Err(Error::Precondition(format!(
            "no admissible window: {window:?} meets its image under f or f²"
        )));
    }
    if !(amplitude.is_finite() && amplitude != 0.0) {
        return Err(Error::Input(format!("amplitude must be finite and nonzero, got {amplitude}")));
    }
    let w = *window;
    let s = Arc::new(move |x: &BasePoint| {
        if w.contains(&base, x) {
            amplitude * w.profile(&base, x, plateau)
        } else {
            let back = base.step(x, -2);
            if w.contains(&base, &back) {
                -amplitude * w.profile(&base, &back, plateau)
            } else {
                0.0
            }
        }
    });
    let tilde = {
        let s = s.clone();
        move |x: &BasePoint| Mat2::schrodinger(s(x))
    };
    let quarter = Mat2::rotation(-FRAC_PI_2);
    let conj = {
        let tilde = tilde.clone();
        move |x: &BasePoint| {
            let back1 = base.step(x, -1);
            if w.contains(&base, &back1) {
                return tilde(&back1) * quarter;
            }
            let back2 = base.step(x, -2);
            if w.contains(&base, &back2) {
                return quarter * tilde(&back2);
            }
            Mat2::IDENTITY
        }
    };
    let perturbed = Cocycle::from_fn(base, "trace-balanced Schrödinger cocycle", tilde.clone());
    let conjugacy = Conjugacy::genuine(base, "trace-zero conjugacy", conj.clone());
    let rows: Vec<(f64, f64, f64)> = base
        .grid(verify_grid)
        .par_iter()
        .map(|x| {
            let (ax, tx) = (a.eval(x), tilde(x));
            let lhs = conj(&base.step(x, 1)) * ax * conj(x).inv();
            let balance = if w.contains(&base, x) {
                (tx.trace() + tilde(&base.step(x, 2)).trace()).abs()
            } else {
                0.0
            };
            (tx.dist(&ax), lhs.dist(&tx), balance)
        })
        .collect();
    let max = |k: fn(&(f64, f64, f64)) -> f64| rows.iter().map(k).fold(0.0, f64::max);
    let report = TraceZeroReport {
        changed: true,
        window: Some(w),
        amplitude,
        distance: max(|r| r.0),
        residual: max(|r| r.1),
        balance: max(|r| r.2),
        points: rows.len(),
    };
    let t = {
        let s = s.clone();
        RealFn::custom(move |x| s(x))
    };
    Ok(TraceZeroFix {
        perturbed,
        t,
        conjugacy,
        report,
    })
}

/// Largest separated window half-width along the first coordinate, scaled
/// by `fill` < 1.
pub fn max_half_width(base: &BaseSystem, fill: f64) -> Result<f64> {
    let alpha = match *base {
        BaseSystem::Circle { alpha } | BaseSystem::SkewShift { alpha, .. } => alpha,
        BaseSystem::Torus { alpha } => alpha[0],
        BaseSystem::Odometer { .. } => {
            return Err(Error::Input("gap opening is not supported over the odometer".into()));
        }
    };
    let gap = (1..=2).map(|j| centered(j as f64 * alpha).abs()).fold(f64::INFINITY, f64::min);
    Ok(0.5 * gap * fill)
}

/// The box maximizing min|tr A|·area among a family of candidates.
pub fn choose_window(a: &Cocycle, fill: f64) -> Result<(BoxWindow, f64)> {
    let base = *a.base();
    let h = max_half_width(&base, fill)?;
    let heights: &[f64] = if base.is_two_dimensional() { &[0.5, 0.25, 0.2, 0.15, 0.1, 0.05] } else { &[0.5] };
    let centers = 64;
    let mut candidates = Vec::new();
    for hx in [h, 0.5 * h] {
        for &hy in heights {
            let ny = if hy >= 0.5 || !base.is_two_dimensional() { 1 } else { centers };
            for i in 0..centers {
                for j in 0..ny {
                    candidates.push(BoxWindow {
                        center: [i as f64 / centers as f64, j as f64 / ny as f64],
                        half: [hx, hy],
                    });
                }
            }
        }
    }
    let side = if base.is_two_dimensional() { 16 } else { 128 };
    let scored: Vec<(f64, f64, BoxWindow)> = candidates
        .par_iter()
        .map(|w| {
            let m = w.lattice(&base, side).iter().map(|z| a.eval(z).trace().abs()).fold(f64::INFINITY, f64::min);
            (m * w.half[0] * w.half[1].min(0.5), m, *w)
        })
        .collect();
    let best = scored
        .into_iter()
        .filter(|s| s.1 > 0.0)
        .max_by(|p, q| p.0.total_cmp(&q.0))
        .ok_or_else(|| Error::Precondition("tr A vanishes on every candidate window".into()))?;
    Ok((best.2, best.1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GapParams {
    pub rigidity: RigidityParams,
    /// First δ₀ handed to approximate_by_uh; later rounds rescale it by the
    /// observed ratio ‖V′ − V‖/δ₀.
    pub delta0: f64,
    pub max_rounds: usize,
    pub plateau: f64,
    /// Fraction of the largest separated width used by the window.
    pub fill: f64,
    /// Samples of the exported patch along each coordinate.
    pub samples: [usize; 2],
    /// Orbit length and points per vertical line of the table standing in
    /// for the uniformly hyperbolic approximation downstream.
    pub table: [usize; 2],
    /// Points at which the table is compared with the exact approximation.
    pub table_check: usize,
    pub verify_grid: usize,
    /// Amplitude of the trace-zero workaround, as a fraction of ε.
    pub trace_fraction: f64,
}

impl Default for GapParams {
    fn default() -> Self {
        GapParams {
            rigidity: RigidityParams {
                verify_grid: 2000,
                ..RigidityParams::default()
            },
            delta0: 0.01,
            max_rounds: 4,
            plateau: 0.6,
            fill: 0.8,
            samples: [1 << 16, 512],
            table: [1 << 16, 64],
            table_check: 256,
            verify_grid: 10_000,
            trace_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRound {
    pub delta0: f64,
    pub approximation: UhApproximationReport,
    /// Largest gap between orbit lines of the table, max ‖B̂ − B‖ at the
    /// check points, and the certificate of the tabulated B̂.
    pub table_gap: f64,
    pub table_error: f64,
    pub table_certificate: UhCertificate,
    pub localize: LocalizeReport,
    pub projection: ProjectionReport,
    /// max over the patch nodes of |V′ − V|, which is ‖V′ − V‖_∞ for the
    /// interpolated patch.
    pub achieved: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapReport {
    pub energy: f64,
    pub epsilon: f64,
    pub already_in_gap: bool,
    pub window: Option<BoxWindow>,
    pub trace_fix: Option<TraceZeroReport>,
    pub rounds: Vec<GapRound>,
    pub achieved: f64,
    pub within_budget: bool,
    /// Certificate of (f, A_{E,V′}) and its rerun with every N doubled.
    pub certificate: UhCertificate,
    pub doubled: UhCertificate,
    pub params: GapParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapOpening {
    /// V′ = V + sampled patch (bilinear interpolation on the patch grid).
    pub potential: Potential,
    pub report: GapReport,
}

fn doubled(p: &UhParams) -> UhParams {
    UhParams {
        n_start: 2 * p.n_start,
        n_max: 2 * p.n_max,
        ..*p
    }
}

/// Second coordinates of check points, spread by the golden ratio.
fn frac_golden(k: usize) -> f64 {
    crate::basedyn::frac(k as f64 * crate::basedyn::GOLDEN)
}

/// Tabulated V′ − V on the patch grid: values of E − t − V at the nodes,
/// zero away from the support.
fn patch(
    base: &BaseSystem,
    v: &Potential,
    energy: f64,
    t: &RealFn,
    support: &(dyn Fn(&BasePoint) -> bool + Sync),
    samples: [usize; 2],
) -> (RealFn, f64) {
    let nx = samples[0].max(2);
    let ny = if base.is_two_dimensional() { samples[1].max(2) } else { 1 };
    let values: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let x = base.point((k / ny) as f64 / nx as f64, (k % ny) as f64 / ny as f64);
            if support(&x) {
                let d = energy - t.value(base, &x) - v.value(base, &x);
                if d.is_nan() { f64::INFINITY } else { d }
            } else {
                0.0
            }
        })
        .collect();
    let sup = values.iter().map(|d| d.abs()).fold(0.0, f64::max);
    (RealFn::Grid { nx, ny, values }, sup)
}

/// Opens a gap at `energy` by a potential perturbation of sup norm < ε:
/// approximate_by_uh on A_{E,V}, localization to a window, projection to
/// Schrödinger form and read-back V′ = E − t, with the UH certificate of
/// the exported V′ at E and its rerun with every N doubled.
pub fn open_gap(base: BaseSystem, v: &Potential, energy: f64, epsilon: f64, params: &GapParams) -> Result<GapOpening> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Input(format!("potential budget must be positive, got {epsilon}")));
    }
    let a = schrodinger_cocycle(base, v, energy);
    let initial = uh_test(&a, &params.rigidity.uh).stage("initial certificate")?;
    if initial.is_uh() {
        let doubled_cert = uh_test(&a, &doubled(&params.rigidity.uh)).stage("doubled certificate")?;
        return Ok(GapOpening {
            potential: v.clone(),
            report: GapReport {
                energy,
                epsilon,
                already_in_gap: true,
                window: None,
                trace_fix: None,
                rounds: Vec::new(),
                achieved: 0.0,
                within_budget: true,
                certificate: initial,
                doubled: doubled_cert,
                params: params.clone(),
            },
        });
    }
    let h = max_half_width(&base, params.fill)?;
    let fix = trace_zero_fix(&a, &BoxWindow::interval(0.0, h), params.trace_fraction * epsilon, params.plateau, params.verify_grid)
        .stage("trace-zero workaround")?;
    let fixed = fix.report.changed;
    // The perturbed Schrödinger cocycle A₁ all later stages start from.
    let a1 = fix.perturbed.clone();
    let (window, _) = choose_window(&a1, params.fill).stage("window")?;
    let lw = LocalizedWindow::new(base, window, params.plateau, params.verify_grid).stage("window")?;
    let support = move |x: &BasePoint| {
        [-1, 0, 1].iter().any(|&j| window.contains_closed(&base, &base.step(x, j)))
            || (fixed && [0, 2].iter().any(|&j| BoxWindow::interval(0.0, h).contains(&base, &base.step(x, -j))))
    };
    let mut delta0 = params.delta0;
    let mut rounds = Vec::new();
    let mut best: Option<(f64, RealFn, f64)> = None;
    for _ in 0..params.max_rounds.max(1) {
        let approx = approximate_by_uh(&a, delta0, &params.rigidity).stage("uniformly hyperbolic approximation")?;
        if !approx.report.within_budget {
            return Err(Error::Budget(format!(
                "the uniformly hyperbolic approximation misses δ₀ = {delta0:.3e} (achieved {:.3e}, drag winding {:?})",
                approx.report.achieved, approx.report.k
            ))
            .at("uniformly hyperbolic approximation"));
        }
        let lambda = approx.report.lambda.unwrap_or(1.0);
        // Carry the approximation through the trace-zero conjugacy.
        let b0 = if fixed {
            let (c, p) = (fix.conjugacy.clone(), approx.perturbed.clone());
            Cocycle::from_fn(base, "transported approximation", move |x| {
                c.eval(&base.step(x, 1)) * p.eval(x) * c.eval(x).inv()
            })
        } else {
            approx.perturbed.clone()
        };
        let table = OrbitTable::build(&b0, params.table[0], params.table[1]).stage("orbit table")?;
        let table_gap = table.max_gap();
        let check_points: Vec<BasePoint> = (0..params.table_check)
            .map(|k| {
                let u = (k as f64 + 0.5) / params.table_check as f64;
                base.point(u, frac_golden(k))
            })
            .collect();
        let table_error = check_points
            .par_iter()
            .map(|x| table.eval(x).dist(&b0.eval(x)))
            .reduce(|| 0.0, f64::max);
        if !(table_error < delta0) {
            return Err(Error::Resolution(format!(
                "orbit table of {} steps misses the approximation by {table_error:.3e} ≥ δ₀ = {delta0:.3e} \
                 (drag winding {:?}); use a longer table",
                params.table[0], approx.report.k
            )));
        }
        let spread = approx.report.samples.iter().map(|s| s.b.norm() * s.b.norm()).fold(1.0, f64::max);
        let b_hat = table.cocycle("tabulated approximation");
        let table_certificate = uh_test(&b_hat, &params.rigidity.uh.for_rate(lambda.ln(), spread)).stage("table certificate")?;
        let loc = localize(&a1, &lw, &b_hat, params.verify_grid).stage("localize")?;
        let proj = schrodinger_project(&a1, &window, &loc.phi, params.verify_grid).stage("Schrödinger projection")?;
        let (grid, achieved) = patch(&base, v, energy, &proj.t, &support, params.samples);
        rounds.push(GapRound {
            delta0,
            approximation: approx.report.clone(),
            table_gap,
            table_error,
            table_certificate,
            localize: loc.report.clone(),
            projection: proj.report.clone(),
            achieved,
        });
        if best.as_ref().is_none_or(|b| achieved < b.0) {
            best = Some((achieved, grid, lambda));
        }
        if achieved < epsilon {
            break;
        }
        let ratio = if achieved.is_finite() { 0.7 * epsilon / achieved } else { 0.25 };
        delta0 *= ratio.clamp(0.05, 0.5);
    }
    let (achieved, grid, lambda) = best.ok_or_else(|| Error::Internal("no rounds ran".into()))?;
    let field = RealFn::Sum {
        parts: vec![v.field.clone(), grid],
    };
    let potential = Potential::new(format!("{} + gap patch at E = {energy}", v.name), field);
    let a_new = schrodinger_cocycle(base, &potential, energy);
    let spread = rounds
        .iter()
        .map(|r| r.approximation.samples.iter().map(|s| s.b.norm() * s.b.norm()).fold(1.0, f64::max))
        .fold(1.0, f64::max);
    // Localization and projection add a bounded frame change on top.
    let uh = params.rigidity.uh.for_rate(lambda.ln(), 4.0 * spread);
    let certificate = uh_test(&a_new, &uh).stage("certificate")?;
    let doubled_cert = uh_test(&a_new, &doubled(&uh)).stage("doubled certificate")?;
    Ok(GapOpening {
        potential,
        report: GapReport {
            energy,
            epsilon,
            already_in_gap: false,
            window: Some(window),
            trace_fix: fixed.then(|| fix.report.clone()),
            rounds,
            achieved,
            within_budget: achieved < epsilon,
            certificate,
            doubled: doubled_cert,
            params: params.clone(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basedyn::GOLDEN;

    #[test]
    fn eta_worked_example() {
        let t = eta(&Mat2::new(2.0, -5.0, 1.0, -2.0)).unwrap();
        assert_eq!((t.t1, t.t2, t.t3), (1.0, 2.0, 3.0));
    }

    #[test]
    fn schrodinger_matrix_is_outside_the_domain() {
        assert!(eta(&Mat2::schrodinger(0.7)).is_err());
    }

    #[test]
    fn profile_is_one_on_plateau_and_zero_at_edge() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        let w = BoxWindow::interval(0.5, 0.1);
        assert_eq!(w.profile(&base, &BasePoint::Circle(0.53), 0.5), 1.0);
        // 0.6 − 0.5 rounds to just below the half-width.
        assert!(w.profile(&base, &BasePoint::Circle(0.6), 0.5) < 1e-20);
        assert_eq!(w.profile(&base, &BasePoint::Circle(0.61), 0.5), 0.0);
        assert_eq!(w.profile(&base, &BasePoint::Circle(0.39), 0.5), 0.0);
        let mid = w.profile(&base, &BasePoint::Circle(0.575), 0.5);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn separation_uses_both_shifts() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        // ‖α‖ ≈ 0.382, ‖2α‖ ≈ 0.236.
        assert!(BoxWindow::interval(0.0, 0.11).separated(&base).unwrap());
        assert!(!BoxWindow::interval(0.0, 0.13).separated(&base).unwrap());
    }
}
