//! Cocycles over the base systems: evaluation, iteration, growth diagnostics,
//! conjugation, winding numbers and the fibered rotation number.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basedyn::{BasePoint, BaseSystem, centered, frac};
use crate::error::{Error, Result};
use crate::hypgeom::{Mat2, RENORM_EVERY, polar_decompose, retract_angle};

/// Iterate count accepted by [`Cocycle::iterate`].
pub const MAX_ITERATE: i64 = 10_000_000;
/// Norms are rescaled into a logarithmic counter beyond this size.
const SCALE_LIMIT: f64 = 1e150;
/// Samples used for angle continuation along loops.
pub const LOOP_SAMPLES: usize = 1 << 12;

/// A real function on the base.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &BasePoint) -> f64;
}

impl<F: Fn(&BasePoint) -> f64 + Send + Sync> ScalarField for F {
    fn value(&self, x: &BasePoint) -> f64 {
        self(x)
    }
}

/// A matrix-valued function on the base.
pub trait MatField: Send + Sync {
    fn value(&self, x: &BasePoint) -> Mat2;
}

impl<F: Fn(&BasePoint) -> Mat2 + Send + Sync> MatField for F {
    fn value(&self, x: &BasePoint) -> Mat2 {
        self(x)
    }
}

/// `amp · cos(2π(kx·x + ky·y) + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amp: f64,
    pub kx: i64,
    #[serde(default)]
    pub ky: i64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone)]
pub struct CustomFn(pub Arc<dyn Fn(&BasePoint) -> f64 + Send + Sync>);

impl fmt::Debug for CustomFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomFn")
    }
}

/// Evaluable real function on the base coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RealFn {
    Constant { value: f64 },
    Trig { terms: Vec<TrigTerm> },
    /// Periodic bilinear interpolation of `values[i·ny + j]` sampled at
    /// (i/nx, j/ny).
    Grid { nx: usize, ny: usize, values: Vec<f64> },
    /// Values indexed by an odometer point modulo the table length.
    Table { values: Vec<f64> },
    /// Pointwise sum, e.g. a closed-form potential plus a sampled patch.
    Sum { parts: Vec<RealFn> },
    #[serde(skip)]
    Custom(CustomFn),
}

impl RealFn {
    pub fn constant(value: f64) -> Self {
        RealFn::Constant { value }
    }

    pub fn cos(amp: f64, kx: i64, ky: i64) -> Self {
        RealFn::Trig {
            terms: vec![TrigTerm { amp, kx, ky, phase: 0.0 }],
        }
    }

    pub fn sin(amp: f64, kx: i64, ky: i64) -> Self {
        RealFn::Trig {
            terms: vec![TrigTerm {
                amp,
                kx,
                ky,
                phase: -0.5 * PI,
            }],
        }
    }

    pub fn custom(f: impl Fn(&BasePoint) -> f64 + Send + Sync + 'static) -> Self {
        RealFn::Custom(CustomFn(Arc::new(f)))
    }

    /// Sum of two trigonometric polynomials (or constants); other shapes are
    /// combined pointwise.
    pub fn plus(&self, other: &RealFn, base: BaseSystem) -> RealFn {
        match (self, other) {
            (RealFn::Constant { value: a }, RealFn::Constant { value: b }) => RealFn::constant(a + b),
            (RealFn::Trig { terms: a }, RealFn::Trig { terms: b }) => RealFn::Trig {
                terms: a.iter().chain(b.iter()).copied().collect(),
            },
            (RealFn::Trig { terms }, RealFn::Constant { value })
            | (RealFn::Constant { value }, RealFn::Trig { terms }) => {
                let mut terms = terms.clone();
                terms.push(TrigTerm {
                    amp: *value,
                    kx: 0,
                    ky: 0,
                    phase: 0.0,
                });
                RealFn::Trig { terms }
            }
            (RealFn::Custom(_), _) | (_, RealFn::Custom(_)) => {
                let (a, b) = (self.clone(), other.clone());
                RealFn::custom(move |x| a.value(&base, x) + b.value(&base, x))
            }
            _ => RealFn::Sum {
                parts: vec![self.clone(), other.clone()],
            },
        }
    }

    pub fn value(&self, base: &BaseSystem, x: &BasePoint) -> f64 {
        match self {
            RealFn::Constant { value } => *value,
            RealFn::Trig { terms } => {
                let c = base.coords(x);
                terms
                    .iter()
                    .map(|t| {
                        let arg = centered(t.kx as f64 * c[0] + t.ky as f64 * c[1]);
                        t.amp * (TAU * arg + t.phase).cos()
                    })
                    .sum()
            }
            RealFn::Grid { nx, ny, values } => {
                let c = base.coords(x);
                grid_interpolate(*nx, *ny, values, c)
            }
            RealFn::Table { values } => match *x {
                BasePoint::Odometer(k) => values[(k % values.len() as u64) as usize],
                _ => {
                    let c = base.coords(x);
                    grid_interpolate(values.len(), 1, values, c)
                }
            },
            RealFn::Sum { parts } => parts.iter().map(|p| p.value(base, x)).sum(),
            RealFn::Custom(f) => (f.0)(x),
        }
    }

    /// Is the function constant, and if so its value.
    pub fn as_constant(&self) -> Option<f64> {
        match self {
            RealFn::Constant { value } => Some(*value),
            RealFn::Trig { terms } if terms.iter().all(|t| t.kx == 0 && t.ky == 0) => {
                Some(terms.iter().map(|t| t.amp * t.phase.cos()).sum())
            }
            RealFn::Sum { parts } => parts.iter().map(|p| p.as_constant()).sum(),
            _ => None,
        }
    }

    /// Sup norm over a base grid; exact for constants.
    pub fn sup_norm(&self, base: &BaseSystem, count: usize) -> f64 {
        if let Some(c) = self.as_constant() {
            return c.abs();
        }
        if let RealFn::Trig { terms } = self {
            // The triangle inequality bound is attained for single terms.
            if terms.len() == 1 {
                return terms[0].amp.abs();
            }
        }
        base.grid(count)
            .iter()
            .map(|x| self.value(base, x).abs())
            .fold(0.0, f64::max)
    }
}

fn grid_interpolate(nx: usize, ny: usize, values: &[f64], c: [f64; 2]) -> f64 {
    let fx = c[0] * nx as f64;
    let i0 = (fx.floor() as usize) % nx;
    let tx = fx - fx.floor();
    let i1 = (i0 + 1) % nx;
    if ny <= 1 {
        return values[i0] * (1.0 - tx) + values[i1] * tx;
    }
    let fy = c[1] * ny as f64;
    let j0 = (fy.floor() as usize) % ny;
    let ty = fy - fy.floor();
    let j1 = (j0 + 1) % ny;
    let v = |i: usize, j: usize| values[i * ny + j];
    (v(i0, j0) * (1.0 - ty) + v(i0, j1) * ty) * (1.0 - tx) + (v(i1, j0) * (1.0 - ty) + v(i1, j1) * ty) * tx
}

/// Closed-form cocycle generators.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Constant { matrix: Mat2 },
    /// R_{angle(x) + 2π(w₁x + w₂y)}.
    Rotation {
        angle: RealFn,
        #[serde(default)]
        winding: [i64; 2],
    },
    /// (E − V(x), −1; 1, 0).
    Schrodinger { energy: f64, potential: RealFn },
    /// diag(e^{φ(x)}, e^{−φ(x)}).
    Diagonal { log: RealFn },
    /// Pointwise product, leftmost factor outermost.
    Product { factors: Vec<Generator> },
}

impl Generator {
    pub fn value(&self, base: &BaseSystem, x: &BasePoint) -> Mat2 {
        match self {
            Generator::Constant { matrix } => *matrix,
            Generator::Rotation { angle, winding } => {
                let c = base.coords(x);
                let wind = winding[0] as f64 * c[0] + winding[1] as f64 * c[1];
                Mat2::rotation(angle.value(base, x) + TAU * centered(wind))
            }
            Generator::Schrodinger { energy, potential } => {
                Mat2::schrodinger(energy - potential.value(base, x))
            }
            Generator::Diagonal { log } => Mat2::diag_exp(log.value(base, x)),
            Generator::Product { factors } => factors
                .iter()
                .fold(Mat2::IDENTITY, |acc, g| acc * g.value(base, x)),
        }
    }

    pub fn as_constant(&self) -> Option<Mat2> {
        match self {
            Generator::Constant { matrix } => Some(*matrix),
            Generator::Rotation { angle, winding } if *winding == [0, 0] => {
                angle.as_constant().map(Mat2::rotation)
            }
            Generator::Rotation { .. } => None,
            Generator::Schrodinger { energy, potential } => {
                potential.as_constant().map(|v| Mat2::schrodinger(energy - v))
            }
            Generator::Diagonal { log } => log.as_constant().map(Mat2::diag_exp),
            Generator::Product { factors } => factors
                .iter()
                .try_fold(Mat2::IDENTITY, |acc, g| g.as_constant().map(|m| acc * m)),
        }
    }
}

#[derive(Clone)]
enum Field {
    Generator(Generator),
    Dynamic { label: String, f: Arc<dyn MatField> },
}

/// An SL(2,ℝ) cocycle (f, A) over a base system.
#[derive(Clone)]
pub struct Cocycle {
    base: BaseSystem,
    field: Field,
}

impl fmt::Debug for Cocycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Field::Generator(g) => write!(f, "Cocycle({:?}, {:?})", self.base, g),
            Field::Dynamic { label, .. } => write!(f, "Cocycle({:?}, {label})", self.base),
        }
    }
}

/// A product A^n(x) stored as `e^{log_scale} · mat`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledMat {
    pub mat: Mat2,
    pub log_scale: f64,
}

impl ScaledMat {
    pub const IDENTITY: ScaledMat = ScaledMat {
        mat: Mat2::IDENTITY,
        log_scale: 0.0,
    };

    /// Left-multiply by `m`, the `k`-th factor. Every [`RENORM_EVERY`]
    /// factors a well-conditioned product has its determinant pulled back to
    /// one (accounting for the scale); large norms move into `log_scale`.
    #[inline]
    pub fn push(&mut self, m: Mat2, k: usize) {
        self.mat = m * self.mat;
        if k.is_multiple_of(RENORM_EVERY) {
            // Skipped once the product is nearly rank one: det then carries
            // no correct digits and rescaling by it would erase growth.
            let det = self.mat.det();
            let n2 = self.mat.norm() * self.mat.norm();
            if det > 1e-8 * n2 && det.is_finite() {
                let fix = (-0.5 * (det.ln() + 2.0 * self.log_scale)).exp();
                if fix.is_finite() && fix > 0.0 {
                    self.mat = self.mat.scale(fix);
                }
            }
        }
        let norm = self.mat.norm();
        if norm > SCALE_LIMIT {
            self.mat = self.mat.scale(1.0 / norm);
            self.log_scale += norm.ln();
        }
    }

    pub fn log_norm(&self) -> f64 {
        self.log_scale + self.mat.norm().ln()
    }

    /// The product itself when no rescaling was needed.
    pub fn matrix(&self) -> Option<Mat2> {
        (self.log_scale == 0.0).then_some(self.mat)
    }
}

impl Cocycle {
    pub fn from_generator(base: BaseSystem, generator: Generator) -> Self {
        Cocycle {
            base,
            field: Field::Generator(generator),
        }
    }

    pub fn from_field(base: BaseSystem, label: impl Into<String>, f: Arc<dyn MatField>) -> Self {
        Cocycle {
            base,
            field: Field::Dynamic {
                label: label.into(),
                f,
            },
        }
    }

    pub fn from_fn(
        base: BaseSystem,
        label: impl Into<String>,
        f: impl Fn(&BasePoint) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        Cocycle::from_field(base, label, Arc::new(f))
    }

    pub fn constant(base: BaseSystem, matrix: Mat2) -> Self {
        Cocycle::from_generator(base, Generator::Constant { matrix })
    }

    pub fn rotation(base: BaseSystem, angle: RealFn) -> Self {
        Cocycle::from_generator(base, Generator::Rotation { angle, winding: [0, 0] })
    }

    /// R_{angle(x) + 2π(w₁x + w₂y)}, a rotation cocycle with prescribed degrees.
    pub fn winding_rotation(base: BaseSystem, angle: RealFn, winding: [i64; 2]) -> Self {
        Cocycle::from_generator(base, Generator::Rotation { angle, winding })
    }

    pub fn schrodinger(base: BaseSystem, energy: f64, potential: RealFn) -> Self {
        Cocycle::from_generator(base, Generator::Schrodinger { energy, potential })
    }

    pub fn diagonal(base: BaseSystem, log: RealFn) -> Self {
        Cocycle::from_generator(base, Generator::Diagonal { log })
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn generator(&self) -> Option<&Generator> {
        match &self.field {
            Field::Generator(g) => Some(g),
            Field::Dynamic { .. } => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.field {
            Field::Generator(g) => format!("{g:?}"),
            Field::Dynamic { label, .. } => label.clone(),
        }
    }

    /// The constant value when the generator is manifestly constant.
    pub fn as_constant(&self) -> Option<Mat2> {
        self.generator().and_then(Generator::as_constant)
    }

    #[inline]
    pub fn eval(&self, x: &BasePoint) -> Mat2 {
        match &self.field {
            Field::Generator(g) => g.value(&self.base, x),
            Field::Dynamic { f, .. } => f.value(x),
        }
    }

    /// A^n(x), with A^{−n}(x) = (A^n(f^{−n}x))⁻¹.
    pub fn iterate(&self, x: &BasePoint, n: i64) -> Result<ScaledMat> {
        if n.abs() > MAX_ITERATE {
            return Err(Error::Input(format!("iterate count {n} exceeds {MAX_ITERATE}")));
        }
        if n < 0 {
            let start = self.base.step(x, n);
            let fwd = self.iterate(&start, -n)?;
            return Ok(ScaledMat {
                mat: fwd.mat.inv(),
                log_scale: fwd.log_scale,
            });
        }
        let mut p = ScaledMat::IDENTITY;
        let mut pt = *x;
        for k in 1..=n as usize {
            p.push(self.eval(&pt), k);
            pt = self.base.step(&pt, 1);
        }
        Ok(p)
    }

    /// A^n(x) as a plain matrix; fails when the product left the f64 range.
    pub fn iterate_mat(&self, x: &BasePoint, n: i64) -> Result<Mat2> {
        let s = self.iterate(x, n)?;
        let m = s.mat.scale(s.log_scale.exp());
        if m.is_finite() {
            Ok(m)
        } else {
            Err(Error::Degenerate(format!("A^{n} overflows")))
        }
    }

    /// sup over a grid of ‖A(x)‖.
    pub fn sup_norm(&self, count: usize) -> f64 {
        if let Some(m) = self.as_constant() {
            return m.norm();
        }
        self.base
            .grid(count)
            .iter()
            .map(|x| self.eval(x).norm())
            .fold(0.0, f64::max)
    }

    /// Largest deviation of det A(x) from one on a grid.
    pub fn det_defect(&self, count: usize) -> f64 {
        self.base
            .grid(count)
            .iter()
            .map(|x| (self.eval(x).det() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Grid points used by the diagnostics: one point for constant cocycles.
    fn test_points(&self, count: usize) -> Vec<BasePoint> {
        if self.as_constant().is_some() {
            vec![self.base.grid(1)[0]]
        } else {
            self.base.grid(count)
        }
    }
}

/// Top Lyapunov exponent estimate along one orbit.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    /// (k, (1/k) log‖A^k(x₀)‖) at powers of two.
    pub partial: Vec<(u64, f64)>,
}

pub fn lyapunov(a: &Cocycle, x0: &BasePoint, n: u64) -> Result<LyapunovEstimate> {
    if n < 1000 {
        return Err(Error::Input(format!("lyapunov needs n ≥ 1000, got {n}")));
    }
    let mut p = ScaledMat::IDENTITY;
    let mut pt = *x0;
    let mut partial = Vec::new();
    let mut next = 1u64;
    for k in 1..=n {
        p.push(a.eval(&pt), k as usize);
        pt = a.base.step(&pt, 1);
        if k == next || k == n {
            partial.push((k, p.log_norm() / k as f64));
            next *= 2;
        }
    }
    let exponent = partial.last().map(|e| e.1).unwrap_or(0.0);
    Ok(LyapunovEstimate { exponent, partial })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Uh,
    NotUh,
    Inconclusive,
}

fn default_growth_ratio() -> f64 {
    1.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UhParams {
    /// First iterate count; doubled at each level.
    pub n_start: usize,
    pub n_max: usize,
    pub grid: usize,
    pub growth_threshold: f64,
    /// A passing level needs log(growth) at least this multiple of the
    /// previous level's, which rules out polynomial growth.
    #[serde(default = "default_growth_ratio")]
    pub growth_ratio: f64,
    pub angle_threshold: f64,
    pub collapse_angle: f64,
}

impl Default for UhParams {
    fn default() -> Self {
        UhParams {
            n_start: 64,
            n_max: 1 << 14,
            grid: 128,
            growth_threshold: 4.0,
            growth_ratio: 1.5,
            angle_threshold: 1e-3,
            collapse_angle: 1e-4,
        }
    }
}

impl UhParams {
    /// Horizon long enough to see a known expansion rate through a frame
    /// change of distortion `spread` = max ‖B‖·‖B⁻¹‖: the growth over the
    /// window N/2 ≤ k ≤ N must clear the threshold at the first level.
    pub fn for_rate(&self, rate: f64, spread: f64) -> UhParams {
        let mut p = *self;
        if rate > 0.0 && rate.is_finite() {
            let need = 2.0 * (2.0 * self.growth_threshold.max(1.0).ln() + spread.max(1.0).ln()) / rate;
            let start = (need.ceil() as usize).max(self.n_start).next_power_of_two();
            p.n_start = start;
            p.n_max = self.n_max.max(4 * start);
        }
        p
    }
}

/// Measurements at one iterate count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UhLevel {
    pub n: usize,
    /// min over the grid of ‖A^N(x)‖.
    pub min_growth: f64,
    /// min over the grid and over N/2 ≤ k ≤ N of ‖A^k(x)‖.
    pub window_growth: f64,
    /// min over the grid of the angle between the unstable and stable
    /// direction estimates.
    pub min_angle: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UhCertificate {
    pub n: usize,
    pub min_growth: f64,
    pub min_angle: f64,
    pub grid_resolution: usize,
    pub verdict: Verdict,
    /// Iterate count at which the verdict was confirmed (twice `n`).
    pub confirmed_n: Option<usize>,
    /// min_growth^{1/N}, a proxy for the expansion rate.
    pub lambda_proxy: f64,
    pub levels: Vec<UhLevel>,
    pub params: UhParams,
}

impl UhCertificate {
    pub fn is_uh(&self) -> bool {
        self.verdict == Verdict::Uh
    }

    /// The verdict the stored levels imply under the stored parameters,
    /// with the index of the deciding level.
    pub fn replay(&self) -> (Verdict, Option<usize>) {
        let statuses: Vec<LevelStatus> = self
            .levels
            .iter()
            .enumerate()
            .map(|(k, l)| classify(l, k.checked_sub(1).map(|j| &self.levels[j]), &self.params))
            .collect();
        decide(&statuses)
    }
}

fn negative(s: LevelStatus) -> bool {
    matches!(s, LevelStatus::Bounded | LevelStatus::Collapse)
}

/// First verdict reached along the level statuses: two hyperbolic levels in
/// a row, or two bounded/collapsing ones.
fn decide(statuses: &[LevelStatus]) -> (Verdict, Option<usize>) {
    for k in 1..statuses.len() {
        let (prev, cur) = (statuses[k - 1], statuses[k]);
        if prev == LevelStatus::Hyperbolic && cur == LevelStatus::Hyperbolic {
            return (Verdict::Uh, Some(k - 1));
        }
        if negative(prev) && negative(cur) {
            return (Verdict::NotUh, Some(k));
        }
    }
    (Verdict::Inconclusive, None)
}

/// Angle of the most expanded output direction of `m` (mod π).
fn expanded_output_angle(m: &Mat2) -> f64 {
    polar_decompose(m).beta
}

/// Angle of the most contracted input direction of `m` (mod π).
fn contracted_input_angle(m: &Mat2) -> f64 {
    0.5 * PI - polar_decompose(m).alpha
}

/// Angle between two lines given by direction angles, in [0, π/2].
fn line_angle(a: f64, b: f64) -> f64 {
    (centered((a - b) / PI) * PI).abs()
}

/// Product of `n` cocycle values starting at `x`, rescaled to unit norm
/// when large; returns (matrix, min norm over the window [n/2, n]).
fn forward_product(a: &Cocycle, x: &BasePoint, n: usize) -> (Mat2, f64, f64) {
    let mut p = ScaledMat::IDENTITY;
    let mut pt = *x;
    let mut window = f64::INFINITY;
    for k in 1..=n {
        p.push(a.eval(&pt), k);
        pt = a.base.step(&pt, 1);
        if 2 * k >= n {
            window = window.min(p.log_norm());
        }
    }
    (p.mat, p.log_norm(), window)
}

fn uh_level(a: &Cocycle, pts: &[BasePoint], n: usize) -> UhLevel {
    let per_point: Vec<(f64, f64, f64)> = pts
        .par_iter()
        .map(|x| {
            let (fwd, log_norm, window) = forward_product(a, x, n);
            let start = a.base.step(x, -(n as i64));
            let (bwd, _, _) = forward_product(a, &start, n);
            let angle = line_angle(expanded_output_angle(&bwd), contracted_input_angle(&fwd));
            (log_norm, window, angle)
        })
        .collect();
    let min_log = per_point.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let min_window = per_point.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let min_angle = per_point.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    UhLevel {
        n,
        min_growth: min_log.exp(),
        window_growth: min_window.exp(),
        min_angle,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LevelStatus {
    Hyperbolic,
    Bounded,
    Collapse,
    Unclear,
}

fn classify(level: &UhLevel, prev: Option<&UhLevel>, params: &UhParams) -> LevelStatus {
    // Exponential growth roughly squares when N doubles; linear growth near a
    // parabolic matrix only doubles.
    let superlinear =
        prev.is_some_and(|p| level.min_growth.ln() >= params.growth_ratio * p.min_growth.ln().max(0.0));
    if level.window_growth < params.growth_threshold {
        LevelStatus::Bounded
    } else if level.min_angle >= params.angle_threshold && superlinear {
        LevelStatus::Hyperbolic
    } else if level.min_angle < params.collapse_angle {
        LevelStatus::Collapse
    } else {
        LevelStatus::Unclear
    }
}

/// Numerical uniform-hyperbolicity certificate.
///
/// N is doubled from `n_start`; a level passes when the growth over the whole
/// window N/2 ≤ k ≤ N clears the threshold, log‖A^N‖ grew by the factor
/// `growth_ratio` since the previous level, and the stable and unstable
/// direction estimates stay apart. UH needs two consecutive passing levels;
/// not-UH needs two consecutive levels with sub-threshold growth or with
/// collapsing directions.
pub fn uh_test(a: &Cocycle, params: &UhParams) -> Result<UhCertificate> {
    if params.n_start < 10 || params.grid < 100 {
        return Err(Error::Input(format!(
            "uh_test needs N ≥ 10 and a grid of at least 100 points (got {}, {})",
            params.n_start, params.grid
        )));
    }
    let pts = a.test_points(params.grid);
    let mut levels: Vec<UhLevel> = Vec::new();
    let mut statuses: Vec<LevelStatus> = Vec::new();
    let mut n = params.n_start;
    let mut verdict = Verdict::Inconclusive;
    let mut cert_index = None;
    while n <= params.n_max {
        let level = uh_level(a, &pts, n);
        let status = classify(&level, levels.last(), params);
        levels.push(level);
        statuses.push(status);
        let (v, idx) = decide(&statuses);
        if idx.is_some() {
            verdict = v;
            cert_index = idx;
            break;
        }
        n *= 2;
    }
    let idx = cert_index.unwrap_or(levels.len().saturating_sub(1));
    let lvl = levels
        .get(idx)
        .copied()
        .ok_or_else(|| Error::Input("uh_test budget below the starting iterate count".into()))?;
    let confirmed_n = (verdict == Verdict::Uh).then(|| levels[idx + 1].n);
    Ok(UhCertificate {
        n: lvl.n,
        min_growth: lvl.min_growth,
        min_angle: lvl.min_angle,
        grid_resolution: pts.len(),
        verdict,
        confirmed_n,
        lambda_proxy: lvl.min_growth.powf(1.0 / lvl.n as f64),
        levels,
        params: *params,
    })
}

/// Orbit boundedness diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedReport {
    /// sup over 0 ≤ k ≤ n of ‖A^k(x₀)‖ (infinite when it overflows).
    pub sup_norm: f64,
    pub log_sup: f64,
    /// Least-squares slope of log‖A^k(x₀)‖ against log k over 1 ≤ k ≤ n.
    pub growth_exponent: f64,
}

pub fn bounded_test(a: &Cocycle, x0: &BasePoint, n: u64) -> Result<BoundedReport> {
    if n > 1_000_000 {
        return Err(Error::Input(format!("bounded_test needs n ≤ 10⁶, got {n}")));
    }
    if n < 4 {
        return Err(Error::Input("bounded_test needs n ≥ 4".into()));
    }
    let mut p = ScaledMat::IDENTITY;
    let mut pt = *x0;
    let mut log_sup = 0.0f64;
    // Running sums for the least-squares slope of log‖A^k‖ against log k.
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for k in 1..=n {
        p.push(a.eval(&pt), k as usize);
        pt = a.base.step(&pt, 1);
        let y = p.log_norm();
        log_sup = log_sup.max(y);
        let x = (k as f64).ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let m = n as f64;
    let var = sxx - sx * sx / m;
    let slope = if var > 0.0 { (sxy - sx * sy / m) / var } else { 0.0 };
    Ok(BoundedReport {
        sup_norm: log_sup.exp(),
        log_sup,
        growth_exponent: slope,
    })
}

#[derive(Clone)]
enum ConjField {
    Genuine(Arc<dyn MatField>),
    /// PSL-valued map given by a formula on lifted coordinates, continuous
    /// on ℝ^d and equal to ±B on the torus.
    Lifted(Arc<dyn Fn([f64; 2]) -> Mat2 + Send + Sync>),
    /// PSL-valued map with a pointwise branch choice.
    Pointwise(Arc<dyn MatField>),
}

/// A conjugacy B: X → SL(2,ℝ) or PSL(2,ℝ).
#[derive(Clone)]
pub struct Conjugacy {
    base: BaseSystem,
    field: ConjField,
    label: String,
}

impl fmt::Debug for Conjugacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Conjugacy({:?}, {})", self.base, self.label)
    }
}

impl Conjugacy {
    pub fn identity(base: BaseSystem) -> Self {
        Conjugacy::constant(base, Mat2::IDENTITY)
    }

    pub fn constant(base: BaseSystem, m: Mat2) -> Self {
        Conjugacy::genuine(base, "constant", move |_| m)
    }

    pub fn genuine(
        base: BaseSystem,
        label: impl Into<String>,
        f: impl Fn(&BasePoint) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        Conjugacy {
            base,
            field: ConjField::Genuine(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn lifted(
        base: BaseSystem,
        label: impl Into<String>,
        f: impl Fn([f64; 2]) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        Conjugacy {
            base,
            field: ConjField::Lifted(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn pointwise(
        base: BaseSystem,
        label: impl Into<String>,
        f: impl Fn(&BasePoint) -> Mat2 + Send + Sync + 'static,
    ) -> Self {
        Conjugacy {
            base,
            field: ConjField::Pointwise(Arc::new(f)),
            label: label.into(),
        }
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_projective(&self) -> bool {
        !matches!(self.field, ConjField::Genuine(_))
    }

    /// B(x), a representative of the class when projective.
    pub fn eval(&self, x: &BasePoint) -> Mat2 {
        match &self.field {
            ConjField::Genuine(f) | ConjField::Pointwise(f) => f.value(x),
            ConjField::Lifted(f) => f(self.base.coords(x)),
        }
    }

    pub fn inverse(&self) -> Conjugacy {
        let label = format!("inverse of {}", self.label);
        match &self.field {
            ConjField::Genuine(f) => {
                let f = f.clone();
                Conjugacy::genuine(self.base, label, move |x| f.value(x).inv())
            }
            ConjField::Pointwise(f) => {
                let f = f.clone();
                Conjugacy::pointwise(self.base, label, move |x| f.value(x).inv())
            }
            ConjField::Lifted(f) => {
                let f = f.clone();
                Conjugacy::lifted(self.base, label, move |c| f(c).inv())
            }
        }
    }

    /// Pointwise product x ↦ self(x)·other(x).
    pub fn then(&self, other: &Conjugacy) -> Result<Conjugacy> {
        if self.base != other.base {
            return Err(Error::Input("conjugacies over different bases".into()));
        }
        let label = format!("{} · {}", self.label, other.label);
        Ok(match (&self.field, &other.field) {
            (ConjField::Genuine(f), ConjField::Genuine(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Conjugacy::genuine(self.base, label, move |x| f.value(x) * g.value(x))
            }
            (ConjField::Lifted(f), ConjField::Lifted(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Conjugacy::lifted(self.base, label, move |c| f(c) * g(c))
            }
            (ConjField::Lifted(f), ConjField::Genuine(g)) => {
                let (f, g, base) = (f.clone(), g.clone(), self.base);
                Conjugacy::lifted(self.base, label, move |c| {
                    f(c) * g.value(&base.point(c[0], c[1]))
                })
            }
            (ConjField::Genuine(f), ConjField::Lifted(g)) => {
                let (f, g, base) = (f.clone(), g.clone(), self.base);
                Conjugacy::lifted(self.base, label, move |c| {
                    f.value(&base.point(c[0], c[1])) * g(c)
                })
            }
            _ => {
                let (a, b) = (self.clone(), other.clone());
                Conjugacy::pointwise(self.base, label, move |x| a.eval(x) * b.eval(x))
            }
        })
    }

    /// sup over a grid of ‖B(x)‖.
    pub fn distortion(&self, count: usize) -> f64 {
        self.base
            .grid(count)
            .iter()
            .map(|x| self.eval(x).norm())
            .fold(0.0, f64::max)
    }
}

/// x ↦ B(f(x))·A(x)·B(x)⁻¹.
pub fn conjugate(a: &Cocycle, b: &Conjugacy) -> Result<Cocycle> {
    if a.base != b.base {
        return Err(Error::Input("cocycle and conjugacy live over different bases".into()));
    }
    let base = a.base;
    let label = format!("{} conjugated by {}", a.label(), b.label);
    let a = a.clone();
    match &b.field {
        ConjField::Genuine(f) => {
            let f = f.clone();
            Ok(Cocycle::from_fn(base, label, move |x| {
                f.value(&base.step(x, 1)) * a.eval(x) * f.value(x).inv()
            }))
        }
        ConjField::Lifted(f) => {
            if base.lift_step([0.0, 0.0]).is_none() {
                return Err(Error::Precondition(
                    "projective conjugacy has no continuous lift on this base".into(),
                ));
            }
            let f = f.clone();
            Ok(Cocycle::from_fn(base, label, move |x| {
                let c = base.coords(x);
                let fc = base.lift_step(c).unwrap();
                f(fc) * a.eval(x) * f(c).inv()
            }))
        }
        ConjField::Pointwise(_) => Err(Error::Precondition(
            "projective conjugacy has no continuous square-root section; sign of the conjugated \
             cocycle is undetermined"
                .into(),
        )),
    }
}

/// Degree of t ↦ retract(A(loop(t))) along coordinate loop `index` through
/// `anchor`.
pub fn winding_number_at(a: &Cocycle, index: usize, anchor: &BasePoint) -> Result<i64> {
    if index >= a.base.loop_count() {
        return Err(Error::Input(format!(
            "base {:?} has no coordinate loop {index}",
            a.base
        )));
    }
    let samples = LOOP_SAMPLES;
    let guard = 0.5 * PI;
    let mut prev = retract_angle(&a.eval(&a.base.loop_point(index, 0.0, anchor)?));
    let mut total = 0.0;
    for k in 1..=samples {
        let t = k as f64 / samples as f64;
        let cur = retract_angle(&a.eval(&a.base.loop_point(index, t, anchor)?));
        let step = centered((cur - prev) / TAU) * TAU;
        if step.abs() >= guard {
            return Err(Error::Resolution(format!(
                "retract angle jumps by {step:.3} between loop samples {} and {k}",
                k - 1
            )));
        }
        total += step;
        prev = cur;
    }
    let w = total / TAU;
    let r = w.round();
    if (w - r).abs() > 1e-6 {
        return Err(Error::Internal(format!("non-integral winding {w}")));
    }
    Ok(r as i64)
}

pub fn winding_number(a: &Cocycle, index: usize) -> Result<i64> {
    let anchor = a.base.point(0.0, 0.0);
    winding_number_at(a, index, &anchor)
}

/// Winding numbers on every coordinate loop.
pub fn windings(a: &Cocycle) -> Result<Vec<i64>> {
    (0..a.base.loop_count()).map(|i| winding_number(a, i)).collect()
}

/// A continuous real lift of the retract angle of a cocycle homotopic to a
/// constant.
#[derive(Clone, Debug)]
pub enum AngleLift {
    /// The principal value in (−π, π] never approaches ±π.
    Principal,
    /// Values in [0, 2π) never approach 0.
    Shifted,
    /// Lifted samples on an nx × ny grid of the torus coordinates; the
    /// branch nearest the interpolated lift is selected.
    Grid { nx: usize, ny: usize, values: Vec<f64> },
}

const LIFT_MARGIN: f64 = 0.5;

impl AngleLift {
    pub fn build(a: &Cocycle) -> Result<AngleLift> {
        let pts = a.test_points(4096);
        let angles: Vec<f64> = pts.iter().map(|x| retract_angle(&a.eval(x))).collect();
        if angles.iter().all(|t| t.abs() < PI - LIFT_MARGIN) {
            return Ok(AngleLift::Principal);
        }
        if angles.iter().all(|t| t.abs() > LIFT_MARGIN) {
            return Ok(AngleLift::Shifted);
        }
        let w = windings(a)?;
        if w.iter().any(|&k| k != 0) {
            return Err(Error::Obstruction { windings: w });
        }
        let (nx, ny) = match a.base.loop_count() {
            1 => (LOOP_SAMPLES, 1),
            2 => (256, 256),
            _ => {
                return Err(Error::Precondition(
                    "retract angle has no principal branch on this base".into(),
                ));
            }
        };
        let at = |i: usize, j: usize| {
            retract_angle(&a.eval(&a.base.point(i as f64 / nx as f64, j as f64 / ny as f64)))
        };
        let mut values = vec![0.0; nx * ny];
        let continue_from = |prev: f64, raw: f64| -> Result<f64> {
            let step = centered((raw - prev) / TAU) * TAU;
            if step.abs() >= 0.5 * PI {
                return Err(Error::Resolution("retract angle varies too fast to lift".into()));
            }
            Ok(prev + step)
        };
        let mut col0 = at(0, 0);
        for j in 0..ny {
            if j > 0 {
                col0 = continue_from(col0, at(0, j))?;
            }
            values[j] = col0;
            let mut prev = col0;
            for i in 1..nx {
                prev = continue_from(prev, at(i, j))?;
                values[i * ny + j] = prev;
            }
        }
        Ok(AngleLift::Grid { nx, ny, values })
    }

    pub fn lift(&self, base: &BaseSystem, m: &Mat2, x: &BasePoint) -> f64 {
        let raw = retract_angle(m);
        match self {
            AngleLift::Principal => raw,
            AngleLift::Shifted => {
                if raw < 0.0 {
                    raw + TAU
                } else {
                    raw
                }
            }
            AngleLift::Grid { nx, ny, values } => {
                let guess = grid_interpolate(*nx, *ny, values, base.coords(x));
                raw + TAU * ((guess - raw) / TAU).round()
            }
        }
    }
}

/// Fibered rotation number in [0,1), normalized so that the constant
/// rotation R_{πθ} has rotation number θ.
pub fn rotation_number(a: &Cocycle, x0: &BasePoint, n: u64) -> Result<f64> {
    if n < 10_000 {
        return Err(Error::Input(format!("rotation_number needs n ≥ 10⁴, got {n}")));
    }
    let w = windings(a)?;
    if w.iter().any(|&k| k != 0) {
        return Err(Error::Obstruction { windings: w });
    }
    let lift = AngleLift::build(a)?;
    Ok(rotation_number_with(a, &lift, x0, n))
}

pub(crate) fn rotation_number_with(a: &Cocycle, lift: &AngleLift, x0: &BasePoint, n: u64) -> f64 {
    let mut psi = 0.0f64;
    let mut total = 0.0f64;
    let mut pt = *x0;
    for _ in 0..n {
        let m = a.eval(&pt);
        let theta = lift.lift(&a.base, &m, &pt);
        let v = m.apply([psi.cos(), psi.sin()]);
        let new = v[1].atan2(v[0]);
        let raw = new - psi;
        // The hyperbolic part moves a direction by less than π/2, so the
        // displacement is the representative of `raw` mod π nearest θ.
        total += raw + PI * ((theta - raw) / PI).round();
        psi = new;
        pt = a.base.step(&pt, 1);
    }
    let rho = total / (n as f64 * PI);
    rho - rho.floor()
}

/// Unstable and stable directions of a UH cocycle, estimated from products
/// of length `n`.
pub fn splitting_directions(a: &Cocycle, x: &BasePoint, n: usize) -> (f64, f64) {
    let start = a.base.step(x, -(n as i64));
    let (bwd, _, _) = forward_product(a, &start, n);
    let (fwd, _, _) = forward_product(a, x, n);
    (expanded_output_angle(&bwd), contracted_input_angle(&fwd))
}

/// B with B e₁ ∥ e^u, B e₂ ∥ e^s, det B = 1, on the branch where e^u has
/// angle in [0, π) and (e^u, e^s) is positively oriented.
fn splitting_matrix(theta_u: f64, theta_s: f64) -> Mat2 {
    let tu = theta_u - PI * (theta_u / PI).floor();
    let mut ts = theta_s;
    let (su, cu) = tu.sin_cos();
    let (mut ss, mut cs) = ts.sin_cos();
    if cu * ss - su * cs < 0.0 {
        ts += PI;
        (ss, cs) = ts.sin_cos();
    }
    let sine = cu * ss - su * cs;
    let c = sine.powf(-0.5);
    Mat2::new(c * cu, c * cs, c * su, c * ss)
}

/// Splitting conjugacy of a UH cocycle.
#[derive(Clone, Debug)]
pub struct Splitting {
    /// PSL-valued conjugacy with B(x)e₁ ∈ E^u(x), B(x)e₂ ∈ E^s(x).
    pub b: Conjugacy,
    /// D(x) = B(f(x))⁻¹A(x)B(x), sign-normalized to a positive (1,1) entry.
    pub d: Cocycle,
    /// log|D₁₁|, the expansion rate along E^u.
    pub log_rate: RealFn,
    /// ±1 with A(x) = sign(x)·B(f(x))·diag(D)(x)·B(x)⁻¹ on the chosen branches.
    pub sign: Arc<dyn ScalarField>,
    pub n: usize,
}

impl fmt::Debug for dyn ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarField")
    }
}

/// Iterate count giving direction estimates accurate to about 1e−8.
fn splitting_length(cert: &UhCertificate) -> usize {
    let rate = cert.min_growth.ln() / cert.n as f64;
    let n = (cert.n as f64).max(12.0 / rate.max(1e-6)).ceil() as usize;
    n.min(cert.params.n_max.max(cert.n) * 4)
}

pub fn splitting_conjugacy(a: &Cocycle, cert: &UhCertificate) -> Result<Splitting> {
    if cert.verdict != Verdict::Uh {
        return Err(Error::Precondition(format!(
            "splitting needs a UH certificate, verdict was {:?}",
            cert.verdict
        )));
    }
    let n = splitting_length(cert);
    let base = a.base;
    let bmat = {
        let a = a.clone();
        move |x: &BasePoint| {
            if let Some(m) = a.as_constant() {
                let (tu, ts) = constant_directions(&m);
                return splitting_matrix(tu, ts);
            }
            let (tu, ts) = splitting_directions(&a, x, n);
            splitting_matrix(tu, ts)
        }
    };
    let bmat = Arc::new(bmat);
    let b = {
        let bm = bmat.clone();
        Conjugacy::pointwise(base, "unstable/stable frame", move |x| bm(x))
    };
    let raw_d = {
        let (a, bm) = (a.clone(), bmat.clone());
        move |x: &BasePoint| bm(&base.step(x, 1)).inv() * a.eval(x) * bm(x)
    };
    let raw_d = Arc::new(raw_d);
    let d = {
        let rd = raw_d.clone();
        Cocycle::from_fn(base, "diagonal part", move |x| {
            let m = rd(x);
            if m.a < 0.0 { m.scale(-1.0) } else { m }
        })
    };
    let log_rate = {
        let rd = raw_d.clone();
        RealFn::custom(move |x| rd(x).a.abs().ln())
    };
    let sign: Arc<dyn ScalarField> = {
        let rd = raw_d.clone();
        Arc::new(move |x: &BasePoint| rd(x).a.signum())
    };
    Ok(Splitting {
        b,
        d,
        log_rate,
        sign,
        n,
    })
}

/// Eigen-directions of a constant hyperbolic matrix (unstable, stable).
fn constant_directions(m: &Mat2) -> (f64, f64) {
    let tr = m.trace();
    let disc = (tr * tr - 4.0).max(0.0).sqrt();
    let (big, small) = if tr >= 0.0 {
        (0.5 * (tr + disc), 0.5 * (tr - disc))
    } else {
        (0.5 * (tr - disc), 0.5 * (tr + disc))
    };
    let dir = |lam: f64| {
        // Rows of (M − λ) annihilate the eigenvector; pick the better row.
        let (r1, r2) = ([m.a - lam, m.b], [m.c, m.d - lam]);
        let r = if r1[0].hypot(r1[1]) >= r2[0].hypot(r2[1]) { r1 } else { r2 };
        (-r[0]).atan2(r[1])
    };
    (dir(big), dir(small))
}


/// A matrix field sampled along orbits and interpolated piecewise-linearly.
///
/// Orbit points of one starting point share castle columns, so fields whose
/// evaluation builds a column per anchor are sampled at amortized constant
/// cost. On 𝕋² bases a vertical line of `ny` equally spaced starting points
/// is mapped to a vertical line of equally spaced points, so each orbit step
/// contributes one sampled line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitTable {
    pub base: BaseSystem,
    pub ny: usize,
    /// First coordinate of each line, sorted.
    pub xs: Vec<f64>,
    /// Second coordinate of the line's first sample.
    pub offsets: Vec<f64>,
    /// `ny` values per line.
    pub values: Vec<Mat2>,
}

impl OrbitTable {
    /// Samples `a` at f^n(x₀, j/ny) for n < `steps` and j < `ny`.
    pub fn build(a: &Cocycle, steps: usize, ny: usize) -> Result<Self> {
        let base = *a.base();
        if matches!(base, BaseSystem::Odometer { .. }) {
            return Err(Error::Input("orbit tables need a torus base".into()));
        }
        if steps < 2 {
            return Err(Error::Input(format!("an orbit table needs at least 2 lines, got {steps}")));
        }
        let ny = if base.is_two_dimensional() { ny.max(2) } else { 1 };
        let start = base.point(0.0, 0.0);
        let mut lines = Vec::with_capacity(steps);
        let mut p = start;
        for _ in 0..steps {
            let c = base.coords(&p);
            lines.push((c[0], c[1]));
            p = base.step(&p, 1);
        }
        let columns: Vec<Vec<Mat2>> = (0..ny)
            .into_par_iter()
            .map(|j| {
                let mut x = base.point(0.0, j as f64 / ny as f64);
                let mut out = Vec::with_capacity(steps);
                for _ in 0..steps {
                    out.push(a.eval(&x));
                    x = base.step(&x, 1);
                }
                out
            })
            .collect();
        let mut order: Vec<usize> = (0..steps).collect();
        order.sort_by(|&i, &k| lines[i].0.total_cmp(&lines[k].0));
        let mut values = Vec::with_capacity(steps * ny);
        for &i in &order {
            for col in &columns {
                values.push(col[i]);
            }
        }
        Ok(OrbitTable {
            base,
            ny,
            xs: order.iter().map(|&i| lines[i].0).collect(),
            offsets: order.iter().map(|&i| lines[i].1).collect(),
            values,
        })
    }

    fn line_value(&self, line: usize, y: f64) -> Mat2 {
        let row = &self.values[line * self.ny..(line + 1) * self.ny];
        if self.ny == 1 {
            return row[0];
        }
        let u = frac(y - self.offsets[line]) * self.ny as f64;
        let j0 = (u.floor() as usize) % self.ny;
        let t = u - u.floor();
        row[j0].scale(1.0 - t).add(&row[(j0 + 1) % self.ny].scale(t))
    }

    pub fn eval(&self, x: &BasePoint) -> Mat2 {
        let c = self.base.coords(x);
        let len = self.xs.len();
        let idx = self.xs.partition_point(|&v| v <= c[0]);
        let (l, r) = ((idx + len - 1) % len, idx % len);
        let gap = frac(self.xs[r] - self.xs[l]);
        let w = if gap > 0.0 { frac(c[0] - self.xs[l]) / gap } else { 0.0 };
        let m = self.line_value(l, c[1]).scale(1.0 - w).add(&self.line_value(r, c[1]).scale(w));
        let det = m.det();
        if det > 0.0 { m.scale(1.0 / det.sqrt()) } else { m }
    }

    /// Largest gap between consecutive lines.
    pub fn max_gap(&self) -> f64 {
        let len = self.xs.len();
        (0..len).map(|i| frac(self.xs[(i + 1) % len] - self.xs[i])).fold(0.0, f64::max)
    }

    pub fn cocycle(self, label: impl Into<String>) -> Cocycle {
        let base = self.base;
        let table = Arc::new(self);
        Cocycle::from_fn(base, label, move |x| table.eval(x))
    }
}
