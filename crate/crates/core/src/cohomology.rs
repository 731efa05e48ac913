//! Almost-invariant sections over a castle and an approximate solver for the
//! cohomological equation φ̃ = w∘f − w + a₀ over circle- and Cantor-factored
//! bases.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::ColumnCache;
use crate::basedyn::{BasePoint, BaseSystem, Castle, Tower, cantor_factor, return_time};
use crate::cocycle::{Cocycle, RealFn};
use crate::error::{Error, Result};
use crate::hypgeom::{DiskPoint, hyp_dist, mobius_disk};

const COLUMN_SLOTS: usize = 8;

/// Compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// S_n(x) = Σ_{j<n} φ(f^j x), summed along the closed-form orbit.
pub fn birkhoff_sum(phi: &RealFn, base: &BaseSystem, x: &BasePoint, n: u64) -> f64 {
    shifted_sum(phi, 0.0, base, x, n)
}

fn shifted_sum(phi: &RealFn, shift: f64, base: &BaseSystem, x: &BasePoint, n: u64) -> f64 {
    if let Some(c) = phi.as_constant() {
        return n as f64 * (c - shift);
    }
    let mut acc = Neumaier::default();
    for j in 0..n {
        acc.add(phi.value(base, &base.step(x, j as i64)) - shift);
    }
    acc.value()
}

/// Partial sums S_0..=S_n at one point.
fn partial_sums(phi: &RealFn, shift: f64, base: &BaseSystem, x: &BasePoint, n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = Neumaier::default();
    out.push(0.0);
    for j in 0..n {
        acc.add(phi.value(base, &base.step(x, j as i64)) - shift);
        out.push(acc.value());
    }
    out
}

/// Continuous invertible skew product F(x, y) = (f(x), F_x(y)).
pub trait SkewProduct: Send + Sync {
    type Fiber: Copy + Send + Sync + fmt::Debug;

    fn base(&self) -> &BaseSystem;

    /// F^n_x(y) for n ≥ 0.
    fn forward(&self, x: &BasePoint, n: u64, y: Self::Fiber) -> Result<Self::Fiber>;

    /// (F^n_x)⁻¹(y), a fiber value over x given one over f^n(x).
    fn backward(&self, x: &BasePoint, n: u64, y: Self::Fiber) -> Result<Self::Fiber>;

    fn fiber_dist(&self, a: Self::Fiber, b: Self::Fiber) -> f64;
}

/// F(x, w) = (f(x), w + φ(x) − shift).
#[derive(Clone, Debug)]
pub struct Translation {
    pub base: BaseSystem,
    pub phi: RealFn,
    pub shift: f64,
}

impl SkewProduct for Translation {
    type Fiber = f64;

    fn base(&self) -> &BaseSystem {
        &self.base
    }

    fn forward(&self, x: &BasePoint, n: u64, y: f64) -> Result<f64> {
        Ok(y + shifted_sum(&self.phi, self.shift, &self.base, x, n))
    }

    fn backward(&self, x: &BasePoint, n: u64, y: f64) -> Result<f64> {
        Ok(y - shifted_sum(&self.phi, self.shift, &self.base, x, n))
    }

    fn fiber_dist(&self, a: f64, b: f64) -> f64 {
        (a - b).abs()
    }
}

/// Projective action of a cocycle on the disk, F(x, z) = (f(x), A(x)·z).
#[derive(Clone, Debug)]
pub struct DiskAction {
    pub cocycle: Cocycle,
}

impl SkewProduct for DiskAction {
    type Fiber = DiskPoint;

    fn base(&self) -> &BaseSystem {
        self.cocycle.base()
    }

    fn forward(&self, x: &BasePoint, n: u64, y: DiskPoint) -> Result<DiskPoint> {
        mobius_disk(&self.cocycle.iterate_mat(x, n as i64)?, y)
    }

    fn backward(&self, x: &BasePoint, n: u64, y: DiskPoint) -> Result<DiskPoint> {
        mobius_disk(&self.cocycle.iterate_mat(x, n as i64)?.inv(), y)
    }

    fn fiber_dist(&self, a: DiskPoint, b: DiskPoint) -> f64 {
        hyp_dist(a, b)
    }
}

pub type FiberMap<Y> = Arc<dyn Fn(&BasePoint) -> Result<Y> + Send + Sync>;

/// The unique extension y₁ of a section y₀ on h⁻¹(I_i) that is invariant
/// outside h⁻¹(interior I_i): y₁(x) = (F^τ_x)⁻¹ y₀(f^τ x) with τ the first
/// entrance time into the castle base.
#[derive(Clone)]
pub struct AlmostInvariantSection<F: SkewProduct> {
    skew: F,
    castle: Castle,
    y0: FiberMap<F::Fiber>,
    /// Worst compatibility defect seen at the marked fibers.
    pub compatibility: f64,
}

/// Marked base points over h⁻¹(0): one point on the circle, a fiber sample
/// on two-dimensional bases.
pub fn base_fiber(base: &BaseSystem, h: f64, count: usize) -> Vec<BasePoint> {
    if base.is_two_dimensional() {
        (0..count.max(1))
            .map(|j| base.point(h, j as f64 / count.max(1) as f64))
            .collect()
    } else {
        vec![base.point(h, 0.0)]
    }
}

/// Extend `y0` from h⁻¹(I_i) to all of X. Fails when the compatibility
/// condition at the marked fibers is off by more than 1e−6, since the
/// extension would then jump across floor boundaries.
pub fn almost_invariant_section<F: SkewProduct>(
    skew: F,
    castle: &Castle,
    y0: FiberMap<F::Fiber>,
) -> Result<AlmostInvariantSection<F>> {
    let base = *skew.base();
    if base.circle_alpha().is_none() {
        return Err(Error::Input("almost-invariant sections need a circle factor".into()));
    }
    let mut worst = 0.0f64;
    for x in base_fiber(&base, 0.0, 64) {
        let start = y0(&x)?;
        for n in [castle.q_i, castle.q_i + castle.q_next] {
            let image = skew.forward(&x, n as u64, start)?;
            let target = y0(&base.step(&x, n))?;
            worst = worst.max(skew.fiber_dist(image, target));
        }
    }
    if !(worst <= 1e-6) {
        return Err(Error::Precondition(format!(
            "section is not compatible at the marked fibers (defect {worst:.3e})"
        )));
    }
    Ok(AlmostInvariantSection {
        skew,
        castle: castle.clone(),
        y0,
        compatibility: worst,
    })
}

impl<F: SkewProduct> fmt::Debug for AlmostInvariantSection<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AlmostInvariantSection")
            .field("castle", &(self.castle.index, self.castle.q_i, self.castle.q_next))
            .field("compatibility", &self.compatibility)
            .finish()
    }
}

impl<F: SkewProduct> AlmostInvariantSection<F> {
    pub fn castle(&self) -> &Castle {
        &self.castle
    }

    pub fn skew(&self) -> &F {
        &self.skew
    }

    pub fn value(&self, x: &BasePoint) -> Result<F::Fiber> {
        let base = self.skew.base();
        let tau = return_time(base, x, &self.castle)?;
        self.value_with(x, tau)
    }

    /// Value for a known entrance time, bypassing the castle lookup.
    pub fn value_with(&self, x: &BasePoint, tau: u64) -> Result<F::Fiber> {
        let base = self.skew.base();
        let entry = base.step(x, tau as i64);
        let y = (self.y0)(&entry)?;
        if tau == 0 {
            Ok(y)
        } else {
            self.skew.backward(x, tau, y)
        }
    }
}

/// Controls for the empirical n₀ scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohomologyParams {
    /// Points in the grid over which |S_n/n − a₀| < δ is checked.
    pub grid: usize,
    /// Cap on grid × n evaluations during the scan.
    pub max_work: u64,
}

impl Default for CohomologyParams {
    fn default() -> Self {
        CohomologyParams {
            grid: 10_000,
            max_work: 1 << 28,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct MeanScan {
    n0: u64,
    a0: f64,
}

/// Smallest power of two n with grid-max |S_n/n − a₀| < δ at n and 2n,
/// where a₀ is the grid average of S_{2n}/2n; then refined by bisection
/// over (n/2, n].
fn scan_means(phi: &RealFn, base: &BaseSystem, delta: f64, params: &CohomologyParams) -> Result<MeanScan> {
    if let Some(c) = phi.as_constant() {
        return Ok(MeanScan { n0: 1, a0: c });
    }
    let grid = base.grid(params.grid);
    let m = grid.len() as f64;
    let mut state: Vec<(Neumaier, u64)> = vec![(Neumaier::default(), 0); grid.len()];
    let advance = |state: &mut Vec<(Neumaier, u64)>, to: u64| {
        state.par_iter_mut().zip(grid.par_iter()).for_each(|((acc, done), x)| {
            for j in *done..to {
                acc.add(phi.value(base, &base.step(x, j as i64)));
            }
            *done = to;
        });
    };
    let mean_dev = |means: &[f64], a0: f64| means.iter().map(|v| (v - a0).abs()).fold(0.0, f64::max);
    let mut n = 1u64;
    advance(&mut state, 1);
    let mut current: Vec<f64> = state.iter().map(|s| s.0.value()).collect();
    loop {
        if (grid.len() as u64).saturating_mul(2 * n) > params.max_work {
            return Err(Error::Budget(format!(
                "Birkhoff means not within {delta} by n = {n} on the test grid"
            )));
        }
        advance(&mut state, 2 * n);
        let next: Vec<f64> = state.iter().map(|s| s.0.value() / (2 * n) as f64).collect();
        let a0 = next.iter().sum::<f64>() / m;
        let now: Vec<f64> = current.iter().map(|s| s / n as f64).collect();
        if mean_dev(&now, a0) < delta && mean_dev(&next, a0) < delta {
            let mut lo = n / 2;
            let mut hi = n;
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                let dev = grid
                    .par_iter()
                    .map(|x| (birkhoff_sum(phi, base, x, mid) / mid as f64 - a0).abs())
                    .reduce(|| 0.0, f64::max);
                if dev < delta {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok(MeanScan { n0: hi.max(1), a0 });
        }
        current = state.iter().map(|s| s.0.value()).collect();
        n *= 2;
    }
}

#[derive(Clone)]
enum Scheme {
    Circle {
        section: AlmostInvariantSection<Translation>,
    },
    Cantor {
        level: u32,
        q: u64,
    },
}

/// An approximate solution φ̃ = w∘f − w + a₀ with φ̃ close to φ. Both φ̃ and
/// w are evaluated on demand from their defining formulas.
#[derive(Clone)]
pub struct CohomologySolution {
    base: BaseSystem,
    phi: RealFn,
    pub a0: f64,
    pub delta: f64,
    pub n0: u64,
    scheme: Scheme,
    columns: ColumnCache<SumColumn>,
}

struct SumColumn {
    sums: Vec<f64>,
    offset: f64,
    slope: f64,
    correction: f64,
}

impl fmt::Debug for CohomologySolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CohomologySolution")
            .field("base", &self.base)
            .field("a0", &self.a0)
            .field("delta", &self.delta)
            .field("n0", &self.n0)
            .field("castle", &self.castle().map(|c| (c.index, c.q_i, c.q_next)))
            .field("level", &self.level())
            .finish()
    }
}

/// Linear interpolation of the marked values 0, S_{q_{i+1}+q_i}, S_{q_i}
/// in the oriented base coordinate of I_i.
fn marked_interpolant(base: BaseSystem, castle: &Castle, phi: &RealFn, a0: f64) -> FiberMap<f64> {
    let castle2 = castle.clone();
    let castle = castle.clone();
    let phi = phi.clone();
    let s_mark = castle
        .base_coordinate(castle.marker())
        .expect("marker lies inside the castle base");
    let big = castle.q_i + castle.q_next;
    let values = move |y: f64| {
        let top = base.point(castle.gap_i, y);
        let mark = base.point(castle.marker(), y);
        let v_top = shifted_sum(&phi, a0, &base, &base.step(&top, -castle.q_i), castle.q_i as u64);
        let v_mark = shifted_sum(&phi, a0, &base, &base.step(&mark, -big), big as u64);
        (v_mark, v_top)
    };
    let cached = if base.is_two_dimensional() { None } else { Some(values(0.0)) };
    Arc::new(move |p: &BasePoint| {
        let h = base.factor(p).expect("circle factor");
        let s = castle2
            .base_coordinate(h)
            .ok_or_else(|| Error::Internal(format!("point {p:?} is outside the castle base")))?;
        let (v_mark, v_top) = match cached {
            Some(v) => v,
            None => values(base.coords(p)[1]),
        };
        Ok(if s <= s_mark {
            v_mark * (s / s_mark)
        } else {
            v_mark + (v_top - v_mark) * ((s - s_mark) / (1.0 - s_mark))
        })
    })
}

/// Solve over a circle-factored base by the castle construction: pick
/// q_i > max(n₀, ‖φ − a₀‖/δ), prescribe w on the castle base, extend by
/// invariance, then spread the defect over the main tower.
pub fn solve_circle(phi: &RealFn, delta: f64, base: &BaseSystem) -> Result<CohomologySolution> {
    solve_circle_with(phi, delta, base, &CohomologyParams::default())
}

pub fn solve_circle_with(
    phi: &RealFn,
    delta: f64,
    base: &BaseSystem,
    params: &CohomologyParams,
) -> Result<CohomologySolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Input(format!("tolerance must be positive, got {delta}")));
    }
    let alpha = base
        .circle_alpha()
        .ok_or_else(|| Error::Input("solve_circle needs a circle-factored base".into()))?;
    let scan = scan_means(phi, base, delta, params)?;
    let sup = base
        .grid(params.grid)
        .par_iter()
        .map(|x| (phi.value(base, x) - scan.a0).abs())
        .reduce(|| 0.0, f64::max);
    let q_min = (scan.n0 as f64).max(sup / delta);
    let index = Castle::index_for(alpha, q_min).map_err(|_| {
        Error::Budget(format!(
            "δ = {delta} needs q_i > {q_min:.3e}, beyond the continued-fraction table; use a larger δ"
        ))
    })?;
    let castle = Castle::new(alpha, index)?;
    let skew = Translation {
        base: *base,
        phi: phi.clone(),
        shift: scan.a0,
    };
    let y0 = marked_interpolant(*base, &castle, phi, scan.a0);
    let section = almost_invariant_section(skew, &castle, y0)?;
    Ok(CohomologySolution {
        base: *base,
        phi: phi.clone(),
        a0: scan.a0,
        delta,
        n0: scan.n0,
        scheme: Scheme::Circle { section },
        columns: ColumnCache::new(COLUMN_SLOTS),
    })
}

/// Solve over an odometer with the level-i tower formulas
/// φ̃(f^n x) = φ(f^n x) − S_q(x)/q and w(f^n x) = S_n(x) − n·S_q(x)/q.
pub fn solve_cantor(phi: &RealFn, delta: f64, base: &BaseSystem) -> Result<CohomologySolution> {
    solve_cantor_with(phi, delta, base, &CohomologyParams::default())
}

pub fn solve_cantor_with(
    phi: &RealFn,
    delta: f64,
    base: &BaseSystem,
    params: &CohomologyParams,
) -> Result<CohomologySolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Input(format!("tolerance must be positive, got {delta}")));
    }
    let BaseSystem::Odometer { base: b, depth } = *base else {
        return Err(Error::Input("solve_cantor needs an odometer base".into()));
    };
    let scan = scan_means(phi, base, delta, params)?;
    let mut level = 1u32;
    while (b as u64).pow(level) <= scan.n0 {
        level += 1;
    }
    if level > depth {
        return Err(Error::Budget(format!(
            "n₀ = {} needs odometer depth at least {level}, have {depth}",
            scan.n0
        )));
    }
    let factor = cantor_factor(base, level)?;
    Ok(CohomologySolution {
        base: *base,
        phi: phi.clone(),
        a0: scan.a0,
        delta,
        n0: scan.n0,
        scheme: Scheme::Cantor { level, q: factor.q },
        columns: ColumnCache::new(COLUMN_SLOTS),
    })
}

/// Grid verification of a solution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionCheck {
    /// sup |φ̃ − (w∘f − w + a₀)|.
    pub residual: f64,
    /// sup |φ̃ − φ|.
    pub distance: f64,
    pub sup_w: f64,
    pub points: usize,
}

/// One verified sample: x, φ(x), φ̃(x), w(x), w(f(x)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionSample {
    pub x: [f64; 2],
    pub phi: f64,
    pub phi_tilde: f64,
    pub w: f64,
    pub w_next: f64,
}

/// Serializable summary of a solution with its samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohomologyReport {
    pub a0: f64,
    pub delta: f64,
    pub n0: u64,
    pub castle_index: Option<usize>,
    pub q_i: Option<i64>,
    pub q_next: Option<i64>,
    pub level: Option<u32>,
    pub check: SolutionCheck,
    pub samples: Vec<SolutionSample>,
}

impl CohomologyReport {
    /// Recompute the check from the stored samples.
    pub fn recheck(&self) -> SolutionCheck {
        summarize(&self.samples, self.a0)
    }
}

fn summarize(samples: &[SolutionSample], a0: f64) -> SolutionCheck {
    let mut out = SolutionCheck {
        residual: 0.0,
        distance: 0.0,
        sup_w: 0.0,
        points: samples.len(),
    };
    for s in samples {
        out.residual = out.residual.max((s.phi_tilde - (s.w_next - s.w + a0)).abs());
        out.distance = out.distance.max((s.phi_tilde - s.phi).abs());
        out.sup_w = out.sup_w.max(s.w.abs());
    }
    out
}

impl CohomologySolution {
    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn phi(&self) -> &RealFn {
        &self.phi
    }

    pub fn castle(&self) -> Option<&Castle> {
        match &self.scheme {
            Scheme::Circle { section } => Some(section.castle()),
            Scheme::Cantor { .. } => None,
        }
    }

    /// Odometer level and tower height of the Cantor scheme.
    pub fn level(&self) -> Option<(u32, u64)> {
        match self.scheme {
            Scheme::Cantor { level, q } => Some((level, q)),
            Scheme::Circle { .. } => None,
        }
    }

    /// The almost-invariant section w₁ of the circle scheme.
    pub fn w1(&self, x: &BasePoint) -> Option<f64> {
        match &self.scheme {
            Scheme::Circle { section } => Some(section.value(x).expect("translation fibers are total")),
            Scheme::Cantor { .. } => None,
        }
    }

    pub fn phi_tilde(&self, x: &BasePoint) -> f64 {
        self.phi.value(&self.base, x) + self.correction(x)
    }

    pub fn w(&self, x: &BasePoint) -> f64 {
        self.evaluate(x).1
    }

    /// φ̃ − φ at x.
    pub fn correction(&self, x: &BasePoint) -> f64 {
        self.evaluate(x).0
    }

    /// (φ̃ − φ, w) at x.
    fn evaluate(&self, x: &BasePoint) -> (f64, f64) {
        let base = &self.base;
        let (kind, floor, anchor) = match &self.scheme {
            Scheme::Cantor { q, .. } => {
                let BasePoint::Odometer(k) = *x else {
                    panic!("odometer solution evaluated at {x:?}");
                };
                (0u8, k % q, None)
            }
            Scheme::Circle { section } => {
                let r = section.castle().locate(base.factor(x).expect("circle factor"));
                (u8::from(r.tower == Tower::Side), r.floor, None::<BasePoint>)
            }
        };
        let anchor = anchor.unwrap_or_else(|| base.step(x, -(floor as i64)));
        let col = self
            .columns
            .get_or_try(base, kind, &anchor, || Ok(self.column(kind, &anchor)))
            .expect("column construction is infallible");
        let n = floor as usize;
        (col.correction, col.offset + col.sums[n] + n as f64 * col.slope)
    }

    /// Partial sums along one tower column and the affine data turning them
    /// into w: w(f^n x₀) = offset + S_n(x₀) + n·slope.
    fn column(&self, kind: u8, anchor: &BasePoint) -> SumColumn {
        let base = &self.base;
        match &self.scheme {
            Scheme::Cantor { q, .. } => {
                let sums = partial_sums(&self.phi, self.a0, base, anchor, *q);
                let mean = sums[*q as usize] / *q as f64;
                SumColumn { sums, offset: 0.0, slope: -mean, correction: -mean }
            }
            Scheme::Circle { section } => {
                let castle = section.castle();
                if kind == 1 {
                    // Side tower: w = w₁ = w₀(f^{q_i}x₀) − (S_{q_i} − S_n).
                    let q = castle.q_i as u64;
                    let sums = partial_sums(&self.phi, self.a0, base, anchor, q);
                    let end = section.value_with(&base.step(anchor, q as i64), 0).unwrap();
                    let offset = end - sums[q as usize];
                    SumColumn { sums, offset, slope: 0.0, correction: 0.0 }
                } else {
                    let q = castle.q_next as u64;
                    let sums = partial_sums(&self.phi, self.a0, base, anchor, q);
                    let start = section.value_with(anchor, 0).unwrap();
                    let end = section.value(&base.step(anchor, q as i64)).unwrap();
                    let c = (end - start - sums[q as usize]) / q as f64;
                    SumColumn { sums, offset: start, slope: c, correction: c }
                }
            }
        }
    }

    pub fn sample(&self, x: &BasePoint) -> SolutionSample {
        let (corr, w) = self.evaluate(x);
        let phi = self.phi.value(&self.base, x);
        SolutionSample {
            x: self.base.coords(x),
            phi,
            phi_tilde: phi + corr,
            w,
            w_next: self.w(&self.base.step(x, 1)),
        }
    }

    /// Residual and distance over `count` grid points.
    pub fn verify(&self, count: usize) -> SolutionCheck {
        let samples: Vec<SolutionSample> = self.base.grid(count).par_iter().map(|x| self.sample(x)).collect();
        summarize(&samples, self.a0)
    }

    pub fn report(&self, count: usize) -> CohomologyReport {
        let samples: Vec<SolutionSample> = self.base.grid(count).par_iter().map(|x| self.sample(x)).collect();
        let castle = self.castle();
        CohomologyReport {
            a0: self.a0,
            delta: self.delta,
            n0: self.n0,
            castle_index: castle.map(|c| c.index),
            q_i: castle.map(|c| c.q_i),
            q_next: castle.map(|c| c.q_next),
            level: self.level().map(|l| l.0),
            check: summarize(&samples, self.a0),
            samples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basedyn::GOLDEN;
    use num_complex::Complex64;
    use std::f64::consts::TAU;

    #[test]
    fn birkhoff_sum_examples() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        let x = BasePoint::Circle(0.3);
        assert_eq!(birkhoff_sum(&RealFn::cos(1.0, 1, 0), &base, &x, 0), 0.0);
        assert_eq!(birkhoff_sum(&RealFn::constant(2.5), &base, &x, 7), 17.5);
        for n in [1u64, 10, 1000, 12345] {
            let e = |t: f64| Complex64::from_polar(1.0, TAU * t);
            let exact = (e(0.3) * (e(n as f64 * GOLDEN) - 1.0) / (e(GOLDEN) - 1.0)).re;
            let s = birkhoff_sum(&RealFn::cos(1.0, 1, 0), &base, &x, n);
            assert!((s - exact).abs() < 1e-10, "n = {n}: {s} vs {exact}");
        }
    }

    #[test]
    fn constant_phi_is_its_own_solution() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        let sol = solve_circle(&RealFn::constant(0.7), 0.1, &base).unwrap();
        assert_eq!(sol.a0, 0.7);
        for x in base.grid(50) {
            assert_eq!(sol.w(&x), 0.0);
            assert_eq!(sol.phi_tilde(&x), 0.7);
        }
        let odo = BaseSystem::odometer(2, 10).unwrap();
        let sol = solve_cantor(&RealFn::constant(-1.5), 0.1, &odo).unwrap();
        let chk = sol.verify(1 << 10);
        assert_eq!((chk.residual, chk.distance, chk.sup_w), (0.0, 0.0, 0.0));
    }

    #[test]
    fn identity_fiber_keeps_constant_section() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        let castle = Castle::new(GOLDEN, 5).unwrap();
        let skew = Translation {
            base,
            phi: RealFn::constant(0.0),
            shift: 0.0,
        };
        let sec = almost_invariant_section(skew, &castle, Arc::new(|_: &BasePoint| Ok(3.0))).unwrap();
        for x in base.grid(100) {
            assert_eq!(sec.value(&x).unwrap(), 3.0);
        }
    }

    #[test]
    fn incompatible_section_is_rejected() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        let castle = Castle::new(GOLDEN, 5).unwrap();
        let skew = Translation {
            base,
            phi: RealFn::constant(1.0),
            shift: 0.0,
        };
        let err = almost_invariant_section(skew, &castle, Arc::new(|_: &BasePoint| Ok(0.0))).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn cantor_tower_telescopes() {
        let odo = BaseSystem::odometer(2, 12).unwrap();
        let phi = RealFn::cos(1.0, 1, 0);
        let sol = solve_cantor(&phi, 0.2, &odo).unwrap();
        let (_, q) = sol.level().unwrap();
        for k in (0..(1u64 << 12)).step_by(q as usize) {
            let x = BasePoint::Odometer(k);
            assert_eq!(sol.w(&x), 0.0);
            assert!(sol.w(&odo.step(&x, q as i64)).abs() < 1e-12);
        }
    }
}
