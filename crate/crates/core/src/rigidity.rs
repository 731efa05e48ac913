//! Constructive perturbations of non-uniformly hyperbolic and uniformly
//! hyperbolic cocycles: conjugacy to rotations, reduction to constants, and
//! approximation by uniformly hyperbolic cocycles.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basedyn::{BasePoint, BaseSystem, Castle, Tower, centered, frac};
use crate::cache::ColumnCache;
use crate::cocycle::{
    AngleLift, Cocycle, Conjugacy, RealFn, ScaledMat, UhCertificate, UhParams, Verdict, splitting_conjugacy,
    uh_test, windings,
};
use crate::cohomology::{
    AlmostInvariantSection, CohomologyParams, CohomologySolution, DiskAction, FiberMap, almost_invariant_section,
    solve_cantor_with, solve_circle_with,
};
use crate::error::{Error, Result, StageExt};
use crate::hypgeom::{
    DiskPoint, Mat2, geodesic_point, hyp_dist, mobius_disk, phi_adjust, psi_factors, retract_angle,
    retract_so2,
};

const COLUMN_SLOTS: usize = 8;

/// Invariant-section and orthogonality tolerance of a rotation conjugacy.
pub const SECTION_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigidityParams {
    /// Grid for sup norms of cocycles and conjugacies.
    pub norm_grid: usize,
    /// Grid for the subexponential-growth scan.
    pub growth_grid: usize,
    /// Largest iterate count tried by the growth scan.
    pub growth_n_max: u64,
    /// Grid on which results are verified and sampled.
    pub verify_grid: usize,
    /// Nodes per coordinate axis used to tabulate smooth functions (one
    /// dimension; two-dimensional bases use its square root per axis).
    pub sample_nodes: usize,
    pub cohomology: CohomologyParams,
    /// Solver parameters for lifted angle functions, which are costly to
    /// evaluate.
    pub lift_cohomology: CohomologyParams,
    pub uh: UhParams,
    /// Search range |k| ≤ k_max when dragging a rotation angle.
    pub k_max: i64,
}

impl Default for RigidityParams {
    fn default() -> Self {
        RigidityParams {
            norm_grid: 4096,
            growth_grid: 1000,
            growth_n_max: 1 << 16,
            verify_grid: 10_000,
            sample_nodes: 4096,
            cohomology: CohomologyParams::default(),
            lift_cohomology: CohomologyParams {
                grid: 2000,
                max_work: 1 << 26,
            },
            uh: UhParams::default(),
            k_max: 10_000,
        }
    }
}

/// Result of the uniform subexponential-growth scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthScan {
    /// Iterate count from which grid-max (1/n)·log‖A^n‖ stays below δ.
    pub n0: u64,
    pub delta: f64,
    /// grid-max (1/n)·log‖A^n‖ at n₀.
    pub rate: f64,
}

fn scan_points(a: &Cocycle, count: usize) -> Vec<BasePoint> {
    if a.as_constant().is_some() {
        vec![a.base().grid(1)[0]]
    } else {
        a.base().grid(count)
    }
}

/// Smallest n₀ with grid-max (1/n)·log‖A^n(x)‖ < δ at n₀ and 2n₀, found by
/// doubling and then bisection over (n/2, n].
pub fn growth_scan(a: &Cocycle, delta: f64, params: &RigidityParams) -> Result<GrowthScan> {
    let base = *a.base();
    let pts = scan_points(a, params.growth_grid);
    let mut state: Vec<(ScaledMat, BasePoint, u64)> = pts.iter().map(|x| (ScaledMat::IDENTITY, *x, 0)).collect();
    let advance = |state: &mut Vec<(ScaledMat, BasePoint, u64)>, to: u64| -> f64 {
        state
            .par_iter_mut()
            .map(|(p, pt, done)| {
                while *done < to {
                    *done += 1;
                    p.push(a.eval(pt), *done as usize);
                    *pt = base.step(pt, 1);
                }
                p.log_norm() / to as f64
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    };
    let rate_at = |n: u64| -> Result<f64> {
        let rates: Result<Vec<f64>> = pts.par_iter().map(|x| Ok(a.iterate(x, n as i64)?.log_norm() / n as f64)).collect();
        Ok(rates?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    };
    let mut n = 1u64;
    let mut rate_n = advance(&mut state, 1);
    loop {
        if 2 * n > params.growth_n_max {
            return Err(Error::Precondition(format!(
                "(1/n)·log‖A^n‖ is not below δ = {delta:.3e} on the grid by n = {} (rate {rate_n:.3e}); the \
                 input needs a perturbation that drives its Lyapunov exponent to zero, which this library \
                 does not construct",
                params.growth_n_max
            )));
        }
        let rate_2n = advance(&mut state, 2 * n);
        if rate_n < delta && rate_2n < delta {
            let (mut lo, mut hi, mut rate) = (n / 2, n, rate_n);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                let r = rate_at(mid)?;
                if r < delta {
                    hi = mid;
                    rate = r;
                } else {
                    lo = mid;
                }
            }
            return Ok(GrowthScan {
                n0: hi.max(1),
                delta,
                rate,
            });
        }
        n *= 2;
        rate_n = rate_2n;
    }
}

fn orbit_mats(a: &Cocycle, anchor: &BasePoint, q: u64) -> Vec<Mat2> {
    let base = a.base();
    (0..q).map(|n| a.eval(&base.step(anchor, n as i64))).collect()
}

/// Linear interpolation along geodesics of the marked disk values
/// 0, A^Q(f^{−Q}p_m)·0, A^{q_i}(f^{−q_i}p_q)·0 over the castle base, where
/// p_m and p_q sit over (q_i + q_{i+1})α and q_iα.
fn marked_disk_section(a: &Cocycle, castle: &Castle) -> FiberMap<DiskPoint> {
    let base = *a.base();
    let s_mark = castle
        .base_coordinate(castle.marker())
        .expect("marker lies inside the castle base");
    let big = castle.q_i + castle.q_next;
    let values = {
        let (a, castle) = (a.clone(), castle.clone());
        move |y: f64| -> Result<(DiskPoint, DiskPoint)> {
            let top = base.point(castle.gap_i, y);
            let mark = base.point(castle.marker(), y);
            let z_top = mobius_disk(&a.iterate_mat(&base.step(&top, -castle.q_i), castle.q_i)?, DiskPoint::ORIGIN)?;
            let z_mark = mobius_disk(&a.iterate_mat(&base.step(&mark, -big), big)?, DiskPoint::ORIGIN)?;
            Ok((z_mark, z_top))
        }
    };
    let cached = if base.is_two_dimensional() { None } else { Some(values(0.0)) };
    let castle = castle.clone();
    Arc::new(move |p: &BasePoint| {
        let h = base.factor(p).expect("circle factor");
        let s = castle
            .base_coordinate(h)
            .ok_or_else(|| Error::Internal(format!("point {p:?} is outside the castle base")))?;
        let (z_mark, z_top) = match &cached {
            Some(Ok(v)) => *v,
            Some(Err(e)) => return Err(Error::Degenerate(format!("marked values: {e}"))),
            None => values(base.coords(p)[1])?,
        };
        if s <= s_mark {
            geodesic_point(DiskPoint::ORIGIN, z_mark, s / s_mark)
        } else {
            geodesic_point(z_mark, z_top, ((s - s_mark) / (1.0 - s_mark)).min(1.0))
        }
    })
}

enum Layout {
    Castle { section: AlmostInvariantSection<DiskAction> },
    Cantor { q: u64 },
}

/// Perturbation factors Φ_n (Ã = Φ_n·A on floor n; empty where Ã = A) and
/// the invariant section along one tower column.
struct DiskColumn {
    factors: Vec<Mat2>,
    z: Vec<DiskPoint>,
}

/// Lazily evaluated perturbation Ã and invariant section z, computed a
/// tower column at a time.
struct RotationEngine {
    cocycle: Cocycle,
    layout: Layout,
    columns: ColumnCache<DiskColumn>,
}

impl RotationEngine {
    fn base(&self) -> &BaseSystem {
        self.cocycle.base()
    }

    fn locate(&self, x: &BasePoint) -> (u8, u64) {
        match &self.layout {
            Layout::Cantor { q } => {
                let BasePoint::Odometer(k) = *x else {
                    panic!("odometer perturbation evaluated at {x:?}");
                };
                (0, k % q)
            }
            Layout::Castle { section } => {
                let r = section.castle().locate(self.base().factor(x).expect("circle factor"));
                (u8::from(r.tower == Tower::Side), r.floor)
            }
        }
    }

    fn column_at(&self, x: &BasePoint) -> Result<(Arc<DiskColumn>, usize)> {
        let (kind, floor) = self.locate(x);
        let base = self.base();
        let anchor = base.step(x, -(floor as i64));
        let col = self
            .columns
            .get_or_try(base, kind, &anchor, || self.column(kind, &anchor))?;
        Ok((col, floor as usize))
    }

    fn column(&self, kind: u8, anchor: &BasePoint) -> Result<DiskColumn> {
        let a = &self.cocycle;
        let base = *a.base();
        match &self.layout {
            Layout::Cantor { q } => {
                let mats = orbit_mats(a, anchor, *q);
                let factors = psi_factors(&mats, DiskPoint::ORIGIN, DiskPoint::ORIGIN)?;
                let z = push_forward(&factors, &mats, DiskPoint::ORIGIN)?;
                Ok(DiskColumn { factors, z })
            }
            Layout::Castle { section } => {
                let castle = section.castle();
                if kind == 1 {
                    // Side tower: z = z₁, pulled back from the castle base.
                    let q = castle.q_i as usize;
                    let mut z = vec![DiskPoint::ORIGIN; q + 1];
                    z[q] = section.value_with(&base.step(anchor, q as i64), 0)?;
                    for n in (0..q).rev() {
                        let m = a.eval(&base.step(anchor, n as i64));
                        z[n] = mobius_disk(&m.inv(), z[n + 1])?;
                    }
                    z.truncate(q);
                    Ok(DiskColumn { factors: Vec::new(), z })
                } else {
                    // Main tower: steer z₁(x₀) onto z₁(f^{q_{i+1}}x₀).
                    let q = castle.q_next as u64;
                    let mats = orbit_mats(a, anchor, q);
                    let start = section.value_with(anchor, 0)?;
                    let end = section.value(&base.step(anchor, q as i64))?;
                    let factors = psi_factors(&mats, start, end)?;
                    let z = push_forward(&factors, &mats, start)?;
                    Ok(DiskColumn { factors, z })
                }
            }
        }
    }

    /// (Ã(x), z(x)).
    fn at(&self, x: &BasePoint) -> Result<(Mat2, DiskPoint)> {
        let (col, n) = self.column_at(x)?;
        let m = self.cocycle.eval(x);
        let tilde = match col.factors.get(n) {
            Some(f) => *f * m,
            None => m,
        };
        Ok((tilde, col.z[n]))
    }

    fn section(&self, x: &BasePoint) -> Result<DiskPoint> {
        let (col, n) = self.column_at(x)?;
        Ok(col.z[n])
    }
}

/// z_0 = p, z_{n+1} = Φ_n A_n · z_n, for n < len.
fn push_forward(factors: &[Mat2], mats: &[Mat2], p: DiskPoint) -> Result<Vec<DiskPoint>> {
    let mut z = Vec::with_capacity(mats.len());
    let mut cur = p;
    for (f, m) in factors.iter().zip(mats) {
        z.push(cur);
        cur = mobius_disk(&(*f * *m), cur)?;
    }
    Ok(z)
}

/// One verification point of a rotation conjugacy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationSample {
    pub x: [f64; 2],
    pub a: Mat2,
    pub a_tilde: Mat2,
    pub z: DiskPoint,
    pub z_next: DiskPoint,
    /// B(x) = Φ(z(x), 0).
    pub b: Mat2,
    pub b_next: Mat2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationCheck {
    /// sup ‖Ã − A‖.
    pub distance: f64,
    /// sup ‖ÃA⁻¹ − Id‖.
    pub step_bound: f64,
    /// sup d(Ã(x)·z(x), z(f(x))).
    pub invariance: f64,
    /// sup orthogonality defect of B(f(x))Ã(x)B(x)⁻¹.
    pub orthogonality: f64,
    pub points: usize,
}

fn rotation_check(samples: &[RotationSample]) -> RotationCheck {
    let mut out = RotationCheck {
        distance: 0.0,
        step_bound: 0.0,
        invariance: 0.0,
        orthogonality: 0.0,
        points: samples.len(),
    };
    for s in samples {
        out.distance = out.distance.max(s.a_tilde.dist(&s.a));
        out.step_bound = out.step_bound.max((s.a_tilde * s.a.inv()).dist(&Mat2::IDENTITY));
        let moved = mobius_disk(&s.a_tilde, s.z).map_or(f64::INFINITY, |w| hyp_dist(w, s.z_next));
        out.invariance = out.invariance.max(moved);
        let r = s.b_next * s.a_tilde * s.b.inv();
        out.orthogonality = out.orthogonality.max(r.orthogonality_defect());
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationReport {
    pub delta0: f64,
    /// δ with (e^{7δ} − 1)·‖A‖ < δ₀.
    pub delta: f64,
    pub sup_norm: f64,
    pub n0: u64,
    pub castle_index: Option<usize>,
    pub q_i: Option<i64>,
    pub q_next: Option<i64>,
    /// Odometer level and column height of the Cantor construction.
    pub level: Option<u32>,
    pub column: Option<u64>,
    pub check: RotationCheck,
    pub samples: Vec<RotationSample>,
}

impl RotationReport {
    pub fn recheck(&self) -> RotationCheck {
        rotation_check(&self.samples)
    }

    /// e^{7δ} − 1, the a priori bound on sup ‖ÃA⁻¹ − Id‖.
    pub fn step_limit(&self) -> f64 {
        (7.0 * self.delta).exp_m1()
    }

    /// Names of the violated result invariants.
    pub fn failures(&self) -> Vec<&'static str> {
        let c = &self.check;
        let mut out = Vec::new();
        if !(c.distance < self.delta0) {
            out.push("distance");
        }
        if !(c.step_bound < self.step_limit()) {
            out.push("step bound");
        }
        if !(c.invariance < SECTION_TOL) {
            out.push("invariance");
        }
        if !(c.orthogonality < SECTION_TOL) {
            out.push("orthogonality");
        }
        out
    }
}

/// A perturbation Ã of A with an invariant disk section z, so that
/// B(x) = Φ(z(x), 0) conjugates Ã to a rotation cocycle.
#[derive(Clone)]
pub struct RotationConjugacy {
    engine: Arc<RotationEngine>,
    pub perturbed: Cocycle,
    pub conjugacy: Conjugacy,
    pub report: RotationReport,
}

impl fmt::Debug for RotationConjugacy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RotationConjugacy")
            .field("delta0", &self.report.delta0)
            .field("delta", &self.report.delta)
            .field("n0", &self.report.n0)
            .field("check", &self.report.check)
            .finish()
    }
}

impl RotationConjugacy {
    pub fn section(&self, x: &BasePoint) -> Result<DiskPoint> {
        self.engine.section(x)
    }

    pub fn original(&self) -> &Cocycle {
        &self.engine.cocycle
    }

    pub fn sample(&self, x: &BasePoint) -> Result<RotationSample> {
        sample_rotation(&self.engine, x)
    }
}

fn sample_rotation(engine: &RotationEngine, x: &BasePoint) -> Result<RotationSample> {
    let base = engine.base();
    let fx = base.step(x, 1);
    let (a_tilde, z) = engine.at(x)?;
    let z_next = engine.section(&fx)?;
    Ok(RotationSample {
        x: base.coords(x),
        a: engine.cocycle.eval(x),
        a_tilde,
        z,
        z_next,
        b: phi_adjust(z, DiskPoint::ORIGIN)?,
        b_next: phi_adjust(z_next, DiskPoint::ORIGIN)?,
    })
}

/// Perturb a non-uniformly hyperbolic cocycle with uniformly subexponential
/// growth to one conjugate to a rotation cocycle, within δ₀ in C⁰.
pub fn rotate_conjugate(a: &Cocycle, delta0: f64, params: &RigidityParams) -> Result<RotationConjugacy> {
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::Input(format!("perturbation size must be positive, got {delta0}")));
    }
    let base = *a.base();
    let cert = uh_test(a, &params.uh)?;
    if cert.verdict == Verdict::Uh {
        return Err(Error::Precondition(
            "the cocycle is uniformly hyperbolic; it is reduced by reduce_uh instead".into(),
        ));
    }
    let sup_norm = a.sup_norm(params.norm_grid);
    let delta = (delta0 / sup_norm).ln_1p() / 7.0 * (1.0 - 1e-3);
    let growth = growth_scan(a, delta, params)?;
    let q_min = (growth.n0 as f64).max(sup_norm.ln() / delta);
    let (layout, castle_data, level) = match base {
        BaseSystem::Odometer { base: b, depth } => {
            let mut level = 1u32;
            while ((b as u64).pow(level) as f64) <= q_min {
                level += 1;
                if level > depth {
                    return Err(Error::Budget(format!(
                        "columns taller than {q_min:.0} need odometer depth above {depth}"
                    )));
                }
            }
            let q = (b as u64).pow(level);
            (Layout::Cantor { q }, None, Some((level, q)))
        }
        _ => {
            let alpha = base
                .circle_alpha()
                .ok_or_else(|| Error::Input("rotate_conjugate needs a circle or odometer factor".into()))?;
            let index = Castle::index_for(alpha, q_min).map_err(|_| {
                Error::Budget(format!(
                    "q_i > {q_min:.3e} is beyond the continued-fraction table; increase δ₀"
                ))
            })?;
            let castle = Castle::new(alpha, index)?;
            let y0 = marked_disk_section(a, &castle);
            let skew = DiskAction { cocycle: a.clone() };
            let section = almost_invariant_section(skew, &castle, y0).stage("almost-invariant section")?;
            let data = (castle.index, castle.q_i, castle.q_next);
            (Layout::Castle { section }, Some(data), None)
        }
    };
    let engine = Arc::new(RotationEngine {
        cocycle: a.clone(),
        layout,
        columns: ColumnCache::new(COLUMN_SLOTS),
    });
    let samples: Result<Vec<RotationSample>> = base
        .grid(params.verify_grid)
        .par_iter()
        .map(|x| sample_rotation(&engine, x))
        .collect();
    let samples = samples.stage("verification grid")?;
    let report = RotationReport {
        delta0,
        delta,
        sup_norm,
        n0: growth.n0,
        castle_index: castle_data.map(|c| c.0),
        q_i: castle_data.map(|c| c.1),
        q_next: castle_data.map(|c| c.2),
        level: level.map(|l| l.0),
        column: level.map(|l| l.1),
        check: rotation_check(&samples),
        samples,
    };
    let perturbed = {
        let e = engine.clone();
        Cocycle::from_fn(base, "rotation-conjugate perturbation", move |x| {
            e.at(x).unwrap_or_else(|err| panic!("perturbation undefined at {x:?}: {err}")).0
        })
    };
    let conjugacy = {
        let e = engine.clone();
        Conjugacy::genuine(base, "Φ(z(x), 0)", move |x| {
            let z = e.section(x).unwrap_or_else(|err| panic!("section undefined at {x:?}: {err}"));
            phi_adjust(z, DiskPoint::ORIGIN).expect("disk points are interior")
        })
    };
    Ok(RotationConjugacy {
        engine,
        perturbed,
        conjugacy,
        report,
    })
}

/// One verification point of a conjugacy to a constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacySample {
    pub x: [f64; 2],
    pub a: Mat2,
    pub a_tilde: Mat2,
    pub b: Mat2,
    pub b_next: Mat2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantCheck {
    /// sup ‖Ã − A‖.
    pub distance: f64,
    /// sup ‖B(f(x))Ã(x)B(x)⁻¹ − target‖, up to sign when projective.
    pub residual: f64,
    /// sup ‖B(x)‖.
    pub distortion: f64,
    pub points: usize,
}

fn constant_check(samples: &[ConjugacySample], target: &Mat2, projective: bool) -> ConstantCheck {
    let mut out = ConstantCheck {
        distance: 0.0,
        residual: 0.0,
        distortion: 0.0,
        points: samples.len(),
    };
    for s in samples {
        out.distance = out.distance.max(s.a_tilde.dist(&s.a));
        let m = s.b_next * s.a_tilde * s.b.inv();
        let mut r = m.dist(target);
        if projective {
            r = r.min(m.scale(-1.0).dist(target));
        }
        out.residual = out.residual.max(r);
        out.distortion = out.distortion.max(s.b.norm());
    }
    out
}

fn conjugacy_samples(
    base: &BaseSystem,
    count: usize,
    a: &Cocycle,
    tilde: &Cocycle,
    b: &Conjugacy,
) -> Vec<ConjugacySample> {
    base.grid(count)
        .par_iter()
        .map(|x| ConjugacySample {
            x: base.coords(x),
            a: a.eval(x),
            a_tilde: tilde.eval(x),
            b: b.eval(x),
            b_next: b.eval(&base.step(x, 1)),
        })
        .collect()
}

/// A uniformly hyperbolic cocycle made conjugate to the constant D_{a₀}.
#[derive(Clone)]
pub struct UhReduction {
    pub perturbed: Cocycle,
    /// Pointwise PSL conjugacy with B(f(x))Ã(x)B(x)⁻¹ = ±D_{a₀}.
    pub conjugacy: Conjugacy,
    pub a0: f64,
    pub solution: CohomologySolution,
    pub report: ReductionReport,
}

impl fmt::Debug for UhReduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UhReduction")
            .field("a0", &self.a0)
            .field("check", &self.report.check)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionReport {
    pub delta0: f64,
    pub delta: f64,
    pub a0: f64,
    /// Shift added so that a₀ ≠ 0.
    pub shift: f64,
    /// sup ‖B‖ of the splitting frame.
    pub frame_distortion: f64,
    /// Estimated interpolation error of the tabulated expansion rate.
    pub interpolation: f64,
    pub target: Mat2,
    pub check: ConstantCheck,
    pub samples: Vec<ConjugacySample>,
}

impl ReductionReport {
    pub fn recheck(&self) -> ConstantCheck {
        constant_check(&self.samples, &self.target, true)
    }
}

/// Tabulate a function on a regular grid of the base; returns the table
/// and the largest deviation seen at cell midpoints.
fn tabulate(phi: &RealFn, base: &BaseSystem, nodes: usize) -> Result<(RealFn, f64)> {
    match *base {
        BaseSystem::Odometer { .. } => {
            let size = base.odometer_size().unwrap();
            if size > 1 << 16 {
                return Err(Error::Budget(format!(
                    "tabulating over {size} odometer points; use a shallower odometer"
                )));
            }
            let values: Vec<f64> = (0..size).into_par_iter().map(|k| phi.value(base, &BasePoint::Odometer(k))).collect();
            Ok((RealFn::Table { values }, 0.0))
        }
        _ => {
            let (nx, ny) = if base.is_two_dimensional() {
                let side = (nodes as f64).sqrt().ceil() as usize;
                (side, side)
            } else {
                (nodes, 1)
            };
            let values: Vec<f64> = (0..nx * ny)
                .into_par_iter()
                .map(|k| {
                    let (i, j) = (k / ny, k % ny);
                    phi.value(base, &base.point(i as f64 / nx as f64, j as f64 / ny as f64))
                })
                .collect();
            let table = RealFn::Grid { nx, ny, values };
            let probes = 512usize;
            let err = (0..probes)
                .into_par_iter()
                .map(|k| {
                    let i = (k * nx) / probes;
                    let j = (k * 7919) % ny.max(1);
                    let y = if ny > 1 { (j as f64 + 0.5) / ny as f64 } else { 0.0 };
                    let p = base.point((i as f64 + 0.5) / nx as f64, y);
                    (table.value(base, &p) - phi.value(base, &p)).abs()
                })
                .reduce(|| 0.0, f64::max);
            Ok((table, err))
        }
    }
}

fn solve_on(phi: &RealFn, delta: f64, base: &BaseSystem, params: &CohomologyParams) -> Result<CohomologySolution> {
    match base {
        BaseSystem::Odometer { .. } => solve_cantor_with(phi, delta, base, params),
        _ => solve_circle_with(phi, delta, base, params),
    }
}

/// Reduce a uniformly hyperbolic cocycle: write A = B·D_φ·B⁻¹ through the
/// splitting, solve φ̃ = w∘f − w + a₀, and conjugate the perturbation
/// Ã = B·D_{φ̃}·B⁻¹ to D_{a₀} by B·D_w.
pub fn reduce_uh(a: &Cocycle, delta0: f64, params: &RigidityParams) -> Result<UhReduction> {
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::Input(format!("perturbation size must be positive, got {delta0}")));
    }
    let base = *a.base();
    let cert = uh_test(a, &params.uh)?;
    let split = splitting_conjugacy(a, &cert).stage("splitting")?;
    let sup_norm = a.sup_norm(params.norm_grid);
    let frame = if a.as_constant().is_some() {
        split.b.eval(&base.grid(1)[0]).norm()
    } else {
        split.b.distortion(params.norm_grid.min(1024))
    };
    let (phi, interpolation) = if a.as_constant().is_some() {
        (RealFn::constant(split.log_rate.value(&base, &base.grid(1)[0])), 0.0)
    } else {
        tabulate(&split.log_rate, &base, params.sample_nodes)?
    };
    // (e^{7δ + interpolation} − 1)·‖A‖·κ² < δ₀/2 keeps ‖Ã − A‖ below δ₀/2.
    let scale = sup_norm * frame * frame;
    let slack = (0.5 * delta0 / scale).ln_1p() - 2.0 * interpolation;
    if !(slack > 0.0) {
        return Err(Error::Resolution(format!(
            "tabulated expansion rate is off by {interpolation:.3e}, too coarse for δ₀ = {delta0}"
        )));
    }
    let delta = slack / 7.0 * (1.0 - 1e-3);
    let solution = solve_on(&phi, delta, &base, &params.cohomology).stage("cohomological equation")?;
    let shift = if solution.a0.abs() < 1e-9 { 0.25 * slack } else { 0.0 };
    let a0 = solution.a0 + shift;
    let perturbed = {
        let (a, b, sol, exact, phi) = (a.clone(), split.b.clone(), solution.clone(), split.log_rate.clone(), phi.clone());
        Cocycle::from_fn(base, "reduced perturbation", move |x| {
            let c = phi.value(&base, x) + sol.correction(x) - exact.value(&base, x) + shift;
            let bx = b.eval(x);
            a.eval(x) * bx * Mat2::diag_exp(c) * bx.inv()
        })
    };
    let conjugacy = {
        let (b, sol) = (split.b.clone(), solution.clone());
        Conjugacy::pointwise(base, "(B·D_w)⁻¹", move |x| Mat2::diag_exp(-sol.w(x)) * b.eval(x).inv())
    };
    let target = Mat2::diag_exp(a0);
    let samples = conjugacy_samples(&base, params.verify_grid, a, &perturbed, &conjugacy);
    let report = ReductionReport {
        delta0,
        delta,
        a0,
        shift,
        frame_distortion: frame,
        interpolation,
        target,
        check: constant_check(&samples, &target, true),
        samples,
    };
    Ok(UhReduction {
        perturbed,
        conjugacy,
        a0,
        solution,
        report,
    })
}

/// A perturbation conjugate to a constant rotation R_{angle}.
#[derive(Clone)]
pub struct ConstantRotation {
    pub perturbed: Cocycle,
    /// Genuine conjugacy with B(f(x))Ã(x)B(x)⁻¹ = R_{angle}.
    pub conjugacy: Conjugacy,
    pub angle: f64,
    pub stage1: Option<RotationConjugacy>,
    pub report: ConstantRotationReport,
}

impl fmt::Debug for ConstantRotation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConstantRotation")
            .field("angle", &self.angle)
            .field("check", &self.report.check)
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantRotationReport {
    pub delta0: f64,
    pub angle: f64,
    /// Solver tolerance for the lifted angle.
    pub delta: Option<f64>,
    /// sup ‖B₁‖ of the rotation-conjugacy stage.
    pub frame_distortion: f64,
    pub stage1: Option<RotationCheck>,
    pub target: Mat2,
    pub check: ConstantCheck,
    pub samples: Vec<ConjugacySample>,
}

impl ConstantRotationReport {
    pub fn recheck(&self) -> ConstantCheck {
        constant_check(&self.samples, &self.target, false)
    }
}

fn check_windings(a: &Cocycle) -> Result<()> {
    if a.base().loop_count() == 0 {
        return Ok(());
    }
    let w = windings(a)?;
    if w.iter().any(|&k| k != 0) {
        return Err(Error::Obstruction { windings: w });
    }
    Ok(())
}

/// Perturb a cocycle homotopic to a constant, with subexponential growth,
/// to one conjugate to a constant rotation.
pub fn reduce_to_constant_rotation(a: &Cocycle, delta0: f64, params: &RigidityParams) -> Result<ConstantRotation> {
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::Input(format!("perturbation size must be positive, got {delta0}")));
    }
    let base = *a.base();
    check_windings(a)?;
    if let Some(m) = a.as_constant()
        && m.orthogonality_defect() < 1e-12
    {
        let angle = retract_angle(&m);
        let conjugacy = Conjugacy::identity(base);
        let target = Mat2::rotation(angle);
        let samples = conjugacy_samples(&base, params.verify_grid.min(64), a, a, &conjugacy);
        let report = ConstantRotationReport {
            delta0,
            angle,
            delta: None,
            frame_distortion: 1.0,
            stage1: None,
            target,
            check: constant_check(&samples, &target, false),
            samples,
        };
        return Ok(ConstantRotation {
            perturbed: a.clone(),
            conjugacy,
            angle,
            stage1: None,
            report,
        });
    }
    let stage1 = rotate_conjugate(a, 0.5 * delta0, params).stage("rotation conjugacy")?;
    let failures = stage1.report.failures();
    if !failures.is_empty() {
        return Err(Error::Budget(format!(
            "rotation-conjugacy stage violates {failures:?}: {:?}",
            stage1.report.check
        )));
    }
    let kappa = stage1.report.samples.iter().map(|s| s.b.norm()).fold(1.0, f64::max);
    let tilde_norm = stage1.report.samples.iter().map(|s| s.a_tilde.norm()).fold(0.0, f64::max);
    // C = r(B₁)ᵀ·B₁ is positive definite, hence homotopic to the identity,
    // and C(f(x))Ã₁(x)C(x)⁻¹ is rotation-valued.
    let polar = {
        let b1 = stage1.conjugacy.clone();
        move |x: &BasePoint| {
            let b = b1.eval(x);
            retract_so2(&b).transpose() * b
        }
    };
    let polar = Arc::new(polar);
    let rotated = {
        let (t, c) = (stage1.perturbed.clone(), polar.clone());
        Cocycle::from_fn(base, "rotation-valued stage", move |x| c(&base.step(x, 1)) * t.eval(x) * c(x).inv())
    };
    let lift = AngleLift::build(&rotated).stage("angle lift")?;
    let phi = {
        let (r, lift) = (rotated.clone(), lift.clone());
        RealFn::custom(move |x| lift.lift(&base, &r.eval(x), x))
    };
    // ‖Ã − Ã₁‖ ≤ ‖Ã₁‖·κ²·|φ̃ − φ| < ‖Ã₁‖·κ²·7δ ≤ δ₀/2.
    let delta = 0.5 * delta0 / (7.0 * tilde_norm * kappa * kappa) * (1.0 - 1e-3);
    let solution = solve_on(&phi, delta, &base, &params.lift_cohomology).stage("cohomological equation")?;
    let angle = solution.a0;
    let perturbed = {
        let (t, c, r, sol, phi) = (stage1.perturbed.clone(), polar.clone(), rotated.clone(), solution.clone(), phi.clone());
        Cocycle::from_fn(base, "constant-rotation perturbation", move |x| {
            // R_{φ̃(x)}·A₂(x)⁻¹ is the rotation by φ̃ − φ whatever the branch.
            let turn = Mat2::rotation(phi.value(&base, x) + sol.correction(x)) * r.eval(x).inv();
            let cx = c(x);
            t.eval(x) * cx.inv() * turn * cx
        })
    };
    let conjugacy = {
        let (c, sol) = (polar.clone(), solution.clone());
        Conjugacy::genuine(base, "R_{−w}·r(B₁)ᵀB₁", move |x| Mat2::rotation(-sol.w(x)) * c(x))
    };
    let target = Mat2::rotation(angle);
    let samples = conjugacy_samples(&base, params.verify_grid, a, &perturbed, &conjugacy);
    let report = ConstantRotationReport {
        delta0,
        angle,
        delta: Some(delta),
        frame_distortion: kappa,
        stage1: Some(stage1.report.check),
        target,
        check: constant_check(&samples, &target, false),
        samples,
    };
    Ok(ConstantRotation {
        perturbed,
        conjugacy,
        angle,
        stage1: Some(stage1),
        report,
    })
}

/// B_* with B_*·A_*·B_*⁻¹ a rotation, for elliptic A_*.
fn elliptic_frame(m: &Mat2) -> Mat2 {
    // Fixed point u + iv of the half-plane action.
    let tr = m.trace();
    let u = (m.a - m.d) / (2.0 * m.c);
    let v = (4.0 - tr * tr).sqrt() / (2.0 * m.c.abs());
    let shear = Mat2::new(1.0, -u, 0.0, 1.0);
    let scale = Mat2::new(v.powf(-0.5), 0.0, 0.0, v.sqrt());
    scale * shear
}

/// Target classification for [`drag_to_constant`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Identity,
    Elliptic,
    Parabolic,
}

/// Conjugation of a (slightly moved) constant rotation onto a
/// non-hyperbolic constant A_*.
#[derive(Clone)]
pub struct Drag {
    pub kind: TargetKind,
    pub k: i64,
    /// Odometer level of the height function on Cantor bases.
    pub level: Option<u32>,
    pub theta: f64,
    pub theta_prime: f64,
    pub beta: f64,
    /// θ − θ′, the size of the angle change.
    pub residual: f64,
    pub b_star: Mat2,
    /// Perturbation of R_θ conjugated onto A_*: R_{θ′}, or its parabolic
    /// modification.
    pub perturbed: Cocycle,
    pub conjugacy: Conjugacy,
    /// Additional C⁰ change made by the parabolic substitution.
    pub extra: f64,
}

impl fmt::Debug for Drag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Drag")
            .field("kind", &self.kind)
            .field("k", &self.k)
            .field("level", &self.level)
            .field("theta_prime", &self.theta_prime)
            .field("residual", &self.residual)
            .field("extra", &self.extra)
            .finish()
    }
}

fn wrap_angle(t: f64) -> f64 {
    centered(t / TAU) * TAU
}

/// Height function whose rotations shift the angle: the circle coordinate,
/// or the level-i cyclic coordinate k/q on odometers.
#[derive(Clone, Copy, Debug)]
enum Height {
    Circle,
    Cantor { q: u64 },
}

impl Height {
    fn value(&self, base: &BaseSystem, x: &BasePoint) -> f64 {
        match *self {
            Height::Circle => frac(base.coords(x)[0]),
            Height::Cantor { q } => match *x {
                BasePoint::Odometer(k) => (k % q) as f64 / q as f64,
                _ => panic!("odometer height at {x:?}"),
            },
        }
    }
}

/// Find k (and an odometer level) with θ + 2πk·step ≡ β within ε, where
/// step is α or 1/q.
fn search_shift(theta: f64, beta: f64, base: &BaseSystem, eps: f64, k_max: i64) -> Result<(i64, Height, Option<u32>, f64)> {
    let mut best = (0i64, f64::INFINITY);
    let mut try_step = |step: f64, range: i64| -> Option<(i64, f64)> {
        for mag in 0..=range {
            for k in if mag == 0 { vec![0] } else { vec![mag, -mag] } {
                let r = wrap_angle(theta + TAU * k as f64 * step - beta);
                if r.abs() < best.1 {
                    best = (k, r.abs());
                }
                if r.abs() < eps {
                    return Some((k, r));
                }
            }
        }
        None
    };
    match *base {
        BaseSystem::Odometer { base: b, depth } => {
            for level in 1..=depth {
                let q = (b as u64).pow(level);
                let range = ((q / 2) as i64).min(k_max);
                if let Some((k, r)) = try_step(1.0 / q as f64, range) {
                    return Ok((k, Height::Cantor { q }, Some(level), r));
                }
            }
        }
        _ => {
            let alpha = base
                .circle_alpha()
                .ok_or_else(|| Error::Input("drag needs a circle or odometer factor".into()))?;
            if let Some((k, r)) = try_step(alpha, k_max) {
                return Ok((k, Height::Circle, None, r));
            }
        }
    }
    Err(Error::Budget(format!(
        "no |k| ≤ {k_max} brings the angle within {eps:.3e}; best k = {} misses by {:.3e}",
        best.0, best.1
    )))
}

/// Move a constant rotation R_θ to R_{θ′} with θ′ + 2πkα ≡ β and conjugate
/// it onto A_* by B(x) = B_*⁻¹·R_{2πk h(x)}. Parabolic targets pass through
/// ±Id and then substitute an ε-close parabolic constant.
pub fn drag_to_constant(theta: f64, target: &Mat2, base: &BaseSystem, eps: f64, k_max: i64) -> Result<Drag> {
    if !(eps > 0.0) {
        return Err(Error::Input(format!("drag tolerance must be positive, got {eps}")));
    }
    target.check_unimodular()?;
    let tr = target.trace();
    let sigma = if tr >= 0.0 { 1.0 } else { -1.0 };
    let is_scalar = target.max_abs_diff(&Mat2::IDENTITY.scale(sigma)) < 1e-12;
    let kind = if is_scalar {
        TargetKind::Identity
    } else if tr.abs() < 2.0 - 1e-12 {
        TargetKind::Elliptic
    } else if tr.abs() <= 2.0 + 1e-12 {
        TargetKind::Parabolic
    } else {
        return Err(Error::Input(format!("target with trace {tr} is hyperbolic")));
    };
    let (b_star, beta) = match kind {
        TargetKind::Elliptic => {
            let b = elliptic_frame(target);
            (b, retract_angle(&(b * *target * b.inv())))
        }
        _ => (Mat2::IDENTITY, if sigma > 0.0 { 0.0 } else { PI }),
    };
    let (k, height, level, residual) = search_shift(theta, beta, base, eps, k_max)?;
    let theta_prime = theta - residual;
    let base = *base;
    let turn = move |x: &BasePoint| Mat2::rotation(TAU * k as f64 * height.value(&base, x));
    let (perturbed, conjugacy, extra) = match kind {
        TargetKind::Parabolic => {
            // A_* = σ·G·(1 t; 0 1)·G⁻¹ with G = [v, R_{π/2}v], v an eigenvector.
            let m = *target;
            let rows = [[m.a - sigma, m.b], [m.c, m.d - sigma]];
            let r = if rows[0][0].hypot(rows[0][1]) >= rows[1][0].hypot(rows[1][1]) { rows[0] } else { rows[1] };
            let angle = (-r[0]).atan2(r[1]);
            let g = Mat2::rotation(angle);
            let t = (g.inv() * m * g).b * sigma;
            let s = (eps / t.abs()).sqrt();
            let sc = Mat2::new(s, 0.0, 0.0, 1.0 / s);
            let p = Mat2::new(1.0, eps * t.signum(), 0.0, 1.0).scale(sigma);
            let gs = g * sc.inv();
            let perturbed = Cocycle::from_fn(base, "parabolic substitution", move |x| {
                turn(&base.step(x, 1)).inv() * p * turn(x)
            });
            let conj = Conjugacy::genuine(base, "G·S⁻¹·R_{2πkh}", move |x| gs * turn(x));
            (perturbed, conj, eps)
        }
        _ => {
            let bi = b_star.inv();
            let perturbed = Cocycle::constant(base, Mat2::rotation(theta_prime));
            let conj = Conjugacy::genuine(base, "B_*⁻¹·R_{2πkh}", move |x| bi * turn(x));
            (perturbed, conj, 0.0)
        }
    };
    Ok(Drag {
        kind,
        k,
        level,
        theta,
        theta_prime,
        beta,
        residual,
        b_star,
        perturbed,
        conjugacy,
        extra,
    })
}

/// One link of a conjugacy chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub stage: String,
    /// sup ‖B‖ of the stage's conjugacy.
    pub distortion: f64,
    /// C⁰ change made by the stage.
    pub distance: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UhApproximationReport {
    pub delta0: f64,
    /// sup ‖Ã − A‖ over the verification grid.
    pub achieved: f64,
    pub within_budget: bool,
    pub chain: Vec<ChainLink>,
    /// Product of the chain's distortions.
    pub total_distortion: f64,
    /// The hyperbolic constant H_λ the perturbation is conjugate to.
    pub target: Option<Mat2>,
    pub lambda: Option<f64>,
    pub k: Option<i64>,
    /// Angle left after dragging, replaced by H_λ.
    pub residual_angle: Option<f64>,
    pub certificate: UhCertificate,
    pub check: Option<ConstantCheck>,
    pub samples: Vec<ConjugacySample>,
}

impl UhApproximationReport {
    pub fn recheck(&self) -> Option<ConstantCheck> {
        self.target.map(|t| constant_check(&self.samples, &t, false))
    }
}

/// A uniformly hyperbolic perturbation of a cocycle.
#[derive(Clone)]
pub struct UhApproximation {
    pub perturbed: Cocycle,
    /// B(f(x))Ã(x)B(x)⁻¹ = H_λ; absent when the input was already UH.
    pub conjugacy: Option<Conjugacy>,
    pub reduction: Option<ConstantRotation>,
    pub report: UhApproximationReport,
}

impl fmt::Debug for UhApproximation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UhApproximation")
            .field("achieved", &self.report.achieved)
            .field("within_budget", &self.report.within_budget)
            .field("lambda", &self.report.lambda)
            .field("k", &self.report.k)
            .field("verdict", &self.report.certificate.verdict)
            .finish()
    }
}

/// Approximate a cocycle homotopic to a constant by a uniformly hyperbolic
/// one: reduce to a constant rotation, drag the angle near zero, and replace
/// the remaining small rotation by diag(λ, 1/λ).
pub fn approximate_by_uh(a: &Cocycle, delta0: f64, params: &RigidityParams) -> Result<UhApproximation> {
    if !(delta0 > 0.0 && delta0.is_finite()) {
        return Err(Error::Input(format!("perturbation size must be positive, got {delta0}")));
    }
    let base = *a.base();
    let cert = uh_test(a, &params.uh)?;
    if cert.is_uh() {
        return Ok(UhApproximation {
            perturbed: a.clone(),
            conjugacy: None,
            reduction: None,
            report: UhApproximationReport {
                delta0,
                achieved: 0.0,
                within_budget: true,
                chain: Vec::new(),
                total_distortion: 1.0,
                target: None,
                lambda: None,
                k: None,
                residual_angle: None,
                certificate: cert,
                check: None,
                samples: Vec::new(),
            },
        });
    }
    check_windings(a)?;
    let reduction = reduce_to_constant_rotation(a, 0.5 * delta0, params).stage("constant rotation")?;
    let kappa = reduction.report.check.distortion.max(1.0);
    // ‖B(f(x))⁻¹(H_λ − R_ρ)B(x)‖ ≤ κ²·((λ − 1) + |ρ|) ≤ 0.9·δ₀/2.
    let budget = 0.9 * 0.5 * delta0 / (kappa * kappa);
    let (drag, within_budget) = match drag_to_constant(reduction.angle, &Mat2::IDENTITY, &base, 0.5 * budget, params.k_max) {
        Ok(d) => (d, true),
        Err(Error::Budget(_)) => {
            let d = drag_to_constant(reduction.angle, &Mat2::IDENTITY, &base, PI, params.k_max)?;
            (d, false)
        }
        Err(e) => return Err(e.at("drag")),
    };
    let rho = drag.residual;
    let lambda = 1.0 + if within_budget { budget - rho.abs() } else { 0.5 * budget };
    let h = Mat2::hyperbolic(lambda);
    let conjugacy = drag.conjugacy.then(&reduction.conjugacy)?;
    let perturbed = {
        let t = conjugacy.clone();
        Cocycle::from_fn(base, "uniformly hyperbolic perturbation", move |x| {
            t.eval(&base.step(x, 1)).inv() * h * t.eval(x)
        })
    };
    let samples = conjugacy_samples(&base, params.verify_grid, a, &perturbed, &conjugacy);
    let spread = samples.iter().map(|s| s.b.norm() * s.b.norm()).fold(1.0, f64::max);
    let uh_params = params.uh.for_rate(lambda.ln(), spread);
    let certificate = uh_test(&perturbed, &uh_params).stage("certificate")?;
    if !certificate.is_uh() {
        return Err(Error::Budget(format!(
            "perturbation conjugate to diag({lambda}, 1/{lambda}) was not certified: {:?}",
            certificate.verdict
        )));
    }
    let check = constant_check(&samples, &h, false);
    let stage_distance = reduction.report.check.distance;
    let chain = vec![
        ChainLink {
            stage: "constant rotation".into(),
            distortion: kappa,
            distance: stage_distance,
        },
        ChainLink {
            stage: format!("drag by k = {}", drag.k),
            distortion: 1.0,
            distance: 0.0,
        },
        ChainLink {
            stage: format!("R_ρ → diag(λ, 1/λ), ρ = {rho:.3e}"),
            distortion: 1.0,
            distance: (h.dist(&Mat2::rotation(rho))),
        },
    ];
    let total_distortion = chain.iter().map(|c| c.distortion).product();
    let report = UhApproximationReport {
        delta0,
        achieved: check.distance,
        within_budget: within_budget && check.distance < delta0,
        chain,
        total_distortion,
        target: Some(h),
        lambda: Some(lambda),
        k: Some(drag.k),
        residual_angle: Some(rho),
        certificate,
        check: Some(check),
        samples,
    };
    Ok(UhApproximation {
        perturbed,
        conjugacy: Some(conjugacy),
        reduction: Some(reduction),
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basedyn::GOLDEN;
    use crate::hypgeom::mobius_half_plane;

    #[test]
    fn elliptic_frame_conjugates_to_rotation() {
        let c = Mat2::new(1.3, 0.4, -0.2, 0.7);
        let c = c.normalized().unwrap();
        let m = c * Mat2::rotation(0.9) * c.inv();
        let b = elliptic_frame(&m);
        let r = b * m * b.inv();
        assert!(r.orthogonality_defect() < 1e-12, "{r:?}");
        assert!((retract_angle(&r).abs() - 0.9).abs() < 1e-12);
        // B_* sends the fixed point to i.
        let w = mobius_half_plane(&b.inv(), num_complex::Complex64::i());
        let back = mobius_half_plane(&m, w);
        assert!((back - w).norm() < 1e-12);
    }

    #[test]
    fn growth_scan_of_rotation_is_immediate() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        let r = Cocycle::constant(base, Mat2::rotation(0.4));
        let g = growth_scan(&r, 0.01, &RigidityParams::default()).unwrap();
        assert_eq!(g.n0, 1);
    }

    #[test]
    fn growth_scan_rejects_hyperbolic() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        let h = Cocycle::constant(base, Mat2::hyperbolic(1.5));
        let err = growth_scan(&h, 0.01, &RigidityParams::default()).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn shift_search_prefers_small_k() {
        let base = BaseSystem::circle(GOLDEN).unwrap();
        let (k, _, _, r) = search_shift(0.3, 0.3, &base, 1e-9, 10).unwrap();
        assert_eq!(k, 0);
        assert_eq!(r, 0.0);
    }
}
