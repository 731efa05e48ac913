//! Schrödinger cocycles, spectra through uniform hyperbolicity of the
//! transfer matrices, a truncated-operator oracle, gap labels and gap-count
//! refinement tables.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basedyn::{BasePoint, BaseSystem, centered};
use crate::cocycle::{Cocycle, RealFn, UhParams, Verdict, rotation_number, uh_test};
use crate::error::{Error, Result};
use crate::output::sig17;

/// A potential V on the base, with a descriptive name.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Potential {
    pub name: String,
    pub field: RealFn,
}

impl Potential {
    pub fn new(name: impl Into<String>, field: RealFn) -> Self {
        Potential {
            name: name.into(),
            field,
        }
    }

    pub fn zero() -> Self {
        Potential::new("0", RealFn::constant(0.0))
    }

    /// amp·cos 2π(kx·x + ky·y).
    pub fn cos(amp: f64, kx: i64, ky: i64) -> Self {
        Potential::new(format!("{amp}·cos 2π({kx}x + {ky}y)"), RealFn::cos(amp, kx, ky))
    }

    /// 2λ·cos(2πx + phase).
    pub fn almost_mathieu(lambda: f64, phase: f64) -> Self {
        let field = RealFn::Trig {
            terms: vec![crate::cocycle::TrigTerm {
                amp: 2.0 * lambda,
                kx: 1,
                ky: 0,
                phase,
            }],
        };
        Potential::new(format!("almost Mathieu λ = {lambda}, phase {phase}"), field)
    }

    pub fn value(&self, base: &BaseSystem, x: &BasePoint) -> f64 {
        self.field.value(base, x)
    }

    pub fn sup_norm(&self, base: &BaseSystem, count: usize) -> f64 {
        self.field.sup_norm(base, count)
    }

    /// The potential tabulated on a grid (bilinear interpolation), for
    /// export of potentials that have no closed form.
    pub fn sampled(&self, base: &BaseSystem, nx: usize, ny: usize) -> Potential {
        let ny = if base.is_two_dimensional() { ny.max(1) } else { 1 };
        let values: Vec<f64> = (0..nx * ny)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / ny, k % ny);
                self.value(base, &base.point(i as f64 / nx as f64, j as f64 / ny as f64))
            })
            .collect();
        Potential::new(self.name.clone(), RealFn::Grid { nx, ny, values })
    }
}

/// The cocycle x ↦ (E − V(x), −1; 1, 0).
pub fn schrodinger_cocycle(base: BaseSystem, v: &Potential, energy: f64) -> Cocycle {
    Cocycle::schrodinger(base, energy, v.field.clone())
}

/// Regular energy grid min + k·step, k = 0, …, count − 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl EnergyGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !(max >= min) {
            return Err(Error::Input(format!(
                "energy grid needs step > 0 and max ≥ min, got [{min}, {max}] step {step}"
            )));
        }
        Ok(EnergyGrid { min, max, step })
    }

    pub fn count(&self) -> usize {
        ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.min + k as f64 * self.step
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.count()).map(|k| self.energy(k)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyVerdict {
    /// Certified uniformly hyperbolic: the energy lies in a gap.
    Gap,
    /// Certified not uniformly hyperbolic.
    Spectrum,
    Inconclusive,
}

impl EnergyVerdict {
    fn from_uh(v: Verdict) -> Self {
        match v {
            Verdict::Uh => EnergyVerdict::Gap,
            Verdict::NotUh => EnergyVerdict::Spectrum,
            Verdict::Inconclusive => EnergyVerdict::Inconclusive,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EnergyVerdict::Gap => "gap",
            EnergyVerdict::Spectrum => "spectrum",
            EnergyVerdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub energy: f64,
    pub verdict: EnergyVerdict,
    pub min_growth: f64,
    pub min_angle: f64,
    /// Iterate count of the deciding level.
    pub n: usize,
}

/// A maximal run of gap verdicts on the energy grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// Grid indices of the first and last gap cell.
    pub first: usize,
    pub last: usize,
    /// Refined edges, bracketed between the adjacent grid points; `None`
    /// where the gap runs off the grid.
    pub lower_edge: Option<f64>,
    pub upper_edge: Option<f64>,
}

impl Gap {
    pub fn is_interior(&self) -> bool {
        self.lower_edge.is_some() && self.upper_edge.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanParams {
    pub uh: UhParams,
    /// Bisect gap edges to this width; zero disables refinement.
    pub edge_tol: f64,
}

impl Default for ScanParams {
    fn default() -> Self {
        ScanParams {
            uh: UhParams::default(),
            edge_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumScan {
    pub potential: String,
    pub base: BaseSystem,
    pub grid: EnergyGrid,
    pub params: ScanParams,
    pub points: Vec<ScanPoint>,
    pub gaps: Vec<Gap>,
}

fn scan_point(base: BaseSystem, v: &Potential, energy: f64, uh: &UhParams) -> Result<ScanPoint> {
    let cert = uh_test(&schrodinger_cocycle(base, v, energy), uh)?;
    Ok(ScanPoint {
        energy,
        verdict: EnergyVerdict::from_uh(cert.verdict),
        min_growth: cert.min_growth,
        min_angle: cert.min_angle,
        n: cert.n,
    })
}

/// Bisect between a gap energy and a non-gap energy down to `tol`; returns
/// the last energy certified to lie in the gap.
fn refine_edge(base: BaseSystem, v: &Potential, inside: f64, outside: f64, params: &ScanParams) -> Result<f64> {
    let (mut a, mut b) = (inside, outside);
    while (b - a).abs() > params.edge_tol {
        let mid = 0.5 * (a + b);
        if scan_point(base, v, mid, &params.uh)?.verdict == EnergyVerdict::Gap {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(a)
}

fn gap_runs(points: &[ScanPoint]) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (k, p) in points.iter().enumerate() {
        match (p.verdict == EnergyVerdict::Gap, start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push((s, k - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, points.len() - 1));
    }
    runs
}

/// Classify every grid energy by the uniform-hyperbolicity test and collect
/// the gaps, with refined edges.
pub fn spectrum_scan(base: BaseSystem, v: &Potential, grid: EnergyGrid, params: &ScanParams) -> Result<SpectrumScan> {
    let points: Result<Vec<ScanPoint>> = grid
        .energies()
        .par_iter()
        .map(|&e| scan_point(base, v, e, &params.uh))
        .collect();
    let points = points?;
    let runs = gap_runs(&points);
    let gaps: Result<Vec<Gap>> = runs
        .par_iter()
        .map(|&(first, last)| {
            let edge = |inside: usize, outside: Option<usize>| -> Result<Option<f64>> {
                let Some(o) = outside else { return Ok(None) };
                let (ei, eo) = (points[inside].energy, points[o].energy);
                if params.edge_tol > 0.0 {
                    refine_edge(base, v, ei, eo, params).map(Some)
                } else {
                    Ok(Some(ei))
                }
            };
            Ok(Gap {
                first,
                last,
                lower_edge: edge(first, first.checked_sub(1))?,
                upper_edge: edge(last, (last + 1 < points.len()).then_some(last + 1))?,
            })
        })
        .collect();
    Ok(SpectrumScan {
        potential: v.name.clone(),
        base,
        grid,
        params: *params,
        points,
        gaps: gaps?,
    })
}

impl SpectrumScan {
    pub fn interior_gaps(&self) -> impl Iterator<Item = &Gap> {
        self.gaps.iter().filter(|g| g.is_interior())
    }

    /// Energy range [lo, hi] of a gap: refined edges where present, grid
    /// extremes otherwise.
    pub fn gap_range(&self, gap: &Gap) -> (f64, f64) {
        (
            gap.lower_edge.unwrap_or(self.points[gap.first].energy),
            gap.upper_edge.unwrap_or(self.points[gap.last].energy),
        )
    }

    /// Total length of gap cells (one grid step per gap verdict).
    pub fn gap_measure(&self) -> f64 {
        self.points.iter().filter(|p| p.verdict == EnergyVerdict::Gap).count() as f64 * self.grid.step
    }

    /// Index of the grid cell containing `energy`.
    pub fn cell(&self, energy: f64) -> Option<usize> {
        let k = ((energy - self.grid.min) / self.grid.step).round();
        (k >= 0.0 && (k as usize) < self.points.len()).then_some(k as usize)
    }

    /// CSV with columns E, verdict, minGrowth, minAngle, N.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["E", "verdict", "minGrowth", "minAngle", "N"]).map_err(csv_error)?;
        for p in &self.points {
            w.write_record([
                sig17(p.energy),
                p.verdict.as_str().to_string(),
                sig17(p.min_growth),
                sig17(p.min_angle),
                p.n.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Eigenvalues, ascending, of the symmetric tridiagonal matrix with the given
/// diagonal and constant off-diagonal 1, by Sturm-sequence bisection.
fn tridiagonal_eigenvalues(diag: &[f64]) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return Vec::new();
    }
    let lo = diag.iter().fold(f64::INFINITY, |m, &d| m.min(d)) - 2.0;
    let hi = diag.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d)) + 2.0;
    // Number of eigenvalues below x, from the signs of the LDLᵀ pivots.
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut q = 1.0f64;
        for (i, &d) in diag.iter().enumerate() {
            q = d - x - if i == 0 { 0.0 } else { 1.0 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (d.abs() + x.abs() + 2.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    };
    let tol = 4.0 * f64::EPSILON * (lo.abs().max(hi.abs()));
    (0..n)
        .into_par_iter()
        .map(|k| {
            let (mut a, mut b) = (lo, hi);
            while b - a > tol {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                if count_below(mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}

/// Largest truncation size accepted by [`truncation_oracle`].
pub const MAX_TRUNCATION: usize = 1 << 13;

/// Eigenvalues of the N×N truncation of ψ ↦ ψ_{n+1} + ψ_{n−1} + V(fⁿx₀)ψ_n.
pub fn truncation_oracle(base: &BaseSystem, v: &Potential, x0: &BasePoint, n: usize) -> Result<Vec<f64>> {
    if n == 0 || n > MAX_TRUNCATION {
        return Err(Error::Input(format!("truncation size must be in 1..={MAX_TRUNCATION}, got {n}")));
    }
    let mut diag = Vec::with_capacity(n);
    let mut x = *x0;
    for _ in 0..n {
        diag.push(v.value(base, &x));
        x = base.step(&x, 1);
    }
    Ok(tridiagonal_eigenvalues(&diag))
}

/// Fraction of eigenvalues that fall in non-gap cells of the scan, skipping
/// eigenvalues in cells next to a verdict change.
pub fn oracle_agreement(scan: &SpectrumScan, eigenvalues: &[f64]) -> (usize, usize) {
    let mut considered = 0;
    let mut agree = 0;
    let verdict = |k: usize| scan.points[k].verdict;
    for &e in eigenvalues {
        let Some(k) = scan.cell(e) else { continue };
        let boundary = (k > 0 && verdict(k - 1) != verdict(k))
            || (k + 1 < scan.points.len() && verdict(k + 1) != verdict(k));
        if boundary {
            continue;
        }
        considered += 1;
        if verdict(k) != EnergyVerdict::Gap {
            agree += 1;
        }
    }
    (agree, considered)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapLabel {
    /// Index of the gap in the scan.
    pub gap: usize,
    pub energy: f64,
    /// Fibered rotation number at `energy`, counted in half-turns mod 1.
    pub rho: f64,
    /// k with ρ − kα closest to an integer.
    pub k: i64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelParams {
    pub k_max: i64,
    /// Orbit length for the rotation number.
    pub iterations: u64,
    pub x0: [f64; 2],
}

impl Default for LabelParams {
    fn default() -> Self {
        LabelParams {
            k_max: 1000,
            iterations: 100_000,
            x0: [0.0, 0.0],
        }
    }
}

/// Label of the rotation number ρ: k minimizing the distance of ρ − kα to ℤ.
pub fn label_rotation_number(rho: f64, alpha: f64, k_max: i64) -> (i64, f64) {
    let mut best = (0i64, centered(rho).abs());
    for m in 1..=k_max {
        for k in [m, -m] {
            let r = centered(rho - k as f64 * alpha).abs();
            if r < best.1 {
                best = (k, r);
            }
        }
    }
    best
}

/// Label the gap through the rotation number at `energy`, which defaults to
/// the gap midpoint.
pub fn gap_label_at(
    v: &Potential,
    scan: &SpectrumScan,
    gap: usize,
    energy: Option<f64>,
    params: &LabelParams,
) -> Result<GapLabel> {
    let g = scan
        .gaps
        .get(gap)
        .ok_or_else(|| Error::Input(format!("scan has {} gaps, asked for gap {gap}", scan.gaps.len())))?;
    let (lo, hi) = scan.gap_range(g);
    let energy = energy.unwrap_or(0.5 * (lo + hi));
    if !(lo..=hi).contains(&energy) {
        return Err(Error::Input(format!("energy {energy} is outside gap [{lo}, {hi}]")));
    }
    let base = scan.base;
    let alpha = base
        .circle_alpha()
        .ok_or_else(|| Error::Input("gap labels need a circle frequency".into()))?;
    let a = schrodinger_cocycle(base, v, energy);
    let x0 = base.point(params.x0[0], params.x0[1]);
    let rho = rotation_number(&a, &x0, params.iterations)?;
    let (k, residual) = label_rotation_number(rho, alpha, params.k_max);
    Ok(GapLabel {
        gap,
        energy,
        rho,
        k,
        residual,
    })
}

pub fn gap_label(v: &Potential, scan: &SpectrumScan, gap: usize, params: &LabelParams) -> Result<GapLabel> {
    gap_label_at(v, scan, gap, None, params)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorRow {
    pub step: f64,
    pub gap_count: usize,
    pub interior_gaps: usize,
    pub gap_measure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorReport {
    pub rows: Vec<CantorRow>,
    /// Gap counts never decrease along the refinements.
    pub monotone: bool,
}

/// Rescan the energy window of `scan` at each (decreasing) step and tabulate
/// gap counts and measure. A report only; no claim about the spectrum.
pub fn cantorness_report(v: &Potential, scan: &SpectrumScan, steps: &[f64]) -> Result<CantorReport> {
    if steps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Input(format!("refinement steps must decrease: {steps:?}")));
    }
    let params = ScanParams {
        edge_tol: 0.0,
        ..scan.params
    };
    let mut rows = Vec::with_capacity(steps.len());
    for &step in steps {
        let grid = EnergyGrid::new(scan.grid.min, scan.grid.max, step)?;
        let s = spectrum_scan(scan.base, v, grid, &params)?;
        rows.push(CantorRow {
            step,
            gap_count: s.gaps.len(),
            interior_gaps: s.interior_gaps().count(),
            gap_measure: s.gap_measure(),
        });
    }
    let monotone = rows.windows(2).all(|w| w[1].gap_count >= w[0].gap_count);
    Ok(CantorReport { rows, monotone })
}
