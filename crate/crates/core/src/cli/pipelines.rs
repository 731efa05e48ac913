use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ccf::Result;
use ccf::basedyn::BaseSystem;
use ccf::cocycle::{UhCertificate, rotation_number, uh_test};
use ccf::cohomology::{CohomologyReport, solve_cantor_with, solve_circle_with};
use ccf::output::{SvgPlot, sig17, write_json};
use ccf::projection::GapOpening;
use ccf::rigidity::{
    ConjugacySample, ConstantRotationReport, ReductionReport, RotationReport, reduce_to_constant_rotation, reduce_uh,
    rotate_conjugate,
};
use ccf::schrodinger::{
    CantorReport, EnergyGrid, GapLabel, SpectrumScan, cantorness_report, gap_label, label_rotation_number,
    oracle_agreement, schrodinger_cocycle, spectrum_scan, truncation_oracle,
};

use super::config::{ExperimentConfig, ReduceTarget};

/// The JSON result of one run: the config that produced it and the
/// pipeline's report, which carries everything `verify` needs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultDoc<T> {
    pub pipeline: String,
    pub config: ExperimentConfig,
    pub result: T,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleRun {
    pub x0: [f64; 2],
    pub n: usize,
    pub agree: usize,
    pub considered: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub scan: SpectrumScan,
    pub refine: Option<CantorReport>,
    pub oracle: Vec<OracleRun>,
    pub labels: Vec<GapLabel>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UhTestResult {
    pub certificate: UhCertificate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReduceResult {
    Hyperbolic { report: ReductionReport },
    Rotation { report: ConstantRotationReport },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CohomologyKind {
    Circle,
    Cantor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CohomologyResult {
    pub kind: CohomologyKind,
    /// Bound on sup |φ̃ − φ|: 7δ on 𝕋^d, δ on the odometer.
    pub bound: f64,
    pub report: CohomologyReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationRow {
    pub energy: Option<f64>,
    pub rho: f64,
    pub k: Option<i64>,
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RotationResult {
    pub alpha: Option<f64>,
    pub rows: Vec<RotationRow>,
}

/// Output directory and file bookkeeping of one run.
pub struct Run<'a> {
    pub config: &'a ExperimentConfig,
    pub pipeline: &'static str,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Run<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn json<T: Serialize + Clone>(&mut self, result: &T) -> Result<()> {
        let doc = ResultDoc {
            pipeline: self.pipeline.to_string(),
            config: self.config.clone(),
            result: result.clone(),
        };
        let p = self.path("result.json");
        write_json(&p, &doc)
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p).map_err(csv_error)?;
        w.write_record(header).map_err(csv_error)?;
        for r in rows {
            w.write_record(&r).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    fn svg(&mut self, name: &str, plot: &SvgPlot) -> Result<()> {
        let p = self.path(name);
        std::fs::write(p, plot.render())?;
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> ccf::Error {
    ccf::Error::Io(std::io::Error::other(e))
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

fn opt(x: Option<f64>) -> String {
    x.map(sig17).unwrap_or_default()
}

pub fn spectrum(run: &mut Run) -> Result<()> {
    let c = run.config;
    let s = &c.spectrum;
    let v = c.potential();
    let grid = EnergyGrid::new(s.min, s.max, s.step)?;
    let scan = spectrum_scan(c.base, &v, grid, &s.scan).map_err(|e| e.at("spectrum scan"))?;
    let refine = if s.refine.is_empty() {
        None
    } else {
        Some(cantorness_report(&v, &scan, &s.refine).map_err(|e| e.at("refinement"))?)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut oracle = Vec::new();
    if s.truncation > 0 {
        for _ in 0..s.truncation_points {
            let x0 = [rng.r#gen::<f64>(), rng.r#gen::<f64>()];
            let eig = truncation_oracle(&c.base, &v, &c.base.point(x0[0], x0[1]), s.truncation)
                .map_err(|e| e.at("truncation oracle"))?;
            let (agree, considered) = oracle_agreement(&scan, &eig);
            oracle.push(OracleRun {
                x0,
                n: s.truncation,
                agree,
                considered,
            });
        }
    }
    let mut labels = Vec::new();
    if s.labels {
        for (k, g) in scan.gaps.iter().enumerate() {
            if g.is_interior() {
                labels.push(gap_label(&v, &scan, k, &s.label).map_err(|e| e.at("gap labels"))?);
            }
        }
    }
    let result = SpectrumResult {
        scan,
        refine,
        oracle,
        labels,
    };
    run.json(&result)?;
    let scan = &result.scan;
    let p = run.path("spectrum.csv");
    scan.write_csv(std::fs::File::create(p)?)?;
    run.csv(
        "gaps.csv",
        &["first", "last", "lower", "upper", "interior", "k", "labelResidual"],
        scan.gaps.iter().enumerate().map(|(k, g)| {
            let (lo, hi) = scan.gap_range(g);
            let label = result.labels.iter().find(|l| l.gap == k);
            vec![
                g.first.to_string(),
                g.last.to_string(),
                sig17(lo),
                sig17(hi),
                g.is_interior().to_string(),
                label.map(|l| l.k.to_string()).unwrap_or_default(),
                opt(label.map(|l| l.residual)),
            ]
        }),
    )?;
    let logs: Vec<(f64, f64)> = scan
        .points
        .iter()
        .map(|p| (p.energy, p.min_growth.max(1.0).ln() / p.n as f64))
        .collect();
    let (_, top) = range(logs.iter().map(|p| p.1));
    let mut plot = SvgPlot::new(
        &format!("Spectrum scan of {}", scan.potential),
        "E",
        "log min‖A^N‖ / N",
        (scan.grid.min, scan.grid.max),
        (0.0, top.max(1e-3)),
    );
    for g in &scan.gaps {
        let (lo, hi) = scan.gap_range(g);
        plot.band(lo - 0.5 * scan.grid.step, hi + 0.5 * scan.grid.step, "#6aa3d8");
    }
    plot.polyline(&logs, "black");
    run.svg("spectrum.svg", &plot)
}

pub fn uh(run: &mut Run) -> Result<()> {
    let c = run.config;
    let certificate = uh_test(&c.cocycle(), &c.uh).map_err(|e| e.at("uh test"))?;
    let result = UhTestResult { certificate };
    run.json(&result)?;
    let levels = &result.certificate.levels;
    run.csv(
        "levels.csv",
        &["N", "minGrowth", "windowGrowth", "minAngle"],
        levels
            .iter()
            .map(|l| vec![l.n.to_string(), sig17(l.min_growth), sig17(l.window_growth), sig17(l.min_angle)]),
    )?;
    let pts: Vec<(f64, f64)> = levels.iter().map(|l| ((l.n as f64).log2(), l.min_growth.ln())).collect();
    let (x0, x1) = range(pts.iter().map(|p| p.0));
    let (_, y1) = range(pts.iter().map(|p| p.1));
    let mut plot = SvgPlot::new("Growth of min‖A^N‖", "log₂ N", "log min‖A^N‖", (x0, x1), (0.0, y1.max(1.0)));
    plot.polyline(&pts, "black");
    run.svg("growth.svg", &plot)
}

fn conjugacy_samples_csv(run: &mut Run, samples: &[ConjugacySample]) -> Result<()> {
    run.csv(
        "samples.csv",
        &["x", "y", "distance", "normB"],
        samples.iter().map(|s| {
            vec![sig17(s.x[0]), sig17(s.x[1]), sig17(s.a_tilde.dist(&s.a)), sig17(s.b.norm())]
        }),
    )
}

fn distance_plot(run: &mut Run, title: &str, pts: Vec<(f64, f64)>) -> Result<()> {
    let (_, top) = range(pts.iter().map(|p| p.1));
    let mut pts = pts;
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut plot = SvgPlot::new(title, "x", "‖Ã − A‖", (0.0, 1.0), (0.0, top.max(1e-12)));
    plot.polyline(&pts, "black");
    run.svg("distance.svg", &plot)
}

pub fn rotate(run: &mut Run) -> Result<()> {
    let c = run.config;
    let rc = rotate_conjugate(&c.cocycle(), c.delta0, &c.rigidity).map_err(|e| e.at("rotation conjugacy"))?;
    let report: RotationReport = rc.report;
    run.json(&report)?;
    run.csv(
        "samples.csv",
        &["x", "y", "distance", "zRe", "zIm"],
        report.samples.iter().map(|s| {
            vec![sig17(s.x[0]), sig17(s.x[1]), sig17(s.a_tilde.dist(&s.a)), sig17(s.z.re()), sig17(s.z.im())]
        }),
    )?;
    let pts = report.samples.iter().map(|s| (s.x[0], s.a_tilde.dist(&s.a))).collect();
    distance_plot(run, "Rotation conjugacy: size of the perturbation", pts)
}

pub fn reduce(run: &mut Run) -> Result<()> {
    let c = run.config;
    let a = c.cocycle();
    let hyperbolic = match c.reduce.target {
        ReduceTarget::Hyperbolic => true,
        ReduceTarget::Rotation => false,
        ReduceTarget::Auto => uh_test(&a, &c.rigidity.uh).map_err(|e| e.at("uh test"))?.is_uh(),
    };
    let result = if hyperbolic {
        let r = reduce_uh(&a, c.delta0, &c.rigidity).map_err(|e| e.at("hyperbolic reduction"))?;
        ReduceResult::Hyperbolic { report: r.report }
    } else {
        let r = reduce_to_constant_rotation(&a, c.delta0, &c.rigidity).map_err(|e| e.at("rotation reduction"))?;
        ReduceResult::Rotation { report: r.report }
    };
    run.json(&result)?;
    let samples = match &result {
        ReduceResult::Hyperbolic { report } => &report.samples,
        ReduceResult::Rotation { report } => &report.samples,
    };
    conjugacy_samples_csv(run, samples)?;
    let pts = samples.iter().map(|s| (s.x[0], s.a_tilde.dist(&s.a))).collect();
    distance_plot(run, "Reduction to a constant: size of the perturbation", pts)
}

pub fn cohomology(run: &mut Run) -> Result<()> {
    let c = run.config;
    let s = &c.cohomology;
    let phi = c.cohomology_phi();
    let (kind, sol) = match c.base {
        BaseSystem::Odometer { .. } => (CohomologyKind::Cantor, solve_cantor_with(&phi, s.delta, &c.base, &s.params)),
        _ => (CohomologyKind::Circle, solve_circle_with(&phi, s.delta, &c.base, &s.params)),
    };
    let sol = sol.map_err(|e| e.at("cohomological equation"))?;
    let bound = match kind {
        CohomologyKind::Circle => 7.0 * s.delta,
        CohomologyKind::Cantor => s.delta,
    };
    let result = CohomologyResult {
        kind,
        bound,
        report: sol.report(s.verify_grid),
    };
    run.json(&result)?;
    let samples = &result.report.samples;
    run.csv(
        "samples.csv",
        &["x", "y", "phi", "phiTilde", "w", "wNext"],
        samples.iter().map(|p| {
            vec![sig17(p.x[0]), sig17(p.x[1]), sig17(p.phi), sig17(p.phi_tilde), sig17(p.w), sig17(p.w_next)]
        }),
    )?;
    // Index order on the odometer, first coordinate on tori.
    let key = |k: usize, x: [f64; 2]| match kind {
        CohomologyKind::Cantor => k as f64 / samples.len().max(1) as f64,
        CohomologyKind::Circle => x[0],
    };
    let mut phi_pts: Vec<(f64, f64)> = samples.iter().enumerate().map(|(k, p)| (key(k, p.x), p.phi)).collect();
    let mut tilde_pts: Vec<(f64, f64)> = samples.iter().enumerate().map(|(k, p)| (key(k, p.x), p.phi_tilde)).collect();
    phi_pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    tilde_pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = range(phi_pts.iter().chain(&tilde_pts).map(|p| p.1));
    let mut plot = SvgPlot::new("φ (black) and φ̃ (red)", "x", "value", (0.0, 1.0), (lo, hi));
    plot.polyline(&phi_pts, "black");
    plot.polyline(&tilde_pts, "#c0392b");
    run.svg("cohomology.svg", &plot)
}

pub fn open_gap(run: &mut Run) -> Result<()> {
    let c = run.config;
    let v = c.potential();
    let g: GapOpening =
        ccf::projection::open_gap(c.base, &v, c.energy, c.gap.epsilon, &c.gap.params).map_err(|e| e.at("open gap"))?;
    run.json(&g)?;
    let r = &g.report;
    run.csv(
        "rounds.csv",
        &["delta0", "approximation", "tableError", "localizeDeviation", "projectionMinD", "achieved"],
        r.rounds.iter().map(|d| {
            vec![
                sig17(d.delta0),
                sig17(d.approximation.achieved),
                sig17(d.table_error),
                sig17(d.localize.deviation),
                sig17(d.projection.min_d),
                sig17(d.achieved),
            ]
        }),
    )?;
    // V′ − V along the first coordinate, second coordinate zero.
    let n = 4096;
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let x = c.base.point(k as f64 / n as f64, 0.0);
            (k as f64 / n as f64, g.potential.value(&c.base, &x) - v.value(&c.base, &x))
        })
        .collect();
    run.csv(
        "potential.csv",
        &["x", "V", "Vprime"],
        (0..n).map(|k| {
            let x = c.base.point(k as f64 / n as f64, 0.0);
            vec![sig17(k as f64 / n as f64), sig17(v.value(&c.base, &x)), sig17(g.potential.value(&c.base, &x))]
        }),
    )?;
    let (lo, hi) = range(pts.iter().map(|p| p.1));
    let mut plot = SvgPlot::new(
        &format!("V′ − V (gap at E = {})", c.energy),
        "x",
        "V′ − V",
        (0.0, 1.0),
        (lo.min(-1e-3), hi.max(1e-3)),
    );
    plot.polyline(&pts, "black");
    run.svg("patch.svg", &plot)
}

pub fn rotation(run: &mut Run) -> Result<()> {
    let c = run.config;
    let s = &c.rotation;
    let x0 = c.base.point(s.x0[0], s.x0[1]);
    let alpha = c.base.circle_alpha();
    let row = |energy: Option<f64>, rho: f64| {
        let label = alpha.map(|a| label_rotation_number(rho, a, s.k_max));
        RotationRow {
            energy,
            rho,
            k: label.map(|l| l.0),
            residual: label.map(|l| l.1),
        }
    };
    let mut rows = Vec::new();
    if s.energies.is_empty() {
        let rho = rotation_number(&c.cocycle(), &x0, s.iterations).map_err(|e| e.at("rotation number"))?;
        rows.push(row(c.cocycle.is_none().then_some(c.energy), rho));
    } else {
        let v = c.potential();
        for &e in &s.energies {
            let a = schrodinger_cocycle(c.base, &v, e);
            let rho = rotation_number(&a, &x0, s.iterations).map_err(|e| e.at("rotation number"))?;
            rows.push(row(Some(e), rho));
        }
    }
    let result = RotationResult { alpha, rows };
    run.json(&result)?;
    run.csv(
        "rotation.csv",
        &["E", "rho", "k", "residual"],
        result
            .rows
            .iter()
            .map(|r| vec![opt(r.energy), sig17(r.rho), r.k.map(|k| k.to_string()).unwrap_or_default(), opt(r.residual)]),
    )?;
    let pts: Vec<(f64, f64)> = result.rows.iter().filter_map(|r| r.energy.map(|e| (e, r.rho))).collect();
    let (e0, e1) = range(pts.iter().map(|p| p.0));
    let mut plot = SvgPlot::new("Fibered rotation number", "E", "ρ (half-turns)", (e0, e1), (0.0, 1.0));
    plot.polyline(&pts, "black");
    run.svg("rotation.svg", &plot)
}

pub fn output_dir(cli_out: Option<&Path>, config: &ExperimentConfig) -> PathBuf {
    cli_out
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("CCF_OUT").map(PathBuf::from))
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("ccf-out"))
}
