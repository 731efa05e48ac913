use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use ccf::cocycle::{RealFn, UhCertificate, Verdict};
use ccf::projection::GapOpening;
use ccf::rigidity::{ConstantCheck, RotationReport};
use ccf::schrodinger::{EnergyVerdict, label_rotation_number};

use super::config::ExperimentConfig;
use super::pipelines::{
    CohomologyResult, ReduceResult, RotationResult, SpectrumResult, UhTestResult,
};

/// Residual allowed for conjugacies to a constant and for cohomology.
const CONSTANT_TOL: f64 = 1e-7;
const COBOUNDARY_TOL: f64 = 1e-8;
/// Pointwise conjugacy identities of localization and projection.
const IDENTITY_TOL: f64 = 1e-9;

pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

fn check(name: &str, ok: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        ok,
        detail: detail.into(),
    }
}

fn typed<T: DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| format!("malformed result: {e}"))
}

/// Re-checks the invariants stored in a result document from its samples,
/// without rerunning the pipeline.
pub fn verify(path: &Path) -> Result<Vec<Check>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let pipeline = doc.get("pipeline").and_then(Value::as_str).ok_or("missing `pipeline`")?;
    let config: ExperimentConfig = typed(doc.get("config").ok_or("missing `config`")?)?;
    let result = doc.get("result").ok_or("missing `result`")?;
    match pipeline {
        "spectrum" => Ok(spectrum(&config, &typed(result)?)),
        "uh-test" => {
            let r: UhTestResult = typed(result)?;
            Ok(certificate("certificate", &r.certificate, None))
        }
        "rotate-conjugate" => Ok(rotation(&typed(result)?)),
        "reduce" => Ok(reduce(&config, &typed(result)?)),
        "cohomology" => Ok(cohomology(&typed(result)?)),
        "open-gap" => Ok(open_gap(&config, &typed(result)?)),
        "rotation-number" => Ok(rotation_number(&config, &typed(result)?)),
        other => Err(format!("unknown pipeline `{other}`")),
    }
}

fn spectrum(config: &ExperimentConfig, r: &SpectrumResult) -> Vec<Check> {
    let scan = &r.scan;
    let count = scan.grid.count();
    let grid_ok = scan.points.len() == count
        && scan.points.iter().enumerate().all(|(k, p)| p.energy == scan.grid.energy(k));
    let mut runs = Vec::new();
    let mut start = None;
    for (k, p) in scan.points.iter().enumerate() {
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
        runs.push((s, scan.points.len() - 1));
    }
    let stored: Vec<(usize, usize)> = scan.gaps.iter().map(|g| (g.first, g.last)).collect();
    let energy = |k: usize| scan.points.get(k).map(|p| p.energy);
    let edges_ok = scan.gaps.iter().all(|g| {
        let lower = match (g.lower_edge, g.first.checked_sub(1).and_then(energy), energy(g.first)) {
            (Some(e), Some(out), Some(inside)) => out < e && e <= inside,
            (None, None, _) => true,
            _ => false,
        };
        let upper = match (g.upper_edge, energy(g.last), energy(g.last + 1)) {
            (Some(e), Some(inside), Some(out)) => inside <= e && e < out,
            (None, _, None) => true,
            _ => false,
        };
        lower && upper
    });
    let mut out = vec![
        check("energy grid", grid_ok, format!("{} points, grid has {count}", scan.points.len())),
        check("gap runs", runs == stored, format!("verdicts give {} gaps, stored {}", runs.len(), stored.len())),
        check("gap edges", edges_ok, "refined edges lie between their grid cells"),
    ];
    if let Some(rf) = &r.refine {
        let monotone = rf.rows.windows(2).all(|w| w[1].gap_count >= w[0].gap_count);
        out.push(check("refinement monotone flag", monotone == rf.monotone, format!("{:?}", rf.rows)));
    }
    for o in &r.oracle {
        out.push(check(
            "oracle counts",
            o.agree <= o.considered,
            format!("{}/{} at {:?}", o.agree, o.considered, o.x0),
        ));
    }
    if let Some(alpha) = config.base.circle_alpha() {
        for l in &r.labels {
            let (k, residual) = label_rotation_number(l.rho, alpha, config.spectrum.label.k_max);
            out.push(check(
                "gap label",
                k == l.k && residual == l.residual,
                format!("gap {}: ρ = {} gives k = {k}, stored {}", l.gap, l.rho, l.k),
            ));
        }
    }
    out
}

fn certificate(name: &str, c: &UhCertificate, expect: Option<Verdict>) -> Vec<Check> {
    let (verdict, idx) = c.replay();
    let mut out = vec![check(
        &format!("{name} verdict"),
        verdict == c.verdict,
        format!("levels imply {verdict:?}, stored {:?}", c.verdict),
    )];
    if let Some(i) = idx {
        let l = &c.levels[i];
        out.push(check(
            &format!("{name} level"),
            l.n == c.n && l.min_growth == c.min_growth && l.min_angle == c.min_angle,
            format!("deciding level N = {}", l.n),
        ));
    }
    if let Some(v) = expect {
        out.push(check(&format!("{name} is {v:?}"), c.verdict == v, format!("{:?}", c.verdict)));
    }
    out
}

fn rotation(r: &RotationReport) -> Vec<Check> {
    let re = r.recheck();
    let mut out = vec![check("stored check matches samples", re == r.check, format!("{re:?}"))];
    let failures = r.failures();
    for name in ["distance", "step bound", "invariance", "orthogonality"] {
        out.push(check(name, !failures.contains(&name), format!("{:?}", r.check)));
    }
    out
}

fn constant(re: ConstantCheck, stored: ConstantCheck, delta0: f64) -> Vec<Check> {
    vec![
        check("stored check matches samples", re == stored, format!("{re:?}")),
        check("distance", re.distance < delta0, format!("{} < δ₀ = {delta0}", re.distance)),
        check(
            "conjugacy residual",
            re.residual < CONSTANT_TOL,
            format!("{} < {CONSTANT_TOL}", re.residual),
        ),
    ]
}

fn reduce(config: &ExperimentConfig, r: &ReduceResult) -> Vec<Check> {
    match r {
        ReduceResult::Hyperbolic { report } => constant(report.recheck(), report.check, config.delta0),
        ReduceResult::Rotation { report } => constant(report.recheck(), report.check, config.delta0),
    }
}

fn cohomology(r: &CohomologyResult) -> Vec<Check> {
    let re = r.report.recheck();
    vec![
        check("stored check matches samples", re == r.report.check, format!("{re:?}")),
        check(
            "coboundary residual",
            re.residual < COBOUNDARY_TOL,
            format!("{} < {COBOUNDARY_TOL}", re.residual),
        ),
        check("distance bound", re.distance < r.bound, format!("{} < {}", re.distance, r.bound)),
    ]
}

fn open_gap(config: &ExperimentConfig, g: &GapOpening) -> Vec<Check> {
    let r = &g.report;
    let original = serde_json::to_value(&config.potential).ok();
    let mut out = Vec::new();
    if r.already_in_gap {
        let same = serde_json::to_value(Some(&g.potential.field)).ok() == original;
        out.push(check("potential unchanged", same, "the energy already lay in a gap"));
    } else {
        let (base_ok, sup) = match &g.potential.field {
            RealFn::Sum { parts } if parts.len() == 2 => {
                let base_ok = serde_json::to_value(Some(&parts[0])).ok() == original;
                let sup = match &parts[1] {
                    RealFn::Grid { values, .. } => {
                        Some(values.iter().map(|d| d.abs()).fold(0.0, f64::max))
                    }
                    _ => None,
                };
                (base_ok, sup)
            }
            _ => (false, None),
        };
        out.push(check("V′ extends V", base_ok, "V′ = V + patch with the configured V"));
        out.push(check(
            "patch sup norm",
            sup == Some(r.achieved),
            format!("patch grid gives {sup:?}, stored {}", r.achieved),
        ));
        for (k, d) in r.rounds.iter().enumerate() {
            let l = &d.localize.check;
            let p = &d.projection.check;
            out.push(check(
                "localization identity",
                l.identity_residual < IDENTITY_TOL && l.off_support_exact,
                format!("round {k}: residual {}, exact off support {}", l.identity_residual, l.off_support_exact),
            ));
            out.push(check(
                "projection identity",
                p.identity_residual < IDENTITY_TOL && p.off_support_exact && d.projection.s_form,
                format!(
                    "round {k}: residual {}, exact off support {}, S-form {}",
                    p.identity_residual, p.off_support_exact, d.projection.s_form
                ),
            ));
        }
    }
    out.push(check(
        "budget flag",
        r.within_budget == (r.achieved < r.epsilon),
        format!("‖V′ − V‖ = {} against ε = {}", r.achieved, r.epsilon),
    ));
    out.extend(certificate("gap certificate", &r.certificate, Some(Verdict::Uh)));
    out.extend(certificate("doubled certificate", &r.doubled, Some(Verdict::Uh)));
    out
}

fn rotation_number(config: &ExperimentConfig, r: &RotationResult) -> Vec<Check> {
    let mut out = Vec::new();
    for row in &r.rows {
        out.push(check("rotation number range", (0.0..1.0).contains(&row.rho), format!("ρ = {}", row.rho)));
        if let Some(alpha) = r.alpha {
            let (k, residual) = label_rotation_number(row.rho, alpha, config.rotation.k_max);
            out.push(check(
                "rotation label",
                row.k == Some(k) && row.residual == Some(residual),
                format!("ρ = {} gives k = {k}, stored {:?}", row.rho, row.k),
            ));
        }
    }
    out
}
