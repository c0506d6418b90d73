//! Scenario orchestration and artifact emission.
//!
//! Artifacts of `run` (all numbers as `{:.16e}` in CSV files):
//!
//! - `moments.csv`: `t, M0, M1, M2, M_<r>..., xnorm, overflow_cum, dust_cum`
//! - `density_t<k>.csv`: one per snapshot, `k` the snapshot index
//! - `snapshots.csv`: `index, t, file`
//! - `report.json`: `config`, `audit`, `mass_balance`, `steps`, `versions`
//!
//! `compare` writes `gronwall.csv` (`t, u, phi, integral_phi, bound, margin,
//! verdict`) and, with refinement levels, `refinement.csv`.
//!
//! Nothing time- or host-dependent is written, so artifacts are
//! bit-identical across runs of the same config.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audit::{audit, AuditReport};
use crate::config::{HypothesisBlock, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::grid::{fmt_num, read_density_csv, write_density_csv, Density};
use crate::kernels::HypothesisConstants;
use crate::observables::{moments, xnorm, MomentSeries};
use crate::solver::{evolve, MassBalance, RunReport, StepSummary};
use crate::stability::{gronwall_run, refinement_consistency, GronwallTrace, RefinementReport};

/// Version stamp written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub coagfrag: String,
    pub artifact_schema: u32,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            coagfrag: env!("CARGO_PKG_VERSION").to_string(),
            artifact_schema: 1,
        }
    }
}

/// Audit block of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSection {
    /// `declared` or `suggested`.
    pub constants_source: String,
    pub constants: Option<HypothesisConstants>,
    /// Why the audit could not run (e.g. no admissible constants).
    pub error: Option<String>,
    pub report: Option<AuditReport>,
    /// True when the audit could not run or any hypothesis failed.
    pub failed: bool,
}

/// Runs the hypothesis audit of a scenario. Never fails: problems are
/// recorded in the section.
pub fn audit_scenario(config: &ScenarioConfig, scenario: &Scenario) -> AuditSection {
    let constants_source = match config.hypotheses {
        HypothesisBlock::Declared(_) => "declared",
        HypothesisBlock::Keyword(_) => "suggested",
    }
    .to_string();
    let Some(constants) = scenario.constants else {
        return AuditSection {
            constants_source,
            constants: None,
            error: scenario.constants_error.clone(),
            report: None,
            failed: true,
        };
    };
    match audit(
        scenario.kernel.as_ref(),
        scenario.fragmentation.as_ref(),
        &constants,
        &scenario.plan,
        scenario.seed,
    ) {
        Ok(report) => AuditSection {
            constants_source,
            constants: Some(constants),
            error: None,
            failed: report.any_fail(),
            report: Some(report),
        },
        Err(e) => AuditSection {
            constants_source,
            constants: Some(constants),
            error: Some(e.to_string()),
            report: None,
            failed: true,
        },
    }
}

/// Contents of `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportJson {
    pub config: ScenarioConfig,
    pub audit: AuditSection,
    pub mass_balance: Option<MassBalance>,
    pub steps: Option<StepSummary>,
    pub versions: Versions,
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub audit: AuditSection,
    /// `None` when the run stopped at a failed strict audit.
    pub report: Option<RunReport>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("cannot create {}", dir.display()), e))
}

fn create_file(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(format!("cannot create {}", path.display()), e))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<fs::File>>> {
    Ok(csv::Writer::from_writer(create_file(path)?))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(format!("cannot write {}", path.display()), std::io::Error::other(e.to_string()))
}

fn order_label(r: f64) -> String {
    format!("M_{r}")
}

/// Writes `moments.csv`.
pub fn write_moments_csv(report: &RunReport, path: &Path) -> Result<()> {
    let io = csv_io(path);
    let mut w = csv_writer(path)?;
    let series = &report.moments;
    let mut header = vec!["t".to_string(), "M0".into(), "M1".into(), "M2".into()];
    header.extend(series.extra_orders().iter().map(|&r| order_label(r)));
    header.extend(["xnorm".to_string(), "overflow_cum".into(), "dust_cum".into()]);
    w.write_record(&header).map_err(&io)?;
    for k in 0..series.len() {
        let mut row = vec![fmt_num(series.times()[k])];
        row.extend(series.row(k).iter().map(|&v| fmt_num(v)));
        row.extend([
            fmt_num(report.xnorm[k]),
            fmt_num(report.overflow_cum[k]),
            fmt_num(report.dust_cum[k]),
        ]);
        w.write_record(&row).map_err(&io)?;
    }
    w.flush().map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

/// Writes `density_t<k>.csv` for every snapshot and the `snapshots.csv` index.
pub fn write_snapshots(report: &RunReport, dir: &Path) -> Result<()> {
    let index_path = dir.join("snapshots.csv");
    let io = csv_io(&index_path);
    let mut index = csv_writer(&index_path)?;
    index.write_record(["index", "t", "file"]).map_err(&io)?;
    for (k, d) in report.snapshots.iter().enumerate() {
        let name = format!("density_t{k}.csv");
        let path = dir.join(&name);
        let mut file = create_file(&path)?;
        write_density_csv(d, &mut file)?;
        finish(file, &path)?;
        index.write_record([k.to_string(), fmt_num(d.t()), name]).map_err(&io)?;
    }
    index.flush().map_err(|e| Error::io(format!("cannot write {}", index_path.display()), e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create_file(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::io(format!("cannot write {}", path.display()), e.into()))?;
    w.write_all(b"\n").map_err(|e| Error::io(format!("cannot write {}", path.display()), e))?;
    finish(w, path)
}

/// Audits, assembles and evolves the scenario, writing all artifacts to
/// `out`. With `strict`, a failed audit stops before solving and returns
/// [`Error::HypothesesFailed`] after writing `report.json`.
pub fn run(config: &ScenarioConfig, out: &Path, strict: bool) -> Result<RunOutcome> {
    let scenario = config.scenario()?;
    let audit = audit_scenario(config, &scenario);
    if audit.failed {
        log::warn!(
            "hypothesis audit failed{}",
            audit.error.as_ref().map(|e| format!(": {e}")).unwrap_or_default()
        );
    }
    create_dir(out)?;
    let mut json = ReportJson {
        config: config.clone(),
        audit: audit.clone(),
        mass_balance: None,
        steps: None,
        versions: Versions::default(),
    };
    if strict && audit.failed {
        write_json(&json, &out.join("report.json"))?;
        return Err(Error::HypothesesFailed(summarize_audit(&audit)));
    }
    let tables = scenario.tables()?;
    let d0 = scenario.initial_density()?;
    let report = evolve(
        &tables,
        &d0,
        scenario.t_end,
        &scenario.schedule,
        scenario.controller,
        &scenario.extra_orders,
    )?;
    write_moments_csv(&report, &out.join("moments.csv"))?;
    write_snapshots(&report, out)?;
    json.mass_balance = Some(report.mass_balance.clone());
    json.steps = Some(report.steps.clone());
    write_json(&json, &out.join("report.json"))?;
    Ok(RunOutcome {
        out: out.to_path_buf(),
        audit,
        report: Some(report),
    })
}

/// One line per failing hypothesis.
pub fn summarize_audit(a: &AuditSection) -> String {
    if let Some(e) = &a.error {
        return e.clone();
    }
    let Some(r) = &a.report else {
        return "audit did not run".into();
    };
    let failing: Vec<String> = r
        .results
        .iter()
        .filter(|h| h.verdict == crate::audit::Verdict::Fail)
        .map(|h| format!("{:?}: {}", h.hypothesis, h.note))
        .collect();
    if failing.is_empty() {
        "all hypotheses hold".into()
    } else {
        failing.join("; ")
    }
}

/// Audit only; writes `audit.json` when `out` is given.
pub fn check_hypotheses(config: &ScenarioConfig, out: Option<&Path>) -> Result<AuditSection> {
    let scenario = config.scenario()?;
    let section = audit_scenario(config, &scenario);
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&section, &dir.join("audit.json"))?;
    }
    Ok(section)
}

/// Recomputes moments from the density CSVs listed in `<dir>/snapshots.csv`
/// and writes `<dir>/moments_recomputed.csv` (`t, M0, M1, M2, M_<r>..., xnorm`).
pub fn recompute_moments(dir: &Path, extra_orders: &[f64]) -> Result<(MomentSeries, Vec<f64>)> {
    let index_path = dir.join("snapshots.csv");
    let read_err = |p: &Path, e: String| Error::io(format!("cannot read {}", p.display()), std::io::Error::other(e));
    let mut rdr = csv::Reader::from_path(&index_path).map_err(|e| read_err(&index_path, e.to_string()))?;
    let mut series = MomentSeries::new(extra_orders)?;
    let mut norms = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| read_err(&index_path, e.to_string()))?;
        let (t, file) = match (rec.get(1).map(str::parse::<f64>), rec.get(2)) {
            (Some(Ok(t)), Some(f)) => (t, f.to_string()),
            _ => return Err(read_err(&index_path, format!("malformed row {rec:?}"))),
        };
        let path = dir.join(&file);
        let f = fs::File::open(&path).map_err(|e| Error::io(format!("cannot read {}", path.display()), e))?;
        let d: Density = read_density_csv(f)?.with_time(t);
        series.push_values(t, moments(&d, series.orders())?)?;
        norms.push(xnorm(&d));
    }
    let out_path = dir.join("moments_recomputed.csv");
    let io = csv_io(&out_path);
    let mut w = csv_writer(&out_path)?;
    let mut header = vec!["t".to_string(), "M0".into(), "M1".into(), "M2".into()];
    header.extend(series.extra_orders().iter().map(|&r| order_label(r)));
    header.push("xnorm".into());
    w.write_record(&header).map_err(&io)?;
    for k in 0..series.len() {
        let mut row = vec![fmt_num(series.times()[k])];
        row.extend(series.row(k).iter().map(|&v| fmt_num(v)));
        row.push(fmt_num(norms[k]));
        w.write_record(&row).map_err(&io)?;
    }
    w.flush().map_err(|e| Error::io(format!("cannot write {}", out_path.display()), e))?;
    Ok((series, norms))
}

/// Result of [`compare`].
#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub gronwall: GronwallTrace,
    pub refinement: Option<RefinementReport>,
}

impl CompareOutcome {
    /// The bound holds everywhere and refinement distances decrease.
    pub fn passed(&self) -> bool {
        self.gronwall.holds() && self.refinement.as_ref().is_none_or(|r| r.decreasing)
    }
}

/// Writes `gronwall.csv`.
pub fn write_gronwall_csv(trace: &GronwallTrace, path: &Path) -> Result<()> {
    let io = csv_io(path);
    let mut w = csv_writer(path)?;
    w.write_record(["t", "u", "phi", "integral_phi", "bound", "margin", "verdict"])
        .map_err(&io)?;
    for s in &trace.samples {
        w.write_record([
            fmt_num(s.t),
            fmt_num(s.u),
            fmt_num(s.phi),
            fmt_num(s.integral_phi),
            fmt_num(s.bound),
            fmt_num(s.margin),
            if s.holds() { "ok".into() } else { "violated".into() },
        ])
        .map_err(&io)?;
    }
    w.flush().map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

/// Writes `refinement.csv`: `coarse, fine, distance, order`.
pub fn write_refinement_csv(report: &RefinementReport, path: &Path) -> Result<()> {
    let io = csv_io(path);
    let mut w = csv_writer(path)?;
    w.write_record(["coarse", "fine", "distance", "order"]).map_err(&io)?;
    for p in &report.pairs {
        w.write_record([
            p.coarse.to_string(),
            p.fine.to_string(),
            fmt_num(p.distance),
            p.order.map(fmt_num).unwrap_or_default(),
        ])
        .map_err(&io)?;
    }
    w.flush().map_err(|e| Error::io(format!("cannot write {}", path.display()), e))
}

/// Two-solution Gronwall check, plus grid refinement when `levels` is given.
pub fn compare(config: &ScenarioConfig, out: &Path, levels: Option<&[usize]>) -> Result<CompareOutcome> {
    let scenario = config.scenario()?;
    let gronwall = gronwall_run(&scenario, config.stability.epsilon, config.stability.tau_disc)?;
    let refinement = levels.map(|l| refinement_consistency(&scenario, l)).transpose()?;
    create_dir(out)?;
    write_gronwall_csv(&gronwall, &out.join("gronwall.csv"))?;
    if let Some(r) = &refinement {
        write_refinement_csv(r, &out.join("refinement.csv"))?;
    }
    Ok(CompareOutcome { gronwall, refinement })
}
