use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use ppa_core::cost::{batch_ndv, composite_ndv, reduction_ratio, should_push_compute};
use ppa_core::datagen::{self, RealizedByTable};
use ppa_core::exec::{execute, ExecParams, ExecutionMetrics, ResultTable};
use ppa_core::keys::{build_equivalence, substitute_to_fact};
use ppa_core::oracle::reference_eval;
use ppa_core::plan::{CostEstimate, Strategy};
use ppa_core::{enumerate_and_choose, Catalog, ColumnRef, Dataset, PlanSpace, Value};

use crate::config::Config;
use crate::render::render_decision_tree;

/// Which alternatives `run` executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrategySelection {
    Chosen,
    All,
    Slot(Strategy),
}

impl FromStr for StrategySelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "chosen" => Ok(Self::Chosen),
            "all" => Ok(Self::All),
            other => other
                .parse::<usize>()
                .ok()
                .and_then(Strategy::from_index)
                .map(Self::Slot)
                .ok_or_else(|| format!("expected chosen, all, 1, 2 or 3, got `{other}`")),
        }
    }
}

impl fmt::Display for StrategySelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Chosen => f.write_str("chosen"),
            Self::All => f.write_str("all"),
            Self::Slot(s) => write!(f, "{}", s.index()),
        }
    }
}

/// Tables the commands run against, plus the catalog planning should use.
pub struct LoadedData {
    pub catalog: Catalog,
    pub datasets: BTreeMap<String, Dataset>,
    pub realized: RealizedByTable,
    /// Loaded from `data_dir` rather than generated in memory.
    pub from_files: bool,
}

fn table_path(dir: &Path, table: &str) -> PathBuf {
    dir.join(format!("{table}.csv"))
}

fn files_present(cfg: &Config) -> Option<&Path> {
    let dir = cfg.data_dir.as_deref()?;
    cfg.catalog.tables().all(|t| table_path(dir, &t.name).is_file()).then_some(dir)
}

/// Loads every table from `data_dir` when all files exist, otherwise
/// generates them from the config's generator settings.
pub fn load_data(cfg: &Config) -> Result<LoadedData> {
    if let Some(dir) = files_present(cfg) {
        let mut datasets = BTreeMap::new();
        for t in cfg.catalog.tables() {
            let path = table_path(dir, &t.name);
            let data = Dataset::load(t, &path).with_context(|| format!("loading {}", path.display()))?;
            datasets.insert(t.name.clone(), data);
        }
        let (catalog, realized) = datagen::observe_stats(&cfg.catalog, &datasets, cfg.gen.write_back_stats)?;
        return Ok(LoadedData { catalog, datasets, realized, from_files: true });
    }
    let g = datagen::generate(&cfg.gen, &cfg.catalog)?;
    Ok(LoadedData { catalog: g.catalog, datasets: g.datasets, realized: g.realized, from_files: false })
}

/// Writes one delimited file per table plus a `stats.json` sidecar.
pub fn cmd_gen(cfg: &Config, out_dir: &Path, out: &mut dyn Write) -> Result<()> {
    let g = datagen::generate(&cfg.gen, &cfg.catalog)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, data) in &g.datasets {
        let path = table_path(out_dir, name);
        data.save(&path).with_context(|| format!("writing {}", path.display()))?;
        writeln!(out, "{name}: {} rows -> {}", data.len(), path.display())?;
    }
    let sidecar = out_dir.join("stats.json");
    fs::write(&sidecar, serde_json::to_string_pretty(&g.realized)? + "\n")?;
    writeln!(out, "stats -> {}", sidecar.display())?;
    Ok(())
}

/// Prints the decision tree and the chosen alternative.
pub fn cmd_plan(cfg: &Config, out: &mut dyn Write) -> Result<PlanSpace> {
    let space = enumerate_and_choose(&cfg.query, &cfg.catalog, &cfg.params)?;
    out.write_all(render_decision_tree(&space).as_bytes())?;
    if let Some(note) = &space.pushdown_disabled {
        writeln!(out, "note: {note}")?;
    }
    let chosen = space.chosen();
    writeln!(
        out,
        "chosen: {} ({}), {} shuffle{}",
        chosen.strategy.index(),
        chosen.summary_label(),
        chosen.shuffle_count,
        if chosen.shuffle_count == 1 { "" } else { "s" }
    )?;
    Ok(space)
}

#[derive(Clone, Debug, Serialize)]
pub struct StrategyRun {
    pub index: usize,
    pub strategy: Strategy,
    pub label: String,
    pub estimate: CostEstimate,
    pub metrics: ExecutionMetrics,
    pub result_rows: usize,
    pub digest: String,
    pub oracle_match: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub chosen: usize,
    pub chosen_strategy: Strategy,
    pub render: String,
    pub oracle_digest: String,
    pub strategies: Vec<StrategyRun>,
}

impl RunReport {
    pub fn all_match(&self) -> bool {
        self.strategies.iter().all(|s| s.oracle_match)
    }
}

/// Plans against the realized stats, executes the selected alternatives and
/// checks each against the oracle.
pub fn cmd_run(
    cfg: &Config,
    selection: StrategySelection,
    report_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<RunReport> {
    let data = load_data(cfg)?;
    let space = enumerate_and_choose(&cfg.query, &data.catalog, &cfg.params)?;
    let table = |name: &str| data.datasets.get(name).ok_or_else(|| anyhow!("no data for `{name}`"));
    let expected = reference_eval(&cfg.query, table(&cfg.query.fact)?, table(&cfg.query.dim)?)?;

    let selected: Vec<_> = match selection {
        StrategySelection::Chosen => vec![space.chosen()],
        StrategySelection::All => space.alternatives.iter().collect(),
        StrategySelection::Slot(s) => match space.by_strategy(s) {
            Some(a) => vec![a],
            None => bail!(
                "alternative {} is not available: {}",
                s.index(),
                space.pushdown_disabled.as_deref().unwrap_or("not enumerated")
            ),
        },
    };

    let exec_params = ExecParams::from(&cfg.params);
    let mut runs = Vec::new();
    for alt in selected {
        let (result, metrics) = execute(&alt.root, &data.catalog, &data.datasets, &exec_params)?;
        runs.push(StrategyRun {
            index: alt.strategy.index(),
            strategy: alt.strategy,
            label: alt.summary_label().to_owned(),
            estimate: alt.estimate,
            result_rows: result.rows.len(),
            digest: result.digest(),
            oracle_match: result == expected,
            metrics,
        });
    }
    let report = RunReport {
        chosen: space.chosen_index,
        chosen_strategy: space.chosen().strategy,
        render: render_decision_tree(&space),
        oracle_digest: expected.digest(),
        strategies: runs,
    };
    print_run(&report, out)?;
    if let Some(path) = report_path {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report)
}

fn print_run(report: &RunReport, out: &mut dyn Write) -> Result<()> {
    out.write_all(report.render.as_bytes())?;
    writeln!(out)?;
    writeln!(
        out,
        "{:<22} {:>10} {:>10} {:>14} {:>14} {:>8} {:>6}",
        "alternative", "est rows", "rows", "est net bytes", "net bytes", "shuffles", "oracle"
    )?;
    for r in &report.strategies {
        let measured_net = r.metrics.shuffled_bytes() + r.metrics.broadcast_events.iter().map(|e| e.bytes).sum::<u64>();
        writeln!(
            out,
            "{:<22} {:>10} {:>10} {:>14} {:>14} {:>8} {:>6}",
            format!("{}{} {}", r.index, if r.index == report.chosen { '>' } else { '.' }, r.label),
            r.estimate.rows,
            r.result_rows,
            r.estimate.network_bytes(),
            measured_net,
            r.metrics.total_shuffles,
            if r.oracle_match { "ok" } else { "FAIL" },
        )?;
    }
    for r in &report.strategies {
        writeln!(out, "\n{}. {} events:", r.index, r.label)?;
        for e in &r.metrics.shuffle_events {
            writeln!(out, "  shuffle   {:<32} {:>10} rows {:>12} bytes", e.stage, e.rows, e.bytes)?;
        }
        for e in &r.metrics.broadcast_events {
            writeln!(out, "  broadcast {:<32} {:>10} rows {:>12} bytes", e.stage, e.rows, e.bytes)?;
        }
        writeln!(out, "  result digest {}", r.digest)?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct NdvDelta {
    pub column: String,
    pub estimated: u64,
    pub exact: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub keys: Vec<String>,
    pub input_rows: u64,
    pub composite_ndv: u64,
    pub reduction_ratio: Option<f64>,
    pub push_compute: bool,
    pub batch_size: u64,
    pub batch_ndv: f64,
    /// Expected distinct keys per batch over the batch size.
    pub batch_reduction: Option<f64>,
    pub reduction_negligible: bool,
    pub warnings: Vec<String>,
    pub ndv_deltas: Vec<NdvDelta>,
}

/// Prints the estimation inputs behind the pushdown decision.
pub fn cmd_estimate(cfg: &Config, out: &mut dyn Write) -> Result<EstimateReport> {
    cfg.query.validate(&cfg.catalog)?;
    let p = &cfg.params;
    let mut warnings = Vec::new();
    let keys: Vec<ColumnRef> =
        match substitute_to_fact(&cfg.query, &build_equivalence(&cfg.query), &cfg.catalog) {
            Ok(a) => a.pushed_grouping,
            Err(e) => {
                warnings.push(e.to_string());
                cfg.query.grouping.clone()
            }
        };
    let stats = keys.iter().map(|k| cfg.catalog.resolve_column(k).map(|(_, s)| s)).collect::<Result<Vec<_>, _>>()?;
    let input_rows = cfg.catalog.table(&cfg.query.fact)?.row_count;
    let ndv = composite_ndv(&stats, input_rows);
    let ratio = reduction_ratio::<f64>(ndv, input_rows).ok();
    if ratio.is_none() {
        warnings.push("fact table is empty; reduction ratio undefined".into());
    }
    let push = should_push_compute(ndv, input_rows, p.theta);
    let sorted = !stats.is_empty() && stats.iter().all(|s| s.sorted);
    if p.batch_size == 0 {
        warnings.push("batch size 0: batch_ndv is 0".into());
    }
    let bndv: f64 = batch_ndv(ndv, p.batch_size, sorted);
    let batch_reduction = (p.batch_size > 0).then(|| bndv / p.batch_size as f64);
    let negligible = batch_reduction.is_some_and(|r| r >= p.theta);

    let mut ndv_deltas = Vec::new();
    if files_present(cfg).is_some() {
        let data = load_data(cfg)?;
        for (k, s) in keys.iter().zip(&stats) {
            ndv_deltas.push(NdvDelta {
                column: k.qualified(),
                estimated: s.ndv_global,
                exact: data.realized[&k.table][&k.column].ndv,
            });
        }
        if keys.iter().all(|k| k.table == cfg.query.fact) {
            let fact = &data.datasets[&cfg.query.fact];
            let idx: Vec<usize> = keys.iter().filter_map(|k| fact.column_index(&k.column)).collect();
            let exact: std::collections::BTreeSet<Vec<&Value>> =
                fact.rows.iter().map(|r| idx.iter().map(|&i| &r[i]).collect()).collect();
            ndv_deltas.push(NdvDelta {
                column: keys.iter().map(ColumnRef::qualified).collect::<Vec<_>>().join(", "),
                estimated: ndv,
                exact: exact.len() as u64,
            });
        }
    }

    let report = EstimateReport {
        keys: keys.iter().map(ColumnRef::qualified).collect(),
        input_rows,
        composite_ndv: ndv,
        reduction_ratio: ratio,
        push_compute: push,
        batch_size: p.batch_size,
        batch_ndv: bndv,
        batch_reduction,
        reduction_negligible: negligible,
        warnings,
        ndv_deltas,
    };
    print_estimate(&report, p.theta, out)?;
    Ok(report)
}

fn print_estimate(r: &EstimateReport, theta: f64, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "pushed keys:       {}", r.keys.join(", "))?;
    writeln!(out, "input rows:        {}", r.input_rows)?;
    writeln!(out, "composite ndv:     {}", r.composite_ndv)?;
    match r.reduction_ratio {
        Some(v) => writeln!(out, "reduction ratio:   {v:.4}")?,
        None => writeln!(out, "reduction ratio:   undefined")?,
    }
    writeln!(out, "push compute:      {} (theta {theta})", r.push_compute)?;
    writeln!(out, "batch_ndv (B={}): {:.4}", r.batch_size, r.batch_ndv)?;
    if let Some(b) = r.batch_reduction {
        let flag = if r.reduction_negligible { " (negligible)" } else { "" };
        writeln!(out, "batch reduction:   {b:.4}{flag}")?;
    }
    for d in &r.ndv_deltas {
        writeln!(
            out,
            "ndv {}: estimated {} exact {} delta {}",
            d.column,
            d.estimated,
            d.exact,
            d.estimated as i128 - d.exact as i128
        )?;
    }
    for w in &r.warnings {
        writeln!(out, "warning: {w}")?;
    }
    Ok(())
}

/// Compares a result with the oracle's, for callers that run plans directly.
pub fn matches_oracle(cfg: &Config, datasets: &BTreeMap<String, Dataset>, result: &ResultTable) -> Result<bool> {
    let get = |n: &str| datasets.get(n).ok_or_else(|| anyhow!("no data for `{n}`"));
    Ok(&reference_eval(&cfg.query, get(&cfg.query.fact)?, get(&cfg.query.dim)?)? == result)
}
