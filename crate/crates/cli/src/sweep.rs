//! One-axis parameter sweeps evaluated by any subset of the engines, with
//! deterministic row ordering and CSV/JSON emission. The figure subcommands
//! are thin aliases over [`SweepSpec`] — there is no separate code path.

use clap::ValueEnum;
use rayon::prelude::*;
use serde::Serialize;

use noma_core::analytic::{
    asymptotic_outage_high_snr, asymptotic_outage_large_d, avg_outage, goodput, GoodputMethod,
    OutageQuery,
};
use noma_core::model::{Scenario, SystemConfig};
use noma_core::montecarlo::{estimate_goodput, estimate_outage};

/// The swept configuration parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "snr_db")]
    SnrDb,
    #[value(name = "radius")]
    Radius,
    #[value(name = "corr_coeff")]
    CorrCoeff,
}

impl Axis {
    pub fn tag(self) -> &'static str {
        match self {
            Axis::SnrDb => "snr_db",
            Axis::Radius => "radius",
            Axis::CorrCoeff => "corr_coeff",
        }
    }

    /// Set the swept parameter on a configuration. SNR arrives in dB and is
    /// converted to linear here, the same boundary as config parsing.
    fn apply(self, cfg: &mut SystemConfig, value: f64) {
        match self {
            Axis::SnrDb => cfg.avg_snr = 10f64.powf(value / 10.0),
            Axis::Radius => cfg.radius = value,
            Axis::CorrCoeff => cfg.corr_coeff = value,
        }
    }

    /// The current value of the swept parameter, for single-point runs.
    pub fn read(self, cfg: &SystemConfig) -> f64 {
        match self {
            Axis::SnrDb => 10.0 * cfg.avg_snr.log10(),
            Axis::Radius => cfg.radius,
            Axis::CorrCoeff => cfg.corr_coeff,
        }
    }
}

/// An evaluation engine. Variant order fixes the report ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Engine {
    /// Closed-form average over distances and group size.
    AnalyticExact,
    /// High-SNR outage asymptote; small-radius goodput law.
    AnalyticAsymptoticHigh,
    /// Large-radius outage asymptote and goodput law.
    AnalyticAsymptoticLow,
    /// Trial-level link simulation with 99% confidence intervals.
    Montecarlo,
}

impl Engine {
    pub fn tag(self) -> &'static str {
        match self {
            Engine::AnalyticExact => "analytic-exact",
            Engine::AnalyticAsymptoticHigh => "analytic-asymptotic-high",
            Engine::AnalyticAsymptoticLow => "analytic-asymptotic-low",
            Engine::Montecarlo => "montecarlo",
        }
    }
}

/// What to evaluate at each grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    Outage { stream: usize, user_order: usize },
    Goodput,
}

impl Query {
    /// Parse `"goodput"` or `"M,K"`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let t = text.trim();
        if t.eq_ignore_ascii_case("goodput") {
            return Ok(Query::Goodput);
        }
        let (m, k) = t
            .split_once(',')
            .ok_or_else(|| format!("query must be `goodput` or `M,K`, got `{t}`"))?;
        let stream = m
            .trim()
            .parse::<usize>()
            .map_err(|e| format!("bad stream in query `{t}`: {e}"))?;
        let user_order = k
            .trim()
            .parse::<usize>()
            .map_err(|e| format!("bad user order in query `{t}`: {e}"))?;
        Ok(Query::Outage { stream, user_order })
    }
}

/// A full sweep description: one axis, a strictly increasing grid, queries,
/// and engines.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: Axis,
    pub grid: Vec<f64>,
    pub queries: Vec<Query>,
    pub engines: Vec<Engine>,
    pub mc_trials: u64,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.grid.is_empty() {
            return Err("sweep grid is empty".to_string());
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err("sweep grid contains a non-finite value".to_string());
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err("sweep grid must be strictly increasing".to_string());
        }
        if self.engines.is_empty() {
            return Err("no engines selected".to_string());
        }
        if self.queries.is_empty() {
            return Err("no queries selected".to_string());
        }
        Ok(())
    }
}

/// One output row. `stream`/`user_order` are empty for goodput rows; the
/// confidence interval is present exactly for Monte Carlo rows; `value` is
/// empty when the point failed (an error row).
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub axis: String,
    pub axis_value: f64,
    pub engine: String,
    pub stream: Option<usize>,
    pub user_order: Option<usize>,
    pub value: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub err_est: Option<f64>,
}

struct Evaluation {
    value: Option<f64>,
    ci: Option<(f64, f64)>,
    err_est: Option<f64>,
    note: Option<String>,
}

fn evaluate(
    scenario: &Scenario,
    engine: Engine,
    query: Query,
    mc_trials: u64,
    seed: u64,
) -> Result<Evaluation, noma_core::NomaError> {
    match (engine, query) {
        (Engine::Montecarlo, Query::Outage { stream, user_order }) => {
            let est = estimate_outage(scenario, stream, user_order, mc_trials, seed)?;
            Ok(Evaluation {
                value: Some(est.mean),
                ci: Some((est.ci_lo, est.ci_hi)),
                err_est: None,
                note: None,
            })
        }
        (Engine::Montecarlo, Query::Goodput) => {
            let est = estimate_goodput(scenario, mc_trials, seed)?;
            Ok(Evaluation {
                value: Some(est.mean),
                ci: Some((est.ci_lo, est.ci_hi)),
                err_est: None,
                note: None,
            })
        }
        (engine, Query::Outage { stream, user_order }) => {
            let q = OutageQuery::mixed(scenario, stream, user_order)?;
            let r = match engine {
                Engine::AnalyticExact => avg_outage(&q)?,
                Engine::AnalyticAsymptoticHigh => asymptotic_outage_high_snr(&q)?,
                Engine::AnalyticAsymptoticLow => asymptotic_outage_large_d(&q)?,
                Engine::Montecarlo => unreachable!("handled above"),
            };
            Ok(Evaluation {
                value: Some(r.value),
                ci: None,
                err_est: r.err_est,
                note: r.regime_note,
            })
        }
        (engine, Query::Goodput) => {
            let method = match engine {
                Engine::AnalyticExact => GoodputMethod::Exact,
                Engine::AnalyticAsymptoticHigh => GoodputMethod::AsymptoticSmallD,
                Engine::AnalyticAsymptoticLow => GoodputMethod::AsymptoticLargeD,
                Engine::Montecarlo => unreachable!("handled above"),
            };
            let r = goodput(scenario, method)?;
            Ok(Evaluation {
                value: Some(r.value),
                ci: None,
                err_est: None,
                note: None,
            })
        }
    }
}

/// Run the sweep. Per-point failures become error rows (empty value) plus a
/// warning; the sweep continues. Rows come back sorted by (axis value,
/// engine, stream, user order) with goodput rows after outage rows.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &SystemConfig,
) -> Result<(Vec<ResultRow>, Vec<String>), String> {
    spec.validate()?;
    let per_point: Vec<(Vec<ResultRow>, Vec<String>)> = spec
        .grid
        .par_iter()
        .map(|&axis_value| {
            let mut rows = Vec::new();
            let mut warnings = Vec::new();
            let mut cfg = base.clone();
            spec.axis.apply(&mut cfg, axis_value);
            let scenario = Scenario::from_config(cfg);
            for &engine in &spec.engines {
                for &query in &spec.queries {
                    let (stream, user_order) = match query {
                        Query::Outage { stream, user_order } => (Some(stream), Some(user_order)),
                        Query::Goodput => (None, None),
                    };
                    let mut row = ResultRow {
                        axis: spec.axis.tag().to_string(),
                        axis_value,
                        engine: engine.tag().to_string(),
                        stream,
                        user_order,
                        value: None,
                        ci_lo: None,
                        ci_hi: None,
                        err_est: None,
                    };
                    match &scenario {
                        Err(err) => warnings.push(format!(
                            "{} = {axis_value}: {err}",
                            spec.axis.tag()
                        )),
                        Ok(sc) => {
                            match evaluate(sc, engine, query, spec.mc_trials, spec.seed) {
                                Ok(eval) => {
                                    row.value = eval.value;
                                    if let Some((lo, hi)) = eval.ci {
                                        row.ci_lo = Some(lo);
                                        row.ci_hi = Some(hi);
                                    }
                                    row.err_est = eval.err_est;
                                    if let Some(note) = eval.note {
                                        warnings.push(format!(
                                            "{} = {axis_value}, {}: {note}",
                                            spec.axis.tag(),
                                            engine.tag()
                                        ));
                                    }
                                }
                                Err(err) => warnings.push(format!(
                                    "{} = {axis_value}, {}: {err}",
                                    spec.axis.tag(),
                                    engine.tag()
                                )),
                            }
                        }
                    }
                    rows.push(row);
                }
            }
            (rows, warnings)
        })
        .collect();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (r, w) in per_point {
        rows.extend(r);
        warnings.extend(w);
    }
    rows.sort_by(|a, b| {
        a.axis_value
            .total_cmp(&b.axis_value)
            .then_with(|| engine_rank(&a.engine).cmp(&engine_rank(&b.engine)))
            .then_with(|| row_query_key(a).cmp(&row_query_key(b)))
    });
    Ok((rows, warnings))
}

fn engine_rank(tag: &str) -> u8 {
    match tag {
        "analytic-exact" => 0,
        "analytic-asymptotic-high" => 1,
        "analytic-asymptotic-low" => 2,
        "montecarlo" => 3,
        _ => u8::MAX,
    }
}

fn row_query_key(row: &ResultRow) -> (u8, usize, usize) {
    match (row.stream, row.user_order) {
        (Some(m), Some(k)) => (0, m, k),
        _ => (1, 0, 0),
    }
}

fn float_field(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn index_field(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Render rows as CSV: fixed header, '.' decimal point, LF line endings,
/// empty cells for absent values.
pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("axis,axis_value,engine,stream,user_order,value,ci_lo,ci_hi,err_est\n");
    for row in rows {
        out.push_str(&format!(
            "{},{:?},{},{},{},{},{},{},{}\n",
            row.axis,
            row.axis_value,
            row.engine,
            index_field(row.stream),
            index_field(row.user_order),
            float_field(row.value),
            float_field(row.ci_lo),
            float_field(row.ci_hi),
            float_field(row.err_est),
        ));
    }
    out
}

/// Render rows as a JSON array with the same field names as the CSV header;
/// absent values serialize as null.
pub fn to_json(rows: &[ResultRow]) -> String {
    let mut text = serde_json::to_string_pretty(rows).expect("rows always serialize");
    text.push('\n');
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SweepSpec {
        // 75/80 dB keeps the high-SNR expansion inside [0, 1] for the
        // default cell, so no regime warnings are expected here.
        SweepSpec {
            axis: Axis::SnrDb,
            grid: vec![75.0, 80.0],
            queries: vec![
                Query::Outage {
                    stream: 1,
                    user_order: 1,
                },
                Query::Goodput,
            ],
            engines: vec![Engine::AnalyticExact, Engine::AnalyticAsymptoticHigh],
            mc_trials: 100_000,
            seed: 42,
        }
    }

    #[test]
    fn sweep_produces_sorted_complete_rows() {
        let (rows, warnings) = run_sweep(&tiny_spec(), &SystemConfig::default()).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(warnings.is_empty(), "{warnings:?}");
        // Sorted: axis value, then engine, then outage before goodput.
        let signature: Vec<(f64, &str, Option<usize>)> = rows
            .iter()
            .map(|r| (r.axis_value, r.engine.as_str(), r.stream))
            .collect();
        assert_eq!(
            signature,
            vec![
                (75.0, "analytic-exact", Some(1)),
                (75.0, "analytic-exact", None),
                (75.0, "analytic-asymptotic-high", Some(1)),
                (75.0, "analytic-asymptotic-high", None),
                (80.0, "analytic-exact", Some(1)),
                (80.0, "analytic-exact", None),
                (80.0, "analytic-asymptotic-high", Some(1)),
                (80.0, "analytic-asymptotic-high", None),
            ]
        );
        for row in &rows {
            assert!(row.value.is_some());
            assert!(row.ci_lo.is_none() && row.ci_hi.is_none());
        }
    }

    #[test]
    fn grid_must_increase_strictly() {
        let mut spec = tiny_spec();
        spec.grid = vec![60.0, 60.0];
        assert!(run_sweep(&spec, &SystemConfig::default()).is_err());
        spec.grid = vec![60.0, 55.0];
        assert!(run_sweep(&spec, &SystemConfig::default()).is_err());
        spec.grid.clear();
        assert!(run_sweep(&spec, &SystemConfig::default()).is_err());
    }

    #[test]
    fn failed_points_become_error_rows_and_the_sweep_continues() {
        let mut spec = tiny_spec();
        spec.engines = vec![Engine::Montecarlo];
        spec.mc_trials = 100; // below the estimator's minimum
        let (rows, warnings) = run_sweep(&spec, &SystemConfig::default()).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(warnings.len(), 4);
        for row in &rows {
            assert!(row.value.is_none() && row.ci_lo.is_none() && row.err_est.is_none());
        }
    }

    #[test]
    fn csv_has_exact_header_and_one_line_per_row() {
        let (rows, _) = run_sweep(&tiny_spec(), &SystemConfig::default()).unwrap();
        let csv = to_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "axis,axis_value,engine,stream,user_order,value,ci_lo,ci_hi,err_est"
        );
        assert_eq!(csv.lines().count(), rows.len() + 1);
        assert!(csv.ends_with('\n'));
        // Goodput rows carry empty stream/user_order cells.
        let goodput_line = csv.lines().nth(2).unwrap();
        assert!(goodput_line.starts_with("snr_db,75.0,analytic-exact,,,"));

        let empty = to_csv(&[]);
        assert_eq!(empty.lines().count(), 1);
    }

    #[test]
    fn json_round_trips_with_identical_field_names() {
        let (rows, _) = run_sweep(&tiny_spec(), &SystemConfig::default()).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&to_json(&rows)).unwrap();
        let array = parsed.as_array().unwrap();
        assert_eq!(array.len(), rows.len());
        let first = array[0].as_object().unwrap();
        for field in [
            "axis",
            "axis_value",
            "engine",
            "stream",
            "user_order",
            "value",
            "ci_lo",
            "ci_hi",
            "err_est",
        ] {
            assert!(first.contains_key(field), "missing {field}");
        }
        // Goodput row: stream/user_order are null.
        assert!(array[1].as_object().unwrap()["stream"].is_null());
        assert_eq!(first["value"].as_f64().unwrap(), rows[0].value.unwrap());
    }

    #[test]
    fn montecarlo_rows_carry_confidence_intervals() {
        let mut spec = tiny_spec();
        spec.engines = vec![Engine::Montecarlo];
        spec.grid = vec![60.0];
        spec.mc_trials = 2000;
        let (rows, _) = run_sweep(&spec, &SystemConfig::default()).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            let value = row.value.unwrap();
            assert!(row.ci_lo.unwrap() <= value && value <= row.ci_hi.unwrap());
        }
    }

    #[test]
    fn query_parsing_accepts_pairs_and_goodput() {
        assert_eq!(
            Query::parse(" 2,3 ").unwrap(),
            Query::Outage {
                stream: 2,
                user_order: 3
            }
        );
        assert_eq!(Query::parse("Goodput").unwrap(), Query::Goodput);
        assert!(Query::parse("2;3").is_err());
        assert!(Query::parse("a,b").is_err());
    }
}
