//! Experiment drivers and their CSV/text outputs.

use rayon::prelude::*;

use crate::arrivals::ArrivalProcess;
use crate::channel::ChannelSpec;
use crate::config::render_config;
use crate::error::{Error, Result};
use crate::estimator::EstimationResult;
use crate::plot::{emit_svg, Axes, PlotPoint, Series};
use crate::policies::PolicySpec;
use crate::ratefn::{optimality_check, RateFnReport};
use crate::sim::{default_warmup, dominance_trace, estimate_violation, run, SimConfig, ViolationEstimate};

pub const VERSION: &str = concat!("rfsched ", env!("CARGO_PKG_VERSION"));

/// Flag marking runs smaller than the figure defaults.
pub const REDUCED_SCALE: &str = "reduced-scale";
/// Flag for rows whose estimate is zero and so absent from the log plot.
pub const NOT_PLOTTED: &str = "not-plotted";

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::InvalidSimConfig(format!("csv: {e}"))
}

fn to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(csv_err)?;
    String::from_utf8(bytes).map_err(csv_err)
}

/// Text that reproduces a run: version line plus canonical config.
pub fn manifest(cfg: &SimConfig) -> String {
    format!("# {VERSION}\n{}", render_config(cfg))
}

pub fn channel_label(channel: &ChannelSpec) -> String {
    match channel.preset {
        Some(id) => id.to_string(),
        None => channel.to_string(),
    }
}

/// One row of the simulation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub estimate: ViolationEstimate,
    pub n: usize,
    pub policy: PolicySpec,
    pub channel: String,
    pub mu: f64,
    pub seed: u64,
}

pub const SIM_HEADER: [&str; 11] = [
    "b", "estimate", "ci_lo", "ci_hi", "samples", "n", "policy", "channel_preset", "mu", "seed", "flag",
];

/// `P(W > b)` for every `b` in `0..=b_max`.
pub fn simulate(cfg: &SimConfig) -> Result<Vec<SimRow>> {
    let metrics = run(cfg)?;
    (0..=cfg.b_max)
        .map(|b| {
            Ok(SimRow {
                estimate: estimate_violation(&metrics, b)?,
                n: cfg.n,
                policy: cfg.policy,
                channel: channel_label(&cfg.channel),
                mu: cfg.arrivals.label_mu(),
                seed: cfg.seed,
            })
        })
        .collect()
}

/// Simulation CSV; a leading flag row marks reduced-scale output.
pub fn sim_csv(rows: &[SimRow], reduced: bool) -> Result<String> {
    let mut out = Vec::new();
    if reduced {
        let mut mark = vec![String::new(); SIM_HEADER.len()];
        mark[SIM_HEADER.len() - 1] = REDUCED_SCALE.into();
        out.push(mark);
    }
    for r in rows {
        let e = &r.estimate;
        out.push(vec![
            e.b.to_string(),
            e.estimate.to_string(),
            e.ci_lo.to_string(),
            e.ci_hi.to_string(),
            e.samples.to_string(),
            r.n.to_string(),
            r.policy.to_string(),
            r.channel.clone(),
            r.mu.to_string(),
            r.seed.to_string(),
            if e.estimate > 0.0 { String::new() } else { NOT_PLOTTED.into() },
        ]);
    }
    to_csv(&SIM_HEADER, &out)
}

pub const RATEFN_HEADER: [&str; 10] = [
    "b", "I_U", "I_0", "q_hat", "q_tilde", "pi0", "cond_a", "cond_b", "optimal", "fraction_bound",
];

pub fn ratefn_reports(b_max: u64, arrivals: &ArrivalProcess, channel: &ChannelSpec) -> Vec<RateFnReport> {
    (0..=b_max).map(|b| optimality_check(b, arrivals, channel)).collect()
}

pub fn ratefn_csv(reports: &[RateFnReport]) -> Result<String> {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.b.to_string(),
                r.i_upper.value.to_string(),
                r.i_lower.value.to_string(),
                r.q_hat.to_string(),
                r.q_tilde.to_string(),
                r.pi0.to_string(),
                format!("{:?}", r.condition_a).to_lowercase(),
                r.condition_b.to_string(),
                r.optimal.to_string(),
                r.fraction_bound.map(|f| f.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    to_csv(&RATEFN_HEADER, &rows)
}

pub const ESTIMATE_HEADER: [&str; 6] = ["b", "n", "p_hat", "ci_lo", "ci_hi", "samples"];

pub fn estimate_csv(result: &EstimationResult) -> Result<String> {
    let rows: Vec<Vec<String>> = result
        .points
        .iter()
        .map(|p| {
            vec![
                result.b.to_string(),
                p.n.to_string(),
                p.p_hat.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
                p.samples.to_string(),
            ]
        })
        .collect();
    to_csv(&ESTIMATE_HEADER, &rows)
}

/// Flat `key = value` fit summary.
pub fn fit_summary(result: &EstimationResult) -> String {
    let mut s = format!("b = {}\n", result.b);
    match &result.fit {
        Some(f) => {
            s.push_str(&format!(
                "slope = {}\nslope_ci = [{}, {}]\nmodel = {}\nresidual = {}\n",
                f.slope, f.slope_ci.0, f.slope_ci.1, f.model, f.residual
            ));
            if let Some(c) = f.log_n_coef {
                s.push_str(&format!("log_n_coef = {c}\n"));
            }
        }
        None => s.push_str("slope = none\n"),
    }
    for (n, why) in &result.dropped {
        s.push_str(&format!("dropped_n{n} = {why}\n"));
    }
    s
}

/// Channel settings and arrival rate of a figure.
pub fn figure_settings(fig: u8) -> Result<(Vec<u8>, f64)> {
    match fig {
        3 => Ok((vec![1, 3, 4], 0.15)),
        4 => Ok((vec![1, 3, 4], 0.13)),
        5 => Ok((vec![2, 5, 6, 7], 0.15)),
        _ => Err(Error::InvalidSimConfig(format!("unknown figure {fig}, expected 3, 4 or 5"))),
    }
}

pub const FIGURE_N: usize = 10;
pub const FIGURE_SAMPLES: u64 = 2_000_000;
pub const FIGURE_B_MAX: u32 = 12;

/// Changes to a figure run; any field set below the default marks the output
/// as reduced-scale.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FigureOverrides {
    pub n: Option<usize>,
    pub samples: Option<u64>,
    pub b_max: Option<u32>,
    pub seed: Option<u64>,
    pub replications: Option<u32>,
}

impl FigureOverrides {
    pub fn is_reduced(&self) -> bool {
        self.n.is_some_and(|n| n != FIGURE_N)
            || self.samples.is_some_and(|s| s < FIGURE_SAMPLES)
            || self.b_max.is_some_and(|b| b < FIGURE_B_MAX)
    }
}

/// One config per channel setting: DWM, batch(5, mu), W sampled every slot.
pub fn figure_configs(fig: u8, ov: &FigureOverrides) -> Result<Vec<SimConfig>> {
    let (settings, mu) = figure_settings(fig)?;
    let n = ov.n.unwrap_or(FIGURE_N);
    let b_max = ov.b_max.unwrap_or(FIGURE_B_MAX);
    let replications = ov.replications.unwrap_or(1).max(1);
    let samples = ov.samples.unwrap_or(FIGURE_SAMPLES);
    let per_rep = samples.div_ceil(u64::from(replications)).max(1);
    let warmup = default_warmup(n, b_max);
    settings
        .into_iter()
        .map(|id| {
            Ok(SimConfig {
                n,
                horizon: warmup + per_rep,
                warmup,
                sample_gap: 1,
                policy: PolicySpec::Dwm,
                channel: ChannelSpec::preset(id)?,
                arrivals: ArrivalProcess::batch(5, mu)?,
                seed: ov.seed.unwrap_or(1),
                replications,
                b_max,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOutput {
    pub fig: u8,
    pub reduced: bool,
    pub configs: Vec<SimConfig>,
    pub rows: Vec<SimRow>,
    pub csv: String,
    pub svg: String,
}

pub fn reproduce_fig(fig: u8, ov: &FigureOverrides) -> Result<FigureOutput> {
    let configs = figure_configs(fig, ov)?;
    let reduced = ov.is_reduced();
    let mut rows = Vec::new();
    let mut series = Vec::new();
    for cfg in &configs {
        let part = simulate(cfg)?;
        series.push(Series {
            label: format!("setting {}", channel_label(&cfg.channel)),
            points: part
                .iter()
                .map(|r| {
                    let e = &r.estimate;
                    PlotPoint::with_interval(f64::from(e.b), e.estimate, e.ci_lo, e.ci_hi)
                })
                .collect(),
        });
        rows.extend(part);
    }
    let axes = Axes {
        title: format!("Figure {fig}: DWM, n = {}, mu = {}", configs[0].n, configs[0].arrivals.label_mu()),
        x_label: "b".into(),
        y_label: "P(W > b)".into(),
        watermark: reduced.then(|| REDUCED_SCALE.to_string()),
    };
    let svg = emit_svg(&series, &axes)?.svg;
    let csv = sim_csv(&rows, reduced)?;
    Ok(FigureOutput { fig, reduced, configs, rows, csv, svg })
}

/// Coupled-run grid: run `i` uses `n = [4, 6, 8][i % 3]`, preset
/// `[1, 3, 5][(i / 3) % 3]` and seed `i + 1`.
pub fn dominance_grid(runs: u32, horizon: u64) -> Result<Vec<SimConfig>> {
    const NS: [usize; 3] = [4, 6, 8];
    const PRESETS: [u8; 3] = [1, 3, 5];
    (0..runs)
        .map(|i| {
            let i = i as usize;
            Ok(SimConfig {
                n: NS[i % 3],
                horizon,
                warmup: 0,
                sample_gap: 1,
                policy: PolicySpec::Dwm,
                channel: ChannelSpec::preset(PRESETS[(i / 3) % 3])?,
                arrivals: ArrivalProcess::batch(5, 0.15)?,
                seed: i as u64 + 1,
                replications: 1,
                b_max: 12,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceTally {
    pub reference: PolicySpec,
    pub other: PolicySpec,
    pub packet_violations: u64,
    pub w_violations: u64,
    /// Runs with at least one packet-level violation.
    pub runs_violated: u32,
    /// `(seed, n, preset, slot, queue)` of the first violating run.
    pub first: Option<(u64, usize, String, u64, usize)>,
}

pub const DOMINANCE_REFERENCES: [PolicySpec; 2] = [PolicySpec::Opf, PolicySpec::Dwm];
pub const DOMINANCE_OTHERS: [PolicySpec; 2] = [PolicySpec::Fbs { h: None }, PolicySpec::Pm];

pub fn dominance_experiment(runs: u32, horizon: u64) -> Result<Vec<DominanceTally>> {
    let grid = dominance_grid(runs, horizon)?;
    let reports = grid
        .par_iter()
        .map(|cfg| dominance_trace(cfg, 0, &DOMINANCE_REFERENCES, &DOMINANCE_OTHERS))
        .collect::<Result<Vec<_>>>()?;
    let mut tallies: Vec<DominanceTally> = reports[0]
        .pairs
        .iter()
        .map(|p| DominanceTally {
            reference: p.reference,
            other: p.other,
            packet_violations: 0,
            w_violations: 0,
            runs_violated: 0,
            first: None,
        })
        .collect();
    for (cfg, rep) in grid.iter().zip(&reports) {
        for (t, p) in tallies.iter_mut().zip(&rep.pairs) {
            t.packet_violations += p.packet_violations;
            t.w_violations += p.w_violations;
            if let Some((slot, q)) = p.first_packet_violation {
                t.runs_violated += 1;
                t.first.get_or_insert((cfg.seed, cfg.n, channel_label(&cfg.channel), slot, q));
            }
        }
    }
    Ok(tallies)
}

pub fn dominance_csv(tallies: &[DominanceTally]) -> Result<String> {
    let rows: Vec<Vec<String>> = tallies
        .iter()
        .map(|t| {
            let first = t
                .first
                .as_ref()
                .map(|(seed, n, preset, slot, q)| format!("seed={seed} n={n} preset={preset} slot={slot} queue={q}"))
                .unwrap_or_default();
            vec![
                t.reference.to_string(),
                t.other.to_string(),
                t.packet_violations.to_string(),
                t.w_violations.to_string(),
                t.runs_violated.to_string(),
                first,
            ]
        })
        .collect();
    to_csv(
        &["reference", "other", "packet_violations", "w_violations", "runs_violated", "first_violation"],
        &rows,
    )
}
