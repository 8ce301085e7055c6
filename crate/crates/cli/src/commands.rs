//! Offline subcommands. Each returns the text to print so the binary stays
//! a thin shell and the formatting can be tested directly.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};

use cotransport::harness::{
    default_scripts, replay, run_headless, HeadlessOptions, HeadlessOutcome, OperatorScript,
    ReplayOutcome, ScenarioConfig,
};
use cotransport::service::CommMode;
use cotransport::stats::{
    borda, extract_metrics_from, friedman, parse_rankings, relationship, GameReport, Include,
    Significance,
};

pub fn load_scenario(
    path: Option<&Path>,
    mode: Option<CommMode>,
    seed: Option<u64>,
) -> Result<ScenarioConfig> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ScenarioConfig::default_scenario(),
    };
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_scripts(path: Option<&Path>) -> Result<Vec<OperatorScript>> {
    match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
        None => Ok(default_scripts()),
    }
}

/// Plays a scripted game and optionally writes its recording.
pub fn headless(
    cfg: &ScenarioConfig,
    scripts: Vec<OperatorScript>,
    opts: &HeadlessOptions,
    record: Option<&Path>,
) -> Result<HeadlessOutcome> {
    let out = run_headless(cfg, scripts, opts)?;
    if let Some(p) = record {
        std::fs::write(p, &out.log).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(out)
}

pub fn replay_file(path: &Path) -> Result<ReplayOutcome> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    replay(BufReader::new(f)).with_context(|| format!("replaying {}", path.display()))
}

pub fn summary(report: &GameReport) -> String {
    format!(
        "{}/{} points in {:.1} s, {} deliveries, {} commands, {} conflicts",
        report.points,
        report.max_points,
        report.duration_s,
        report.deliveries.len(),
        report.total_commands(),
        report.conflicts
    )
}

/// Per-game metrics from recordings, as pretty JSON or one CSV row per log.
pub fn analyze(logs: &[impl AsRef<Path>], as_csv: bool) -> Result<String> {
    let mut reports = Vec::new();
    for p in logs {
        let p = p.as_ref();
        let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
        let report = extract_metrics_from(BufReader::new(f))
            .with_context(|| format!("reading {}", p.display()))?;
        reports.push((p.display().to_string(), report));
    }
    if !as_csv {
        let list: Vec<&GameReport> = reports.iter().map(|(_, r)| r).collect();
        let json = if list.len() == 1 {
            serde_json::to_string_pretty(list[0])?
        } else {
            serde_json::to_string_pretty(&list)?
        };
        return Ok(json + "\n");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "log",
        "points",
        "max_points",
        "duration_s",
        "deliveries",
        "object_oriented",
        "robot_oriented",
        "team_oriented",
        "lock",
        "unlock",
        "rejected",
        "conflicts",
        "robot_idle_s",
    ])?;
    for (name, r) in &reports {
        let sum = |f: fn(&cotransport::stats::OperatorCounts) -> u32| -> u32 {
            r.commands.values().map(f).sum()
        };
        w.write_record([
            name.clone(),
            r.points.to_string(),
            r.max_points.to_string(),
            format!("{:.1}", r.duration_s),
            r.deliveries.len().to_string(),
            sum(|c| c.object_oriented).to_string(),
            sum(|c| c.robot_oriented).to_string(),
            sum(|c| c.team_oriented).to_string(),
            sum(|c| c.lock).to_string(),
            sum(|c| c.unlock).to_string(),
            sum(|c| c.rejected).to_string(),
            r.conflicts.to_string(),
            format!("{:.1}", r.total_idle_s()),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// Friedman test on a CSV matrix: a header row naming the conditions, then
/// one row of ratings per subject.
pub fn friedman_csv(path: &Path) -> Result<String> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let labels: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, v)| {
                v.parse::<f64>().with_context(|| {
                    format!("row {}, column {}: {v:?} is not a number", i + 1, j + 1)
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    let r = friedman(&rows)?;
    let names: Vec<&str> = labels.iter().map(String::as_str).collect();
    let mut out = String::new();
    writeln!(out, "n = {}, k = {}", rows.len(), labels.len())?;
    writeln!(
        out,
        "chi2({}) = {:.3}, p = {:.3} ({})",
        r.df,
        r.chi2,
        r.p,
        significance_label(Significance::from_p(r.p))
    )?;
    let ranks: Vec<String> = names
        .iter()
        .zip(&r.mean_ranks)
        .map(|(n, m)| format!("{n} {m:.3}"))
        .collect();
    writeln!(out, "mean ranks: {}", ranks.join(", "))?;
    writeln!(out, "relationship: {}", relationship(&names, &r.mean_ranks))?;
    Ok(out)
}

fn significance_label(s: Significance) -> &'static str {
    match s {
        Significance::Significant => "significant",
        Significance::Marginal => "marginally significant",
        Significance::NotSignificant => "not significant",
    }
}

/// Borda count over a rankings file, highest score first.
pub fn borda_file(path: Option<&Path>, include: Include, invert_negative: bool) -> Result<String> {
    let rankings = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_rankings(&text)?
        }
        None => cotransport::stats::study_rankings(),
    };
    let used = rankings
        .iter()
        .filter(|r| include.admits(r.significance))
        .count();
    let scores = borda(&rankings, include, invert_negative);
    let mut order: Vec<(CommMode, u32)> = scores.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut out = format!("{used} of {} scales counted\n", rankings.len());
    for (mode, pts) in order {
        writeln!(out, "{mode} {pts}")?;
    }
    Ok(out)
}
