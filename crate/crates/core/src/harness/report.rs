//! Figures and tables from a results CSV.

use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::plot::{render_svg, Panel, Series};
use super::{read_results, summarize, ResultRow, SummaryRow};
use crate::characterize::ScoreMethod;
use crate::error::{Error, Result};
use crate::select::Policy;

/// One SVG per (dataset, method): bias level, worst-group and average
/// accuracy against selection rate, one line per policy.
#[derive(Debug, Clone)]
pub struct Figure {
    pub dataset: String,
    pub method: ScoreMethod,
    pub panels: Vec<Panel>,
    pub file: String,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub figures: Vec<Figure>,
    pub markdown: String,
}

type Metric = fn(&SummaryRow) -> (f64, f64);

const METRICS: [(&str, Metric); 3] = [
    ("bias level", |s| s.bias_level),
    ("worst-group accuracy", |s| s.wga),
    ("average accuracy", |s| s.avg_acc),
];

fn series_for(cell: &[&SummaryRow], policies: &[Policy], metric: Metric) -> Vec<Series> {
    policies
        .iter()
        .map(|&p| Series {
            label: p.name().to_string(),
            points: cell
                .iter()
                .filter(|s| s.policy == p)
                .map(|s| (s.rate, metric(s).0))
                .collect(),
        })
        .filter(|s| !s.points.is_empty())
        .collect()
}

fn table(cell: &[&SummaryRow], policies: &[Policy], metric: Metric) -> String {
    let rates: BTreeSet<u64> = cell.iter().map(|s| s.rate.to_bits()).collect();
    let mut rates: Vec<f64> = rates.into_iter().map(f64::from_bits).collect();
    rates.sort_by(f64::total_cmp);
    let mut md = String::from("| rate |");
    for p in policies {
        let _ = write!(md, " {} |", p.name());
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(policies.len()));
    md.push('\n');
    for rate in rates {
        let _ = write!(md, "| {rate} |");
        for &p in policies {
            match cell.iter().find(|s| s.policy == p && s.rate == rate) {
                Some(s) => {
                    let (m, sd) = metric(s);
                    let _ = write!(md, " {m:.3} ± {sd:.3} |");
                }
                None => md.push_str(" - |"),
            }
        }
        md.push('\n');
    }
    md
}

pub fn build_report(rows: &[ResultRow]) -> Result<Report> {
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    let summary = summarize(rows);
    let cells: BTreeSet<(String, ScoreMethod)> = summary
        .iter()
        .map(|s| (s.dataset.clone(), s.method))
        .collect();
    let mut figures = Vec::new();
    let mut md = String::from("# Sweep report\n\nValues are mean ± std over seeds.\n");
    for (dataset, method) in cells {
        let cell: Vec<&SummaryRow> = summary
            .iter()
            .filter(|s| s.dataset == dataset && s.method == method)
            .collect();
        let policies: Vec<Policy> = cell
            .iter()
            .map(|s| s.policy)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let panels: Vec<Panel> = METRICS
            .iter()
            .map(|&(name, metric)| {
                Panel::new(
                    name,
                    "selection rate",
                    name,
                    series_for(&cell, &policies, metric),
                )
            })
            .collect();
        let file = format!("{}_{}.svg", sanitize(&dataset), method.name());
        let _ = write!(
            md,
            "\n## {dataset} / {method}\n\n![{dataset} {method}]({file})\n"
        );
        for &(name, metric) in &METRICS {
            let _ = write!(md, "\n### {name}\n\n{}", table(&cell, &policies, metric));
        }
        figures.push(Figure {
            dataset,
            method,
            panels,
            file,
        });
    }
    Ok(Report {
        figures,
        markdown: md,
    })
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Writes the SVG figures and `report.md` into `out_dir`, returning the
/// paths written.
pub fn report(results_csv: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let rows = read_results(results_csv)?;
    let rep = build_report(&rows)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let mut written = Vec::new();
    for f in &rep.figures {
        let path = out_dir.join(&f.file);
        let svg = render_svg(&format!("{} / {}", f.dataset, f.method), &f.panels);
        std::fs::write(&path, svg).map_err(|e| Error::file(&path, e))?;
        written.push(path);
    }
    let md = out_dir.join("report.md");
    std::fs::write(&md, &rep.markdown).map_err(|e| Error::file(&md, e))?;
    written.push(md);
    Ok(written)
}
