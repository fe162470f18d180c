//! CSV output. Numbers use six significant digits in scientific notation;
//! wall-clock timings go to separate `_timing.csv` files so the other
//! bodies are reproducible byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::benchmarks::TableResult;
use crate::error::{DvsError, Result};
use crate::fom::TimeGrid;
use crate::model::GreedyTrace;
use crate::online::ErrorReport;

pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.5e}")
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| DvsError::io(dir, e))?;
    }
    std::fs::write(path, body).map_err(|e| DvsError::io(path, e))
}

fn fixed_label(t: f64) -> String {
    let s = format!("{t}");
    s.trim_end_matches(".0").to_string()
}

/// `N, eps_mean, eps_max[, eps_t=…][, <other>_mean, <other>_max]`
pub fn table_csv(main: &TableResult, other: Option<&TableResult>) -> String {
    let mut out = String::from("N,eps_mean,eps_max");
    let fixed = main.reports.first().map(|r| r.fixed_times.clone()).unwrap_or_default();
    for t in &fixed {
        write!(out, ",eps_t={}", fixed_label(*t)).unwrap();
    }
    if let Some(o) = other {
        write!(out, ",{m}_mean,{m}_max", m = o.method).unwrap();
    }
    out.push('\n');
    for r in &main.reports {
        write!(out, "{},{},{}", r.n_terms, num(r.mean), num(r.max)).unwrap();
        for v in &r.fixed_means {
            write!(out, ",{}", num(*v)).unwrap();
        }
        if let Some(o) = other {
            match o.reports.iter().find(|x| x.n_terms == r.n_terms) {
                Some(x) => write!(out, ",{},{}", num(x.mean), num(x.max)).unwrap(),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

/// `N, offline_s, online_total_s, online_mean_s, fom_mean_s`
pub fn timing_csv(t: &TableResult) -> String {
    let mut out = String::from("N,offline_s,online_total_s,online_mean_s,fom_mean_s\n");
    for r in &t.reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.n_terms,
            num(t.offline_seconds),
            num(r.online_seconds_total),
            num(r.online_seconds_mean),
            num(r.fom_seconds_mean)
        )
        .unwrap();
    }
    out
}

/// `t, N=<n>…`: mean relative error at every time node.
pub fn curve_csv(grid: &TimeGrid, reports: &[ErrorReport]) -> String {
    let mut out = String::from("t");
    for r in reports {
        write!(out, ",N={}", r.n_terms).unwrap();
    }
    out.push('\n');
    for n in 0..grid.nodes() {
        out.push_str(&num(grid.time(n)));
        for r in reports {
            write!(out, ",{}", num(r.curve[n])).unwrap();
        }
        out.push('\n');
    }
    out
}

/// `sample, xi_1…, N=<n>…`: relative error of every test sample.
pub fn density_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from("sample");
    let Some(first) = reports.first() else {
        out.push('\n');
        return out;
    };
    let dim = first.samples.first().map(|s| s.xi.len()).unwrap_or(0);
    for j in 0..dim {
        write!(out, ",xi_{}", j + 1).unwrap();
    }
    for r in reports {
        write!(out, ",N={}", r.n_terms).unwrap();
    }
    out.push('\n');
    for (i, s) in first.samples.iter().enumerate() {
        write!(out, "{i}").unwrap();
        for x in &s.xi {
            write!(out, ",{}", num(*x)).unwrap();
        }
        for r in reports {
            write!(out, ",{}", num(r.samples[i].rel_error)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// `k, sample, xi_1…, delta_max, strategy, anchor_error, held_steps`
pub fn trace_csv(trace: &GreedyTrace) -> String {
    let dim = trace.steps.first().map(|s| s.xi.len()).unwrap_or(0);
    let mut out = String::from("k,sample");
    for j in 0..dim {
        write!(out, ",xi_{}", j + 1).unwrap();
    }
    out.push_str(",delta_max,strategy,anchor_error,held_steps\n");
    for s in &trace.steps {
        write!(out, "{},{}", s.k, s.sample_index).unwrap();
        for x in &s.xi {
            write!(out, ",{}", num(*x)).unwrap();
        }
        let d = s.delta_max.map(num).unwrap_or_default();
        writeln!(out, ",{d},{},{},{}", s.strategy, num(s.anchor_error), s.held_steps).unwrap();
    }
    out
}

/// `k, seconds`
pub fn trace_timing_csv(trace: &GreedyTrace) -> String {
    let mut out = String::from("k,seconds\n");
    for s in &trace.steps {
        writeln!(out, "{},{}", s.k, num(s.seconds)).unwrap();
    }
    out
}

/// Files of one benchmark run under `dir`: table, timing, curve, density.
pub fn write_benchmark(dir: &Path, main: &TableResult, other: Option<&TableResult>) -> Result<Vec<std::path::PathBuf>> {
    let id = main.id.as_str();
    let grid = main.model.grid;
    let mut files = vec![
        (dir.join(format!("{id}_table.csv")), table_csv(main, other)),
        (dir.join(format!("{id}_timing.csv")), timing_csv(main)),
        (dir.join(format!("{id}_curve.csv")), curve_csv(&grid, &main.reports)),
        (dir.join(format!("{id}_density.csv")), density_csv(&main.reports)),
        (dir.join(format!("{id}_trace.csv")), trace_csv(&main.model.trace)),
    ];
    if let Some(o) = other {
        let m = o.method;
        files.push((dir.join(format!("{id}_{m}_timing.csv")), timing_csv(o)));
        files.push((dir.join(format!("{id}_{m}_curve.csv")), curve_csv(&grid, &o.reports)));
    }
    for (p, body) in &files {
        write(p, body)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

pub fn write_file(path: &Path, body: &str) -> Result<()> {
    write(path, body)
}
