use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{debug, info};
use serde_json::{json, Value};

use sablock::blocksearch::{compress_detailed, PlanConfig, SearchConfig};
use sablock::experiment::{self, PolicyRow, SweepReport};
use sablock::metrics::{
    blocksize_histogram, cross_sentence_rate, kv_bytes_estimate, needle_recall, redundancy_rate,
    retention_fidelity, MetricReport,
};
use sablock::policies::raw_scores;
use sablock::scoring::{score, ScoringConfig};
use sablock::segment::{segment_tokens, SegmentConfig};
use sablock::trace::{generate_synthetic, parse_trace, read_plan, serialize_trace, write_plan, AttentionTrace};
use sablock::{Exec, NeedleSpan, Policy, SyntheticSpec};

use crate::args::{CompareArgs, CompressArgs, Format, GenArgs, GlobalArgs, MetricsArgs, SweepArgs};
use crate::failure::{io, usage, Classify, CmdResult};

pub fn parse_delims(s: &str) -> Vec<char> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, chars.peek()) {
            ('\\', Some('n')) => {
                chars.next();
                out.push('\n');
            }
            ('\\', Some('t')) => {
                chars.next();
                out.push('\t');
            }
            _ => out.push(c),
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

pub fn plan_config(g: &GlobalArgs, budget: usize) -> CmdResult<PlanConfig> {
    let cfg = PlanConfig {
        scoring: ScoringConfig {
            alpha: g.alpha,
            eta: g.eta,
            epsilon: g.epsilon,
        },
        search: SearchConfig {
            budget,
            tau: g.tau,
            g_max: g.gmax,
            ladder: g.ladder.clone(),
            dense_range: g.dense_range,
        },
        segmentation: SegmentConfig {
            delimiters: parse_delims(&g.delims),
            max_len: g.max_seg_len,
        },
    };
    cfg.scoring.validate().usage()?;
    cfg.search.validate().usage()?;
    cfg.segmentation.validate().usage()?;
    Ok(cfg)
}

/// Provenance record embedded in every output. Contains no timestamps so
/// identical invocations produce identical files.
fn manifest(subcommand: &str, global: &GlobalArgs, args: &impl serde::Serialize, config: Option<&PlanConfig>) -> Value {
    json!({
        "tool": "sablock",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": subcommand,
        "seed": global.seed,
        "global": global,
        "args": args,
        "config": config,
    })
}

fn read_trace(path: &Path) -> CmdResult<AttentionTrace> {
    let bytes = fs::read(path).map_err(|e| io(format!("cannot read {}: {e}", path.display())))?;
    parse_trace(&bytes).map_err(|e| io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| io(format!("cannot write {}: {e}", path.display())))
}

/// Write to stdout; a closed pipe (e.g. `| head`) is not an error.
fn stdout_bytes(bytes: &[u8]) -> CmdResult {
    let mut out = std::io::stdout().lock();
    match out.write_all(bytes).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn emit(text: &str) -> CmdResult {
    stdout_bytes(text.as_bytes())
}

pub fn gen(global: &GlobalArgs, args: &GenArgs) -> CmdResult {
    let out = global
        .out
        .as_ref()
        .ok_or_else(|| usage("gen needs an output path (-o)"))?;
    if args.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let base = SyntheticSpec {
        total_tokens: args.tokens,
        num_heads: args.heads,
        window: args.window,
        needle: args.needle_at.map(|start| NeedleSpan { start, len: args.needle_len }),
        needle_boost: args.needle_boost,
        punctuation_period: args.punct_period,
        skew: args.skew,
        seed: global.seed,
    };
    base.validate().usage()?;
    let segmentation = plan_config(global, global.budget.max(1))?.segmentation;
    for i in 0..args.count {
        let spec = SyntheticSpec {
            seed: global.seed.wrapping_add(i as u64),
            ..base.clone()
        };
        let path = if args.count == 1 {
            out.clone()
        } else {
            out.join(format!("trace_{i:04}.json"))
        };
        let mut trace = generate_synthetic(&spec).usage()?;
        trace.manifest = Some(json!({
            "tool": "sablock",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": "gen",
            "seed": spec.seed,
            "spec": spec,
        }));
        write_file(&path, &serialize_trace(&trace).io()?)?;
        let segments = segment_tokens(&trace, &segmentation).len();
        let needle = trace
            .needle
            .map(|n| format!(" needle=[{}, {})", n.start, n.end()))
            .unwrap_or_default();
        emit(&format!(
            "{}: H={} window={} T={} segments={segments}{needle}\n",
            path.display(),
            trace.num_heads,
            trace.window,
            trace.compressible_len()
        ))?;
    }
    Ok(())
}

pub fn compress(global: &GlobalArgs, args: &CompressArgs) -> CmdResult {
    let cfg = plan_config(global, global.budget)?;
    let trace = read_trace(&args.trace)?;
    let c = compress_detailed(&trace, &cfg, Exec::Parallel).usage()?;
    let mut plan = c.plan;
    plan.manifest = Some(manifest("compress", global, args, Some(&cfg)));
    let bytes = write_plan(&plan, &trace).io()?;

    let fidelity = retention_fidelity(&c.scores.adjusted, &plan.retained, cfg.search.budget);
    let mut report = String::new();
    report += &format!(
        "retained {} of {} tokens (budget {}), window {}\n",
        plan.retained.len(),
        trace.compressible_len(),
        plan.budget,
        plan.window_tokens.len()
    );
    report += &format!("global fidelity {fidelity:.6}\n");
    if let Some(n) = trace.needle {
        report += &format!("needle recall {:.4}\n", needle_recall(&plan.retained, n).io()?);
    }
    report += &format!("{:>7} {:>7} {:>7} {:>7} {:>6} {:>9}\n", "segment", "start", "end", "budget", "block", "fidelity");
    for s in plan.active_segments() {
        report += &format!(
            "{:>7} {:>7} {:>7} {:>7} {:>6} {:>9.4}\n",
            s.segment, s.start, s.end, s.budget, s.block_size, s.fidelity
        );
    }
    match &global.out {
        Some(path) => {
            write_file(path, &bytes)?;
            emit(&format!("{report}plan written to {}\n", path.display()))?;
        }
        None => {
            eprint!("{report}");
            stdout_bytes(&bytes)?;
            emit("\n")?;
        }
    }
    Ok(())
}

/// FNV-1a over the retained indices; lets text output show set identity.
fn digest(indices: &[usize]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &i in indices {
        for b in (i as u64).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn compare_text(rows: &[PolicyRow]) -> String {
    let mut s = format!(
        "{:<14} {:>8} {:>9} {:>10} {:>7} {:>7} {:>16}\n",
        "policy", "retained", "fidelity", "redundancy", "recall", "mean_g", "set"
    );
    for r in rows {
        s += &format!(
            "{:<14} {:>8} {:>9.4} {:>10.4} {:>7} {:>7} {:>16}\n",
            r.policy,
            r.retained_count,
            r.fidelity,
            r.redundancy,
            opt(r.needle_recall),
            opt(r.mean_block_size),
            digest(&r.retained)
        );
    }
    s
}

fn csv_with_manifest<R: serde::Serialize>(manifest: &Value, rows: impl IntoIterator<Item = R>) -> CmdResult<Vec<u8>> {
    let mut buf = format!("# manifest: {manifest}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).io()?;
        }
        w.flush().io()?;
    }
    Ok(buf)
}

#[derive(serde::Serialize)]
struct CompareCsvRow<'a> {
    policy: &'a str,
    budget: usize,
    retained: usize,
    fidelity: f64,
    redundancy: f64,
    needle_recall: Option<f64>,
    mean_block_size: Option<f64>,
    retained_digest: String,
}

pub fn compare(global: &GlobalArgs, args: &CompareArgs) -> CmdResult {
    let policies = Policy::parse_list(&args.policies).usage()?;
    let cfg = plan_config(global, global.budget)?;
    let trace = read_trace(&args.trace)?;
    let rows = experiment::compare(&trace, &policies, global.budget, &cfg, Exec::Parallel).usage()?;
    let m = manifest("compare", global, args, Some(&cfg));

    let format = match (&global.out, args.format) {
        (Some(p), Format::Text) => match p.extension().and_then(|e| e.to_str()) {
            Some("json") => Format::Json,
            Some("csv") => Format::Csv,
            _ => Format::Text,
        },
        (_, f) => f,
    };
    let body = match format {
        Format::Text => compare_text(&rows).into_bytes(),
        Format::Json => serde_json::to_vec_pretty(&json!({ "manifest": m, "rows": rows })).io()?,
        Format::Csv => csv_with_manifest(
            &m,
            rows.iter().map(|r| CompareCsvRow {
                policy: &r.policy,
                budget: r.budget,
                retained: r.retained_count,
                fidelity: r.fidelity,
                redundancy: r.redundancy,
                needle_recall: r.needle_recall,
                mean_block_size: r.mean_block_size,
                retained_digest: digest(&r.retained),
            }),
        )?,
    };
    match &global.out {
        Some(path) => {
            write_file(path, &body)?;
            emit(&compare_text(&rows))?;
        }
        None => stdout_bytes(&body)?,
    }
    Ok(())
}

fn corpus_paths(dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io(format!("cannot read corpus {}: {e}", dir.display())))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.io()?.path();
        if p.is_file() && p.extension().is_some_and(|e| e == "json") {
            paths.push(p);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(io(format!("corpus {} contains no trace files", dir.display())));
    }
    Ok(paths)
}

fn sweep_summary(report: &SweepReport) -> String {
    let mut s = format!("{:>7} {:>8} {:>7}  histogram\n", "budget", "segments", "mean_g");
    for h in &report.histograms {
        let counts: Vec<String> = h.histogram.counts.iter().map(|(g, c)| format!("{g}:{c}")).collect();
        s += &format!(
            "{:>7} {:>8} {:>7.3}  {}\n",
            h.budget,
            h.histogram.total(),
            h.histogram.mean,
            counts.join(" ")
        );
    }
    s += &format!(
        "spearman(budget, mean_g) = {}\n",
        report.budget_blocksize_spearman.map_or("undefined".into(), |r| format!("{r:.4}"))
    );
    s
}

pub fn sweep(global: &GlobalArgs, args: &SweepArgs) -> CmdResult {
    let policies = Policy::parse_list(&args.policies).usage()?;
    if args.budgets.is_empty() || args.budgets.contains(&0) {
        return Err(usage("--budgets must list positive budgets"));
    }
    let cfg = plan_config(global, args.budgets[0])?;
    let paths = corpus_paths(&args.corpus)?;
    let exec = if args.sequential { Exec::Sequential } else { Exec::Parallel };
    let traces = exec
        .map(&paths, |p| read_trace(p))
        .into_iter()
        .collect::<CmdResult<Vec<_>>>()?;
    info!("sweeping {} traces x {} budgets", traces.len(), args.budgets.len());
    let report = experiment::sweep(&traces, &args.budgets, &policies, &cfg, exec).usage()?;
    let m = manifest("sweep", global, args, Some(&cfg));

    let csv = csv_with_manifest(&m, &report.rows)?;
    if let Some(path) = &args.hist_out {
        let hist = json!({
            "manifest": m,
            "histograms": report.histograms,
            "budget_blocksize_spearman": report.budget_blocksize_spearman,
        });
        write_file(path, &serde_json::to_vec_pretty(&hist).io()?)?;
        debug!("histograms written to {}", path.display());
    }
    match &global.out {
        Some(path) => {
            write_file(path, &csv)?;
            emit(&sweep_summary(&report))?;
        }
        None => {
            eprint!("{}", sweep_summary(&report));
            stdout_bytes(&csv)?;
        }
    }
    Ok(())
}

pub fn metrics(global: &GlobalArgs, args: &MetricsArgs) -> CmdResult {
    if args.trace.is_none() && args.kv_shape.is_none() {
        return Err(usage("metrics needs --trace and/or --kv-shape"));
    }
    if args.plan.is_some() && args.trace.is_none() {
        return Err(usage("--plan requires the --trace it was computed from"));
    }
    if args.block_sizes.contains(&0) {
        return Err(usage("--block-sizes must be positive"));
    }
    let mut report = MetricReport::default();
    if let Some(shape) = &args.kv_shape {
        let [b, l, len, h, c, p] = shape[..] else {
            return Err(usage("--kv-shape takes six values: batch,layers,seq_len,heads,head_dim,bytes"));
        };
        report.insert("kv_bytes", kv_bytes_estimate(b, l, len, h, c, p).usage()? as f64);
    }
    let mut config = None;
    if let Some(trace_path) = &args.trace {
        let trace = read_trace(trace_path)?;
        let t_len = trace.compressible_len();
        let plan = args
            .plan
            .as_ref()
            .map(|p| {
                let bytes = fs::read(p).map_err(|e| io(format!("cannot read {}: {e}", p.display())))?;
                read_plan(&bytes).map_err(|e| io(format!("{}: {e}", p.display())))
            })
            .transpose()?;
        let cfg = match &plan {
            Some(p) => p.config.clone(),
            None => plan_config(global, global.budget)?,
        };
        let segments = segment_tokens(&trace, &cfg.segmentation);
        report.insert("tokens", t_len as f64);
        report.insert("segments", segments.len() as f64);
        for &g in &args.block_sizes {
            report.insert(format!("cross_sentence_rate@{g}"), cross_sentence_rate(&segments, g, t_len));
        }
        if let Some(plan) = plan {
            if plan.retained.iter().any(|&t| t >= t_len) {
                return Err(io("plan does not match trace: retained index out of range"));
            }
            let adjusted = score(&trace, &segments, &cfg.scoring).adjusted;
            report.insert("budget", plan.budget as f64);
            report.insert("retained", plan.retained.len() as f64);
            report.insert("fidelity", retention_fidelity(&adjusted, &plan.retained, plan.budget));
            report.insert("redundancy", redundancy_rate(&raw_scores(&trace), &plan.retained, plan.budget));
            if let Some(n) = trace.needle {
                report.insert("needle_recall", needle_recall(&plan.retained, n).io()?);
            }
            report.histogram = Some(blocksize_histogram(std::slice::from_ref(&plan)));
        }
        config = Some(cfg);
    }
    report.config = Some(manifest("metrics", global, args, config.as_ref()));

    let body = match args.format {
        Format::Json => serde_json::to_vec_pretty(&report).io()?,
        Format::Csv => csv_with_manifest(
            report.config.as_ref().unwrap(),
            report.metrics.iter(),
        )?,
        Format::Text => {
            let width = report.metrics.keys().map(String::len).max().unwrap_or(0);
            let mut s = String::new();
            for (k, v) in &report.metrics {
                s += &format!("{k:<width$}  {v}\n");
            }
            if let Some(h) = &report.histogram {
                let counts: Vec<String> = h.counts.iter().map(|(g, c)| format!("{g}:{c}")).collect();
                s += &format!("{:<width$}  {} (mean {:.3})\n", "block_sizes", counts.join(" "), h.mean);
            }
            s.into_bytes()
        }
    };
    match &global.out {
        Some(path) => write_file(path, &body),
        None => stdout_bytes(&body),
    }
}
