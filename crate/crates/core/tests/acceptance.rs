//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sablock::blocksearch::{
    compress_detailed, cover_segment, fidelity_ratio, implicit_budgets, search_segment, select_top_b,
    PlanConfig, SearchConfig,
};
use sablock::metrics::{cross_sentence_rate, kv_bytes_estimate, needle_recall, redundancy_rate, spearman};
use sablock::policies::{evict_fixed_block, evict_window_topk, raw_scores, Policy};
use sablock::scoring::{score, ScoringConfig};
use sablock::segment::{segment_tokens, Segment, SegmentConfig};
use sablock::trace::{generate_synthetic, AttentionTrace, NeedleSpan, SyntheticSpec, Token};
use sablock::{experiment, Exec};

type Outcome = Result<String, String>;

fn check(cond: bool, ok: impl Into<String>, fail: impl Into<String>) -> Outcome {
    if cond {
        Ok(ok.into())
    } else {
        Err(fail.into())
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    if took < limit {
        Ok(took)
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

/// Small random trace with punctuation and, half the time, coarse
/// attention values so that score ties are common.
fn random_trace(rng: &mut ChaCha8Rng, max_t: usize) -> AttentionTrace {
    let coarse = rng.random_bool(0.5);
    random_trace_with(rng, max_t, coarse)
}

fn random_trace_with(rng: &mut ChaCha8Rng, max_t: usize, coarse: bool) -> AttentionTrace {
    let t_len = rng.random_range(1..=max_t);
    let heads = rng.random_range(1..=3);
    let window = rng.random_range(1..=4);
    let p_delim = rng.random_range(0.05..0.5);
    let mut tokens: Vec<Token> = (0..t_len)
        .map(|i| Token::new(if rng.random_bool(p_delim) { ".".to_string() } else { format!(" w{i}") }))
        .collect();
    tokens.extend((0..window).map(|q| Token::new(format!(" q{q}"))));
    let attention = (0..heads * window * t_len)
        .map(|_| {
            if coarse {
                f64::from(rng.random_range(0..4u8)) * 0.25
            } else {
                rng.random::<f64>().powi(3)
            }
        })
        .collect();
    AttentionTrace::new(heads, window, tokens, attention).unwrap()
}

fn random_ladder(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut ladder = vec![1];
    ladder.extend((2..=16).filter(|_| rng.random_bool(0.4)));
    ladder
}

fn random_plan_config(rng: &mut ChaCha8Rng, budget: usize) -> PlanConfig {
    PlanConfig {
        scoring: ScoringConfig {
            alpha: rng.random_range(0.0..3.0),
            eta: rng.random_range(0.0..3.0),
            epsilon: 1e-6,
        },
        search: SearchConfig {
            budget,
            tau: 1.0 - rng.random::<f64>(), // (0, 1]
            g_max: rng.random_range(1..=16),
            ladder: random_ladder(rng),
            dense_range: rng.random_bool(0.3),
        },
        segmentation: SegmentConfig {
            max_len: rng.random_range(1..=64),
            ..Default::default()
        },
    }
}

fn exact_budget() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let trace = random_trace(&mut rng, 500);
        let t_len = trace.compressible_len();
        let budget = rng.random_range(1..=t_len + 50);
        let cfg = random_plan_config(&mut rng, budget);
        let c = compress_detailed(&trace, &cfg, Exec::Sequential).map_err(|e| e.to_string())?;
        let plan = &c.plan;
        let kept: usize = plan.segments.iter().map(|s| s.retained.len()).sum();
        let b_sum: usize = plan.segments.iter().map(|s| s.budget).sum();
        let sorted = plan.retained.windows(2).all(|w| w[0] < w[1]);
        if plan.retained.len() != budget.min(t_len) || kept != plan.retained.len() || b_sum != c.top_b.len() || !sorted {
            return Err(format!("case {case}: |T*|={} B={budget} T={t_len}", plan.retained.len()));
        }
    }
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!("1000 cases, |T*| = min(B,T) always ({took:.2?})"))
}

/// Brute-force block cover: enumerate blocks, rank by (Φ desc, position
/// asc) with a stable sort over explicit keys, refine by a full sort.
fn oracle_cover(scores: &[f64], seg: &Segment, b_k: usize, g: usize) -> Vec<usize> {
    let mut blocks: Vec<(f64, usize, Vec<usize>)> = Vec::new();
    let mut s = seg.start;
    while s < seg.end {
        let toks: Vec<usize> = (s..(s + g).min(seg.end)).collect();
        blocks.push((toks.iter().map(|&t| scores[t]).sum(), s, toks));
        s += g;
    }
    blocks.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut kept = Vec::new();
    for (_, _, toks) in blocks {
        if kept.len() + toks.len() <= b_k {
            kept.extend(toks);
        } else {
            let mut t = toks;
            t.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
            kept.extend(t.into_iter().take(b_k - kept.len()));
            break;
        }
    }
    kept.sort_unstable();
    kept
}

/// Exhaustive rule: evaluate every candidate, take the max satisfying g;
/// token level when none does.
fn oracle_choice(scores: &[f64], seg: &Segment, b_k: usize, cfg: &SearchConfig) -> (usize, Vec<usize>) {
    let limit = seg.len().min(b_k).min(cfg.g_max);
    let cands: Vec<usize> = if cfg.dense_range {
        (1..=limit).collect()
    } else {
        cfg.ladder.iter().copied().filter(|&g| g <= limit).collect()
    };
    let mut base: Vec<usize> = seg.range().collect();
    base.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    base.truncate(b_k);
    base.sort_unstable();
    let base_mass: f64 = base.iter().map(|&t| scores[t]).sum();
    let evaluated: Vec<(usize, Vec<usize>, bool)> = cands
        .iter()
        .map(|&g| {
            let cover = oracle_cover(scores, seg, b_k, g);
            let mass: f64 = cover.iter().map(|&t| scores[t]).sum();
            let r = if base_mass <= 0.0 { 1.0 } else { (mass / base_mass).min(1.0) };
            (g, cover, r >= cfg.tau)
        })
        .collect();
    evaluated
        .into_iter()
        .filter(|e| e.2)
        .max_by_key(|e| e.0)
        .map(|(g, c, _)| (g, c))
        .unwrap_or_else(|| (1, base))
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut segments_checked = 0;
    for case in 0..500 {
        let trace = random_trace(&mut rng, 30);
        let budget = rng.random_range(1..=trace.compressible_len() + 2);
        let cfg = random_plan_config(&mut rng, budget);
        let segs = segment_tokens(&trace, &cfg.segmentation);
        let scores = score(&trace, &segs, &cfg.scoring).adjusted;
        let top = select_top_b(&scores, budget).unwrap();
        let budgets = implicit_budgets(&top, &segs);
        for seg in &segs {
            let b_k = budgets[seg.index];
            if b_k == 0 {
                continue;
            }
            let base: Vec<usize> = top.iter().copied().filter(|&t| seg.range().contains(&t)).collect();
            let plan = search_segment(&scores, seg, b_k, &base, &cfg.search).unwrap();
            let (g, kept) = oracle_choice(&scores, seg, b_k, &cfg.search);
            if plan.block_size != g || plan.retained != kept {
                return Err(format!(
                    "case {case} segment {}: got g={} {:?}, oracle g={g} {kept:?}",
                    seg.index, plan.block_size, plan.retained
                ));
            }
            segments_checked += 1;
        }
    }
    let took = within(Duration::from_secs(30), started)?;
    Ok(format!("500 instances, {segments_checked} segments, 0 mismatches ({took:.2?})"))
}

fn termination_floor() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for _ in 0..1000 {
        let trace = random_trace(&mut rng, 200);
        let budget = rng.random_range(1..=trace.compressible_len());
        let cfg = random_plan_config(&mut rng, budget);
        let segs = segment_tokens(&trace, &cfg.segmentation);
        let scores = score(&trace, &segs, &cfg.scoring).adjusted;
        let top = select_top_b(&scores, budget).unwrap();
        let budgets = implicit_budgets(&top, &segs);
        for seg in &segs {
            let b_k = budgets[seg.index];
            let base: Vec<usize> = top.iter().copied().filter(|&t| seg.range().contains(&t)).collect();
            let r = if b_k == 0 {
                fidelity_ratio(&scores, &[], &base)
            } else {
                fidelity_ratio(&scores, &cover_segment(&scores, seg, b_k, 1).unwrap(), &base)
            };
            worst = worst.max((r - 1.0).abs());
            n += 1;
        }
    }
    check(
        worst <= 1e-12,
        format!("{n} segments, max |R_k(1) - 1| = {worst:e}"),
        format!("max |R_k(1) - 1| = {worst:e}"),
    )
}

fn order_preservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..1000 {
        let trace = random_trace(&mut rng, 200);
        let cfg = random_plan_config(&mut rng, 1);
        let segs = segment_tokens(&trace, &cfg.segmentation);
        let sc = score(&trace, &segs, &cfg.scoring);
        for seg in &segs {
            let argsort = |v: &[f64]| {
                let mut idx: Vec<usize> = seg.range().collect();
                idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
                idx
            };
            if argsort(&sc.raw) != argsort(&sc.adjusted) {
                violations += 1;
            }
        }
    }
    check(
        violations == 0,
        "1000 cases, 0 violations",
        format!("{violations} segments reordered"),
    )
}

// With exact score ties a block cover can reach the token-level mass with
// different members, so the set identity is checked on continuous scores.
fn reduction_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..200 {
        let trace = random_trace_with(&mut rng, 300, false);
        let budget = rng.random_range(1..=trace.compressible_len() + 5);
        let mut cfg = random_plan_config(&mut rng, budget);
        cfg.scoring.alpha = 0.0;
        cfg.scoring.eta = 0.0;
        cfg.search.tau = 1.0;
        let sab = compress_detailed(&trace, &cfg, Exec::Sequential).unwrap().plan.retained;
        let snap = evict_window_topk(&trace, budget).unwrap().retained;
        let chunk = evict_fixed_block(&trace, budget, 1).unwrap().retained;
        if sab != snap || snap != chunk {
            return Err(format!("case {case}: sets differ"));
        }
    }
    Ok("200 traces, SABlock(0,0,1) = snapkv = chunkkv:1".into())
}

fn punctuated_corpus(n: u64, t_len: usize) -> Vec<AttentionTrace> {
    let specs: Vec<SyntheticSpec> = (0..n)
        .map(|seed| SyntheticSpec {
            total_tokens: t_len,
            punctuation_period: 8.0,
            seed: 1000 + seed,
            ..Default::default()
        })
        .collect();
    Exec::Parallel.map(&specs, |s| generate_synthetic(s).unwrap())
}

const TREND_BLOCKS: [usize; 5] = [1, 3, 5, 7, 9];

fn cross_sentence_trend(corpus: &[AttentionTrace]) -> Outcome {
    let seg_cfg = SegmentConfig::default();
    let rates: Vec<f64> = TREND_BLOCKS
        .iter()
        .map(|&g| {
            corpus
                .iter()
                .map(|tr| cross_sentence_rate(&segment_tokens(tr, &seg_cfg), g, tr.compressible_len()))
                .sum::<f64>()
                / corpus.len() as f64
        })
        .collect();
    let increasing = rates.windows(2).all(|w| w[0] < w[1]);
    check(
        rates[0] == 0.0 && increasing,
        format!("mean rate by g {TREND_BLOCKS:?}: {rates:.4?}"),
        format!("not strictly increasing from 0: {rates:.4?}"),
    )
}

fn redundancy_trend(corpus: &[AttentionTrace]) -> Outcome {
    let budget = 96;
    let rates: Vec<f64> = TREND_BLOCKS
        .iter()
        .map(|&g| {
            corpus
                .iter()
                .map(|tr| {
                    let kept = evict_fixed_block(tr, budget, g).unwrap().retained;
                    redundancy_rate(&raw_scores(tr), &kept, budget)
                })
                .sum::<f64>()
                / corpus.len() as f64
        })
        .collect();
    let nondecreasing = rates.windows(2).all(|w| w[0] <= w[1]);
    check(
        rates[0] == 0.0 && nondecreasing,
        format!("mean redundancy by g {TREND_BLOCKS:?} at B={budget}: {rates:.4?}"),
        format!("not nondecreasing from 0: {rates:.4?}"),
    )
}

fn budget_blocksize_correlation() -> Outcome {
    let started = Instant::now();
    let corpus = punctuated_corpus(50, 1000);
    let budgets = [16, 32, 64, 128, 256, 512];
    let report = experiment::sweep(&corpus, &budgets, &[Policy::SaBlock], &PlanConfig::default(), Exec::Parallel)
        .map_err(|e| e.to_string())?;
    let means: Vec<f64> = report.histograms.iter().map(|h| h.histogram.mean).collect();
    let xs: Vec<f64> = budgets.iter().map(|&b| b as f64).collect();
    let rho = spearman(&xs, &means).unwrap_or(f64::NAN);
    let took = within(Duration::from_secs(120), started)?;
    check(
        rho > 0.8,
        format!("mean g by budget {budgets:?}: {means:.3?}, spearman {rho:.3} ({took:.2?})"),
        format!("spearman {rho:.3} <= 0.8; mean g {means:.3?}"),
    )
}

fn needle_retention() -> Outcome {
    let t_len = 2000;
    let budget = 96;
    let cfg = PlanConfig::default();
    let results: Vec<Result<(f64, f64, f64), String>> = Exec::Parallel.map_range(100, |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed as u64);
        let needle = NeedleSpan { start: rng.random_range(1..t_len - 8), len: 8 };
        let trace = generate_synthetic(&SyntheticSpec {
            total_tokens: t_len,
            needle: Some(needle),
            needle_boost: 50.0,
            seed: seed as u64,
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let recall = |p: Policy| -> Result<f64, String> {
            let kept = p.run(&trace, budget, &cfg).map_err(|e| e.to_string())?.retained;
            needle_recall(&kept, needle).map_err(|e| e.to_string())
        };
        Ok((
            recall(Policy::SaBlock)?,
            recall(Policy::ChunkKv { block: 7 })?,
            recall("streaming".parse().unwrap())?,
        ))
    });
    let results: Vec<(f64, f64, f64)> = results.into_iter().collect::<Result<_, _>>()?;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| results.iter().map(f).sum::<f64>() / results.len() as f64;
    let (sab, chunk, stream) = (mean(|r| r.0), mean(|r| r.1), mean(|r| r.2));
    let beaten = results.iter().filter(|r| r.0 < r.1 || r.0 < r.2).count();
    check(
        sab >= 0.99 && beaten == 0,
        format!("mean recall sablock {sab:.4}, chunkkv:7 {chunk:.4}, streaming {stream:.4}; 100 seeds"),
        format!("sablock {sab:.4} (chunkkv:7 {chunk:.4}, streaming {stream:.4}); {beaten} seeds beaten"),
    )
}

fn kv_bytes() -> Outcome {
    let bytes = kv_bytes_estimate(16, 32, 16384, 32, 128, 2).map_err(|e| e.to_string())?;
    let expected: u64 = 2 * 16 * 32 * 16384 * 32 * 128 * 2;
    check(
        bytes == expected && bytes == 128 * (1 << 30),
        format!("{bytes} bytes = 128 GiB"),
        format!("{bytes} != {expected}"),
    )
}

fn scope_statement() -> Outcome {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md"))
        .map_err(|e| format!("README.md unreadable: {e}"))?;
    check(
        readme.contains("## What is not reproduced"),
        "model-based benchmark scores and GPU measurements documented as out of scope",
        "README lacks the out-of-scope statement",
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    let corpus = punctuated_corpus(100, 1000);
    let criteria: Vec<Criterion> = vec![
        ("AC1 exact budget", Box::new(exact_budget)),
        ("AC2 block-search oracle equivalence", Box::new(oracle_equivalence)),
        ("AC3 token-level fidelity floor", Box::new(termination_floor)),
        ("AC4 within-segment order preservation", Box::new(order_preservation)),
        ("AC5 reduction identities", Box::new(reduction_identities)),
        ("AC6 cross-sentence rate trend", Box::new(|| cross_sentence_trend(&corpus))),
        ("AC7 fixed-block redundancy trend", Box::new(|| redundancy_trend(&corpus))),
        ("AC8 budget/block-size correlation", Box::new(budget_blocksize_correlation)),
        ("AC9 needle retention", Box::new(needle_retention)),
        ("AC10 KV byte formula", Box::new(kv_bytes)),
        ("AC11 out-of-scope statement", Box::new(scope_statement)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
