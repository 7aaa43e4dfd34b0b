use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use infodisc::claims::{self, VerifyConfig};
use infodisc::discrepancy::{self, DiscResult, GtMode, GT_CONSTANT};
use infodisc::protocol::{self, BuiltinParams};
use infodisc::sampling::{self, SamplingInstance, SamplingMode, DEFAULT_Z};
use infodisc::simulation::{self, Compression, SimulationParams};
use infodisc::stats;

use crate::inputs;
use crate::report::{self, fmt_f64, fmt_opt, fmt_set, ExperimentConfig, Output, Row};
use crate::Common;

/// Significance for chi-square checks of the output law.
const CHI_SQUARE_SIGNIFICANCE: f64 = 0.001;

#[derive(Args, Debug)]
pub struct InfoArgs {
    /// Protocol file, or `builtin:NAME` (single_leaf, send_x, send_xy, noisy_send_x, coin_flip, bisection_gt).
    #[arg(long)]
    protocol: String,
    /// `uniform`, `gtmu` or a distribution file.
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// Function for the error rate: gt, ip, xor, random or a table file.
    #[arg(long)]
    function: Option<String>,
    /// Bits per input for named functions, gtmu and bisection_gt.
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, default_value_t = 2)]
    x_size: usize,
    #[arg(long, default_value_t = 2)]
    y_size: usize,
    /// Flip probability of noisy_send_x.
    #[arg(long, default_value_t = 0.1)]
    flip: f64,
    /// Output bit of single_leaf.
    #[arg(long, default_value_t = 0)]
    output: u8,
    /// Seed for `--function random`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn builtin_params(x_size: usize, y_size: usize, n: Option<u32>, flip: f64, output: u8) -> BuiltinParams {
    BuiltinParams {
        x_size,
        y_size,
        n: n.unwrap_or(1),
        flip,
        output,
    }
}

pub fn info(a: &InfoArgs) -> Result<Output> {
    let p = inputs::protocol(&a.protocol, &builtin_params(a.x_size, a.y_size, a.n, a.flip, a.output))?;
    let mu = inputs::distribution(&a.dist, a.n, p.x_size(), p.y_size())?;
    let ic = protocol::information_cost(&p, &mu)?;
    let cc = protocol::communication_cost(&p);
    let error = match &a.function {
        Some(spec) => Some(protocol::error_rate(&p, &mu, &inputs::function(spec, a.n, a.seed)?)?),
        None => None,
    };
    let z_mass = simulation::markov_event_z_mass(&p, &mu, ic.via_divergence)?;
    let report = json!({
        "x_size": p.x_size(),
        "y_size": p.y_size(),
        "branches": p.branches().len(),
        "transcripts": p.transcript_count(),
        "ic_via_mi": ic.via_mi,
        "ic_via_divergence": ic.via_divergence,
        "ic": ic.value(),
        "cc": cc,
        "error_rate": error,
        "z_mass": z_mass,
    });
    let row: Row = vec![
        ("protocol", a.protocol.clone()),
        ("dist", a.dist.clone()),
        ("ic_via_mi", fmt_f64(ic.via_mi)),
        ("ic_via_divergence", fmt_f64(ic.via_divergence)),
        ("cc", cc.to_string()),
        ("error_rate", fmt_opt(error)),
        ("z_mass", fmt_f64(z_mass)),
    ];
    Ok(Output {
        config: ExperimentConfig {
            command: "info".into(),
            seed: a.seed,
            inputs: json!({ "protocol": a.protocol, "dist": a.dist, "function": a.function }),
            params: json!({ "n": a.n, "x_size": a.x_size, "y_size": a.y_size, "flip": a.flip, "output": a.output }),
        },
        report,
        rows: vec![row],
        violation: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum DiscModeArg {
    Exact,
    Greedy,
    Naive,
}

#[derive(Args, Debug)]
pub struct DiscArgs {
    /// gt, ip, xor, random or a table file.
    #[arg(long)]
    function: String,
    /// Bits per input for named functions and gtmu.
    #[arg(long)]
    n: Option<u32>,
    /// `uniform`, `gtmu` or a distribution file.
    #[arg(long, default_value = "uniform")]
    dist: String,
    #[arg(long, value_enum, default_value = "exact")]
    mode: DiscModeArg,
    /// Random starting sets in greedy mode.
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    /// Seed for greedy restarts and `--function random`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn disc(a: &DiscArgs) -> Result<Output> {
    let f = inputs::function(&a.function, a.n, a.seed)?;
    let mu = inputs::distribution(&a.dist, a.n, f.nx(), f.ny())?;
    let r: DiscResult = match a.mode {
        DiscModeArg::Exact => discrepancy::discrepancy_exact(&f, &mu)?,
        DiscModeArg::Greedy => discrepancy::discrepancy_greedy(&f, &mu, a.restarts, a.seed)?,
        DiscModeArg::Naive => discrepancy::discrepancy_naive(&f, &mu)?,
    };
    let n = a.n.or_else(|| inputs::bits_of(f.nx()));
    let bound = n.map(|n| GT_CONSTANT / f64::from(n).sqrt());
    let lower = discrepancy::cc_lower_bound(0.25, r.value).ok();
    let report = json!({
        "function": a.function,
        "dist": a.dist,
        "mode": r.method,
        "x_size": f.nx(),
        "y_size": f.ny(),
        "value": r.value,
        "witness_s": r.witness.s,
        "witness_t": r.witness.t,
        "bound_20_over_sqrt_n": bound,
        "cc_lower_bound_eps_quarter": lower,
    });
    let row: Row = vec![
        ("function", a.function.clone()),
        ("n", fmt_opt(n)),
        ("dist", a.dist.clone()),
        ("mode", format!("{:?}", a.mode).to_lowercase()),
        ("value", fmt_f64(r.value)),
        ("bound_20_over_sqrt_n", fmt_opt(bound)),
        ("witness_s", fmt_set(&r.witness.s)),
        ("witness_t", fmt_set(&r.witness.t)),
    ];
    Ok(Output {
        config: ExperimentConfig {
            command: "disc".into(),
            seed: a.seed,
            inputs: json!({ "function": a.function, "dist": a.dist }),
            params: json!({ "n": a.n, "mode": row[3].1, "restarts": a.restarts }),
        },
        report,
        rows: vec![row],
        violation: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum GtModeArg {
    Exact,
    Greedy,
    Sweep,
}

#[derive(Args, Debug)]
pub struct GtTableArgs {
    #[arg(long, default_value_t = 4)]
    max_n: u32,
    #[arg(long, value_enum, default_value = "exact")]
    mode: GtModeArg,
    /// Leading constant of the bound.
    #[arg(long, default_value_t = GT_CONSTANT)]
    constant: f64,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn gt_table(a: &GtTableArgs) -> Result<Output> {
    if a.max_n == 0 {
        bail!("--max-n must be at least 1");
    }
    let mode = match a.mode {
        GtModeArg::Exact => GtMode::Exact,
        GtModeArg::Greedy => GtMode::Greedy,
        GtModeArg::Sweep => GtMode::RectangleSweep,
    };
    let mut rows = Vec::new();
    let mut table = Vec::new();
    let mut violation = false;
    for n in 1..=a.max_n {
        let r = discrepancy::verify_gt_bounds(n, mode, a.constant, a.restarts, a.seed)?;
        violation |= !r.pass;
        rows.push(vec![
            ("n", n.to_string()),
            ("mode", format!("{:?}", a.mode).to_lowercase()),
            ("disc", fmt_f64(r.value)),
            ("bound", fmt_f64(r.bound)),
            ("worst_ratio", fmt_f64(r.worst_ratio)),
            ("pass", r.pass.to_string()),
        ]);
        table.push(r);
    }
    Ok(Output {
        config: ExperimentConfig {
            command: "gt-table".into(),
            seed: a.seed,
            inputs: Value::Null,
            params: json!({
                "max_n": a.max_n,
                "mode": rows[0][1].1,
                "constant": a.constant,
                "restarts": a.restarts,
            }),
        },
        report: json!({ "constant": a.constant, "rows": table }),
        rows,
        violation,
    })
}

#[derive(Args, Debug)]
pub struct SampleVerifyArgs {
    /// Instance file `{u, p_a, q_a, p_b, q_b, i, mode, c?, t?}`.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hash bits of the hashed sampler.
    #[arg(long, default_value_t = 8)]
    d: u32,
    /// Also run the two-bit variant (needs d >= 1).
    #[arg(long)]
    two_bit: bool,
}

fn run_stats(
    inst: &SamplingInstance,
    trials: u64,
    seed: u64,
    label: &str,
    run: impl Fn(&mut sampling::SharedRandomness) -> infodisc::Result<sampling::SampleOutcome> + Sync + Send,
) -> Result<sampling::OutcomeStats> {
    let seed = infodisc::rng::derive_seed(seed, label);
    Ok(sampling::estimate_outcome_stats(inst.universe_size(), trials, seed, run)?)
}

pub fn sample_verify(a: &SampleVerifyArgs) -> Result<Output> {
    let text = inputs::read(&a.instance)?;
    let inst = SamplingInstance::from_json(&text).context("loading sampling instance")?;
    let check = sampling::validate_instance(&inst)?;
    let exact = sampling::pi1_exact(&inst)?;
    let hash_bound = sampling::hash_disagreement_bound(&inst, a.d);
    let mut violation = false;
    let mut row: Row = vec![
        ("mode", format!("{:?}", inst.mode()).to_lowercase()),
        ("u", inst.universe_size().to_string()),
        ("d", a.d.to_string()),
        ("trials", String::new()),
        ("exact_success", exact.p_success.to_string()),
        ("empirical_success", String::new()),
        ("tv_to_mu", fmt_opt(exact.tv_to_mu)),
        ("disagreement_rate", String::new()),
        ("disagreement_bound", hash_bound.to_string()),
        ("pass", String::new()),
    ];
    let mut report = json!({
        "instance": {
            "mode": inst.mode(),
            "u": inst.universe_size(),
            "i": inst.i(),
            "c": inst.c(),
            "t": inst.t(),
            "t_floored": inst.t_floored(),
            "mu": check.mu,
            "nu_a": check.nu_a,
            "nu_b": check.nu_b,
            "div_a": check.div_a,
            "div_b": check.div_b,
            "premises_ok": check.premises_ok,
        },
        "exact": {
            "p_nonempty": exact.p_nonempty,
            "p_success": exact.p_success,
            "mu1": exact.mu1,
            "tv_to_mu": exact.tv_to_mu,
            "good": exact.good,
            "expected_b_size": sampling::expected_b_size(&inst),
            "hash_disagreement_bound": hash_bound,
        },
    });
    match inst.mode() {
        SamplingMode::Paper => {
            let b = sampling::check_pi1_bounds(&inst, &exact);
            let ok = b.success_in_range && b.tv_ok && b.per_element_ok;
            if check.premises_ok {
                violation = !ok;
            }
            report["bounds"] = json!({
                "applies": check.premises_ok,
                "upper": b.upper,
                "lower": b.lower,
                "success_in_range": b.success_in_range,
                "tv_ok": b.tv_ok,
                "per_element_ok": b.per_element_ok,
            });
            report["empirical"] = Value::Null;
        }
        SamplingMode::Scaled => {
            if a.trials == 0 {
                bail!("--trials must be at least 1");
            }
            let pi1 = run_stats(&inst, a.trials, a.seed, "pi1", |s| sampling::pi1_simulate(&inst, s))?;
            let pi2 = run_stats(&inst, a.trials, a.seed, "pi2", |s| sampling::pi2_simulate(&inst, a.d, s))?;
            let p = exact.p_success.to_f64();
            let success_ok = pi1.success.within_sigmas(p, DEFAULT_Z);
            let chi = match &exact.mu1 {
                Some(mu1) if pi1.success.successes > 0 => Some(stats::chi_square_test(&pi1.output_counts, mu1.masses())?),
                _ => None,
            };
            let chi_ok = chi.as_ref().is_none_or(|c| c.passes(CHI_SQUARE_SIGNIFICANCE));
            let bound = hash_bound.to_f64();
            let capped = bound.min(1.0);
            let sigma = (capped * (1.0 - capped) / a.trials as f64)
                .sqrt()
                .max(pi2.disagreement.std_error);
            let hash_ok = pi2.disagreement.rate <= bound + DEFAULT_Z * sigma;
            violation = !(success_ok && chi_ok && hash_ok);
            let two_bit = if a.two_bit {
                let s = run_stats(&inst, a.trials, a.seed, "two-bit", |s| {
                    sampling::pi2_two_bit_simulate(&inst, a.d, s)
                })?;
                Some(json!({ "success": s.success, "disagreement": s.disagreement, "bits_sent": s.max_bits_sent }))
            } else {
                None
            };
            report["empirical"] = json!({
                "trials": a.trials,
                "pi1": {
                    "success": pi1.success,
                    "output_counts": pi1.output_counts,
                    "chi_square": chi,
                    "success_within_sigmas": success_ok,
                    "output_law_ok": chi_ok,
                    "bits_sent": pi1.max_bits_sent,
                },
                "pi2": {
                    "d": a.d,
                    "success": pi2.success,
                    "disagreement": pi2.disagreement,
                    "disagreement_within_bound": hash_ok,
                    "bits_sent": pi2.max_bits_sent,
                },
                "two_bit": two_bit,
            });
            row[3].1 = a.trials.to_string();
            row[5].1 = fmt_f64(pi1.success.rate);
            row[7].1 = fmt_f64(pi2.disagreement.rate);
        }
    }
    report["pass"] = json!(!violation);
    row[9].1 = (!violation).to_string();
    Ok(Output {
        config: ExperimentConfig {
            command: "sample-verify".into(),
            seed: a.seed,
            inputs: json!({ "instance": serde_json::from_str::<Value>(&text)? }),
            params: json!({ "trials": a.trials, "d": a.d, "two_bit": a.two_bit }),
        },
        report,
        rows: vec![row],
        violation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SimModeArg {
    Paper,
    Scaled,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Protocol file, or `builtin:NAME`.
    #[arg(long)]
    protocol: String,
    /// `uniform`, `gtmu` or a distribution file.
    #[arg(long, default_value = "uniform")]
    dist: String,
    /// gt, ip, xor, random or a table file.
    #[arg(long)]
    function: String,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long, default_value_t = 2)]
    x_size: usize,
    #[arg(long, default_value_t = 2)]
    y_size: usize,
    #[arg(long, default_value_t = 0.1)]
    flip: f64,
    #[arg(long, value_enum, default_value = "scaled")]
    mode: SimModeArg,
    /// Scaling constant in place of 2^(50(i+1)).
    #[arg(long, default_value_t = 4.0)]
    c: f64,
    /// Tape length; defaults to ceil(64 |U| c).
    #[arg(long)]
    t: Option<u64>,
    /// Information budget; defaults to 20 times the information cost.
    #[arg(long)]
    i_budget: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// none, hash:D or twobit:D.
    #[arg(long, default_value = "none")]
    compress: String,
    /// Majority of k independent runs (odd k).
    #[arg(long)]
    amplify: Option<u32>,
}

pub fn simulate(a: &SimulateArgs) -> Result<Output> {
    let p = inputs::protocol(&a.protocol, &builtin_params(a.x_size, a.y_size, a.n, a.flip, 0))?;
    let tree = p
        .single_tree()
        .context("simulation needs a protocol without public coins (one branch)")?;
    let mu = inputs::distribution(&a.dist, a.n, p.x_size(), p.y_size())?;
    let f = inputs::function(&a.function, a.n, a.seed)?;
    let compress = Compression::parse(&a.compress)?;
    let i_mu = protocol::information_cost(&p, &mu)?.via_divergence;
    let i_budget = a.i_budget.unwrap_or(20.0 * i_mu);
    let params = match a.mode {
        SimModeArg::Paper => SimulationParams {
            i_budget,
            ..SimulationParams::paper(i_mu, matches!(compress, Compression::Hash(_)))
        },
        SimModeArg::Scaled => SimulationParams::scaled(a.c, a.t, i_budget, compress),
    };
    let (r, amplified) = match a.mode {
        SimModeArg::Paper => (simulation::simulate_advantage_exact(tree, &mu, &f, &params)?, None),
        SimModeArg::Scaled => {
            let r = simulation::run_pi_prime(tree, &mu, &f, &params, a.trials, a.seed)?;
            let amp = match a.amplify {
                Some(k) => Some(simulation::amplify_pi_prime(tree, &mu, &f, &params, k, a.trials, a.seed)?),
                None => None,
            };
            (r, amp)
        }
    };
    let violation = r.bound_holds == Some(false);
    let emp = r.empirical.as_ref();
    let row: Row = vec![
        ("mode", format!("{:?}", a.mode).to_lowercase()),
        ("compress", a.compress.clone()),
        ("c", if a.mode == SimModeArg::Scaled { fmt_f64(a.c) } else { String::new() }),
        ("i_budget", fmt_f64(i_budget)),
        ("trials", fmt_opt(emp.map(|e| e.trials))),
        ("exact_ew", fmt_f64(r.exact_ew)),
        ("empirical_ew", fmt_opt(emp.map(|e| e.empirical_ew.rate))),
        ("advantage_log2", fmt_f64(r.advantage_log2)),
        ("bits_sent", r.bits_sent.to_string()),
        ("amplify_k", fmt_opt(amplified.as_ref().map(|m| m.k))),
        ("amplified_success", fmt_opt(amplified.as_ref().map(|m| m.success.rate))),
    ];
    Ok(Output {
        config: ExperimentConfig {
            command: "simulate".into(),
            seed: a.seed,
            inputs: json!({ "protocol": a.protocol, "dist": a.dist, "function": a.function }),
            params: json!({
                "n": a.n,
                "x_size": a.x_size,
                "y_size": a.y_size,
                "flip": a.flip,
                "mode": row[0].1,
                "c": a.c,
                "t": a.t,
                "i_budget": i_budget,
                "trials": a.trials,
                "compress": compress,
                "amplify": a.amplify,
            }),
        },
        report: json!({ "advantage": r, "amplified": amplified }),
        rows: vec![row],
        violation,
    })
}

#[derive(Args, Debug)]
pub struct VerifyAllArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reduced corpora and trial counts.
    #[arg(long)]
    quick: bool,
    /// Leading constant of the GT bound (for negative controls).
    #[arg(long, default_value_t = GT_CONSTANT)]
    gt_constant: f64,
    /// Comma-separated claim ids to run.
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    /// Include wall-clock runtimes (makes output non-reproducible).
    #[arg(long)]
    timings: bool,
}

pub fn verify_all(a: &VerifyAllArgs) -> Result<Output> {
    let mut config = if a.quick {
        VerifyConfig::quick(a.seed)
    } else {
        VerifyConfig::new(a.seed)
    };
    config.gt_constant = a.gt_constant;
    for id in &a.only {
        if !claims::claim_ids().contains(&id.as_str()) {
            bail!("unknown claim `{id}`; known: {}", claims::claim_ids().join(", "));
        }
    }
    let mut reports: Vec<claims::ClaimReport> = claims::CLAIMS
        .iter()
        .filter(|c| a.only.is_empty() || a.only.iter().any(|o| o == c.0))
        .map(|c| claims::run_claim(c.0, &config).expect("listed claim"))
        .collect();
    if !a.timings {
        for r in &mut reports {
            r.runtime_s = None;
        }
    }
    for r in &reports {
        eprintln!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.id);
    }
    let violation = reports.iter().any(|r| !r.pass);
    let rows = reports
        .iter()
        .map(|r| {
            vec![
                ("id", r.id.clone()),
                ("criterion", r.criterion.to_string()),
                ("pass", r.pass.to_string()),
                ("runtime_s", fmt_opt(r.runtime_s)),
            ]
        })
        .collect();
    Ok(Output {
        config: ExperimentConfig {
            command: "verify-all".into(),
            seed: a.seed,
            inputs: Value::Null,
            params: json!({
                "scale": config.scale,
                "gt_constant": a.gt_constant,
                "only": a.only,
            }),
        },
        report: json!({ "all_pass": !violation, "claims": reports }),
        rows,
        violation,
    })
}

/// Prints the report and writes the report files.
pub fn emit(common: &Common, out: &Output) -> Result<()> {
    let rendered = out.render(common.format)?;
    print!("{rendered}");
    if let Some(path) = &common.out {
        report::write_atomic(path, rendered.as_bytes())?;
    }
    if !common.no_write {
        let name = &out.config.command;
        report::write_atomic(&common.out_dir.join(format!("{name}.json")), out.json_text().as_bytes())?;
        report::append_csv(&common.out_dir.join(format!("{name}.csv")), out)?;
    }
    Ok(())
}
