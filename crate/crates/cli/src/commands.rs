//! Subcommand bodies. Each returns printable text, a JSON report and an exit code.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nashfair::bobw::{
    audit_lottery, bihierarchy_decompose, build_bihierarchy, ce_lottery_with, copies_view, row_cap,
    CeeiMode, CeeiOptions,
};
use nashfair::fairness::{
    check_alpha_ef1, check_constrained_mef1, check_ef, check_ef11, check_ef11_wc, check_ef1wc,
    check_po, check_po_plus, check_prop1, check_prop1_wc, check_sd_ef1, FairnessReport, Universe,
};
use nashfair::fixtures;
use nashfair::fuzz::{run_fuzz, FuzzConfig};
use nashfair::io::{
    load_allocation, load_instance, load_matrix, load_problem, save_allocation, save_problem,
    to_canonical_string,
};
use nashfair::rational::{format_rational, int, rat};
use nashfair::{solve_mnw_capped, Error as CoreError, Instance, Rational, SolveMode};
use num_traits::Signed;
use serde_json::{json, Value};
use thiserror::Error;

use crate::render;
use crate::{CheckArgs, DecomposeArgs, FixturesArgs, FuzzArgs, LotteryArgs, SolveArgs};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Load { path: PathBuf, source: CoreError },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("unknown property `{name}` (expected one of: {})", PROPERTIES.join(", "))]
    UnknownProperty { name: String },
}

pub type CliResult<T> = Result<T, CliError>;

pub struct Outcome {
    pub text: String,
    pub json: Value,
    pub code: u8,
}

const HOLDS: u8 = 0;
const FINDING: u8 = 2;

fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json(path: &Path, v: &Value) -> CliResult<()> {
    write(path, &to_canonical_string(v))
}

fn loaded<T>(path: &Path, r: nashfair::Result<T>) -> CliResult<T> {
    r.map_err(|source| CliError::Load {
        path: path.to_path_buf(),
        source,
    })
}

pub fn solve(args: &SolveArgs) -> CliResult<Outcome> {
    let problem = loaded(&args.instance, load_problem(&read(&args.instance)?))?;
    let mode = if args.all_optima {
        SolveMode::AllOptima
    } else {
        SolveMode::OneOptimum
    };
    let inst = &problem.instance;
    let result = solve_mnw_capped(inst, &problem.constraint, args.complete, mode, args.cap)?;
    let mut text = String::new();
    writeln!(
        text,
        "nash welfare: {}",
        format_rational(&result.nash_welfare)
    )
    .unwrap();
    writeln!(text, "positive agents: {}", result.support_size).unwrap();
    writeln!(text, "maximizers: {}", result.maximizers.len()).unwrap();
    for (k, a) in result.maximizers.iter().enumerate() {
        writeln!(
            text,
            "  #{}: {}",
            k + 1,
            render::allocation_text(inst, a.bundles())
        )
        .unwrap();
    }
    writeln!(
        text,
        "search: {} nodes, {} pruned",
        result.stats.nodes, result.stats.pruned
    )
    .unwrap();
    Ok(Outcome {
        text,
        json: render::mnw_json(inst, &result),
        code: HOLDS,
    })
}

pub const PROPERTIES: [&str; 11] = [
    "ef", "ef1", "ef1wc", "sd-ef1", "po", "po-plus", "mef1", "prop1", "prop1-wc", "ef11", "ef11-wc",
];

pub fn check(args: &CheckArgs) -> CliResult<Outcome> {
    let problem = loaded(&args.instance, load_problem(&read(&args.instance)?))?;
    let (inst, fs) = (&problem.instance, &problem.constraint);
    let alloc = loaded(
        &args.allocation,
        load_allocation(inst, &read(&args.allocation)?),
    )?;
    let alpha = |default: Rational| args.alpha.clone().unwrap_or(default);
    let universe = if args.complete {
        Universe::CompleteFeasible
    } else {
        Universe::AllFeasible
    };
    let report: FairnessReport = match args.property.as_str() {
        "ef" => check_ef(inst, &alloc),
        "ef1" => check_alpha_ef1(inst, &alloc, &alpha(int(1))),
        "ef1wc" => check_ef1wc(inst, fs, &alloc, &alpha(rat(1, 2)))?,
        "sd-ef1" => check_sd_ef1(inst, &alloc),
        "po" => check_po(inst, fs, &alloc, universe, args.cap)?,
        "po-plus" => check_po_plus(inst, &alloc, args.cap)?,
        "mef1" => check_constrained_mef1(inst, fs, &alloc)?,
        "prop1" => check_prop1(inst, &alloc),
        "prop1-wc" => check_prop1_wc(inst, fs, &alloc)?,
        "ef11" => check_ef11(inst, &alloc),
        "ef11-wc" => check_ef11_wc(inst, fs, &alloc)?,
        other => {
            return Err(CliError::UnknownProperty {
                name: other.to_string(),
            })
        }
    };
    let code = if report.holds { HOLDS } else { FINDING };
    Ok(Outcome {
        text: format!("{}\n", render::report_text(inst, &report)),
        json: render::report_json(inst, &report),
        code,
    })
}

pub fn lottery(args: &LotteryArgs) -> CliResult<Outcome> {
    let inst = loaded(&args.instance, load_instance(&read(&args.instance)?))?;
    let options = CeeiOptions {
        tau: args.tau,
        ..CeeiOptions::default()
    };
    let out = ce_lottery_with(&inst, args.mode, &options)?;
    let audit = audit_lottery(
        &inst,
        args.mode,
        &out.certificate.x,
        &out.lottery,
        &args.tau_prime,
        args.cap,
    )?;
    let view = copies_view(&inst, args.mode)?;
    let copy_inst = &view.problem.instance;
    let lottery_json = render::lottery_json(&inst, &out.lottery);
    let certificate_json = render::certificate_json(&out.certificate);
    if let Some(path) = &args.lottery_out {
        write_json(path, &lottery_json)?;
    }
    if let Some(path) = &args.certificate_out {
        write_json(path, &certificate_json)?;
    }
    let holds = audit.holds(args.mode);
    let mut text = String::new();
    let prices: Vec<String> = out.certificate.prices.iter().map(format_rational).collect();
    writeln!(text, "mode: {}", args.mode).unwrap();
    writeln!(text, "prices: ({})", prices.join(", ")).unwrap();
    writeln!(
        text,
        "max residual: {:e}{}",
        out.certificate.residuals.max_f64(),
        if out.certificate.exact {
            " (exact)"
        } else {
            ""
        }
    )
    .unwrap();
    text.push_str(&render::lottery_text(&inst, &out.lottery));
    writeln!(text, "{}", render::report_text(&inst, &audit.ex_ante_ef)).unwrap();
    writeln!(text, "{}", render::report_text(&inst, &audit.ex_ante_po)).unwrap();
    for (k, s) in audit.support.iter().enumerate() {
        let mut line = format!("support #{}: feasible {}", k + 1, s.feasible);
        for r in [&s.prop1, &s.ef11, &s.po] {
            line.push_str("; ");
            line.push_str(&render::report_text(copy_inst, r));
        }
        writeln!(text, "{}", line).unwrap();
    }
    writeln!(text, "guarantees: {}", if holds { "hold" } else { "fail" }).unwrap();
    let json = json!({
        "mode": args.mode.name(),
        "certificate": certificate_json,
        "lottery": lottery_json,
        "audit": render::audit_json(copy_inst, &audit),
        "holds": holds,
    });
    Ok(Outcome {
        text,
        json,
        code: if holds { HOLDS } else { FINDING },
    })
}

pub fn decompose(args: &DecomposeArgs) -> CliResult<Outcome> {
    let inst = loaded(&args.instance, load_instance(&read(&args.instance)?))?;
    let x = loaded(&args.matrix, load_matrix(&inst, &read(&args.matrix)?))?;
    check_matrix(&inst, &x, args.mode)?;
    let hierarchy = build_bihierarchy(&inst, &x, args.mode);
    let lottery = bihierarchy_decompose(&x, &hierarchy)?;
    let lottery_json = render::lottery_json(&inst, &lottery);
    if let Some(path) = &args.lottery_out {
        write_json(path, &lottery_json)?;
    }
    Ok(Outcome {
        text: render::lottery_text(&inst, &lottery),
        json: lottery_json,
        code: HOLDS,
    })
}

/// Unit cells, supplies and the balanced row cap.
fn check_matrix(inst: &Instance, x: &[Vec<Rational>], mode: CeeiMode) -> CliResult<()> {
    let violation = |msg: String| Err(CoreError::ConstraintViolation(msg).into());
    for (i, row) in x.iter().enumerate() {
        if let Some(g) = row.iter().position(|c| c.is_negative() || *c > int(1)) {
            return violation(format!(
                "cell ({}, {}) lies outside [0, 1]",
                i + 1,
                inst.good_id(g)
            ));
        }
        let total = row.iter().fold(int(0), |a, c| a + c);
        if let Some(cap) = row_cap(inst, mode) {
            if total > cap {
                return violation(format!(
                    "agent {} receives {} copies, cap {}",
                    i + 1,
                    format_rational(&total),
                    format_rational(&cap)
                ));
            }
        }
    }
    for (g, &q) in inst.supplies().iter().enumerate() {
        let column = x.iter().fold(int(0), |a, row| a + &row[g]);
        if column > int(q.into()) {
            return violation(format!(
                "good {} is allocated {} times, supply {}",
                inst.good_id(g),
                format_rational(&column),
                q
            ));
        }
    }
    Ok(())
}

pub fn fuzz(args: &FuzzArgs) -> CliResult<Outcome> {
    let config = FuzzConfig {
        seed: args.seed,
        trials: args.trials,
        agents: args.agents,
        goods: args.goods,
        positive: args.positive,
        families: args.families.clone(),
        properties: args.properties.clone(),
        complete: args.complete,
        cap: args.cap,
        shrink: !args.no_shrink,
    };
    let summary = run_fuzz(&config);
    let mut text = String::new();
    let families: Vec<&str> = config.families.iter().map(|f| f.name()).collect();
    let properties: Vec<&str> = config.properties.iter().map(|p| p.name()).collect();
    writeln!(
        text,
        "seed {}, {} trials, families [{}], properties [{}]",
        config.seed,
        config.trials,
        families.join(", "),
        properties.join(", ")
    )
    .unwrap();
    writeln!(
        text,
        "findings: {}, errors: {}",
        summary.findings.len(),
        summary.errors.len()
    )
    .unwrap();
    let mut findings = Vec::new();
    for f in &summary.findings {
        let inst = &f.problem.instance;
        writeln!(
            text,
            "trial {} [{} / {}]: {}",
            f.trial, f.family, f.property, f.violation.message
        )
        .unwrap();
        let mut files = Vec::new();
        if let Some(dir) = &args.out_dir {
            fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.clone(),
                source,
            })?;
            let stem = format!("counterexample-{}-{}", f.trial, f.property);
            let path = dir.join(format!("{}.json", stem));
            write(&path, &save_problem(&f.problem))?;
            files.push(path);
            if let Some(a) = &f.violation.allocation {
                let path = dir.join(format!("{}.alloc.json", stem));
                write(&path, &save_allocation(inst, a))?;
                files.push(path);
            }
        }
        for p in &files {
            writeln!(text, "  wrote {}", p.display()).unwrap();
        }
        findings.push(json!({
            "trial": f.trial,
            "family": f.family.name(),
            "property": f.property.name(),
            "message": f.violation.message,
            "problem": nashfair::io::problem_to_value(&f.problem),
            "allocation": f.violation.allocation.as_ref().map(|a| render::allocation_json(inst, a)),
        }));
    }
    for (t, e) in &summary.errors {
        writeln!(text, "trial {} error: {}", t, e).unwrap();
    }
    let code = if !summary.findings.is_empty() {
        FINDING
    } else if !summary.errors.is_empty() {
        1
    } else {
        HOLDS
    };
    let json = json!({
        "seed": config.seed,
        "trials": config.trials,
        "families": families,
        "properties": properties,
        "findings": findings,
        "errors": summary.errors.iter().map(|(t, e)| json!({ "trial": t, "message": e })).collect::<Vec<_>>(),
    });
    Ok(Outcome { text, json, code })
}

pub fn fixtures(args: &FixturesArgs) -> CliResult<Outcome> {
    let names = match &args.name {
        Some(name) => vec![name.clone()],
        None => fixtures::names(),
    };
    fs::create_dir_all(&args.out_dir).map_err(|source| CliError::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let mut text = String::new();
    let mut written = Vec::new();
    for name in names {
        let f = fixtures::by_name(&name)?;
        let path = args.out_dir.join(format!("{}.json", name));
        write(&path, &save_problem(&f.problem))?;
        written.push(path);
        if let Some(a) = &f.allocation {
            let path = args.out_dir.join(format!("{}.alloc.json", name));
            write(&path, &save_allocation(&f.problem.instance, a))?;
            written.push(path);
        }
    }
    for p in &written {
        writeln!(text, "wrote {}", p.display()).unwrap();
    }
    let json =
        json!({ "written": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>() });
    Ok(Outcome {
        text,
        json,
        code: HOLDS,
    })
}
