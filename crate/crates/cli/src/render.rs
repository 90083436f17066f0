//! Human text and JSON views of core results.

use nashfair::bobw::{CeeiCertificate, Lottery, LotteryAudit, Residuals};
use nashfair::fairness::{FairnessReport, Witness};
use nashfair::io::{bundles_to_value, matrix_to_value, rational_to_json};
use nashfair::rational::format_rational;
use nashfair::{Allocation, Bundle, Instance, MnwResult};
use serde_json::{json, Value};

pub fn bundle_text(instance: &Instance, b: Bundle) -> String {
    let ids: Vec<&str> = b.iter().map(|g| instance.good_id(g)).collect();
    format!("{{{}}}", ids.join(", "))
}

pub fn allocation_text(instance: &Instance, bundles: &[Bundle]) -> String {
    bundles
        .iter()
        .enumerate()
        .map(|(i, b)| format!("agent {}: {}", i + 1, bundle_text(instance, *b)))
        .collect::<Vec<_>>()
        .join("; ")
}

fn rational_str(r: &nashfair::Rational) -> Value {
    Value::String(format_rational(r))
}

pub fn mnw_json(instance: &Instance, result: &MnwResult) -> Value {
    json!({
        "nash_welfare": rational_str(&result.nash_welfare),
        "support_size": result.support_size,
        "maximizers": result
            .maximizers
            .iter()
            .map(|a| bundles_to_value(instance, a.bundles()))
            .collect::<Vec<_>>(),
        "nodes": result.stats.nodes,
        "pruned": result.stats.pruned,
    })
}

pub fn witness_json(instance: &Instance, witness: &Witness) -> Value {
    match witness {
        Witness::Pair {
            envious,
            envied,
            removed,
            added,
        } => json!({
            "kind": "pair",
            "envious": envious + 1,
            "envied": envied + 1,
            "removed": removed.map(|g| instance.good_id(g).to_string()),
            "added": added.map(|g| instance.good_id(g).to_string()),
        }),
        Witness::Agent { agent } => json!({ "kind": "agent", "agent": agent + 1 }),
        Witness::Dominator(d) => json!({
            "kind": "dominator",
            "bundles": bundles_to_value(instance, d.allocation.bundles()),
            "utilities": d.utilities.iter().map(rational_str).collect::<Vec<_>>(),
        }),
    }
}

/// Report line with good ids in place of indices.
pub fn report_text(instance: &Instance, report: &FairnessReport) -> String {
    let mut s = format!(
        "{}: {}",
        report.property,
        if report.holds { "holds" } else { "fails" }
    );
    if let Some(a) = &report.alpha {
        s.push_str(&format!(" (alpha {})", format_rational(a)));
    }
    if let Some(v) = report.verdict {
        s.push_str(&format!(" [{:?}]", v));
    }
    match &report.witness {
        Some(Witness::Pair {
            envious,
            envied,
            removed,
            added,
        }) => {
            s.push_str(&format!(
                "; agent {} envies agent {}",
                envious + 1,
                envied + 1
            ));
            if let Some(g) = removed {
                s.push_str(&format!(", removed {}", instance.good_id(*g)));
            }
            if let Some(g) = added {
                s.push_str(&format!(", added {}", instance.good_id(*g)));
            }
        }
        Some(Witness::Agent { agent }) => s.push_str(&format!("; agent {}", agent + 1)),
        Some(Witness::Dominator(d)) => {
            let u: Vec<String> = d.utilities.iter().map(format_rational).collect();
            s.push_str(&format!(
                "; dominated by {} with utilities ({})",
                allocation_text(instance, d.allocation.bundles()),
                u.join(", ")
            ));
        }
        None => {}
    }
    s
}

pub fn report_json(instance: &Instance, report: &FairnessReport) -> Value {
    json!({
        "property": report.property,
        "holds": report.holds,
        "alpha": report.alpha.as_ref().map(rational_str),
        "verdict": report.verdict.map(|v| format!("{:?}", v)),
        "slack": report.slack.as_ref().map(rational_str),
        "witness": report.witness.as_ref().map(|w| witness_json(instance, w)),
    })
}

/// Top-level array of `{weight, bundles}` over type ids.
pub fn lottery_json(instance: &Instance, lottery: &Lottery) -> Value {
    Value::Array(
        lottery
            .entries
            .iter()
            .map(|e| {
                json!({
                    "weight": rational_str(&e.weight),
                    "bundles": bundles_to_value(instance, &e.assignment),
                })
            })
            .collect(),
    )
}

pub fn lottery_text(instance: &Instance, lottery: &Lottery) -> String {
    let mut s = format!("lottery with {} allocations\n", lottery.entries.len());
    for e in &lottery.entries {
        s.push_str(&format!(
            "  {}  {}\n",
            format_rational(&e.weight),
            allocation_text(instance, &e.assignment)
        ));
    }
    s
}

pub fn residuals_json(r: &Residuals) -> Value {
    json!({
        "feasibility": rational_str(&r.feasibility),
        "best_bundle": rational_str(&r.best_bundle),
        "cheapest_bundle": rational_str(&r.cheapest_bundle),
        "clearing": rational_str(&r.clearing),
        "max": r.max_f64(),
    })
}

pub fn certificate_json(c: &CeeiCertificate) -> Value {
    json!({
        "mode": c.mode.name(),
        "exact": c.exact,
        "prices": c.prices.iter().map(rational_to_json).collect::<Vec<_>>(),
        "x": matrix_to_value(&c.x)["x"],
        "residuals": residuals_json(&c.residuals),
    })
}

pub fn audit_json(copy_instance: &Instance, audit: &LotteryAudit) -> Value {
    json!({
        "weights_sum_to_one": audit.weights_sum_to_one,
        "marginals_match": audit.marginals_match,
        "ex_ante_ef": report_json(copy_instance, &audit.ex_ante_ef),
        "ex_ante_po": report_json(copy_instance, &audit.ex_ante_po),
        "support": audit
            .support
            .iter()
            .map(|s| json!({
                "weight": rational_str(&s.weight),
                "bundles": bundles_to_value(copy_instance, s.allocation.bundles()),
                "feasible": s.feasible,
                "prop1": report_json(copy_instance, &s.prop1),
                "ef11": report_json(copy_instance, &s.ef11),
                "po": report_json(copy_instance, &s.po),
            }))
            .collect::<Vec<_>>(),
    })
}

pub fn allocation_json(instance: &Instance, alloc: &Allocation) -> Value {
    bundles_to_value(instance, alloc.bundles())
}
