//! Acceptance criteria, one line each. Run with `--nocapture` to see the report.

use std::time::Instant;

use flashcg::config::Precision;
use flashcg::memory::CountingAllocator;
use flashcg::verify::{
    check_aggregation, check_degree_skew, check_equivalence, check_finite_difference, check_io_model, check_memory,
    check_metrics, check_neighbors, check_quantization, check_thermostat, check_wall_clock, CheckResult, Status,
    VerifyOptions,
};
use flashcg::Result;

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

const SEED: u64 = 1;

type Check = fn(&VerifyOptions) -> Result<Vec<CheckResult>>;

struct Criterion {
    name: &'static str,
    precisions: &'static [Precision],
    checks: &'static [Check],
    /// Wall-time budget in seconds, if any.
    budget: Option<f64>,
}

const SINGLE: &[Precision] = &[Precision::Single];

fn criteria() -> Vec<Criterion> {
    vec![
        Criterion {
            name: "oracle equivalence",
            precisions: &[Precision::Single, Precision::Double],
            checks: &[check_equivalence],
            budget: Some(120.0),
        },
        Criterion {
            name: "force correctness",
            precisions: SINGLE,
            checks: &[check_finite_difference],
            budget: Some(60.0),
        },
        Criterion {
            name: "aggregation oracle",
            precisions: SINGLE,
            checks: &[check_aggregation],
            budget: Some(30.0),
        },
        Criterion {
            name: "neighbor-list oracle",
            precisions: SINGLE,
            checks: &[check_neighbors],
            budget: Some(30.0),
        },
        Criterion {
            name: "io model",
            precisions: SINGLE,
            checks: &[check_io_model],
            budget: None,
        },
        Criterion {
            name: "memory footprint",
            precisions: SINGLE,
            checks: &[check_memory],
            budget: None,
        },
        Criterion {
            name: "wall-clock",
            precisions: SINGLE,
            checks: &[check_wall_clock],
            budget: None,
        },
        Criterion {
            name: "quantization",
            precisions: SINGLE,
            checks: &[check_quantization],
            budget: None,
        },
        Criterion {
            name: "thermostat",
            precisions: SINGLE,
            checks: &[check_thermostat],
            budget: Some(120.0),
        },
        Criterion {
            name: "metrics",
            precisions: SINGLE,
            checks: &[check_metrics],
            budget: None,
        },
        Criterion {
            name: "degree-skew robustness",
            precisions: SINGLE,
            checks: &[check_degree_skew],
            budget: None,
        },
    ]
}

#[test]
fn acceptance_criteria() {
    let mut failed = Vec::new();
    let mut report = String::new();
    for c in criteria() {
        let t = Instant::now();
        let mut lines = Vec::new();
        let mut ok = true;
        for &p in c.precisions {
            let opts = VerifyOptions::new(SEED, p);
            for check in c.checks {
                match check(&opts) {
                    Ok(results) => {
                        for r in results {
                            // a skipped check cannot count as evidence here
                            ok &= r.status == Status::Pass;
                            lines.push(format!("    {} {r}", p.label()));
                        }
                    }
                    Err(e) => {
                        ok = false;
                        lines.push(format!("    {} error: {e}", p.label()));
                    }
                }
            }
        }
        let secs = t.elapsed().as_secs_f64();
        let in_budget = c.budget.map_or(true, |b| secs <= b);
        let budget = c.budget.map(|b| format!(" (budget {b:.0} s)")).unwrap_or_default();
        let tag = if ok && in_budget { "PASS" } else { "FAIL" };
        let line = format!("{tag} {:<24} {secs:.1} s{budget}", c.name);
        println!("{line}");
        for l in &lines {
            println!("{l}");
        }
        report.push_str(&line);
        report.push('\n');
        if tag == "FAIL" {
            failed.push(c.name);
        }
    }
    println!("\n{report}");
    assert!(failed.is_empty(), "failed criteria: {}", failed.join(", "));
}
