//! Acceptance run: every experiment with its built-in configuration, one
//! PASS/FAIL line per criterion, then a single assertion over all of them.

use std::path::Path;

use cusplab_cli::config::{ExperimentConfig, ExperimentKind};
use cusplab_cli::experiments::{RunRecord, Status};
use cusplab_cli::run_config;

fn run(kind: ExperimentKind, root: &Path) -> RunRecord {
    let cfg = ExperimentConfig::defaults(kind, root.join(kind.name()));
    let text = toml::to_string(&cfg).unwrap();
    run_config(&cfg, &text, &root.join("cache")).expect("built-in configuration is valid").record
}

struct Criterion {
    id: u32,
    title: &'static str,
    kind: ExperimentKind,
    gating: &'static [&'static str],
    informational: &'static [&'static str],
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "unit-square Neumann spectrum at h = 1/64 within 1%, under 60 s", kind: ExperimentKind::SquareSanity, gating: &["square-spectrum", "square-runtime"], informational: &[] },
    Criterion { id: 2, title: "semigroup exponent inequality grid, zero violations, under 5 s", kind: ExperimentKind::InequalitySuite, gating: &["estbasic-grid", "estbasic-runtime"], informational: &[] },
    Criterion { id: 3, title: "manifold Hardy constant at least 3/16", kind: ExperimentKind::ManifoldHardy, gating: &["manifold-hardy-3-16"], informational: &[] },
    Criterion { id: 4, title: "endpoint L² verdicts for n in {0,1,2}, α in {1,2,3}", kind: ExperimentKind::ManifoldBreakdown, gating: &["endpoint-verdicts"], informational: &[] },
    Criterion {
        id: 5,
        title: "α = 1 sup-norm growth against (log U)^λ, α = 2 stabilization, under 10 min",
        kind: ExperimentKind::ManifoldBreakdown,
        gating: &["breakdown-increasing", "breakdown-exponent", "stabilization-alpha-2", "breakdown-runtime"],
        informational: &[],
    },
    Criterion { id: 6, title: "boundary-distance bounds with the repaired constant", kind: ExperimentKind::InequalitySuite, gating: &["lemma-ed-repaired"], informational: &["lemma-ed-verbatim"] },
    Criterion {
        id: 7,
        title: "ball volume: integrators agree to 1e-6, asymptotic ratio within 10% at ε = 0.05",
        kind: ExperimentKind::BallVolume,
        gating: &["ball-cross-check", "ball-asymptotic-alpha-4"],
        informational: &["ball-displayed-formula-alpha-4-eps-0.05"],
    },
    Criterion { id: 8, title: "fit exponent recovery, noiseless and 1% noise", kind: ExperimentKind::InequalitySuite, gating: &["fit-recovery-noiseless", "fit-recovery-noisy"], informational: &[] },
    Criterion {
        id: 9,
        title: "heat kernel positive, decreasing in t, tends to 1/|Ω|",
        kind: ExperimentKind::CuspHeatkernel,
        gating: &["kernel-positive", "kernel-decreasing", "kernel-long-time-limit"],
        informational: &["ultracontractivity-slope"],
    },
    Criterion {
        id: 10,
        title: "deficit curves nonincreasing and convex, β_lb ≈ b1 − b2 log ε with b2 > 0",
        kind: ExperimentKind::InequalitySuite,
        gating: &["square-deficit-shape", "cusp-deficit-shape", "square-beta-log-law"],
        informational: &[],
    },
];

#[test]
fn acceptance() {
    let root = tempfile::tempdir().unwrap();
    let kinds = [
        ExperimentKind::SquareSanity,
        ExperimentKind::InequalitySuite,
        ExperimentKind::ManifoldHardy,
        ExperimentKind::ManifoldBreakdown,
        ExperimentKind::BallVolume,
        ExperimentKind::CuspHeatkernel,
    ];
    let records: Vec<(ExperimentKind, RunRecord)> = kinds.iter().map(|&k| (k, run(k, root.path()))).collect();
    let mut failed = Vec::new();
    for c in CRITERIA {
        let rec = &records.iter().find(|(k, _)| *k == c.kind).expect("experiment ran").1;
        let mut ok = true;
        let mut details = Vec::new();
        for name in c.gating {
            match rec.check(name) {
                Some(ch) => {
                    ok &= ch.status == Status::Pass;
                    details.push(format!("{} {}: {}", ch.status.label(), name, ch.detail));
                }
                None => {
                    ok = false;
                    details.push(format!("MISSING {name}"));
                }
            }
        }
        if let Some(f) = &rec.failure {
            ok = false;
            details.push(format!("stage {} failed: {}", f.stage, f.error));
        }
        for name in c.informational {
            if let Some(ch) = rec.check(name) {
                details.push(format!("INFO {name}: {}", ch.detail));
            }
        }
        println!("criterion {:>2}: {} | {}", c.id, if ok { "PASS" } else { "FAIL" }, c.title);
        for d in details {
            println!("    {d}");
        }
        if !ok {
            failed.push(c.id);
        }
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
