//! Re-validation of a report from the data it embeds.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use lyapcert::lyapunov::{membership_margin, InstabilityWitness};
use lyapcert::models::{matrix_from_value, Family, ModelSpec, SplitMix64};
use lyapcert::numkernel::{c64, Matrix};
use lyapcert::perturb::{random_trials, verify_perturbation};
use lyapcert::resolvent::{resolvent_norm, VERIFY_TOL};
use lyapcert::semigroup::{default_grid, lower_envelope, min_gain};
use lyapcert::space::NormModel;
use lyapcert::REFUTE_TOL;
use serde_json::Value;

use crate::commands::{parse_t_grid, LEFTINV_TOL, WITNESS_SLACK};
use crate::report::{RunReport, Verdict};

/// Relative agreement demanded between recorded and recomputed values.
const AGREE: f64 = 1e-9;
const WITNESS_RESIDUAL_TOL: f64 = 1e-8;

struct Checker {
    failures: Vec<String>,
}

impl Checker {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn agree(&mut self, name: &str, recorded: Option<f64>, recomputed: f64) {
        match recorded {
            Some(r) => {
                let ok = (r - recomputed).abs() <= AGREE * r.abs().max(recomputed.abs()).max(1e-300)
                    || (r - recomputed).abs() <= 1e-14;
                self.check(ok, || format!("{name}: recorded {r}, recomputed {recomputed}"));
            }
            None => self.failures.push(format!("{name}: missing from report")),
        }
    }
}

fn matrix(v: &Value, what: &str) -> Result<Matrix> {
    matrix_from_value(v).with_context(|| format!("embedded {what}"))
}

fn f(v: &Value) -> Option<f64> {
    v.as_f64()
}

/// Checks every claim of a report; returns the list of mismatches.
pub fn check_report(report: &RunReport) -> Result<Vec<String>> {
    let a = matrix(&report.a, "A")?;
    let nm = match &report.w {
        Some(w) => NormModel::new(matrix(w, "W")?).context("embedded W")?,
        None => NormModel::identity(a.nrows()),
    };
    let tol = report.tolerances.membership;
    let mut c = Checker { failures: Vec::new() };
    let d = &report.details;

    if report.verdict == Verdict::Refuted {
        let w = report.witness.as_ref().ok_or_else(|| anyhow!("refuted report without a witness"))?;
        let v = matrix(&w.v, "witness vector")?;
        let witness = InstabilityWitness { lambda: c64(w.lambda[0], w.lambda[1]), v: v.column(0).into_owned() };
        c.check(witness.lambda.re >= -REFUTE_TOL, || format!("witness Re lambda = {} < -{REFUTE_TOL:e}", w.lambda[0]));
        let res = witness.relative_residual(&a);
        c.check(res <= WITNESS_RESIDUAL_TOL, || format!("witness residual {res:e} above {WITNESS_RESIDUAL_TOL:e}"));
        if report.command == "refute" {
            recheck_psd_trials(&mut c, report, &a, &nm)?;
        }
        return Ok(c.failures);
    }

    if report.command == "gen" {
        if !matches!(report.input.family, Family::File { .. }) {
            let rebuilt = report.input.build()?;
            c.check(rebuilt == a, || "embedded A differs from the rebuilt generator".into());
        }
        return Ok(c.failures);
    }

    // Every other report embeds the member it relies on.
    let Some(qv) = &report.q else {
        c.check(report.verdict == Verdict::Inconclusive, || "report without an embedded Q".into());
        return Ok(c.failures);
    };
    let q = matrix(qv, "Q")?;
    let cand = membership_margin(&q, &a, &nm)?;
    let cert = report.certificate.as_ref().ok_or_else(|| anyhow!("report embeds Q without certificate fields"))?;
    c.agree("q_norm", Some(cert.q_norm), cand.q_norm);
    c.agree("theta", Some(cert.theta), cand.theta);
    c.check((cert.margin - cand.margin).abs() <= 1e-9 * (1.0 + cand.margin.abs()), || {
        format!("margin: recorded {}, recomputed {}", cert.margin, cand.margin)
    });
    if report.verdict == Verdict::Inconclusive {
        return Ok(c.failures);
    }
    let slack = if report.command == "q0" { f(&d["tail_bound"]).unwrap_or(0.0) } else { 0.0 };
    c.check(cand.margin <= tol + slack, || format!("margin {:e} above tolerance {:e}", cand.margin, tol + slack));

    match report.command.as_str() {
        "certify" => {
            if let Some(eps) = cert.epsilon {
                c.agree("epsilon", Some(eps), 1.0 / (2.0 * cand.q_norm));
                c.agree("M", cert.overshoot, (cand.q_norm / cand.theta).sqrt());
                c.check(cert.grid_pass == Some(true), || "envelope grid check not passed".into());
            }
        }
        "resolvent" => {
            for key in ["right", "strip"] {
                let scan = &d[key];
                let (re, im) = (f(&scan["argmax"][0]), f(&scan["argmax"][1]));
                let (Some(re), Some(im)) = (re, im) else {
                    c.failures.push(format!("{key}: missing argmax"));
                    continue;
                };
                let norm = resolvent_norm(&a, c64(re, im), &nm)?;
                c.agree(&format!("{key} argmax norm"), f(&scan["argmax_norm"]), norm);
                let bound = f(&scan["argmax_bound"]).unwrap_or(f64::NAN);
                let expected_bound = if key == "right" {
                    2.0 * cand.q_norm
                } else {
                    2.0 * cand.q_norm / (1.0 + 2.0 * cand.q_norm * re)
                };
                c.agree(&format!("{key} bound"), Some(bound), expected_bound);
                if report.verdict == Verdict::Pass {
                    c.check(norm <= bound * (1.0 + VERIFY_TOL), || format!("{key}: norm {norm} exceeds bound {bound}"));
                }
            }
        }
        "perturb" => recheck_perturb(&mut c, report, &a, &nm, &cand)?,
        "leftinv" => recheck_leftinv(&mut c, report, &a, &nm, &cand)?,
        _ => {}
    }
    Ok(c.failures)
}

fn recheck_psd_trials(c: &mut Checker, report: &RunReport, a: &Matrix, nm: &NormModel) -> Result<()> {
    let trials = report.config["psd_trials"].as_u64().unwrap_or(0) as usize;
    let seed = report.config["seed"].as_u64().unwrap_or(0);
    let n = a.nrows();
    let mut rng = SplitMix64::new(seed);
    let mut min_margin = f64::INFINITY;
    for _ in 0..trials {
        let rank = 1 + (rng.next_u64() % n as u64) as usize;
        let scale = 10f64.powf(3.0 * rng.next_symmetric());
        let q = rng.psd_matrix(n, rank) * lyapcert::numkernel::real(scale);
        min_margin = min_margin.min(membership_margin(&q, a, nm)?.margin);
    }
    if trials > 0 {
        c.check(min_margin > 0.0, || format!("a PSD candidate has margin {min_margin:e} <= 0"));
        c.agree("min_margin", f(&report.details["min_margin"]), min_margin);
    }
    Ok(())
}

fn recheck_perturb(
    c: &mut Checker,
    report: &RunReport,
    a: &Matrix,
    nm: &NormModel,
    cand: &lyapcert::lyapunov::LyapunovCandidate,
) -> Result<()> {
    let d = &report.details;
    match d["mode"].as_str() {
        Some("explicit") => {
            let b = matrix(&d["b"], "B")?;
            for check in d["checks"].as_array().into_iter().flatten() {
                let alpha = f(&check["alpha"]).ok_or_else(|| anyhow!("check without alpha"))?;
                match verify_perturbation(a, &b, cand, alpha, nm) {
                    Ok(r) => {
                        c.agree("margin_after", f(&check["margin_after"]), r.margin_after);
                        c.check(check["pass"].as_bool() == Some(r.pass), || format!("pass flag differs at alpha = {alpha}"));
                    }
                    Err(_) => c.check(check.get("rejected").is_some(), || format!("alpha = {alpha} should be rejected")),
                }
            }
        }
        Some("random") => {
            let k = d["trials"].as_u64().unwrap_or(0) as usize;
            let seed = report.config["seed"].as_u64().unwrap_or(0);
            for s in d["summaries"].as_array().into_iter().flatten() {
                let alpha = f(&s["alpha"]).ok_or_else(|| anyhow!("summary without alpha"))?;
                let (summary, _) = random_trials(a, cand, alpha, nm, k, seed)?;
                c.check(s["passed"].as_u64() == Some(summary.passed as u64), || format!("pass count differs at alpha = {alpha}"));
                c.check(s["rescaled_members"].as_u64() == Some(summary.rescaled_members as u64), || {
                    format!("rescaled member count differs at alpha = {alpha}")
                });
                c.agree("worst_margin_after", f(&s["worst_margin_after"]), summary.worst_margin_after);
                if report.verdict == Verdict::Pass {
                    c.check(summary.passed == k, || format!("only {}/{k} trials pass at alpha = {alpha}", summary.passed));
                }
            }
        }
        _ => c.failures.push("perturbation report without a mode".into()),
    }
    Ok(())
}

fn recheck_leftinv(
    c: &mut Checker,
    report: &RunReport,
    a: &Matrix,
    nm: &NormModel,
    cand: &lyapcert::lyapunov::LyapunovCandidate,
) -> Result<()> {
    let d = &report.details;
    let samples: Vec<(f64, f64)> = d["grid"]
        .as_array()
        .into_iter()
        .flatten()
        .filter_map(|p| Some((p[0].as_f64()?, p[1].as_f64()?)))
        .collect();
    if samples.len() < 2 {
        c.failures.push("envelope grid missing".into());
        return Ok(());
    }
    // Refit (c, α) from the recorded samples, and spot-check a few samples.
    let alpha = samples.windows(2).map(|w| -(w[1].1.ln() - w[0].1.ln()) / (w[1].0 - w[0].0)).fold(0.0, f64::max);
    let cc = samples.iter().map(|&(t, m)| m * (alpha * t).exp()).fold(f64::INFINITY, f64::min);
    c.agree("alpha", f(&d["alpha"]), alpha);
    c.agree("c", f(&d["c"]), cc);
    for &(t, m) in [samples[0], samples[samples.len() / 2], samples[samples.len() - 1]].iter() {
        c.agree(&format!("m({t})"), Some(m), min_gain(a, nm, t)?);
    }
    if alpha > 0.0 && report.verdict == Verdict::Pass {
        let lb = cc * cc / (2.0 * alpha);
        c.check(cand.theta >= lb - LEFTINV_TOL, || format!("theta {} < c^2/(2 alpha) = {lb}", cand.theta));
    }
    if let Some(t0) = f(&d["witness"]["t0"]) {
        let rate = 1.0 / (2.0 * cand.theta);
        let m0 = min_gain(a, nm, t0)?;
        c.check(m0 >= (-rate * t0).exp() * (1.0 - WITNESS_SLACK), || format!("witness m({t0}) = {m0} below e^(-t0/(2 theta))"));
    } else {
        c.check(report.verdict != Verdict::Pass, || "passing report without a witness".into());
    }
    for entry in d["study"].as_array().into_iter().flatten() {
        let Some(n) = entry["n"].as_u64() else {
            c.failures.push("study entry without n".into());
            continue;
        };
        let spec = ModelSpec { n: n as usize, ..report.input.clone() };
        let an = spec.build()?;
        let grid = match report.config["t_grid"].as_str() {
            Some(text) => parse_t_grid(text)?,
            None => default_grid(&an)?,
        };
        let fit = lower_envelope(&an, &NormModel::identity(n as usize), &grid)?;
        c.agree(&format!("study c (n = {n})"), f(&entry["c"]), fit.c);
        c.agree(&format!("study alpha (n = {n})"), f(&entry["alpha"]), fit.alpha);
    }
    Ok(())
}

/// The `recheck` subcommand: 0 when every claim holds, 2 on a mismatch.
pub fn run(path: &Path) -> Result<i32> {
    let report = RunReport::read(path)?;
    let failures = check_report(&report)?;
    if failures.is_empty() {
        println!("recheck ok: {} ({})", path.display(), report.command);
        Ok(0)
    } else {
        for f in &failures {
            println!("recheck mismatch: {f}");
        }
        Ok(2)
    }
}
