use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use lyapcert::lyapunov::{
    canonical_member, certificate, closedness_probe, construct_q0, membership_margin, refute_stability,
    solve_algebraic, LyapunovCandidate, Q0Options, StabilityOutcome,
};
use lyapcert::models::{load_matrix, matrix_to_value, save_matrix, Family, ModelSpec, SplitMix64};
use lyapcert::numkernel::{self, real};
use lyapcert::perturb::{max_alpha, random_trials, verify_perturbation};
use lyapcert::resolvent::{abscissa_profile, verify_bound_left_strip, verify_bound_right, RightScanOptions, ScanReport};
use lyapcert::semigroup::{
    datko_integral, default_grid, exponential_witness, growth_bound_estimate, linear_grid, log_grid, lower_envelope,
};
use lyapcert::space::{dual_map_norm, op_norm, pairing, NormModel, RieszMap};
use lyapcert::{Error, Matrix, Tolerances};
use serde_json::{json, Value};

use crate::report::{write_atomic, CertificateSummary, NormEcho, RunReport, Timings, Verdict, WitnessEcho, TOOL};
use crate::{Command, RunArgs};

/// Relative gap accepted between quadrature and algebraic Lyapunov solutions.
pub const Q0_GAP_TOL: f64 = 1e-6;
/// Relative gap accepted in the integral identity `∫‖T(t)x‖² = ⟨Qx, x⟩`.
pub const DATKO_GAP_TOL: f64 = 1e-6;
/// Slack on `θ ≥ c²/(2α)`.
pub const LEFTINV_TOL: f64 = 1e-8;
/// Relative slack on the final-proof witness inequality.
pub const WITNESS_SLACK: f64 = 1e-9;

struct Outcome {
    verdict: Verdict,
    message: String,
    config: Value,
    certificate: Option<CertificateSummary>,
    q: Option<Matrix>,
    witness: Option<WitnessEcho>,
    details: Value,
}

impl Outcome {
    fn new(verdict: Verdict, message: impl Into<String>, config: Value) -> Self {
        Self {
            verdict,
            message: message.into(),
            config,
            certificate: None,
            q: None,
            witness: None,
            details: json!({}),
        }
    }
}

/// Returns the refuted outcome when `A` has spectrum in the closed right half-plane.
fn try_refute(a: &Matrix, config: &Value) -> Result<Option<Outcome>> {
    Ok(refute_stability(a)?.map(|w| {
        let mut out = Outcome::new(
            Verdict::Refuted,
            format!("eigenvalue {}{:+}i has nonnegative real part", w.lambda.re, w.lambda.im),
            config.clone(),
        );
        out.witness = Some(WitnessEcho::new(&w, a));
        out
    }))
}

fn member_or_inconclusive(cand: &LyapunovCandidate, tol: f64, config: &Value) -> Option<Outcome> {
    (cand.margin > tol).then(|| {
        let mut out = Outcome::new(
            Verdict::Inconclusive,
            format!("algebraic solution has margin {:e} above tolerance {tol:e}", cand.margin),
            config.clone(),
        );
        out.certificate = Some(CertificateSummary::from_candidate(cand));
        out.q = Some(cand.q.clone());
        out
    })
}

fn base_config(run: &RunArgs, seed: u64) -> Value {
    json!({ "tol": run.tol, "seed": seed, "threads": run.threads, "out_dir": run.out_dir })
}

fn extend(config: &mut Value, extra: Value) {
    if let (Value::Object(c), Value::Object(e)) = (config, extra) {
        c.extend(e);
    }
}

pub fn execute(cmd: Command) -> Result<RunReport> {
    let start = Instant::now();
    let (name, model, run) = match &cmd {
        Command::Certify { model, run, .. } => ("certify", model, run),
        Command::Refute { model, run, .. } => ("refute", model, run),
        Command::Q0 { model, run, .. } => ("q0", model, run),
        Command::Resolvent { model, run, .. } => ("resolvent", model, run),
        Command::Perturb { model, run, .. } => ("perturb", model, run),
        Command::Leftinv { model, run, .. } => ("leftinv", model, run),
        Command::Gen { model, run, .. } => ("gen", model, run),
        Command::Recheck { .. } => unreachable!("recheck has no report"),
    };
    run.validate()?;
    let (spec, a, nm) = model.load()?;
    let mut config = base_config(run, model.seed);
    let ctx = Ctx { a: &a, nm: &nm, run, seed: model.seed };

    let out = match &cmd {
        Command::Certify { grid_points, horizon, datko_samples, .. } => {
            extend(&mut config, json!({ "grid_points": grid_points, "horizon": horizon, "datko_samples": datko_samples }));
            certify(&ctx, config, *grid_points, *horizon, *datko_samples)?
        }
        Command::Refute { psd_trials, .. } => {
            extend(&mut config, json!({ "psd_trials": psd_trials }));
            refute(&ctx, config, *psd_trials)?
        }
        Command::Q0 { riesz_file, tmax, panels, .. } => {
            extend(&mut config, json!({ "riesz_file": riesz_file, "tmax": tmax, "panels": panels }));
            q0(&ctx, config, riesz_file.as_deref(), *tmax, *panels)?
        }
        Command::Resolvent { delta0, omega_max, n_axis, n_interior, n_strip, abscissa_offsets, .. } => {
            extend(
                &mut config,
                json!({
                    "delta0": delta0, "omega_max": omega_max, "n_axis": n_axis, "n_interior": n_interior,
                    "n_strip": n_strip, "abscissa_offsets": abscissa_offsets,
                }),
            );
            let opts = RightScanOptions { omega_max: *omega_max, n_axis: *n_axis, n_interior: *n_interior };
            resolvent(&ctx, config, delta0, opts, *n_strip, abscissa_offsets)?
        }
        Command::Perturb { b_file, random_trials, alpha, .. } => {
            extend(&mut config, json!({ "b_file": b_file, "random_trials": random_trials, "alpha": alpha }));
            perturb(&ctx, config, b_file.as_deref(), *random_trials, alpha)?
        }
        Command::Leftinv { t_grid, study_n, .. } => {
            extend(&mut config, json!({ "t_grid": t_grid, "study_n": study_n }));
            leftinv(&ctx, config, &spec, t_grid.as_deref(), study_n)?
        }
        Command::Gen { out, .. } => {
            let path = out.clone().unwrap_or_else(|| run.out_dir.join("matrix.json"));
            extend(&mut config, json!({ "out": path }));
            gen(&a, config, &path)?
        }
        Command::Recheck { .. } => unreachable!(),
    };

    let report = RunReport {
        tool: TOOL.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        input: spec,
        norm: NormEcho {
            kind: if model.norm_file.is_some() { "weighted" } else { "euclidean" }.into(),
            file: model.norm_file.clone(),
        },
        config: out.config,
        tolerances: Tolerances { membership: run.tol, ..Tolerances::default() },
        verdict: out.verdict,
        message: out.message,
        a: matrix_to_value(&a),
        w: Some(matrix_to_value(nm.weight())),
        certificate: out.certificate,
        q: out.q.as_ref().map(matrix_to_value),
        witness: out.witness,
        details: out.details,
        timings: Timings { total_seconds: start.elapsed().as_secs_f64() },
    };
    let path = report_path(&run.out_dir, name);
    report.write(&path)?;
    println!("{name}: {} ({})", serde_json::to_value(report.verdict)?.as_str().unwrap_or("?"), report.message);
    println!("report: {}", path.display());
    Ok(report)
}

pub fn report_path(out_dir: &Path, command: &str) -> PathBuf {
    out_dir.join(format!("{command}.report.json"))
}

struct Ctx<'a> {
    a: &'a Matrix,
    nm: &'a NormModel,
    run: &'a RunArgs,
    seed: u64,
}

fn certify(ctx: &Ctx, config: Value, grid_points: usize, horizon: f64, datko_samples: usize) -> Result<Outcome> {
    let (a, nm, tol) = (ctx.a, ctx.nm, ctx.run.tol);
    if grid_points < 2 || !(horizon > 0.0) {
        bail!("--grid-points must be at least 2 and --horizon positive");
    }
    if let Some(out) = try_refute(a, &config)? {
        return Ok(out);
    }
    let cand = canonical_member(a, nm)?;
    if let Some(out) = member_or_inconclusive(&cand, tol, &config) {
        return Ok(out);
    }
    let mut cert = CertificateSummary::from_candidate(&cand);
    let epsilon = 1.0 / (2.0 * cand.q_norm);
    let grid = linear_grid(0.0, horizon / epsilon, grid_points);
    let envelope = match certificate(&cand, a, nm, &grid)? {
        StabilityOutcome::Envelope(c) => {
            cert.epsilon = Some(c.epsilon);
            cert.overshoot = Some(c.overshoot);
            cert.grid_pass = Some(c.grid_check.pass);
            cert.grid_worst_ratio = Some(c.grid_check.worst_ratio);
            json!({ "kind": "envelope", "t_max": horizon / epsilon, "points": grid_points, "worst_t": c.grid_check.worst_t })
        }
        StabilityOutcome::DatkoOnly(_) => json!({ "kind": "datko-only" }),
    };

    let mut rng = SplitMix64::new(ctx.seed);
    let mut worst_gap: f64 = 0.0;
    for _ in 0..datko_samples {
        let x = rng.complex_vector(a.nrows());
        let integral = datko_integral(a, nm, &x, 1e-12)?;
        let quad = pairing(&cand.q, &x, &x)?.re;
        worst_gap = worst_gap.max((integral - quad).abs() / quad.abs().max(f64::MIN_POSITIVE));
    }
    let ns: Vec<f64> = (0..=6).map(|k| 10f64.powi(k)).collect();
    let probe = closedness_probe(&cand, a, nm, &ns)?;
    let s = numkernel::spectral_abscissa(a)?;
    let summary = growth_bound_estimate(a, nm, &log_grid(0.01, 50.0 / s.abs(), 200))?;

    let pass = cert.grid_pass.unwrap_or(true);
    let mut out = Outcome::new(
        if pass { Verdict::Certified } else { Verdict::Inconclusive },
        match (cert.epsilon, pass) {
            (Some(e), true) => format!("exponentially stable with epsilon = {e}"),
            (None, true) => "member found; Datko bound gives stability without explicit constants".into(),
            (_, false) => "member found but the envelope grid check failed".into(),
        },
        config,
    );
    out.certificate = Some(cert);
    out.q = Some(cand.q.clone());
    out.details = json!({
        "envelope": envelope,
        "datko": { "samples": datko_samples, "worst_relative_gap": worst_gap, "pass": worst_gap <= DATKO_GAP_TOL },
        "closedness": probe,
        "spectral": { "s": summary.s, "omega0_hat": summary.omega0_hat, "t_max": 50.0 / s.abs() },
    });
    Ok(out)
}

fn refute(ctx: &Ctx, config: Value, psd_trials: usize) -> Result<Outcome> {
    let Some(mut out) = try_refute(ctx.a, &config)? else {
        return Ok(Outcome::new(Verdict::Inconclusive, "no eigenvalue with Re >= -1e-10; use certify", config));
    };
    let n = ctx.a.nrows();
    let mut rng = SplitMix64::new(ctx.seed);
    let mut min_margin = f64::INFINITY;
    for _ in 0..psd_trials {
        let rank = 1 + (rng.next_u64() % n as u64) as usize;
        let scale = 10f64.powf(3.0 * rng.next_symmetric());
        let q = rng.psd_matrix(n, rank) * real(scale);
        min_margin = min_margin.min(membership_margin(&q, ctx.a, ctx.nm)?.margin);
    }
    out.details = json!({ "psd_trials": psd_trials, "min_margin": min_margin, "all_positive": min_margin > 0.0 || psd_trials == 0 });
    Ok(out)
}

fn q0(ctx: &Ctx, config: Value, riesz_file: Option<&Path>, tmax: Option<f64>, panels: Option<usize>) -> Result<Outcome> {
    let (a, nm, tol) = (ctx.a, ctx.nm, ctx.run.tol);
    if let Some(out) = try_refute(a, &config)? {
        return Ok(out);
    }
    let riesz = match riesz_file {
        Some(path) => RieszMap::new(load_matrix(path).context("riesz file")?, nm).context("riesz map")?,
        None => RieszMap::canonical(nm),
    };
    let opts = Q0Options { t_max: tmax, panels, ..Q0Options::default() };
    let r = construct_q0(a, &riesz, nm, opts)?;
    let gap = if riesz_file.is_none() {
        let q_alg = solve_algebraic(a, nm.weight())?;
        Some((&r.candidate.q - &q_alg).norm() / q_alg.norm())
    } else {
        None
    };
    let member = r.candidate.margin <= tol + r.tail_bound;
    let pass = member && gap.is_none_or(|g| g <= Q0_GAP_TOL);
    let mut out = Outcome::new(
        if pass { Verdict::Certified } else { Verdict::Inconclusive },
        format!("Q0 margin {:e} with tail bound {:e}", r.candidate.margin, r.tail_bound),
        config,
    );
    out.certificate = Some(CertificateSummary::from_candidate(&r.candidate));
    out.q = Some(r.candidate.q.clone());
    out.details = json!({
        "t_max": r.t_max,
        "panels": r.panels,
        "tail_bound": r.tail_bound,
        "riesz_theta": riesz.theta,
        "riesz_norm": dual_map_norm(&riesz.p, nm)?,
        "relative_gap_to_algebraic": gap,
    });
    Ok(out)
}

fn write_csv(path: &Path, scan: &ScanReport) -> Result<()> {
    write_atomic(path, |w| scan.write_csv(w))
}

fn scan_summary(scan: &ScanReport, csv: &str) -> Value {
    let idx = scan.grid.iter().position(|z| *z == scan.argmax);
    json!({
        "points": scan.grid.len(),
        "bound": scan.bound,
        "worst_ratio": scan.worst_ratio,
        "argmax": [scan.argmax.re, scan.argmax.im],
        "argmax_norm": idx.map(|i| scan.norms[i]),
        "argmax_bound": idx.map(|i| scan.bounds[i]),
        "pass": scan.pass,
        "max_identity_residual": scan.max_identity_residual,
        "proof_worst_slack": scan.proof_worst_slack,
        "tail_bound": scan.tail_bound,
        "line_worst_ratio": scan.line_worst_ratio,
        "csv": csv,
    })
}

fn resolvent(
    ctx: &Ctx,
    mut config: Value,
    delta0: &str,
    opts: RightScanOptions,
    n_strip: usize,
    offsets: &[f64],
) -> Result<Outcome> {
    let (a, nm, tol) = (ctx.a, ctx.nm, ctx.run.tol);
    if let Some(out) = try_refute(a, &config)? {
        return Ok(out);
    }
    let cand = canonical_member(a, nm)?;
    if let Some(out) = member_or_inconclusive(&cand, tol, &config) {
        return Ok(out);
    }
    let s = numkernel::spectral_abscissa(a)?;
    let delta0 = match delta0 {
        "auto" => 0.5 * s.abs().min(1.0 / (2.0 * cand.q_norm)),
        text => text.parse::<f64>().map_err(|_| anyhow!("--delta0 must be a number or 'auto', got '{text}'"))?,
    };
    extend(&mut config, json!({ "delta0_value": delta0 }));

    let right = verify_bound_right(a, nm, std::slice::from_ref(&cand), opts)?;
    let strip = verify_bound_left_strip(a, nm, &cand, delta0, n_strip)?;
    let out_dir = &ctx.run.out_dir;
    write_csv(&out_dir.join("resolvent_right.csv"), &right)?;
    write_csv(&out_dir.join("resolvent_strip.csv"), &strip)?;

    let profile = if offsets.is_empty() {
        Vec::new()
    } else {
        let omega_max = opts.omega_max.unwrap_or(10.0 * op_norm(a, nm)?);
        let values: Vec<f64> = offsets.iter().map(|o| s + o).collect();
        abscissa_profile(a, nm, &values, omega_max, 64)?
    };

    let pass = right.pass && strip.pass;
    let mut out = Outcome::new(
        if pass { Verdict::Pass } else { Verdict::Fail },
        format!(
            "right scan worst ratio {}, strip worst ratio {} at delta0 = {delta0}",
            right.worst_ratio, strip.worst_ratio
        ),
        config,
    );
    out.certificate = Some(CertificateSummary::from_candidate(&cand));
    out.q = Some(cand.q.clone());
    out.details = json!({
        "s": s,
        "right": scan_summary(&right, "resolvent_right.csv"),
        "strip": scan_summary(&strip, "resolvent_strip.csv"),
        "abscissa_profile": profile.iter().map(|&(x, sup)| json!({ "a": x, "sup": sup })).collect::<Vec<_>>(),
    });
    Ok(out)
}

fn perturb(ctx: &Ctx, config: Value, b_file: Option<&Path>, trials: Option<usize>, alphas: &[f64]) -> Result<Outcome> {
    let (a, nm, tol) = (ctx.a, ctx.nm, ctx.run.tol);
    if let Some(out) = try_refute(a, &config)? {
        return Ok(out);
    }
    let cand = canonical_member(a, nm)?;
    if let Some(out) = member_or_inconclusive(&cand, tol, &config) {
        return Ok(out);
    }
    if let Some(&bad) = alphas.iter().find(|&&x| !(x > 1.0 && x.is_finite())) {
        return Err(Error::AlphaNotAdmissible { alpha: bad }.into());
    }

    let mut out = match (b_file, trials) {
        (Some(path), _) => {
            let b = load_matrix(path).context("perturbation file")?;
            numkernel::ensure_dim(a.nrows(), numkernel::ensure_square(&b)?)?;
            let b_norm = op_norm(&b, nm)?;
            let best = max_alpha(&b, &cand, nm);
            let alphas: Vec<f64> = match (&best, alphas.is_empty()) {
                (_, false) => alphas.to_vec(),
                (Ok((alpha, _)), true) if alpha.is_finite() => vec![alpha * (1.0 - 1e-9)],
                (Ok(_), true) => vec![2.0],
                (Err(_), true) => Vec::new(),
            };
            let max_alpha_value = match &best {
                Ok((alpha, decay)) => json!({ "alpha": alpha, "decay": decay }),
                Err(e) => json!({ "error": e.to_string() }),
            };
            let mut checks = Vec::new();
            let mut failure = best.as_ref().err().filter(|_| alphas.is_empty()).map(|e| e.to_string());
            for &alpha in &alphas {
                match verify_perturbation(a, &b, &cand, alpha, nm) {
                    Ok(r) => checks.push(serde_json::to_value(&r)?),
                    Err(e @ Error::PerturbationTooLarge { .. }) => {
                        checks.push(json!({ "alpha": alpha, "rejected": e.to_string() }));
                        failure.get_or_insert_with(|| e.to_string());
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let all_pass = failure.is_none() && checks.iter().all(|c| c["pass"] == json!(true));
            let mut o = Outcome::new(
                if all_pass { Verdict::Pass } else { Verdict::Fail },
                failure.unwrap_or_else(|| format!("|B| = {b_norm}; {} alpha value(s) checked", checks.len())),
                config,
            );
            o.details = json!({
                "mode": "explicit",
                "b": matrix_to_value(&b),
                "b_norm": b_norm,
                "max_alpha": max_alpha_value,
                "checks": checks,
            });
            o
        }
        (None, Some(k)) => {
            let alphas = if alphas.is_empty() { vec![2.0] } else { alphas.to_vec() };
            let mut summaries = Vec::new();
            for &alpha in &alphas {
                summaries.push(random_trials(a, &cand, alpha, nm, k, ctx.seed)?.0);
            }
            let all_pass = summaries.iter().all(|s| s.passed == k && s.rescaled_members == k);
            let total: usize = summaries.iter().map(|s| s.passed).sum();
            let mut o = Outcome::new(
                if all_pass { Verdict::Pass } else { Verdict::Fail },
                format!("{total}/{} random perturbations at the admissible radius pass", k * alphas.len()),
                config,
            );
            o.details = json!({ "mode": "random", "trials": k, "summaries": summaries });
            o
        }
        (None, None) => bail!("one of --b-file or --random-trials is required"),
    };
    out.certificate = Some(CertificateSummary::from_candidate(&cand));
    out.q = Some(cand.q.clone());
    Ok(out)
}

/// Parses `lo:hi:n` into a log grid.
pub fn parse_t_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let [lo, hi, n] = parts.as_slice() else {
        bail!("--t-grid must look like lo:hi:n, got '{text}'");
    };
    let (lo, hi, n): (f64, f64, usize) = (lo.parse()?, hi.parse()?, n.parse()?);
    if !(lo > 0.0 && hi > lo && hi.is_finite() && n >= 2) {
        bail!("--t-grid needs 0 < lo < hi and n >= 2");
    }
    Ok(log_grid(lo, hi, n))
}

fn leftinv(ctx: &Ctx, config: Value, spec: &ModelSpec, t_grid: Option<&str>, study_n: &[usize]) -> Result<Outcome> {
    let (a, nm, tol) = (ctx.a, ctx.nm, ctx.run.tol);
    if let Some(out) = try_refute(a, &config)? {
        return Ok(out);
    }
    let cand = canonical_member(a, nm)?;
    if let Some(out) = member_or_inconclusive(&cand, tol, &config) {
        return Ok(out);
    }
    let grid = match t_grid {
        Some(text) => parse_t_grid(text)?,
        None => default_grid(a)?,
    };
    let fit = lower_envelope(a, nm, &grid)?;
    let lower = fit.theta_lower_bound();
    let inequality = lower.is_none_or(|lb| cand.theta >= lb - LEFTINV_TOL);
    // P = W, so the rate ‖P‖/(2θ) is 1/(2θ).
    let rate = 1.0 / (2.0 * cand.theta);
    let witness = exponential_witness(&fit, rate, WITNESS_SLACK);

    let mut study = Vec::new();
    if !study_n.is_empty() {
        if matches!(spec.family, Family::File { .. }) {
            bail!("--study-n needs a built-in family");
        }
        for &n in study_n {
            let s = ModelSpec { n, ..spec.clone() };
            let an = s.build()?;
            let nm_n = NormModel::identity(n);
            let g = match t_grid {
                Some(text) => parse_t_grid(text)?,
                None => default_grid(&an)?,
            };
            let f = lower_envelope(&an, &nm_n, &g)?;
            study.push(json!({ "n": n, "c": f.c, "alpha": f.alpha }));
        }
    }
    let study_c: Vec<f64> = study.iter().filter_map(|v| v["c"].as_f64()).collect();

    let pass = inequality && witness.is_some();
    let mut out = Outcome::new(
        if pass { Verdict::Pass } else { Verdict::Fail },
        match lower {
            Some(lb) => format!("theta = {} against c^2/(2 alpha) = {lb}", cand.theta),
            None => format!("alpha = 0; theta = {}", cand.theta),
        },
        config,
    );
    out.certificate = Some(CertificateSummary::from_candidate(&cand));
    out.q = Some(cand.q.clone());
    out.details = json!({
        "c": fit.c,
        "alpha": fit.alpha,
        "theta": cand.theta,
        "theta_lower_bound": lower,
        "inequality": inequality,
        "witness_rate": rate,
        "witness": witness.map(|(t0, m0)| json!({ "t0": t0, "m0": m0, "floor": (-rate * t0).exp() })),
        "grid": fit.grid.iter().map(|&(t, m)| [t, m]).collect::<Vec<_>>(),
        "study": study,
        "study_c_nonincreasing": study_c.windows(2).all(|w| w[1] <= w[0]),
    });
    Ok(out)
}

fn gen(a: &Matrix, config: Value, path: &Path) -> Result<Outcome> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    save_matrix(a, &tmp)?;
    std::fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    let mut out = Outcome::new(Verdict::Pass, format!("{}x{} generator written", a.nrows(), a.ncols()), config);
    out.details = json!({ "path": path });
    Ok(out)
}
