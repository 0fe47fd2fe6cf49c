//! One function per subcommand. Each returns the lines printed on stdout.

use std::sync::Arc;

use epp_core::ergodic::{
    corrector_residual, junction_jump, probe_points, solve_pi, solve_u_lambda_direct, solve_u_representation,
    u_lambda_by_formula, value_near, MeasureSolver,
};
use epp_core::grid::{Field, Grid, Junction};
use epp_core::model::{Functional, PhasePoint};
use epp_core::quadrature::RaySign;
use epp_core::schwarz::{contraction_factor, GammaIterationReport, SchwarzConfig};
use epp_core::short_cycle::{decompose, ShortCycleSolver};
use epp_core::svi_mc::{
    dt_refinement, estimate_cycle, estimate_cycle_ratio, estimate_pi, estimate_time_average, sample_trajectory,
    write_trajectory_csv, CycleStart, Estimate,
};
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::report::{field_plot_script, line_plot_script, num, Output};
use crate::CliError;

/// Agreement band used by every PDE/MC comparison.
pub const MC_SLACK: f64 = 5e-3;

pub fn within_band(a: f64, b: f64, stderr: f64) -> bool {
    (a - b).abs() <= 2.0 * stderr + MC_SLACK
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn grid_meta(g: &Grid) -> Value {
    json!({
        "L": g.half_width(),
        "Ny": g.ny(),
        "Nz": g.nz(),
        "hy": g.hy(),
        "hz": g.hz(),
        "unknowns": g.len(),
        "tol": g.tol(),
    })
}

fn traces(v: &Field) -> Value {
    json!({
        "top_inner": v.junction(Junction::TopInner),
        "top_ray": v.junction(Junction::TopRay),
        "bottom_inner": v.junction(Junction::BottomInner),
        "bottom_ray": v.junction(Junction::BottomRay),
    })
}

pub fn measure(r: &Resolved, out: &mut Output) -> Result<Vec<String>, CliError> {
    let solver = MeasureSolver::new(&r.grid, 0.0)?;
    let mut lines = Vec::new();
    let mut results = Vec::new();
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    for f in &r.functionals {
        let v = solver.short_cycle(f)?;
        let m = solver.measure_from(&v)?;
        let name = format!("v_{}.csv", f.name());
        out.field(&name, &v)?;
        dumps.push(name);
        lines.push(format!("nu({}) = {:.12e}", f.name(), m.nu));
        rows.push(vec![f.name().to_string(), num(m.nu), num(m.top), num(m.bottom), num(m.denominator)]);
        results.push(json!({
            "f": f.name(),
            "nu": m.nu,
            "numerator_traces": {"top": m.top, "bottom": m.bottom},
            "denominator": m.denominator,
            "denominator_mirror": m.denominator_mirror,
            "method": m.method,
        }));
    }
    out.table("measure.csv", &["f", "nu", "v_top", "v_bottom", "v_one_top"], &rows)?;
    let refs: Vec<&str> = dumps.iter().map(String::as_str).collect();
    out.text("plot_measure.py", &field_plot_script(&refs))?;
    out.report(
        "measure",
        &r.effective,
        json!({}),
        json!({"grid": grid_meta(&r.grid), "measures": results}),
    )?;
    Ok(lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CycleMethod {
    Monolithic,
    Decomposed,
    Both,
}

fn gamma_json(label: &str, g: &GammaIterationReport) -> Value {
    json!({
        "component": label,
        "iterations": g.iterations,
        "converged": g.converged,
        "residuals": g.residuals,
        "measured_ratio": g.measured_ratio,
        "certified_rho": g.certified_rho,
        "ybar": g.ybar,
        "ybar1": g.ybar1,
    })
}

pub fn cycle(r: &Resolved, method: CycleMethod, out: &mut Output) -> Result<Vec<String>, CliError> {
    let mono = match method {
        CycleMethod::Decomposed => None,
        _ => Some(ShortCycleSolver::new(&r.grid, 0.0)?),
    };
    let mut lines = Vec::new();
    let mut results = Vec::new();
    let mut plots = Vec::new();
    for f in &r.functionals {
        let name = f.name();
        let mut entry = json!({"f": name});
        let mono_v = match &mono {
            Some(s) => {
                let v = s.solve(f)?;
                out.field(&format!("v_{name}.csv"), &v)?;
                entry["monolithic"] = traces(&v);
                lines.push(format!("v({name}) monolithic: v(0-,Y) = {:.12e}", v.junction(Junction::TopInner)));
                Some(v)
            }
            None => None,
        };
        if method != CycleMethod::Monolithic {
            let d = decompose(f, &r.grid, &r.schwarz)?;
            out.field(&format!("v_decomposed_{name}.csv"), &d.total)?;
            let labels = ["v_e", "v_plus", "v_minus"];
            let mut rows = Vec::new();
            for (label, rep) in labels.iter().zip(&d.reports) {
                for (n, res) in rep.residuals.iter().enumerate() {
                    rows.push(vec![label.to_string(), (n + 1).to_string(), num(*res)]);
                }
            }
            let csv = format!("gamma_{name}.csv");
            out.table(&csv, &["component", "iteration", "residual"], &rows)?;
            plots.push(csv);
            entry["decomposed"] = traces(&d.total);
            entry["gamma"] = Value::Array(labels.iter().zip(&d.reports).map(|(l, g)| gamma_json(l, g)).collect());
            let rho = d.reports[0].certified_rho;
            entry["rho"] = json!(rho);
            let worst = d.reports.iter().map(|g| g.measured_ratio).fold(0.0, f64::max);
            lines.push(format!(
                "v({name}) decomposed: v(0-,Y) = {:.12e}, rho = {rho:.6}, worst measured ratio = {worst:.6}",
                d.total.junction(Junction::TopInner)
            ));
            if let Some(v) = &mono_v {
                let diff = v.max_diff(&d.total)?;
                entry["max_diff"] = json!(diff);
                lines.push(format!("v({name}) |monolithic - decomposed| = {diff:.3e}"));
            }
        }
        results.push(entry);
    }
    if !plots.is_empty() {
        let mut script = String::from("import pandas as pd\nimport matplotlib.pyplot as plt\n\n");
        for csv in &plots {
            script.push_str(&format!(
                "df = pd.read_csv({csv:?})\nfig, ax = plt.subplots()\n\
                 for comp, g in df.groupby(\"component\"):\n    ax.semilogy(g.iteration, g.residual, marker=\"o\", label=comp)\n\
                 ax.set_xlabel(\"sweep\")\nax.set_ylabel(\"trace update\")\nax.legend()\n\
                 fig.savefig({:?}, dpi=150)\n\n",
                csv.replace(".csv", ".png")
            ));
        }
        out.text("plot_cycle.py", &script)?;
    }
    out.report(
        "cycle",
        &r.effective,
        json!({"method": format!("{method:?}").to_lowercase()}),
        json!({"grid": grid_meta(&r.grid), "cycles": results}),
    )?;
    Ok(lines)
}

pub fn resolvent(r: &Resolved, out: &mut Output) -> Result<Vec<String>, CliError> {
    let lambdas = &r.effective.lambdas;
    let probes = probe_points(&r.params);
    let mut lines = Vec::new();
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for f in &r.functionals {
        let corrector = solve_u_representation(f, &r.grid)?;
        let name = f.name();
        out.field(&format!("u_{name}.csv"), &corrector.u)?;
        let box_y = 2.0 * r.params.velocity_scale() * std::f64::consts::SQRT_2;
        let residual = corrector_residual(&corrector.u, f, corrector.nu, box_y, 0.8 * r.params.y_bound());
        let jump = junction_jump(&corrector.u);
        lines.push(format!("nu({name}) = {:.12e}; corrector residual {residual:.3e}, junction jump {jump:.3e}", corrector.nu));
        let mut sweep = Vec::new();
        for &lambda in lambdas {
            let direct = solve_u_lambda_direct(f, lambda, &r.grid)?;
            let formula = u_lambda_by_formula(f, lambda, &r.grid)?;
            let diff = direct.u_lambda.max_diff(&formula)?;
            let mut probe_json = Vec::new();
            for &(y, z) in &probes {
                let lu = lambda * value_near(&direct.u_lambda, y, z);
                let err = (lu - corrector.nu).abs();
                rows.push(vec![name.to_string(), num(lambda), num(y), num(z), num(lu), num(err)]);
                probe_json.push(json!({"y": y, "z": z, "lambda_u": lu, "error": err}));
            }
            lines.push(format!(
                "  lambda = {lambda:e}: |direct - formula| = {diff:.3e}, nu_lambda = {:.12e}, bound {}",
                direct.nu_lambda,
                if direct.bound_ok { "ok" } else { "VIOLATED" }
            ));
            sweep.push(json!({
                "lambda": lambda,
                "nu_lambda": direct.nu_lambda,
                "direct_vs_formula": diff,
                "sup_u": direct.u_lambda.sup_norm(),
                "bound_excess": direct.bound_excess,
                "bound_ok": direct.bound_ok,
                "probes": probe_json,
            }));
        }
        results.push(json!({
            "f": name,
            "nu": corrector.nu,
            "corrector": {"residual": residual, "junction_jump": jump, "box": {"y": box_y, "z": 0.8 * r.params.y_bound()}},
            "sweep": sweep,
        }));
    }
    out.table("resolvent.csv", &["f", "lambda", "probe_y", "probe_z", "lambda_u", "error"], &rows)?;
    out.text(
        "plot_resolvent.py",
        "import pandas as pd\nimport matplotlib.pyplot as plt\n\n\
         df = pd.read_csv(\"resolvent.csv\")\nfig, ax = plt.subplots()\n\
         for (f, y, z), g in df.groupby([\"f\", \"probe_y\", \"probe_z\"]):\n\
         \x20   ax.loglog(g[\"lambda\"], g[\"error\"], marker=\"o\", label=f\"{f} ({y:.2f},{z:.2f})\")\n\
         ax.set_xlabel(\"lambda\")\nax.set_ylabel(\"|lambda u - nu|\")\nax.legend(fontsize=7)\n\
         fig.savefig(\"resolvent.png\", dpi=150)\n",
    )?;
    out.report(
        "resolvent",
        &r.effective,
        json!({}),
        json!({"grid": grid_meta(&r.grid), "resolvents": results}),
    )?;
    Ok(lines)
}

/// Largest `|π⁺ + π⁻ - 1|` allowed by `pi`.
pub const PI_SUM_TOL: f64 = 1e-8;

pub fn pi(r: &Resolved, out: &mut Output) -> Result<Vec<String>, CliError> {
    let (pp, pm) = rayon::join(
        || solve_pi(RaySign::Plus, 0.0, &r.grid),
        || solve_pi(RaySign::Minus, 0.0, &r.grid),
    );
    let (pp, pm) = (pp?, pm?);
    let defect = pp
        .values()
        .iter()
        .zip(pm.values())
        .map(|(a, b)| (a + b - 1.0).abs())
        .fold(0.0, f64::max);
    let range = |f: &Field| {
        let v = f.values();
        (v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    };
    let (rp, rm) = (range(&pp), range(&pm));
    let in_unit = |(lo, hi): (f64, f64)| lo >= -PI_SUM_TOL && hi <= 1.0 + PI_SUM_TOL;
    out.field("pi_plus.csv", &pp)?;
    out.field("pi_minus.csv", &pm)?;
    out.text("plot_pi.py", &field_plot_script(&["pi_plus.csv", "pi_minus.csv"]))?;
    let probes: Vec<Value> = probe_points(&r.params)
        .iter()
        .map(|&(y, z)| json!({"y": y, "z": z, "pi_plus": value_near(&pp, y, z), "pi_minus": value_near(&pm, y, z)}))
        .collect();
    let ok = defect <= PI_SUM_TOL && in_unit(rp) && in_unit(rm);
    out.report(
        "pi",
        &r.effective,
        json!({}),
        json!({
            "grid": grid_meta(&r.grid),
            "sum_defect": defect,
            "sum_tol": PI_SUM_TOL,
            "pi_plus_range": [rp.0, rp.1],
            "pi_minus_range": [rm.0, rm.1],
            "pi_plus_traces": traces(&pp),
            "probes": probes,
            "pass": ok,
        }),
    )?;
    if !ok {
        return Err(CliError::Check(format!(
            "pi+ + pi- - 1 reaches {defect:.3e} (ranges [{:.3e}, {:.3e}] and [{:.3e}, {:.3e}])",
            rp.0, rp.1, rm.0, rm.1
        )));
    }
    Ok(vec![
        format!("sup |pi+ + pi- - 1| = {defect:.3e}"),
        format!("pi+ in [{:.6}, {:.6}], pi- in [{:.6}, {:.6}]", rp.0, rp.1, rm.0, rm.1),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Estimator {
    TimeAverage,
    Cycle,
    CycleRatio,
    Pi,
    Trajectory,
}

fn estimate_rows(es: &[Estimate]) -> Vec<Vec<String>> {
    es.iter()
        .map(|e| vec![e.name.clone(), num(e.estimate), num(e.stderr), e.samples.to_string()])
        .collect()
}

pub struct SimulateOptions {
    pub estimator: Estimator,
    pub start: Option<(f64, f64)>,
    pub steps: u64,
    pub every: u64,
}

pub fn simulate(r: &Resolved, opts: &SimulateOptions, out: &mut Output) -> Result<Vec<String>, CliError> {
    let fs = &r.functionals;
    let p = &r.params;
    let header = ["f", "estimate", "stderr", "samples"];
    let mut lines = Vec::new();
    let fmt = |e: &Estimate| format!("{} = {:.6} +/- {:.6}", e.name, e.estimate, e.stderr);
    let (label, results) = match opts.estimator {
        Estimator::TimeAverage => {
            let rep = estimate_time_average(fs, p, &r.sim)?;
            out.table("time_average.csv", &header, &estimate_rows(&rep.estimates))?;
            lines.extend(rep.estimates.iter().map(fmt));
            ("time-average", serde_json::to_value(&rep).expect("serializes"))
        }
        Estimator::Cycle => {
            let start = match opts.start {
                Some((y, z)) => CycleStart::Interior { y, z },
                None => CycleStart::AfterPlasticPlus,
            };
            let rep = estimate_cycle(fs, start, p, &r.sim)?;
            let mut rows = estimate_rows(&rep.integrals);
            rows.extend(estimate_rows(std::slice::from_ref(&rep.duration)));
            out.table("cycle.csv", &header, &rows)?;
            lines.extend(rep.integrals.iter().map(fmt));
            lines.push(fmt(&rep.duration));
            ("cycle", serde_json::to_value(&rep).expect("serializes"))
        }
        Estimator::CycleRatio => {
            let es = estimate_cycle_ratio(fs, p, &r.sim)?;
            out.table("cycle_ratio.csv", &header, &estimate_rows(&es))?;
            lines.extend(es.iter().map(fmt));
            ("cycle-ratio", serde_json::to_value(&es).expect("serializes"))
        }
        Estimator::Pi => {
            let (y, z) = opts.start.unwrap_or((0.0, 0.0));
            let rep = estimate_pi(&PhasePoint::new(p, y, z, epp_core::model::Region::Interior)?, p, &r.sim)?;
            lines.push(format!("pi+({y}, {z}) = {:.6} +/- {:.6}", rep.p_plus, rep.stderr));
            ("pi", serde_json::to_value(&rep).expect("serializes"))
        }
        Estimator::Trajectory => {
            let path = sample_trajectory(p, &r.sim, opts.steps, opts.every)?;
            let mut buf = Vec::new();
            write_trajectory_csv(&mut buf, &path, r.sim.dt).map_err(|e| CliError::Io(e.to_string()))?;
            out.text("trajectory.csv", &String::from_utf8(buf).expect("ascii csv"))?;
            out.text(
                "plot_simulate.py",
                "import pandas as pd\nimport matplotlib.pyplot as plt\n\n\
                 df = pd.read_csv(\"trajectory.csv\")\nfig, axes = plt.subplots(3, 1, sharex=True)\n\
                 for ax, col in zip(axes, [\"y\", \"z\", \"Delta\"]):\n    ax.plot(df.t, df[col], lw=0.6)\n    ax.set_ylabel(col)\n\
                 axes[-1].set_xlabel(\"t\")\nfig.savefig(\"trajectory.png\", dpi=150)\n",
            )?;
            let last = path.last().expect("path starts with the initial state");
            lines.push(format!("{} states written; final Delta = {:.6}", path.len(), last.delta));
            ("trajectory", json!({"states": path.len(), "final_delta": last.delta, "final_x": last.x()}))
        }
    };
    out.report(
        "simulate",
        &r.effective,
        json!({"estimator": label, "start": opts.start.map(|(y, z)| json!([y, z])), "steps": opts.steps, "every": opts.every}),
        results,
    )?;
    Ok(lines)
}

pub fn compare(r: &Resolved, out: &mut Output) -> Result<Vec<String>, CliError> {
    let fs = &r.functionals;
    let solver = MeasureSolver::new(&r.grid, 0.0)?;
    let pde: Vec<f64> = fs.iter().map(|f| solver.measure(f).map(|m| m.nu)).collect::<Result<_, _>>()?;
    let ta = estimate_time_average(fs, &r.params, &r.sim)?;
    let cr = estimate_cycle_ratio(fs, &r.params, &r.sim)?;
    let mut rows = Vec::new();
    let mut results = Vec::new();
    let mut lines = vec![format!(
        "{:<12} {:>12} {:>12} {:>10} {:>12} {:>10} {:>6}",
        "f", "pde", "mc_time", "stderr", "mc_ratio", "stderr", "status"
    )];
    let mut all = true;
    for (k, f) in fs.iter().enumerate() {
        let (t, c) = (&ta.estimates[k], &cr[k]);
        let ok_time = within_band(pde[k], t.estimate, t.stderr);
        let ok_ratio = within_band(pde[k], c.estimate, c.stderr)
            && within_band(t.estimate, c.estimate, t.stderr.hypot(c.stderr));
        let ok = ok_time && ok_ratio;
        all &= ok;
        lines.push(format!(
            "{:<12} {:>12.6} {:>12.6} {:>10.6} {:>12.6} {:>10.6} {:>6}",
            f.name(),
            pde[k],
            t.estimate,
            t.stderr,
            c.estimate,
            c.stderr,
            pass(ok)
        ));
        rows.push(vec![
            f.name().to_string(),
            num(pde[k]),
            num(t.estimate),
            num(t.stderr),
            num(c.estimate),
            num(c.stderr),
            pass(ok).to_string(),
        ]);
        results.push(json!({
            "f": f.name(),
            "pde": pde[k],
            "time_average": t,
            "cycle_ratio": c,
            "time_average_pass": ok_time,
            "cycle_ratio_pass": ok_ratio,
            "pass": ok,
        }));
    }
    // Cycle length: mean duration from (0⁻, Y) against v(0⁻, Y; 1).
    let v1 = solver.v_one().junction(Junction::TopInner);
    let cyc = estimate_cycle(&[Functional::one()], CycleStart::AfterPlasticPlus, &r.params, &r.sim)?;
    let ok_cycle = within_band(v1, cyc.duration.estimate, cyc.duration.stderr);
    lines.push(format!(
        "{:<12} {:>12.6} {:>12.6} {:>10.6} {:>12} {:>10} {:>6}",
        "cycle_len",
        v1,
        cyc.duration.estimate,
        cyc.duration.stderr,
        "-",
        "-",
        pass(ok_cycle)
    ));
    rows.push(vec![
        "cycle_length".into(),
        num(v1),
        num(cyc.duration.estimate),
        num(cyc.duration.stderr),
        String::new(),
        String::new(),
        pass(ok_cycle).to_string(),
    ]);
    out.table(
        "compare.csv",
        &["f", "pde", "mc_time", "mc_time_stderr", "mc_ratio", "mc_ratio_stderr", "status"],
        &rows,
    )?;
    out.report(
        "compare",
        &r.effective,
        json!({"slack": MC_SLACK}),
        json!({
            "grid": grid_meta(&r.grid),
            "rows": results,
            "cycle_length": {"pde": v1, "mc": cyc.duration, "pass": ok_cycle},
            "measures_pass": all,
        }),
    )?;
    Ok(lines)
}

pub fn certify(r: &Resolved, ybars: &[f64], ybar1s: &[f64], out: &mut Output) -> Result<Vec<String>, CliError> {
    let rho = contraction_factor(&r.grid, r.schwarz.ybar, r.schwarz.ybar1)?;
    let mut lines = vec![format!("rho(ybar = {:.6}, ybar1 = {:.6}) = {rho:.9}", r.schwarz.ybar, r.schwarz.ybar1)];
    let mut rows = Vec::new();
    let mut table = Vec::new();
    for &a in ybars {
        for &b in ybar1s {
            let cfg = SchwarzConfig {
                ybar: a,
                ybar1: b,
                ..r.schwarz
            };
            let (value, status) = match cfg.columns(&r.grid).and_then(|_| contraction_factor(&r.grid, a, b)) {
                Ok(v) => (Some(v), "contractive".to_string()),
                Err(epp_core::Error::NotContractive(v)) => (Some(v), "not-contractive".to_string()),
                Err(e) if !e.is_solver_failure() => (None, format!("skipped: {e}")),
                Err(e) => return Err(e.into()),
            };
            rows.push(vec![num(a), num(b), value.map(num).unwrap_or_default(), status.clone()]);
            table.push(json!({"ybar": a, "ybar1": b, "rho": value, "status": status}));
        }
    }
    lines.push(format!("{} (ybar, ybar1) pairs written to certify.csv", rows.len()));
    out.table("certify.csv", &["ybar", "ybar1", "rho", "status"], &rows)?;
    out.text(
        "plot_certify.py",
        "import pandas as pd\nimport matplotlib.pyplot as plt\n\n\
         df = pd.read_csv(\"certify.csv\").dropna(subset=[\"rho\"])\nfig, ax = plt.subplots()\n\
         for ybar, g in df.groupby(\"ybar\"):\n    ax.plot(g.ybar1, g.rho, marker=\"o\", label=f\"ybar={ybar:.3f}\")\n\
         ax.axhline(1.0, color=\"k\", lw=0.5)\nax.set_xlabel(\"ybar1\")\nax.set_ylabel(\"rho\")\nax.legend()\n\
         fig.savefig(\"certify.png\", dpi=150)\n",
    )?;
    out.report(
        "certify",
        &r.effective,
        json!({"ybar": ybars, "ybar1": ybar1s}),
        json!({"grid": grid_meta(&r.grid), "rho": rho, "sweep": table}),
    )?;
    Ok(lines)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepKind {
    /// Coarsened, base and refined (hy, hz).
    Grid,
    /// L and 2L at fixed hy.
    Domain,
    /// ν_λ(f) along the configured lambdas.
    Lambda,
    /// Time averages at dt and dt/2 on shared noise.
    Dt,
}

fn nus(grid: &Arc<Grid>, fs: &[Functional]) -> Result<Vec<f64>, CliError> {
    let s = MeasureSolver::new(grid, 0.0)?;
    Ok(fs.iter().map(|f| s.measure(f).map(|m| m.nu)).collect::<Result<_, _>>()?)
}

pub fn sweep(r: &Resolved, kind: SweepKind, out: &mut Output) -> Result<Vec<String>, CliError> {
    let fs = &r.functionals;
    let g = &r.grid;
    let mut lines = Vec::new();
    let mut rows = Vec::new();
    let results = match kind {
        SweepKind::Grid | SweepKind::Domain => {
            let (l, ny, nz) = (g.half_width(), g.ny(), g.nz());
            let grids = if kind == SweepKind::Grid {
                let mut v = Vec::new();
                if (ny + 1) / 2 >= 3 && (ny + 1) / 2 % 2 == 1 && (nz + 1) / 2 >= 3 {
                    v.push(r.grid_with(l, (ny + 1) / 2, (nz + 1) / 2)?);
                }
                v.push(g.clone());
                v.push(r.grid_with(l, 2 * ny - 1, 2 * nz - 1)?);
                v
            } else {
                vec![g.clone(), r.grid_with(2.0 * l, 2 * ny - 1, nz)?]
            };
            let mut levels = Vec::new();
            let mut prev: Option<Vec<f64>> = None;
            for gr in &grids {
                let vals = nus(gr, fs)?;
                for (k, (f, v)) in fs.iter().zip(&vals).enumerate() {
                    let change = prev.as_ref().map(|p| (v - p[k]).abs());
                    rows.push(vec![
                        f.name().to_string(),
                        num(gr.half_width()),
                        gr.ny().to_string(),
                        gr.nz().to_string(),
                        num(gr.hy()),
                        num(gr.hz()),
                        num(*v),
                        change.map(num).unwrap_or_default(),
                    ]);
                    lines.push(format!(
                        "L = {:.3}, {}x{}: nu({}) = {:.12e}{}",
                        gr.half_width(),
                        gr.ny(),
                        gr.nz(),
                        f.name(),
                        v,
                        change.map(|c| format!(" (change {c:.3e})")).unwrap_or_default()
                    ));
                }
                levels.push(json!({"grid": grid_meta(gr), "nu": vals}));
                prev = Some(vals);
            }
            out.table("sweep.csv", &["f", "L", "Ny", "Nz", "hy", "hz", "nu", "change"], &rows)?;
            out.text("plot_sweep.py", &line_plot_script("sweep.csv", "hy", &["nu"], false, "sweep.png"))?;
            json!({"levels": levels})
        }
        SweepKind::Lambda => {
            let reference = nus(g, fs)?;
            let mut entries = Vec::new();
            for &lambda in &r.effective.lambdas {
                let s = MeasureSolver::new(g, lambda)?;
                for (f, nu) in fs.iter().zip(&reference) {
                    let v = s.measure(f)?.nu;
                    rows.push(vec![f.name().to_string(), num(lambda), num(v), num((v - nu).abs())]);
                    lines.push(format!("lambda = {lambda:e}: nu_lambda({}) = {v:.12e}, |nu_lambda - nu| = {:.3e}", f.name(), (v - nu).abs()));
                    entries.push(json!({"f": f.name(), "lambda": lambda, "nu_lambda": v, "error": (v - nu).abs()}));
                }
            }
            out.table("sweep.csv", &["f", "lambda", "nu_lambda", "error"], &rows)?;
            out.text("plot_sweep.py", &line_plot_script("sweep.csv", "lambda", &["error"], true, "sweep.png"))?;
            json!({"nu": reference, "entries": entries})
        }
        SweepKind::Dt => {
            let (coarse, fine) = dt_refinement(fs, &r.params, &r.sim)?;
            let mut entries = Vec::new();
            for (c, f) in coarse.estimates.iter().zip(&fine.estimates) {
                let d = c.estimate - f.estimate;
                rows.push(vec![c.name.clone(), num(c.estimate), num(c.stderr), num(f.estimate), num(f.stderr), num(d)]);
                lines.push(format!("{}: dt {:.6}, dt/2 {:.6}, difference {d:.3e}", c.name, c.estimate, f.estimate));
                entries.push(json!({"f": c.name, "coarse": c, "fine": f, "difference": d}));
            }
            out.table("sweep.csv", &["f", "dt", "dt_stderr", "dt_half", "dt_half_stderr", "difference"], &rows)?;
            json!({"dt": r.sim.dt, "entries": entries})
        }
    };
    out.report(
        "sweep",
        &r.effective,
        json!({"kind": format!("{kind:?}").to_lowercase()}),
        results,
    )?;
    Ok(lines)
}
