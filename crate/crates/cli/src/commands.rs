use std::path::Path;
use std::time::Instant;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thinslip_core::analysis::{
    classify_sweep, compare_limit, regime_identify, rescaled_velocity, verify_apriori, LimitError, NormBundle,
    RegimeVerdict, SweepReport,
};
use thinslip_core::fullorder::boundary_term_energy;
use thinslip_core::reynolds::{solve_limit, LimitSolution};
use thinslip_core::{classify_regime, solve_full, solve_profile, EnergyBalance, FullOrderSolution};

use crate::config::{Mode, Resolved, RunConfig};
use crate::error::CliError;
use crate::output::Output;

/// Runs `mode` and returns the summary printed on stdout.
pub fn execute(mode: Mode, cfg: &RunConfig, output: Option<&Path>) -> Result<Value, CliError> {
    let resolved = cfg.resolve(mode)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    let dir = cfg.output_path(output);
    let mut out = Output::create(&dir)?;
    let run = Run {
        cfg,
        r: &resolved,
        pool: &pool,
    };
    let mut summary = match mode {
        Mode::Limit => run.limit(&mut out)?,
        Mode::Full => run.full(&mut out)?,
        Mode::Sweep => run.sweep(&mut out)?,
        Mode::Verify => run.verify(&mut out)?,
        Mode::Classify => run.classify(&mut out)?,
        Mode::Profile => run.profile(&mut out)?,
        Mode::Compare => run.compare(&mut out)?,
    };
    let echo = serde_json::to_value(cfg).map_err(|e| CliError::Io(e.to_string()))?;
    out.finish(mode.name(), &echo)?;
    if let Value::Object(m) = &mut summary {
        m.insert("output_dir".into(), json!(dir.display().to_string()));
    }
    Ok(summary)
}

struct Run<'a> {
    cfg: &'a RunConfig,
    r: &'a Resolved,
    pool: &'a rayon::ThreadPool,
}

/// Per-solve summary shared by the single-solve and sweep reports.
#[derive(Debug, Serialize)]
struct SolveReport {
    eps: f64,
    outer_iters: usize,
    saddle_residual: f64,
    update_history: Vec<f64>,
    norms: NormBundle,
    energy: EnergyBalance,
}

struct Solved {
    sol: FullOrderSolution,
    report: SolveReport,
    seconds: f64,
}

impl SolveReport {
    fn rows(&self) -> Vec<(f64, String, f64)> {
        let n = &self.norms;
        let e = &self.energy;
        [
            ("velocity_l2", n.velocity),
            ("strain_l2", n.strain),
            ("boundary_ls", n.boundary),
            ("pressure_l2", n.pressure),
            ("vertical_l2", n.vertical),
            ("outer_iters", self.outer_iters as f64),
            ("saddle_residual", self.saddle_residual),
            ("energy_viscous", e.viscous),
            ("energy_boundary", e.boundary),
            ("energy_convection", e.convection),
            ("energy_work", e.work),
            ("energy_mismatch", e.mismatch),
        ]
        .into_iter()
        .map(|(k, v)| (self.eps, k.to_string(), v))
        .collect()
    }
}

impl Run<'_> {
    fn solve_one(&self, eps: f64) -> Result<Solved, CliError> {
        let t = Instant::now();
        let params = self.r.params.with_eps(eps);
        let sol = solve_full(self.r.grid.clone(), &self.r.forcing, &params, &self.r.full)?;
        let report = SolveReport {
            eps,
            outer_iters: sol.outer_iters,
            saddle_residual: sol.saddle_residual,
            update_history: sol.update_history.clone(),
            norms: NormBundle::from_solution(&sol)?,
            energy: boundary_term_energy(&sol)?,
        };
        Ok(Solved {
            sol,
            report,
            seconds: t.elapsed().as_secs_f64(),
        })
    }

    /// Solves every ε of the sweep in config order.
    fn solve_sweep(&self, out: &mut Output) -> Result<Vec<Solved>, CliError> {
        let solved = self.pool.install(|| {
            self.cfg
                .eps_list
                .par_iter()
                .map(|&e| self.solve_one(e))
                .collect::<Result<Vec<_>, _>>()
        })?;
        for s in &solved {
            out.time(format!("full_solve_eps_{}", s.report.eps), s.seconds);
        }
        let rows: Vec<_> = solved.iter().flat_map(|s| s.report.rows()).collect();
        out.metrics("sweep_metrics.csv", &rows)?;
        Ok(solved)
    }

    fn solve_limit(&self, out: &mut Output) -> Result<LimitSolution, CliError> {
        let t = Instant::now();
        let lim = self
            .pool
            .install(|| solve_limit(&self.r.height, &self.r.forcing, &self.r.params, &self.r.limit))?;
        out.time("limit_solve", t.elapsed().as_secs_f64());
        Ok(lim)
    }

    fn limit(&self, out: &mut Output) -> Result<Value, CliError> {
        let lim = self.solve_limit(out)?;
        out.velocity("limit_velocity.csv", &lim.velocity)?;
        out.pressure("limit_pressure.csv", &lim.pressure)?;
        let report = json!({
            "regime": lim.regime,
            "picard_iters": lim.picard_iters,
            "flux_div_residual": lim.flux_div_residual,
            "residual_history": lim.residual_history,
            "update_history": lim.update_history,
        });
        out.json("limit_report.json", &report)?;
        Ok(json!({ "mode": "limit", "picard_iters": lim.picard_iters, "regime": lim.regime }))
    }

    fn full(&self, out: &mut Output) -> Result<Value, CliError> {
        let s = self.pool.install(|| self.solve_one(self.r.params.eps))?;
        out.time("full_solve", s.seconds);
        out.velocity("full_velocity.csv", &s.sol.velocity.to_cell_centered(1.0)?)?;
        out.pressure("full_pressure.csv", &s.sol.pressure)?;
        out.metrics("metrics.csv", &s.report.rows())?;
        out.json("full_report.json", &s.report)?;
        Ok(json!({
            "mode": "full",
            "eps": s.report.eps,
            "outer_iters": s.report.outer_iters,
            "energy_mismatch": s.report.energy.mismatch,
        }))
    }

    fn sweep(&self, out: &mut Output) -> Result<Value, CliError> {
        let solved = self.solve_sweep(out)?;
        let reports: Vec<&SolveReport> = solved.iter().map(|s| &s.report).collect();
        out.json("sweep_report.json", &json!({ "solves": reports }))?;
        Ok(json!({
            "mode": "sweep",
            "outer_iters": reports.iter().map(|r| r.outer_iters).collect::<Vec<_>>(),
        }))
    }

    fn verify(&self, out: &mut Output) -> Result<Value, CliError> {
        let solved = self.solve_sweep(out)?;
        let lim = self.solve_limit(out)?;
        let sols: Vec<FullOrderSolution> = solved.iter().map(|s| s.sol.clone()).collect();
        let mut report: SweepReport = self.pool.install(|| verify_apriori(&sols, &self.r.params))?;
        let mut by_eps: Vec<&FullOrderSolution> = sols.iter().collect();
        by_eps.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        report.limit_errors = by_eps
            .iter()
            .map(|s| compare_limit(s, &lim))
            .collect::<Result<Vec<LimitError>, _>>()?;
        let verdict = self.pool.install(|| classify_sweep(&sols))?;
        report.regime = Some(verdict.clone());
        let rows: Vec<_> = report
            .rows()
            .into_iter()
            .map(|(e, m, v)| (e, m.to_string(), v))
            .collect();
        out.metrics("verify_report.csv", &rows)?;
        let solves: Vec<&SolveReport> = solved.iter().map(|s| &s.report).collect();
        out.json(
            "verify_report.json",
            &json!({
                "passed": report.passed(),
                "report": report,
                "solves": solves,
                "limit": { "picard_iters": lim.picard_iters, "flux_div_residual": lim.flux_div_residual },
            }),
        )?;
        Ok(json!({
            "mode": "verify",
            "passed": report.passed(),
            "checks": report.checks,
            "verdict": verdict.verdict,
        }))
    }

    fn classify(&self, out: &mut Output) -> Result<Value, CliError> {
        let solved = self.solve_sweep(out)?;
        let sols: Vec<FullOrderSolution> = solved.into_iter().map(|s| s.sol).collect();
        let verdict: RegimeVerdict = self.pool.install(|| classify_sweep(&sols))?;
        out.json("classify.json", &verdict)?;
        Ok(json!({ "mode": "classify", "verdict": verdict.verdict, "expected": verdict.expected }))
    }

    fn compare(&self, out: &mut Output) -> Result<Value, CliError> {
        let s = self.pool.install(|| self.solve_one(self.r.params.eps))?;
        out.time("full_solve", s.seconds);
        let lim = self.solve_limit(out)?;
        let error = compare_limit(&s.sol, &lim)?;
        let verdict = regime_identify(&s.sol, &lim)?;
        out.velocity("rescaled_velocity.csv", &rescaled_velocity(&s.sol)?)?;
        out.velocity("limit_velocity.csv", &lim.velocity)?;
        out.metrics("metrics.csv", &s.report.rows())?;
        out.json(
            "compare.json",
            &json!({ "limit_error": error, "verdict": verdict, "solve": s.report }),
        )?;
        Ok(json!({
            "mode": "compare",
            "relative_l2": error.relative_l2,
            "outer_iters": s.report.outer_iters,
            "verdict": verdict.verdict,
        }))
    }

    fn profile(&self, out: &mut Output) -> Result<Value, CliError> {
        let pr = self.cfg.profile.as_ref().expect("checked by resolve");
        let p = &self.r.params;
        let regime = classify_regime(p.s, p.gamma)?;
        let sol = solve_profile(Vector2::new(pr.drive[0], pr.drive[1]), pr.gap, p, regime)?;
        let value = json!({
            "mode": "profile",
            "regime": regime,
            "shear": [sol.shear[0], sol.shear[1]],
            "slip": [sol.slip[0], sol.slip[1]],
            "flux": sol.flux,
            "newton_iters": sol.newton_iters,
            "residual": sol.residual,
        });
        out.json("profile.json", &value)?;
        Ok(value)
    }
}
