//! Stage orchestration and artifact output for one scenario.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Perturbation, Scenario, Stage};
use crate::direct::{self, DirectRun, SweepConfig};
use crate::effective::{AveragedKinetics, EffectiveCoefficients};
use crate::kinetics::{find_equilibrium, make_model, Equilibrium, KineticsModel};
use crate::signal::{build_weight, validate_signal, SignalSpec, WeightField};
use crate::slow::{self, SlowParams, SlowRun, SlowState, StepPolicy};
use crate::stability::{self, ScanInputs};
use crate::torus_field::{SpatialField, SpatialGrid, TorusGrid};
use crate::{selftest, Error, Result};

pub const TOOL: &str = "pksh";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// One entry of the run manifest.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: String,
    /// Library module that raised the error, if any.
    pub module: String,
    pub status: String,
    pub message: Option<String>,
    pub seconds: f64,
    pub outputs: BTreeMap<String, String>,
    pub summary: BTreeMap<String, String>,
}

/// Machine-readable record of a run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn failed(&self) -> bool {
        self.stages.iter().any(|s| s.status != "ok")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        std::fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Solver tolerances recorded in every manifest.
pub fn tolerances() -> BTreeMap<String, f64> {
    [
        ("cell_pcg_relative", 1e-11),
        ("cell_solvability", crate::cell::SOLVABILITY_TOL),
        ("signal_mean", crate::signal::MEAN_TOL),
        ("equilibrium_residual", crate::kinetics::EQUILIBRIUM_TOL),
        ("triad_neutral", stability::NEUTRAL_TOL),
        ("oracle_unstable", stability::UNSTABLE_TOL),
        ("positivity_floor", slow::POSITIVITY_FLOOR),
        ("correction_compatibility", crate::correction::COMPATIBILITY_TOL),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

fn module_of(stage: &str) -> &'static str {
    match stage {
        "homogenize" => "effective",
        "equilibrate" => "kinetics",
        "stability" => "stability",
        "simulate-slow" => "slow_solver",
        "simulate-direct" | "validate" => "direct_solver",
        _ => "selftest",
    }
}

/// Where a stage writes and what it reports.
struct Sink<'a> {
    dir: &'a Path,
    outputs: BTreeMap<String, String>,
    summary: BTreeMap<String, String>,
}

impl Sink<'_> {
    fn csv(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        {
            let mut w = BufWriter::new(File::create(&path)?);
            write(&mut w)?;
            w.flush()?;
        }
        self.outputs.insert(name.to_string(), sha256_hex(&std::fs::read(&path)?));
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.insert(key.to_string(), value.to_string());
    }
}

struct Homogenized {
    grid: TorusGrid,
    weight: WeightField,
    coeffs: EffectiveCoefficients,
}

struct Equilibrated {
    model: KineticsModel,
    eq: Equilibrium,
    coeffs: EffectiveCoefficients,
}

/// Lazily computed intermediate results shared by the stages.
pub struct Pipeline<'a> {
    scenario: &'a Scenario,
    seed: u64,
    homogenized: Option<Homogenized>,
    equilibrated: Option<Equilibrated>,
}

impl<'a> Pipeline<'a> {
    pub fn new(scenario: &'a Scenario, seed: u64) -> Self {
        Pipeline {
            scenario,
            seed,
            homogenized: None,
            equilibrated: None,
        }
    }

    fn model(&self) -> Result<KineticsModel> {
        let k = self.scenario.kinetics.as_ref().ok_or_else(|| Error::Config {
            key: "kinetics".into(),
            reason: "missing".into(),
        })?;
        make_model(&k.model, &k.params)
    }

    fn homogenized(&mut self) -> Result<&Homogenized> {
        if self.homogenized.is_none() {
            let s = self.scenario;
            let grid = s.torus.grid()?;
            let weight = build_weight(&s.signal, s.physics.kappa, s.physics.mu, &grid)?;
            let mut coeffs = EffectiveCoefficients::compute(&weight, s.physics.mu)?;
            coeffs.signal_id = s.name.clone();
            self.homogenized = Some(Homogenized { grid, weight, coeffs });
        }
        Ok(self.homogenized.as_ref().expect("set above"))
    }

    fn equilibrated(&mut self) -> Result<&Equilibrated> {
        if self.equilibrated.is_none() {
            let model = self.model()?;
            let guess = self.scenario.kinetics.as_ref().expect("model checked").guess;
            let h = self.homogenized()?;
            let avg = AveragedKinetics::new(&h.weight, model.clone());
            let eq = find_equilibrium(&avg, (guess[0], guess[1]))?;
            let coeffs = h
                .coeffs
                .clone()
                .with_kinetics(&h.weight, model.clone(), Some((eq.p_e, eq.s_e)))?;
            self.equilibrated = Some(Equilibrated { model, eq, coeffs });
        }
        Ok(self.equilibrated.as_ref().expect("set above"))
    }

    /// `c̄` per unit of the scan parameter `c`.
    fn unit_drift(&mut self) -> Result<Vec<f64>> {
        let s = self.scenario;
        let h = self.homogenized()?;
        match &s.signal {
            SignalSpec::TravelingWave { speed, .. } if *speed != 0.0 => {
                Ok(h.coeffs.cbar.iter().map(|c| c / speed).collect())
            }
            SignalSpec::TravelingWave {
                amplitude,
                direction,
                phase,
                harmonics,
                ..
            } => {
                let unit = SignalSpec::TravelingWave {
                    amplitude: *amplitude,
                    direction: direction.clone(),
                    speed: 1.0,
                    phase: *phase,
                    harmonics: harmonics.clone(),
                };
                let w = build_weight(&unit, s.physics.kappa, s.physics.mu, &h.grid)?;
                Ok(EffectiveCoefficients::compute(&w, s.physics.mu)?.cbar)
            }
            _ => Ok(h.coeffs.cbar.clone()),
        }
    }

    fn slow_params(&self) -> SlowParams {
        SlowParams {
            mu: self.scenario.physics.mu,
            chi: self.scenario.physics.chi,
            prey_diffusivity: self.scenario.physics.prey_diffusivity,
        }
    }

    fn perturbed(&self, grid: &SpatialGrid, base: (f64, f64), p: &Perturbation) -> Result<SlowState> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let phase = |x: &[f64]| {
            x.iter()
                .zip(&p.mode)
                .zip(grid.periods())
                .map(|((xi, m), l)| 2.0 * std::f64::consts::PI * *m as f64 * xi / l)
                .sum::<f64>()
        };
        let noise: Vec<f64> = (0..grid.len())
            .map(|_| if p.noise > 0.0 { rng.gen_range(-p.noise..p.noise) } else { 0.0 })
            .collect();
        let pv: Vec<f64> = (0..grid.len())
            .map(|i| base.0 + p.amplitude_p * phase(&grid.coords(i)).cos() + noise[i])
            .collect();
        let sbar = SpatialField::from_fn(grid, |x| base.1 + p.amplitude_s * phase(x).sin());
        SlowState::new(SpatialField::new(grid.clone(), pv)?, sbar)
    }

    fn run_stage(&mut self, stage: Stage, sink: &mut Sink) -> Result<()> {
        match stage {
            Stage::Homogenize => self.homogenize(sink),
            Stage::Equilibrate => self.equilibrate(sink),
            Stage::Stability => self.stability(sink),
            Stage::SimulateSlow => self.simulate_slow(sink),
            Stage::SimulateDirect => self.simulate_direct(sink),
            Stage::Validate => self.validate(sink),
        }
    }

    fn homogenize(&mut self, sink: &mut Sink) -> Result<()> {
        let name = self.scenario.name.clone();
        let signal = self.scenario.signal.clone();
        let h = self.homogenized()?;
        let diag = validate_signal(&signal, &h.grid)?;
        sink.csv("coefficients.csv", |w| h.coeffs.write_csv(&name, w))?;
        sink.csv("signal.csv", |w| {
            writeln!(w, "quantity,value")?;
            writeln!(w, "mean,{}", diag.mean)?;
            writeln!(w, "tail_fraction,{}", diag.tail_fraction)?;
            writeln!(w, "e_min,{}", diag.e_min)?;
            writeln!(w, "e_max,{}", diag.e_max)?;
            writeln!(w, "under_resolved,{}", diag.under_resolved)?;
            writeln!(w, "effective_amplitude,{}", h.weight.effective_amplitude)?;
            Ok(())
        })?;
        sink.note("under_resolved", diag.under_resolved);
        Ok(())
    }

    fn equilibrate(&mut self, sink: &mut Sink) -> Result<()> {
        let name = self.scenario.name.clone();
        let e = self.equilibrated()?;
        let unforced = find_equilibrium(&e.model, (e.eq.p_e, e.eq.s_e)).ok();
        let a = e.coeffs.abar.expect("equilibrium attached");
        sink.csv("equilibrium.csv", |w| {
            writeln!(w, "scenario,quantity,i,j,value")?;
            writeln!(w, "{name},p_e,,,{}", e.eq.p_e)?;
            writeln!(w, "{name},s_e,,,{}", e.eq.s_e)?;
            writeln!(w, "{name},residual,,,{}", e.eq.residual)?;
            writeln!(w, "{name},nondegenerate,,,{}", e.eq.nondegenerate)?;
            if let Some(u) = unforced {
                writeln!(w, "{name},unforced_p_e,,,{}", u.p_e)?;
                writeln!(w, "{name},unforced_s_e,,,{}", u.s_e)?;
            }
            for (i, row) in a.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    writeln!(w, "{name},abar,{},{},{v}", i + 1, j + 1)?;
                }
            }
            writeln!(w, "{name},p_linear,,,{}", e.model.p_linear())?;
            Ok(())
        })?;
        sink.note("p_e", e.eq.p_e);
        sink.note("s_e", e.eq.s_e);
        Ok(())
    }

    fn stability(&mut self, sink: &mut Sink) -> Result<()> {
        let st = self.scenario.stability.clone().expect("checked");
        let cbar1 = self.unit_drift()?;
        let params = self.slow_params();
        let e = self.equilibrated()?;
        let inputs = ScanInputs {
            dbar: e.coeffs.dbar.clone(),
            cbar1,
            mu: params.mu,
            chi: params.chi,
            prey_diffusivity: params.prey_diffusivity,
            p_e: e.eq.p_e,
            abar: e.coeffs.abar.expect("equilibrium attached"),
            directions: st.directions,
            alphas: st.alphas,
            cs: st.c_values,
        };
        let report = stability::scan(&inputs)?;
        sink.csv("stability.csv", |w| report.write_csv(w))?;
        sink.csv("thresholds.csv", |w| report.write_thresholds_csv(w))?;
        sink.csv("longwave.csv", |w| {
            writeln!(w, "direction,alpha_fraction,c_star,diverges")?;
            for l in &report.longwave {
                for (frac, c) in ["1", "1/2", "1/4"].iter().zip(&l.c_star) {
                    let c = c.map(|v| v.to_string()).unwrap_or_default();
                    writeln!(w, "{},{frac},{c},{}", l.direction, l.diverges)?;
                }
            }
            Ok(())
        })?;
        sink.note("oracle_agreement", report.oracle_agreement);
        sink.note(
            "thresholds_found",
            report.thresholds.iter().filter(|t| t.c_star.is_some()).count(),
        );
        Ok(())
    }

    fn simulate_slow(&mut self, sink: &mut Sink) -> Result<()> {
        let cfg = self.scenario.slow.clone().expect("checked");
        let params = self.slow_params();
        let grid = cfg.grid()?;
        let e = self.equilibrated()?;
        let base = (e.eq.p_e, e.eq.s_e);
        let coeffs = e.coeffs.clone();
        let initial = self.perturbed(&grid, base, &cfg.initial)?;
        let traj = slow::run(&SlowRun {
            initial,
            coeffs,
            params,
            policy: StepPolicy {
                dt_max: cfg.dt_max,
                cfl: cfg.cfl,
            },
            end_time: cfg.end_time,
            snapshot_interval: cfg.snapshot_interval,
        })?;
        sink.csv("slow_trajectory.csv", |w| traj.write_csv(w))?;
        sink.note("steps", traj.steps);
        sink.note("final_mass", traj.final_state().mass());
        sink.note("final_min", traj.final_state().min());
        Ok(())
    }

    fn simulate_direct(&mut self, sink: &mut Sink) -> Result<()> {
        let cfg = self.scenario.direct.clone().expect("checked");
        let delta = self.scenario.physics.delta.expect("checked");
        let params = self.slow_params();
        let s = self.scenario;
        let e = self.equilibrated()?;
        let base = (e.eq.p_e, e.eq.s_e);
        let (model, coeffs) = (e.model.clone(), e.coeffs.clone());
        let h = self.homogenized()?;
        let (grid, weight) = (h.grid.clone(), h.weight.clone());
        let slow_grid = SpatialGrid::new(vec![cfg.length], vec![cfg.slow_points])?;
        let initial = self.perturbed(&slow_grid, base, &cfg.initial)?;
        let mut run = DirectRun {
            delta,
            signal: s.signal.clone(),
            torus: grid,
            model,
            chi: s.physics.chi,
            kappa: s.physics.kappa,
            mu: s.physics.mu,
            length: cfg.length,
            points_per_period: cfg.points_per_period,
            initial_p: Vec::new(),
            initial_s: Vec::new(),
            end_time: cfg.end_time,
            cfl: cfg.cfl,
        };
        run.leading_initial(&initial, &weight)?;
        let out = direct::simulate(&run, cfg.snapshots)?;
        let traj = slow::run(&SlowRun {
            initial,
            coeffs,
            params: SlowParams {
                prey_diffusivity: 0.0,
                ..params
            },
            policy: StepPolicy {
                dt_max: cfg.slow_dt,
                cfl: 0.5,
            },
            end_time: cfg.end_time,
            snapshot_interval: cfg.end_time,
        })?;
        let err = direct::compare_leading(&out, traj.final_state(), &weight)?;
        sink.csv("direct_trajectory.csv", |w| out.write_csv(w))?;
        sink.csv("direct_comparison.csv", |w| {
            writeln!(w, "delta,points,steps,max_p,l2_p,max_s,l2_s")?;
            writeln!(
                w,
                "{delta},{},{},{},{},{},{}",
                out.x.len(),
                out.steps,
                err.max_p,
                err.l2_p,
                err.max_s,
                err.l2_s
            )?;
            Ok(())
        })?;
        sink.note("steps", out.steps);
        sink.note("max_p_error", err.max_p);
        Ok(())
    }

    fn validate(&mut self, sink: &mut Sink) -> Result<()> {
        let v = self.scenario.validate.clone().expect("checked");
        let s = self.scenario;
        let e = self.equilibrated()?;
        let base = (e.eq.p_e, e.eq.s_e);
        let model = e.model.clone();
        let grid = self.homogenized()?.grid.clone();
        let slow_grid = SpatialGrid::new(vec![v.length], vec![v.slow_points])?;
        let initial = self.perturbed(&slow_grid, base, &v.initial)?;
        let report = direct::delta_sweep(&SweepConfig {
            signal: s.signal.clone(),
            torus: grid,
            model,
            chi: s.physics.chi,
            kappa: s.physics.kappa,
            mu: s.physics.mu,
            initial,
            deltas: v.deltas.clone(),
            end_time: v.end_time,
            points_per_period: v.points_per_period,
            slow_dt: v.slow_dt,
            cfl: v.cfl,
            with_correction: v.correction,
        })?;
        sink.csv("validation.csv", |w| report.write_csv(w))?;
        let leading = report.leading_orders();
        let corrected = report.corrected_orders();
        sink.csv("validation_orders.csv", |w| {
            writeln!(w, "metric,delta,delta_half,order")?;
            for (i, o) in leading.iter().enumerate() {
                writeln!(w, "leading,{},{},{o}", v.deltas[i], v.deltas[i + 1])?;
            }
            if v.correction {
                for (i, o) in corrected.iter().enumerate() {
                    writeln!(w, "corrected_fluctuation,{},{},{o}", v.deltas[i], v.deltas[i + 1])?;
                }
            }
            Ok(())
        })?;
        let fmt = |o: &[f64]| o.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        sink.note("leading_orders", fmt(&leading));
        if v.correction {
            sink.note("corrected_orders", fmt(&corrected));
        }
        Ok(())
    }
}

fn record(stage: &str, sink: Sink, result: Result<()>, seconds: f64) -> StageRecord {
    let (status, message, module) = match result {
        Ok(()) => ("ok", None, String::new()),
        Err(e) => ("error", Some(e.to_string()), module_of(stage).to_string()),
    };
    StageRecord {
        stage: stage.to_string(),
        module,
        status: status.to_string(),
        message,
        seconds,
        outputs: sink.outputs,
        summary: sink.summary,
    }
}

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: usize,
}

/// Run the requested stages and write artifacts plus `manifest.json`.
/// Stages run in pipeline order; a failing stage does not stop the others.
pub fn run_scenario(scenario: &Scenario, config_text: &str, stages: &[Stage], opts: &RunOptions) -> Result<Manifest> {
    std::fs::create_dir_all(&opts.out)?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let mut p = Pipeline::new(scenario, seed);
    let mut records = Vec::new();
    for &stage in stages {
        let mut sink = Sink {
            dir: &opts.out,
            outputs: BTreeMap::new(),
            summary: BTreeMap::new(),
        };
        let t = Instant::now();
        let r = p.run_stage(stage, &mut sink);
        records.push(record(stage.name(), sink, r, t.elapsed().as_secs_f64()));
    }
    let m = Manifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        scenario: scenario.name.clone(),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seed,
        threads: opts.threads,
        tolerances: tolerances(),
        stages: records,
    };
    m.write(&opts.out)?;
    Ok(m)
}

/// Run the cross-checks and write `selftest.csv` plus `manifest.json`.
pub fn run_selftest(opts: &RunOptions, sizes: selftest::Sizes) -> Result<(Manifest, Vec<selftest::Check>)> {
    std::fs::create_dir_all(&opts.out)?;
    let seed = opts.seed.unwrap_or(0);
    let mut sink = Sink {
        dir: &opts.out,
        outputs: BTreeMap::new(),
        summary: BTreeMap::new(),
    };
    let t = Instant::now();
    let mut checks = Vec::new();
    let r = selftest::run_checks(seed, sizes).and_then(|c| {
        checks = c;
        sink.csv("selftest.csv", |w| selftest::write_csv(&checks, w))?;
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
        sink.note("checks", checks.len());
        sink.note("failed", failed.join(" "));
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Error::param("selftest", format!("failed checks: {}", failed.join(", "))))
        }
    });
    let rec = record("selftest", sink, r, t.elapsed().as_secs_f64());
    let m = Manifest {
        tool: TOOL.into(),
        version: VERSION.into(),
        scenario: "selftest".into(),
        config_sha256: sha256_hex(format!("selftest seed={seed}").as_bytes()),
        seed,
        threads: opts.threads,
        tolerances: tolerances(),
        stages: vec![rec],
    };
    m.write(&opts.out)?;
    Ok((m, checks))
}

#[cfg(test)]
mod tests {
    use super::*;

    const AG: &str = r#"
name = "ag"
stages = ["homogenize", "equilibrate", "stability", "simulate-slow"]
seed = 3

[signal]
family = "traveling-wave"
amplitude = 0.2
direction = [1.0]
speed = 2.0

[torus]
xi_periods = [6.283185307179586]
xi_points = [32]
tau_period = 6.283185307179586
tau_points = 32

[physics]
chi = 2.0
kappa = 1.0
mu = 1.0
prey_diffusivity = 0.0

[kinetics]
model = "arditi-ginzburg"
params = { gamma = 2.0, beta = 1.0, r = 1.5 }
guess = [0.3, 0.3]

[stability]
directions = [[1.0], [-1.0]]
alphas = [0.25, 0.5, 1.0]
c_values = [0.0, 1.0, 10.0]

[slow]
lengths = [12.566370614359172]
points = [16]
end_time = 0.5
snapshot_interval = 0.25
dt_max = 0.01
cfl = 0.5

[slow.initial]
amplitude_p = 0.01
amplitude_s = 0.0
mode = [1]
noise = 0.001
"#;

    fn opts(dir: &Path) -> RunOptions {
        RunOptions {
            out: dir.to_path_buf(),
            seed: None,
            threads: 1,
        }
    }

    #[test]
    fn scenario_runs_and_repeats() {
        let s = Scenario::from_toml(AG).unwrap();
        let stages = s.stages_to_run(&[]).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = run_scenario(&s, AG, &stages, &opts(d1.path())).unwrap();
        let m2 = run_scenario(&s, AG, &stages, &opts(d2.path())).unwrap();
        assert!(!m1.failed(), "{:?}", m1.stages);
        for (a, b) in m1.stages.iter().zip(&m2.stages) {
            assert_eq!(a.outputs, b.outputs);
        }
        let eq = std::fs::read_to_string(d1.path().join("equilibrium.csv")).unwrap();
        assert!(eq.contains("ag,p_e,,,0.25"));
        let th = std::fs::read_to_string(d1.path().join("thresholds.csv")).unwrap();
        assert!(th.lines().count() == 7);
        assert!(d1.path().join("manifest.json").exists());
    }

    #[test]
    fn stage_error_is_reported_with_module() {
        let text = AG.replace("amplitude_p = 0.01", "amplitude_p = 5.0");
        let s = Scenario::from_toml(&text).unwrap();
        let d = tempfile::tempdir().unwrap();
        let m = run_scenario(&s, &text, &[Stage::Homogenize, Stage::SimulateSlow], &opts(d.path())).unwrap();
        assert!(m.failed());
        assert_eq!(m.stages[0].status, "ok");
        assert_eq!(m.stages[1].status, "error");
        assert_eq!(m.stages[1].module, "slow_solver");
    }

    #[test]
    fn seed_changes_noise_only() {
        let s = Scenario::from_toml(AG).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let mut o = opts(d1.path());
        run_scenario(&s, AG, &[Stage::SimulateSlow], &o).unwrap();
        o.out = d2.path().to_path_buf();
        o.seed = Some(4);
        run_scenario(&s, AG, &[Stage::SimulateSlow], &o).unwrap();
        let a = std::fs::read(d1.path().join("slow_trajectory.csv")).unwrap();
        let b = std::fs::read(d2.path().join("slow_trajectory.csv")).unwrap();
        assert_ne!(a, b);
    }
}
