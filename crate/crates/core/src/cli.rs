//! Batch front end: TOML configuration, experiment runs and hashed result files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::berry::{berry_ensemble, BerryKernel};
use crate::diagnostics::{diagnose, good_points};
use crate::error::{Error, Result};
use crate::field::{sample_ensemble, write_field_csv, FieldVariant, LocalFieldSample, PhaseMode};
use crate::geometry::{DiskPoint, FrameChart};
use crate::lagrangian::LagrangianState;
use crate::potential::{
    build_net, in_admissible_region, verify_hypotheses, AuditSizes, NetParams, OmegaDistribution, ParameterConditions,
    PotentialCase, RandomPotential,
};
use crate::profile::Profile;
use crate::stats::{
    empirical_covariance, gaussianity, max_kernel_deviation, mean_phase, normalized, write_covariance_csv,
    CovarianceEstimate,
};
use crate::surface::{Surface, INRADIUS};
use crate::wkb::{Excision, JobParams, PropagationJob};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Net,
    Propagate,
    Sample,
    Covariance,
    Gaussianity,
    Meanphase,
    Diagnose,
    Oracle,
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Net => "net",
            Command::Propagate => "propagate",
            Command::Sample => "sample",
            Command::Covariance => "covariance",
            Command::Gaussianity => "gaussianity",
            Command::Meanphase => "meanphase",
            Command::Diagnose => "diagnose",
            Command::Oracle => "oracle",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "semiwave", version, about = "Propagate random Lagrangian states on the Bolza surface and compare with Berry waves")]
pub struct Args {
    /// Subcommand, also accepted as the first positional argument.
    #[arg(long, value_enum)]
    pub subcommand: Option<Command>,
    #[arg(value_enum)]
    pub command: Option<Command>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides `out_dir` in the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateConfig {
    pub boundary_angle: f64,
    pub center: [f64; 2],
    /// Amplitude radius as a fraction of the inradius of the octagon.
    pub radius_fraction: f64,
    pub profile: Profile,
}

impl Default for StateConfig {
    fn default() -> Self {
        StateConfig { boundary_angle: 0.3, center: [0.0, 0.0], radius_fraction: 0.98, profile: Profile::Plateau { flat: 0.8 } }
    }
}

/// Separations `r_k = k max_radius / (n - 1)` at angles `k angle_step`, paired with the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n_separations: usize,
    pub max_radius: f64,
    pub angle_step: f64,
    pub chart_angle: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_separations: 12, max_radius: 8.0, angle_step: std::f64::consts::PI / 12.0, chart_angle: 0.0 }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<[f64; 2]> {
        let n = self.n_separations.max(1);
        (0..n)
            .map(|k| {
                let r = if n == 1 { 0.0 } else { self.max_radius * k as f64 / (n - 1) as f64 };
                let a = self.angle_step * k as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect()
    }

    pub fn pairs(&self) -> Vec<([f64; 2], [f64; 2])> {
        self.points().into_iter().map(|y| (y, [0.0, 0.0])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub lambda: f64,
    pub n_waves: usize,
    pub n_draws: usize,
    pub n_separations: usize,
    pub max_radius: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { lambda: 1.0, n_waves: 64, n_draws: 10_000, n_separations: 20, max_radius: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub surface: String,
    pub h_list: Vec<f64>,
    pub beta: f64,
    /// `delta = h^alpha`; give exactly one of `alpha` and `delta`.
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub eps0: f64,
    pub horizon_const: f64,
    /// `t = t_coefficient log(1/h)`.
    pub t_coefficient: f64,
    pub potential_case: PotentialCase,
    pub omega_distribution: OmegaDistribution,
    pub potential_profile: Profile,
    pub state: StateConfig,
    pub field_variant: FieldVariant,
    pub n_omega: usize,
    pub n_x: usize,
    pub grid: GridSpec,
    pub gamma: f64,
    /// Loss for the close-approach radius; the job default when absent.
    pub excision_eps: Option<f64>,
    pub n_probes: usize,
    pub audit: AuditConfig,
    pub oracle: OracleConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditConfig {
    pub n_probes: usize,
    pub n_geodesics: usize,
    pub n_derivative_lines: usize,
    pub horizon: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { n_probes: 2000, n_geodesics: 50, n_derivative_lines: 50, horizon: 5.0 }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            surface: "bolza".into(),
            h_list: vec![0.05, 0.02, 0.01],
            beta: 0.3,
            alpha: Some(0.8),
            delta: None,
            eps0: 0.05,
            horizon_const: 0.5,
            t_coefficient: 0.5,
            potential_case: PotentialCase::Base,
            omega_distribution: OmegaDistribution::default(),
            potential_profile: Profile::Plateau { flat: 0.5 },
            state: StateConfig::default(),
            field_variant: FieldVariant::Full,
            n_omega: 512,
            n_x: 64,
            grid: GridSpec::default(),
            gamma: 0.3,
            excision_eps: None,
            n_probes: 500,
            audit: AuditConfig::default(),
            oracle: OracleConfig::default(),
            seed: 1,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the canonical TOML form, without the output directory.
    pub fn hash(&self) -> Result<String> {
        let c = ExperimentConfig { out_dir: PathBuf::new(), ..self.clone() };
        Ok(hex(&Sha256::digest(c.to_toml()?.as_bytes())))
    }

    pub fn delta_for(&self, h: f64) -> f64 {
        match (self.alpha, self.delta) {
            (_, Some(d)) => d,
            (Some(a), None) => h.powf(a),
            (None, None) => 0.0,
        }
    }

    pub fn t_for(&self, h: f64) -> f64 {
        self.t_coefficient * (1.0 / h).ln()
    }

    /// Schema and admissibility checks, run before any computation.
    pub fn validate(&self) -> Result<()> {
        if self.surface != "bolza" {
            return Err(Error::Config(format!("unknown surface {:?}, only \"bolza\" is supported", self.surface)));
        }
        if !(self.beta > 0.0 && self.beta < 0.5) {
            return Err(Error::Admissibility(format!("beta must lie in (0, 1/2), got {}", self.beta)));
        }
        if self.alpha.is_some() == self.delta.is_some() {
            return Err(Error::Config("give exactly one of alpha and delta".into()));
        }
        if let Some(a) = self.alpha {
            if !in_admissible_region(a, self.beta) {
                return Err(Error::Admissibility(format!(
                    "(alpha, beta) = ({a}, {}) is outside 1 - alpha < beta < min(alpha/2, 2 - 2 alpha)",
                    self.beta
                )));
            }
        }
        if self.h_list.is_empty() || self.h_list.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
            return Err(Error::Config(format!("h_list must be nonempty with entries in (0, 1), got {:?}", self.h_list)));
        }
        if !(self.t_coefficient >= 0.0 && self.t_coefficient <= self.horizon_const) {
            return Err(Error::Admissibility(format!(
                "t_coefficient {} exceeds horizon_const {}",
                self.t_coefficient, self.horizon_const
            )));
        }
        if self.grid.points().iter().any(|y| y[0].hypot(y[1]) > crate::field::MAX_GRID_RADIUS) {
            return Err(Error::Config("grid points must lie within radius 10".into()));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        for &h in &self.h_list {
            let c = ParameterConditions::evaluate(h, self.beta, self.delta_for(h), self.eps0, self.potential_case);
            if !c.all() {
                return Err(Error::Admissibility(format!("parameters at h = {h} violate {c:?}")));
            }
        }
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Git-style content digest: SHA-256 of `"blob <len>\0" + content`.
pub fn content_digest(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    hex(&h.finalize())
}

/// Everything a run needs: the validated configuration, the surface and the state.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub surface: Arc<Surface>,
    pub state: Arc<LagrangianState>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let s = &config.state;
        let state = Arc::new(LagrangianState::new(
            s.boundary_angle,
            DiskPoint::new(s.center[0], s.center[1])?,
            s.radius_fraction * INRADIUS,
            s.profile,
        )?);
        let t_max = config.h_list.iter().map(|&h| config.t_for(h)).fold(0.0, f64::max);
        let surface = Arc::new(Surface::bolza(Surface::lift_radius(t_max, &state))?);
        Ok(Experiment { config_hash: config.hash()?, config, surface, state })
    }

    pub fn potential(&self, h: f64) -> Result<RandomPotential> {
        let c = &self.config;
        let params = NetParams::new(h, c.beta, c.potential_case, c.seed)
            .with_profile(c.potential_profile)
            .with_distribution(c.omega_distribution);
        build_net(&self.surface, &params)
    }

    pub fn job(&self, h: f64) -> Result<PropagationJob> {
        let c = &self.config;
        let params = JobParams {
            h,
            beta: c.beta,
            delta: c.delta_for(h),
            eps0: c.eps0,
            t: c.t_for(h),
            horizon_const: c.horizon_const,
            excision_eps: c.excision_eps,
            ..JobParams::default()
        };
        PropagationJob::new(params, self.surface.clone(), Arc::new(self.potential(h)?), self.state.clone())
    }

    pub fn points(&self, job: &PropagationJob) -> Result<Vec<DiskPoint>> {
        good_points(job, self.config.n_x, self.config.seed, Some(self.config.gamma), 400 * self.config.n_x.max(1))
    }

    /// Field ensemble over `n_x` good points and `n_omega` weight draws.
    pub fn ensemble(&self, job: &PropagationJob) -> Result<Vec<LocalFieldSample>> {
        let c = &self.config;
        let pts = self.points(job)?;
        sample_ensemble(job, &pts, c.n_omega, c.grid.chart_angle, &c.grid.points(), c.field_variant, PhaseMode::Dynamic)
    }
}

/// Result files of one run; every JSON file carries the config hash, every CSV
/// has a JSON sidecar that does.
pub struct Outputs {
    pub dir: PathBuf,
    pub config_hash: String,
    pub files: BTreeMap<String, String>,
}

impl Outputs {
    pub fn new(dir: &Path, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), config_hash: config_hash.into(), files: BTreeMap::new() })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.files.insert(name.into(), content_digest(bytes));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value)?;
        let wrapped = match v.as_object_mut() {
            Some(obj) => {
                obj.insert("config_hash".into(), self.config_hash.clone().into());
                v
            }
            None => serde_json::json!({ "config_hash": self.config_hash, "data": v }),
        };
        let text = serde_json::to_string_pretty(&wrapped)? + "\n";
        self.put(name, text.as_bytes())
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, bytes: Vec<u8>, meta: &T) -> Result<()> {
        self.put(name, &bytes)?;
        let side = format!("{}.json", name.trim_end_matches(".csv"));
        self.json(&side, &serde_json::json!({ "file": name, "digest": content_digest(&bytes), "meta": meta }))
    }

    pub fn manifest(&mut self, command: Command) -> Result<()> {
        let m = serde_json::json!({ "command": command.name(), "files": self.files.clone() });
        let name = format!("manifest_{}.json", command.name());
        let mut v = m;
        v.as_object_mut().unwrap().insert("config_hash".into(), self.config_hash.clone().into());
        let text = serde_json::to_string_pretty(&v)? + "\n";
        std::fs::write(self.dir.join(name), text)?;
        Ok(())
    }
}

fn tag_h(h: f64) -> String {
    format!("h{h}")
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub pass: bool,
    pub covariance_pass: bool,
    pub fourth_moment_ratio: f64,
    pub fourth_moment_pass: bool,
    pub n_draws: usize,
}

/// Berry sampler against its own quadrature kernel.
pub fn oracle_self_test(c: &OracleConfig, seed: u64) -> Result<(OracleReport, CovarianceEstimate)> {
    let k = BerryKernel::new(c.lambda);
    let n = c.n_separations.max(2);
    let grid: Vec<[f64; 2]> = (0..n).map(|i| [c.max_radius * i as f64 / (n - 1) as f64, 0.0]).collect();
    let ens = berry_ensemble(&k, c.n_waves, seed, c.n_draws, &grid)?;
    let pairs: Vec<_> = grid.iter().map(|y| (*y, [0.0, 0.0])).collect();
    let est = empirical_covariance(&ens, &pairs)?;
    let covariance_pass = est
        .separations
        .iter()
        .zip(&est.estimates)
        .zip(&est.stderr)
        .all(|((r, e), s)| (e - k.kernel(*r)).norm() <= 3.0 * s);
    let g = gaussianity(&ens, [0.0, 0.0])?;
    let fourth_moment_pass = (g.fourth_moment_ratio - 2.0).abs() <= 0.15;
    Ok((
        OracleReport {
            pass: covariance_pass && fourth_moment_pass,
            covariance_pass,
            fourth_moment_ratio: g.fourth_moment_ratio,
            fourth_moment_pass,
            n_draws: c.n_draws,
        },
        est,
    ))
}

fn run_command(cmd: Command, exp: &Experiment, out: &mut Outputs) -> Result<()> {
    let c = &exp.config;
    match cmd {
        Command::Oracle => {
            let (report, est) = oracle_self_test(&c.oracle, c.seed)?;
            let mut buf = Vec::new();
            write_covariance_csv(&mut buf, &est, Some(&BerryKernel::new(c.oracle.lambda)))?;
            out.csv("oracle_covariance.csv", buf, &serde_json::json!({ "n_samples": est.n_samples }))?;
            out.json("oracle.json", &report)?;
            if !report.pass {
                return Err(Error::Invariant("Berry oracle self-test failed".into()));
            }
        }
        Command::Report => {
            let mut entries = BTreeMap::new();
            let mut names: Vec<String> = std::fs::read_dir(&out.dir)?
                .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
                .filter(|n| n.ends_with(".json") && n != "report.json" && !n.starts_with("manifest_"))
                .collect();
            names.sort();
            for n in names {
                let bytes = std::fs::read(out.dir.join(&n))?;
                let v: serde_json::Value = serde_json::from_slice(&bytes)?;
                entries.insert(n, serde_json::json!({ "digest": content_digest(&bytes), "content": v }));
            }
            out.json("report.json", &serde_json::json!({ "files": entries }))?;
        }
        _ => {
            for &h in &c.h_list {
                run_for_h(cmd, exp, h, out)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PointContributions {
    x: DiskPoint,
    contributions: Vec<crate::wkb::LiftContribution>,
}

fn run_for_h(cmd: Command, exp: &Experiment, h: f64, out: &mut Outputs) -> Result<()> {
    let c = &exp.config;
    let tag = tag_h(h);
    match cmd {
        Command::Net => {
            let pot = exp.potential(h)?;
            let a = &c.audit;
            let sizes = AuditSizes {
                n_probes: a.n_probes,
                n_geodesics: a.n_geodesics,
                n_derivative_lines: a.n_derivative_lines,
                seed: c.seed,
            };
            let audit = verify_hypotheses(&exp.surface, &pot, c.delta_for(h), c.eps0, a.horizon, sizes)?;
            out.json(&format!("net_{tag}.json"), &pot)?;
            out.json(&format!("audit_{tag}.json"), &audit)?;
        }
        Command::Propagate => {
            let job = exp.job(h)?;
            let rows = exp
                .points(&job)?
                .into_iter()
                .map(|x| {
                    let chart = FrameChart::new(x, c.grid.chart_angle)?;
                    let om = &job.potential.omegas;
                    let contributions = job
                        .lift_profiles(&x, &chart, Excision::OwnLifts)?
                        .iter()
                        .map(|p| p.contribution(om))
                        .collect();
                    Ok(PointContributions { x, contributions })
                })
                .collect::<Result<Vec<_>>>()?;
            out.json(&format!("propagate_{tag}.json"), &serde_json::json!({ "h": h, "t": job.t(), "points": rows }))?;
        }
        Command::Sample => {
            let job = exp.job(h)?;
            let ens = exp.ensemble(&job)?;
            let mut buf = Vec::new();
            write_field_csv(&mut buf, &ens)?;
            let meta = serde_json::json!({
                "params": job.params,
                "potential_seed": job.potential.seed,
                "variant": c.field_variant,
                "n_samples": ens.len(),
            });
            out.csv(&format!("field_{tag}.csv"), buf, &meta)?;
        }
        Command::Covariance => {
            let job = exp.job(h)?;
            let ens = normalized(&exp.ensemble(&job)?);
            let est = empirical_covariance(&ens, &c.grid.pairs())?;
            let k = BerryKernel::new(1.0);
            let mut buf = Vec::new();
            write_covariance_csv(&mut buf, &est, Some(&k))?;
            out.csv(&format!("covariance_{tag}.csv"), buf, &serde_json::json!({ "h": h, "n_samples": est.n_samples }))?;
            out.json(
                &format!("covariance_{tag}.json"),
                &serde_json::json!({ "h": h, "estimate": est, "max_deviation": max_kernel_deviation(&est, &k) }),
            )?;
        }
        Command::Gaussianity => {
            let job = exp.job(h)?;
            let ens = normalized(&exp.ensemble(&job)?);
            let g = gaussianity(&ens, [0.0, 0.0])?;
            out.json(&format!("gaussianity_{tag}.json"), &serde_json::json!({ "h": h, "report": g }))?;
        }
        Command::Meanphase => {
            let job = exp.job(h)?;
            let pts = exp.points(&job)?;
            use rayon::prelude::*;
            let per = pts.par_iter().map(|x| mean_phase(&job, x, c.n_omega)).collect::<Result<Vec<_>>>()?;
            let n = per.len().max(1) as f64;
            let mean = per.iter().map(|m| m.value).sum::<f64>() / n;
            let stderr = per.iter().map(|m| m.stderr * m.stderr).sum::<f64>().sqrt() / n;
            out.json(
                &format!("meanphase_{tag}.json"),
                &serde_json::json!({ "h": h, "mean": mean, "stderr": stderr, "points": pts, "per_point": per }),
            )?;
        }
        Command::Diagnose => {
            let job = exp.job(h)?;
            let eps = c.excision_eps.unwrap_or_else(|| job.excision_eps());
            // below the injectivity radius the return-time window is empty
            let r = diagnose(&job, INRADIUS, job.t(), c.gamma, eps, c.n_probes, c.seed)?;
            out.json(&format!("diagnose_{tag}.json"), &r)?;
        }
        Command::Oracle | Command::Report => unreachable!(),
    }
    Ok(())
}

/// Runs one subcommand; the returned error carries the exit code.
pub fn run(args: &Args) -> Result<PathBuf> {
    let cmd = args
        .subcommand
        .or(args.command)
        .ok_or_else(|| Error::Config("no subcommand given".into()))?;
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::from_toml(
            &std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        )?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(o) = &args.out {
        config.out_dir = o.clone();
    }
    let work = || -> Result<PathBuf> {
        let exp = Experiment::new(config.clone())?;
        let mut out = Outputs::new(&exp.config.out_dir, &exp.config_hash)?;
        run_command(cmd, &exp, &mut out)?;
        out.manifest(cmd)?;
        Ok(out.dir)
    };
    match args.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Resource(e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// Exit status and the error report printed on failure.
pub fn main_with(args: &Args) -> i32 {
    match run(args) {
        Ok(_) => 0,
        Err(e) => {
            let report = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() });
            eprintln!("{report}");
            e.exit_code()
        }
    }
}
