//! Experiment configuration and the end-to-end pipeline
//! solve -> linear solves -> sections -> cover -> Harnack -> Hoelder fits -> summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cz::{cz_decompose, fit_overlap_constant, overlap_sweep, CzCover, CzParams, OverlapProfile, SetSpec};
use crate::error::{Error, Result};
use crate::families::{solve_boundary_problem, standard_family, BoundarySpec, DensitySpec};
use crate::field::{save_mask, ScalarField};
use crate::grid::{norm_sq, DomainMask, Grid, MaMeasure, Perturbation, Point};
use crate::harnack::{
    critical_density, harnack_all_scales, inf_propagation, level_set_decay, oscillation_decay,
    stronger_critical_density, uniform_constants, CriticalDensityTable, HarnackConfig, HarnackReport, HolderFit,
    LevelSetDecay, Propagation, StrongerDensity, UniformConstants,
};
use crate::lin::{assemble, StencilMode};
use crate::ma::{solve_ma, Solution, SolverConfig};
use crate::report::{summarize, write_summary};
use crate::sections::{SectionConfig, SectionContext, SectionRecord};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub n: usize,
    pub resolution: usize,
    pub halfwidth: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n: 1, resolution: 257, halfwidth: 1.1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DomainSpec {
    pub gamma: f64,
    pub perturbation: Option<Perturbation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectionSweep {
    pub config: SectionConfig,
    pub centers: usize,
    /// Centers are drawn from the ball of this radius.
    pub center_radius: f64,
    pub heights: Vec<f64>,
}

impl Default for SectionSweep {
    fn default() -> Self {
        SectionSweep {
            config: SectionConfig::default(),
            centers: 8,
            center_radius: 0.3,
            heights: vec![0.3, 0.2, 0.1, 0.05, 0.02],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CzSpec {
    pub params: CzParams,
    pub set: SetSpec,
    pub eps2_sweep: Vec<f64>,
}

impl Default for CzSpec {
    fn default() -> Self {
        CzSpec {
            params: CzParams::default(),
            set: SetSpec::Ball { center: vec![0.1, 0.0], radius: 0.08 },
            eps2_sweep: vec![0.05, 0.1, 0.2, 0.3],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnackSweep {
    pub config: HarnackConfig,
    pub family_size: usize,
    pub centers: usize,
    pub center_radius: f64,
    pub heights: Vec<f64>,
    /// Solutions examined by the level-set decay, per solution this many centers.
    pub level_centers: usize,
    pub holder_centers: usize,
    pub holder_t0: f64,
    pub holder_levels: usize,
}

impl Default for HarnackSweep {
    fn default() -> Self {
        HarnackSweep {
            config: HarnackConfig::default(),
            family_size: 20,
            centers: 20,
            center_radius: 0.45,
            heights: vec![0.1, 0.05, 0.025, 0.0125],
            level_centers: 3,
            holder_centers: 4,
            holder_t0: 0.25,
            holder_levels: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub grid: GridSpec,
    pub domain: DomainSpec,
    pub density: DensitySpec,
    pub solver: SolverConfig,
    pub sections: SectionSweep,
    pub cz: CzSpec,
    pub harnack: HarnackSweep,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "baseline".into(),
            grid: GridSpec::default(),
            domain: DomainSpec::default(),
            density: DensitySpec::default(),
            solver: SolverConfig::default(),
            sections: SectionSweep::default(),
            cz: CzSpec::default(),
            harnack: HarnackSweep::default(),
            output: None,
            seed: 1,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        ExperimentConfig::from_json(&text)
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.grid.n) {
            return Err(Error::Config(format!("n = {} not supported", self.grid.n)));
        }
        if self.grid.resolution < 5 || self.grid.resolution.is_multiple_of(2) {
            return Err(Error::Config(format!("resolution {} must be odd and at least 5", self.grid.resolution)));
        }
        if self.name.is_empty() || self.name.contains(['/', '\\', ',']) {
            return Err(Error::Config(format!("name `{}` must be non-empty without separators", self.name)));
        }
        self.density.validate()?;
        self.solver.validate()?;
        self.cz.params.validate()?;
        self.harnack.config.validate()?;
        if self.cz.eps2_sweep.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("eps2 sweep values must lie in (0, 1)".into()));
        }
        if self.sections.heights.iter().chain(&self.harnack.heights).any(|&t| !(t > 0.0)) {
            return Err(Error::Config("heights must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Interior nodes nearest to `count` points spread over the ball of radius
/// `radius` (golden-angle spiral), without duplicates.
pub fn sample_centers(mask: &DomainMask, count: usize, radius: f64) -> Vec<usize> {
    let g = mask.grid();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut out = Vec::new();
    for k in 0..count {
        let r = radius * ((k as f64 + 0.5) / count as f64).sqrt();
        let a = golden * k as f64;
        let mut p: Point = [0.0; 4];
        if g.n() == 1 {
            p[0] = r * a.cos();
            p[1] = r * a.sin();
        } else {
            let b = 0.7 * k as f64;
            p[0] = r * a.cos();
            p[1] = r * a.sin() * b.cos();
            p[2] = r * a.sin() * b.sin();
        }
        if let Some((i, _)) = g.nearest(&p) {
            if mask.is_interior(i) && !out.contains(&i) {
                out.push(i);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionsArtifact {
    pub records: Vec<SectionRecord>,
    pub skipped: Vec<(usize, f64, String)>,
    pub sigma_max: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverArtifact {
    pub cover: CzCover,
    pub overlap_sweep: Vec<OverlapProfile>,
    pub k_fit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnackArtifact {
    pub harnack: HarnackReport,
    pub critical: Vec<CriticalDensityTable>,
    pub propagation: Vec<Propagation>,
    pub uniform: UniformConstants,
    pub m0: Option<f64>,
    pub tau: f64,
    pub stronger_checked: usize,
    pub counterexamples: Vec<StrongerDensity>,
    pub level_sets: Vec<LevelSetDecay>,
    pub delta0_max: Option<f64>,
    pub p_min: Option<f64>,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub fits: Vec<HolderFit>,
    pub labels: Vec<String>,
    pub skipped: Vec<String>,
    pub alpha_min: Option<f64>,
    pub rho_max: Option<f64>,
    /// Largest Harnack ratio of the run, including the per-level ratios of the fits.
    pub beta: f64,
    /// `rho_max <= (beta - 1) / (beta + 1) + 0.05`.
    pub cross_check: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub config_hash: String,
    pub version: String,
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub files: Vec<ManifestEntry>,
}

/// Sequential artifact writer that records every file it writes.
struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.bytes(name, text.as_bytes())
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(p) = path.parent() {
            fs::create_dir_all(p)?;
        }
        fs::write(&path, data)?;
        self.record(name);
        Ok(())
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    fn field(&mut self, name: &str, f: &ScalarField) -> Result<()> {
        f.save(self.dir.join(name))?;
        self.record(name);
        Ok(())
    }

    fn manifest(&self, config: &ExperimentConfig, failure: Option<(&str, &Error)>) -> Result<Manifest> {
        let mut files = Vec::new();
        for f in &self.files {
            let data = fs::read(self.dir.join(f))?;
            files.push(ManifestEntry { file: f.clone(), sha256: hex::encode(Sha256::digest(&data)), bytes: data.len() as u64 });
        }
        let m = Manifest {
            name: config.name.clone(),
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            status: if failure.is_some() { "failed".into() } else { "ok".into() },
            failed_stage: failure.map(|f| f.0.to_string()),
            error: failure.map(|f| f.1.to_string()),
            files,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
        Ok(m)
    }
}

/// Problem data shared by the stages.
pub struct Problem {
    pub mask: DomainMask,
    pub density: ScalarField,
    pub measure: MaMeasure,
    pub solution: Solution,
}

pub fn solve_stage(config: &ExperimentConfig) -> Result<Problem> {
    let g = Grid::build(config.grid.n, config.grid.resolution, config.grid.halfwidth)?;
    let mask = DomainMask::ball(&g, config.domain.gamma, config.domain.perturbation.clone())?;
    let density = config.density.field(&mask)?;
    let measure = MaMeasure::new(&mask, density.values().to_vec())?;
    let zero = crate::field::Trace::zeros(&mask);
    let solution = solve_ma(&mask, &density, &zero, &config.solver)?;
    Ok(Problem { mask, density, measure, solution })
}

pub fn family_stage(config: &ExperimentConfig, p: &Problem) -> Result<(Vec<BoundarySpec>, Vec<ScalarField>)> {
    let specs = standard_family(config.grid.n, config.harnack.family_size, config.seed);
    let op = assemble(&p.solution.hessian, &p.mask, StencilMode::Central)?;
    let mut us = Vec::with_capacity(specs.len());
    for s in &specs {
        us.push(solve_boundary_problem(&op, &p.mask, s, &config.solver.linear)?.field);
    }
    Ok((specs, us))
}

/// Section records for every (center, height); sections that escape, sit
/// below the floor or degenerate are listed as skipped.
pub fn section_records(ctx: &SectionContext, centers: &[usize], heights: &[f64]) -> Result<SectionsArtifact> {
    let t_max = heights.iter().copied().fold(0.0, f64::max);
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for &c in centers {
        let fam = ctx.family(c, t_max)?;
        for &t in heights {
            match ctx.section_from_family(&fam, t) {
                Ok(s) => records.push(s.record()),
                Err(e @ (Error::SectionEscapes { .. } | Error::BelowGridFloor { .. } | Error::DegenerateMoments)) => {
                    skipped.push((c, t, e.to_string()))
                }
                Err(Error::Precondition(m)) => skipped.push((c, t, m)),
                Err(e) => return Err(e),
            }
        }
    }
    let sigma_max = records.iter().map(|r| r.sigma).reduce(f64::max);
    Ok(SectionsArtifact { records, skipped, sigma_max })
}

pub fn cover_artifact(
    ctx: &SectionContext,
    mu: &MaMeasure,
    set: &[bool],
    params: &CzParams,
    eps2s: &[f64],
) -> Result<CoverArtifact> {
    let cover = cz_decompose(ctx, mu, set, params)?;
    let sweep = overlap_sweep(ctx, &cover, eps2s)?;
    let k_fit = fit_overlap_constant(&sweep);
    Ok(CoverArtifact { cover, overlap_sweep: sweep, k_fit })
}

/// Harnack rows, critical-density tables, propagation, level-set decay and the
/// stronger critical-density check for every solution in `us`.
pub fn harnack_measurements(
    ctx: &SectionContext,
    mu: &MaMeasure,
    us: &[ScalarField],
    centers: &[usize],
    heights: &[f64],
    level_centers: usize,
    cfg: &HarnackConfig,
) -> Result<HarnackArtifact> {
    let floor = ctx.floor();
    let t_max = heights.iter().copied().fold(0.0, f64::max);
    let lambda = cfg.lambda_sweep.first().copied().unwrap_or(0.5);
    let fams: Vec<_> = centers
        .iter()
        .map(|&c| ctx.family(c, (4.0 * t_max).max(cfg.mu0.powi(3))))
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut critical = Vec::new();
    let mut owner = Vec::new();
    let mut propagation = Vec::new();
    let mut level_sets = Vec::new();
    let mut skipped = 0;
    for (k, u) in us.iter().enumerate() {
        reports.push(harnack_all_scales(u, ctx, centers, heights, cfg)?);
        for (f, fam) in fams.iter().enumerate() {
            for &t in heights {
                if t <= floor || 4.0 * t >= fam.escape {
                    skipped += 1;
                    continue;
                }
                match (critical_density(u, fam, t, mu, cfg), inf_propagation(u, fam, t)) {
                    (Ok(c), Ok(pr)) => {
                        critical.push(c);
                        owner.push((k, f));
                        propagation.push(pr);
                    }
                    _ => skipped += 1,
                }
            }
        }
        for fam in fams.iter().take(level_centers) {
            if cfg.mu0.powi(3) <= floor {
                skipped += 1;
                continue;
            }
            match level_set_decay(u, ctx.mask, fam, mu, cfg) {
                Ok(l) => level_sets.push(l),
                Err(_) => skipped += 1,
            }
        }
    }
    let harnack = HarnackReport::merge(&reports);
    let uniform = uniform_constants(&critical, &propagation, lambda);
    let m0 = uniform.m1.map(|m1| m1 * uniform.l * uniform.l);
    let mut counterexamples = Vec::new();
    let mut stronger_checked = 0;
    if let Some(m1) = uniform.m1 {
        for (table, &(k, f)) in critical.iter().zip(&owner) {
            let Some(q) = table.quantile(lambda) else { continue };
            let alpha = q * table.inf_half * (1.0 - 1e-12);
            let r = stronger_critical_density(&us[k], &fams[f], table.t, mu, alpha, lambda, m1, uniform.l)?;
            if r.hypothesis {
                stronger_checked += 1;
            }
            if !r.holds {
                counterexamples.push(r);
            }
        }
    }
    let live: Vec<&LevelSetDecay> = level_sets.iter().filter(|l| !l.degenerate).collect();
    let delta0_max = live.iter().map(|l| l.delta0).reduce(f64::max);
    let p_min = live.iter().map(|l| l.p).reduce(f64::min);
    Ok(HarnackArtifact {
        harnack,
        critical,
        propagation,
        uniform,
        m0,
        tau: cfg.inner_ratio,
        stronger_checked,
        counterexamples,
        level_sets,
        delta0_max,
        p_min,
        skipped,
    })
}

/// Oscillation-decay fits for every (solution, center). Solutions whose
/// sections leave the domain too early are listed as skipped.
#[allow(clippy::too_many_arguments)]
pub fn holder_measurements(
    ctx: &SectionContext,
    labels: &[String],
    us: &[ScalarField],
    centers: &[usize],
    t0: f64,
    tau: f64,
    levels: usize,
    beta_harnack: f64,
) -> Result<FitArtifact> {
    let mut fits = Vec::new();
    let mut fit_labels = Vec::new();
    let mut skipped = Vec::new();
    for (label, u) in labels.iter().zip(us) {
        for &c in centers {
            match oscillation_decay(u, ctx, c, t0, tau, levels) {
                Ok(f) => {
                    fits.push(f);
                    fit_labels.push(label.clone());
                }
                Err(e @ (Error::InsufficientScales { .. } | Error::SectionEscapes { .. })) => {
                    skipped.push(format!("{label} at {c}: {e}"))
                }
                Err(e) => return Err(e),
            }
        }
    }
    let alpha_min = fits.iter().map(|f| f.alpha).reduce(f64::min);
    let rho_max = fits.iter().map(|f| f.rho).reduce(f64::max);
    let beta = fits
        .iter()
        .flat_map(|f| f.level_beta.iter().flatten().copied())
        .fold(beta_harnack, f64::max);
    let cross_check = rho_max.is_some_and(|r| r <= (beta - 1.0) / (beta + 1.0) + 0.05);
    Ok(FitArtifact { fits, labels: fit_labels, skipped, alpha_min, rho_max, beta, cross_check })
}

impl Problem {
    pub fn context(&self, config: SectionConfig) -> SectionContext<'_> {
        SectionContext::new(&self.mask, &self.solution.field, &self.solution.trace).with_config(config)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

/// Run every stage, writing artifacts into `dir` (or the configured output).
/// A failing stage aborts the run; artifacts written so far are kept and
/// listed in a manifest marked as failed.
pub fn run_pipeline(config: &ExperimentConfig, dir: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let dir = dir
        .map(Path::to_path_buf)
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&config.name));
    fs::create_dir_all(&dir)?;
    let mut w = Writer { dir: dir.clone(), files: Vec::new() };
    w.json("config.json", config)?;
    match run_stages(config, &mut w) {
        Ok(()) => {
            let manifest = w.manifest(config, None)?;
            Ok(RunOutcome { dir, manifest })
        }
        Err(Error::Stage { stage, source }) => {
            w.manifest(config, Some((&stage, &source)))?;
            Err(Error::Stage { stage, source })
        }
        Err(e) => {
            w.manifest(config, Some(("io", &e)))?;
            Err(e)
        }
    }
}

fn run_stages(config: &ExperimentConfig, w: &mut Writer) -> Result<()> {
    let p = solve_stage(config).map_err(|e| e.in_stage("solve"))?;
    w.field("phi.cmaf", &p.solution.field)?;
    save_mask(w.dir.join("mask.cmaf"), &p.mask)?;
    w.record("mask.cmaf");

    let (specs, us) = family_stage(config, &p).map_err(|e| e.in_stage("lsolve"))?;
    for (k, u) in us.iter().enumerate() {
        w.field(&format!("u_{k:02}.cmaf"), u)?;
    }
    w.json("family.json", &specs)?;

    let ctx = p.context(config.sections.config);
    let sc = sample_centers(&p.mask, config.sections.centers, config.sections.center_radius);
    let sections = section_records(&ctx, &sc, &config.sections.heights).map_err(|e| e.in_stage("sections"))?;
    w.json("sections.json", &sections)?;

    let set = config.cz.set.resolve(&p.mask);
    let cover = cover_artifact(&ctx, &p.measure, &set, &config.cz.params, &config.cz.eps2_sweep)
        .map_err(|e| e.in_stage("cz"))?;
    w.json("cover.json", &cover)?;

    let hs = &config.harnack;
    let hc = sample_centers(&p.mask, hs.centers, hs.center_radius);
    let report = harnack_measurements(&ctx, &p.measure, &us, &hc, &hs.heights, hs.level_centers, &hs.config)
        .map_err(|e| e.in_stage("harnack"))?;
    w.json("report.json", &report)?;

    let labels: Vec<String> = specs.iter().map(|s| s.label().to_string()).collect();
    let fc = sample_centers(&p.mask, hs.holder_centers, 0.3);
    let fit = holder_measurements(
        &ctx,
        &labels,
        &us,
        &fc,
        hs.holder_t0,
        hs.config.inner_ratio,
        hs.holder_levels,
        report.harnack.beta,
    )
    .map_err(|e| e.in_stage("holder"))?;
    w.json("fit.json", &fit)?;

    let summary = summarize(std::slice::from_ref(&w.dir)).map_err(|e| e.in_stage("report"))?;
    write_summary(&summary, &w.dir.join("summary.csv"), Some(&w.dir.join("plots")))?;
    w.record("summary.csv");
    for (name, _) in &summary.plots {
        w.record(&format!("plots/{name}"));
    }
    Ok(())
}

/// `|z|^2 - 1` sampled on the interior of `mask`.
pub fn reference_quadratic(mask: &DomainMask) -> ScalarField {
    ScalarField::from_fn_on(mask, |p| norm_sq(p) - 1.0)
}
