mod source;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use cma_lab::cz::{CzParams, SetSpec};
use cma_lab::experiment::{
    cover_artifact, harnack_measurements, holder_measurements, run_pipeline, section_records, ExperimentConfig,
    FitArtifact, HarnackArtifact,
};
use cma_lab::field::save_mask;
use cma_lab::harnack::HarnackConfig;
use cma_lab::lin::{assemble_for, solve_linear};
use cma_lab::ma::solve_ma;
use cma_lab::psh::{complex_hessian, ma_density};
use cma_lab::report::{summarize, write_summary};
use cma_lab::sections::SectionContext;
use cma_lab::{DomainMask, Error, Grid, MaMeasure, Result, ScalarField, SectionConfig, SolverConfig, StencilMode, Trace};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "cma-lab", version, about = "Complex Monge-Ampere numerical laboratory")]
struct Cli {
    /// Worker threads (overrides CMA_LAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Potential plus its domain and boundary data.
#[derive(clap::Args)]
struct PhiArgs {
    #[arg(long)]
    phi: PathBuf,
    /// Domain mask; defaults to the unit ball on the lattice of `--phi`.
    #[arg(long)]
    domain: Option<PathBuf>,
    /// Boundary data of the potential.
    #[arg(long, default_value = "zero")]
    phi_bc: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Central,
    Monotone,
}

#[derive(Subcommand)]
enum Command {
    /// Build a domain mask on an odd-sized lattice.
    Mask {
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 257)]
        resolution: usize,
        #[arg(long, default_value_t = 1.1)]
        halfwidth: f64,
        #[arg(long, default_value_t = 0.0)]
        gamma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve det(phi_{i j-bar}) = f with Dirichlet data.
    Solve {
        #[arg(long)]
        domain: PathBuf,
        #[arg(long, default_value = "const:1")]
        f: String,
        #[arg(long, default_value = "zero")]
        bc: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 60)]
        max_iters: usize,
    },
    /// Solve the linearized equation L_phi u = g.
    Lsolve {
        #[command(flatten)]
        phi: PhiArgs,
        #[arg(long, default_value = "const:0")]
        g: String,
        #[arg(long)]
        bc: String,
        #[arg(long, value_enum, default_value = "central")]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sections and their ellipsoid fits.
    Sections {
        #[command(flatten)]
        phi: PhiArgs,
        #[arg(long, default_value = "grid:stride=8")]
        centers: String,
        #[arg(long, default_value = "geometric:0.3,0.5,6")]
        heights: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Covering decomposition of a node set.
    Cz {
        #[command(flatten)]
        phi: PhiArgs,
        /// JSON set description.
        #[arg(long)]
        set: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 0.1)]
        eps2: f64,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 0.4)]
        mu0: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.3")]
        eps2_sweep: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Harnack ratios and critical-density constants for solutions of L u = 0.
    Harnack {
        #[command(flatten)]
        phi: PhiArgs,
        #[arg(long, required = true, num_args = 1..)]
        u: Vec<PathBuf>,
        #[arg(long, default_value = "spiral:20,0.45")]
        centers: String,
        #[arg(long, default_value = "0.1,0.05,0.025,0.0125")]
        heights: String,
        /// Harnack settings as JSON (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        level_centers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Oscillation-decay fits.
    Holder {
        #[command(flatten)]
        phi: PhiArgs,
        #[arg(long, required = true, num_args = 1..)]
        u: Vec<PathBuf>,
        #[arg(long, default_value = "spiral:4,0.3")]
        centers: String,
        #[arg(long, default_value_t = 0.25)]
        t0: f64,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 6)]
        levels: usize,
        /// Harnack report supplying the ratio for the cross-check.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize run directories into a CSV and SVG plots.
    Report {
        /// Run directories, or files inside them.
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plots: Option<PathBuf>,
    },
    /// Full pipeline from a JSON experiment config.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 4 when a measured property fails.
        #[arg(long)]
        assert: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli
        .threads
        .or_else(|| std::env::var("CMA_LAB_THREADS").ok().and_then(|v| v.parse().ok()));
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e.root() {
                Error::Config(_) | Error::Format(_) | Error::Json(_) | Error::InvalidGrid(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::from(EXIT_SOLVER),
            }
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

struct Loaded {
    mask: DomainMask,
    phi: ScalarField,
    trace: Trace,
}

impl Loaded {
    fn new(a: &PhiArgs) -> Result<Loaded> {
        let phi = ScalarField::load(&a.phi)?;
        let mask = source::domain(a.domain.as_deref(), phi.grid())?;
        let trace = source::boundary(&a.phi_bc, &mask)?;
        Ok(Loaded { mask, phi, trace })
    }

    fn ctx(&self) -> SectionContext<'_> {
        SectionContext::new(&self.mask, &self.phi, &self.trace).with_config(SectionConfig::default())
    }

    /// Monge-Ampere measure of the potential, negative densities clipped.
    fn measure(&self) -> Result<MaMeasure> {
        let hess = complex_hessian(&self.mask, &self.phi, &self.trace);
        let d = ma_density(&hess).into_values().into_iter().map(|v| if v.is_nan() { v } else { v.max(0.0) }).collect();
        MaMeasure::new(&self.mask, d)
    }
}

fn load_us(paths: &[PathBuf], grid: &Grid) -> Result<(Vec<String>, Vec<ScalarField>)> {
    let mut labels = Vec::new();
    let mut us = Vec::new();
    for p in paths {
        let u = ScalarField::load(p)?;
        if !u.grid().same_lattice(grid) {
            return Err(Error::Config(format!("{}: lattice differs from the potential", p.display())));
        }
        labels.push(p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        us.push(u);
    }
    Ok((labels, us))
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Mask { n, resolution, halfwidth, gamma, out } => {
            let g = Grid::build(n, resolution, halfwidth)?;
            let m = DomainMask::ball(&g, gamma, None)?;
            save_mask(&out, &m)?;
            println!("mask: {} interior nodes, {} cuts", m.n_interior(), m.cuts().len());
        }
        Command::Solve { domain, f, bc, out, tol, max_iters } => {
            let mask = source::domain(Some(&domain), cma_lab::field::load_mask(&domain)?.grid())?;
            let f = source::field(&f, mask.grid(), &mask)?;
            let bc = source::boundary(&bc, &mask)?;
            let cfg = SolverConfig { newton_tol: tol, max_iters, ..SolverConfig::default() };
            cfg.validate()?;
            let sol = solve_ma(&mask, &f, &bc, &cfg)?;
            sol.field.save(&out)?;
            println!("solve: {} Newton steps, residual {:.3e}", sol.iterations(), sol.residual());
        }
        Command::Lsolve { phi, g, bc, mode, out } => {
            let l = Loaded::new(&phi)?;
            let mode = match mode {
                Mode::Central => StencilMode::Central,
                Mode::Monotone => StencilMode::Monotone,
            };
            let op = assemble_for(&l.phi, &l.trace, &l.mask, mode)?;
            let g = source::field(&g, l.mask.grid(), &l.mask)?;
            let bc = source::boundary(&bc, &l.mask)?;
            let sol = solve_linear(&op, &g, &bc, &Default::default())?;
            sol.field.save(&out)?;
            println!("lsolve: {} iterations, residual {:.3e}", sol.iterations, sol.residual_sup);
        }
        Command::Sections { phi, centers, heights, out } => {
            let l = Loaded::new(&phi)?;
            let centers = source::centers(&centers, &l.mask)?;
            let heights = source::heights(&heights)?;
            let art = section_records(&l.ctx(), &centers, &heights)?;
            write_json(&out, &serde_json::to_value(&art)?)?;
            println!("sections: {} records, {} skipped", art.records.len(), art.skipped.len());
        }
        Command::Cz { phi, set, delta, eps2, sigma, mu0, eps2_sweep, out } => {
            let l = Loaded::new(&phi)?;
            let spec: SetSpec = serde_json::from_str(&fs::read_to_string(&set)?).map_err(|e| Error::Config(e.to_string()))?;
            let params = CzParams { delta, eps2, sigma, mu0, ..CzParams::default() };
            params.validate()?;
            let art = cover_artifact(&l.ctx(), &l.measure()?, &spec.resolve(&l.mask), &params, &eps2_sweep)?;
            write_json(&out, &serde_json::to_value(&art)?)?;
            println!("cz: {} sections, delta0 {:?}, K {:.3}", art.cover.sections.len(), art.cover.delta0, art.k_fit);
        }
        Command::Harnack { phi, u, centers, heights, config, level_centers, out } => {
            let l = Loaded::new(&phi)?;
            let (_, us) = load_us(&u, l.mask.grid())?;
            let cfg: HarnackConfig = match config {
                Some(p) => serde_json::from_str(&fs::read_to_string(p)?).map_err(|e| Error::Config(e.to_string()))?,
                None => HarnackConfig::default(),
            };
            cfg.validate()?;
            let centers = source::centers(&centers, &l.mask)?;
            let heights = source::heights(&heights)?;
            let art = harnack_measurements(&l.ctx(), &l.measure()?, &us, &centers, &heights, level_centers, &cfg)?;
            write_json(&out, &serde_json::to_value(&art)?)?;
            println!("harnack: beta {:.4}, {} rows", art.harnack.beta, art.harnack.rows.len());
        }
        Command::Holder { phi, u, centers, t0, tau, levels, report, out } => {
            let l = Loaded::new(&phi)?;
            let (labels, us) = load_us(&u, l.mask.grid())?;
            let centers = source::centers(&centers, &l.mask)?;
            let beta = match report {
                Some(p) => {
                    let r: HarnackArtifact = serde_json::from_str(&fs::read_to_string(p)?)?;
                    r.harnack.beta
                }
                None => 1.0,
            };
            let art: FitArtifact = holder_measurements(&l.ctx(), &labels, &us, &centers, t0, tau, levels, beta)?;
            write_json(&out, &serde_json::to_value(&art)?)?;
            println!("holder: {} fits, alpha_min {:?}, rho_max {:?}", art.fits.len(), art.alpha_min, art.rho_max);
        }
        Command::Report { inputs, out, plots } => {
            let mut dirs: Vec<PathBuf> = Vec::new();
            for p in inputs {
                let d = if p.is_dir() { p } else { p.parent().map(Path::to_path_buf).unwrap_or_default() };
                if !dirs.contains(&d) {
                    dirs.push(d);
                }
            }
            let s = summarize(&dirs)?;
            write_summary(&s, &out, plots.as_deref())?;
            for n in &s.notes {
                eprintln!("note: {n}");
            }
            println!("report: {} rows, {} plots", s.rows, s.plots.len());
        }
        Command::Pipeline { config, out, assert } => {
            let cfg = ExperimentConfig::load(&config)?;
            let run = run_pipeline(&cfg, out.as_deref())?;
            println!("pipeline: {} files in {}", run.manifest.files.len(), run.dir.display());
            if assert {
                let failures = acceptance_failures(&run.dir)?;
                for f in &failures {
                    eprintln!("violation: {f}");
                }
                if !failures.is_empty() {
                    return Ok(ExitCode::from(EXIT_ACCEPTANCE));
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Properties a completed run is expected to satisfy.
fn acceptance_failures(dir: &Path) -> Result<Vec<String>> {
    let read = |name: &str| -> Result<serde_json::Value> { Ok(serde_json::from_str(&fs::read_to_string(dir.join(name))?)?) };
    let report = read("report.json")?;
    let cover = read("cover.json")?;
    let fit = read("fit.json")?;
    let mut out = Vec::new();
    let num = |v: &serde_json::Value, p: &str| v.pointer(p).and_then(serde_json::Value::as_f64);
    if !num(&report, "/harnack/beta").is_some_and(f64::is_finite) {
        out.push("Harnack ratio is not finite".to_string());
    }
    if report["counterexamples"].as_array().is_some_and(|a| !a.is_empty()) {
        out.push(format!("{} critical-density counterexamples", report["counterexamples"].as_array().map_or(0, Vec::len)));
    }
    if let Some(d) = num(&cover, "/cover/delta0").filter(|&d| d > 0.98) {
        out.push(format!("cover density ratio {d} > 0.98"));
    }
    if let Some(u) = num(&cover, "/cover/uncovered_fraction").filter(|&u| u > 0.02) {
        out.push(format!("uncovered fraction {u} > 0.02"));
    }
    if !num(&fit, "/alpha_min").is_some_and(|a| a > 0.0) {
        out.push("no positive Hoelder exponent".to_string());
    }
    if fit["cross_check"] != json!(true) {
        out.push("oscillation ratio exceeds the Harnack bound".to_string());
    }
    Ok(out)
}
