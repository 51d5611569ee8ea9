use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use nlgibbs::classical::ClassicalModel;
use nlgibbs::fock::FockBasis;
use nlgibbs::gibbs::{free_gibbs_state, gibbs_state, kernel_inverse_trace};
use nlgibbs::lab::battery::{run_battery, BatteryConfig, CheckOutcome};
use nlgibbs::lab::campaigns::{
    run_dm_convergence, run_husimi_convergence, run_partition_convergence, run_proof_step_suite,
};
use nlgibbs::lab::config::RunConfig;
use nlgibbs::lab::report::{ConvergenceReport, TableRow};
use nlgibbs::operator::hamiltonian;
use nlgibbs::spectrum::schatten_trace;
use nlgibbs::{LabError, Result};

#[derive(Parser)]
#[command(name = "nlgibbs", version, about = "Bosonic Gibbs states and their nonlinear Gibbs measure limits")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration; defaults apply to absent fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the classical Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// One-body eigenvalues and truncated Schatten traces.
    Spectrum {
        /// Exponents p of `Σ λ_j^{-p}`.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 2.0])]
        p: Vec<f64>,
    },
    /// Writes the two-body kernel as `[a, b, c, d, re, im]` entries.
    Kernel,
    /// Gibbs state at one temperature.
    Gibbs {
        #[arg(long)]
        temperature: f64,
        /// Use the free Hamiltonian.
        #[arg(long)]
        free: bool,
        /// Also export the full state.
        #[arg(long)]
        export_state: bool,
        /// Export `Γ^(k)` for these k.
        #[arg(long, value_delimiter = ',')]
        dm: Vec<usize>,
    },
    /// Classical nonlinear Gibbs measure estimates.
    Classical {
        /// Export `γ^(k)` for these k.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1])]
        dm: Vec<usize>,
    },
    /// Runs a convergence campaign over the temperature grid.
    Converge {
        #[arg(value_enum)]
        campaign: Campaign,
    },
    /// Runs the invariant battery; exits nonzero if any check fails.
    Check {
        /// Reduced sample budgets.
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Campaign {
    Partition,
    Dm,
    Husimi,
    Proofsteps,
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.classical.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.output.dir = out.clone();
    }
    if let Some(t) = g.threads {
        cfg.threads = Some(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| LabError::Config(e.to_string()))?;
    w.write_record(header).map_err(|e| LabError::Config(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| LabError::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(path)
}

fn spectrum_cmd(cfg: &RunConfig, p: &[f64]) -> Result<()> {
    let s = cfg.spectrum()?;
    let traces = p
        .iter()
        .map(|&p| Ok(json!({"p": p, "trace": schatten_trace(&s, p)?})))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<String>> = s
        .eigenvalues()
        .iter()
        .enumerate()
        .map(|(j, l)| vec![j.to_string(), format!("{l:e}"), format!("{:e}", 1.0 / l)])
        .collect();
    let dir = &cfg.output.dir;
    let json_path = write_json(
        dir,
        "spectrum.json",
        &json!({"family": s.family(), "eigenvalues": s.eigenvalues(), "schatten_traces": traces}),
    )?;
    let csv_path = write_csv(dir, "spectrum.csv", &["mode", "eigenvalue", "inverse"], &rows)?;
    for r in &rows {
        println!("mode {:>3}  λ = {}", r[0], r[1]);
    }
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn kernel_cmd(cfg: &RunConfig) -> Result<()> {
    let s = cfg.spectrum()?;
    let w = cfg.kernel()?;
    let path = write_json(&cfg.output.dir, "kernel.json", &w.to_file())?;
    println!(
        "{} modes, {} nonzero entries, min pair eigenvalue {:.6e}, tr[w h^-1⊗h^-1] = {:.6e}",
        w.modes(),
        w.entries().len(),
        w.min_eigenvalue(),
        kernel_inverse_trace(&s, &w)?
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn gibbs_cmd(cfg: &RunConfig, t: f64, free: bool, export_state: bool, dm: &[usize]) -> Result<()> {
    let s = cfg.spectrum()?;
    let w = cfg.kernel()?;
    let lambda = cfg.coupling.coupling(t);
    let n_max = cfg.cutoff.n_max(&s, t)?;
    let basis = Arc::new(FockBasis::new(s.mode_count(), n_max)?);
    let g = if free {
        free_gibbs_state(&basis, &s, t)?
    } else {
        gibbs_state(&hamiltonian(&basis, &s, &w, lambda)?, t)?
    };
    let dir = &cfg.output.dir;
    let summary = json!({
        "temperature": t,
        "coupling": if free { 0.0 } else { lambda },
        "n_max": n_max,
        "dim": basis.dim(),
        "log_partition": g.log_partition(),
        "energy": g.energy(),
        "free_energy": g.free_energy(),
        "entropy": g.state().entropy(),
        "mean_particles": g.state().number_moment(1),
        "tail_certificate": g.tail_certificate(),
        "sector_probabilities": g.state().sector_probabilities(),
    });
    let path = write_json(dir, "gibbs.json", &summary)?;
    println!(
        "T = {t}, λ = {}, N_max = {n_max}, log Z = {:.12e}, tail = {:.3e}",
        if free { 0.0 } else { lambda },
        g.log_partition(),
        g.tail_certificate()
    );
    println!("wrote {}", path.display());
    if export_state {
        let p = write_json(dir, "state.json", &g.state().export())?;
        println!("wrote {}", p.display());
    }
    for &k in dm {
        let m = g.state().reduced_density_matrix(k)?;
        let p = write_json(dir, &format!("gibbs_dm{k}.json"), &m.export()?)?;
        println!("tr Γ^({k}) = {:.12e}; wrote {}", m.trace(), p.display());
    }
    Ok(())
}

fn classical_cmd(cfg: &RunConfig, dm: &[usize]) -> Result<()> {
    let s = cfg.spectrum()?;
    let w = cfg.kernel()?;
    let model = ClassicalModel::new(&s, &w, cfg.interaction_convention)?;
    let z = model.relative_partition_mc(&cfg.classical)?;
    let v = model.variational_identity(&cfg.classical, cfg.secondary_seed)?;
    let dir = &cfg.output.dir;
    println!("z_r = {:.8} ± {:.2e} ({} samples, seed {})", z.value, z.stderr, z.n_samples, z.seed);
    println!(
        "H(μ,μ0) = {:.6e}, ∫F dμ = {:.6e}, log z_r = {:.6e}, residual = {:.2e} ± {:.2e}",
        v.relative_entropy, v.mean_interaction, v.log_z_r, v.residual, v.residual_stderr
    );
    let mut gammas = Vec::new();
    for &k in dm {
        let g = model.gamma_k_mc(k, &cfg.classical)?;
        gammas.push(json!({
            "k": k,
            "matrix": g.matrix.export()?,
            "trace_norm_stderr": g.trace_norm_stderr(),
            "effective_sample_size": g.effective_sample_size,
            "ess_warning": g.ess_warning,
        }));
        if g.ess_warning {
            eprintln!("warning: effective sample size {:.0} below the floor", g.effective_sample_size);
        }
    }
    let path = write_json(
        dir,
        "classical.json",
        &json!({"z_r": z, "variational_identity": v, "density_matrices": gammas}),
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn finish<R: Serialize + TableRow>(cfg: &RunConfig, report: ConvergenceReport<R>) -> Result<()> {
    let (json_path, csv_path) = report.write(&cfg.output.dir, &cfg.output_stem(&report.campaign))?;
    for a in &report.aborted {
        eprintln!("row T = {} aborted: {}", a.temperature, a.reason);
    }
    for t in &report.trends {
        println!(
            "{:<28} strictly decreasing: {:<5}  within 3σ: {:<5}  final/initial: {:.4}",
            t.name, t.strictly_decreasing, t.decreasing_within_uncertainty, t.final_over_initial
        );
        let values: Vec<String> = t.values.iter().map(|v| format!("{v:.4e}")).collect();
        println!("    {}", values.join("  "));
    }
    println!("wrote {} and {}", json_path.display(), csv_path.display());
    Ok(())
}

fn print_checks(checks: &[CheckOutcome]) {
    for c in checks {
        println!(
            "{} [{}] {}: {:.3e} (threshold {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.group,
            c.name,
            c.value,
            c.threshold
        );
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = load_config(&cli.global)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| LabError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Spectrum { p } => spectrum_cmd(&cfg, &p)?,
        Command::Kernel => kernel_cmd(&cfg)?,
        Command::Gibbs {
            temperature,
            free,
            export_state,
            dm,
        } => gibbs_cmd(&cfg, temperature, free, export_state, &dm)?,
        Command::Classical { dm } => classical_cmd(&cfg, &dm)?,
        Command::Converge { campaign } => match campaign {
            Campaign::Partition => finish(&cfg, run_partition_convergence(&cfg)?)?,
            Campaign::Dm => finish(&cfg, run_dm_convergence(&cfg)?)?,
            Campaign::Husimi => finish(&cfg, run_husimi_convergence(&cfg)?)?,
            Campaign::Proofsteps => finish(&cfg, run_proof_step_suite(&cfg)?)?,
        },
        Command::Check { quick } => {
            let mut bc = BatteryConfig::default();
            if quick {
                bc.husimi_samples = 50_000;
                bc.classical_samples = 200_000;
            }
            if let Some(seed) = cli.global.seed {
                bc.seed = seed;
            }
            let checks = run_battery(&bc)?;
            print_checks(&checks);
            let path = write_json(&cfg.output.dir, "check.json", &checks)?;
            println!("wrote {}", path.display());
            return Ok(checks.iter().all(|c| c.pass));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
