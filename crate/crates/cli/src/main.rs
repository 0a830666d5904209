use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use gaugelab::field::io::{read_field, write_field};
use gaugelab::field::{ball_mask, DomainMask};
use gaugelab::fourier::riesz;
use gaugelab::gauge::{coulomb_gauge, GaugeConfig};
use gaugelab::hodge::{hodge_ball, hodge_torus};
use gaugelab::pde::{solve_gauged_system, SolverConfig, SystemInstance};
use gaugelab::rearrange::{lorentz_norm_of, LorentzSpec, Variant};
use gaugelab::verify::{read_csv, run_suite, Report, RunConfig, CSV_HEADER};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gaugelab", version, about = "Lorentz norms, Riesz transforms, Hodge splits, gauge fixing and regularity checks")]
struct Cli {
    /// Worker threads (default: all cores; GAUGELAB_THREADS overrides).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Starred,
    Double,
}

#[derive(Subcommand)]
enum Command {
    /// Lorentz norm of the pointwise magnitude of a field.
    Norms {
        field: PathBuf,
        /// Integrability; `n` means the grid dimension.
        #[arg(long)]
        p: String,
        /// Fine index; `n` or `inf` accepted.
        #[arg(long)]
        q: String,
        #[arg(long, value_enum, default_value = "starred")]
        variant: VariantArg,
    },
    /// Riesz transform along one axis.
    Riesz {
        field: PathBuf,
        #[arg(long)]
        axis: usize,
        /// Output file (default: `<stem>.riesz<axis>.fld` beside the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hodge split `F = ∇a + B`, written as `a.fld` and `b.fld`.
    Hodge {
        field: PathBuf,
        /// Dirichlet split on the ball `B(½, radius)` instead of the torus.
        #[arg(long)]
        ball: bool,
        #[arg(long, default_value_t = 0.45)]
        radius: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve the system described by an instance directory; writes `u.fld`.
    Solve {
        manifest: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coulomb gauge of a potential; writes `Q.fld` and `omega_q.fld`.
    Gauge {
        omega: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run an experiment suite and write its CSV files.
    Verify {
        config: PathBuf,
        /// Output directory (overrides the config).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Re-aggregate report CSVs found in a directory.
    Report { dir: PathBuf },
}

enum Outcome {
    Pass,
    GateFailure,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Err(e) = configure_threads(cli.threads) {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::GateFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn configure_threads(flag: Option<usize>) -> Result<()> {
    let env = match std::env::var("GAUGELAB_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().with_context(|| format!("GAUGELAB_THREADS = '{v}'"))?),
        Err(_) => None,
    };
    if let Some(t) = env.or(flag).filter(|&t| t > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    Ok(())
}

fn exponent(text: &str, n: usize) -> Result<f64> {
    match text {
        "n" => Ok(n as f64),
        "inf" | "∞" => Ok(f64::INFINITY),
        t => t.parse().with_context(|| format!("bad exponent '{t}'")),
    }
}

fn gate(pass: bool) -> Outcome {
    if pass {
        Outcome::Pass
    } else {
        Outcome::GateFailure
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Norms { field, p, q, variant } => {
            let f = read_field(&field)?;
            let n = f.grid().dim();
            let variant = match variant {
                VariantArg::Starred => Variant::Starred,
                VariantArg::Double => Variant::DoubleStarred,
            };
            let spec = LorentzSpec::new(exponent(&p, n)?, exponent(&q, n)?, variant)?;
            println!("{}", lorentz_norm_of(&f, None, &spec)?);
            Ok(Outcome::Pass)
        }
        Command::Riesz { field, axis, out } => {
            let f = read_field(&field)?;
            if axis >= f.grid().dim() {
                bail!("axis {axis} out of range for a {}-d grid", f.grid().dim());
            }
            let r = riesz(&f, axis);
            let out = out.unwrap_or_else(|| sibling(&field, &format!("riesz{axis}.fld")));
            write_field(&r, &out)?;
            println!("wrote {} (L2 {})", out.display(), r.l2_norm());
            Ok(Outcome::Pass)
        }
        Command::Hodge { field, ball, radius, out } => {
            let f = read_field(&field)?;
            let split = if ball {
                let n = f.grid().dim();
                let mask: DomainMask = ball_mask(f.grid(), &[0.5; 3][..n], radius)?;
                hodge_ball(&f, &mask, 1e-12)?
            } else {
                hodge_torus(&f)?
            };
            std::fs::create_dir_all(&out)?;
            write_field(&split.a, out.join("a.fld"))?;
            write_field(&split.b, out.join("b.fld"))?;
            println!("reconstruction {}", split.reconstruction);
            println!("solver_residual {}", split.solver_residual);
            Ok(Outcome::Pass)
        }
        Command::Solve { manifest, tolerance, out } => {
            let inst = SystemInstance::load(&manifest)?;
            let config = SolverConfig { tolerance, ..SolverConfig::default() };
            let sol = solve_gauged_system(&inst, &config)?;
            let out = out.unwrap_or_else(|| manifest.join("u.fld"));
            write_field(&sol.u, &out)?;
            println!("iterations {}", sol.iterations);
            println!("relative_residual {}", sol.relative_residual);
            println!("wrote {}", out.display());
            Ok(gate(sol.relative_residual <= tolerance))
        }
        Command::Gauge { omega, tolerance, out } => {
            let om = read_field(&omega)?;
            let res = coulomb_gauge(&om, &GaugeConfig { tolerance, ..GaugeConfig::default() })?;
            std::fs::create_dir_all(&out)?;
            write_field(res.q.field(), out.join("Q.fld"))?;
            write_field(&res.omega_q, out.join("omega_q.fld"))?;
            let d = res.diagnostics;
            println!("iterations {}", res.iterations);
            println!("div_ratio {}", d.div_ratio);
            println!("grad_q_ratio {}", d.grad_q_ratio);
            println!("orthogonality_drift {}", res.orthogonality_drift);
            Ok(gate(res.converged))
        }
        Command::Verify { config, output } => {
            let cfg = RunConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            let dir = output.or(cfg.output.clone()).unwrap_or_else(|| PathBuf::from("gaugelab-out"));
            let outcome = run_suite(&cfg);
            outcome.write(&dir)?;
            for r in &outcome.reports {
                print_report(r);
            }
            println!("wrote {}", dir.join("report.csv").display());
            Ok(gate(outcome.passed()))
        }
        Command::Report { dir } => {
            let mut reports = Vec::new();
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .with_context(|| format!("reading {}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            for path in files {
                let text = std::fs::read_to_string(&path)?;
                if text.lines().next().map(str::trim) != Some(CSV_HEADER.join(",").as_str()) {
                    continue;
                }
                reports.extend(read_csv(text.as_bytes()).with_context(|| format!("parsing {}", path.display()))?);
            }
            for r in &reports {
                print_report(r);
            }
            let failed = reports.iter().filter(|r| !r.passed()).count();
            println!("{} reports, {} failed", reports.len(), failed);
            Ok(gate(failed == 0))
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn print_report(r: &Report) {
    let gates: Vec<_> = r.gates().collect();
    let failed: Vec<_> = gates.iter().filter(|m| m.pass == Some(false)).map(|m| format!("{}={}", m.name, m.value)).collect();
    let status = if failed.is_empty() { "PASS" } else { "FAIL" };
    if failed.is_empty() {
        println!("{status} {} {} ({} gates)", r.experiment, r.instance, gates.len());
    } else {
        println!("{status} {} {} [{}]", r.experiment, r.instance, failed.join(", "));
    }
}
