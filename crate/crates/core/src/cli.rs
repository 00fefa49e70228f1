//! Command-line frontend. Exit codes: 0 success, 1 numerical failure,
//! 2 usage or configuration error.

use std::ffi::OsString;
use std::fmt::Write;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_convolution, exterior_load, Discretization};
use crate::config::ProblemConfig;
use crate::error::{NonlocalError, Result};
use crate::kernels::{AssumptionReport, Kernel, KernelConstants};
use crate::mesh::{Mesh, MeshStats};
use crate::quadrature::QuadConfig;
use crate::solve::{self, EigenMethod, GeneralProblem};
use crate::verify::{run_suite, Quantity};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nonlocal", version, about = "Nonlocal operators of small order: assembly, spectra, Poisson problems and property checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Fractional,
    LogLaplacian,
    LogSchrodinger,
    TruncatedPower,
    Gaussian,
    Indicator,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatrixFormat {
    Coo,
    Dense,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Constants, assumption scan and symbol spot checks of a kernel.
    KernelInfo {
        #[arg(long, value_enum, requires = "dim", required_unless_present = "descriptor")]
        kernel: Option<FamilyArg>,
        #[arg(long)]
        dim: Option<usize>,
        /// Fractional order s.
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        cutoff: Option<f64>,
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        radius: Option<f64>,
        /// Kernel descriptor as JSON text.
        #[arg(long, conflicts_with = "kernel")]
        descriptor: Option<String>,
    },
    /// Cell counts of the configured mesh.
    MeshInfo {
        #[arg(long)]
        config: PathBuf,
    },
    /// Lowest Dirichlet eigenpairs: spectrum.csv, modes.csv, summary.json.
    Eigen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solves the configured equation: solution.csv, summary.json.
    Poisson {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs the verification suite: report.json plus per-check CSV files.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the stiffness matrix.
    Matrix {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "coo")]
        format: MatrixFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of a command together with its exit code.
struct Failure {
    code: i32,
    error: NonlocalError,
}

fn usage(error: NonlocalError) -> Failure {
    Failure { code: EXIT_USAGE, error }
}

fn numerical(error: NonlocalError) -> Failure {
    let code = match error {
        NonlocalError::Config(_) | NonlocalError::Expr(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    };
    Failure { code, error }
}

/// Parses the arguments, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::KernelInfo {
            kernel,
            dim,
            s,
            sigma,
            cutoff,
            mass,
            width,
            radius,
            descriptor,
        } => {
            let k = match descriptor {
                Some(text) => {
                    let k: Kernel = serde_json::from_str(&text).map_err(|e| usage(NonlocalError::config(e.to_string())))?;
                    k.validate().map_err(usage)?;
                    k
                }
                None => {
                    let family = kernel.expect("required by the parser");
                    let dim = dim.expect("required by the parser");
                    build_kernel(family, dim, KernelArgs { s, sigma, cutoff, mass, width, radius }).map_err(usage)?
                }
            };
            let info = kernel_info(&k, &QuadConfig::default()).map_err(numerical)?;
            emit(&serde_json::to_string_pretty(&info).map_err(|e| numerical(e.into()))?);
            Ok(())
        }
        Command::MeshInfo { config } => {
            let cfg = ProblemConfig::load(&config).map_err(usage)?;
            let mesh = Mesh::build(&cfg.domain, cfg.mesh.n).map_err(usage)?;
            let stats: MeshStats = mesh.stats();
            emit(&serde_json::to_string_pretty(&stats).map_err(|e| numerical(e.into()))?);
            Ok(())
        }
        Command::Eigen { config, count, out } => {
            let cfg = ProblemConfig::load(&config).map_err(usage)?;
            let out = out.unwrap_or_else(|| cfg.output.clone());
            cmd_eigen(&cfg, count.unwrap_or(cfg.solver.count), &out)
        }
        Command::Poisson { config, out } => {
            let cfg = ProblemConfig::load(&config).map_err(usage)?;
            let out = out.unwrap_or_else(|| cfg.output.clone());
            cmd_poisson(&cfg, &out)
        }
        Command::Verify { config, out } => {
            let cfg = ProblemConfig::load(&config).map_err(usage)?;
            let out = out.unwrap_or_else(|| cfg.output.clone());
            cmd_verify(&cfg, &out)
        }
        Command::Matrix { config, format, out } => {
            let cfg = ProblemConfig::load(&config).map_err(usage)?;
            let out = out.unwrap_or_else(|| cfg.output.clone());
            let disc = Discretization::new(&cfg.domain, &cfg.kernel, cfg.mesh.n, &cfg.quadrature).map_err(numerical)?;
            let (name, text) = match format {
                MatrixFormat::Coo => ("stiffness.coo", disc.form.stiffness_coo()),
                MatrixFormat::Dense => ("stiffness.csv", disc.form.stiffness_csv()),
            };
            write_file(&out, name, &text)
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

struct KernelArgs {
    s: Option<f64>,
    sigma: Option<f64>,
    cutoff: Option<f64>,
    mass: Option<f64>,
    width: Option<f64>,
    radius: Option<f64>,
}

fn need(v: Option<f64>, flag: &str) -> Result<f64> {
    v.ok_or_else(|| NonlocalError::config(format!("missing --{flag}")))
}

fn build_kernel(family: FamilyArg, dim: usize, a: KernelArgs) -> Result<Kernel> {
    let k = match family {
        FamilyArg::Fractional => Kernel::fractional(dim, need(a.s, "s")?),
        FamilyArg::LogLaplacian => Kernel::log_laplacian(dim),
        FamilyArg::LogSchrodinger => Kernel::log_schrodinger(dim),
        FamilyArg::TruncatedPower => Kernel::truncated_power(dim, need(a.sigma, "sigma")?, need(a.cutoff, "cutoff")?),
        FamilyArg::Gaussian => Kernel::gaussian(dim, a.mass.unwrap_or(1.0), need(a.width, "width")?),
        FamilyArg::Indicator => Kernel::indicator(dim, need(a.radius, "radius")?),
    };
    k.map_err(|e| NonlocalError::config(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SymbolSample {
    pub xi: f64,
    pub symbol: Quantity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelInfo {
    pub kernel: Kernel,
    pub constants: KernelConstants,
    pub assumptions: AssumptionReport,
    pub symbol: Vec<SymbolSample>,
}

/// Frequencies of the symbol spot check.
pub const SYMBOL_FREQUENCIES: [f64; 3] = [0.5, 1.0, 2.0];

pub fn kernel_info(k: &Kernel, cfg: &QuadConfig) -> Result<KernelInfo> {
    let mut symbol = Vec::new();
    for xi in SYMBOL_FREQUENCIES {
        let mut v = vec![0.0; k.dim()];
        v[0] = xi;
        let value = k.symbol(&v, cfg).map_or(f64::NAN, |x| x);
        symbol.push(SymbolSample { xi, symbol: Quantity(value) });
    }
    Ok(KernelInfo {
        kernel: k.clone(),
        constants: k.constants(),
        assumptions: k.check_assumptions(cfg),
        symbol,
    })
}

/// Error record written to summary.json when a command fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub message: String,
    pub residual_history: Vec<Quantity>,
    pub smallest_eigenvalue: Option<Quantity>,
}

impl From<&NonlocalError> for ErrorRecord {
    fn from(e: &NonlocalError) -> Self {
        let (history, smallest) = match e {
            NonlocalError::NotConverged { history, .. } => (history.iter().map(|h| Quantity(*h)).collect(), None),
            NonlocalError::Indefinite { smallest } => (vec![], Some(Quantity(*smallest))),
            _ => (vec![], None),
        };
        Self {
            message: e.to_string(),
            residual_history: history,
            smallest_eigenvalue: smallest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSummary {
    pub status: String,
    pub kernel: String,
    pub n_dofs: usize,
    pub cell_size: Quantity,
    pub seed: u64,
    pub method: Option<EigenMethod>,
    pub iterations: usize,
    pub eigenvalues: Vec<Quantity>,
    pub residuals: Vec<Quantity>,
    pub gap: Option<Quantity>,
    pub first_is_simple: Option<bool>,
    pub min_u1_all: Option<Quantity>,
    pub min_u1_subdomain: Option<Quantity>,
    pub error: Option<ErrorRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonSummary {
    pub status: String,
    pub kernel: String,
    pub n_dofs: usize,
    pub cell_size: Quantity,
    pub seed: u64,
    pub lambda: Quantity,
    pub residual: Option<Quantity>,
    pub iterations: Option<usize>,
    pub max_norm: Option<Quantity>,
    pub l2_norm: Option<Quantity>,
    pub rhs_max_norm: Option<Quantity>,
    /// ‖u‖_∞ / (‖f‖_∞ + ‖u‖_2).
    pub boundedness_ratio: Option<Quantity>,
    pub min_u: Option<Quantity>,
    pub error: Option<ErrorRecord>,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> std::result::Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| numerical(e.into()))?;
    fs::write(dir.join(name), contents).map_err(|e| numerical(e.into()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| numerical(e.into()))?;
    write_file(dir, name, &text)
}

fn coordinate_header(dim: usize) -> &'static str {
    if dim == 1 {
        "x"
    } else {
        "x,y"
    }
}

fn cmd_eigen(cfg: &ProblemConfig, count: usize, out: &Path) -> std::result::Result<(), Failure> {
    let disc = Discretization::new(&cfg.domain, &cfg.kernel, cfg.mesh.n, &cfg.quadrature).map_err(numerical)?;
    let n = disc.form.n();
    if count > n {
        return Err(usage(NonlocalError::config(format!(
            "count {count} exceeds the {n} interior degrees of freedom"
        ))));
    }
    let mut summary = EigenSummary {
        status: "ok".into(),
        kernel: cfg.kernel.name().into(),
        n_dofs: n,
        cell_size: Quantity(disc.mesh.cell_size()),
        seed: cfg.seed,
        method: None,
        iterations: 0,
        eigenvalues: vec![],
        residuals: vec![],
        gap: None,
        first_is_simple: None,
        min_u1_all: None,
        min_u1_subdomain: None,
        error: None,
    };
    let spec = match solve::solve_eigen(&disc.form, count, &cfg.solver.eigen_options()) {
        Ok(s) => s,
        Err(e) => {
            summary.status = "error".into();
            summary.error = Some(ErrorRecord::from(&e));
            write_json(out, "summary.json", &summary)?;
            return Err(numerical(e));
        }
    };
    summary.method = Some(spec.method);
    summary.iterations = spec.iterations;
    summary.eigenvalues = spec.eigenvalues.iter().map(|v| Quantity(*v)).collect();
    summary.residuals = spec.residuals.iter().map(|v| Quantity(*v)).collect();
    summary.gap = spec.gap().map(Quantity);
    summary.first_is_simple = (spec.len() >= 2).then(|| spec.first_is_simple(None));
    if !spec.is_empty() {
        let u1 = spec.vector(0);
        summary.min_u1_all = Some(Quantity(u1.min()));
        if let Ok(sub) = disc.mesh.select_subdomain(cfg.solver.positivity_margin) {
            summary.min_u1_subdomain = Some(Quantity(sub.dofs.iter().map(|i| u1[*i]).fold(f64::INFINITY, f64::min)));
        }
    }
    let mut spectrum_csv = String::from("index,eigenvalue,residual\n");
    for (i, (l, r)) in spec.eigenvalues.iter().zip(&spec.residuals).enumerate() {
        let _ = writeln!(spectrum_csv, "{},{l:e},{r:e}", i + 1);
    }
    let dim = disc.mesh.dim();
    let mut modes = format!("cell_id,{}", coordinate_header(dim));
    for k in 1..=spec.len() {
        let _ = write!(modes, ",u_{k}");
    }
    modes.push('\n');
    for d in 0..n {
        let _ = write!(modes, "{}", disc.mesh.cell_of_dof(d));
        for x in disc.mesh.dof_center(d) {
            let _ = write!(modes, ",{x:e}");
        }
        for k in 0..spec.len() {
            let _ = write!(modes, ",{:e}", spec.vectors[(d, k)]);
        }
        modes.push('\n');
    }
    write_file(out, "spectrum.csv", &spectrum_csv)?;
    write_file(out, "modes.csv", &modes)?;
    write_json(out, "summary.json", &summary)
}

fn cmd_poisson(cfg: &ProblemConfig, out: &Path) -> std::result::Result<(), Failure> {
    let disc = Discretization::new(&cfg.domain, &cfg.kernel, cfg.mesh.n, &cfg.quadrature).map_err(numerical)?;
    let conv = match &cfg.equation.convolution {
        Some(h) => Some(assemble_convolution(&disc.mesh, h, &cfg.quadrature).map_err(usage)?),
        None => None,
    };
    let ext = match &cfg.equation.exterior {
        Some(g) => Some(exterior_load(&disc.mesh, &disc.kernel, g, &cfg.quadrature).map_err(usage)?),
        None => None,
    };
    let f = disc.sample(|x| cfg.equation.rhs.eval(x));
    let problem = GeneralProblem {
        lambda: cfg.equation.lambda,
        convolution: conv.as_ref(),
        exterior: ext.as_ref(),
    };
    let mut summary = PoissonSummary {
        status: "ok".into(),
        kernel: cfg.kernel.name().into(),
        n_dofs: disc.form.n(),
        cell_size: Quantity(disc.mesh.cell_size()),
        seed: cfg.seed,
        lambda: Quantity(cfg.equation.lambda),
        residual: None,
        iterations: None,
        max_norm: None,
        l2_norm: None,
        rhs_max_norm: Some(Quantity(f.amax())),
        boundedness_ratio: None,
        min_u: None,
        error: None,
    };
    let sol = match solve::solve_general(&disc.form, &problem, &f, cfg.solver.linear_tol) {
        Ok(s) => s,
        Err(e) => {
            summary.status = "error".into();
            summary.error = Some(ErrorRecord::from(&e));
            write_json(out, "summary.json", &summary)?;
            return Err(numerical(e));
        }
    };
    let l2 = sol.l2_norm(&disc.form.mass);
    summary.residual = Some(Quantity(sol.residual));
    summary.iterations = Some(sol.iterations);
    summary.max_norm = Some(Quantity(sol.max_norm()));
    summary.l2_norm = Some(Quantity(l2));
    summary.boundedness_ratio = Some(Quantity(sol.max_norm() / (f.amax() + l2)));
    summary.min_u = Some(Quantity(sol.u.min()));
    let mut csv = format!("cell_id,{},u\n", coordinate_header(disc.mesh.dim()));
    for d in 0..disc.form.n() {
        let _ = write!(csv, "{}", disc.mesh.cell_of_dof(d));
        for x in disc.mesh.dof_center(d) {
            let _ = write!(csv, ",{x:e}");
        }
        let _ = writeln!(csv, ",{:e}", sol.u[d]);
    }
    write_file(out, "solution.csv", &csv)?;
    write_json(out, "summary.json", &summary)
}

fn cmd_verify(cfg: &ProblemConfig, out: &Path) -> std::result::Result<(), Failure> {
    let outcome = run_suite(&cfg.suite());
    for a in &outcome.artifacts {
        write_file(out, &a.file, &a.contents)?;
    }
    let json = outcome.report.to_json().map_err(numerical)?;
    write_file(out, "report.json", &json)?;
    emit(outcome.report.table().trim_end());
    if outcome.report.passed {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NUMERICAL,
            error: NonlocalError::ToleranceNotMet {
                what: "verification suite".into(),
                residual: outcome.report.checks.iter().filter(|c| c.is_failure()).count() as f64,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_dim_is_a_usage_error() {
        assert_eq!(run(["nonlocal", "kernel-info", "--kernel", "log-laplacian"]), EXIT_USAGE);
        assert_eq!(run(["nonlocal", "kernel-info", "--kernel", "fractional", "--dim", "1"]), EXIT_USAGE);
        assert_eq!(run(["nonlocal", "kernel-info", "--descriptor", "{not json"]), EXIT_USAGE);
    }

    #[test]
    fn kernel_info_log_laplacian_constants() {
        let k = Kernel::log_laplacian(1).unwrap();
        let info = kernel_info(&k, &QuadConfig::default()).unwrap();
        assert!((info.constants.normalization - 1.0).abs() < 1e-15);
        assert!((info.constants.zero_order_shift + 1.154_431_329_803_065_8).abs() < 1e-12);
        assert_eq!(info.symbol.len(), 3);
    }
}
