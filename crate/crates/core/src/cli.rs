//! Command-line harness: builds thermal probes, runs integrations, sweeps the
//! field, validates against the spectral closed forms, and emits plot-ready
//! CSV/JSON artifacts.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{error::ErrorKind, Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bounds::{slowest_pair_rate, von_neumann_entropy, worst_case_bound};
use crate::error::{Error, Result};
use crate::lyapunov::{
    integrate_encoding_variant, integrate_qfi, DenseBackend, IntegrationConfig, IntegrationTrace,
    MpoBackend, Quadrature, StepMode, TraceRow, Variant,
};
use crate::mpo::{load_mpo, save_mpo, TruncationPolicy, MAX_DENSE_SITES};
use crate::operator::{spectral_decompose, DenseOperator};
use crate::oracle::{
    qfi_error_exact, qfi_exact, qfi_truncated_exact, sld_exact, variational_merit,
    SpectralQfiInput,
};
use crate::probes::{
    encode_dense, encode_mpo, encoding_generator_dense, encoding_generator_mpo, gap_report,
    state_derivative_dense, state_derivative_mpo, tfim_hamiltonian_dense, thermal_probe_dense,
    thermal_probe_mpo, ProbeSpec, DEFAULT_DBETA,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_MANIFEST: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Dense,
    Mpo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuadratureArg {
    Lower,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantArg {
    Integrand,
    Encoding,
}

/// Flag set shared by all subcommands; every field is optional so a JSON
/// config file with the same shape can supply defaults, with flags overriding.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub j: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub g: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub backend: Option<BackendKind>,
    #[arg(long = "x-max")]
    pub x_max: Option<f64>,
    /// Fixed step size; mutually exclusive with --adaptive-tol.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long = "adaptive-tol")]
    pub adaptive_tol: Option<f64>,
    #[arg(long)]
    pub quadrature: Option<QuadratureArg>,
    #[arg(long = "tail-window")]
    pub tail_window: Option<f64>,
    #[arg(long = "max-bond-rho")]
    pub max_bond_rho: Option<usize>,
    #[arg(long = "max-bond-omega")]
    pub max_bond_omega: Option<usize>,
    #[arg(long = "sv-cutoff")]
    pub sv_cutoff: Option<f64>,
    #[arg(long = "dynamic-eps")]
    pub dynamic_eps: Option<f64>,
    #[arg(long)]
    pub variant: Option<VariantArg>,
    /// Trace CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Summary JSON path; stdout when omitted.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trotter step for MPO thermal preparation.
    #[arg(long)]
    pub dbeta: Option<f64>,
    /// Thermal-state MPO checkpoint: loaded when present, written otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

macro_rules! overlay_fields {
    ($base:ident, $over:ident; $($f:ident),* $(,)?) => {
        RunArgs { $($f: $over.$f.or($base.$f)),* }
    };
}

impl RunArgs {
    /// Field-wise merge with `over` taking precedence.
    pub fn overlay(self, over: RunArgs) -> RunArgs {
        overlay_fields!(
            self, over;
            model, n, j, g, beta, theta, backend, x_max, step, adaptive_tol, quadrature,
            tail_window, max_bond_rho, max_bond_omega, sv_cutoff, dynamic_eps, variant,
            out, summary, seed, dbeta, checkpoint,
        )
    }
}

/// Fully resolved run description; echoed verbatim into summary JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub model: String,
    pub probe: ProbeSpec,
    pub backend: BackendKind,
    pub integration: IntegrationConfig,
    /// Truncation for thermal preparation and propagator construction.
    pub rho_policy: TruncationPolicy,
    pub dbeta: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

pub fn build_manifest(args: &RunArgs) -> Result<RunManifest> {
    let model = args.model.clone().unwrap_or_else(|| "tfim".into());
    if model != "tfim" {
        return Err(Error::InvalidParameter(format!(
            "unknown model '{model}', only 'tfim' is available"
        )));
    }
    let probe = ProbeSpec::new(
        args.n.unwrap_or(4),
        args.j.unwrap_or(1.0),
        args.g.unwrap_or(1.0),
        args.beta.unwrap_or(4.0),
        args.theta.unwrap_or(1.0),
    )?;
    let backend = args.backend.unwrap_or(BackendKind::Dense);
    if backend == BackendKind::Dense && probe.n > MAX_DENSE_SITES {
        return Err(Error::TooLargeForDense {
            n: probe.n,
            limit: MAX_DENSE_SITES,
        });
    }
    let step_mode = match (args.step, args.adaptive_tol) {
        (Some(_), Some(_)) => {
            return Err(Error::InvalidParameter(
                "--step and --adaptive-tol are mutually exclusive".into(),
            ))
        }
        (_, Some(tau)) => StepMode::Adaptive {
            tau,
            ds_init: 1e-3,
            ds_min: 1e-10,
            ds_max: 1.0,
        },
        (ds, None) => StepMode::Fixed {
            ds: ds.unwrap_or(0.01),
        },
    };
    let sv_cutoff = args.sv_cutoff.unwrap_or(1e-12);
    let integration = IntegrationConfig {
        x_max: args.x_max.unwrap_or(10.0),
        step_mode,
        quadrature: match args.quadrature.unwrap_or(QuadratureArg::Lower) {
            QuadratureArg::Lower => Quadrature::Lower,
            QuadratureArg::Trapezoid => Quadrature::Trapezoid,
        },
        truncation: TruncationPolicy::new(sv_cutoff, args.max_bond_omega.unwrap_or(64)),
        dynamic_eps: args.dynamic_eps,
        tail_window: args.tail_window.unwrap_or(10.0),
        accumulate_sld: false,
        variant: match args.variant.unwrap_or(VariantArg::Integrand) {
            VariantArg::Integrand => Variant::Integrand,
            VariantArg::Encoding => Variant::EncodingOperator,
        },
    };
    integration.validate()?;
    let manifest = RunManifest {
        model,
        probe,
        backend,
        integration,
        rho_policy: TruncationPolicy::new(sv_cutoff, args.max_bond_rho.unwrap_or(32)),
        dbeta: args.dbeta.unwrap_or(DEFAULT_DBETA),
        seed: args.seed.unwrap_or(0),
        out: args.out.clone(),
        summary: args.summary.clone(),
        checkpoint: args.checkpoint.clone(),
    };
    Ok(manifest)
}

/// CSV rendering with the fixed column contract.
pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("s,ds,dF,F_cum,max_bond,sv_cutoff,discarded_weight,wall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.s, r.ds, r.d_f, r.f_cum, r.max_bond, r.sv_cutoff, r.discarded_weight, r.wall_ms
        ));
    }
    out
}

pub fn summary_json(manifest: &RunManifest, trace: &IntegrationTrace) -> serde_json::Value {
    json!({
        "F_X": trace.f_num,
        "tail_a": trace.tail.map(|t| t.a),
        "tail_b": trace.tail.map(|t| t.b),
        "F_tail": trace.tail.map(|t| t.delta_f),
        "F_total": trace.f_total(),
        "config": manifest,
        "warnings": trace.warnings,
    })
}

fn dense_probe_state(manifest: &RunManifest) -> Result<(DenseOperator, DenseOperator, DenseOperator)> {
    let probe = &manifest.probe;
    let rho0 = thermal_probe_dense(probe)?;
    let rho = encode_dense(&rho0, probe.theta, probe.n)?;
    let a = encoding_generator_dense(probe.n);
    let drho = state_derivative_dense(&rho, &a)?;
    Ok((rho, drho, a))
}

/// Runs the configured integration and returns its trace; the QFI comes from
/// `IntegrationTrace::f_num` / `f_total`.
pub fn run_qfi(manifest: &RunManifest) -> Result<IntegrationTrace> {
    let config = &manifest.integration;
    match manifest.backend {
        BackendKind::Dense => {
            let (rho, drho, a) = dense_probe_state(manifest)?;
            let mut backend = DenseBackend::new(&rho, &drho, Some(&a))?;
            let trace = match config.variant {
                Variant::Integrand => integrate_qfi(&mut backend, config)?.1,
                Variant::EncodingOperator => {
                    integrate_encoding_variant(&mut backend, config)?.3
                }
            };
            Ok(trace)
        }
        BackendKind::Mpo => {
            let probe = &manifest.probe;
            let rho0 = match &manifest.checkpoint {
                Some(path) if path.exists() => load_mpo(path)?,
                maybe_path => {
                    let built = thermal_probe_mpo(probe, manifest.dbeta, &manifest.rho_policy)?;
                    if let Some(path) = maybe_path {
                        save_mpo(path, &built)?;
                    }
                    built
                }
            };
            let rho = encode_mpo(&rho0, probe.theta);
            let a = encoding_generator_mpo(probe.n)?;
            // commutator needs the wider integrand bond, not the rho bond
            let drho = state_derivative_mpo(&rho, &a, &config.truncation)?;
            let mut backend =
                MpoBackend::new(rho, drho, Some(a), manifest.rho_policy);
            let trace = match config.variant {
                Variant::Integrand => integrate_qfi(&mut backend, config)?.1,
                Variant::EncodingOperator => {
                    integrate_encoding_variant(&mut backend, config)?.3
                }
            };
            Ok(trace)
        }
    }
}

/// Spectrum report: thermal eigenvalue head, gap data, entropy, and the
/// two-level ground-population estimate against the exact one.
pub fn cmd_probe(manifest: &RunManifest) -> Result<serde_json::Value> {
    let probe = &manifest.probe;
    if probe.n > MAX_DENSE_SITES {
        return Err(Error::TooLargeForDense {
            n: probe.n,
            limit: MAX_DENSE_SITES,
        });
    }
    let h = tfim_hamiltonian_dense(probe)?;
    let h_dec = spectral_decompose(&h)?;
    let report = gap_report(&h_dec.eigenvalues, probe.beta, probe.couplings().0)?;
    let rho = thermal_probe_dense(probe)?;
    let rho_dec = spectral_decompose(&rho)?;
    let spectrum = rho_dec.eigenvalues.as_slice().expect("contiguous");
    let head: Vec<f64> = spectrum.iter().take(16).cloned().collect();
    Ok(json!({
        "eigenvalue_head": head,
        "gap": report.gap,
        "m": report.m,
        "n_excited": report.n_excited,
        "S": von_neumann_entropy(spectrum),
        "lambda_gs_formula": report.gs_population,
        "lambda_gs_exact": report.exact_gs_population,
        "config": manifest,
    }))
}

pub struct QfiArtifacts {
    pub csv: String,
    pub summary: serde_json::Value,
}

pub fn cmd_qfi(manifest: &RunManifest) -> Result<QfiArtifacts> {
    let trace = run_qfi(manifest)?;
    Ok(QfiArtifacts {
        csv: trace_to_csv(&trace.rows),
        summary: summary_json(manifest, &trace),
    })
}

/// One row per sweep point: truncated and tail-augmented QFI plus the
/// relative oracle error when a dense reference is available.
pub fn cmd_sweep(manifest: &RunManifest, g_list: &[f64]) -> Result<String> {
    if g_list.is_empty() {
        return Err(Error::InvalidParameter("empty field sweep list".into()));
    }
    let mut csv = String::from("g,F_X,F_total,eps_oracle\n");
    for &g in g_list {
        let mut point = manifest.clone();
        point.probe.g = g;
        let trace = run_qfi(&point)?;
        let eps = if point.probe.n <= MAX_DENSE_SITES {
            let (rho, drho, _) = dense_probe_state(&point)?;
            let input = SpectralQfiInput::from_state(&rho, &drho)?;
            let f_oracle = qfi_exact(&input)?;
            if f_oracle > 0.0 {
                Some((f_oracle - trace.f_total()) / f_oracle)
            } else {
                None
            }
        } else {
            None
        };
        csv.push_str(&format!(
            "{},{},{},{}\n",
            g,
            trace.f_num,
            trace.f_total(),
            eps.map_or(String::new(), |e| e.to_string())
        ));
    }
    Ok(csv)
}

fn check(name: &str, ok: bool, failures: &mut Vec<String>) {
    if ok {
        println!("PASS {name}");
    } else {
        println!("FAIL {name}");
        failures.push(name.to_string());
    }
}

/// Verifies that every accepted row underestimates the closed-form truncated
/// QFI. `use_upper_rule` rebuilds the cumulative sum with the wrong
/// (left-endpoint) quadrature as a negative control; that rule overestimates
/// a decaying integrand and must fail the check.
pub(crate) fn lower_bound_rows_hold(use_upper_rule: bool) -> Result<bool> {
    let probe = ProbeSpec::new(4, 1.0, 2.0, 4.0, 0.0)?;
    let rho = thermal_probe_dense(&probe)?;
    let a = encoding_generator_dense(probe.n);
    let drho = state_derivative_dense(&rho, &a)?;
    let input = SpectralQfiInput::from_state(&rho, &drho)?;
    let mut backend = DenseBackend::new(&rho, &drho, None)?;
    let config = IntegrationConfig::fixed(5.0, 0.05);
    let (_, trace) = integrate_qfi(&mut backend, &config)?;
    let mut df_prev = crate::oracle::qfi_integrand_exact(&input, 0.0);
    let mut f_check = 0.0;
    for row in &trace.rows {
        f_check += 2.0 * row.ds * if use_upper_rule { df_prev } else { row.d_f };
        df_prev = row.d_f;
        let exact = qfi_truncated_exact(&input, row.s)?;
        if f_check > exact + 1e-9 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn oracle_equivalence_holds() -> Result<bool> {
    for n in [2usize, 4] {
        for g in [1.0, 2.0] {
            let probe = ProbeSpec::new(n, 1.0, g, 4.0, 0.0)?;
            let rho = thermal_probe_dense(&probe)?;
            let a = encoding_generator_dense(n);
            let drho = state_derivative_dense(&rho, &a)?;
            let input = SpectralQfiInput::from_state(&rho, &drho)?;
            let f_oracle = qfi_exact(&input)?;
            let mut backend = DenseBackend::new(&rho, &drho, None)?;
            let config = IntegrationConfig::adaptive(50.0, 1e-4);
            let (_, trace) = integrate_qfi(&mut backend, &config)?;
            if ((f_oracle - trace.f_total()) / f_oracle).abs() > 5e-3 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn worst_case_bound_holds() -> Result<bool> {
    for g in [1.0, 2.0] {
        let probe = ProbeSpec::new(4, 1.0, g, 4.0, 0.0)?;
        let rho = thermal_probe_dense(&probe)?;
        let dec = spectral_decompose(&rho)?;
        let a_eig = dec.rotate_into_eigenbasis(&encoding_generator_dense(probe.n));
        let f_inf = qfi_error_exact(&dec.eigenvalues, &a_eig, 0.0);
        let d = dec.eigenvalues.len();
        let mut offdiag = 0.0;
        for i in 0..d {
            for jj in 0..d {
                if i != jj {
                    offdiag += a_eig[[i, jj]].norm_sqr();
                }
            }
        }
        let rate = slowest_pair_rate(dec.eigenvalues.as_slice().expect("contiguous"))?.min(1.0);
        let mut x = 0.1;
        while x <= 100.0 {
            let exact = qfi_error_exact(&dec.eigenvalues, &a_eig, x) / f_inf;
            if worst_case_bound(offdiag, f_inf, rate, x)? < exact - 1e-12 {
                return Ok(false);
            }
            x *= 1.5;
        }
    }
    Ok(true)
}

fn cross_backend_holds(dbeta: f64) -> Result<bool> {
    let probe = ProbeSpec::new(4, 1.0, 2.0, 4.0, 0.0)?;
    let dense = thermal_probe_dense(&probe)?;
    let policy = TruncationPolicy::new(1e-12, 256);
    let mpo = thermal_probe_mpo(&probe, dbeta, &policy)?;
    let dist = mpo.to_dense()?.frobenius_dist(&dense)?;
    Ok(dist <= 1e-5)
}

fn variational_merit_holds() -> Result<bool> {
    let probe = ProbeSpec::new(4, 1.0, 2.0, 4.0, 0.0)?;
    let rho = thermal_probe_dense(&probe)?;
    let a = encoding_generator_dense(probe.n);
    let drho = state_derivative_dense(&rho, &a)?;
    let input = SpectralQfiInput::from_state(&rho, &drho)?;
    let f = qfi_exact(&input)?;
    let l = sld_exact(&input)?;
    let merit = variational_merit(&rho, &drho, &l)?;
    Ok((merit - f).abs() <= 1e-10 * f.max(1.0))
}

fn pure_state_decay_holds(seed: u64) -> Result<bool> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = 3usize;
    let dim = 1usize << n;
    for _ in 0..3 {
        // random 3-qubit pure state
        let mut psi: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut psi {
            *z /= norm;
        }
        let mut mat: Array2<C64> = Array2::zeros((dim, dim));
        for b in 0..dim {
            for k in 0..dim {
                mat[[b, k]] = psi[b] * psi[k].conj();
            }
        }
        let rho = DenseOperator::hermitian(mat)?;
        let a = encoding_generator_dense(n);
        let drho = state_derivative_dense(&rho, &a)?;
        let input = SpectralQfiInput::from_state(&rho, &drho)?;
        let f_inf = qfi_exact(&input)?;
        for x in [1.0, 5.0] {
            let eps = (f_inf - qfi_truncated_exact(&input, x)?) / f_inf;
            if (eps - (-x).exp()).abs() > 1e-6 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Oracle-equivalence and bound-validity suite at small N; any failed check
/// makes the command exit nonzero.
pub fn cmd_validate(manifest: &RunManifest) -> Result<bool> {
    let mut failures = Vec::new();
    check("oracle-equivalence", oracle_equivalence_holds()?, &mut failures);
    check("lower-bound-rows", lower_bound_rows_hold(false)?, &mut failures);
    check("worst-case-bound", worst_case_bound_holds()?, &mut failures);
    check("cross-backend-thermal", cross_backend_holds(1e-3)?, &mut failures);
    check("variational-merit", variational_merit_holds()?, &mut failures);
    check(
        "pure-state-decay",
        pure_state_decay_holds(manifest.seed)?,
        &mut failures,
    );
    Ok(failures.is_empty())
}

#[derive(Debug, Parser)]
#[command(name = "lyapqfi", version, about = "QFI/SLD via truncated Lyapunov integration")]
struct Cli {
    /// JSON file mirroring the run flags; explicit flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectrum, gap, and entropy report for the configured probe.
    Probe(RunArgs),
    /// Integrate the QFI and emit trace CSV plus summary JSON.
    Qfi(RunArgs),
    /// Repeat the QFI run over a list of transverse fields.
    Sweep(SweepArgs),
    /// Run the built-in oracle and bound validation suite.
    Validate(RunArgs),
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated transverse fields in units of J.
    #[arg(long = "g-list", value_delimiter = ',', allow_hyphen_values = true)]
    g_list: Vec<f64>,
}

fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_)
        | Error::DimMismatch { .. }
        | Error::TooLargeForDense { .. }
        | Error::Io(_)
        | Error::Serde(_)
        | Error::BadCheckpoint(_) => EXIT_MANIFEST,
        _ => EXIT_NUMERICAL,
    }
}

fn load_config(path: Option<&PathBuf>) -> Result<RunArgs> {
    match path {
        None => Ok(RunArgs::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn write_or_print(path: Option<&PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<i32> {
    let file_args = load_config(cli.config.as_ref())?;
    match cli.command {
        Command::Probe(args) => {
            let manifest = build_manifest(&file_args.overlay(args))?;
            let report = cmd_probe(&manifest)?;
            let text = format!("{}\n", serde_json::to_string_pretty(&report)?);
            write_or_print(manifest.summary.as_ref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Qfi(args) => {
            let manifest = build_manifest(&file_args.overlay(args))?;
            let artifacts = cmd_qfi(&manifest)?;
            if manifest.out.is_some() {
                write_or_print(manifest.out.as_ref(), &artifacts.csv)?;
            }
            let text = format!("{}\n", serde_json::to_string_pretty(&artifacts.summary)?);
            write_or_print(manifest.summary.as_ref(), &text)?;
            Ok(EXIT_OK)
        }
        Command::Sweep(args) => {
            let manifest = build_manifest(&file_args.overlay(args.run))?;
            let csv = cmd_sweep(&manifest, &args.g_list)?;
            write_or_print(manifest.out.as_ref(), &csv)?;
            Ok(EXIT_OK)
        }
        Command::Validate(args) => {
            let manifest = build_manifest(&file_args.overlay(args))?;
            if cmd_validate(&manifest)? {
                Ok(EXIT_OK)
            } else {
                Ok(EXIT_VALIDATION)
            }
        }
    }
}

/// Binary entry point, separated from `main` so tests can drive it with an
/// argv of their choice. Returns the process exit code.
pub fn main_entry<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    if let Ok(threads) = std::env::var("LYAPQFI_THREADS") {
        // cap BLAS/OpenMP pools before any numerical work spins them up
        std::env::set_var("OPENBLAS_NUM_THREADS", &threads);
        std::env::set_var("OMP_NUM_THREADS", &threads);
    }
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_MANIFEST,
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args_from_json(text: &str) -> RunArgs {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn overlay_prefers_cli() {
        let file = args_from_json(r#"{"n": 6, "g": 0.5, "beta": 2.0}"#);
        let cli = RunArgs {
            g: Some(2.0),
            ..Default::default()
        };
        let merged = file.overlay(cli);
        assert_eq!(merged.n, Some(6));
        assert_eq!(merged.g, Some(2.0));
        assert_eq!(merged.beta, Some(2.0));
    }

    #[test]
    fn manifest_defaults() {
        let m = build_manifest(&RunArgs::default()).unwrap();
        assert_eq!(m.model, "tfim");
        assert_eq!(m.probe.n, 4);
        assert_eq!(m.backend, BackendKind::Dense);
        assert_eq!(m.integration.quadrature, Quadrature::Lower);
        assert!(matches!(m.integration.step_mode, StepMode::Fixed { .. }));
    }

    #[test]
    fn manifest_rejects_bad_inputs() {
        let big = RunArgs {
            n: Some(20),
            ..Default::default()
        };
        assert!(matches!(
            build_manifest(&big),
            Err(Error::TooLargeForDense { .. })
        ));
        let both = RunArgs {
            step: Some(0.1),
            adaptive_tol: Some(1e-3),
            ..Default::default()
        };
        assert!(build_manifest(&both).is_err());
        let model = RunArgs {
            model: Some("heisenberg".into()),
            ..Default::default()
        };
        assert!(build_manifest(&model).is_err());
    }

    #[test]
    fn csv_header_contract() {
        let csv = trace_to_csv(&[]);
        assert_eq!(
            csv,
            "s,ds,dF,F_cum,max_bond,sv_cutoff,discarded_weight,wall_ms\n"
        );
    }

    #[test]
    fn probe_report_examples() {
        let base = RunArgs {
            n: Some(4),
            g: Some(2.0),
            beta: Some(4.0),
            ..Default::default()
        };
        let report = cmd_probe(&build_manifest(&base).unwrap()).unwrap();
        assert!(report["gap"].as_f64().unwrap() > 0.0);
        assert_eq!(report["m"].as_u64().unwrap(), 1);

        let degenerate = RunArgs {
            n: Some(4),
            g: Some(0.0),
            beta: Some(4.0),
            ..Default::default()
        };
        let report = cmd_probe(&build_manifest(&degenerate).unwrap()).unwrap();
        assert_eq!(report["m"].as_u64().unwrap(), 2);

        let hot = RunArgs {
            n: Some(4),
            g: Some(2.0),
            beta: Some(0.0),
            ..Default::default()
        };
        let report = cmd_probe(&build_manifest(&hot).unwrap()).unwrap();
        let s = report["S"].as_f64().unwrap();
        approx::assert_relative_eq!(s, 4.0 * std::f64::consts::LN_2, max_relative = 1e-12);
    }

    #[test]
    fn qfi_zero_cutoff() {
        let args = RunArgs {
            x_max: Some(0.0),
            ..Default::default()
        };
        let artifacts = cmd_qfi(&build_manifest(&args).unwrap()).unwrap();
        assert_eq!(artifacts.summary["F_X"].as_f64().unwrap(), 0.0);
        assert_eq!(artifacts.summary["F_total"].as_f64().unwrap(), 0.0);
    }

    #[test]
    fn qfi_dense_matches_oracle() {
        let args = RunArgs {
            n: Some(4),
            g: Some(2.0),
            beta: Some(4.0),
            theta: Some(0.3),
            adaptive_tol: Some(1e-4),
            x_max: Some(50.0),
            ..Default::default()
        };
        let manifest = build_manifest(&args).unwrap();
        let artifacts = cmd_qfi(&manifest).unwrap();
        let f_total = artifacts.summary["F_total"].as_f64().unwrap();
        let (rho, drho, _) = dense_probe_state(&manifest).unwrap();
        let input = SpectralQfiInput::from_state(&rho, &drho).unwrap();
        let f_oracle = qfi_exact(&input).unwrap();
        assert!(((f_oracle - f_total) / f_oracle).abs() <= 5e-3);
    }

    #[test]
    fn summary_keys_present() {
        let args = RunArgs {
            x_max: Some(2.0),
            ..Default::default()
        };
        let manifest = build_manifest(&args).unwrap();
        let artifacts = cmd_qfi(&manifest).unwrap();
        for key in ["F_X", "tail_a", "tail_b", "F_tail", "F_total", "config", "warnings"] {
            assert!(artifacts.summary.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn sweep_empty_and_determinism() {
        let manifest = build_manifest(&RunArgs {
            n: Some(3),
            x_max: Some(2.0),
            step: Some(0.05),
            ..Default::default()
        })
        .unwrap();
        assert!(cmd_sweep(&manifest, &[]).is_err());
        let first = cmd_sweep(&manifest, &[0.5, 1.0, 2.0]).unwrap();
        let second = cmd_sweep(&manifest, &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(first, second);
        assert!(first.starts_with("g,F_X,F_total,eps_oracle\n"));
        assert_eq!(first.lines().count(), 4);
    }

    #[test]
    fn mpo_backend_with_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("rho.mpo");
        let args = RunArgs {
            n: Some(3),
            g: Some(2.0),
            beta: Some(1.0),
            backend: Some(BackendKind::Mpo),
            x_max: Some(1.0),
            step: Some(0.05),
            dbeta: Some(0.01),
            checkpoint: Some(ckpt.clone()),
            ..Default::default()
        };
        let manifest = build_manifest(&args).unwrap();
        let first = cmd_qfi(&manifest).unwrap();
        assert!(ckpt.exists());
        // second run loads the checkpoint and must agree
        let second = cmd_qfi(&manifest).unwrap();
        approx::assert_relative_eq!(
            first.summary["F_X"].as_f64().unwrap(),
            second.summary["F_X"].as_f64().unwrap(),
            max_relative = 1e-12
        );
        // and agrees with the dense backend
        let dense = cmd_qfi(
            &build_manifest(&RunArgs {
                backend: Some(BackendKind::Dense),
                checkpoint: None,
                ..args
            })
            .unwrap(),
        )
        .unwrap();
        approx::assert_relative_eq!(
            first.summary["F_X"].as_f64().unwrap(),
            dense.summary["F_X"].as_f64().unwrap(),
            max_relative = 1e-3
        );
    }

    #[test]
    fn negative_control_fails_lower_bound() {
        // the wrong (overestimating) quadrature must break the check
        assert!(lower_bound_rows_hold(false).unwrap());
        assert!(!lower_bound_rows_hold(true).unwrap());
    }

    #[test]
    fn entry_point_exit_codes() {
        let code = main_entry(["lyapqfi", "qfi", "--n", "20", "--backend", "dense", "--x-max", "1"]);
        assert_eq!(code, EXIT_MANIFEST);
        let code = main_entry(["lyapqfi", "--help"]);
        assert_eq!(code, EXIT_OK);
        let code = main_entry(["lyapqfi", "nonsense"]);
        assert_eq!(code, EXIT_MANIFEST);
    }

    #[test]
    fn config_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.json");
        std::fs::write(&cfg, r#"{"n": 3, "g": 2.0, "x_max": 1.0, "step": 0.1}"#).unwrap();
        let out = dir.path().join("trace.csv");
        let summary = dir.path().join("summary.json");
        let code = main_entry([
            "lyapqfi".to_string(),
            "qfi".into(),
            "--config".into(),
            cfg.display().to_string(),
            "--g".into(),
            "1.5".into(),
            "--out".into(),
            out.display().to_string(),
            "--summary".into(),
            summary.display().to_string(),
        ]);
        assert_eq!(code, EXIT_OK);
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("s,ds,dF,F_cum"));
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
        // flag overrides the config file value
        assert_eq!(parsed["config"]["probe"]["g"].as_f64().unwrap(), 1.5);
        assert_eq!(parsed["config"]["probe"]["n"].as_u64().unwrap(), 3);
    }
}
