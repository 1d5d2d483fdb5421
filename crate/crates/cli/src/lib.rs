//! Command-line front end: instance-file parsing, subcommand dispatch, and
//! report emission as aligned tables or JSON.
//!
//! Exit codes: 0 on success/pass, 1 on input error, 2 on an inequality
//! violation (never expected; the comparison theorem is a hard ceiling).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use momentforge::certificate::{build_certificate, CertificateReport, Verdict};
use momentforge::constants::{self, ConstantTable};
use momentforge::search::{search_extremal, SearchConfig};
use momentforge::zp::ZpBodySpec;
use momentforge::{DirectionSet, DiscreteVectorLaw, Error as CoreError, MomentInstance};
use serde::{Deserialize, Serialize};

/// Environment variable capping search parallelism (default: all cores).
pub const THREADS_ENV: &str = "MOMENTFORGE_THREADS";

#[derive(Parser)]
#[command(
    name = "momentforge",
    version,
    about = "Weak/strong moment comparison for finitely supported random vectors",
    disable_help_subcommand = true
)]
struct Cli {
    /// Emit machine-readable JSON instead of aligned tables.
    #[arg(long, global = true)]
    json: bool,

    /// Relative slack allowed before an inequality counts as violated.
    #[arg(long, global = true, default_value_t = 1e-9, allow_hyphen_values = true)]
    tolerance: f64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check an instance file's strong/weak moment ratio against the bound.
    Verify { file: PathBuf },

    /// Emit the full inequality-chain certificate for an instance file.
    Certificate { file: PathBuf },

    /// Dual-norm of a vector against the Z_p body of an instance file's law.
    Zp {
        file: PathBuf,
        /// Coordinates of the vector, comma-separated.
        #[arg(long, value_name = "v1,v2,...", allow_hyphen_values = true)]
        s: String,
    },

    /// Tabulate comparison constants over an exponent grid as CSV.
    Constants {
        #[arg(long)]
        n: usize,
        /// Exponents to tabulate, comma-separated.
        #[arg(long = "p-grid", value_name = "p1,p2,...")]
        p_grid: String,
    },

    /// Moment of a sphere marginal and the exact Euclidean p-summing constant.
    Sphere {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
    },

    /// Upper bounds on p-summing constants (identity map or finite-rank operator).
    Psumming {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        opnorm: Option<f64>,
    },

    /// Random-restart search for instances with a large strong/weak ratio.
    Search {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        restarts: usize,
        /// RNG seed; required so every run is reproducible.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-9)]
        step_tolerance: f64,
    },

    /// Built-in instances with known closed-form answers.
    #[command(subcommand)]
    Examples(ExamplesCommand),
}

#[derive(Subcommand)]
enum ExamplesCommand {
    /// Uniform law on {±e_1,…,±e_n} with the coordinate directions.
    Canonical {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
    },
}

/// A command failure: exit code plus the message printed to stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn violation(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        let code = match e {
            CoreError::StepViolation { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(e.to_string())
    }
}

/// Parse `args` and execute one subcommand, writing reports to `out` and
/// diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    0
                }
                _ => {
                    let _ = write!(err, "{e}");
                    1
                }
            }
        }
    };
    match dispatch(&cli, out) {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match &cli.command {
        Command::Verify { file } => cmd_verify(file, cli.json, cli.tolerance, out),
        Command::Certificate { file } => cmd_certificate(file, cli.json, cli.tolerance, out),
        Command::Zp { file, s } => cmd_zp(file, s, cli.json, out),
        Command::Constants { n, p_grid } => cmd_constants(*n, p_grid, cli.json, out),
        Command::Sphere { n, p } => cmd_sphere(*n, *p, cli.json, out),
        Command::Psumming {
            dim,
            p,
            rank,
            opnorm,
        } => cmd_psumming(*dim, *p, *rank, *opnorm, cli.json, out),
        Command::Search {
            n,
            p,
            k,
            l,
            restarts,
            seed,
            max_iters,
            step_tolerance,
        } => {
            let cfg = SearchConfig {
                n: *n,
                k: *k,
                l: *l,
                p: *p,
                restarts: *restarts,
                max_iters: *max_iters,
                seed: *seed,
                step_tolerance: *step_tolerance,
            };
            cmd_search(&cfg, cli.json, out)
        }
        Command::Examples(ExamplesCommand::Canonical { n, p }) => {
            cmd_canonical(*n, *p, cli.json, cli.tolerance, out)
        }
    }
}

/// On-disk instance: dimension, exponent, law atoms, and directions.
/// Emission uses shortest round-trip float text, so parse → emit → parse is
/// the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub p: f64,
    pub points: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl InstanceFile {
    pub fn from_path(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Parse with a field-path-precise error on malformed input.
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            Failure::input(format!(
                "instance parse error at field '{}': {}",
                e.path(),
                e.inner()
            ))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance files always serialize")
    }

    pub fn to_instance(&self) -> Result<MomentInstance, Failure> {
        for (i, row) in self.points.iter().enumerate() {
            if row.len() != self.n {
                return Err(Failure::input(format!(
                    "points[{i}] has length {}, expected n = {}",
                    row.len(),
                    self.n
                )));
            }
        }
        for (i, row) in self.directions.iter().enumerate() {
            if row.len() != self.n {
                return Err(Failure::input(format!(
                    "directions[{i}] has length {}, expected n = {}",
                    row.len(),
                    self.n
                )));
            }
        }
        let law = DiscreteVectorLaw::new(self.points.clone(), self.probs.clone())?;
        let dirs = DirectionSet::new(self.directions.clone())?;
        Ok(MomentInstance::new(law, dirs, self.p)?)
    }

    pub fn from_instance(inst: &MomentInstance) -> Self {
        InstanceFile {
            n: inst.law().dimension(),
            p: inst.exponent(),
            points: inst
                .law()
                .points()
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
            probs: inst.law().probs().to_vec(),
            directions: inst
                .directions()
                .directions()
                .iter()
                .map(|v| v.iter().copied().collect())
                .collect(),
        }
    }
}

#[derive(Serialize)]
struct VerifyOutput {
    weak: f64,
    strong: f64,
    ratio: f64,
    c_np: f64,
    envelope: f64,
    bound: f64,
    degenerate: bool,
    verdict: &'static str,
}

fn cmd_verify(file: &Path, json: bool, tolerance: f64, out: &mut dyn Write) -> Result<(), Failure> {
    let inst = InstanceFile::from_path(file)?.to_instance()?;
    let report = inst.ratio_report()?;
    let bound = report.c_np.min(report.envelope);
    let pass = report.ratio <= bound * (1.0 + tolerance);
    let verdict = if pass { "pass" } else { "fail" };
    if json {
        emit_json(
            out,
            &VerifyOutput {
                weak: report.weak,
                strong: report.strong,
                ratio: report.ratio,
                c_np: report.c_np,
                envelope: report.envelope,
                bound,
                degenerate: report.degenerate,
                verdict,
            },
        )?;
    } else {
        writeln!(out, "{:<14} {}", "weak moment", sig(report.weak))?;
        writeln!(out, "{:<14} {}", "strong moment", sig(report.strong))?;
        writeln!(out, "{:<14} {}", "ratio", sig(report.ratio))?;
        writeln!(out, "{:<14} {}", "c_np", sig(report.c_np))?;
        writeln!(out, "{:<14} {}", "envelope", sig(report.envelope))?;
        writeln!(out, "{:<14} {}", "bound", sig(bound))?;
        writeln!(out, "{:<14} {}", "verdict", verdict)?;
    }
    if pass {
        Ok(())
    } else {
        Err(Failure::violation(format!(
            "ratio {} exceeds bound {} beyond tolerance {tolerance}",
            report.ratio, bound
        )))
    }
}

/// Re-evaluate a certificate's verdict under a caller-chosen slack tolerance.
fn certificate_passes(report: &CertificateReport, tolerance: f64) -> bool {
    report
        .steps
        .iter()
        .all(|s| s.slack >= -tolerance * s.lhs.abs().max(s.rhs.abs()).max(1.0))
}

fn cmd_certificate(
    file: &Path,
    json: bool,
    tolerance: f64,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let inst = InstanceFile::from_path(file)?.to_instance()?;
    let mut report = build_certificate(&inst)?;
    let pass = certificate_passes(&report, tolerance);
    report.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    if json {
        emit_json(out, &report)?;
    } else {
        writeln!(
            out,
            "{:<36} {:>18} {:>18} {:>18} {:>18}",
            "step", "lhs", "rhs", "constant", "slack"
        )?;
        for step in &report.steps {
            let constant = step.constant_used.map_or("-".to_string(), sig);
            writeln!(
                out,
                "{:<36} {:>18} {:>18} {:>18} {:>18}",
                step.name,
                sig(step.lhs),
                sig(step.rhs),
                constant,
                sig(step.slack)
            )?;
        }
        writeln!(out)?;
        writeln!(out, "{:<14} {}", "final ratio", sig(report.final_ratio))?;
        writeln!(out, "{:<14} {}", "final bound", sig(report.final_bound))?;
        if report.degenerate {
            writeln!(out, "{:<14} {}", "degenerate", "true")?;
        }
        if !report.dropped_atoms.is_empty() {
            let dropped: Vec<String> =
                report.dropped_atoms.iter().map(|i| i.to_string()).collect();
            writeln!(out, "{:<14} {}", "dropped atoms", dropped.join(","))?;
        }
        writeln!(
            out,
            "{:<14} {}",
            "verdict",
            if pass { "pass" } else { "fail" }
        )?;
    }
    if pass {
        Ok(())
    } else {
        let worst = report
            .steps
            .iter()
            .map(|s| s.slack)
            .fold(f64::INFINITY, f64::min);
        Err(Failure::violation(format!(
            "certificate failed: worst step slack {worst} under tolerance {tolerance}"
        )))
    }
}

#[derive(Serialize)]
struct ZpOutput {
    /// `null` when the vector lies outside the span of the law's support.
    value: Option<f64>,
    finite: bool,
}

fn cmd_zp(file: &Path, s: &str, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let vector = parse_f64_list(s, "--s")?;
    let inst = InstanceFile::from_path(file)?.to_instance()?;
    let body = ZpBodySpec::new(inst.law().clone(), inst.exponent())?;
    if vector.len() != inst.law().dimension() {
        return Err(Failure::input(format!(
            "--s has {} coordinates, expected n = {}",
            vector.len(),
            inst.law().dimension()
        )));
    }
    let value = body.zp_norm(&vector)?;
    if json {
        emit_json(
            out,
            &ZpOutput {
                value: value.is_finite().then_some(value),
                finite: value.is_finite(),
            },
        )?;
    } else {
        writeln!(out, "{}", sig(value))?;
    }
    Ok(())
}

fn cmd_constants(n: usize, p_grid: &str, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let grid = parse_f64_list(p_grid, "--p-grid")?;
    let table = ConstantTable::build(n, &grid)?;
    if json {
        emit_json(out, &table)?;
    } else {
        write!(out, "{}", table.to_csv())?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SphereOutput {
    n: usize,
    p: f64,
    sphere_moment: f64,
    gordon_pi_p: f64,
}

fn cmd_sphere(n: usize, p: f64, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    if n < 2 {
        return Err(Failure::input(format!(
            "sphere marginals need n >= 2, got {n}"
        )));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Failure::input(format!(
            "sphere moments need a finite p >= 1, got {p}"
        )));
    }
    let moment = constants::sphere_moment(n, p);
    let pi_p = constants::gordon_pi_p(n, p);
    if json {
        emit_json(
            out,
            &SphereOutput {
                n,
                p,
                sphere_moment: moment,
                gordon_pi_p: pi_p,
            },
        )?;
    } else {
        writeln!(out, "{:<14} {}", "sphere moment", sig(moment))?;
        writeln!(out, "{:<14} {}", "pi_p exact", sig(pi_p))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PsummingOutput {
    dim: usize,
    p: f64,
    rank: Option<usize>,
    opnorm: Option<f64>,
    effective_dim: usize,
    bound: f64,
    bound_2sqrt2: f64,
}

fn cmd_psumming(
    dim: usize,
    p: f64,
    rank: Option<usize>,
    opnorm: Option<f64>,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let bound = constants::psumming_upper(dim, p, rank, opnorm)?;
    if json {
        emit_json(
            out,
            &PsummingOutput {
                dim,
                p,
                rank,
                opnorm,
                effective_dim: bound.effective_dim,
                bound: bound.bound,
                bound_2sqrt2: bound.bound_2sqrt2,
            },
        )?;
    } else {
        writeln!(out, "{:<16} {}", "effective dim", bound.effective_dim)?;
        writeln!(out, "{:<16} {}", "bound 2*sqrt(e)", sig(bound.bound))?;
        writeln!(out, "{:<16} {}", "bound 2*sqrt(2)", sig(bound.bound_2sqrt2))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SearchOutput {
    best_ratio: f64,
    bound: f64,
    fraction_of_bound: f64,
    sphere_reference: f64,
    trace: Vec<f64>,
    best_instance: InstanceFile,
}

fn cmd_search(cfg: &SearchConfig, json: bool, out: &mut dyn Write) -> Result<(), Failure> {
    let result = match thread_cap()? {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Failure::input(format!("{THREADS_ENV}: {e}")))?
            .install(|| search_extremal(cfg)),
        None => search_extremal(cfg),
    }?;
    let best_instance = InstanceFile::from_instance(&result.best_instance);
    if json {
        emit_json(
            out,
            &SearchOutput {
                best_ratio: result.best_ratio,
                bound: result.bound,
                fraction_of_bound: result.best_ratio / result.bound,
                sphere_reference: result.sphere_reference,
                trace: result.trace.clone(),
                best_instance: best_instance.clone(),
            },
        )?;
    } else {
        writeln!(out, "{:<18} {}", "best ratio", sig(result.best_ratio))?;
        writeln!(out, "{:<18} {}", "bound", sig(result.bound))?;
        writeln!(
            out,
            "{:<18} {}",
            "fraction of bound",
            sig(result.best_ratio / result.bound)
        )?;
        writeln!(
            out,
            "{:<18} {}",
            "sphere reference",
            sig(result.sphere_reference)
        )?;
        let trace: Vec<String> = result.trace.iter().map(|&v| sig(v)).collect();
        writeln!(out, "{:<18} {}", "restart trace", trace.join(","))?;
        writeln!(out, "best instance (JSON):")?;
        writeln!(out, "{}", best_instance.to_json())?;
    }
    // Hard ceiling from the comparison theorem; crossing it means a bug.
    if result.best_ratio > result.bound * (1.0 + 1e-6) {
        return Err(Failure::violation(format!(
            "search ratio {} exceeds the proven bound {}",
            result.best_ratio, result.bound
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct TailOutput {
    threshold: f64,
    tail_prob: f64,
    bound: f64,
}

#[derive(Serialize)]
struct CanonicalOutput {
    n: usize,
    p: f64,
    weak: f64,
    weak_closed_form: f64,
    strong: f64,
    ratio: f64,
    ratio_closed_form: f64,
    zp_pth_moment: f64,
    zp_closed_form: f64,
    c_np: f64,
    envelope: f64,
    tail: TailOutput,
    verdict: &'static str,
}

fn cmd_canonical(
    n: usize,
    p: f64,
    json: bool,
    tolerance: f64,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let inst = MomentInstance::canonical(n, p)?;
    let report = inst.ratio_report()?;
    let body = ZpBodySpec::new(inst.law().clone(), p)?;
    let moment = body.zp_pth_moment()?;
    let tail = body.tail_bound_check()?;
    let weak_closed = (n as f64).powf(-1.0 / p);
    let ratio_closed = (n as f64).powf(1.0 / p);
    // Ratio and moments are exact arithmetic; the dual norm goes through the
    // iterative solver, whose own agreement tolerance is the looser one.
    let ratio_ok = rel_close(report.ratio, ratio_closed, tolerance.max(1e-12));
    let zp_ok = rel_close(moment.value, ratio_closed, tolerance.max(1e-6));
    let verdict = if ratio_ok && zp_ok { "pass" } else { "fail" };
    if json {
        emit_json(
            out,
            &CanonicalOutput {
                n,
                p,
                weak: report.weak,
                weak_closed_form: weak_closed,
                strong: report.strong,
                ratio: report.ratio,
                ratio_closed_form: ratio_closed,
                zp_pth_moment: moment.value,
                zp_closed_form: ratio_closed,
                c_np: report.c_np,
                envelope: report.envelope,
                tail: TailOutput {
                    threshold: tail.threshold,
                    tail_prob: tail.tail_prob,
                    bound: tail.bound,
                },
                verdict,
            },
        )?;
    } else {
        writeln!(
            out,
            "canonical instance (n = {n}, p = {}): uniform on {{±e_i}}, coordinate directions",
            sig(p)
        )?;
        writeln!(out, "{:<18} {:>18} {:>18}", "quantity", "computed", "closed form")?;
        writeln!(
            out,
            "{:<18} {:>18} {:>18}",
            "weak moment",
            sig(report.weak),
            sig(weak_closed)
        )?;
        writeln!(
            out,
            "{:<18} {:>18} {:>18}",
            "strong moment",
            sig(report.strong),
            "1"
        )?;
        writeln!(
            out,
            "{:<18} {:>18} {:>18}",
            "moment ratio",
            sig(report.ratio),
            sig(ratio_closed)
        )?;
        writeln!(
            out,
            "{:<18} {:>18} {:>18}",
            "zp pth moment",
            sig(moment.value),
            sig(ratio_closed)
        )?;
        writeln!(out, "{:<18} {:>18}", "c_np", sig(report.c_np))?;
        writeln!(out, "{:<18} {:>18}", "envelope", sig(report.envelope))?;
        writeln!(out, "{:<18} {:>18}", "tail threshold", sig(tail.threshold))?;
        writeln!(out, "{:<18} {:>18}", "tail probability", sig(tail.tail_prob))?;
        writeln!(out, "{:<18} {:>18}", "tail bound e^-p", sig(tail.bound))?;
        writeln!(out, "{:<18} {:>18}", "verdict", verdict)?;
    }
    if verdict == "pass" {
        Ok(())
    } else {
        Err(Failure::violation(format!(
            "canonical closed forms violated: ratio {} vs {}, zp moment {} vs {}",
            report.ratio, ratio_closed, moment.value, ratio_closed
        )))
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::input(format!("serialization failed: {e}")))?;
    writeln!(out, "{text}")?;
    Ok(())
}

/// Round to 12 significant digits, then print the shortest text that
/// round-trips. Keeps tables readable and exact values exact-looking.
fn sig(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{v:.11e}").parse().expect("formatted float reparses");
    if (1e-4..1e15).contains(&rounded.abs()) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| {
            Failure::input(format!(
                "{what} must be a comma-separated list of reals, got '{text}'"
            ))
        })
}

fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn thread_cap() -> Result<Option<usize>, Failure> {
    match std::env::var(THREADS_ENV) {
        Ok(text) => {
            let threads: usize = text.trim().parse().map_err(|_| {
                Failure::input(format!(
                    "{THREADS_ENV} must be a positive integer, got '{text}'"
                ))
            })?;
            if threads == 0 {
                return Err(Failure::input(format!(
                    "{THREADS_ENV} must be a positive integer, got '{text}'"
                )));
            }
            Ok(Some(threads))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Failure::input(format!("{THREADS_ENV}: {e}"))),
    }
}
