//! `qsim`: build, sweep, vary and analyse qubit-readout circuits from the
//! command line. Every command is a pure function of its input files and
//! flags, so reruns produce byte-identical outputs.

mod config;
mod io;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use qsim_core::analysis::{analyze_spectrum, ensemble_infidelity, fidelity, rb_extract, FidelityInput, RbDensityMatrix};
use qsim_core::mna::MnaError;
use qsim_core::montecarlo::{run_ensemble, McError};
use qsim_core::netlist::{self, emit_netlist, parse_netlist, AcDirective, Dialect, Netlist};
use qsim_core::sweep::{run_sweep, Spacing, SweepError, SweepPlan};
use qsim_core::topology::{build_from_table, check_dispersive, coupling_strength, derive_elements, parameter_table};
use serde::Deserialize;
use serde_json::json;

use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "qsim", version, about = "Frequency-domain simulator for superconducting-qubit readout arrays")]
struct Cli {
    /// Experiment configuration (JSON). Missing sections use defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `variation.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 or unset uses every core.
    #[arg(long, global = true, env = "QSIM_WORKERS")]
    workers: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the configured array as a netlist and report derived values.
    Build,
    /// Sweep a netlist and write its spectrum.
    Run(RunArgs),
    /// Monte Carlo ensemble: spectra, per-run reports and an infidelity summary.
    Mc {
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Peaks, linewidths and infidelity of a spectrum file.
    Analyze {
        #[arg(long)]
        spectrum: PathBuf,
        #[arg(long, default_value = "run-0")]
        run_id: String,
    },
    /// Circuit fidelity from relaxation rates.
    Fidelity {
        #[arg(long)]
        n_qubits: u64,
        #[arg(long)]
        tau_op: f64,
        #[arg(long)]
        gamma1: f64,
        #[arg(long)]
        gamma2: Option<f64>,
    },
    /// Relaxation rates from a Bloch–Redfield density matrix.
    RbExtract {
        #[arg(long)]
        matrix: PathBuf,
        /// Overrides `t_f` in the matrix file.
        #[arg(long)]
        t_f: Option<f64>,
    },
    /// Write an LTspice deck of a netlist (or of the configured array).
    ExportLtspice {
        #[arg(long)]
        netlist: Option<PathBuf>,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Netlist to sweep; defaults to the configured array.
    #[arg(long)]
    netlist: Option<PathBuf>,
    #[arg(long)]
    f_min: Option<f64>,
    #[arg(long)]
    f_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_enum)]
    spacing: Option<SpacingArg>,
    /// Disable adaptive refinement.
    #[arg(long)]
    no_refine: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Format {
    Csv,
    Bin,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpacingArg {
    Linear,
    Log,
}

/// Error plus the exit code it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure { code: EXIT_CONFIG, err: e.into() }
    }
}

fn solver_failure(e: SweepError) -> Failure {
    let code = match e {
        SweepError::Solve { .. } | SweepError::Setup(_) => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    };
    Failure { code, err: e.into() }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Outcome {
    if let Some(n) = cli.workers.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    let (mut cfg, raw) = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.variation.seed = seed;
    }
    cfg.validate()?;
    let ctx = Ctx { cli, cfg, raw };
    match &cli.command {
        Command::Build => ctx.build(),
        Command::Run(a) => ctx.run(a),
        Command::Mc { format } => ctx.mc(*format),
        Command::Analyze { spectrum, run_id } => ctx.analyze(spectrum, run_id),
        Command::Fidelity { n_qubits, tau_op, gamma1, gamma2 } => {
            let r = fidelity(&FidelityInput { n_qubits: *n_qubits, tau_op: *tau_op, gamma1: *gamma1, gamma2: *gamma2 })?;
            ctx.emit_text(&pretty(&r)?)
        }
        Command::RbExtract { matrix, t_f } => ctx.rb_extract(matrix, *t_f),
        Command::ExportLtspice { netlist } => ctx.export_ltspice(netlist.as_deref()),
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

struct Ctx<'a> {
    cli: &'a Cli,
    cfg: ExperimentConfig,
    raw: Vec<u8>,
}

impl Ctx<'_> {
    /// Writes to `--out` when given, stdout otherwise.
    fn emit_text(&self, text: &str) -> Outcome {
        match &self.cli.out {
            Some(p) => write_file(p, text.as_bytes())?,
            None => print!("{text}"),
        }
        Ok(())
    }

    fn input_digests(&self, extra: &[(&str, &Path, &[u8])]) -> serde_json::Value {
        let mut inputs = serde_json::Map::new();
        if let Some(p) = &self.cli.config {
            inputs.insert("config".into(), json!({ "path": p.display().to_string(), "sha256": io::sha256_hex(&self.raw) }));
        }
        for (name, path, bytes) in extra {
            inputs.insert((*name).into(), json!({ "path": path.display().to_string(), "sha256": io::sha256_hex(bytes) }));
        }
        serde_json::Value::Object(inputs)
    }

    fn configured_netlist(&self) -> Result<Netlist, Failure> {
        let table = parameter_table(&self.cfg.array, &self.cfg.qubit).map_err(|e| anyhow!("array: {e}"))?;
        Ok(build_from_table(&self.cfg.array, &table, &self.cfg.drive).map_err(|e| anyhow!("array: {e}"))?)
    }

    fn load_netlist(&self, path: Option<&Path>) -> Result<(Netlist, Option<Vec<u8>>), Failure> {
        match path {
            None => Ok((self.configured_netlist()?, None)),
            Some(p) => {
                let bytes = std::fs::read(p).with_context(|| format!("reading netlist {}", p.display()))?;
                let text = std::str::from_utf8(&bytes).context("netlist is not UTF-8")?;
                let n = parse_netlist(text).with_context(|| format!("parsing {}", p.display()))?;
                Ok((n, Some(bytes)))
            }
        }
    }

    fn build(&self) -> Outcome {
        let a = &self.cfg.array;
        let table = parameter_table(a, &self.cfg.qubit).map_err(|e| anyhow!("array: {e}"))?;
        let n = build_from_table(a, &table, &self.cfg.drive).map_err(|e| anyhow!("array: {e}"))?;
        let diags = netlist::validate(&n);
        let path = self.cli.out.clone().unwrap_or_else(|| PathBuf::from("netlist.cir"));
        write_file(&path, emit_netlist(&n, Dialect::Native).as_bytes())?;

        let mut s = String::new();
        writeln!(s, "netlist: {} -> {}", n.title(), path.display()).unwrap();
        writeln!(s, "elements: {}, nodes: {}, digest: {}", n.elements().len(), n.node_count(), n.digest()).unwrap();
        if diags.is_empty() {
            writeln!(s, "validation: clean").unwrap();
        } else {
            for d in &diags {
                writeln!(s, "validation: {d}").unwrap();
            }
        }
        let shown = table.units.len().min(4);
        for (i, u) in table.units.iter().take(shown).enumerate() {
            let d = derive_elements(u);
            let g = coupling_strength(u.c_g, u.c_q, u.c_r, u.f_q, u.f_r);
            let disp = check_dispersive(g, u.f_q, u.f_r);
            writeln!(
                s,
                "unit {}: f_q = {:.4} GHz, f_r = {:.4} GHz, R_q = {:.4e} Ω, L_q = {:.4} nH, R_r = {:.4e} Ω, L_r = {:.4} nH",
                i + 1,
                u.f_q / 1e9,
                u.f_r / 1e9,
                d.r_q,
                d.l_q * 1e9,
                d.r_r,
                d.l_r * 1e9
            )
            .unwrap();
            writeln!(
                s,
                "  g/2π = {:.4} GHz, g/Δ = {:.4} ({})",
                g / 1e9,
                disp.ratio,
                if disp.ok { "dispersive" } else { "NOT dispersive" }
            )
            .unwrap();
        }
        if table.units.len() > shown {
            writeln!(s, "... {} more units", table.units.len() - shown).unwrap();
        }
        print!("{s}");
        if !diags.is_empty() {
            return Err(anyhow!("netlist failed validation").into());
        }
        Ok(())
    }

    fn plan(&self, a: &RunArgs) -> Result<SweepPlan, Failure> {
        let mut plan = self.cfg.sweep;
        if let Some(f) = a.f_min {
            plan.f_min = f;
        }
        if let Some(f) = a.f_max {
            plan.f_max = f;
        }
        if let Some(n) = a.points {
            plan.n_coarse = n;
        }
        if let Some(s) = a.spacing {
            plan.spacing = match s {
                SpacingArg::Linear => Spacing::Linear,
                SpacingArg::Log => Spacing::Log,
            };
        }
        if a.no_refine {
            plan.refine.enabled = false;
        }
        plan.validate().map_err(|e| anyhow!("sweep: {e}"))?;
        Ok(plan)
    }

    fn run(&self, a: &RunArgs) -> Outcome {
        let plan = self.plan(a)?;
        let (n, bytes) = self.load_netlist(a.netlist.as_deref())?;
        let diags = netlist::validate(&n);
        if !diags.is_empty() {
            let list: Vec<String> = diags.iter().map(ToString::to_string).collect();
            return Err(anyhow!("netlist failed validation: {}", list.join("; ")).into());
        }
        let spec = run_sweep(&n, &plan).map_err(solver_failure)?;
        let data = match a.format {
            Format::Csv => io::spectrum_to_csv(&spec).into_bytes(),
            Format::Bin => io::spectrum_to_bin(&spec),
        };
        let Some(out) = &self.cli.out else {
            if a.format == Format::Bin {
                return Err(anyhow!("--format bin needs --out").into());
            }
            print!("{}", String::from_utf8_lossy(&data));
            return Ok(());
        };
        write_file(out, &data)?;
        let mut extra = Vec::new();
        if let (Some(p), Some(b)) = (&a.netlist, &bytes) {
            extra.push(("netlist", p.as_path(), b.as_slice()));
        }
        let mut effective = self.cfg.clone();
        effective.sweep = plan;
        let manifest = json!({
            "tool": "qsim",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "run",
            "config": effective,
            "inputs": self.input_digests(&extra),
            "netlist_digest": spec.netlist_digest,
            "outputs": { "spectrum": { "path": file_name(out), "sha256": io::sha256_hex(&data) } },
        });
        let mut mpath = out.clone().into_os_string();
        mpath.push(".manifest.json");
        write_file(Path::new(&mpath), pretty(&manifest)?.as_bytes())?;
        Ok(())
    }

    fn mc(&self, format: Format) -> Outcome {
        let c = &self.cfg;
        let dir = self.cli.out.clone().unwrap_or_else(|| PathBuf::from("qsim-mc"));
        let ens = run_ensemble(&c.array, &c.qubit, &c.drive, &c.variation, &c.sweep).map_err(|e| match e {
            McError::Sweep(SweepError::Setup(MnaError::Singular { .. })) => {
                Failure { code: EXIT_CONFIG, err: anyhow!("nominal circuit is singular: {e}") }
            }
            other => anyhow!(other).into(),
        })?;

        let ext = match format {
            Format::Csv => "csv",
            Format::Bin => "bin",
        };
        let mut runs = Vec::new();
        let mut failed = 0;
        for run in &ens.runs {
            let id = format!("run-{:04}", run.sample_id);
            let mut entry = json!({ "sample_id": run.sample_id, "resampled": run.resampled, "error": run.error });
            if let Some(spec) = &run.spectrum {
                let data = match format {
                    Format::Csv => io::spectrum_to_csv(spec).into_bytes(),
                    Format::Bin => io::spectrum_to_bin(spec),
                };
                let spath = format!("runs/{id}.{ext}");
                write_file(&dir.join(&spath), &data)?;
                let report = analyze_spectrum(spec, &id, &c.analysis, &c.array)?;
                let rtext = pretty(&report)?;
                let rpath = format!("runs/{id}.report.json");
                write_file(&dir.join(&rpath), rtext.as_bytes())?;
                entry["netlist_digest"] = json!(spec.netlist_digest);
                entry["spectrum"] = json!({ "path": spath, "sha256": io::sha256_hex(&data) });
                entry["report"] = json!({ "path": rpath, "sha256": io::sha256_hex(rtext.as_bytes()) });
                entry["infidelity"] = json!(report.infidelity.value);
            } else {
                failed += 1;
            }
            runs.push(entry);
        }

        let opts = c.analysis.peak_options(&c.array);
        let inf = ensemble_infidelity(&ens, c.analysis.n_qubits(&c.array), c.analysis.tau_op_s, c.analysis.aggregation, &opts)?;
        let summary = json!({
            "n_runs": ens.runs.len(),
            "failed_runs": failed,
            "tau_op_s": c.analysis.tau_op_s,
            "n_qubits": c.analysis.n_qubits(&c.array),
            "aggregation": c.analysis.aggregation,
            "spread": inf.spread(),
            "infidelity": inf,
        });
        let stext = pretty(&summary)?;
        write_file(&dir.join("summary.json"), stext.as_bytes())?;

        let manifest = json!({
            "tool": "qsim",
            "version": env!("CARGO_PKG_VERSION"),
            "command": "mc",
            "config": c,
            "inputs": self.input_digests(&[]),
            "base_netlist_digest": ens.base_digest,
            "runs": runs,
            "summary": { "path": "summary.json", "sha256": io::sha256_hex(stext.as_bytes()) },
        });
        write_file(&dir.join("manifest.json"), pretty(&manifest)?.as_bytes())?;

        let values = inf.values();
        println!("{} runs ({} failed) -> {}", ens.runs.len(), failed, dir.display());
        if let (Some(lo), Some(hi)) =
            (values.iter().copied().reduce(f64::min), values.iter().copied().reduce(f64::max))
        {
            println!("infidelity: min {lo:.4e}, max {hi:.4e}, spread {:.4e}", hi - lo);
        } else {
            println!("infidelity: no run had a resolved resonator-band peak");
        }
        Ok(())
    }

    fn analyze(&self, path: &Path, run_id: &str) -> Outcome {
        let bytes = std::fs::read(path).with_context(|| format!("reading spectrum {}", path.display()))?;
        let spec = io::read_spectrum(&bytes)?;
        let report = analyze_spectrum(&spec, run_id, &self.cfg.analysis, &self.cfg.array)?;
        self.emit_text(&pretty(&report)?)
    }

    fn rb_extract(&self, path: &Path, t_f: Option<f64>) -> Outcome {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: MatrixFile = {
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de).map_err(|e| anyhow!("matrix key `{}`: {}", e.path(), e.inner()))?
        };
        let t_f = t_f.or(m.t_f).ok_or_else(|| anyhow!("t_f missing: pass --t-f or set it in the matrix file"))?;
        let rho = RbDensityMatrix {
            a: m.a,
            c: m.c,
            b: Complex64::new(m.re_b, m.im_b),
            t_f,
            alpha0: m.alpha0.into(),
            beta0: m.beta0.into(),
        };
        let r = rb_extract(&rho)?;
        // JSON has no infinity; an unbounded Γ2 is written as a string.
        let g2 = if r.gamma2.is_finite() { json!(r.gamma2) } else { json!("inf") };
        let out = json!({ "gamma1": r.gamma1, "gamma2": g2, "delta_omega": r.delta_omega, "flags": r.flags });
        self.emit_text(&pretty(&out)?)
    }

    fn export_ltspice(&self, path: Option<&Path>) -> Outcome {
        let (n, _) = self.load_netlist(path)?;
        let p = &self.cfg.sweep;
        let ac = AcDirective { points: p.n_coarse, f_start: p.f_min, f_stop: p.f_max };
        self.emit_text(&emit_netlist(&n, Dialect::Ltspice { ac }))
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Complex amplitude written either as a real number or as `[re, im]`.
#[derive(Deserialize, Clone, Copy)]
#[serde(untagged)]
enum Amplitude {
    Real(f64),
    Pair([f64; 2]),
}

impl From<Amplitude> for Complex64 {
    fn from(a: Amplitude) -> Self {
        match a {
            Amplitude::Real(x) => Complex64::new(x, 0.0),
            Amplitude::Pair([re, im]) => Complex64::new(re, im),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixFile {
    a: f64,
    c: f64,
    re_b: f64,
    im_b: f64,
    alpha0: Amplitude,
    beta0: Amplitude,
    #[serde(default)]
    t_f: Option<f64>,
}
