//! Command-line front end: argument parsing, dispatch and CSV/JSON output.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::exponents::{arithmetic_structure, beta, profile, spectrum};
use crate::ifs::{SelfSimilarSystem, Word};
use crate::numeric::{geomspace, linspace, trapezoid};
use crate::symbolic::{closed_form_constant, closed_form_periodic, default_kappa, sigma, symbolic_volume, KappaVector};
use crate::tube::{self, ExactEvaluator, MonteCarloEvaluator, TubeEvaluator};
use crate::zeta::{self, ZetaPole};

#[derive(Debug, Parser)]
#[command(name = "mftube", version, about = "Multifractal tube volumes and zeta functions of self-similar measures")]
pub struct Cli {
    /// System description (JSON).
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Random seed; echoed in the output metadata.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,

    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TubeMethodArg {
    Auto,
    Exact,
    Montecarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PoleMethodArg {
    Auto,
    Arithmetic,
    General,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// β(q), α(q) and optionally γ(q) over a q grid.
    Exponents {
        #[arg(long, default_value = "-5:5:21", allow_hyphen_values = true)]
        q_grid: String,
        /// Word excluded from γ(q), e.g. "12".
        #[arg(long)]
        excluded: Option<String>,
    },
    /// Legendre spectrum f(a) = inf_q (a q + β(q)).
    Spectrum {
        #[arg(long, default_value = "-10:10:201", allow_hyphen_values = true)]
        q_grid: String,
        #[arg(long, allow_hyphen_values = true)]
        a_grid: String,
    },
    /// Multifractal tube volumes over a geometric r grid.
    Tube {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        q: f64,
        #[arg(long)]
        r_grid: String,
        #[arg(long, value_enum, default_value_t = TubeMethodArg::Auto)]
        method: TubeMethodArg,
        #[command(flatten)]
        mc: MonteCarloArgs,
    },
    /// Symbolic volumes over a geometric r grid.
    Symbolic {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        q: f64,
        #[arg(long)]
        r_grid: String,
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        kappa: String,
    },
    /// Poles of the zeta function with residues.
    ZetaPoles {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        q: f64,
        #[arg(long, default_value_t = 50.0)]
        imag_max: f64,
        #[arg(long, default_value_t = 0.5)]
        re_margin: f64,
        #[arg(long, value_enum, default_value_t = PoleMethodArg::Auto)]
        method: PoleMethodArg,
    },
    /// Rescaled symbolic volume against its closed-form asymptotics.
    VerifyThm57 {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        q: f64,
        #[arg(long, default_value_t = 4)]
        r_decades: u32,
        #[arg(long, default_value_t = 10)]
        points_per_decade: u32,
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        kappa: String,
    },
    /// Residue-sum reconstruction of the symbolic volume at one radius.
    VerifyResidueSum {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        q: f64,
        #[arg(long)]
        r: f64,
        /// Truncation heights, lo:hi:count (linear).
        #[arg(long, default_value = "50:500:10")]
        imag_max_grid: String,
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        kappa: String,
    },
    /// Rescaled tube volumes, their running log-average and c_q.
    VerifyRenewal {
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        q: f64,
        #[arg(long)]
        r_grid: String,
        #[arg(long, value_enum, default_value_t = TubeMethodArg::Auto)]
        method: TubeMethodArg,
        #[command(flatten)]
        mc: MonteCarloArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct MonteCarloArgs {
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = tube::DEFAULT_DEPTH_CAP)]
    pub depth_cap: usize,
}

/// A `lo:hi:count` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl std::str::FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidArgument(format!("grid '{s}' must be lo:hi:count with lo < hi and count >= 2"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(lo < hi) || count < 2 || !lo.is_finite() || !hi.is_finite() {
            return Err(bad());
        }
        Ok(Grid { lo, hi, count })
    }
}

impl Grid {
    pub fn linear(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.count)
    }

    pub fn geometric(&self) -> Result<Vec<f64>> {
        if !(self.lo > 0.0) {
            return Err(Error::InvalidArgument("geometric grid needs lo > 0".into()));
        }
        Ok(geomspace(self.lo, self.hi, self.count))
    }
}

/// Tabular result with metadata, rendered as CSV or JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, Value)>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

fn num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or_else(|| {
        if x.is_nan() {
            Value::String("nan".into())
        } else if x > 0.0 {
            Value::String("inf".into())
        } else {
            Value::String("-inf".into())
        }
    })
}

fn csv_cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => format!("{:.16e}", n.as_f64().unwrap_or(f64::NAN)),
        Value::Number(n) => n.to_string(),
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

impl Table {
    fn new(columns: Vec<&'static str>) -> Self {
        Table { meta: Vec::new(), columns, rows: Vec::new() }
    }

    fn meta(&mut self, key: &str, value: Value) {
        self.meta.push((key.to_string(), value));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let shown = match v {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            let _ = writeln!(out, "# {k}: {shown}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.iter().map(csv_cell).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let meta: Map<String, Value> = self.meta.iter().cloned().collect();
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
            .collect();
        let mut s = serde_json::to_string_pretty(&json!({ "meta": meta, "rows": rows })).expect("plain json");
        s.push('\n');
        s
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

fn parse_kappa(system: &SelfSimilarSystem, q: f64, spec: &str) -> Result<KappaVector> {
    if spec.trim() == "auto" {
        return default_kappa(system, q, None);
    }
    let values = spec
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| Error::InvalidArgument(format!("bad kappa entry '{v}'"))))
        .collect::<Result<Vec<f64>>>()?;
    KappaVector::new(&sigma(system, q), values)
}

fn choose_evaluator(
    system: &SelfSimilarSystem,
    q: f64,
    method: TubeMethodArg,
    mc: &MonteCarloArgs,
    seed: u64,
) -> Result<Box<dyn TubeEvaluator>> {
    let monte_carlo = || -> Box<dyn TubeEvaluator> {
        Box::new(MonteCarloEvaluator { samples: mc.samples, seed, depth_cap: mc.depth_cap })
    };
    match method {
        TubeMethodArg::Exact => Ok(Box::new(ExactEvaluator)),
        TubeMethodArg::Montecarlo => Ok(monte_carlo()),
        TubeMethodArg::Auto => {
            let exact_ok = system.dimension() == 1
                && q == 0.0
                && tube::Line1d::new(system).and_then(|l| l.first_level_gaps()).is_ok();
            Ok(if exact_ok { Box::new(ExactEvaluator) } else { monte_carlo() })
        }
    }
}

fn method_name(eval: &dyn TubeEvaluator) -> &'static str {
    if eval.is_exact() {
        "exact1d"
    } else {
        "montecarlo"
    }
}

fn load_system(cli: &Cli) -> Result<SelfSimilarSystem> {
    let path = cli.system.as_ref().ok_or_else(|| Error::InvalidArgument("--system <path> is required".into()))?;
    SelfSimilarSystem::from_json_file(path)
}

/// Runs the parsed command and returns the rendered output.
pub fn run(cli: &Cli) -> Result<String> {
    let system = load_system(cli)?;
    let mut table = execute(cli, &system)?;
    let mut meta = vec![
        ("command".to_string(), Value::String(command_name(&cli.command).into())),
        (
            "system".to_string(),
            Value::String(cli.system.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        ),
        ("seed".to_string(), json!(cli.seed)),
    ];
    meta.append(&mut table.meta);
    table.meta = meta;
    Ok(table.render(cli.format))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Exponents { .. } => "exponents",
        Command::Spectrum { .. } => "spectrum",
        Command::Tube { .. } => "tube",
        Command::Symbolic { .. } => "symbolic",
        Command::ZetaPoles { .. } => "zeta-poles",
        Command::VerifyThm57 { .. } => "verify-thm57",
        Command::VerifyResidueSum { .. } => "verify-residue-sum",
        Command::VerifyRenewal { .. } => "verify-renewal",
    }
}

fn execute(cli: &Cli, system: &SelfSimilarSystem) -> Result<Table> {
    match &cli.command {
        Command::Exponents { q_grid, excluded } => {
            let grid: Grid = q_grid.parse()?;
            let word = excluded.as_deref().map(|w| Word::parse(system, w)).transpose()?;
            let mut t = Table::new(vec!["q", "beta", "alpha", "gamma", "beta_residual"]);
            if let Some(w) = &word {
                t.meta("excluded_word", Value::String(w.to_string()));
            }
            for q in grid.linear() {
                let p = profile(system, q, word.as_ref())?;
                t.rows.push(vec![num(q), num(p.beta), num(p.alpha), p.gamma.map(num).unwrap_or(Value::Null), num(p.beta_residual)]);
            }
            Ok(t)
        }
        Command::Spectrum { q_grid, a_grid } => {
            let qs = q_grid.parse::<Grid>()?.linear();
            let mut t = Table::new(vec!["a", "f"]);
            t.meta("q_grid", Value::String(q_grid.clone()));
            for a in a_grid.parse::<Grid>()?.linear() {
                t.rows.push(vec![num(a), num(spectrum(system, &qs, a)?)]);
            }
            Ok(t)
        }
        Command::Tube { q, r_grid, method, mc } => {
            let eval = choose_evaluator(system, *q, *method, mc, cli.seed)?;
            let mut t = Table::new(vec!["r", "q", "volume", "stderr", "method"]);
            t.meta("q", num(*q));
            if !eval.is_exact() {
                t.meta("samples", json!(mc.samples));
            }
            for r in r_grid.parse::<Grid>()?.geometric()? {
                let v = eval.volume(system, *q, r)?;
                t.rows.push(vec![
                    num(r),
                    num(*q),
                    num(v.value),
                    v.stderr.map(num).unwrap_or(Value::Null),
                    Value::String(v.method.as_str().into()),
                ]);
            }
            Ok(t)
        }
        Command::Symbolic { q, r_grid, kappa } => {
            let k = parse_kappa(system, *q, kappa)?;
            let d = system.dimension();
            const C_COLS: [&str; 4] = ["C_0", "C_1", "C_2", "C_3"];
            const K_COLS: [&str; 4] = ["contribution_0", "contribution_1", "contribution_2", "contribution_3"];
            let mut cols = vec!["r", "q", "V_sym"];
            for l in 0..=d {
                cols.push(C_COLS.get(l).copied().unwrap_or("C_l"));
            }
            for l in 0..=d {
                cols.push(K_COLS.get(l).copied().unwrap_or("contribution_l"));
            }
            let mut t = Table::new(cols);
            t.meta("q", num(*q));
            t.meta("kappa", json!(k.values()));
            for r in r_grid.parse::<Grid>()?.geometric()? {
                let v = symbolic_volume(system, *q, r, &k)?;
                let mut row = vec![num(r), num(*q), num(v.value)];
                row.extend(v.per_l.iter().map(|p| num(p.c)));
                row.extend(v.per_l.iter().map(|p| num(p.contribution)));
                t.rows.push(row);
            }
            Ok(t)
        }
        Command::ZetaPoles { q, imag_max, re_margin, method } => {
            let poles: Vec<ZetaPole> = match method {
                PoleMethodArg::Arithmetic => zeta::poles_arithmetic(system, *q, *imag_max)?,
                PoleMethodArg::General => zeta::poles_general(system, *q, *imag_max, *re_margin)?,
                PoleMethodArg::Auto => {
                    if arithmetic_structure(system).is_arithmetic {
                        zeta::poles_arithmetic(system, *q, *imag_max)?
                    } else {
                        zeta::poles_general(system, *q, *imag_max, *re_margin)?
                    }
                }
            };
            let mut t = Table::new(vec!["re", "im", "residue_re", "residue_im", "winding", "simple"]);
            t.meta("q", num(*q));
            t.meta("imag_max", num(*imag_max));
            for p in poles {
                let res = p.residue_zeta.unwrap_or(Complex64::new(f64::NAN, f64::NAN));
                let cell = |x: f64| if p.residue_zeta.is_some() { num(x) } else { Value::Null };
                t.rows.push(vec![
                    num(p.location.re),
                    num(p.location.im),
                    cell(res.re),
                    cell(res.im),
                    json!(p.winding),
                    json!(p.simple),
                ]);
            }
            Ok(t)
        }
        Command::VerifyThm57 { q, r_decades, points_per_decade, kappa } => {
            if *r_decades == 0 || *points_per_decade == 0 {
                return Err(Error::InvalidArgument("r-decades and points-per-decade must be positive".into()));
            }
            let k = parse_kappa(system, *q, kappa)?;
            let b = beta(system, *q)?;
            let arithmetic = arithmetic_structure(system).is_arithmetic;
            let constant = closed_form_constant(system, *q, &k)?;
            let mut t = Table::new(vec!["r", "direct", "closed_form", "abs_error"]);
            t.meta("q", num(*q));
            t.meta("beta", num(b));
            t.meta("kappa", json!(k.values()));
            t.meta("arithmetic", json!(arithmetic));
            t.meta("average_content", num(constant));
            let n = r_decades * points_per_decade;
            let top = system.r_min();
            for j in 0..=n {
                let r = top * 10f64.powf(-(j as f64) / *points_per_decade as f64);
                let direct = symbolic_volume(system, *q, r, &k)?.value * r.powf(b);
                let closed = if arithmetic { closed_form_periodic(system, *q, &k, r)? } else { constant };
                t.rows.push(vec![num(r), num(direct), num(closed), num((direct - closed).abs())]);
            }
            Ok(t)
        }
        Command::VerifyResidueSum { q, r, imag_max_grid, kappa } => {
            let k = parse_kappa(system, *q, kappa)?;
            let direct = symbolic_volume(system, *q, *r, &k)?.value;
            let grid = imag_max_grid.parse::<Grid>()?;
            if !(grid.lo > 0.0) {
                return Err(Error::InvalidArgument("imag-max grid must be positive".into()));
            }
            let poles = zeta::poles_auto(system, *q, grid.hi)?;
            let mut t = Table::new(vec!["imag_max", "terms", "reconstruction", "direct", "abs_error"]);
            t.meta("q", num(*q));
            t.meta("r", num(*r));
            t.meta("kappa", json!(k.values()));
            for h in grid.linear() {
                let subset: Vec<ZetaPole> = poles.iter().filter(|p| p.location.im.abs() <= h).cloned().collect();
                let rec = zeta::residue_sum_from_poles(system, *q, &k, *r, &subset)?;
                t.rows.push(vec![num(h), json!(rec.terms), num(rec.value), num(direct), num((rec.value - direct).abs())]);
            }
            Ok(t)
        }
        Command::VerifyRenewal { q, r_grid, method, mc } => {
            let eval = choose_evaluator(system, *q, *method, mc, cli.seed)?;
            let rs = r_grid.parse::<Grid>()?.geometric()?;
            let content = tube::minkowski_content(system, *q, eval.as_ref(), &rs)?;
            let b = beta(system, *q)?;
            let mut t = Table::new(vec!["r", "rescaled_volume", "running_log_average", "c_q"]);
            t.meta("q", num(*q));
            t.meta("beta", num(b));
            t.meta("method", Value::String(method_name(eval.as_ref()).into()));
            t.meta("averaged_content", num(content.averaged));
            t.meta("renewal_constant", num(content.renewal_constant));
            if let Some(p) = content.plain {
                t.meta("plain_content", num(p));
            }
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for &r in rs.iter().rev() {
                let y = r.powf(b) * eval.volume(system, *q, r)?.value;
                xs.push(-r.ln());
                ys.push(y);
                let avg = if xs.len() < 2 { y } else { trapezoid(&xs, &ys) / (xs[xs.len() - 1] - xs[0]) };
                t.rows.push(vec![num(r), num(y), num(avg), num(content.renewal_constant)]);
            }
            Ok(t)
        }
    }
}

/// JSON error payload written to stderr.
pub fn error_json(e: &Error) -> String {
    json!({ "error": e.code(), "message": e.to_string() }).to_string()
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        2
    } else {
        3
    }
}
