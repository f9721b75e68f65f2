//! Command-line front end.

use crate::analysis::{analyze, read_data, AnalysisOptions, AnalysisReport, Model};
use crate::error::{domain, Error, Result};
use crate::estimation::{blue_coefficients, estimate, relative_efficiency};
use crate::moments::{build_moment_table, single_moment};
use crate::pivotal::{cached_pivot_quantiles, simulate_all_pivot_quantiles, DEFAULT_PROBS};
use crate::records::{extract_lower_k_records, RecordSeries};
use crate::study::{self, run_study, StudyConfig, TableOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "ugrec", version, about = "Lower k-record inference for the unit-Gompertz distribution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,
    /// Write output to this file instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Args)]
pub struct Design {
    #[arg(long)]
    pub theta: f64,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// File with one observation per line.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub theta: f64,
    /// Records to use; defaults to all extracted.
    #[arg(long)]
    pub n: Option<usize>,
    /// Round tabulated quantities to 5 decimals before use.
    #[arg(long)]
    pub paper_fidelity: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Means and covariances of standardized records, or raw moments of order r.
    Moments {
        #[command(flatten)]
        design: Design,
        #[arg(long)]
        r: Option<f64>,
    },
    /// BLUE coefficients, variance factors and relative efficiencies.
    Coeffs {
        #[command(flatten)]
        design: Design,
    },
    /// BLUE and BLIE of location and scale from data.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
    },
    /// BLUP and BLIP of the next record from data.
    Predict {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Simulated quantiles of the six pivots.
    Pivots {
        #[command(flatten)]
        design: Design,
        #[arg(long, default_value_t = study::DEFAULT_TABLE_REPS)]
        reps: usize,
        #[arg(long, default_value_t = study::DEFAULT_SEED)]
        seed: u64,
        /// Extra two-sided level whose tail probabilities are added.
        #[arg(long)]
        level: Option<f64>,
        /// Reuse and store tables under this directory.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Monte Carlo study at one design point.
    Study {
        #[command(flatten)]
        design: Design,
        #[arg(long, default_value_t = study::DEFAULT_STUDY_REPS)]
        reps: usize,
        #[arg(long, default_value_t = study::DEFAULT_TABLE_REPS)]
        table_reps: usize,
        #[arg(long, default_value_t = study::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
    },
    /// Full analysis of a data set.
    Analyze {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        k: usize,
        /// Defaults to the grid value with the largest record/mean correlation.
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = study::DEFAULT_TABLE_REPS)]
        reps: usize,
        #[arg(long, default_value_t = study::DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        paper_fidelity: bool,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Regenerate reference tables as CSV.
    Tables {
        #[arg(long, conflicts_with = "all", required_unless_present = "all")]
        id: Option<u8>,
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = study::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = study::DEFAULT_TABLE_REPS)]
        reps: usize,
        #[arg(long, default_value_t = study::DEFAULT_STUDY_REPS)]
        study_reps: usize,
    },
}

/// Six significant digits, shortest representation.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{x:.5e}").parse::<f64>().map_or_else(|_| x.to_string(), |v| v.to_string())
}

// quantity,index,value rows
struct Long(Vec<(String, String, f64)>);

impl Long {
    fn new() -> Self {
        Long(Vec::new())
    }
    fn push(&mut self, q: &str, i: impl ToString, v: f64) {
        self.0.push((q.to_string(), i.to_string(), v));
    }
    fn scalar(&mut self, q: &str, v: f64) {
        self.push(q, "", v);
    }
    fn csv(&self) -> String {
        let mut s = String::from("quantity,index,value\n");
        for (q, i, v) in &self.0 {
            s.push_str(&format!("{q},{i},{}\n", sig6(*v)));
        }
        s
    }
    fn text(&self) -> String {
        self.0
            .iter()
            .map(|(q, i, v)| {
                let name = if i.is_empty() { q.clone() } else { format!("{q}[{i}]") };
                format!("{name} = {}\n", sig6(*v))
            })
            .collect()
    }
    fn render(&self, f: Format, json: impl FnOnce() -> Result<String>) -> Result<String> {
        match f {
            Format::Csv => Ok(self.csv()),
            Format::Text => Ok(self.text()),
            Format::Json => json(),
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn load_records(d: &DataArgs) -> Result<(RecordSeries, usize)> {
    let data = read_data(&d.input)?;
    let rec = extract_lower_k_records(&data, d.k)?;
    let n = d.n.unwrap_or(rec.len());
    if n < 2 || n > rec.len() {
        return Err(Error::InsufficientRecords { needed: n.max(2), got: rec.len() });
    }
    Ok((rec.truncated(n)?, n))
}

fn probs_for(level: Option<f64>) -> Result<Vec<f64>> {
    let mut p = DEFAULT_PROBS.to_vec();
    if let Some(l) = level {
        if !(l > 0.0 && l < 1.0) {
            return domain(format!("level must lie in (0, 1), got {l}"));
        }
        for q in [(1.0 - l) / 2.0, 1.0 - (1.0 - l) / 2.0] {
            if !p.iter().any(|x| (x - q).abs() < 1e-12) {
                p.push(q);
            }
        }
        p.sort_by(f64::total_cmp);
    }
    Ok(p)
}

/// Executes one command and returns what should be written as output.
pub fn run(cli: &Cli) -> Result<String> {
    let fmt = cli.format;
    match &cli.command {
        Command::Moments { design: d, r } => {
            let mut l = Long::new();
            if let Some(r) = *r {
                let v = (1..=d.n)
                    .map(|i| single_moment(r, i, d.k, d.theta))
                    .collect::<Result<Vec<_>>>()?;
                for (i, x) in v.iter().enumerate() {
                    l.push("raw_moment", i + 1, *x);
                }
                return l.render(fmt, || pretty(&json!({"theta": d.theta, "k": d.k, "r": r, "raw_moments": v})));
            }
            let t = build_moment_table(d.n, d.k, d.theta)?;
            for i in 0..d.n {
                l.push("mean", i + 1, t.alpha[i]);
            }
            for i in 0..d.n {
                for j in i..d.n {
                    l.push("cov", format!("{}:{}", i + 1, j + 1), t.b[(i, j)]);
                }
            }
            let cov: Vec<Vec<f64>> = (0..d.n).map(|i| t.b.row(i).iter().copied().collect()).collect();
            l.render(fmt, || {
                pretty(&json!({"theta": d.theta, "k": d.k, "means": t.alpha.as_slice(), "cov": cov}))
            })
        }
        Command::Coeffs { design: d } => {
            let c = blue_coefficients(&build_moment_table(d.n, d.k, d.theta)?)?;
            let re = relative_efficiency(&c);
            let mut l = Long::new();
            for (i, a) in c.a.iter().enumerate() {
                l.push("a", i + 1, *a);
            }
            for (i, b) in c.b.iter().enumerate() {
                l.push("b", i + 1, *b);
            }
            l.scalar("V1", c.v1);
            l.scalar("V2", c.v2);
            l.scalar("V3", c.v3);
            l.scalar("rec_mu", re.mu);
            l.scalar("rec_sigma", re.sigma);
            l.render(fmt, || pretty(&json!({"coefficients": c, "relative_efficiency": re})))
        }
        Command::Estimate { data } => {
            let (rec, n) = load_records(data)?;
            let c = Model::new(n, data.k, data.theta, data.paper_fidelity)?.coeffs;
            let e = estimate(&rec.values, &c)?;
            let mut l = Long::new();
            l.scalar("mu_blue", e.mu_blue);
            l.scalar("sigma_blue", e.sigma_blue);
            l.scalar("mu_blie", e.mu_blie);
            l.scalar("sigma_blie", e.sigma_blie);
            l.scalar("var_mu_blue", e.var_mu_blue);
            l.scalar("var_sigma_blue", e.var_sigma_blue);
            l.scalar("cov_blue", e.cov_blue);
            l.scalar("var_mu_blie", e.var_mu_blie);
            l.scalar("var_sigma_blie", e.var_sigma_blie);
            l.scalar("cov_blie", e.cov_blie);
            l.render(fmt, || pretty(&json!({"records": rec, "estimates": e})))
        }
        Command::Predict { data } => {
            let (rec, n) = load_records(data)?;
            let model = Model::new(n, data.k, data.theta, data.paper_fidelity)?;
            let e = estimate(&rec.values, &model.coeffs)?;
            let p = model.predict(&rec.values, &e)?;
            let mut l = Long::new();
            l.scalar("blup", p.blup);
            l.scalar("blip", p.blip);
            l.scalar("v4", p.v4);
            l.scalar("mspe_blup", p.mspe_blup);
            l.scalar("mspe_blip", p.mspe_blip);
            l.scalar("rec", p.rec);
            l.render(fmt, || pretty(&json!({"records": rec, "prediction": p})))
        }
        Command::Pivots { design: d, reps, seed, level, cache } => {
            let probs = probs_for(*level)?;
            let tables = match cache {
                Some(dir) => cached_pivot_quantiles(dir, d.theta, d.k, d.n, *reps, &probs, *seed)?,
                None => simulate_all_pivot_quantiles(d.theta, d.k, d.n, *reps, &probs, *seed)?,
            };
            match fmt {
                Format::Json => pretty(&tables),
                _ => {
                    let mut s = String::from("pivot,k,theta,n,reps,seed,prob,quantile\n");
                    for t in &tables {
                        for (p, q) in t.probs.iter().zip(&t.quantiles) {
                            s.push_str(&format!(
                                "{},{},{},{},{},{},{},{}\n",
                                t.pivot, t.k, t.theta, t.n, t.reps, t.seed, p, sig6(*q)
                            ));
                        }
                    }
                    Ok(s)
                }
            }
        }
        Command::Study { design: d, reps, table_reps, seed, level } => {
            let mut cfg = StudyConfig::new(d.theta, d.k, d.n, *reps, *level, *seed)?;
            cfg.table_reps = *table_reps;
            let row = run_study(&cfg)?;
            match fmt {
                Format::Json => pretty(&row),
                Format::Csv => {
                    let cols = row.columns();
                    let head: Vec<&str> = cols.iter().map(|c| c.0.as_str()).collect();
                    let vals: Vec<String> = cols.iter().map(|c| sig6(c.1)).collect();
                    Ok(format!("{}\n{}\n", head.join(","), vals.join(",")))
                }
                Format::Text => Ok(row.columns().iter().map(|(k, v)| format!("{k} = {}\n", sig6(*v))).collect()),
            }
        }
        Command::Analyze { input, k, theta, n, level, reps, seed, paper_fidelity, cache } => {
            let data = read_data(input)?;
            let mut o = AnalysisOptions::new(*k);
            o.theta = *theta;
            o.n = *n;
            o.level = *level;
            o.reps = *reps;
            o.seed = *seed;
            o.paper_fidelity = *paper_fidelity;
            o.cache_dir = cache.clone();
            let report = analyze(&data, &o)?;
            match fmt {
                Format::Json => pretty(&report),
                Format::Text => Ok(report.to_string()),
                Format::Csv => Ok(report_long(&report).csv()),
            }
        }
        Command::Tables { id, all, seed, reps, study_reps } => {
            let opts = TableOptions { seed: *seed, table_reps: *reps, study_reps: *study_reps, ..Default::default() };
            if *all {
                let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
                let m = study::reproduce_all(&dir, &opts)?;
                return Ok(format!("wrote {} tables to {}\n", m.tables.len(), dir.join("tables").display()));
            }
            let id = id.ok_or_else(|| Error::Input("either --id or --all is required".into()))?;
            if !(1..=12).contains(&id) {
                return Err(Error::Input(format!("table id must be in 1..=12, got {id}")));
            }
            Ok(study::build_table(id, &opts)?.to_csv_string())
        }
    }
}

fn report_long(r: &AnalysisReport) -> Long {
    let mut l = Long::new();
    for (i, v) in r.records.values.iter().enumerate() {
        l.push("record", i + 1, *v);
    }
    if let Some(f) = &r.fit {
        l.scalar("mle_alpha", f.params.alpha());
        l.scalar("mle_theta", f.params.theta());
    }
    if let Some(ks) = &r.ks {
        l.scalar("ks_statistic", ks.statistic);
        l.scalar("ks_p_value", ks.p_value);
    }
    for c in &r.theta_diagnostic {
        l.push("correlation", c.theta, c.correlation);
    }
    l.scalar("theta", r.chosen_theta);
    l.scalar("n_used", r.n_used as f64);
    let e = &r.estimates;
    l.scalar("mu_blue", e.mu_blue);
    l.scalar("sigma_blue", e.sigma_blue);
    l.scalar("mu_blie", e.mu_blie);
    l.scalar("sigma_blie", e.sigma_blie);
    let p = &r.prediction;
    l.scalar("blup", p.blup);
    l.scalar("blip", p.blip);
    l.scalar("mspe_blup", p.mspe_blup);
    l.scalar("mspe_blip", p.mspe_blip);
    if let Some(x) = r.next_observed {
        l.scalar("next_observed", x);
    }
    for iv in &r.intervals {
        l.push("lower", iv.pivot, iv.lower);
        l.push("upper", iv.pivot, iv.upper);
    }
    l
}

/// Process exit status for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}
