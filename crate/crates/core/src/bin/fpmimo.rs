use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use fpmimo::bounds::{self, BlockCounting, ErrorModel, MMax, UpsilonMethod};
use fpmimo::fp::FloatFormat;
use fpmimo::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "fpmimo",
    version,
    about = "Finite-precision massive MIMO transceiver experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo rate and error sweep; writes CSV.
    Sweep(RunArgs),
    /// Tabulate the analytical bounds over an antenna grid.
    Bounds(BoundsArgs),
    /// Empirical violation rates of the error bounds.
    Verify(RunArgs),
    /// Operation counts of mixed, low and high precision matrix products.
    Cost(CostArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings applied after the file.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, String> {
        let mut text = match &self.config {
            Some(p) => fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?,
            None => String::new(),
        };
        for kv in &self.set {
            text.push('\n');
            text.push_str(kv);
        }
        ExperimentConfig::parse(&text).map_err(|e| e.to_string())
    }

    fn write(&self, body: &str) -> Result<(), String> {
        match &self.out {
            Some(p) => fs::write(p, body).map_err(|e| format!("{}: {e}", p.display())),
            None => io::stdout()
                .write_all(body.as_bytes())
                .map_err(|e| e.to_string()),
        }
    }
}

#[derive(Args)]
struct BoundsArgs {
    /// Antenna counts, comma separated.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "16,32,64,128,256,512,1024"
    )]
    m: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    k: usize,
    #[arg(long, default_value_t = 10.0)]
    rho_db: f64,
    #[arg(long, default_value = "fp16")]
    format: String,
    /// High precision format for the blocked inner product factor.
    #[arg(long, default_value = "fp32")]
    high_format: String,
    #[arg(long, default_value_t = 32)]
    block_size: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Use the worst-case `nu/(1-nu)` factors instead.
    #[arg(long)]
    deterministic: bool,
    /// Monte Carlo samples for the condition number moments.
    #[arg(long, default_value_t = 20_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Counting {
    Fractional,
    Ceiling,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long, default_value_t = 1)]
    m: usize,
    /// Inner dimensions, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    p: usize,
    /// Block sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    b: Vec<usize>,
    /// Cost of one high precision operation in low precision units.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    g: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Counting::Fractional)]
    counting: Counting,
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn header(lines: &[(&str, String)]) -> String {
    lines
        .iter()
        .map(|(k, v)| format!("# {k} = {v}\n"))
        .collect()
}

fn sweep(args: &RunArgs) -> Result<(), String> {
    let cfg = args.config()?;
    let res = harness::run_sweep(&cfg).map_err(|e| e.to_string())?;
    args.write(&harness::emit_csv(&res).map_err(|e| e.to_string())?)
}

fn verify(args: &RunArgs) -> Result<(), String> {
    let cfg = args.config()?;
    let rep = harness::verify_bounds(&cfg).map_err(|e| e.to_string())?;
    let mut out: String = cfg.to_text().lines().map(|l| format!("# {l}\n")).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut cols = vec!["scenario".to_string(), "M".into(), "rho_db".into()];
    cols.extend(
        harness::VERIFY_LAMBDAS
            .iter()
            .map(|l| format!("violation_lambda_{l}")),
    );
    cols.extend(
        [
            "violation_deterministic",
            "median_rel_err",
            "breakdowns",
            "trials",
            "median_backward_ratio",
        ]
        .map(String::from),
    );
    w.write_record(&cols).map_err(|e| e.to_string())?;
    for r in &rep.rows {
        let mut rec = vec![cfg.scenario.to_string(), r.m.to_string(), fmt(r.rho_db)];
        rec.extend(r.probabilistic.iter().map(|&(_, v)| fmt(v)));
        rec.push(fmt(r.deterministic));
        rec.push(fmt(r.median_rel_err));
        rec.push(r.breakdowns.to_string());
        rec.push(r.trials.to_string());
        rec.push(r.median_backward_ratio.map_or(String::new(), fmt));
        w.write_record(&rec).map_err(|e| e.to_string())?;
    }
    out.push_str(&String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).expect("utf-8"));
    args.write(&out)
}

fn bounds_table(a: &BoundsArgs) -> Result<(), String> {
    let low = FloatFormat::from_name(&a.format).map_err(|e| e.to_string())?;
    let high = FloatFormat::from_name(&a.high_format).map_err(|e| e.to_string())?;
    let (u, uh) = (low.unit_roundoff(), high.unit_roundoff());
    let rho = bounds::db_to_linear(a.rho_db);
    let model = if a.deterministic {
        ErrorModel::Deterministic
    } else {
        ErrorModel::Probabilistic(a.lambda)
    };
    let e = |e: bounds::BoundError| e.to_string();
    let m_max = match bounds::m_max_simo(rho, u, a.lambda).map_err(e)? {
        MMax::Finite(n) => n.to_string(),
        MMax::Unbounded => "unbounded".into(),
    };
    let mut out = header(&[
        ("format", low.to_string()),
        ("high_format", high.to_string()),
        ("block_size", a.block_size.to_string()),
        ("K", a.k.to_string()),
        ("rho_db", fmt(a.rho_db)),
        ("lambda", fmt(a.lambda)),
        (
            "model",
            if a.deterministic {
                "deterministic"
            } else {
                "probabilistic"
            }
            .into(),
        ),
        ("samples", a.samples.to_string()),
        ("seed", a.seed.to_string()),
        ("m_max_simo", m_max),
        (
            "simo_snr_ceiling",
            fmt(bounds::lb_rate_simo_snr_ceiling(100, u, a.lambda)
                .map_err(e)?
                .value_bits),
        ),
        (
            "miso_ceiling",
            fmt(bounds::lb_rate_miso_ceiling(u, a.lambda)
                .map_err(e)?
                .value_bits),
        ),
    ]);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "M",
        "delta_simo",
        "delta_miso",
        "sqrt2_xi",
        "lb_rate_simo",
        "lb_rate_miso",
        "rate_gap",
        "c1_u",
        "c_u",
        "upsilon",
        "lb_sumrate_mu_simo",
        "expected_cd_sq",
        "lb_sumrate_mu_miso",
    ])
    .map_err(|e| e.to_string())?;
    let opt = |r: Result<f64, bounds::BoundError>| r.map_or(String::new(), fmt);
    for &m in &a.m {
        let mut rec = vec![
            m.to_string(),
            opt(bounds::delta_simo_with(m, u, model)),
            opt(bounds::delta_miso_with(u, model)),
            opt(bounds::xi_bn_with(a.block_size, m, u, uh, model)
                .map(|x| std::f64::consts::SQRT_2 * x)),
            opt(bounds::lb_rate_simo(m, rho, u, a.lambda).map(|r| r.value_bits)),
            opt(bounds::lb_rate_miso(m, rho, u, a.lambda).map(|r| r.value_bits)),
            opt(bounds::rate_gap(m, rho, u, a.lambda).map(|r| r.value_bits)),
            opt(bounds::c1_u_with(m, a.k, u, model)),
            opt(bounds::c_u_with(m, a.k, u, model)),
        ];
        if m > a.k {
            let method = UpsilonMethod::MonteCarlo {
                samples: a.samples,
                seed: a.seed,
            };
            let ups = bounds::upsilon(m, a.k, method);
            rec.push(opt(ups.clone()));
            rec.push(opt(ups.and_then(|y| {
                bounds::lb_sumrate_mu_simo(m, a.k, rho, u, a.lambda, y).map(|r| r.value_bits)
            })));
            let cd =
                bounds::expected_cd_sq(m, a.k, u, a.lambda, a.samples, a.seed).map(|est| est.mean);
            rec.push(opt(cd.clone()));
            rec.push(opt(cd.and_then(|c| {
                bounds::lb_sumrate_mu_miso(m, a.k, rho, u, a.lambda, c).map(|r| r.value_bits)
            })));
        } else {
            rec.extend(std::iter::repeat_n(String::new(), 4));
        }
        w.write_record(&rec).map_err(|e| e.to_string())?;
    }
    out.push_str(&String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).expect("utf-8"));
    print!("{out}");
    Ok(())
}

fn cost(a: &CostArgs) -> Result<(), String> {
    let counting = match a.counting {
        Counting::Fractional => BlockCounting::Fractional,
        Counting::Ceiling => BlockCounting::Ceiling,
    };
    let mut out = header(&[
        ("m", a.m.to_string()),
        ("p", a.p.to_string()),
        ("counting", format!("{counting:?}").to_lowercase()),
    ]);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "n",
        "b",
        "G",
        "mixed_sum",
        "mixed_mul",
        "low_sum",
        "low_mul",
        "high_sum",
        "high_mul",
        "summation_overhead",
        "total_overhead",
    ])
    .map_err(|e| e.to_string())?;
    for &n in &a.n {
        for &b in &a.b {
            for &g in &a.g {
                let c =
                    bounds::cost_model(a.m, n, a.p, b, g, counting).map_err(|e| e.to_string())?;
                w.write_record([
                    n.to_string(),
                    b.to_string(),
                    g.to_string(),
                    fmt(c.mixed.summations),
                    fmt(c.mixed.multiplications),
                    fmt(c.low.summations),
                    fmt(c.low.multiplications),
                    fmt(c.high.summations),
                    fmt(c.high.multiplications),
                    fmt(c.summation_overhead()),
                    fmt(c.total_overhead()),
                ])
                .map_err(|e| e.to_string())?;
            }
        }
    }
    out.push_str(&String::from_utf8(w.into_inner().map_err(|e| e.to_string())?).expect("utf-8"));
    print!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Sweep(a) => sweep(a),
        Command::Bounds(a) => bounds_table(a),
        Command::Verify(a) => verify(a),
        Command::Cost(a) => cost(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
