use clap::{Parser, Subcommand, ValueEnum};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use udc_core::bits::{BitString, CodecId, Container};
use udc_core::bounds::{converse_floor, lemma3_margin, plug_in_gap, shtarkov_asymptotic_gap};
use udc_core::distortion_space::{enumerate_realizable_classes, growth_bound, TableMode};
use udc_core::experiment::{run_experiment, run_invariant_suite, write_csv, ExperimentConfig, Faults};
use udc_core::nml::NmlCodec;
use udc_core::rd::{sd_membership, solve_rd};
use udc_core::rng::RNG_ID_PHILOX4X64_10;
use udc_core::table_codecs::{T1Codec, T2Codec};
use udc_core::{Error, Result};

#[derive(Parser)]
#[command(name = "udc", about = "Universal-distortion d-semifaithful codes", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    DropCorrection,
    BinaryIndex,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rate-distortion function and optimal output distribution.
    Rd {
        #[command(flatten)]
        common: Common,
    },
    /// Encode a symbol file (one integer per line) into a container.
    Encode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codec: String,
        #[arg(long)]
        input: PathBuf,
        /// Blocklength; defaults to the first grid point.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Decode a container back into a symbol file.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Enumerate realizable equivalence classes and save the table.
    Classes {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        j: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
    },
    /// Oracle values over the configured grid.
    Bounds {
        #[command(flatten)]
        common: Common,
    },
    /// Redundancy-scaling experiment; writes CSV.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Invariant suite; nonzero exit on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        fault: Vec<Fault>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::reference(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    })
}

fn read_symbols(path: &Path) -> Result<Vec<u8>> {
    std::fs::read_to_string(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| l.parse::<u8>().map_err(|e| Error::InvalidInput(format!("bad symbol {l:?}: {e}"))))
        .collect()
}

fn t1_codec(cfg: &ExperimentConfig, n: usize) -> Result<T1Codec> {
    let table = cfg.class_table_for(n)?;
    if table.mode == TableMode::Registry && cfg.class_table.is_none() {
        return Err(Error::Config("t1 at this n needs a class_table path to share the registry".into()));
    }
    Ok(T1Codec::new(table))
}

fn save_registry(cfg: &ExperimentConfig, c: &T1Codec) -> Result<()> {
    let t = c.table.read().unwrap();
    if let (TableMode::Registry, Some(p)) = (t.mode, &cfg.class_table) {
        std::fs::write(p, t.to_bytes()?)?;
    }
    Ok(())
}

fn encode(cfg: &ExperimentConfig, codec: CodecId, x: &[u8], n: usize, out: Option<&Path>) -> Result<()> {
    let (j, k) = (cfg.rho.j(), cfg.rho.k());
    if n == 0 || x.len() % n != 0 {
        return Err(Error::InvalidInput(format!("{} symbols do not split into blocks of {n}", x.len())));
    }
    let mut payload = BitString::new();
    let mut cap = 0u64;
    match codec {
        CodecId::T1 => {
            let c = t1_codec(cfg, n)?;
            for b in x.chunks(n) {
                payload.extend(&c.encode(b, &cfg.rho, &cfg.d)?.bits);
            }
            save_registry(cfg, &c)?;
        }
        CodecId::T2 => {
            let c = T2Codec::new(n, j, k, cfg.d.clone(), cfg.rho.rho_max_exact().clone())?;
            for b in x.chunks(n) {
                payload.extend(&c.encode(b, &cfg.rho)?.frame.bits);
            }
        }
        CodecId::Nml => {
            let c = NmlCodec::new(n, j, k, cfg.cap)?;
            cap = c.cap;
            for (i, b) in x.chunks(n).enumerate() {
                payload.extend(&c.encode(b, &cfg.rho, &cfg.d, cfg.seed, i as u64)?.frame.bits);
            }
        }
    }
    let container = Container {
        codec,
        n: u16::try_from(n).map_err(|_| Error::Size("n exceeds 65535".into()))?,
        j: j as u8,
        k: k as u8,
        seed: if codec == CodecId::Nml { cfg.seed } else { 0 },
        cap: u32::try_from(cap.min(u32::MAX as u64)).unwrap(),
        rng: RNG_ID_PHILOX4X64_10,
        payload,
    };
    let bytes = container.pack()?;
    match out {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn decode(cfg: &ExperimentConfig, input: &Path, out: Option<&Path>) -> Result<()> {
    let c = Container::unpack(&std::fs::read(input)?)?;
    let n = c.n as usize;
    if c.j as usize != cfg.rho.j() || c.k as usize != cfg.rho.k() {
        return Err(Error::Decode("container alphabets do not match the config".into()));
    }
    if c.rng != RNG_ID_PHILOX4X64_10 {
        return Err(Error::Decode(format!("unknown generator id {}", c.rng)));
    }
    let mut r = c.payload.reader();
    let mut y = Vec::new();
    let t1 = if c.codec == CodecId::T1 { Some(t1_codec(cfg, n)?) } else { None };
    let t2 = T2Codec::new(n, cfg.rho.j(), cfg.rho.k(), cfg.d.clone(), cfg.rho.rho_max_exact().clone())?;
    // A stored cap of u32::MAX stands for 2^32.
    let cap = if c.cap == u32::MAX { 1u64 << 32 } else { c.cap as u64 };
    let nml = if c.codec == CodecId::Nml { Some(NmlCodec::new(n, cfg.rho.j(), cfg.rho.k(), Some(cap))?) } else { None };
    let mut frame = 0u64;
    while r.remaining() > 0 {
        let before = r.position();
        let block = match c.codec {
            CodecId::T1 => t1.as_ref().unwrap().decode(&mut r)?,
            CodecId::T2 => t2.decode(&mut r)?,
            CodecId::Nml => nml.as_ref().unwrap().decode(&mut r, c.seed, frame)?,
        };
        if r.position() == before {
            return Err(Error::Decode("zero-length frame".into()));
        }
        y.extend(block);
        frame += 1;
    }
    let mut w = sink(out)?;
    for s in y {
        writeln!(w, "{s}")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Rd { common } => {
            let cfg = load(&common)?;
            let p = cfg.p.probs();
            let sol = solve_rd(p, cfg.d.value(), &cfg.rho, &Default::default())?;
            let m = sd_membership(p, cfg.d.value(), &cfg.rho, &sol);
            let v = serde_json::json!({
                "rate_nats": sol.rate,
                "q_star": sol.q_star,
                "lambda_star": sol.lambda_star,
                "d_max": sol.d_max,
                "distortion": sol.distortion,
                "kkt_residual": sol.kkt_residual,
                "in_sd": m.all(),
            });
            writeln!(sink(common.out.as_deref())?, "{}", serde_json::to_string_pretty(&v).unwrap())?;
        }
        Cmd::Encode { common, codec, input, n } => {
            let cfg = load(&common)?;
            let n = n.or(cfg.n_grid.first().copied()).ok_or_else(|| Error::Config("no blocklength".into()))?;
            encode(&cfg, CodecId::parse(&codec)?, &read_symbols(&input)?, n, common.out.as_deref())?;
        }
        Cmd::Decode { common, input } => {
            let cfg = load(&common)?;
            decode(&cfg, &input, common.out.as_deref())?;
        }
        Cmd::Classes { common, n, j, k } => {
            let t = enumerate_realizable_classes(n, j, k)?;
            let g = growth_bound(n, j, k)?;
            eprintln!("n={n} J={j} K={k}: {} realizable classes, growth bound {g}", t.len());
            match &common.out {
                Some(p) => std::fs::write(p, t.to_bytes()?)?,
                None => println!("{}", t.len()),
            }
        }
        Cmd::Bounds { common } => {
            let cfg = load(&common)?;
            let p = cfg.p.probs();
            let d = cfg.d.value();
            let mut w = csv::Writer::from_writer(sink(common.out.as_deref())?);
            let e = |e: csv::Error| Error::Io(e.to_string());
            w.write_record(["n", "log_p", "c_n", "converse_floor", "plugin_gap", "shtarkov_gap"]).map_err(e)?;
            for &n in &cfg.n_grid {
                let (log_p, c_n) = match lemma3_margin(p, &cfg.rho, &cfg.d, &[n]) {
                    Ok(v) => (v[0].log_p.to_string(), v[0].c_n.to_string()),
                    Err(_) => (String::new(), String::new()),
                };
                let floor = converse_floor(p, d, &cfg.rho, n).map(|v| v.to_string()).unwrap_or_default();
                let gap = plug_in_gap(p, d, &cfg.rho, n).map(|v| v.to_string()).unwrap_or_default();
                let sg = shtarkov_asymptotic_gap(n, cfg.rho.k()).map(|v| v.to_string()).unwrap_or_default();
                w.write_record([n.to_string(), log_p, c_n, floor, gap, sg]).map_err(e)?;
            }
            w.flush()?;
        }
        Cmd::Experiment { common } => {
            let cfg = load(&common)?;
            let rows = run_experiment(&cfg)?;
            let out = common.out.clone().or(cfg.output.clone());
            write_csv(&rows, sink(out.as_deref())?)?;
        }
        Cmd::Verify { common, fault } => {
            let cfg = load(&common)?;
            let faults = Faults {
                drop_correction: fault.iter().any(|f| matches!(f, Fault::DropCorrection)),
                binary_index_layout: fault.iter().any(|f| matches!(f, Fault::BinaryIndex)),
            };
            let results = run_invariant_suite(&cfg, faults);
            let mut w = sink(common.out.as_deref())?;
            for r in &results {
                writeln!(w, "{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail)?;
            }
            return Ok(results.iter().all(|r| r.passed));
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
