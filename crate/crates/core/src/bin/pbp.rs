use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use pbp_core::harness::{
    build_env, evaluate, parse_noise_mode, plan, run_selftest, sweep_noise, write_csv, ExperimentConfig, Plan,
};
use pbp_core::hsvi::AlphaPolicy;

#[derive(Parser)]
#[command(name = "pbp", about = "Planning with perception-based beliefs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the planning model and export the policy.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs/plan")]
        out: PathBuf,
    },
    /// Run acting episodes and write results.csv.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        /// Policy from a previous `plan`; solved afresh when absent.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value = "runs/evaluate")]
        out: PathBuf,
    },
    /// Noise sweep over the given probabilities.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        probabilities: Vec<f64>,
        /// Overrides the corruption mode of the config (additive or pure).
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
    },
    /// Run the belief-update property suites.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn prepare(config: &Path, out: &Path) -> anyhow::Result<ExperimentConfig> {
    let cfg = ExperimentConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    std::fs::create_dir_all(out)?;
    cfg.save(out.join("config.json"))?;
    Ok(cfg)
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Plan { config, out } => {
            let cfg = prepare(&config, &out)?;
            let env = build_env(&cfg)?;
            match plan(&cfg, &env)? {
                Plan::Alpha {
                    policy,
                    lower,
                    upper,
                    seconds,
                    iterations,
                } => {
                    policy.save_json(out.join("policy.json"))?;
                    println!("lower {lower:.6} upper {upper:.6} iterations {iterations} seconds {seconds:.2}");
                }
                Plan::Online { .. } => bail!("{} plans online; nothing to export", cfg.algorithm.name()),
            }
        }
        Cmd::Evaluate { config, policy, out } => {
            let cfg = prepare(&config, &out)?;
            let env = build_env(&cfg)?;
            let p = match policy {
                Some(path) => Plan::Alpha {
                    policy: AlphaPolicy::load_json(&path)?,
                    lower: f64::NAN,
                    upper: f64::NAN,
                    seconds: 0.0,
                    iterations: 0,
                },
                None => plan(&cfg, &env)?,
            };
            let rec = evaluate(&cfg, &env, &p)?;
            write_csv(out.join("results.csv"), std::slice::from_ref(&rec))?;
            std::fs::write(out.join("result.json"), serde_json::to_string_pretty(&rec)?)?;
            println!("{} {}: V = {:.4} ± {:.4}", rec.env, rec.algo, rec.v, rec.ci95);
        }
        Cmd::Sweep {
            config,
            probabilities,
            mode,
            out,
        } => {
            let mut cfg = prepare(&config, &out)?;
            if let Some(m) = mode {
                cfg.corruption.mode = parse_noise_mode(&m)?;
                cfg.save(out.join("config.json"))?;
            }
            let recs = sweep_noise(&cfg, &probabilities)?;
            write_csv(out.join("results.csv"), &recs)?;
            for r in &recs {
                println!("p = {:.2}: V = {:.4} ± {:.4}", r.noise_p, r.v, r.ci95);
            }
        }
        Cmd::Selftest { seed } => {
            let results = run_selftest(seed)?;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().any(|r| !r.passed) {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
