use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use grainlayer::cell::{solve_psi_with, PsiOptions};
use grainlayer::config::RunConfig;
use grainlayer::geometry::Material;
use grainlayer::io::{bank_table, effective_table, extract_profile, fmt_f64, grain_cell_averages, micro_table};
use grainlayer::io::{profile_table, CsvTable, FieldDump};
use grainlayer::params::Case;
use grainlayer::studies::{self, grain_profile, Snapshot};
use grainlayer::Error;

#[derive(Parser)]
#[command(name = "grainlayer", version, about = "Heat transfer through a thin grain layer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Sectioned key=value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override a key, e.g. `--set physics.alpha_f=10`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Resolved micro model.
    Micro(Common),
    /// Effective model with grain cell problems (disconnected grains).
    EffectiveA(Common),
    /// Effective model with an interface heat equation (connected grains).
    EffectiveB(Common),
    /// Effective conductivity and measures of the configured cell shape.
    CellConductivity {
        #[command(flatten)]
        common: Common,
        /// Also write the corrector fields.
        #[arg(long)]
        dump: bool,
    },
    /// Sweep study configured in `[study]`.
    Study(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_solver_failure() {
        3
    } else {
        2
    }
}

fn load(c: &Common) -> Result<RunConfig, Error> {
    let cfg = RunConfig::from_file(&c.config, &c.set)?;
    std::fs::create_dir_all(&c.out)?;
    std::fs::write(c.out.join("config.ini"), cfg.raw.canonical())?;
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Micro(c) => {
            let cfg = load(&c)?;
            let run = studies::run_micro(&cfg)?;
            micro_table(&run.ledger).write(&c.out.join("micro.csv"))?;
            let snap = Snapshot::from(&run);
            let dump = snap.dump()?;
            write_fields(&c.out, &cfg, &dump)?;
            let grain = grain_cell_averages(&dump, cfg.eps);
            let (pts, means): (Vec<_>, Vec<_>) = grain.into_iter().unzip();
            bank_table(dump.d, &pts, &means).write(&c.out.join("grain.csv"))?;
        }
        Command::EffectiveA(c) => effective(&c, Case::A)?,
        Command::EffectiveB(c) => effective(&c, Case::B)?,
        Command::CellConductivity { common: c, dump } => {
            let cfg = load(&c)?;
            let opts = PsiOptions { kappa_g: cfg.params.kappa_g, ..Default::default() };
            let k = solve_psi_with(&cfg.shape, cfg.cell_n, &opts)?;
            let mut header = Vec::new();
            let mut row = Vec::new();
            for i in 0..k.d {
                for j in 0..k.d {
                    header.push(format!("kappa_{}{}", i + 1, j + 1));
                    row.push(fmt_f64(k.get(i, j)));
                }
            }
            header.extend(["vol_z", "gamma_f", "gamma_s"].map(String::from));
            row.extend([k.measures.vol_z, k.measures.gamma_f, k.measures.gamma_s].map(fmt_f64));
            let mut t = CsvTable { header, rows: vec![] };
            t.push(row);
            print!("{}", t.to_string());
            t.write(&c.out.join("cell_conductivity.csv"))?;
            if dump {
                let g = &k.raster.grid;
                let labels: Vec<u8> =
                    k.raster.inside.iter().map(|&i| if i { Material::Grain } else { Material::Fluid }.code()).collect();
                for (i, psi) in k.psi.iter().enumerate() {
                    FieldDump::new(g, labels.clone(), psi.values.clone())?
                        .write(&c.out.join(format!("psi_{}.glfd", i + 1)))?;
                }
            }
        }
        Command::Study(c) => {
            let cfg = load(&c)?;
            studies::run_study(&cfg)?.write(&c.out, &cfg.hash())?;
        }
    }
    Ok(())
}

fn effective(c: &Common, case: Case) -> Result<(), Error> {
    let cfg = load(c)?;
    let run = studies::run_effective(&cfg, case)?;
    effective_table(&run.ledger).write(&c.out.join("effective.csv"))?;
    let dump = Snapshot::from(&run).dump()?;
    write_fields(&c.out, &cfg, &dump)?;
    let (pts, means): (Vec<_>, Vec<_>) = grain_profile(&run).into_iter().unzip();
    bank_table(dump.d, &pts, &means).write(&c.out.join("grain.csv"))
}

/// Final field dump plus the lateral profile through the first row above `Σ`.
fn write_fields(out: &Path, cfg: &RunConfig, dump: &FieldDump) -> Result<(), Error> {
    dump.write(&out.join("final.glfd"))?;
    let offsets: Vec<f64> = if dump.d == 3 { vec![0.5 * cfg.lateral, 0.0] } else { vec![0.0] };
    profile_table(&extract_profile(dump, 0, &offsets)?).write(&out.join("sigma_profile.csv"))
}
