use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gdfe::io::{run_scenario, timing_comparison, ScenarioConfig};
use gdfe::material::MaterialParams;
use gdfe::mesh::generate_structured_cube;
use gdfe::solver::NewtonOptions;
use gdfe::verify::{
    condensation_equivalence, coupling_block_probe, cube_count_report, two_tet_fixture, OracleSuite,
};

#[derive(Parser)]
#[command(name = "gdfe", version, about = "Finite-strain gradient damage solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a TOML config file.
    Run { config: PathBuf },
    /// Print the count test for unit cubes with 2^s cells per axis, s = 1..=steps.
    CountTest {
        #[arg(long, default_value_t = 3)]
        steps: u32,
        /// Print CSV instead of a table.
        #[arg(long)]
        csv: bool,
    },
    /// Run the verification suite: count test, coupling rank probe,
    /// finite-difference oracles and the condensation check.
    Verify {
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        /// Also write the oracle results as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Compare assembly and solve times of two runs on the same mesh.
    Compare {
        config_a: PathBuf,
        config_b: PathBuf,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config } => run(config),
        Command::CountTest { steps, csv } => count(steps, csv),
        Command::Verify { seed, samples, csv } => verify(seed, samples, csv),
        Command::Compare { config_a, config_b } => compare(config_a, config_b),
    }
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, ExitCode> {
    ScenarioConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}

fn run(path: PathBuf) -> ExitCode {
    let config = match load(&path) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let out = match run_scenario(&config) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(count) = &out.count {
        print!("{}", count.to_text());
    }
    let mut code = ExitCode::SUCCESS;
    if let Some(report) = &out.report {
        let last = report.steps.last();
        println!(
            "{}: {} of {} steps, u = {:.4} mm, F = {:.4} N, D_max = {:.6}",
            report.formulation,
            report.steps.len(),
            config.load.map_or(0, |l| l.n_steps()),
            last.map_or(0.0, |s| s.u_prescribed),
            last.map_or(0.0, |s| s.reaction),
            report.d_max(),
        );
        println!(
            "assembly {:.1} ms, solve {:.1} ms, wall {:.1} ms",
            report.total_assembly_ms, report.total_solve_ms, report.wall_ms
        );
        if let Some(abort) = &report.aborted {
            println!(
                "aborted at step {} (u = {} mm): {}",
                abort.step, abort.u_target, abort.reason
            );
            code = ExitCode::FAILURE;
        }
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    code
}

fn count(steps: u32, csv: bool) -> ExitCode {
    match cube_count_report(1..=steps) {
        Ok(r) => {
            print!("{}", if csv { r.to_csv() } else { r.to_text() });
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn verify(seed: u64, samples: usize, csv: Option<PathBuf>) -> ExitCode {
    let mut ok = true;
    let report = cube_count_report(1..=3).expect("cube meshes are valid");
    print!("count test\n{}", report.to_text());
    ok &= report
        .entries
        .iter()
        .all(|e| e.count_with_bubble == e.dim_v as i64);

    let params = MaterialParams::plate(0.0, 1.0, 100.0).expect("valid parameters");
    for (s, bubble) in [(1, true), (2, true), (2, false)] {
        let mesh = generate_structured_cube(1 << s, 1.0).expect("valid cube");
        match coupling_block_probe(&mesh, &params, bubble) {
            Ok(p) => {
                println!(
                    "coupling block s={s} {}: {}x{}, rank {}, smallest singular value {:.3e}",
                    if bubble {
                        "with bubble"
                    } else {
                        "without bubble"
                    },
                    p.n_damage_dofs,
                    p.n_multiplier_dofs,
                    p.rank,
                    p.smallest_singular_value
                );
                ok &= p.full_column_rank() == bubble;
            }
            Err(e) => {
                println!("coupling block s={s}: {e}");
                ok = false;
            }
        }
    }

    let oracles = OracleSuite {
        samples,
        ..Default::default()
    }
    .run(seed);
    print!("{}", oracles.to_text());
    ok &= oracles.passed();
    if let Some(path) = csv {
        if let Err(e) = std::fs::write(&path, oracles.to_csv()) {
            eprintln!("error: {}: {e}", path.display());
            ok = false;
        }
    }

    let (mesh, bcs) = two_tet_fixture();
    let p = MaterialParams::new(1000.0, 0.3, 0.0, 10.0, 1.0).expect("valid parameters");
    match condensation_equivalence(
        &mesh,
        p,
        bcs,
        &[1.0, 2.0, 3.0, 2.0, 3.5],
        NewtonOptions::default(),
    ) {
        Ok(r) => {
            let diff = r.max_difference();
            println!(
                "condensation: {} iterations, max difference {diff:.3e}",
                r.iterations.len()
            );
            ok &= diff < 1e-10 && r.unconverged_steps.is_empty();
        }
        Err(e) => {
            println!("condensation: {e}");
            ok = false;
        }
    }
    println!(
        "{}",
        if ok {
            "all checks passed"
        } else {
            "verification FAILED"
        }
    );
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn compare(a: PathBuf, b: PathBuf) -> ExitCode {
    let (a, b) = match (load(&a), load(&b)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(code), _) | (_, Err(code)) => return code,
    };
    match timing_comparison(&a, &b) {
        Ok(t) => {
            print!("{}", t.to_text());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
