use std::process::ExitCode;

use besovinf::cli::{invariant_suite, resolve_config, run, Args};
use clap::Parser;

fn main() -> ExitCode {
    let args = Args::parse();
    if args.check {
        return match invariant_suite() {
            Ok(checks) => {
                for c in &checks {
                    let verdict = if c.passed { "PASS" } else { "FAIL" };
                    println!("{verdict} {:<28} {:.3e} (limit {:.1e})", c.name, c.value, c.limit);
                }
                if checks.iter().all(|c| c.passed) {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    let config = match resolve_config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&config) {
        Ok(report) => {
            match report.fit {
                Some(f) => println!(
                    "slope {:.4} ± {:.4} (predicted {:.4}), residual {:.3e}",
                    f.slope, f.slope_se, report.predicted_exponent, f.residual
                ),
                None => println!("no fit: {}", report.fit_note.as_deref().unwrap_or("")),
            }
            if let Some(n0) = report.hierarchy_n0 {
                println!("leading term dominates from N = {n0}");
            }
            for c in &report.checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                println!("{verdict} {:<28} {:.4e} (limit {:.2})", c.name, c.value, c.limit);
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
