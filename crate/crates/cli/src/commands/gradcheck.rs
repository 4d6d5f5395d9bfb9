use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, ValueEnum};
use indexmap::IndexMap;
use stereokit::autodiff::suite::{run_suite, CaseResult, CASES, TOLERANCE};
use stereokit::autodiff::Fault;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// Small random inputs plus the tiny network at 8×8.
    Tiny8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InjectedFault {
    /// Halve the ELU derivative on its negative branch.
    EluBackward,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = Scale::Tiny8)]
    pub scale: Scale,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, value_enum)]
    pub inject_fault: Option<InjectedFault>,
}

pub fn run(a: GradcheckArgs) -> Result<ExitCode> {
    super::init_threads(None, None)?;
    let fault = a.inject_fault.map(|f| match f {
        InjectedFault::EluBackward => Fault::EluBackward,
    });
    let mut worst: IndexMap<&str, CaseResult> = IndexMap::new();
    let mut checks: IndexMap<&str, usize> = IndexMap::new();
    for seed in 0..a.seeds {
        for r in run_suite(seed, fault)? {
            *checks.entry(r.name).or_default() += 1;
            match worst.get(r.name) {
                Some(w) if w.max_rel_error >= r.max_rel_error => {}
                _ => {
                    worst.insert(r.name, r);
                }
            }
        }
    }
    println!("op,max_rel_error,worst_seed,checks,status");
    let mut failed = Vec::new();
    for name in CASES {
        let w = &worst[*name];
        let status = if w.passed() { "pass" } else { "FAIL" };
        println!("{name},{:.3e},{},{},{status}", w.max_rel_error, w.seed, checks[*name]);
        if !w.passed() {
            failed.push(*name);
        }
    }
    if failed.is_empty() {
        eprintln!("all {} ops below {TOLERANCE:e} over {} seeds", CASES.len(), a.seeds);
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failed: {}", failed.join(", "));
        Ok(ExitCode::FAILURE)
    }
}
