//! `gradcheck`: finite-difference verification of the analytic gradients.

use std::process::ExitCode;

use anyhow::Result;
use clap::Args;

use phone_embed::net::{grad_check, NetConfig};

#[derive(Args)]
pub struct GradcheckArgs {
    /// Worst acceptable relative error per parameter block.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    /// Toy network shape used for the check.
    #[arg(long, default_value_t = 5)]
    input_dims: usize,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [8usize, 4])]
    fc_dims: Vec<usize>,
    #[arg(long, default_value_t = 0.4)]
    dropout: f64,
}

pub fn run(args: GradcheckArgs) -> Result<ExitCode> {
    let config = NetConfig {
        input_dims: args.input_dims,
        hidden_per_direction: args.hidden,
        num_bilstm_layers: args.layers,
        fc_dims: args.fc_dims,
        dropout_prob: args.dropout,
    };
    let report = grad_check(&config, args.seed, args.tolerance)?;
    print!("{}", report.render());
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
