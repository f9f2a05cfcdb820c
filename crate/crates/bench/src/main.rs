// Copyright 2026 The BuffetFS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::path::PathBuf;
use std::process::ExitCode;

use buffetfs::transport::SocketServer;
use buffetfs::{BServer, ServerConfig};
use buffetfs_bench::report::CSV_COLUMNS;
use buffetfs_bench::{compare, run, BenchConfig, BenchError, BenchReport, Format, Manifest, Testbed};
use clap::{Parser, Subcommand};
use log::error;

#[derive(Parser, Debug)]
#[command(name = "bench", about = "BuffetFS workload driver", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Create the configured namespace and print its manifest.
    Populate {
        #[arg(long)]
        config: PathBuf,
        /// Write the manifest here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Populate, run the configured scenario and report.
    #[command(after_help = format!(
        "CSV reports start with '# clock=', '# seed=' and '# sampling=' lines, \
         then a header row with the columns:\n  {CSV_COLUMNS}\n\
         Rows with an empty worker column are totals over the worker rows."
    ))]
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// text, csv or json. Defaults to json with --out and text without.
        #[arg(long)]
        format: Option<Format>,
    },
    /// Compare the totals of two JSON reports.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Serve an empty in-memory namespace over TCP for socket runs.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7070")]
        addr: String,
    },
}

fn execute(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Populate { config, out } => {
            let cfg = BenchConfig::load(config)?;
            let bed = Testbed::new(&cfg)?;
            let manifest = Manifest::layout(cfg.file_count, cfg.dir_fanout, cfg.file_size_bytes, cfg.seed);
            bed.populate(&manifest)?;
            emit(out, &manifest.to_string())
        }
        Command::Run { config, out, format } => {
            let cfg = BenchConfig::load(config)?;
            let report = run(&cfg)?;
            let format = format.unwrap_or(if out.is_some() { Format::Json } else { Format::Text });
            emit(out, &report.render(format)?)
        }
        Command::Compare { a, b } => {
            let a = BenchReport::from_json(&std::fs::read_to_string(a)?)?;
            let b = BenchReport::from_json(&std::fs::read_to_string(b)?)?;
            print!("{}", compare(&a, &b));
            Ok(())
        }
        Command::Serve { addr } => {
            let server = SocketServer::bind(addr, BServer::new(ServerConfig::new(1, 0)))?;
            println!("listening on {}", server.local_addr());
            loop {
                std::thread::park();
            }
        }
    }
}

fn emit(out: Option<PathBuf>, text: &str) -> Result<(), BenchError> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ BenchError::Verification { .. }) => {
            error!("{e}");
            eprintln!("verification failed: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
