use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use nalgebra::DMatrix;
use wavecal::io::{grid_labels, matrix_to_csv, write_atomic};
use wavecal::model::grid;
use wavecal::signals::{dj_function, TestSignal, TestSignalSpec, DEFAULT_TARGET_SD};

use crate::failure::Failure;

#[derive(Debug, Args)]
pub struct SignalArgs {
    /// bumps, blocks, doppler or heavisine.
    pub name: String,
    /// Grid size (a power of two).
    #[arg(long, short)]
    pub m: usize,
    /// Rescale to this standard deviation.
    #[arg(long, default_value_t = DEFAULT_TARGET_SD, conflicts_with = "raw")]
    pub sd: f64,
    /// Keep the original amplitudes.
    #[arg(long)]
    pub raw: bool,
    /// Output file; standard output when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &SignalArgs) -> Result<(), Failure> {
    let signal: TestSignal = args.name.parse()?;
    let target = if args.raw { None } else { Some(args.sd) };
    let values = dj_function(&TestSignalSpec::new(signal, args.m, target))?;
    let column = DMatrix::from_column_slice(values.len(), 1, &values);
    let labels = grid_labels(&grid(args.m));
    let bytes = matrix_to_csv(Some(("t", &labels)), &[signal.name().to_owned()], &column)?;
    match &args.out {
        Some(path) => write_atomic(path, &bytes).map_err(|e| Failure::io(path, e)),
        None => std::io::stdout().write_all(&bytes).map_err(|e| Failure {
            code: crate::failure::IO,
            message: format!("stdout: {e}"),
        }),
    }
}
