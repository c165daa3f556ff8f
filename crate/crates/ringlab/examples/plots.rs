//! Regenerates the SVG plots of a `ringlab sim` run directory from its CSV files alone.
//!
//! ```text
//! cargo run --release --example plots -- <run-dir>
//! ```

use std::path::PathBuf;

use ringlab::fit::power_law_fit;
use ringlab::nlsim::read_diagnostics_csv;
use ringlab::plot::{Plot, Series};

fn main() -> ringlab::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).ok_or_else(|| ringlab::Error::Input("usage: plots <run-dir>".into()))?);
    let rows = read_diagnostics_csv(&dir.join("diagnostics.csv"))?;
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
    let t_est = report["t_est"].as_f64().ok_or_else(|| ringlab::Error::Format("report.json lacks t_est".into()))?;
    let window = (report["rate"]["window"][0].as_f64().unwrap_or(0.0), report["rate"]["window"][1].as_f64().unwrap_or(0.0));
    let tau: Vec<f64> = rows.iter().map(|r| t_est - r.t).collect();
    let grad: Vec<f64> = rows.iter().map(|r| r.grad_norm).collect();
    let fit = power_law_fit(&tau, &grad, window)?;
    let out = dir.join("rate_from_csv.svg");
    Plot::new("gradient norm", "T − t", "‖∇u‖")
        .log_log()
        .with(Series::new("‖∇u‖", tau.into_iter().zip(grad).collect()))
        .with(Series::from_fit(&fit))
        .write(&out)?;
    println!("slope {:.4}, written to {}", fit.exponent, out.display());
    Ok(())
}
