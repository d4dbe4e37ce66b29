//! `llsim`: run attack scenarios and the beam geolocation pipeline.

mod geo;
mod sim;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use llsim_core::geoloc::{GeolocError, LatLon};
use llsim_core::simkit::{ReportFormat, SimError};

#[derive(Debug, Parser)]
#[command(name = "llsim", version, about = "Lower-layer attack simulator and beam geolocation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one or more scenario files and write their metrics.
    Simulate(sim::SimulateArgs),
    /// Build a beam fingerprint map from a drive-test survey.
    Fingerprint(geo::FingerprintArgs),
    /// Estimate positions from sniffed RA responses.
    Localize(geo::LocalizeArgs),
    /// Reconstruct a walked path from one UE's CSI reports.
    Track(geo::TrackArgs),
    /// Convert a saved report.json into another output format.
    Report(sim::ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ReportFormat::JsonDoc,
            Format::Csv => ReportFormat::CsvTables,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Empty(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Empty(_) => 4,
        }
    }

    /// Name the input a config error came from; I/O errors already do.
    pub fn context(self, path: &std::path::Path) -> Self {
        match self {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            e => e,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::ConfigInvalid(_) => CliError::Config(e.to_string()),
            SimError::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<GeolocError> for CliError {
    fn from(e: GeolocError) -> Self {
        match e {
            GeolocError::Io(_) => CliError::Io(e.to_string()),
            GeolocError::EmptyPath => CliError::Empty(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

/// `LAT,LON` in decimal degrees.
pub fn parse_latlon(s: &str) -> Result<LatLon, String> {
    let (lat, lon) = s.split_once(',').ok_or("expected LAT,LON")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v:?}: {e}"));
    let (lat, lon) = (num(lat)?, num(lon)?);
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(format!("{lat},{lon} is not a position"));
    }
    Ok(LatLon::new(lat, lon))
}

pub fn write_file(path: &PathBuf, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => sim::simulate(a),
        Command::Fingerprint(a) => geo::fingerprint(a),
        Command::Localize(a) => geo::localize(a),
        Command::Track(a) => geo::track(a),
        Command::Report(a) => sim::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("llsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn every_flag_has_help() {
        for sub in Cli::command().get_subcommands() {
            for arg in sub.get_arguments() {
                assert!(arg.get_help().is_some(), "{} --{}", sub.get_name(), arg.get_id());
            }
        }
    }

    #[test]
    fn latlon_parsing() {
        assert_eq!(parse_latlon("40.4168,-3.7038"), Ok(LatLon::new(40.4168, -3.7038)));
        assert_eq!(parse_latlon(" 1.5 , 2 "), Ok(LatLon::new(1.5, 2.0)));
        assert!(parse_latlon("40.4").is_err());
        assert!(parse_latlon("91,0").is_err());
        assert!(parse_latlon("a,b").is_err());
    }
}
