use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::RunConfig;
use crate::error::CliError;

/// CSV file whose first lines record the command, seed, config digest and
/// the full configuration.
pub struct CsvOut {
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, command: &str, config: &RunConfig, header: &[&str]) -> Result<Self, CliError> {
        let mut file = BufWriter::new(File::create(path)?);
        writeln!(file, "# mess {command}")?;
        writeln!(file, "# seed={} config_sha256={}", config.seed, config.digest())?;
        writeln!(file, "# config={}", config.canonical())?;
        let mut writer = csv::Writer::from_writer(file);
        writer.write_record(header)?;
        Ok(Self { writer })
    }

    pub fn row<I, S>(&mut self, fields: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush()?;
        Ok(())
    }
}

/// Shortest round-trip representation; stable across runs.
pub fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else {
        format!("{x}")
    }
}
