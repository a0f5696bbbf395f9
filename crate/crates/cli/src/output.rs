//! CSV emission helpers.
//!
//! Every output file starts with the metadata line
//! `# qcd-markov <version> config=<hash> seed=<seed>` and contains no
//! timestamps, so re-running a command with the same config and seed
//! reproduces the file byte for byte. Floats are written with 17
//! significant digits.

use std::io::Write;
use std::path::Path;

use crate::CliError;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 16-hex-digit FNV-1a hash of the canonical config text.
pub fn config_hash(canonical: &str) -> String {
    let mut hash = FNV_OFFSET;
    for byte in canonical.bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    format!("{hash:016x}")
}

/// 17-significant-digit decimal form used for every float column.
pub fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn metadata_line(hash: &str, seed: u64) -> String {
    format!(
        "# qcd-markov {} config={hash} seed={seed}",
        env!("CARGO_PKG_VERSION")
    )
}

/// Buffered line writer for result files.
pub struct CsvFile {
    writer: std::io::BufWriter<std::fs::File>,
    path: String,
}

impl CsvFile {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = std::fs::File::create(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        Ok(Self {
            writer: std::io::BufWriter::new(file),
            path: path.display().to_string(),
        })
    }

    pub fn line(&mut self, text: &str) -> Result<(), CliError> {
        writeln!(self.writer, "{text}")
            .map_err(|e| CliError::Runtime(format!("{}: {e}", self.path)))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer
            .flush()
            .map_err(|e| CliError::Runtime(format!("{}: {e}", self.path)))
    }
}
