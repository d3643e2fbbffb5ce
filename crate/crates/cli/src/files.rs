//! File plumbing shared by the commands.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use ksme_core::Mdp;

use crate::error::{CliError, CliResult};

/// Name of the resolved-configuration snapshot written next to every output.
pub const SNAPSHOT: &str = "resolved_config.json";

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    text
}

pub fn read_mdp(path: &Path) -> CliResult<Mdp> {
    Mdp::from_json_str(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Write `config` as `resolved_config.json` inside `dir`.
pub fn write_snapshot<T: Serialize>(dir: &Path, config: &T) -> CliResult<()> {
    write_text(&dir.join(SNAPSHOT), &to_json(config))
}

/// `# <schema> v1` followed by CSV `rows` under `header`.
pub fn versioned_csv(schema: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<String> {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(header).map_err(ksme_core::Error::from)?;
    for row in rows {
        out.write_record(row).map_err(ksme_core::Error::from)?;
    }
    let body = out.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    let mut text = ksme_core::csvio::header_line(schema);
    text.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    Ok(text)
}
