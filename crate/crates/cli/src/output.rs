use crate::CliError;
use std::io::Write;
use std::path::Path;

/// Writes `text` to a temporary file next to `path`, then renames it over
/// `path`, so readers never see a partial document.
pub fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::new("io-error", format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(text.as_bytes()).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// File name used for per-input artifacts.
pub fn artifact_name(input: &str) -> String {
    let base = Path::new(input).file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| input.to_string());
    format!("{base}.json")
}
