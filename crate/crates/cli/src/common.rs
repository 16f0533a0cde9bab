use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use mgpi::scene::{read_demonstration, Demonstration};

/// Environment variable that relocates the default output directory.
pub const OUT_DIR_ENV: &str = "MGPI_OUT_DIR";

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration (exit 1).
    Usage(String),
    /// Unreadable, malformed or incompatible input data (exit 2).
    Data(String),
    /// A verification command found a violation (exit 3).
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Check(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<mgpi::Error> for CliError {
    fn from(e: mgpi::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

/// Wraps an error from flag or config validation.
pub fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn data(e: impl fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

/// `--out` if given, otherwise `$MGPI_OUT_DIR/<file_name>`, otherwise `out/<file_name>`.
pub fn output_path(flag: Option<PathBuf>, file_name: &str) -> PathBuf {
    flag.unwrap_or_else(|| default_out_dir().join(file_name))
}

pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

/// Writes `contents`, creating parent directories.
pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| data(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| data(format!("{}: {e}", path.display())))
}

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Files in `dir` with the given extension, sorted by name.
pub fn list_files(dir: &Path, extension: &str) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| data(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| data(format!("{}: {e}", dir.display())))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == extension) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(data(format!("no .{extension} files in {}", dir.display())));
    }
    Ok(files)
}

pub fn load_demo(path: &Path) -> CliResult<Demonstration> {
    let file = fs::File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    Ok(read_demonstration(file, path)?)
}

/// Every `.jsonl` demonstration in `dir`, in file-name order.
pub fn load_demos(dir: &Path) -> CliResult<Vec<Demonstration>> {
    list_files(dir, "jsonl")?.iter().map(|p| load_demo(p)).collect()
}

/// `key = value` settings file.
pub fn read_settings(path: &Path) -> CliResult<BTreeMap<String, String>> {
    mgpi::simulator::parse_key_values(&read_file(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Resolves one setting with precedence flag, then settings file, then default.
pub fn setting<T>(flag: Option<T>, file: &mut BTreeMap<String, String>, key: &str, default: T) -> CliResult<T>
where
    T: std::str::FromStr,
{
    let from_file = file.remove(key);
    if let Some(v) = flag {
        return Ok(v);
    }
    match from_file {
        Some(raw) => raw
            .parse()
            .map_err(|_| usage(format!("bad value `{raw}` for `{key}` in config file"))),
        None => Ok(default),
    }
}

/// Parses `x,y`.
pub fn parse_vec2(raw: &str) -> CliResult<mgpi::scene::Vec2> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let [x, y] = parts[..] else {
        return Err(usage(format!("expected `x,y`, got `{raw}`")));
    };
    let p = |s: &str| s.parse::<f64>().map_err(|_| usage(format!("bad number `{s}` in `{raw}`")));
    Ok(mgpi::scene::Vec2::new(p(x)?, p(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_precedence() {
        let mut file: BTreeMap<String, String> = [("epochs".to_string(), "7".to_string())].into();
        assert_eq!(setting(Some(3usize), &mut file.clone(), "epochs", 30).unwrap(), 3);
        assert_eq!(setting(None, &mut file, "epochs", 30usize).unwrap(), 7);
        assert!(file.is_empty());
        assert_eq!(setting(None, &mut file, "epochs", 30usize).unwrap(), 30);
        let mut bad: BTreeMap<String, String> = [("lr".to_string(), "fast".to_string())].into();
        assert!(matches!(setting(None, &mut bad, "lr", 1e-3), Err(CliError::Usage(_))));
    }

    #[test]
    fn vec2_parsing() {
        let v = parse_vec2("-1, 0.5").unwrap();
        assert_eq!((v.x, v.y), (-1.0, 0.5));
        assert!(parse_vec2("1").is_err());
        assert!(parse_vec2("a,b").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(usage("x").exit_code(), 1);
        assert_eq!(data("x").exit_code(), 2);
        assert_eq!(CliError::Check("x".into()).exit_code(), 3);
    }
}
