//! Shared plumbing for the subcommands: the two-tier error type behind the
//! exit-code contract (1 = usage or config problem, 2 = runtime failure) and
//! small filesystem helpers.

use std::path::Path;

/// Errors split by exit code: `Usage` exits 1, `Runtime` exits 2.
#[derive(Debug)]
pub enum AppError {
    /// Bad invocation or configuration; nothing was attempted.
    Usage(String),
    /// The pipeline itself failed.
    Runtime(String),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::Usage(msg) | AppError::Runtime(msg) => f.write_str(msg),
        }
    }
}

impl From<ecgi::Error> for AppError {
    fn from(err: ecgi::Error) -> Self {
        AppError::Runtime(err.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(err: std::io::Error) -> Self {
        AppError::Runtime(err.to_string())
    }
}

/// Subcommand result.
pub type Result<T> = std::result::Result<T, AppError>;

/// Shorthand for a usage-class error.
pub fn usage(msg: impl std::fmt::Display) -> AppError {
    AppError::Usage(msg.to_string())
}

/// Refuses to clobber an existing artifact unless `--force` was given.
pub fn ensure_writable(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(usage(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

/// Creates the directory (and parents) for a command's outputs.
pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)?;
    Ok(())
}
