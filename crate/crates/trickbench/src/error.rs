use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{}, row {row}: {message}", path.display())]
    Parse { path: PathBuf, row: usize, message: String },
    #[error("config: {0}")]
    Toml(String),
    #[error("toggle `{toggle}`: {message}")]
    Toggle { toggle: String, message: String },
    #[error("TRICKBENCH_SEED_OFFSET must be a non-negative integer, found `{0}`")]
    SeedOffset(String),
    #[error(transparent)]
    Core(#[from] trickbench_core::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> Error {
        let path = path.into();
        move |source| Error::Csv { path, source }
    }
}
