use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("sample coordinate ({x}, {y}) outside raster {width}x{height}")]
    SampleOutOfRange { x: f64, y: f64, width: usize, height: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("scale ladder error: {0}")]
    Ladder(String),

    #[error("window plan error: {0}")]
    Plan(String),

    #[error("quantization error: {0}")]
    Quantization(String),

    #[error("atlas capacity exceeded: charts need {required} texels, atlas of side {atlas_size} allows {allowed}; try atlas side {suggested_size}")]
    AtlasCapacity { required: usize, allowed: usize, atlas_size: usize, suggested_size: usize },

    #[error("unknown backend `{0}`")]
    Registry(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("covariance is not positive semi-definite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("backend failed at step {step} (t = {t})")]
    Backend {
        step: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
