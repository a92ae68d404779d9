use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {position}: {message} (found `{token}`)")]
    Syntax { position: usize, token: String, message: String },

    #[error("unresolved column `{column}`: searched sources [{searched}]")]
    UnresolvedColumn { column: String, searched: String },

    #[error("join graph is disconnected: components {0:?}")]
    Disconnected(Vec<Vec<String>>),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("replacement source `{replacement}` does not expose still-referenced column `{column}`")]
    MissingColumn { replacement: String, column: String },

    #[error("sketch is empty")]
    EmptySketch,

    #[error("cannot merge GK sketches with epsilon {0} and {1}")]
    EpsilonMismatch(f64, f64),

    #[error("cannot merge HLL sketches with precision {0} and {1}")]
    PrecisionMismatch(u8, u8),

    #[error("invalid sketch parameter: {0}")]
    SketchParameter(String),

    #[error("degenerate statistics: {0}")]
    DegenerateStats(String),

    #[error("unknown source `{0}`")]
    UnknownSource(String),

    #[error("unknown column `{column}` in `{source_name}`; candidates: [{candidates}]")]
    UnknownColumn { source_name: String, column: String, candidates: String },

    #[error("parameter `${0}` is not bound")]
    UnboundParameter(String),

    #[error("unknown UDF `{0}`")]
    UnknownUdf(String),

    #[error("no secondary index on {dataset}.{column}")]
    MissingIndex { dataset: String, column: String },

    #[error("`{0}` is not a base dataset; intermediate results carry no secondary index")]
    NotBaseDataset(String),

    #[error("type mismatch: {0}")]
    TypeMismatch(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid plan: {0}")]
    InvalidPlan(String),

    #[error("static enumeration supports at most {max} datasets, query has {found}")]
    TooManyDatasets { max: usize, found: usize },

    #[error("strategies disagree on query `{query}`: {detail}")]
    ResultMismatch { query: String, detail: String },

    #[error("corrupt encoding: {0}")]
    Codec(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
