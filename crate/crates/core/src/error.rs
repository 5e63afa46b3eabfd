use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero vector")]
    ZeroVector,

    #[error("degenerate mean: the sample vectors sum to zero")]
    DegenerateMean,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length {len} exceeds dimension {dim} (2^{n})")]
    TooLong { len: usize, dim: usize, n: usize },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("vector is not unit norm (norm {0})")]
    NotUnitNorm(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("k exceeds decomposition size: k = {k}, at most {max}")]
    KExceedsSize { k: usize, max: usize },

    #[error("zero reconstruction: truncated vector has no weight")]
    ZeroReconstruction,

    #[error("qubit {index} out of range for {total} qubits")]
    QubitOutOfRange { index: usize, total: usize },

    #[error("control and target are the same qubit ({0})")]
    ControlIsTarget(usize),

    #[error("ancilla value {value} out of range for {ancillas} ancilla qubits")]
    AncillaValueOutOfRange { value: usize, ancillas: usize },

    #[error("{0} qubits exceed the simulator cap of {max}", max = crate::statevec::MAX_QUBITS)]
    TooManyQubits(usize),

    #[error("divergence: non-finite gradient at index {0}")]
    Divergence(usize),

    #[error("batchnorm undefined for a training batch of size {0}")]
    BatchNormUndefined(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("class {class} has {count} members, fewer than {folds} folds")]
    ClassTooSmall { class: usize, count: usize, folds: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumeric { row: usize, column: String, value: String },

    #[error("missing label column {0:?}")]
    MissingColumn(String),

    #[error("unknown dataset {name:?}; known datasets: {known}")]
    UnknownDataset { name: String, known: String },

    #[error("dataset {name:?} not found (looked for {looked}); {hint}")]
    DatasetMissing { name: String, looked: String, hint: String },

    #[error("dataset {0:?} has regression targets; a classification dataset is required")]
    NotClassification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
