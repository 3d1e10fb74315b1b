use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched dimensions between related inputs.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A network failed structural validation.
    #[error("invalid network: {}", format_violations(.0))]
    InvalidNetwork(Vec<Violation>),

    /// Configuration rejected before any computation.
    #[error("config error: {0}")]
    Config(String),

    /// A numerical routine failed to converge or produced an unusable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed input data, with the 1-based line number when known.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// A single structural defect found in a network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A[i][j] != A[j][i] in the given layer (0-based indices).
    Symmetry { layer: usize, i: usize, j: usize },
    /// Nonzero diagonal entry in the given layer.
    Diagonal { layer: usize, i: usize },
    /// Entry not in {0, 1}.
    NotBinary { layer: usize, i: usize, j: usize },
    /// A layer's matrix is not n_nodes x n_nodes.
    LayerShape { layer: usize, rows: usize, cols: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::Symmetry { layer, i, j } => {
                write!(f, "layer {layer}: A[{i}][{j}] != A[{j}][{i}]")
            }
            Violation::Diagonal { layer, i } => write!(f, "layer {layer}: A[{i}][{i}] != 0"),
            Violation::NotBinary { layer, i, j } => {
                write!(f, "layer {layer}: A[{i}][{j}] not in {{0,1}}")
            }
            Violation::LayerShape { layer, rows, cols } => {
                write!(f, "layer {layer}: shape {rows}x{cols} inconsistent with node count")
            }
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(5).map(|x| x.to_string()).collect();
    let mut s = shown.join("; ");
    if v.len() > 5 {
        s.push_str(&format!("; ... ({} total)", v.len()));
    }
    s
}
