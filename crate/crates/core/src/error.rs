use thiserror::Error;

pub type Result<T, E = LcError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LcError {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// Every class assigns zero density to this unit (0-based index).
    #[error("unit {unit} has zero density under every class")]
    DegenerateUnit { unit: usize },

    /// Responsibilities for this class (0-based) sum to (numerically) zero.
    #[error("class {class} is empty (total responsibility {mass:e})")]
    EmptyClass { class: usize, mass: f64 },

    /// A linear system was too ill-conditioned to solve. `class` is set when the
    /// system belongs to a single class block (nested cycles), which usually
    /// means the class is (quasi-)separated by the covariates.
    #[error("singular system{}: condition number {condition:e}", class_suffix(*.class))]
    Singular {
        class: Option<usize>,
        condition: f64,
    },

    #[error("coefficients diverged to non-finite values")]
    Diverged,

    #[error("iteration {iteration}: {source}")]
    Estimation {
        iteration: usize,
        #[source]
        source: Box<LcError>,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("io error: {0}")]
    Io(String),
}

fn class_suffix(class: Option<usize>) -> String {
    match class {
        Some(c) => format!(" for class {}", c + 1),
        None => String::new(),
    }
}

impl LcError {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ LcError::Estimation { .. } => e,
            other => LcError::Estimation {
                iteration,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with any iteration context removed.
    pub fn root(&self) -> &LcError {
        match self {
            LcError::Estimation { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for input/validation problems (as opposed to estimation failures).
    /// Anything raised inside an iteration counts as an estimation failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            LcError::Parse { .. } | LcError::Invalid(_) | LcError::Io(_) | LcError::Shape(_)
        )
    }
}

impl From<std::io::Error> for LcError {
    fn from(e: std::io::Error) -> Self {
        LcError::Io(e.to_string())
    }
}
