/// Everything that can go wrong below the CLI layer.
///
/// Bounded searches that merely run out of steps (covering times, escape
/// times) do not error; they return an explicit exhaustion value instead.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("parameter {name} = {value} rejected: must satisfy {require}")]
    Parameter {
        name: &'static str,
        value: f64,
        require: &'static str,
    },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("no expansion band above s = {s} for alpha = {alpha}: {detail}")]
    BandInfeasible { alpha: f64, s: f64, detail: String },

    #[error("draw {draw} lies outside the kernel support [{lo}, {hi}]")]
    DrawOutsideSupport { draw: f64, lo: f64, hi: f64 },

    #[error("grid sizes differ: {left} vs {right} cells")]
    GridMismatch { left: usize, right: usize },

    #[error("grids are not nested: {fine} cells is not a multiple of {coarse}")]
    GridNotNested { fine: usize, coarse: usize },

    #[error("row {row} mass defect {defect:e} exceeds the assembly limit {limit:e}")]
    RowDefect { row: usize, defect: f64, limit: f64 },

    #[error(
        "power iteration stopped after {iters} iterations above tol {tol:e} \
         (last residual {residual:e})"
    )]
    NoConvergence { iters: u64, tol: f64, residual: f64 },

    #[error("empty sample set")]
    EmptySamples,

    #[error("start point {x0} lies outside {region}")]
    OutsideRegion { x0: f64, region: &'static str },

    #[error(
        "bounded-distortion hypothesis fails at step {step}: \
         image point {x} leaves [{lo}, {hi}]"
    )]
    DistortionHypothesis {
        step: usize,
        x: f64,
        lo: f64,
        hi: f64,
    },

    #[error("no admissible pair in the expansion-gap search: {detail}")]
    EmptyGapSearch { detail: String },

    #[error(
        "envelope violated at step {step}: distance {image} to zero \
         escapes [{lo}, {hi}] predicted from distance {x}"
    )]
    EnvelopeViolated {
        step: usize,
        x: f64,
        image: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{context}: {detail}")]
    Numeric {
        context: &'static str,
        detail: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
