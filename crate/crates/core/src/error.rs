use alloc::string::String;
use alloc::vec::Vec;

use crate::expr::ParseError;

pub type Result<T> = core::result::Result<T, Error>;

/// Node-level rank witness attached to a [`Error::RankDrift`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankWitness {
    pub node: usize,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("unbound parameter `{0}`")]
    UnboundParameter(String),

    #[error("non-finite result")]
    NonfiniteResult,

    #[error("evaluation of entry ({i},{j}) at t = {t} failed: {source}")]
    EvalAt {
        i: usize,
        j: usize,
        t: f64,
        source: alloc::boxed::Box<Error>,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error(
        "{what} changes rank on the grid at level {level}: expected {expected}, found {}",
        describe(found)
    )]
    RankDrift {
        level: usize,
        what: &'static str,
        expected: usize,
        found: Vec<RankWitness>,
    },

    #[error("pair is not pre-regular at level {level}: {reason}")]
    NotPreRegularAtLevel { level: usize, reason: String },

    #[error("matrix pencil is not regular")]
    NotRegular,

    #[error("admissible sequence is not regular: {0}")]
    NotRegularTractability(String),

    #[error("characteristics require a regular reduction chain")]
    NotRegularInput,

    #[error("adjoint pair is not regular: {0}")]
    AdjointNotRegular(String),

    #[error("subspaces are not complementary at node {node} (condition {cond:e})")]
    ComplementError { node: usize, cond: f64 },

    #[error("the flow subspace is trivial (d = 0)")]
    ZeroFlow,

    #[error("transformation is singular at node {0}")]
    SingularTransform(usize),

    #[error("F22 block is singular at node {0}")]
    SingularF22(usize),

    #[error("invalid characteristic profile: {0}")]
    InvalidProfile(String),

    #[error("rho must be nonzero")]
    ZeroRho,
}

fn describe(found: &[RankWitness]) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    for (k, w) in found.iter().take(8).enumerate() {
        if k > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "rank {} at node {}", w.rank, w.node);
    }
    if found.len() > 8 {
        let _ = write!(s, " (+{} more)", found.len() - 8);
    }
    s
}
