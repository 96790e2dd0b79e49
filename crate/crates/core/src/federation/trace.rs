use std::fmt;
use std::io::Write;

use serde::{Serialize, Serializer};

use crate::error::Result;

/// Which party a trace row describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceNode {
    Server,
    Client(usize),
}

impl fmt::Display for TraceNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceNode::Server => f.write_str("server"),
            TraceNode::Client(j) => write!(f, "client_{j}"),
        }
    }
}

impl Serialize for TraceNode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// One row of the optional training trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub round: usize,
    pub client_or_server: TraceNode,
    /// `L_D(θ)` on the pooled training data.
    pub loss_on_pooled_train: f64,
    /// `‖∇L_D(θ)‖` on the pooled training data.
    pub grad_norm: f64,
}

/// Writes the trace as CSV with a header row.
pub fn write_trace_csv<W: Write>(records: &[TraceRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for record in records {
        out.serialize(record)?;
    }
    out.flush().map_err(|e| crate::Error::io("<trace>", e))?;
    Ok(())
}
