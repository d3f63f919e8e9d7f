use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::JsonMatrix;
use crate::linalg::BipartiteLabel;

use super::{
    is_completely_positive, is_ppt_operation, is_trace_preserving, verify_separable_form, QuantumOperation,
    SeparableWitness, SubOperation,
};

/// On-disk form of an operation:
/// `{ "input": [dA, dB], "subops": [ { "output": [dA', dB'], "kraus": [matrix, …] } ], "witness": … }`.
///
/// The optional witness lists, per sub-operation, the product factors
/// `{ "a": matrix, "b": matrix }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationDescriptor {
    pub input: [usize; 2],
    pub subops: Vec<SubOperationDescriptor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<Vec<WitnessPair>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubOperationDescriptor {
    pub output: [usize; 2],
    pub kraus: Vec<JsonMatrix>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessPair {
    pub a: JsonMatrix,
    pub b: JsonMatrix,
}

/// Class predicates of one operation, as reported by `classify`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub tp: bool,
    pub cp: bool,
    pub ppt: bool,
    pub separable_verified: bool,
}

impl OperationDescriptor {
    /// Builds the operation without requiring completeness, so classification
    /// can report a non-trace-preserving descriptor instead of rejecting it.
    pub fn to_operation(&self) -> Result<(QuantumOperation, Option<SeparableWitness>)> {
        let input = BipartiteLabel::new(self.input[0], self.input[1])?;
        let subops = self
            .subops
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let output = BipartiteLabel::new(s.output[0], s.output[1])?;
                let kraus = s.kraus.iter().map(|m| m.0.clone()).collect();
                SubOperation::new(input, output, kraus).map_err(|e| Error::Dimension(format!("subops[{i}]: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let op = QuantumOperation::new_incomplete(input, subops)?;
        let witness = self.witness.as_ref().map(|w| SeparableWitness {
            factors: w.iter().map(|pairs| pairs.iter().map(|p| (p.a.0.clone(), p.b.0.clone())).collect()).collect(),
        });
        Ok((op, witness))
    }

    pub fn from_operation(op: &QuantumOperation, witness: Option<&SeparableWitness>) -> Self {
        let l = op.input();
        OperationDescriptor {
            input: [l.dim_a, l.dim_b],
            subops: op
                .subops()
                .iter()
                .map(|s| SubOperationDescriptor {
                    output: [s.output().dim_a, s.output().dim_b],
                    kraus: s.kraus().iter().cloned().map(JsonMatrix).collect(),
                })
                .collect(),
            witness: witness.map(|w| {
                w.factors
                    .iter()
                    .map(|pairs| {
                        pairs
                            .iter()
                            .map(|(a, b)| WitnessPair { a: JsonMatrix(a.clone()), b: JsonMatrix(b.clone()) })
                            .collect()
                    })
                    .collect()
            }),
        }
    }
}

/// Runs every class predicate. `separable_verified` is false when no witness
/// is supplied; a malformed witness is an error.
pub fn classify(op: &QuantumOperation, witness: Option<&SeparableWitness>) -> Result<Classification> {
    let separable_verified = match witness {
        Some(w) => verify_separable_form(op, w)?,
        None => false,
    };
    Ok(Classification {
        tp: is_trace_preserving(op),
        cp: op.subops().iter().all(is_completely_positive),
        ppt: is_ppt_operation(op),
        separable_verified,
    })
}
