//! The JSON plan document: batch assignments on disk.
//!
//! A document records the constraints a plan was built under, per-layer
//! batch sizes and phase counts for every level (the main rounds plus the
//! recursively planned remainder), and headline totals. Loading a document
//! reconstructs the exact in-memory plan, so a plan built once can drive
//! any number of later runs.

use std::fs;
use std::path::Path;

use cramnet_core::planner::LayerAssignment;
use cramnet_core::{BatchPlan, PlannerConstraints};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

// ── Document shape ───────────────────────────────────────────────────────────

/// Constraints echoed into the document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanConstraintsDoc {
    pub total_bytes: u64,
    pub latency_ms: Option<f32>,
    pub memory_step: u64,
}

/// One layer's assignment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanLayerDoc {
    pub layer: String,
    pub index: usize,
    pub batch: u32,
    pub phases: u32,
    pub predicted_ms: f64,
}

/// Headline numbers for the whole plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanTotalsDoc {
    pub throughput_img_per_s: f64,
    pub peak_bytes: u64,
    pub latency_ms: f32,
    pub total_ms: f32,
}

/// One plan level: rounds of a fixed assignment plus an optional nested
/// level for the leftover images.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanLevelDoc {
    pub requested: u32,
    pub rounds: u32,
    pub round_ms: f32,
    pub total_ms: f32,
    pub peak_bytes: u64,
    pub layers: Vec<PlanLayerDoc>,
    pub remainder: Option<Box<PlanLevelDoc>>,
}

/// The on-disk plan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanDocument {
    pub network: String,
    pub constraints: PlanConstraintsDoc,
    pub totals: PlanTotalsDoc,
    pub plan: PlanLevelDoc,
}

// ── Conversions ──────────────────────────────────────────────────────────────

fn level_from_plan(plan: &BatchPlan) -> PlanLevelDoc {
    PlanLevelDoc {
        requested: plan.requested,
        rounds: plan.rounds,
        round_ms: plan.round_ms,
        total_ms: plan.total_ms,
        peak_bytes: plan.peak_bytes,
        layers: plan
            .layers
            .iter()
            .map(|l| PlanLayerDoc {
                layer: l.name.clone(),
                index: l.index,
                batch: l.batch,
                phases: l.phases,
                predicted_ms: l.predicted_ms,
            })
            .collect(),
        remainder: plan.remainder.as_ref().map(|r| Box::new(level_from_plan(r))),
    }
}

fn level_to_plan(doc: &PlanLevelDoc) -> Result<BatchPlan, CliError> {
    if doc.layers.is_empty() {
        return Err(CliError::Data("plan level lists no layers".into()));
    }
    Ok(BatchPlan {
        requested: doc.requested,
        rounds: doc.rounds,
        layers: doc
            .layers
            .iter()
            .map(|l| LayerAssignment {
                index: l.index,
                name: l.layer.clone(),
                batch: l.batch,
                phases: l.phases,
                predicted_ms: l.predicted_ms,
            })
            .collect(),
        round_ms: doc.round_ms,
        total_ms: doc.total_ms,
        peak_bytes: doc.peak_bytes,
        remainder: match &doc.remainder {
            Some(r) => Some(Box::new(level_to_plan(r)?)),
            None => None,
        },
    })
}

impl PlanDocument {
    /// Wraps a finished plan for serialization.
    pub fn from_plan(network: &str, constraints: &PlannerConstraints, plan: &BatchPlan) -> Self {
        Self {
            network: network.to_string(),
            constraints: PlanConstraintsDoc {
                total_bytes: constraints.total_bytes,
                latency_ms: constraints.latency_ms,
                memory_step: constraints.memory_step,
            },
            totals: PlanTotalsDoc {
                throughput_img_per_s: plan.throughput_per_s(),
                peak_bytes: plan.peak_bytes,
                latency_ms: plan.round_ms,
                total_ms: plan.total_ms,
            },
            plan: level_from_plan(plan),
        }
    }

    /// Reconstructs the plan and the constraints it was built under.
    pub fn to_plan(&self) -> Result<(BatchPlan, PlannerConstraints), CliError> {
        let plan = level_to_plan(&self.plan)?;
        let constraints = PlannerConstraints {
            total_bytes: self.constraints.total_bytes,
            latency_ms: self.constraints.latency_ms,
            requested: self.plan.requested,
            memory_step: self.constraints.memory_step,
        };
        Ok((plan, constraints))
    }
}

/// Writes a plan document as pretty JSON.
pub fn write_plan(path: &Path, doc: &PlanDocument) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::Data(format!("plan document: {e}")))?;
    fs::write(path, text).map_err(|e| CliError::file(path, e))
}

/// Reads a plan document.
pub fn read_plan(path: &Path) -> Result<PlanDocument, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::file(path, e))
}
