use serde::{Deserialize, Serialize};

use crate::network::NetworkSpec;

use super::{StopEvaluation, TransferAssignment};

/// Unweighted totals behind the weighted objective.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawDiagnostics {
    /// Σ demand·wait over all transfer groups, missed groups at longwait.
    pub transfer_wait_person_min: f64,
    /// Σ gated late-arrival wait plus gated departure delay, minutes.
    pub delay_min: f64,
    pub delay_person_min: f64,
    /// Σ gated unnecessary in-vehicle time, minutes.
    pub unnecessary_min: f64,
    pub unnecessary_person_min: f64,
    pub delay_min_ungated: f64,
    pub unnecessary_min_ungated: f64,
    pub missed_groups: usize,
}

/// Weighted person·minutes per objective component.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub transfer_wait_cost: f64,
    pub in_vehicle_cost: f64,
    pub delay_out_cost: f64,
    pub delay_in_cost: f64,
    pub total: f64,
    pub raw: RawDiagnostics,
}

/// Totals the objective from stop traces and transfer assignments.
pub fn account_costs(
    traces: &[StopEvaluation],
    assignments: &[TransferAssignment],
    net: &NetworkSpec,
) -> CostBreakdown {
    let w = &net.cost_weights;
    let aths = net.delay_threshold_aths;
    let mut c = CostBreakdown::default();
    for a in assignments {
        c.transfer_wait_cost += w.c_tw * a.demand * a.ntwait;
        c.raw.transfer_wait_person_min += a.demand * a.ntwait;
        if a.connecting_trip.is_none() {
            c.raw.missed_groups += 1;
        }
    }
    for t in traces {
        c.in_vehicle_cost += 0.5 * w.c_vt * t.vtd * t.rdiff;
        c.delay_out_cost += w.c_dt * (t.total_bd_ew + t.gbd_ew) * t.tewait;
        let adiff_gated = if t.adiff >= aths { t.adiff } else { 0.0 };
        c.delay_in_cost += w.c_dt_in_vehicle * t.pdd * adiff_gated;
        c.raw.delay_min += t.tewait + adiff_gated;
        c.raw.delay_person_min += (t.total_bd_ew + t.gbd_ew) * t.tewait + t.pdd * adiff_gated;
        c.raw.delay_min_ungated += t.ewait + t.adiff;
        if t.vtd > 0.0 {
            c.raw.unnecessary_min += t.rdiff;
        }
        c.raw.unnecessary_person_min += t.vtd * t.rdiff;
        c.raw.unnecessary_min_ungated += t.rdiff;
    }
    c.total = c.transfer_wait_cost + c.in_vehicle_cost + c.delay_out_cost + c.delay_in_cost;
    c
}
