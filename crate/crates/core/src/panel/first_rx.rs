use serde::Serialize;

use super::{Month, Panel};

/// Units with a clean first-time prescription and the month it happened.
#[derive(Debug, Clone)]
pub struct FirstRxSelection {
    pub panel: Panel,
    /// `(unit_id, first prescription month)`, aligned with `panel.units`.
    pub events: Vec<FirstRxEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FirstRxEvent {
    pub unit_id: String,
    pub month: Month,
}

/// Keeps units whose first observed prescription month follows at least
/// `washout_months` observed months without prescriptions.
pub fn first_prescription_filter(panel: &Panel, washout_months: u32) -> FirstRxSelection {
    let washout = washout_months.max(1) as i32;
    let mut first_month = vec![None; panel.n_units()];
    for (u, slot) in first_month.iter_mut().enumerate() {
        let rows = panel.unit_rows(u);
        let Some(start) = rows.first().map(|o| o.month) else {
            continue;
        };
        if let Some(o) = rows.iter().find(|o| o.y_rx == 1) {
            if o.month - start >= washout {
                *slot = Some(o.month);
            }
        }
    }
    let sub = panel.subset(|u, _| first_month[u].is_some());
    let events = panel
        .units
        .iter()
        .zip(&first_month)
        .filter_map(|(meta, m)| {
            m.map(|month| FirstRxEvent {
                unit_id: meta.unit_id.clone(),
                month,
            })
        })
        .collect();
    FirstRxSelection { panel: sub, events }
}
