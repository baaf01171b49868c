//! Prescription smoothing.
//!
//! A purchase of P packages with k pills each covers ceil(P·k / 30) months
//! starting at the purchase month. After expansion, runs of one or two empty
//! months strictly between two active months are filled.

use super::{ClaimKind, ClaimRecord, MonthRange};

/// Longest gap (in months) bridged between two active months.
pub const MAX_GAP: usize = 2;

/// Monthly indicator of covered consumption, before gap filling. Spells are
/// merged by union and clipped to `horizon`.
pub fn expand_spells<'a>(
    claims: impl IntoIterator<Item = &'a ClaimRecord>,
    horizon: &MonthRange,
) -> Vec<u8> {
    let mut series = vec![0u8; horizon.len()];
    for c in claims.into_iter().filter(|c| c.kind == ClaimKind::Rx) {
        let len = c.spell_months() as i32;
        if len == 0 {
            continue;
        }
        let span = MonthRange {
            lo: c.month,
            hi: c.month + len - 1,
        };
        if let Some(cov) = span.intersect(horizon) {
            for m in cov.iter() {
                series[(m - horizon.lo) as usize] = 1;
            }
        }
    }
    series
}

/// 1 in the months where a purchase happened.
pub fn raw_purchase_indicator<'a>(
    claims: impl IntoIterator<Item = &'a ClaimRecord>,
    horizon: &MonthRange,
) -> Vec<u8> {
    let mut series = vec![0u8; horizon.len()];
    for c in claims.into_iter().filter(|c| c.kind == ClaimKind::Rx) {
        if horizon.contains(c.month) {
            series[(c.month - horizon.lo) as usize] = 1;
        }
    }
    series
}

/// Fills every run of at most [`MAX_GAP`] zeros that has an active month on
/// both sides. Each gap is judged on the input series alone.
pub fn fill_gaps(series: &mut [u8]) {
    let mut last_active: Option<usize> = None;
    for i in 0..series.len() {
        if series[i] == 0 {
            continue;
        }
        if let Some(prev) = last_active {
            let gap = i - prev - 1;
            if (1..=MAX_GAP).contains(&gap) {
                series[prev + 1..i].fill(1);
            }
        }
        last_active = Some(i);
    }
}

/// Smoothed 0/1 antidepressant series over `horizon` for one unit's claims.
pub fn smooth_prescriptions<'a>(
    claims: impl IntoIterator<Item = &'a ClaimRecord>,
    horizon: &MonthRange,
) -> Vec<u8> {
    let mut series = expand_spells(claims, horizon);
    fill_gaps(&mut series);
    series
}
