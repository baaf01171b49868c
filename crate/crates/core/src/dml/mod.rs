//! Two-period DiD around a reform date with cross-fitted nuisances.

mod linear;
mod sample;
mod score;

pub use linear::{linear_did, Coefficient, LinearDid};
pub use sample::{
    event_year_months, mothers_from_panel, DidSample, MotherRecord, ReformDesign, SampleBuilder, EVENT_YEARS,
};
pub use score::{
    dml_atet, naive_ipw_score, orthogonal_score, orthogonality_check, AtetResult, DmlConfig, FoldDiagnostics,
    Learner, Nuisances, OrthogonalityReport, ScoreKind,
};

use crate::error::Result;

/// Re-runs the estimator with the birth windows moved `shift` months before
/// the reform.
pub fn placebo_reform(builder: &SampleBuilder, shift: u32, cfg: &DmlConfig) -> Result<AtetResult> {
    dml_atet(&builder.with_shift(shift).build()?, cfg)
}

/// Re-runs the estimator with `window`-month birth windows.
pub fn shrink_window(builder: &SampleBuilder, window: u32, cfg: &DmlConfig) -> Result<AtetResult> {
    dml_atet(&builder.with_window(window).build()?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_mothers, MothersConfig};

    fn fast() -> DmlConfig {
        DmlConfig {
            g_learner: Learner::Linear,
            l_learner: Learner::Linear,
            seed: 4,
            ..DmlConfig::default()
        }
    }

    #[test]
    fn zero_shift_and_full_window_reproduce_main() {
        let m = MothersConfig { n: 3000, seed: 2, ..MothersConfig::default() };
        let (recs, names) = simulate_mothers(&m).unwrap();
        let b = SampleBuilder::new(&recs, &names, m.design());
        let main = dml_atet(&b.build().unwrap(), &fast()).unwrap();
        assert_eq!(placebo_reform(&b, 0, &fast()).unwrap(), main);
        assert_eq!(shrink_window(&b, 3, &fast()).unwrap(), main);
        let p3 = placebo_reform(&b, 3, &fast()).unwrap();
        assert_ne!(p3.theta, main.theta);
    }

    #[test]
    fn take_up_never_enters() {
        let m = MothersConfig { n: 2000, seed: 5, ..MothersConfig::default() };
        let (recs, names) = simulate_mothers(&m).unwrap();
        let mut permuted = recs.clone();
        let k = permuted.len();
        for i in 0..k {
            permuted[i].take_up = recs[(i * 7 + 3) % k].take_up.map(|v| !v);
        }
        let a = dml_atet(&SampleBuilder::new(&recs, &names, m.design()).build().unwrap(), &fast()).unwrap();
        let b = dml_atet(&SampleBuilder::new(&permuted, &names, m.design()).build().unwrap(), &fast()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn narrow_window_cells_too_small_reported() {
        let m = MothersConfig { n: 40, seed: 1, ..MothersConfig::default() };
        let (recs, names) = simulate_mothers(&m).unwrap();
        let b = SampleBuilder::new(&recs, &names, m.design());
        let e = shrink_window(&b, 1, &fast()).unwrap_err();
        assert!(e.to_string().contains("d1t1="), "{e}");
    }
}
