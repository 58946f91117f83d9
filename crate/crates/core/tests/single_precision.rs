use titekit_core::patient::EffectiveData;
use titekit_core::{generate_table, Action, Design, DosePosition, EngineF32, EngineF64, ParamsF32, ParamsF64};

const INTERIOR: DosePosition = DosePosition { at_lowest: false, at_highest: false };

#[test]
fn f32_engine_matches_f64_decisions() {
    for design in [Design::Keyboard, Design::Mtpi, Design::Boin] {
        let e32 = EngineF32::new(design, ParamsF32::default()).unwrap();
        let e64 = EngineF64::new(design, ParamsF64::default()).unwrap();
        for n in 1..=12usize {
            for y in 0..=n {
                let d32 = e32.decide_effective(&EffectiveData::complete(n, y).unwrap(), INTERIOR).unwrap();
                let d64 = e64.decide_effective(&EffectiveData::complete(n, y).unwrap(), INTERIOR).unwrap();
                assert_eq!(d32.action, d64.action, "{design} n={n} y={y}");
            }
        }
    }
}

#[test]
fn f32_table_thresholds_within_display_precision() {
    let e32 = EngineF32::new(Design::Keyboard, ParamsF32 { max_n: 12, ..Default::default() }).unwrap();
    let e64 = EngineF64::new(Design::Keyboard, ParamsF64 { max_n: 12, ..Default::default() }).unwrap();
    let (t32, t64) = (generate_table(&e32).unwrap(), generate_table(&e64).unwrap());
    assert_eq!(t32.len(), t64.len());
    for (a, b) in t32.iter().zip(&t64) {
        assert_eq!(a.actions(), b.actions());
        for (ra, rb) in a.regions.iter().zip(&b.regions) {
            if let (Some(x), Some(y)) = (ra.m_hi, rb.m_hi) {
                assert!((f64::from(x) - y).abs() < 5e-3, "{x} vs {y}");
            }
        }
    }
    assert!(t32.iter().any(|r| r.actions() == vec![Action::DeEscalate, Action::Stay]));
}

