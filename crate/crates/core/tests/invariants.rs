use proptest::prelude::*;

use clp_core::model::{ClpConfig, ClpModel, EventKind};
use clp_core::quantize::{dequantize, div_round_half_even, fixed_update, quantize_vec, FixedPointFormat, ReciprocalTable};
use clp_core::rules::Sign;
use clp_core::snn::{SnnConfig, SnnNet};
use clp_core::{l2_normalize, FeatureVector, Label};

fn unit_vec(d: usize) -> impl Strategy<Value = FeatureVector> {
    prop::collection::vec(-1.0f64..1.0, d)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
        .prop_map(|v| l2_normalize(&v).unwrap())
}

proptest! {
    #[test]
    fn quantization_error_within_half_step(v in prop::collection::vec(-1.0f64..1.0, 1..64)) {
        let fmt = FixedPointFormat::default();
        let q = quantize_vec(&v, &fmt);
        prop_assert_eq!(q.clamped, 0);
        let step = 1.0 / fmt.max_code() as f64;
        for (a, b) in v.iter().zip(dequantize(&q.codes, &fmt)) {
            prop_assert!((a - b).abs() <= step / 2.0 + 1e-12);
        }
    }

    #[test]
    fn rounding_division_is_nearest(num in -1_000_000i128..1_000_000, den in 1i128..5000) {
        let q = div_round_half_even(num, den);
        let exact = num as f64 / den as f64;
        prop_assert!((q as f64 - exact).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn fixed_update_stays_in_range(
        w in prop::collection::vec(-63i32..=63, 16),
        x in prop::collection::vec(-63i32..=63, 16),
        g in 1u32..2000,
        plus in any::<bool>(),
    ) {
        let fmt = FixedPointFormat::default();
        let y: i64 = w.iter().zip(&x).map(|(a, b)| (*a as i64) * (*b as i64)).sum();
        let alpha = ReciprocalTable::new(&fmt).alpha(g);
        let r = if plus { Sign::Plus } else { Sign::Minus };
        let out = fixed_update(&w, &x, y, alpha, r, &fmt).unwrap();
        prop_assert!(out.iter().all(|c| c.abs() <= 63));
        prop_assert_eq!(fixed_update(&w, &x, y, alpha, Sign::Zero, &fmt).unwrap(), w);
    }

    #[test]
    fn learner_ledger_holds(
        stream in prop::collection::vec((unit_vec(8), prop::option::of(0u32..4)), 1..60),
    ) {
        let mut m = ClpModel::new(ClpConfig::new(8)).unwrap();
        for (x, label) in &stream {
            let before = m.prototypes().to_vec();
            let allocated = m.allocated();
            let out = m.learn_step(x, label.map(|l| l as Label)).unwrap();
            let changed: Vec<usize> =
                (0..before.len()).filter(|&i| before[i] != m.prototypes()[i]).collect();
            prop_assert!(changed.len() <= 1);
            if let Some(&i) = changed.first() {
                prop_assert_eq!(Some(i), out.event.target);
            }
            prop_assert_eq!(m.allocated(), allocated + (out.event.kind == EventKind::Allocate) as usize);
            for p in m.prototypes().iter().filter(|p| p.is_allocated()) {
                prop_assert!(p.goodness() >= 1);
                prop_assert_eq!(p.alpha(), 1.0 / p.goodness() as f64);
            }
        }
        prop_assert!(m.max_norm_deviation() < 1e-9);
    }

    #[test]
    fn spiking_net_touches_at_most_one_row(
        stream in prop::collection::vec((unit_vec(8), prop::option::of(0u32..3)), 1..40),
    ) {
        let mut net = SnnNet::new(SnnConfig::new(8)).unwrap();
        for (x, label) in &stream {
            let before: Vec<Vec<i32>> = (0..net.next_free()).map(|i| net.row(i).to_vec()).collect();
            let r = net.run_epoch(x, label.map(|l| l as Label)).unwrap();
            prop_assert!(r.synapse_update_count == 0 || r.synapse_update_count == 8);
            let changed = before.iter().enumerate().filter(|(i, row)| net.row(*i) != row.as_slice()).count();
            prop_assert!(changed <= 1);
        }
    }
}
