use proptest::prelude::*;

use vanhove_lab::analysis::symmetrize;
use vanhove_lab::io::{ArrayData, TensorContainer};
use vanhove_lab::model::sound_speed_ratio;
use vanhove_lab::weak_values::{amplification, discarded_fraction, threshold_from_fd, SelectionMode};

proptest! {
    #[test]
    fn container_round_trip_is_bit_exact(
        values in prop::collection::vec(any::<f64>(), 0..64),
        ints in prop::collection::vec(any::<i64>(), 0..16),
        label in "[a-z]{1,12}",
    ) {
        let mut c = TensorContainer::new("test", "cfg");
        c.set_attribute("label", &label);
        c.push_f64("x", &[values.len()], "m", values.clone()).unwrap();
        c.push("n", &[ints.len()], "1", ArrayData::I64(ints.clone())).unwrap();
        let back = TensorContainer::from_bytes(&c.to_bytes()).unwrap();
        let (_, x) = back.f64("x").unwrap();
        prop_assert_eq!(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.i64("n").unwrap().1, &ints[..]);
        prop_assert_eq!(back.attribute::<String>("label").unwrap(), label);
        prop_assert_eq!(back.content_hash(), c.content_hash());
    }

    #[test]
    fn sound_speed_ratio_increases_with_condensate_fraction(
        a in 1e-4f64..1.0,
        b in 1e-4f64..1.0,
        x in 0.2f64..1.6,
    ) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        let (r_lo, r_hi) = (sound_speed_ratio(lo, x).unwrap(), sound_speed_ratio(hi, x).unwrap());
        prop_assert!(r_lo < r_hi);
        prop_assert!(r_hi <= 1.0 + 1e-12);
    }

    #[test]
    fn threshold_inverts_discarded_fraction(fd in 0.0f64..0.99) {
        let t = threshold_from_fd(fd, SelectionMode::SignWeighted).unwrap();
        prop_assert!((discarded_fraction(t, SelectionMode::SignWeighted) - fd).abs() < 1e-9);
        prop_assert!(amplification(t) >= 1.0 - 1e-12);
    }

    #[test]
    fn symmetrized_curves_are_even(v in prop::collection::vec(-1e3f64..1e3, 2..40)) {
        let mut v = v;
        if v.len() % 2 == 1 {
            v.pop();
        }
        let s = symmetrize(&v);
        let n = s.len();
        for i in 1..n / 2 {
            prop_assert!((s[n / 2 + i] - s[n / 2 - i]).abs() <= 1e-12 * (1.0 + s[n / 2 + i].abs()));
        }
    }
}
