use logitlab::forge::{correct_fix_1, fix_k_average, fix_k_permute, hybrid_merge};
use logitlab::ordering::{argmax, rank_order};
use logitlab::stats::{average_overlap, logit_gaps, summarize};
use logitlab::store::{decode_binary, encode_binary, encode_text, parse_text, LabelVector, LogitMatrix};
use proptest::prelude::*;

fn matrix() -> impl Strategy<Value = LogitMatrix> {
    (1usize..8, 2usize..9).prop_flat_map(|(r, c)| {
        prop::collection::vec(-50.0f64..50.0, r * c).prop_map(move |v| LogitMatrix::new(r, c, v).unwrap())
    })
}

fn any_finite() -> impl Strategy<Value = f64> {
    any::<f64>().prop_filter("finite", |v| v.is_finite())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

proptest! {
    #[test]
    fn binary_round_trip_is_bit_exact(v in prop::collection::vec(any_finite(), 2..64)) {
        let m = LogitMatrix::new(1, v.len(), v).unwrap();
        let back = decode_binary(&encode_binary(&m)).unwrap();
        prop_assert!(m.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn text_round_trip_is_value_exact(v in prop::collection::vec(any_finite(), 2..64)) {
        let m = LogitMatrix::new(1, v.len(), v).unwrap();
        let back = parse_text(&encode_text(&m)).unwrap();
        prop_assert_eq!(m, back);
    }

    #[test]
    fn fix_k_permute_keeps_top_k_and_multiset(m in matrix(), seed in any::<u64>(), k_frac in 0.0f64..1.0) {
        let k = 1 + ((m.cols() - 1) as f64 * k_frac) as usize;
        let out = fix_k_permute(&m, k, seed).unwrap();
        for (src, dst) in m.iter_rows().zip(out.iter_rows()) {
            for &j in &rank_order(src)[..k] {
                prop_assert_eq!(src[j], dst[j]);
            }
            prop_assert_eq!(sorted(src.to_vec()), sorted(dst.to_vec()));
        }
        prop_assert_eq!(fix_k_permute(&m, m.cols(), seed).unwrap(), m.clone());
    }

    #[test]
    fn fix_k_average_keeps_top_k_and_sum(m in matrix(), k_frac in 0.0f64..1.0) {
        let k = 1 + ((m.cols() - 1) as f64 * k_frac) as usize;
        let out = fix_k_average(&m, k).unwrap();
        for (src, dst) in m.iter_rows().zip(out.iter_rows()) {
            for &j in &rank_order(src)[..k] {
                prop_assert_eq!(src[j], dst[j]);
            }
            let (a, b): (f64, f64) = (src.iter().sum(), dst.iter().sum());
            let scale: f64 = src.iter().map(|v| v.abs()).sum();
            prop_assert!((a - b).abs() <= 1e-12 * scale.max(1.0));
        }
        prop_assert_eq!(fix_k_average(&m, m.cols()).unwrap(), m.clone());
    }

    #[test]
    fn correct_fix_1_makes_the_label_win(m in matrix(), seed in any::<u64>()) {
        let labels = LabelVector((0..m.rows()).map(|i| ((seed >> (i % 32)) as usize + i) % m.cols()).collect());
        let out = correct_fix_1(&m, &labels).unwrap();
        for ((src, dst), &y) in m.iter_rows().zip(out.iter_rows()).zip(labels.as_slice()) {
            let top = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(dst[y], top);
            prop_assert_eq!(sorted(src.to_vec()), sorted(dst.to_vec()));
            if src.iter().filter(|&&v| v == top).count() == 1 {
                prop_assert_eq!(argmax(dst), y);
            }
        }
    }

    #[test]
    fn hybrid_takes_order_from_one_and_values_from_other(
        (a, b) in (1usize..6, 2usize..8).prop_flat_map(|(r, c)| {
            let g = prop::collection::vec(-20.0f64..20.0, r * c).prop_map(move |v| LogitMatrix::new(r, c, v).unwrap());
            (g.clone(), g)
        })
    ) {
        let out = hybrid_merge(&a, &b).unwrap();
        for ((va, vb), o) in a.iter_rows().zip(b.iter_rows()).zip(out.iter_rows()) {
            prop_assert_eq!(sorted(va.to_vec()), sorted(o.to_vec()));
            let want = rank_order(vb);
            // Order must agree wherever the merged values are distinct.
            let got = rank_order(o);
            for r in 0..o.len() {
                prop_assert_eq!(o[got[r]], o[want[r]]);
            }
        }
    }

    #[test]
    fn statistics_stay_in_range(m in matrix(), other_seed in any::<u64>()) {
        prop_assert!(logit_gaps(&m).iter().all(|&g| g >= 0.0));
        let shifted = LogitMatrix::new(
            m.rows(),
            m.cols(),
            m.values().iter().enumerate().map(|(i, v)| v + ((other_seed >> (i % 60)) & 7) as f64).collect(),
        )
        .unwrap();
        let c = average_overlap(&m, &shifted, m.cols()).unwrap();
        prop_assert!(c.ao_at_k.iter().chain(&c.agreement_at_k).all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert_eq!(*c.agreement_at_k.last().unwrap(), 1.0);
        if m.rows() >= 3 {
            let s = summarize(&logit_gaps(&m), 0.5).unwrap();
            prop_assert_eq!(s.histogram.iter().map(|b| b.count).sum::<usize>(), m.rows());
            prop_assert!(s.std >= 0.0);
        }
    }
}
