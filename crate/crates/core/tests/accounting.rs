use srnerv_core::model::{count_params, ModelConfig, ParameterStore, ShareMode};
use srnerv_testkit::models::count_by_hand;

#[test]
fn counts_match_closed_form_grid() {
    for m in 1..=4 {
        for l in 1..=3 {
            for c in [1, 2, 5, 16, 33] {
                for k in [1, 3, 5] {
                    for r in [1, 2, 4] {
                        for mode in ShareMode::ALL {
                            let mut cfg = ModelConfig::dyadic(m, l, c, (2, 3, 2, 4), 2, mode);
                            cfg.kernel = k;
                            cfg.ffn_ratio = r;
                            let got = count_params(&cfg);
                            let want = count_by_hand(&cfg);
                            assert_eq!(
                                [got.sm_params, got.cm_params, got.other_params],
                                want,
                                "{cfg:?}"
                            );
                            assert_eq!(got.total, want.iter().sum::<usize>());
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn hybrid_channel_params_are_none_over_stages() {
    for m in 1..=5 {
        for l in 1..=3 {
            for c in [3, 8, 20] {
                let h = count_params(&ModelConfig::dyadic(
                    m,
                    l,
                    c,
                    (1, 2, 2, 4),
                    1,
                    ShareMode::Hybrid,
                ));
                let n = count_params(&ModelConfig::dyadic(
                    m,
                    l,
                    c,
                    (1, 2, 2, 4),
                    1,
                    ShareMode::None,
                ));
                assert_eq!(h.cm_params * m, n.cm_params);
                assert_eq!(h.sm_params, n.sm_params);
            }
        }
    }
}

#[test]
fn counts_match_stored_scalars() {
    for mode in ShareMode::ALL {
        let cfg = ModelConfig::dyadic(2, 2, 6, (2, 2, 2, 3), 3, mode);
        let store = ParameterStore::<f64>::build(&cfg, 1).unwrap();
        assert_eq!(count_params(&cfg).total, store.scalar_count());
    }
}
