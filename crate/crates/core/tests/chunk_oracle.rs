mod common;

use common::{drive, oracle_config, production, reference, round_robin};
use loopsched::Technique;
use proptest::prelude::*;

fn compare(tech: Technique, n: usize, p: usize, weighted: bool) {
    let cfg = oracle_config(n, p, weighted);
    let got = drive(&mut production(tech, &cfg), p, &mut round_robin(p));
    let want = drive(&mut reference(tech, &cfg), p, &mut round_robin(p));
    assert_eq!(got, want, "{tech} N={n} P={p} weighted={weighted}");
}

#[test]
fn grid_matches_reference() {
    for tech in Technique::ALL {
        for n in [1, 7, 100, 1000, 2000] {
            for p in [2, 4, 8, 13] {
                compare(tech, n, p, true);
                if tech != Technique::WF {
                    compare(tech, n, p, false);
                }
            }
        }
    }
}

#[test]
fn fac_textbook_sequence() {
    let sizes = common::fac_sizes(1000, 4);
    assert_eq!(sizes.len(), 32);
    assert_eq!(&sizes[..8], &[125, 125, 125, 125, 63, 63, 63, 63]);
    assert_eq!(loopsched::dls::fac_chunk_count(1000, 4), sizes.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn any_size_matches_reference(
        t in 0usize..Technique::ALL.len(),
        n in 1usize..=2000,
        p in prop::sample::select(vec![2usize, 4, 8, 13]),
    ) {
        compare(Technique::ALL[t], n, p, true);
    }

    #[test]
    fn fac_count_matches_replay(n in 1usize..5000, p in 1usize..64) {
        prop_assert_eq!(loopsched::dls::fac_chunk_count(n, p), common::fac_sizes(n, p).len());
    }
}
