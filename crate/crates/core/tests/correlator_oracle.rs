use hbt_core::correlator::{auto_correlate, correlate_times, cross_correlate, cross_correlate_chunked, CorrelationConfig};
use hbt_core::photonsim::{EventStream, Origin};
use hbt_core::{Seconds, Tick};
use proptest::prelude::*;

/// Every ordered pair, binned by direct division.
fn brute_force(a: &[Tick], b: &[Tick], cfg: &CorrelationConfig, skip_same_index: bool) -> Vec<u64> {
    let mut counts = vec![0u64; cfg.n_bins()];
    let w = cfg.bin_width().0;
    for (i, ta) in a.iter().enumerate() {
        for (j, tb) in b.iter().enumerate() {
            if skip_same_index && i == j {
                continue;
            }
            let dt = tb.0 - ta.0;
            if dt >= cfg.start().0 && dt < cfg.end().0 {
                counts[((dt - cfg.start().0) / w) as usize] += 1;
            }
        }
    }
    counts
}

fn stream(channel: u8, mut times: Vec<i64>) -> EventStream {
    times.sort_unstable();
    let end = times.last().copied().unwrap_or(0);
    EventStream::new(
        channel,
        times.into_iter().map(Tick).collect(),
        Seconds(end as f64 * 1e-12),
        Origin::Simulated,
    )
    .unwrap()
}

/// Times on a coarse grid so ties and exact bin-edge differences are common.
fn times(max_len: usize) -> impl Strategy<Value = Vec<i64>> {
    (1i64..=50, 0usize..=max_len).prop_flat_map(|(grid, n)| prop::collection::vec((0i64..2_000).prop_map(move |k| k * grid), n))
}

fn binning() -> impl Strategy<Value = CorrelationConfig> {
    (1i64..=40, -30i64..=30, 1i64..=60).prop_map(|(w, s, n)| {
        CorrelationConfig::new(Tick(w), Tick(s * w), Tick((s + n) * w)).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(160))]

    #[test]
    fn cross_matches_brute_force(a in times(400), b in times(400), cfg in binning()) {
        let (sa, sb) = (stream(0, a), stream(1, b));
        let h = cross_correlate(&sa, &sb, &cfg).unwrap();
        prop_assert_eq!(h.counts, brute_force(sa.times(), sb.times(), &cfg, false));
        prop_assert_eq!(h.n_a as usize, sa.len());
        prop_assert_eq!(h.n_b as usize, sb.len());
    }

    #[test]
    fn auto_matches_brute_force_without_self_pairs(a in times(300), cfg in binning()) {
        let sa = stream(0, a);
        let h = auto_correlate(&sa, &cfg).unwrap();
        prop_assert_eq!(h.counts, brute_force(sa.times(), sa.times(), &cfg, true));
    }

    #[test]
    fn chunking_is_bit_identical(a in times(400), b in times(400), cfg in binning(), chunk in 1i64..5_000) {
        let (sa, sb) = (stream(0, a), stream(1, b));
        let plain = cross_correlate(&sa, &sb, &cfg).unwrap();
        let chunked = cross_correlate_chunked(&sa, &sb, &cfg, Tick(chunk)).unwrap();
        prop_assert_eq!(plain, chunked);
    }

    #[test]
    fn swapping_streams_conserves_pairs(a in times(300), b in times(300), w in 1i64..40, half in 1i64..40) {
        // [-W, W) becomes (-W, W] under negation, so only the pairs sitting
        // exactly on the window edges differ
        let cfg = CorrelationConfig::symmetric(Tick(w), half).unwrap();
        let (sa, sb) = (stream(0, a), stream(1, b));
        let ab: u64 = cross_correlate(&sa, &sb, &cfg).unwrap().counts.iter().sum();
        let ba: u64 = cross_correlate(&sb, &sa, &cfg).unwrap().counts.iter().sum();
        prop_assert_eq!(ab + pairs_at_window_end(&sa, &sb, &cfg), ba + pairs_at_window_end(&sb, &sa, &cfg));
    }

    #[test]
    fn swapping_streams_reverses_bins_without_edge_ties(a in times(300), b in times(300), w in 1i64..20, half in 1i64..40) {
        // even times against odd times with an even bin width: no difference
        // can land on a bin edge, so reversal is exact bin for bin
        let w = 2 * w;
        let cfg = CorrelationConfig::symmetric(Tick(w), half).unwrap();
        let a: Vec<i64> = a.into_iter().map(|t| 2 * t).collect();
        let b: Vec<i64> = b.into_iter().map(|t| 2 * t + 1).collect();
        let (sa, sb) = (stream(0, a), stream(1, b));
        let ab = cross_correlate(&sa, &sb, &cfg).unwrap().counts;
        let mut ba = cross_correlate(&sb, &sa, &cfg).unwrap().counts;
        ba.reverse();
        prop_assert_eq!(ab, ba);
    }
}

/// Pairs with `b - a` exactly at the (excluded) window end.
fn pairs_at_window_end(a: &EventStream, b: &EventStream, cfg: &CorrelationConfig) -> u64 {
    let mut n = 0;
    for ta in a.times() {
        for tb in b.times() {
            if tb.0 - ta.0 == cfg.end().0 {
                n += 1;
            }
        }
    }
    n
}

#[test]
fn large_streams_match_brute_force() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let a: Vec<i64> = (0..10_000).map(|_| rng.random_range(0..5_000_000)).collect();
    let b: Vec<i64> = (0..10_000).map(|_| rng.random_range(0..5_000_000)).collect();
    let (sa, sb) = (stream(0, a), stream(1, b));
    let cfg = CorrelationConfig::new(Tick(40), Tick(-10_000), Tick(10_000)).unwrap();
    let h = cross_correlate(&sa, &sb, &cfg).unwrap();
    assert_eq!(h.counts, brute_force(sa.times(), sb.times(), &cfg, false));
    for chunk in [1, 997, 20_000, 1_000_000, 10_000_000] {
        assert_eq!(cross_correlate_chunked(&sa, &sb, &cfg, Tick(chunk)).unwrap(), h, "chunk {chunk}");
    }
}

#[test]
fn window_edges_are_half_open() {
    let cfg = CorrelationConfig::new(Tick(10), Tick(-20), Tick(20)).unwrap();
    let a = [Tick(100)];
    let b = [Tick(79), Tick(80), Tick(89), Tick(90), Tick(119), Tick(120)];
    let h = correlate_times(&a, &b, &cfg, Tick(200)).unwrap();
    // -21 out, -20 first bin, -11 first bin, -10 second bin, 19 last bin, 20 out
    assert_eq!(h.counts, vec![2, 1, 0, 1]);
}

#[test]
fn simultaneous_events_count_once_per_pair() {
    let cfg = CorrelationConfig::new(Tick(5), Tick(-5), Tick(5)).unwrap();
    let a = [Tick(10), Tick(10), Tick(10)];
    let b = [Tick(10), Tick(10)];
    let h = correlate_times(&a, &b, &cfg, Tick(20)).unwrap();
    assert_eq!(h.counts, vec![0, 6]);
}
