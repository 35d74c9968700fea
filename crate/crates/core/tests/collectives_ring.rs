use proptest::prelude::*;
use sdr_sim::collectives::{
    allreduce_trials, ring_allreduce_sim, ring_finish_times, slice_chunks, speedup_grid, Scheme, StageChannel,
    StageSampler,
};
use sdr_sim::ec::Code;
use sdr_sim::model::{allreduce_lower_bound, AllreduceParams};
use sdr_sim::montecarlo::{mean_and_sem, run_trials};
use sdr_sim::rng::substream;
use sdr_sim::sr::SrVariant;

const SR_RTO: Scheme = Scheme::Sr { variant: SrVariant::Rto };
const EC_MDS: Scheme = Scheme::Ec {
    k: 32,
    m: 8,
    code: Code::Mds,
};

fn channel(p_packet: f64) -> StageChannel {
    StageChannel {
        chunk_t_inj: 65536.0 * 8.0 / 400e9,
        rtt: 0.025,
        alpha: 2.0,
        beta: 1.0,
        p_packet,
        packets_per_chunk: 16,
    }
}

/// Longest path to `(i, r)` by explicit enumeration of every predecessor
/// chain: exponential, for small rings only.
fn longest_path(d: &[Vec<f64>], i: usize, r: usize) -> f64 {
    if r == 0 {
        return 0.0;
    }
    let n = d[0].len();
    let from_left = longest_path(d, (i + n - 1) % n, r - 1);
    let from_self = longest_path(d, i, r - 1);
    from_left.max(from_self) + d[r - 1][i]
}

fn durations(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.0f64..10.0, n), 2 * n - 2)
}

#[test]
fn recurrence_matches_path_enumeration() {
    let mut rng = substream(1, 0);
    for n in 2..=5 {
        for _ in 0..20 {
            let d: Vec<Vec<f64>> = (0..2 * n - 2)
                .map(|_| (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.0..5.0)).collect())
                .collect();
            let t = ring_finish_times(&d);
            for r in 0..=2 * n - 2 {
                for i in 0..n {
                    assert!((t[r][i] - longest_path(&d, i, r)).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn lossless_ring_is_deterministic() {
    for n in [2usize, 4, 8] {
        let sampler = StageSampler::new(SR_RTO, channel(0.0)).unwrap();
        let buffer = 64 * n as u64;
        let state = ring_allreduce_sim(n, buffer, &sampler, &mut substream(2, 0));
        let step = 64.0 * channel(0.0).chunk_t_inj + 0.025;
        let expect = (2 * n - 2) as f64 * step;
        assert!((state.completion() - expect).abs() < 1e-12 * expect);
        assert_eq!(state.step_message_chunks, 64);
        assert!(state.finish[0].iter().all(|&t| t == 0.0));
    }
}

#[test]
fn degenerate_rings_take_no_time() {
    let sampler = StageSampler::new(SR_RTO, channel(1e-3)).unwrap();
    for n in [0usize, 1] {
        assert_eq!(ring_allreduce_sim(n, 2048, &sampler, &mut substream(3, 0)).completion(), 0.0);
    }
}

#[test]
fn short_final_slice() {
    let sampler = StageSampler::new(SR_RTO, channel(0.0)).unwrap();
    let state = ring_allreduce_sim(4, 10, &sampler, &mut substream(4, 0));
    // stage (r, i) moves slice (i - r) mod N; slice 3 holds one chunk
    let t_one = sampler.lossless(1);
    let t_three = sampler.lossless(3);
    assert_eq!(slice_chunks(10, 4, 3), 1);
    assert_eq!(state.stage_durations[0][0], t_one);
    assert_eq!(state.stage_durations[0][1], t_three);
}

#[test]
fn bound_dominates_simulated_mean() {
    for n in [2usize, 4, 8] {
        for p in [1e-5, 1e-4, 1e-3] {
            for scheme in [SR_RTO, EC_MDS] {
                let sampler = StageSampler::new(scheme, channel(p)).unwrap();
                let stats = allreduce_trials(n, 2048, &sampler, 1000, 5).unwrap();
                let c = sampler.lossless(2048u64.div_ceil(n as u64));
                let bound = allreduce_lower_bound(&AllreduceParams {
                    n: n as u64,
                    c,
                    // measured mean can sit an ulp below the lossless cost
                    mu_x: (stats.mean_stage - c).max(0.0),
                })
                .unwrap();
                assert!(stats.completion.mean >= bound * (1.0 - 1e-12), "{scheme} n={n} p={p}");
            }
        }
    }
}

#[test]
fn rotated_ring_has_the_same_distribution() {
    // the finish time of datacenter 0 and of datacenter 2 have equal means
    let sampler = StageSampler::new(SR_RTO, channel(1e-4)).unwrap();
    let finish = |node: usize| {
        run_trials(4000, 6, move |rng| {
            let s = ring_allreduce_sim(4, 2048, &sampler, rng);
            s.finish[6][node]
        })
    };
    let (m0, e0) = mean_and_sem(&finish(0));
    let (m2, e2) = mean_and_sem(&finish(2));
    assert!((m0 - m2).abs() < 4.0 * (e0 * e0 + e2 * e2).sqrt(), "{m0} vs {m2}");
}

#[test]
fn identical_schemes_give_unit_speedup() {
    let rows = speedup_grid(&[256], &[0.0, 1e-4], &[2, 4], SR_RTO, SR_RTO, channel(0.0), 200, 7).unwrap();
    assert!(rows.iter().all(|r| r.p999_speedup == 1.0 && r.mean_speedup == 1.0));
}

#[test]
fn grid_is_reproducible_and_lossless_cells_are_exact() {
    let a = speedup_grid(&[256], &[0.0, 1e-4], &[4], SR_RTO, EC_MDS, channel(0.0), 200, 8).unwrap();
    let b = speedup_grid(&[256], &[0.0, 1e-4], &[4], SR_RTO, EC_MDS, channel(0.0), 200, 8).unwrap();
    assert_eq!(a, b);
    let lossless = &a[0];
    assert_eq!(lossless.baseline_stats.min, lossless.baseline_stats.max);
    let sr = StageSampler::new(SR_RTO, channel(0.0)).unwrap();
    let ec = StageSampler::new(EC_MDS, channel(0.0)).unwrap();
    assert!((lossless.baseline_stats.mean - 6.0 * sr.lossless(64)).abs() < 1e-12);
    assert!((lossless.candidate_stats.mean - 6.0 * ec.lossless(64)).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn raising_one_stage_never_speeds_up(d in durations(4), r in 0usize..6, i in 0usize..4, extra in 0.0f64..5.0) {
        let before = ring_finish_times(&d);
        let mut raised = d.clone();
        raised[r][i] += extra;
        let after = ring_finish_times(&raised);
        for (row_b, row_a) in before.iter().zip(&after) {
            for (b, a) in row_b.iter().zip(row_a) {
                prop_assert!(a >= b);
            }
        }
    }

    #[test]
    fn rotating_the_ring_rotates_finish_times(d in durations(5), shift in 0usize..5) {
        let n = 5;
        let rotated: Vec<Vec<f64>> = d.iter().map(|row| (0..n).map(|i| row[(i + shift) % n]).collect()).collect();
        let t = ring_finish_times(&d);
        let u = ring_finish_times(&rotated);
        for (tr, ur) in t.iter().zip(&u) {
            for i in 0..n {
                prop_assert_eq!(ur[i], tr[(i + shift) % n]);
            }
        }
    }

    #[test]
    fn finish_times_are_non_decreasing(d in durations(3)) {
        let t = ring_finish_times(&d);
        for r in 1..t.len() {
            for i in 0..3 {
                prop_assert!(t[r][i] >= t[r - 1][i]);
            }
        }
    }

    #[test]
    fn completion_dominates_stage_average(d in durations(4)) {
        let t = ring_finish_times(&d);
        let total: f64 = d.iter().flatten().sum();
        let completion = t[6].iter().copied().fold(0.0, f64::max);
        prop_assert!(completion >= total / 4.0 - 1e-9);
    }
}
