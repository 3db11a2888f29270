use attrfuse::fusion::psi_with;
use attrfuse::io::synth::{self, LabelDistribution};
use attrfuse::metric::{l2, Points};
use attrfuse::record::AttrKey;
use attrfuse::stats::{
    candidate_count, candidate_size_single, expected_candidate_size, SingleStats,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn k_prime_non_increasing_in_eps(
        k in 1usize..50, n_a in 2usize..500, extra in 1usize..5000, gamma in 0.01..20.0f64,
        e1 in 0.001..1.0f64, e2 in 0.001..1.0f64,
    ) {
        let n = n_a + extra;
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        let a = candidate_count(k, lo, n, n_a, 1.0, gamma, 1).unwrap();
        let b = candidate_count(k, hi, n, n_a, 1.0, gamma, 1).unwrap();
        prop_assert!(a >= b);
    }

    #[test]
    fn k_prime_non_increasing_in_gamma(
        k in 1usize..50, n_a in 2usize..500, extra in 1usize..5000, eps in 0.001..1.0f64,
        g1 in 0.01..20.0f64, g2 in 0.01..20.0f64,
    ) {
        let n = n_a + extra;
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        let a = candidate_count(k, eps, n, n_a, 1.0, lo, 1).unwrap();
        let b = candidate_count(k, eps, n, n_a, 1.0, hi, 1).unwrap();
        prop_assert!(a >= b);
        prop_assert!(b >= k.min(n_a) && a <= n);
    }
}

#[test]
fn k_prime_tends_to_k() {
    assert_eq!(
        candidate_count(10, 0.05, 10_000, 100, 1.0, 1e9, 1).unwrap(),
        10
    );
}

#[test]
fn overlapping_classes_take_everything() {
    assert_eq!(
        candidate_count(10, 0.05, 1000, 100, 1.0, -0.5, 1).unwrap(),
        1000
    );
}

#[test]
fn spot_check() {
    let kp = candidate_count(10, (-1f64).exp(), 1000, 100, 1.0, 1.0, 1).unwrap();
    assert_eq!(kp, 100);
}

#[test]
fn stats_match_brute_force() {
    let data = synth::categorical(1500, 6, 2, 9, LabelDistribution::Zipf(1.0), 21).unwrap();
    let mut fused = Points::new(6);
    for (v, f) in data.contents.rows().zip(data.attributes.rows()) {
        fused.push(&psi_with(v, f, 3.0, 1.7).unwrap());
    }
    let keys: Vec<AttrKey> = data.attributes.rows().map(AttrKey::of).collect();
    let stats = SingleStats::compute(&fused, &keys).unwrap();
    assert_eq!(stats.total(), 1500);
    assert_eq!(
        (0..stats.num_classes())
            .map(|c| stats.class(c).count)
            .sum::<usize>(),
        1500
    );

    let ids: Vec<usize> = keys.iter().map(|k| stats.class_id(k).unwrap()).collect();
    let c = stats.num_classes();
    let mut centroid = vec![vec![0.0; 6]; c];
    let mut count = vec![0usize; c];
    for (i, &a) in ids.iter().enumerate() {
        count[a] += 1;
        centroid[a]
            .iter_mut()
            .zip(fused.row(i))
            .for_each(|(s, x)| *s += x);
    }
    for (a, cen) in centroid.iter_mut().enumerate() {
        cen.iter_mut().for_each(|x| *x /= count[a] as f64);
    }
    let mut radius = vec![0.0f64; c];
    let mut d_min = vec![f64::INFINITY; c * c];
    for i in 0..1500 {
        radius[ids[i]] = radius[ids[i]].max(l2(fused.row(i), &centroid[ids[i]]));
        for j in 0..1500 {
            if ids[i] != ids[j] {
                let d = l2(fused.row(i), fused.row(j));
                let cell = &mut d_min[ids[i] * c + ids[j]];
                *cell = cell.min(d);
            }
        }
    }
    for a in 0..c {
        let g = stats.class(a);
        assert_eq!(g.count, count[a]);
        assert!((g.radius - radius[a]).abs() <= 1e-9 * radius[a].max(1.0));
        for b in 0..c {
            if a != b {
                assert!((stats.d_min(a, b) - d_min[a * c + b]).abs() <= 1e-9);
            }
        }
        if g.count > 1 && g.radius > 0.0 {
            let sep = (0..c)
                .filter(|&b| b != a)
                .map(|b| d_min[a * c + b])
                .fold(f64::INFINITY, f64::min);
            assert!((g.gamma - (sep / radius[a] - 1.0)).abs() <= 1e-6);
        }
    }
}

#[test]
fn expected_size_is_weighted_mean() {
    let data = synth::categorical(300, 4, 1, 3, LabelDistribution::Uniform, 22).unwrap();
    let mut fused = Points::new(4);
    for (v, f) in data.contents.rows().zip(data.attributes.rows()) {
        fused.push(&psi_with(v, f, 5.0, 1.5).unwrap());
    }
    let keys: Vec<AttrKey> = data.attributes.rows().map(AttrKey::of).collect();
    let stats = SingleStats::compute(&fused, &keys).unwrap();
    let probs: Vec<(AttrKey, f64)> = stats
        .keys()
        .iter()
        .map(|k| (k.clone(), 1.0 / 3.0))
        .collect();
    let mean: f64 = probs
        .iter()
        .map(|(k, _)| candidate_size_single(5, 0.1, &stats, k).unwrap() as f64)
        .sum::<f64>()
        / 3.0;
    let got = expected_candidate_size(5, 0.1, &stats, &probs).unwrap();
    assert!((got - mean).abs() < 1e-9);
    assert!(expected_candidate_size(5, 0.1, &stats, &probs[..2]).is_err());
}
