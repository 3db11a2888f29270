use attrfuse::backend::{BackendConfig, GraphParams};
use attrfuse::hybrid::{BuildConfig, HybridIndex};
use attrfuse::io::synth::{self, Categorical, LabelDistribution};
use attrfuse::metric::{l2, Points};
use attrfuse::record::Record;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn filtered_truth(data: &Categorical, q: &[f64], label: usize, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = (0..data.labels.len())
        .filter(|&i| data.labels[i] == label)
        .map(|i| (l2(data.contents.row(i), q), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|x| x.1).collect()
}

fn zipf_data() -> Categorical {
    synth::categorical(10_000, 16, 4, 16, LabelDistribution::Zipf(1.0), 41).unwrap()
}

#[test]
fn exact_queries_match_filtered_scan() {
    let data = zipf_data();
    let idx = HybridIndex::build_from(
        data.contents.clone(),
        data.attributes.clone(),
        &BuildConfig::default(),
    )
    .unwrap();
    let queries = synth::uniform_points(200, 16, 42);
    let labels = synth::labels(200, 16, LabelDistribution::Zipf(1.0), 43).unwrap();
    let mut exact = 0;
    for (q, &label) in queries.rows().zip(&labels) {
        let res = idx
            .query(q, data.classes.row(label), 10, 0.05, false)
            .unwrap();
        assert!(res.hits.iter().all(|h| data.labels[h.id] == label));
        if res.ids() == filtered_truth(&data, q, label, 10) {
            exact += 1;
        }
    }
    assert!(exact >= 190, "{exact}/200 exact");
}

#[test]
fn k_prime_covers_true_top_k() {
    let data = zipf_data();
    let idx = HybridIndex::build_from(
        data.contents.clone(),
        data.attributes.clone(),
        &BuildConfig::default(),
    )
    .unwrap();
    let queries = synth::uniform_points(200, 16, 44);
    let labels = synth::labels(200, 16, LabelDistribution::Zipf(1.0), 45).unwrap();
    let eps = 0.05;
    let mut covered = 0;
    for (q, &label) in queries.rows().zip(&labels) {
        let f = data.classes.row(label);
        let kp = idx.candidate_count(10, eps, f).unwrap().unwrap();
        let fused_q: Vec<f64> = attrfuse::fusion::psi_transform(q, f, idx.params()).unwrap();
        let cands: Vec<usize> = idx
            .backend()
            .search(&fused_q, kp)
            .unwrap()
            .iter()
            .map(|h| h.id)
            .collect();
        if filtered_truth(&data, q, label, 10)
            .iter()
            .all(|i| cands.contains(i))
        {
            covered += 1;
        }
    }
    assert!(covered as f64 / 200.0 >= 1.0 - eps, "{covered}/200 covered");
}

#[test]
fn in_class_order_follows_content_distance() {
    let data = synth::categorical(500, 8, 2, 4, LabelDistribution::Uniform, 46).unwrap();
    let idx = HybridIndex::build_from(
        data.contents.clone(),
        data.attributes.clone(),
        &BuildConfig::default(),
    )
    .unwrap();
    let q = synth::uniform_points(1, 8, 47);
    let res = idx
        .query(q.row(0), data.classes.row(2), 500, 1e-9, false)
        .unwrap();
    let truth = filtered_truth(&data, q.row(0), 2, 500);
    assert_eq!(res.ids(), truth);
    assert!(res.hits.windows(2).all(|w| w[0].score <= w[1].score));
}

#[test]
fn self_query_returns_record() {
    let data = synth::categorical(2000, 8, 2, 8, LabelDistribution::Zipf(1.2), 48).unwrap();
    for backend in [
        BackendConfig::flat(),
        BackendConfig::graph(GraphParams::default()),
    ] {
        let cfg = BuildConfig {
            backend,
            ..BuildConfig::default()
        };
        let idx =
            HybridIndex::build_from(data.contents.clone(), data.attributes.clone(), &cfg).unwrap();
        for i in (0..2000).step_by(97) {
            let res = idx
                .query(data.contents.row(i), data.attributes.row(i), 1, 0.05, false)
                .unwrap();
            assert_eq!(res.ids(), vec![i]);
            assert_eq!(res.hits[0].score, 0.0);
        }
    }
}

#[test]
fn toy_query_skips_closer_foreign_point() {
    let a = [(5.00, 0.00), (-2.20, 4.33), (-2.50, -4.33)];
    let b = [(2.50, 4.33), (-5.00, 0.00), (2.50, -4.33), (3.54, 3.54)];
    let records: Vec<Record> = a
        .iter()
        .map(|&(x, y)| Record::single(vec![x, y], vec![-3.0]))
        .chain(
            b.iter()
                .map(|&(x, y)| Record::single(vec![x, y], vec![3.0])),
        )
        .collect();
    let cfg = BuildConfig {
        alpha_override: Some(3.0),
        beta_override: Some(1.5),
        ..BuildConfig::default()
    };
    let idx = HybridIndex::build(&records, &cfg).unwrap();
    let res = idx.query(&[5.0, 0.0], &[-3.0], 3, 0.05, false).unwrap();
    assert_eq!(res.ids(), vec![0, 1, 2]);
}

#[test]
fn approximate_attributes_fall_back_to_neighbors() {
    let mut rng = ChaCha8Rng::seed_from_u64(49);
    let mut contents = Points::new(4);
    let mut attrs = Points::new(1);
    for i in 0..300 {
        contents.push(&(0..4).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
        attrs.push(&[(i % 3) as f64 * 10.0]);
    }
    let idx = HybridIndex::build_from(contents, attrs.clone(), &BuildConfig::default()).unwrap();
    let q = [0.5; 4];
    let exact = idx.query(&q, &[11.0], 5, 0.05, false).unwrap();
    assert!(exact.hits.is_empty() && exact.truncated);
    let approx = idx.query(&q, &[11.0], 5, 0.05, true).unwrap();
    assert_eq!(approx.hits.len(), 5);
    assert!(approx.hits.iter().all(|h| attrs.row(h.id)[0] == 10.0));
}
