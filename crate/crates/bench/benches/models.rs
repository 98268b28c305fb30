use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use scorecast_bench::{corpus, token_sequences};
use scorecast_core::abtest::{simulate_cohort, BehaviorConfig, CohortSpec, OracleScorer};
use scorecast_core::attentive::kernel::{encoder_backward, encoder_forward};
use scorecast_core::attentive::{EncoderConfig, EncoderParams};
use scorecast_core::cf::{train_cf, CfHyper};
use std::hint::black_box;

fn cf_epoch(c: &mut Criterion) {
    let data = corpus(500).interactions;
    let mut g = c.benchmark_group("cf");
    g.throughput(Throughput::Elements(data.len() as u64));
    g.sample_size(10);
    for k in [3usize, 16] {
        let hyper = CfHyper { k, epochs: 1, ..CfHyper::default() };
        g.bench_with_input(BenchmarkId::new("train_one_epoch", k), &hyper, |b, h| {
            b.iter(|| train_cf(black_box(&data), h).unwrap())
        });
    }
    g.finish();
}

fn encoder(c: &mut Criterion) {
    let corpus = corpus(50);
    let mut g = c.benchmark_group("encoder");
    for (d_model, layers) in [(32usize, 1usize), (64, 2)] {
        let cfg = EncoderConfig { d_model, heads: 4, layers, d_ff: 2 * d_model, max_len: 64 };
        let (vocab, seqs) = token_sequences(&corpus, cfg.max_len);
        let params = EncoderParams::init(cfg, vocab.size(), 3);
        let seq = seqs.iter().max_by_key(|s| s.len()).unwrap().clone();
        let label = format!("d{d_model}_l{layers}_t{}", seq.len());
        g.bench_function(BenchmarkId::new("forward", &label), |b| {
            b.iter(|| encoder_forward(black_box(&params), black_box(&seq)).unwrap())
        });
        let d_out = vec![1e-3; seq.len() * d_model];
        g.bench_function(BenchmarkId::new("forward_backward", &label), |b| {
            let mut grad = vec![0.0; params.data.len()];
            b.iter(|| {
                let cache = encoder_forward(&params, &seq).unwrap();
                encoder_backward(&params, &cache, &d_out, &mut grad);
            })
        });
    }
    g.finish();
}

fn cohort(c: &mut Criterion) {
    let planted = corpus(1).planted;
    let cfg = BehaviorConfig::paper_calibrated();
    let spec = CohortSpec { n_users: 5_000, ..CohortSpec::default() };
    let (a, b) = (OracleScorer { noise_sd: 99.0 }, OracleScorer { noise_sd: 62.0 });
    let mut g = c.benchmark_group("abtest");
    g.throughput(Throughput::Elements(spec.n_users as u64));
    g.sample_size(10);
    g.bench_function("simulate_cohort_5k", |bch| {
        bch.iter(|| simulate_cohort(&a, &b, &planted, black_box(&spec), &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, cf_epoch, encoder, cohort);
criterion_main!(benches);
