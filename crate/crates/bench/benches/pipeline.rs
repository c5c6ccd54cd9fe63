use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pipeserve_core::engine::{reciprocal_rank_fusion, Bm25Engine, Bm25Index, Bm25Params, Engine};
use pipeserve_core::pipeline::parse;
use pipeserve_core::processor::CacheKey;
use pipeserve_core::{Query, ScoredList};

const WORDS: &[&str] = &[
    "machu", "picchu", "peru", "llama", "andes", "inca", "taiwan", "island", "tower", "paris", "river", "mountain",
    "valley", "city", "temple", "stone", "road", "coast", "forest", "desert",
];

// small deterministic generator so runs are comparable
fn corpus(n: usize) -> Vec<(String, String)> {
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    (0..n)
        .map(|i| {
            let text: Vec<&str> = (0..30)
                .map(|_| {
                    x ^= x << 13;
                    x ^= x >> 7;
                    x ^= x << 17;
                    WORDS[(x % WORDS.len() as u64) as usize]
                })
                .collect();
            (format!("d{i}"), text.join(" "))
        })
        .collect()
}

fn bench_parse(c: &mut Criterion) {
    let mut g = c.benchmark_group("parse");
    for p in ["bm25", "{qwen3-neuclir,plaidx-neuclir}RRF%50 >> rank1", "gen{a%10,b>>r,{c,d}f}rrf%20>>r>>s%5"] {
        g.bench_with_input(BenchmarkId::from_parameter(p.len()), p, |b, p| b.iter(|| parse(black_box(p)).unwrap()));
    }
    g.finish();
}

fn bench_bm25(c: &mut Criterion) {
    let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
    let mut g = c.benchmark_group("bm25_search");
    for n in [1_000, 10_000] {
        let engine = Bm25Engine::new("bm25", Bm25Index::build(corpus(n), Bm25Params::default()).unwrap());
        let batch: Vec<Query> = (0..16)
            .map(|i| Query::new(format!("{} {}", WORDS[i % 20], WORDS[(i * 7) % 20]), 100).unwrap())
            .collect();
        g.bench_with_input(BenchmarkId::new("batch16", n), &batch, |b, batch| {
            b.iter(|| rt.block_on(engine.search_batch(black_box(batch))).unwrap())
        });
    }
    g.finish();
}

fn bench_rrf(c: &mut Criterion) {
    let lists: Vec<ScoredList> = (0..4)
        .map(|l| ScoredList::from_entries((0..100).map(|i| (format!("d{}", (i * 7 + l * 31) % 250), (100 - i) as f64))).unwrap())
        .collect();
    c.bench_function("rrf_4x100", |b| b.iter(|| reciprocal_rank_fusion(black_box(&lists), 60.0).unwrap()));
}

fn bench_cache_key(c: &mut Criterion) {
    c.bench_function("cache_key", |b| {
        b.iter(|| CacheKey::new(black_box("{a,b}rrf%50>>rerank@c1#100#3"), black_box("where is machu picchu"), 10))
    });
}

criterion_group!(benches, bench_parse, bench_bm25, bench_rrf, bench_cache_key);
criterion_main!(benches);
