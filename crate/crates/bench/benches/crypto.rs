use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bdt_core::crypto::{erasure_decode, erasure_encode, merkle_build, tpke_setup, tsig_setup};

fn erasure(c: &mut Criterion) {
    let data = vec![7u8; 2000];
    let mut g = c.benchmark_group("erasure");
    for (k, n) in [(2, 4), (3, 7), (11, 31)] {
        let frags = erasure_encode(k, n, &data).unwrap();
        let tail: Vec<(usize, Vec<u8>)> = (n - k..n).map(|i| (i, frags[i].clone())).collect();
        g.bench_with_input(BenchmarkId::new("encode", n), &(k, n), |b, &(k, n)| b.iter(|| erasure_encode(k, n, black_box(&data))));
        g.bench_with_input(BenchmarkId::new("decode", n), &(k, n), |b, &(k, n)| b.iter(|| erasure_decode(k, n, black_box(&tail))));
    }
    g.finish();
}

fn merkle(c: &mut Criterion) {
    let leaves: Vec<Vec<u8>> = (0..31).map(|i| vec![i as u8; 200]).collect();
    c.bench_function("merkle/build-31", |b| b.iter(|| merkle_build(black_box(&leaves))));
}

fn threshold(c: &mut Criterion) {
    let (scheme, shares) = tsig_setup(5, 7, 1).unwrap();
    let msg = b"bench".to_vec();
    let signed: Vec<_> = shares.iter().map(|s| s.sign_share(&msg)).collect();
    c.bench_function("tsig/sign", |b| b.iter(|| shares[0].sign_share(black_box(&msg))));
    c.bench_function("tsig/combine-5-of-7", |b| b.iter(|| scheme.combine(&msg, black_box(&signed[..5]))));

    let (public, secrets) = tpke_setup(3, 7, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("tpke/encrypt", |b| b.iter(|| public.encrypt(black_box(&[1u8; 256]), b"l", &mut rng)));
    let ct = public.encrypt(&[1u8; 256], b"l", &mut rng);
    c.bench_function("tpke/dec-share", |b| b.iter(|| secrets[0].dec_share(black_box(&ct))));
    // Each iteration uses a fresh ciphertext so the combination is never memoized.
    c.bench_function("tpke/encrypt-share-decrypt-3", |b| {
        b.iter(|| {
            let ct = public.encrypt(&[1u8; 256], b"l", &mut rng);
            let ds: Vec<_> = secrets[..3].iter().map(|s| s.dec_share(&ct).unwrap()).collect();
            public.decrypt(&ct, &ds).unwrap()
        })
    });
}

criterion_group!(benches, erasure, merkle, threshold);
criterion_main!(benches);
