//! Nearest-neighbour search in embedding space: the exact scan and the grid
//! index agree on random embeddings; timings for both.
//!
//! cargo run --release --example nn_search -- [points] [dims]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use symmatch::autodiff::Tensor;
use symmatch::infer::{nearest_neighbors, SearchMethod};

fn main() -> symmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5000);
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(20);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut random = |rows| Tensor::new(rows, k, (0..rows * k).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let queries = random(n)?;
    let reference = random(n)?;

    let mut results = Vec::new();
    for method in [SearchMethod::Exact, SearchMethod::GridBucket] {
        let start = std::time::Instant::now();
        let (idx, _) = nearest_neighbors(&queries, &reference, method)?;
        println!("{method:?}: {n} queries in {:.1} ms", start.elapsed().as_secs_f64() * 1e3);
        results.push(idx);
    }
    println!("identical answers: {}", results[0] == results[1]);
    Ok(())
}
