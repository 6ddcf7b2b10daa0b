//! Sampler throughput on a random 10⁴-anchor scene, printed as CSV.
//!
//! `cargo run --release --example bench_sampler -- [MAX_EXPONENT]`

use iris::bench::{bench_csv, run_benchmark, BenchConfig};
use iris::io::{generate_synthetic_scene, SyntheticLayout, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let max_exp: u32 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(14);
    let (scene, _) = generate_synthetic_scene(&SyntheticSpec {
        seed: 0,
        count: 10_000,
        layout: SyntheticLayout::RandomBox,
    })?;
    let cfg = BenchConfig {
        batch_sizes: (6..=max_exp).step_by(2).map(|e| 1usize << e).collect(),
        repeats: 2,
        ..Default::default()
    };
    print!("{}", bench_csv(&run_benchmark(&scene, &cfg)?));
    Ok(())
}
