//! Sweep the power-iteration constant of the proxy loss and record how much
//! of the `ε` budget the gap `proxy − scw_loss` uses.
//!
//! `cargo run --release --example calibrate_q -- [instances] [out.csv]`

use std::io::Write;

use lrsketch::par;
use lrsketch::proxy_loss::{proxy_loss, q_iterations, ProxyConfig};
use lrsketch::rng::SeedStreams;
use lrsketch::sketch_scw::{sample_oblivious_sketch_with, scw_loss};
use lrsketch::DenseMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let count: usize = args.get(1).map(|a| a.parse()).transpose()?.unwrap_or(200);
    let mut out: Box<dyn Write> = match args.get(2) {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout()),
    };
    let seeds = SeedStreams::new(2024);
    writeln!(out, "epsilon,q_constant,q_at_d10,instances,min_gap,max_gap,max_gap_over_epsilon,violations")?;
    for &eps in &[0.1, 0.01] {
        for &qc in &[0.05, 0.25, 1.0, 4.0] {
            let cfg = ProxyConfig { epsilon: eps, subset_cap: 1000, q_constant: qc };
            let gaps = par::map_indexed(count, |i| {
                let mut rng = seeds.indexed("calibrate", i as u64);
                let n = rng.random_range(2..=10);
                let d = rng.random_range(2..=10);
                let m = rng.random_range(1..=5usize.min(n));
                let k = rng.random_range(1..=m.min(d));
                let a = DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal));
                let a = a.scale(1.0 / lrsketch::densela::fro_sq(&a).sqrt());
                let s = sample_oblivious_sketch_with(m, n, rng.random_range(1..=m), &mut rng).expect("valid shape");
                proxy_loss(&s, &a, k, &cfg).expect("proxy") - scw_loss(&s, &a, k).expect("scw")
            });
            let min = gaps.iter().copied().fold(f64::INFINITY, f64::min);
            let max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let bad = gaps.iter().filter(|&&g| g < -1e-9 || g > eps + 1e-9).count();
            writeln!(out, "{eps},{qc},{},{count},{min:e},{max:e},{:.4},{bad}", q_iterations(eps, 10, qc), max / eps)?;
        }
    }
    Ok(())
}
