//! Regenerates `data/expression_fixture_200x74.tsv`: a synthetic FPKM table
//! of 200 genes x 74 conditions.
//!
//! Log2 expression follows a per-gene baseline plus five latent tissue
//! programs and Gaussian noise; values are converted to FPKM with a small
//! detection offset so that weakly expressed genes contain exact zeros.
//!
//! ```text
//! cargo run -p pdcov --example make_fixture -- crates/core/data/expression_fixture_200x74.tsv
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const GENES: usize = 200;
const CONDITIONS: usize = 74;
const PROGRAMS: usize = 5;
const SEED: u64 = 20_200_074;
const TISSUES: [&str; 8] = [
    "leaf", "root", "stem", "panicle", "seed", "flower", "shoot", "node",
];

fn main() -> std::io::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "expression_fixture_200x74.tsv".into());
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let std = Normal::new(0.0, 1.0).unwrap();

    let tissue_of: Vec<usize> = (0..CONDITIONS).map(|c| c * TISSUES.len() / CONDITIONS).collect();
    // program activity per tissue, shared by all conditions of that tissue
    let activity: Vec<[f64; PROGRAMS]> = (0..TISSUES.len())
        .map(|_| std::array::from_fn(|_| 1.5 * std.sample(&mut rng)))
        .collect();
    let condition_shift: Vec<f64> = (0..CONDITIONS).map(|_| 0.3 * std.sample(&mut rng)).collect();

    let mut names = Vec::with_capacity(CONDITIONS);
    let mut count = [0usize; TISSUES.len()];
    for &t in &tissue_of {
        count[t] += 1;
        names.push(format!("{}_{}", TISSUES[t], count[t]));
    }

    let mut out = BufWriter::new(File::create(&path)?);
    write!(out, "GeneID")?;
    for n in &names {
        write!(out, "\t{n}")?;
    }
    writeln!(out)?;

    for g in 0..GENES {
        let baseline = 3.0 + 2.5 * std.sample(&mut rng);
        let loadings: [f64; PROGRAMS] = std::array::from_fn(|_| {
            if rng.random::<f64>() < 0.4 {
                std.sample(&mut rng)
            } else {
                0.0
            }
        });
        let noise_sd = 0.3 + 0.5 * rng.random::<f64>();
        write!(out, "GENE{:04}", g + 1)?;
        for c in 0..CONDITIONS {
            let program: f64 = loadings
                .iter()
                .zip(&activity[tissue_of[c]])
                .map(|(l, a)| l * a)
                .sum();
            let log2 = baseline + program + condition_shift[c] + noise_sd * std.sample(&mut rng);
            let fpkm = (log2.exp2() - 0.25).max(0.0);
            write!(out, "\t{fpkm:.4}")?;
        }
        writeln!(out)?;
    }
    out.flush()
}
