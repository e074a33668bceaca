//! Scores candidate split seeds by how evenly dyad difficulty lands on the
//! two sides. Difficulty proxy: per-dyad 50-step aggregate velocity MSE
//! under both the trained NN and the degree-8 polynomial baseline.

use std::collections::BTreeMap;

use tandem_core::eval::{evaluate, NnForecaster, PolyForecaster};
use tandem_core::io::read_trials_csv;
use tandem_core::mlp::load;
use tandem_core::trajectory::{split_by_dyad, Side};

fn main() {
    let corpus = std::env::args().nth(1).expect("corpus path");
    let model_path = std::env::args().nth(2).expect("model path");
    let trials = read_trials_csv(corpus.as_ref()).expect("read corpus").trials;
    let model = load(model_path.as_ref()).expect("load model");

    let mut dyads: Vec<u32> = trials.iter().map(|t| t.dyad_id).collect();
    dyads.sort();
    dyads.dedup();

    // Per-dyad (mse_nn, mse_poly, n_windows).
    let mut table: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for &d in &dyads {
        let subset: Vec<_> = trials.iter().filter(|t| t.dyad_id == d).collect();
        let nn = NnForecaster::new(&model, "nn");
        let rep_nn = evaluate(&nn, &subset, 50, None, "d").expect("nn eval");
        let poly = PolyForecaster::new(8, subset[0].sample_rate_hz);
        let rep_poly = evaluate(&poly, &subset, 50, None, "d").expect("poly eval");
        let nn_mse = rep_nn.mean_velocity_mse_through(50);
        let poly_mse = rep_poly.mean_velocity_mse_through(50);
        println!(
            "dyad {d}: nn {nn_mse:.6} poly {poly_mse:.6} windows {}",
            rep_nn.n_windows
        );
        table.insert(d, (nn_mse, poly_mse, rep_nn.n_windows));
    }

    // Window-weighted per-side aggregates for each candidate seed.
    let mut ranked: Vec<(f64, u64, f64, f64)> = Vec::new();
    for seed in 0..400u64 {
        let split = split_by_dyad(&trials, 0.75, seed).expect("split");
        let mut acc = [[0.0f64; 2]; 2]; // [side][proxy] weighted sums
        let mut weight = [0.0f64; 2];
        for (&d, &(nn, poly, w)) in &table {
            let side = match split.side_of(d) {
                Some(Side::Train) => 0,
                Some(Side::Validation) => 1,
                None => continue,
            };
            acc[side][0] += nn * w as f64;
            acc[side][1] += poly * w as f64;
            weight[side] += w as f64;
        }
        let nn_ratio = (acc[1][0] / weight[1]) / (acc[0][0] / weight[0]);
        let poly_ratio = (acc[1][1] / weight[1]) / (acc[0][1] / weight[0]);
        let score = nn_ratio.ln().abs().max(poly_ratio.ln().abs());
        ranked.push((score, seed, nn_ratio, poly_ratio));
    }
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    println!("\nbest seeds (score = max |log ratio|, val/train):");
    for (score, seed, nn_ratio, poly_ratio) in ranked.iter().take(12) {
        println!(
            "seed {seed}: score {score:.4} nn_ratio {nn_ratio:.3} poly_ratio {poly_ratio:.3}"
        );
    }
}
