use textspot::spotter::*;
use textspot::synth::*;

// Isolate the recognition-loss gradient that reaches the offset head through
// the rectification warp: with lambda_det = 0 there is no other path.
fn main() {
    let cfg = SpotterConfig { channels: 4, lambda_det: 0.0, ..SpotterConfig::default() };
    let spec = SynthSpec { image_size: (64, 128), instances_per_image: (1, 2), ..SynthSpec::default() };
    let sample = render_sample(&spec, 3).unwrap();
    let mut store = init_params(&cfg, 5);
    let rec = compute_gradients(&sample, &mut store, &cfg, TrainMode::Joint, 1).unwrap();
    println!("rec loss {:.6} npos {}", rec.total, rec.n_pos);
    let g = store.grad("det.off.b").unwrap().clone();
    let eps = 1e-4;
    // Probe the 8 largest-gradient bias coordinates plus 4 arbitrary ones.
    let mut order: Vec<usize> = (0..g.data.len()).collect();
    order.sort_by(|&a, &b| g.data[b].abs().total_cmp(&g.data[a].abs()));
    let probes: Vec<usize> = order[..8].iter().chain([0usize, 7, 15, 30].iter()).copied().collect();
    for idx in probes {
        let orig = store.get("det.off.b").data[idx];
        store.get_mut("det.off.b").data[idx] = orig + eps;
        let lp = compute_gradients(&sample, &mut store, &cfg, TrainMode::Joint, 1).unwrap().total;
        store.get_mut("det.off.b").data[idx] = orig - eps;
        let lm = compute_gradients(&sample, &mut store, &cfg, TrainMode::Joint, 1).unwrap().total;
        store.get_mut("det.off.b").data[idx] = orig;
        let fd = (lp - lm) / (2.0 * eps);
        let a = g.data[idx];
        let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
        println!("off.b[{idx:2}] analytic {a:+.6e} fd {fd:+.6e} rel {rel:.2e}");
    }
}
