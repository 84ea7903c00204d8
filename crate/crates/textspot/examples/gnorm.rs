use textspot::nn::*;
use textspot::spotter::*;
use textspot::synth::*;
fn main() {
    let cfg = SpotterConfig::default();
    let spec = SynthSpec::default();
    let samples: Vec<Sample> = (0..64u64).map(|s| render_sample(&spec, s).unwrap()).collect();
    let mut store = init_params(&cfg, 1);
    let mut norms = Vec::new();
    for step in 0..600 {
        let s = &samples[step % samples.len()];
        let rec = compute_gradients(s, &mut store, &cfg, TrainMode::Joint, step as u64).unwrap();
        if rec.no_positives { continue; }
        let n = clip_grad_norm(&mut store, 5.0).unwrap();
        norms.push(n);
        sgd_momentum_step(&mut store, 0.05, 0.9).unwrap();
    }
    norms.sort_by(|a,b| a.total_cmp(b));
    let q = |p: f64| norms[((norms.len()-1) as f64 * p) as usize];
    println!("n={} q10 {:.2} q50 {:.2} q90 {:.2} q99 {:.2} max {:.2}", norms.len(), q(0.1), q(0.5), q(0.9), q(0.99), q(1.0));
}
