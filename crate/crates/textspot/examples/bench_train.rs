use textspot::spotter::*;
use textspot::synth::*;
fn main() {
    let cfg = SpotterConfig::default();
    let spec = SynthSpec::default();
    let samples: Vec<Sample> = (0..8).map(|s| render_sample(&spec, s).unwrap()).collect();
    let sched = TrainSchedule { steps: 20, batch_size: 8, lr: 0.02, momentum: 0.9, seed: 1 };
    let t0 = std::time::Instant::now();
    let (_, log) = train(&samples, &cfg, &sched, TrainMode::Joint).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("20 steps in {:.2}s -> {:.3}s/step, loss {:.3} -> {:.3}", dt, dt/20.0, log[0].total, log.last().unwrap().total);
}
