use textspot::spotter::*;
use textspot::synth::*;
use textspot::nn::sigmoid;
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let mom: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.9);
    let cfg = SpotterConfig::default();
    let spec = SynthSpec::default();
    let sample = render_sample(&spec, 0).unwrap();
    let mut store = init_params(&cfg, 1);
    for step in 0..steps {
        let r = train_step(&[&sample], &mut store, &cfg, TrainMode::Joint, lr, mom, step as u64, 1.0).unwrap();
        if step % (steps/10).max(1) == 0 {
            let bb = backbone_forward(&sample.image, &store, &cfg).unwrap();
            let (_, det) = detection_forward(&bb.pyramid(), &store, &cfg).unwrap();
            let smax = det.levels.iter().map(|l| l.cls.data.iter().zip(l.ctr.data.iter())
                .map(|(&c,&t)| (sigmoid(c)*sigmoid(t)).sqrt()).fold(f64::MIN, f64::max))
                .fold(f64::MIN, f64::max);
            println!("step {step:4} tot {:.3} cls {:.3} ctr {:.3} rcp {:.3} rec {:.3} smax {:.3}", r.total, r.cls, r.ctr, r.rcp, r.rec, smax);
        }
    }
}
