use textspot::spotter::*;
use textspot::synth::*;
use textspot::nn::sigmoid;
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(200);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.02);
    let cfg = SpotterConfig::default();
    let spec = SynthSpec::default();
    let samples: Vec<Sample> = (0..100u64).map(|s| render_sample(&spec, s).unwrap()).collect();
    let sched = TrainSchedule { steps, batch_size: std::env::var("BATCH").ok().and_then(|v| v.parse().ok()).unwrap_or(8), lr, momentum: 0.9, seed: 1 };
    let (store, _) = train(&samples, &cfg, &sched, TrainMode::Joint).unwrap();
    let s = &samples[0];
    let bb = backbone_forward(&s.image, &store, &cfg).unwrap();
    let pyr = bb.pyramid();
    let feat = pyr[0];
    let alive = feat.data.iter().filter(|&&v| v > 0.0).count() as f64 / feat.data.len() as f64;
    let fmax = feat.data.iter().cloned().fold(f64::MIN, f64::max);
    let (_, det) = detection_forward(&pyr, &store, &cfg).unwrap();
    let l = &det.levels[0];
    let cls_max = l.cls.data.iter().cloned().fold(f64::MIN, f64::max);
    let ctr_max = l.ctr.data.iter().cloned().fold(f64::MIN, f64::max);
    let score_max = l.cls.data.iter().zip(l.ctr.data.iter())
        .map(|(&c, &t)| (sigmoid(c)*sigmoid(t)).sqrt()).fold(f64::MIN, f64::max);
    println!("alive {:.3} featmax {:.3} clsmax {:.2} ctrmax {:.2} scoremax {:.3}", alive, fmax, cls_max, ctr_max, score_max);
    for name in ["backbone.conv1.w", "det.tower1.w", "det.off.w", "rec.conv1.w", "rec.fc.w"] {
        let t = store.get(name);
        let norm: f64 = (t.data.iter().map(|v| v*v).sum::<f64>() / t.data.len() as f64).sqrt();
        println!("{name}: rms {:.4}", norm);
    }
}
