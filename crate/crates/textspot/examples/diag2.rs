use textspot::spotter::*;
use textspot::synth::*;
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let mode = match args.get(3).map(|s| s.as_str()).unwrap_or("gt") {
        "joint" => TrainMode::Joint,
        _ => TrainMode::GtExtract,
    };
    let cfg = SpotterConfig::default();
    let spec = SynthSpec::default();
    let samples: Vec<Sample> = (0..400u64).map(|s| render_sample(&spec, s).unwrap()).collect();
    let sched = TrainSchedule { steps, batch_size: 8, lr, momentum: 0.9, seed: 1 };
    let (store, _) = train(&samples, &cfg, &sched, mode).unwrap();
    // Tower liveness per level + head weight rms.
    let s = &samples[0];
    let bb = backbone_forward(&s.image, &store, &cfg).unwrap();
    let pyr = bb.pyramid();
    for (i, f) in pyr.iter().enumerate() {
        let alive = f.data.iter().filter(|&&v| v > 0.0).count() as f64 / f.data.len() as f64;
        let rms: f64 = (f.data.iter().map(|v| v*v).sum::<f64>() / f.data.len() as f64).sqrt();
        println!("pyr[{i}] alive {alive:.3} rms {rms:.4}");
    }
    let (cache, det) = detection_forward(&pyr, &store, &cfg).unwrap();
    let _ = cache;
    for (i, l) in det.levels.iter().enumerate() {
        let cls_mean: f64 = l.cls.data.iter().sum::<f64>() / l.cls.data.len() as f64;
        let cls_sd: f64 = (l.cls.data.iter().map(|v| (v-cls_mean)*(v-cls_mean)).sum::<f64>() / l.cls.data.len() as f64).sqrt();
        let off_sd: f64 = {
            let m: f64 = l.off.data.iter().sum::<f64>() / l.off.data.len() as f64;
            (l.off.data.iter().map(|v| (v-m)*(v-m)).sum::<f64>() / l.off.data.len() as f64).sqrt()
        };
        println!("level {i}: cls mean {cls_mean:.3} sd {cls_sd:.4} off sd {off_sd:.4}");
    }
    for name in ["det.tower1.w", "det.tower1.b", "det.tower2.w", "det.cls.w", "det.cls.b", "det.off.w"] {
        let t = store.get(name);
        let norm: f64 = (t.data.iter().map(|v| v*v).sum::<f64>() / t.data.len() as f64).sqrt();
        let mx = t.data.iter().cloned().fold(f64::MIN, f64::max);
        println!("{name}: rms {norm:.4} max {mx:.4}");
    }
}
