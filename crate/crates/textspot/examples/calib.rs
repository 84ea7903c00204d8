use textspot::spotter::*;
use textspot::synth::*;
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.02);
    let mode = match args.get(3).map(|s| s.as_str()).unwrap_or("joint") {
        "gt" => TrainMode::GtExtract,
        "rec" => TrainMode::RecBpNoRcp,
        _ => TrainMode::Joint,
    };
    let rec_thresh: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.9);
    let cfg = SpotterConfig { rec_thresh, ..SpotterConfig::default() };
    let spec = SynthSpec::default();
    let train_n: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(400);
    let samples: Vec<Sample> = (0..train_n as u64).map(|s| render_sample(&spec, s).unwrap()).collect();
    let eval_samples: Vec<Sample> = (10_000..10_050u64).map(|s| render_sample(&spec, s).unwrap()).collect();
    let sched = TrainSchedule { steps, batch_size: std::env::var("BATCH").ok().and_then(|v| v.parse().ok()).unwrap_or(8), lr, momentum: 0.9, seed: 1 };
    let t0 = std::time::Instant::now();
    let (store, log) = train(&samples, &cfg, &sched, mode).unwrap();
    println!("trained {} steps in {:.1}s; loss windows:", steps, t0.elapsed().as_secs_f64());
    for chunk in log.chunks(steps/10) {
        let m: f64 = chunk.iter().map(|r| r.total).sum::<f64>() / chunk.len() as f64;
        let rec: f64 = chunk.iter().map(|r| r.rec).sum::<f64>() / chunk.len() as f64;
        let cls: f64 = chunk.iter().map(|r| r.cls).sum::<f64>() / chunk.len() as f64;
        let rcp: f64 = chunk.iter().map(|r| r.rcp).sum::<f64>() / chunk.len() as f64;
        print!(" [tot {:.2} cls {:.2} rcp {:.2} rec {:.2}]", m, cls, rcp, rec);
    }
    println!();
    let items: Vec<EvalItem> = eval_samples.iter().enumerate().map(|(i, s)| EvalItem {
        image_id: format!("{i}"),
        predictions: infer(&s.image, &store, &cfg).unwrap(),
        annotations: s.instances.clone(),
    }).collect();
    let m = evaluate(&items).unwrap();
    println!("det P/R/F {:.3}/{:.3}/{:.3}  e2e P/R/F {:.3}/{:.3}/{:.3}  npred {} ngt {}",
        m.det_precision, m.det_recall, m.det_f, m.e2e_precision, m.e2e_recall, m.e2e_f, m.n_pred, m.n_gt);
    let shift = feature_shift_diagnostic(&store, &cfg, &eval_samples);
    println!("feature shift: {:?}", shift);
}
