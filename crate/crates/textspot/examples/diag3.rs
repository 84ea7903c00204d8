use textspot::nn::sigmoid;
use textspot::spotter::*;
use textspot::synth::*;
use textspot::targets::make_targets;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let steps: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let mode = match args.get(3).map(|s| s.as_str()).unwrap_or("joint") {
        "gt" => TrainMode::GtExtract,
        "rec" => TrainMode::RecBpNoRcp,
        _ => TrainMode::Joint,
    };
    let n_img: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(400);
    let lambda_rcp: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let cfg = SpotterConfig { lambda_rcp, ..SpotterConfig::default() };
    let spec = SynthSpec::default();
    let samples: Vec<Sample> = (0..n_img as u64)
        .map(|s| render_sample(&spec, s).unwrap())
        .collect();
    let sched = TrainSchedule { steps, batch_size: 8, lr, momentum: 0.9, seed: 1 };
    let (store, _) = train(&samples, &cfg, &sched, mode).unwrap();

    // Predicted scores at GT-positive cells vs everywhere, over 20 samples.
    let mut pos_cls = Vec::new();
    let mut pos_ctr = Vec::new();
    let mut pos_score = Vec::new();
    let mut neg_max: f64 = 0.0;
    let mut off_err = Vec::new();
    for s in samples.iter().take(20) {
        let bb = backbone_forward(&s.image, &store, &cfg).unwrap();
        let pyr = bb.pyramid();
        let (_, det) = detection_forward(&pyr, &store, &cfg).unwrap();
        let (maps, _) = make_targets(
            &s.instances,
            (s.image.shape[1], s.image.shape[2]),
            &cfg.level_specs(),
            cfg.n_rcp,
        );
        for (li, (l, m)) in det.levels.iter().zip(maps.iter()).enumerate() {
            let (h, w) = (l.cls.shape[2], l.cls.shape[3]);
            let _ = li;
            for r in 0..h {
                for c in 0..w {
                    let sc = sigmoid(l.cls.data[r * w + c]);
                    let st = sigmoid(l.ctr.data[r * w + c]);
                    let score = (sc * st).sqrt();
                    if m.instance_id[r * w + c] >= 0 {
                        pos_cls.push(sc);
                        pos_ctr.push(st);
                        pos_score.push(score);
                        // mean abs offset error (pixels)
                        let mut e = 0.0;
                        for ch in 0..4 * cfg.n_rcp {
                            let p = l.off.data[(ch * h + r) * w + c] * m.stride as f64;
                            let t = m.offset_at(ch, r, c);
                            e += (p - t).abs();
                        }
                        off_err.push(e / (4.0 * cfg.n_rcp as f64));
                    } else {
                        neg_max = neg_max.max(score);
                    }
                }
            }
        }
    }
    let stats = |v: &mut Vec<f64>| -> (f64, f64, f64) {
        v.sort_by(f64::total_cmp);
        (v[v.len() / 10], v[v.len() / 2], v[v.len() * 9 / 10])
    };
    println!("n_pos cells: {}", pos_cls.len());
    println!("pos cls q10/q50/q90: {:?}", stats(&mut pos_cls));
    println!("pos ctr q10/q50/q90: {:?}", stats(&mut pos_ctr));
    println!("pos score q10/q50/q90: {:?}", stats(&mut pos_score));
    println!("neg max score: {neg_max:.4}");
    println!("off err q10/q50/q90 (stride units): {:?}", stats(&mut off_err));
    let ev: Vec<EvalItem> = samples
        .iter()
        .take(50)
        .enumerate()
        .map(|(i, s)| EvalItem {
            image_id: format!("{i}"),
            predictions: infer(&s.image, &store, &SpotterConfig { rec_thresh: 0.0, ..cfg.clone() })
                .unwrap(),
            annotations: s.instances.clone(),
        })
        .collect();
    let m = evaluate(&ev).unwrap();
    println!("det F {:.3} e2e F {:.3} npred {} (rec_thresh 0)", m.det_f, m.e2e_f, m.n_pred);
    let ev_def: Vec<EvalItem> = samples
        .iter()
        .take(50)
        .enumerate()
        .map(|(i, s)| EvalItem {
            image_id: format!("{i}"),
            predictions: infer(&s.image, &store, &cfg).unwrap(),
            annotations: s.instances.clone(),
        })
        .collect();
    let md = evaluate(&ev_def).unwrap();
    println!("det F {:.3} e2e F {:.3} npred {} (default thresh)", md.det_f, md.e2e_f, md.n_pred);
    let n_read = ev
        .iter()
        .flat_map(|it| it.predictions.iter())
        .filter(|p| !p.transcript.is_empty())
        .count();
    println!("preds with transcript: {n_read}");
    for it in ev.iter().take(4) {
        let gts: Vec<&str> = it.annotations.iter().map(|a| a.transcript.as_str()).collect();
        println!("gt: {gts:?}");
        for p in &it.predictions {
            println!(
                "  pred '{}' score {:.2} mean_char {:.2}",
                p.transcript,
                p.det_score,
                p.mean_char_score()
            );
        }
    }
}
