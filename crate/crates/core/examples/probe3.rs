// temporary probe: feature-level view of a closed-loop run
use pronav_core::calibrate::calibrate;
use pronav_core::config::Config;
use pronav_core::features::extract_features_seq;
use pronav_core::pipeline::ClosedLoopGaits;
use pronav_core::simulator::*;
use pronav_core::telemetry::Gait;

fn main() {
    let cfg = Config::default();
    let table = ParamsTable::default();
    let logs: Vec<_> = bundled_corpus(&table, 16.0).unwrap().into_iter().map(|l| l.frames).collect();
    let profile = calibrate(&logs, &cfg).unwrap();
    let model = profile.pca_model();

    // corpus gran-crawl reference features
    let crawl_log = &logs[4]; // granular order: trot, crawl, amble? check label
    println!("log4 label: {:?} {:?}", crawl_log[0].terrain, crawl_log[0].gait);
    let b = extract_features_seq(crawl_log, &cfg).unwrap();
    let dim = 9;
    let mut mean = vec![0.0; dim];
    for v in &b.vectors { for j in 0..dim { mean[j] += v.0[j] / b.vectors.len() as f64; } }
    println!("corpus crawl feature means: {:?}", mean.iter().map(|x| (x*100.0).round()/100.0).collect::<Vec<_>>());

    let script = ScenarioScript::steady("granular", Gait::Trot, 10.0, 0.5);
    let mut source = ClosedLoopGaits::new(&profile, &cfg, (0.5, 0.0)).unwrap();
    let frames = generate(&table, &script, &mut source, 42, 16.0).unwrap();
    let batch = extract_features_seq(&frames, &cfg).unwrap();
    for (i, v) in batch.vectors.iter().enumerate() {
        let t = frames[batch.offset + i].t;
        let g = frames[batch.offset + i].gait;
        if t >= 2.2 && t <= 4.6 {
            let p = model.project(v).unwrap();
            println!("t={:5.2} gait={:?} d=[{:6.2} {:6.2} {:6.2} {:6.2}] sum={:7.2} cnt={:4.1} Ox={:5.2} Oy={:5.2} I={:5.2} -> ({:6.2},{:6.2})",
                t, g.map(|g| g.name().chars().next().unwrap()), v.0[0], v.0[1], v.0[2], v.0[3], v.0[4], v.0[5], v.0[6], v.0[7], v.0[8], p.pc1, p.pc2);
        }
    }
}
