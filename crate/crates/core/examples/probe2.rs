// temporary probe: trace a closed-loop granular run
use pronav_core::calibrate::calibrate;
use pronav_core::config::Config;
use pronav_core::pipeline::ClosedLoopGaits;
use pronav_core::simulator::*;
use pronav_core::telemetry::Gait;

fn main() {
    let cfg = Config::default();
    let table = ParamsTable::default();
    let logs: Vec<_> = bundled_corpus(&table, 16.0).unwrap().into_iter().map(|l| l.frames).collect();
    let profile = calibrate(&logs, &cfg).unwrap();
    let script = ScenarioScript::steady("granular", Gait::Trot, 10.0, 0.5);
    let mut source = ClosedLoopGaits::new(&profile, &cfg, (0.5, 0.0)).unwrap();
    let frames = generate(&table, &script, &mut source, 42, 16.0).unwrap();
    source.next_gait(frames.last(), Gait::Trot);
    for d in &source.decisions {
        println!("t={:6.3} p=({:7.3},{:7.3}) gait={:?} active={:22} case={:?} mode={:?}",
            d.t, d.pc1, d.pc2, d.gait, d.active_ellipse, d.case, d.mode);
    }
}
