// temporary probe: convergence statistics across seeds, per terrain
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
    let winner = |terrain: &str| {
        profile.sz_ids.iter().find(|id| id.starts_with(terrain)).unwrap().clone()
    };
    for terrain in ["solid-flat", "granular", "poor-foothold", "high-resistance"] {
        let win_id = winner(terrain);
        let win_gait = profile.ellipse(&win_id).unwrap().gait;
        let mut ok = 0;
        let mut worst_changes = 0;
        let mut worst_tc: f64 = 0.0;
        let n_runs = 200;
        for seed in 0..n_runs {
            let script = ScenarioScript::steady(terrain, Gait::Trot, 10.0, 0.5);
            let mut source = ClosedLoopGaits::new(&profile, &cfg, (0.5, 0.0)).unwrap();
            let frames = generate(&table, &script, &mut source, 5000 + seed, 16.0).unwrap();
            source.next_gait(frames.last(), Gait::Trot);
            // walking-gait sequence (halt frames carry no gait)
            let gaits: Vec<(f64, Gait)> =
                source.decisions.iter().filter_map(|d| d.gait.map(|g| (d.t, g))).collect();
            // convergence: first time the walking gait reaches the winner and
            // holds it for >= 2 s
            let hold = 32usize;
            let mut t_c = None;
            for i in 0..gaits.len().saturating_sub(hold) {
                if gaits[i..i + hold].iter().all(|(_, g)| *g == win_gait) {
                    t_c = Some(gaits[i].0);
                    break;
                }
            }
            let Some(tc) = t_c else { continue };
            let changes = gaits
                .windows(2)
                .take_while(|w| w[0].0 < tc)
                .filter(|w| w[0].1 != w[1].1)
                .count();
            if tc <= 5.0 && changes <= 3 {
                ok += 1;
                worst_changes = worst_changes.max(changes);
                worst_tc = worst_tc.max(tc);
            }
        }
        println!("{terrain:16} winner {win_gait:?}: {ok}/{n_runs} converged (<=3 changes, <=5 s); worst t_c {worst_tc:.2}, worst changes {worst_changes}");
    }
}
