// temporary probe: examine fitted profile geometry
use pronav_core::calibrate::calibrate;
use pronav_core::config::Config;
use pronav_core::simulator::{bundled_corpus, ParamsTable};


fn extra(profile: &pronav_core::profile::CalibrationProfile, logs: &[Vec<pronav_core::telemetry::ProprioFrame>], cfg: &Config) {
    use pronav_core::features::extract_features_seq;
    let model = profile.pca_model();
    let zones = profile.zone_set().unwrap();
    println!("-- cluster vs winner-ellipse containment (fraction of points inside) --");
    for log in logs {
        let label = format!("{}-{}", log[0].terrain.clone().unwrap(), log[0].gait.unwrap());
        let batch = extract_features_seq(log, cfg).unwrap();
        let pts: Vec<_> = batch.vectors.iter().map(|v| model.project(v).unwrap()).collect();
        let mut row = format!("{label:26}");
        for e in zones.sz() {
            let frac = pts.iter().filter(|p| e.contains(p)).count() as f64 / pts.len() as f64;
            row += &format!("  {}:{:5.2}", &e.id[..6.min(e.id.len())], frac);
        }
        let out = pts.iter().filter(|p| !zones.gamma_safe().contains(p)).count() as f64 / pts.len() as f64;
        row += &format!("  outGamma:{out:5.2}");
        println!("{row}");
    }
}


fn feature_stats(logs: &[Vec<pronav_core::telemetry::ProprioFrame>], cfg: &Config) {
    use pronav_core::features::extract_features_seq;
    println!("-- per-cluster feature mean/std: sum(4), count(5), Ox(6), I(8) --");
    for log in logs {
        let label = format!("{}-{}", log[0].terrain.clone().unwrap(), log[0].gait.unwrap());
        let b = extract_features_seq(log, cfg).unwrap();
        let n = b.vectors.len() as f64;
        let stat = |j: usize| {
            let m = b.vectors.iter().map(|v| v.0[j]).sum::<f64>() / n;
            let s = (b.vectors.iter().map(|v| (v.0[j] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            (m, s)
        };
        let (ms, ss) = stat(4); let (mc, sc) = stat(5); let (mo, so) = stat(6); let (mi, si) = stat(8);
        println!("{label:26} sum {ms:7.2}±{ss:6.2}  cnt {mc:5.1}±{sc:4.1}  Ox {mo:5.2}±{so:4.2}  I {mi:5.1}±{si:4.2}");
    }
}

fn main() {
    let cfg = Config::default();
    let table = ParamsTable::default();
    let logs: Vec<_> = bundled_corpus(&table, 16.0).unwrap().into_iter().map(|l| l.frames).collect();
    let profile = calibrate(&logs, &cfg).unwrap();
    extra(&profile, &logs, &cfg);
    feature_stats(&logs, &cfg);
    println!("lvz = {}", profile.lvz_id);
    println!("sz  = {:?}", profile.sz_ids);
    let mut sorted: Vec<_> = profile.ellipses.iter().collect();
    sorted.sort_by(|a, b| a.area.partial_cmp(&b.area).unwrap());
    for e in &sorted {
        println!("{:26} area {:10.4}  mean ({:7.3},{:7.3})  cov [[{:.4},{:.4}],[.,{:.4}]]",
                 e.id, e.area, e.mean[0], e.mean[1], e.cov[0][0], e.cov[0][1], e.cov[1][1]);
    }
    println!("gamma: mean ({:.3},{:.3}) cov [[{:.3},{:.3}],[.,{:.3}]] chi2 {:.2}",
        profile.gamma_safe.mean[0], profile.gamma_safe.mean[1],
        profile.gamma_safe.cov[0][0], profile.gamma_safe.cov[0][1], profile.gamma_safe.cov[1][1],
        profile.gamma_safe.chi2);
    println!("pc2_threshold {:.4}  f_ref {:.3}", profile.safety.pc2_threshold, profile.safety.f_ref);
    println!("explained {:?}", profile.explained_variance);
    println!("pc1 loadings {:?}", profile.components[0].map(|x| (x*100.0).round()/100.0));
    println!("pc2 loadings {:?}", profile.components[1].map(|x| (x*100.0).round()/100.0));
    // gamma containment of every cluster mean
    let zones = profile.zone_set().unwrap();
    for e in &profile.ellipses {
        let p = pronav_core::projection::PcaPoint::new(e.mean[0], e.mean[1]);
        let m2 = zones.gamma_safe().mahalanobis2(&p);
        println!("gamma m2 of {:26} center: {:8.3} (chi2 {:.2})", e.id, m2, zones.gamma_safe().chi2);
    }
}
// membership cross-check appended by probe iterations
