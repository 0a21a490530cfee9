//! Scratch probe (not shipped): delta=2 reconstruction driver and QV.

use flowlab::burglar::{
    build_zplus, negative_half_occupation, simulate_prbm_until_tau, zeta_reconstruction,
    BBReconstruction, BurglarConfig,
};
use flowlab::local_time::SpaceGrid;
use flowlab::path::{simulate_reflected_drift_bm, PrbmParams};
use flowlab::rng::RngStream;
use rayon::prelude::*;

fn q(v: &mut [f64]) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    (1..10).map(|i| v[i * v.len() / 10]).collect()
}

fn main() {
    let delta: f64 = std::env::args().nth(1).unwrap().parse().unwrap();
    let rbw: f64 = std::env::args().nth(2).unwrap().parse().unwrap();
    let mu = 2.0 / delta;
    let params = PrbmParams::new(mu).unwrap();
    let dt = 1e-3_f64;
    let dr = 2e-3;
    let bw = 2.0 * dt.sqrt();
    let bcfg = BurglarConfig { b: 1.0, bandwidth: bw, int_f_cap: 2.0, zero_tol: 1e-6 };
    let x_list = [0.1, 0.25, 0.5, 0.8];
    let hat_dt = 0.01;
    let k_check = 30;
    let recs: Vec<Option<(BBReconstruction, Option<BBReconstruction>)>> = (0..200u64)
        .into_par_iter()
        .map(|k| {
            for attempt in 0..20u64 {
                let rng = RngStream::new(5 ^ 0x0000_FC01, k).substream(attempt);
                let Ok(path) =
                    simulate_prbm_until_tau(params, 1.0, 0.0, dt, bw, 3200.0, rng.substream(2))
                else {
                    continue;
                };
                let lo = path.values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = path.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let Ok(grid) = SpaceGrid::covering(lo, hi, dr, 0.05) else { continue };
                let Ok(neg) =
                    negative_half_occupation(params, grid.r_max() + 0.1, dr, rng.substream(3))
                else {
                    continue;
                };
                let Ok((zplus, _)) = build_zplus(&path, grid, &bcfg, Some(&neg)) else {
                    continue;
                };
                let lo = zplus.path.values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = zplus.path.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let Ok(zg) = SpaceGrid::covering(lo, hi, dr, 0.05) else { continue };
                let Ok(short) =
                    zeta_reconstruction(&zplus.path, zg, rbw, &x_list, hat_dt, 0.4, Some(0.0))
                else {
                    continue;
                };
                if short.truncated || short.t_max_hit {
                    continue;
                }
                let long =
                    zeta_reconstruction(&zplus.path, zg, rbw, &x_list, hat_dt, 1.0, Some(0.0))
                        .ok()
                        .filter(|r| !r.truncated && !r.t_max_hit);
                return Some((short, long));
            }
            None
        })
        .collect();
    let pairs: Vec<(BBReconstruction, Option<BBReconstruction>)> =
        recs.into_iter().flatten().collect();
    let n_long = pairs.iter().filter(|p| p.1.is_some()).count();
    println!("short {} long {}", pairs.len(), n_long);
    // driver at t=0.3 per probe line
    for j in 0..4 {
        let mut driver: Vec<f64> = pairs
            .iter()
            .filter(|p| p.0.hat_z.len() > k_check)
            .map(|p| {
                let r = &p.0;
                let occ: f64 =
                    (0..k_check).filter(|&i| r.r[j][i] > 0.0).count() as f64 * r.hat_dt;
                x_list[j] + occ - r.r[j][k_check]
            })
            .collect();
        println!("driver x={:.2} q {:?}", x_list[j], q(&mut driver).iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<f64>>());
    }
    let mut direct: Vec<f64> = (0..400u64)
        .map(|k| {
            let p = simulate_reflected_drift_bm(
                delta,
                k_check + 1,
                hat_dt,
                RngStream::new(5 ^ 0x0000_D21F, k),
            )
            .unwrap();
            *p.values.last().unwrap()
        })
        .collect();
    println!("direct       q {:?}", q(&mut direct).iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<f64>>());
    // driver H = R(x0) - time-spent-positive, increment statistics (long recons)
    let hfun = |r: &BBReconstruction| -> Vec<f64> {
        let mut h = Vec::with_capacity(r.r[0].len());
        let mut spent = 0.0;
        for k in 0..r.r[0].len() {
            h.push(r.r[0][k] - spent);
            if r.r[0][k] > 0.0 {
                spent += r.hat_dt;
            }
        }
        h
    };
    for k in (0..95).step_by(10) {
        let v: Vec<f64> = pairs
            .iter()
            .filter_map(|p| p.1.as_ref())
            .filter(|r| r.hat_z.len() > k + 2)
            .map(|r| {
                let h = hfun(r);
                h[k + 1] - h[k]
            })
            .collect();
        let v2: Vec<f64> = pairs
            .iter()
            .filter_map(|p| p.1.as_ref())
            .filter(|r| r.hat_z.len() > k + 4)
            .map(|r| {
                let h = hfun(r);
                h[k + 2] - h[k]
            })
            .collect();
        if v.len() < 30 {
            continue;
        }
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64;
        let m2 = v2.iter().sum::<f64>() / v2.len() as f64;
        let var2 = v2.iter().map(|&x| (x - m2) * (x - m2)).sum::<f64>() / (v2.len() - 1) as f64;
        println!(
            "k {:2} n {:3} drift/dt {:+.2} qv1 {:.3} qv2 {:.3} richardson {:.3}",
            k,
            v.len(),
            m / hat_dt,
            var / hat_dt,
            var2 / (2.0 * hat_dt),
            2.0 * var2 / (2.0 * hat_dt) - var / hat_dt
        );
    }
}
