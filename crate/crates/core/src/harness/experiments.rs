//! The figure sweeps.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::canceler::{sweep_taps_bandwidth, LossProfile, SiBandModel, SweepSetup};
use crate::channel::db_to_linear;
use crate::codebook::{random_training_set, train_codebook_on, train_vector_codebook_baseline, Codebook, Layout, LbgConfig};
use crate::error::{Error, Result};
use crate::harness::config::{RsiSweep, SimConfig};
use crate::harness::output::{ExperimentResult, Row};
use crate::harness::scenario::{Impairments, RfDesign, Scenario};
use crate::rng::{stream, Purpose};

pub const EXPERIMENTS: [&str; 6] = ["fig3-microstrip", "fig3-od", "fig4-backhaul", "fig4-access", "fig5-schemes", "fig6-rsi-sweep"];

pub fn run_experiment(id: &str, cfg: &SimConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let rows = match id {
        "fig3-microstrip" => canceler_rows(cfg, &LossProfile::microstrip(), &cfg.canceler_taps_microstrip)?,
        "fig3-od" => canceler_rows(cfg, &LossProfile::fbg(), &cfg.canceler_taps_od)?,
        "fig4-backhaul" => codebook_rows(cfg, true)?,
        "fig4-access" => codebook_rows(cfg, false)?,
        "fig5-schemes" => scheme_rows(cfg)?,
        "fig6-rsi-sweep" => rsi_rows(cfg)?,
        _ => {
            return Err(Error::UnknownExperiment { name: id.to_string(), known: EXPERIMENTS.join(", ") });
        }
    };
    Ok(ExperimentResult { experiment: id.to_string(), seed: cfg.seed, config_hash: cfg.hash(), rows })
}

fn row(trial: usize, axis1: String, axis2: String, metric: &str, value: f64) -> Row {
    Row { trial, axis1, axis2, metric: metric.to_string(), value }
}

fn canceler_rows(cfg: &SimConfig, profile: &LossProfile, taps: &[usize]) -> Result<Vec<Row>> {
    let bws: Vec<f64> = cfg.canceler_bandwidths_mhz.iter().map(|b| b * 1e6).collect();
    let setup = SweepSetup { center_hz: cfg.carrier_hz, ..SweepSetup::default() };
    let grid = sweep_taps_bandwidth(profile, taps, &bws, &SiBandModel::default(), &setup, cfg.trials, cfg.seed)?;
    let mut rows = Vec::new();
    for t in 0..cfg.trials {
        for cell in &grid.cells {
            rows.push(row(
                t,
                format!("bandwidth_mhz={}", cell.bandwidth_hz / 1e6),
                format!("taps={}", cell.taps),
                "cancellation_db",
                cell.per_trial_db[t],
            ));
        }
    }
    Ok(rows)
}

fn lbg(cfg: &SimConfig) -> LbgConfig {
    LbgConfig { epsilon: cfg.lbg_epsilon, inner_iterations: cfg.lbg_iterations, training_size: cfg.lbg_training }
}

/// Matrix codebooks for the node arrays and the stacked user arrays. When
/// both layouts agree a single book serves every link.
struct Books {
    node: Codebook,
    users: Codebook,
}

fn layout_tag(layout: Layout) -> u64 {
    (layout.antennas as u64) << 8 | layout.subarrays as u64
}

fn train_matrix(cfg: &SimConfig, layout: Layout, bits: u32) -> Result<Codebook> {
    let mut rng = stream(cfg.seed, layout_tag(layout) << 16 | bits as u64, Purpose::Codebook);
    let training = random_training_set(layout, cfg.lbg_training, &mut rng);
    train_codebook_on(&lbg(cfg), &training, bits, &mut rng, &mut |_| {})
}

fn train_vector(cfg: &SimConfig, layout: Layout, bits: u32) -> Result<Codebook> {
    let mut rng = stream(cfg.seed, 1 << 40 | layout_tag(layout) << 16 | bits as u64, Purpose::Codebook);
    let training = random_training_set(layout, cfg.lbg_training, &mut rng);
    train_vector_codebook_baseline(&lbg(cfg), &training, bits, &mut rng, &mut |_| {})?.expand()
}

fn books(sc: &Scenario, bits: u32, vector: bool) -> Result<Books> {
    let train = |layout| if vector { train_vector(&sc.cfg, layout, bits) } else { train_matrix(&sc.cfg, layout, bits) };
    let node = train(sc.node_layout)?;
    let users = if sc.users_layout == sc.node_layout { node.clone() } else { train(sc.users_layout)? };
    Ok(Books { node, users })
}

/// Runs `per_trial` for every trial in parallel and concatenates the rows in
/// trial order.
fn by_trial<F>(cfg: &SimConfig, per_trial: F) -> Result<Vec<Row>>
where
    F: Fn(usize) -> Result<Vec<Row>> + Sync,
{
    let chunks = (0..cfg.trials).into_par_iter().map(|t| per_trial(t)).collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn codebook_rows(cfg: &SimConfig, backhaul: bool) -> Result<Vec<Row>> {
    let sc = Scenario::new(cfg)?;
    let u = cfg.users as u32;
    let mut kinds: Vec<(String, Books)> = Vec::new();
    for &b in &cfg.vector_bits {
        kinds.push((format!("codebook=matrix;bits={}", u * b), books(&sc, u * b, false)?));
        kinds.push((format!("codebook=vector;bits={b}"), books(&sc, b, true)?));
    }
    let (ibfd_name, hd_name) = if backhaul { ("se_backhaul_ibfd", "se_backhaul_hd") } else { ("se_access_ibfd", "se_access_hd") };
    by_trial(cfg, |t| {
        let trial = t as u64;
        let ch = sc.draw_channels(cfg.seed, trial)?;
        let mut designs: Vec<(String, RfDesign)> = vec![("codebook=ideal".to_string(), RfDesign::IdealSubarray)];
        for (name, bk) in &kinds {
            designs.push((name.clone(), RfDesign::Codebook { node: &bk.node, users: &bk.users }));
        }
        let mut rows = Vec::new();
        for (name, design) in designs {
            let links = sc.effective_links(&ch, sc.design_beams(&ch, design)?, cfg.seed, trial)?;
            for &snr in &cfg.snr_db {
                let se = sc.evaluate(&links, &Impairments::ideal(snr))?;
                let (i, h) = if backhaul { (se.backhaul_ibfd, se.backhaul_hd) } else { (se.access_ibfd, se.access_hd) };
                rows.push(row(t, format!("snr_db={snr}"), name.clone(), ibfd_name, i));
                rows.push(row(t, format!("snr_db={snr}"), name.clone(), hd_name, h));
            }
        }
        Ok(rows)
    })
}

fn scheme_rows(cfg: &SimConfig) -> Result<Vec<Row>> {
    let sc = Scenario::new(cfg)?;
    let bk = books(&sc, cfg.scheme_bits, false)?;
    by_trial(cfg, |t| {
        let trial = t as u64;
        let ch = sc.draw_channels(cfg.seed, trial)?;
        let designs = [
            ("scheme=fc-ideal", RfDesign::IdealFullyConnected, true),
            ("scheme=sa-ideal", RfDesign::IdealSubarray, true),
            ("scheme=sa-codebook", RfDesign::Codebook { node: &bk.node, users: &bk.users }, false),
        ];
        let mut rows = Vec::new();
        for (name, design, ideal) in designs {
            let links = sc.effective_links(&ch, sc.design_beams(&ch, design)?, cfg.seed, trial)?;
            for &snr in &cfg.snr_db {
                let imp = if ideal { Impairments::ideal(snr) } else { Impairments::from_config(cfg, snr) };
                let se = sc.evaluate(&links, &imp)?;
                rows.push(row(t, format!("snr_db={snr}"), name.to_string(), "se_backhaul_ibfd", se.backhaul_ibfd));
                rows.push(row(t, format!("snr_db={snr}"), name.to_string(), "se_backhaul_hd", se.backhaul_hd));
            }
        }
        Ok(rows)
    })
}

pub fn rsi_axis_name(sweep: RsiSweep) -> &'static str {
    match sweep {
        RsiSweep::Error => "sigma_e_si_db",
        RsiSweep::Hwi => "rho_db",
    }
}

fn rsi_rows(cfg: &SimConfig) -> Result<Vec<Row>> {
    let sc = Scenario::new(cfg)?;
    let mut all = BTreeMap::new();
    for &b in &cfg.bits {
        all.insert(b, books(&sc, b, false)?);
    }
    let axis = rsi_axis_name(cfg.rsi_sweep);
    by_trial(cfg, |t| {
        let trial = t as u64;
        let ch = sc.draw_channels(cfg.seed, trial)?;
        let mut rows = Vec::new();
        for (&b, bk) in &all {
            let links = sc.effective_links(&ch, sc.design_beams(&ch, RfDesign::Codebook { node: &bk.node, users: &bk.users })?, cfg.seed, trial)?;
            for &snr in &cfg.rsi_snr_db {
                for &x in &cfg.rsi_grid_db {
                    let mut imp = Impairments::from_config(cfg, snr);
                    match cfg.rsi_sweep {
                        RsiSweep::Error => imp.err_si = db_to_linear(x),
                        RsiSweep::Hwi => {
                            imp.rho = db_to_linear(x);
                            imp.beta = db_to_linear(x);
                        }
                    }
                    let se = sc.evaluate(&links, &imp)?;
                    let a2 = format!("bits={b};snr_db={snr}");
                    rows.push(row(t, format!("{axis}={x}"), a2.clone(), "se_backhaul_ibfd", se.backhaul_ibfd));
                    rows.push(row(t, format!("{axis}={x}"), a2, "se_backhaul_hd", se.backhaul_hd));
                }
            }
        }
        Ok(rows)
    })
}

/// First grid value where the IBFD curve falls below the HD curve, linearly
/// interpolated between neighbouring grid points. `None` if it never does.
pub fn crossover_db(xs: &[f64], ibfd: &[f64], hd: &[f64]) -> Option<f64> {
    let d: Vec<f64> = ibfd.iter().zip(hd).map(|(a, b)| a - b).collect();
    let i = d.iter().position(|&v| v < 0.0)?;
    if i == 0 {
        return Some(xs[0]);
    }
    let (d0, d1) = (d[i - 1], d[i]);
    Some(xs[i - 1] + d0 / (d0 - d1) * (xs[i] - xs[i - 1]))
}

/// Crossover of the mean RSI-sweep curves for one `(bits, snr)` series.
pub fn rsi_crossover(result: &ExperimentResult, cfg: &SimConfig, bits: u32, snr_db: f64) -> Option<f64> {
    let axis = rsi_axis_name(cfg.rsi_sweep);
    let a2 = format!("bits={bits};snr_db={snr_db}");
    let mut ibfd = Vec::new();
    let mut hd = Vec::new();
    for &x in &cfg.rsi_grid_db {
        let a1 = format!("{axis}={x}");
        ibfd.push(result.mean_of(&a1, &a2, "se_backhaul_ibfd")?);
        hd.push(result.mean_of(&a1, &a2, "se_backhaul_hd")?);
    }
    crossover_db(&cfg.rsi_grid_db, &ibfd, &hd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SimConfig {
        SimConfig {
            subcarriers: 8,
            cp_len: 2,
            clusters: 2,
            rays: 3,
            trials: 1,
            snr_db: vec![0.0],
            rsi_snr_db: vec![0.0],
            rsi_grid_db: vec![-120.0],
            bits: vec![2],
            vector_bits: vec![1],
            scheme_bits: 2,
            lbg_training: 64,
            lbg_iterations: 5,
            canceler_bandwidths_mhz: vec![100.0],
            canceler_taps_od: vec![4],
            canceler_taps_microstrip: vec![4],
            ..SimConfig::desk()
        }
    }

    #[test]
    fn crossover_interpolates() {
        let xs = [-10.0, 0.0, 10.0];
        assert_eq!(crossover_db(&xs, &[3.0, 1.0, 0.0], &[2.0, 2.0, 2.0]), Some(-5.0));
        assert_eq!(crossover_db(&xs, &[3.0, 3.0, 3.0], &[2.0, 2.0, 2.0]), None);
        assert_eq!(crossover_db(&xs, &[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]), Some(-10.0));
    }

    #[test]
    fn unknown_experiment_lists_known() {
        let err = run_experiment("fig9", &tiny()).unwrap_err();
        assert_eq!(err.kind(), "unknown-experiment");
        assert!(err.to_string().contains("fig6-rsi-sweep"));
    }

    #[test]
    fn one_point_grids_give_expected_rows() {
        let cfg = tiny();
        // One cell: one row per trial.
        assert_eq!(run_experiment("fig3-od", &cfg).unwrap().rows.len(), 1);
        // Ideal, matrix, vector × (IBFD, HD).
        assert_eq!(run_experiment("fig4-backhaul", &cfg).unwrap().rows.len(), 6);
        assert_eq!(run_experiment("fig5-schemes", &cfg).unwrap().rows.len(), 6);
        assert_eq!(run_experiment("fig6-rsi-sweep", &cfg).unwrap().rows.len(), 2);
    }

    #[test]
    fn rows_are_deterministic() {
        let mut cfg = tiny();
        cfg.trials = 3;
        let a = run_experiment("fig5-schemes", &cfg).unwrap();
        let b = run_experiment("fig5-schemes", &cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 2;
        assert_ne!(run_experiment("fig5-schemes", &cfg).unwrap().rows, a.rows);
    }
}
