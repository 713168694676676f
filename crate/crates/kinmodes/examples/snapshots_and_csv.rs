//! Writes a trajectory as CSV and two full states as binary snapshots, then
//! reads a snapshot back.

use std::sync::Arc;

use kinmodes::basis::Discretization;
use kinmodes::collision::BgkOperator;
use kinmodes::evolve::{read_snapshot, write_snapshot, Evolver, IntegratorConfig};
use kinmodes::initial::InitialDatum;
use kinmodes::modes::conserved_mode;
use kinmodes::potential::{normalize, NormalizeOptions, RawPotential, SymmetryStructure, DEFAULT_RANK_TOL};

fn main() -> kinmodes::Result<()> {
    let dir = std::env::temp_dir().join("kinmodes-snapshots");
    std::fs::create_dir_all(&dir)?;
    let pot = Arc::new(normalize(&RawPotential::fully_harmonic(1), NormalizeOptions::default())?);
    let sym = SymmetryStructure::detect(&pot, DEFAULT_RANK_TOL)?;
    let disc = Discretization::new(pot, 64, None, 6)?;
    let h0 = InitialDatum::HermiteMode(vec![3]).build(&disc, &sym, 0)?;
    let mode = conserved_mode(&disc, &h0, Some(&sym))?;
    let cfg = IntegratorConfig { dt: 5e-3, t_end: 2.0, output_stride: 20, snapshot_times: vec![1.0, 2.0], ..Default::default() };
    let traj = Evolver::new(&disc, BgkOperator::new(&disc, 1.0)?, cfg)?.run(&h0, &mode, &sym, None)?;
    let csv = dir.join("trajectory.csv");
    traj.write_csv(std::fs::File::create(&csv)?)?;
    println!("wrote {} ({} rows)", csv.display(), traj.records.len());
    for (k, s) in traj.snapshots.iter().enumerate() {
        let p = dir.join(format!("snapshot_{k}"));
        write_snapshot(&disc, s, &p)?;
        let back = read_snapshot(&p)?;
        println!("{}: t = {}, round trip exact: {}", p.with_extension("bin").display(), back.t, back.data == s.data);
    }
    println!("{}", std::fs::read_to_string(dir.join("snapshot_0.txt"))?);
    Ok(())
}
