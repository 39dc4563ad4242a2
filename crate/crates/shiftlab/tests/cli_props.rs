use std::io::{self, Write};
use std::process::Command;

use proptest::prelude::*;

use shiftlab::cli::{read_rows, run_sweep, Grid, LjsdList, SimulateSpec, SweepSpec, CSV_HEADER};

fn small_spec() -> SweepSpec {
    SweepSpec {
        ljsd: LjsdList::Many(vec!["diatomic:2,0.5".into(), "pure_scale:1,2".into()]),
        activation: "relu".into(),
        phi: 0.5,
        ratio: Grid::Text("logspace:0.25,4,3".into()),
        gamma: Grid::List(vec![0.0, 0.1]),
        sigma_eps2: Grid::Single(0.1),
        simulate: None,
        optimize_gamma: None,
    }
}

fn sweep_bytes(spec: &SweepSpec, workers: usize) -> Vec<u8> {
    let mut out = Vec::new();
    run_sweep(spec, &mut out, workers).unwrap();
    out
}

/// Keeps a copy of the bytes written so far at every flush.
#[derive(Default)]
struct Snapshots {
    buf: Vec<u8>,
    at_flush: Vec<Vec<u8>>,
}

impl Write for &mut Snapshots {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend_from_slice(data);
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.at_flush.push(self.buf.clone());
        Ok(())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn toml_round_trip_gives_identical_csv(phi in 0.2f64..3.0, g in 0.01f64..2.0, n in 1usize..4, seed in any::<u32>()) {
        let mut spec = small_spec();
        spec.phi = phi;
        spec.gamma = Grid::List(vec![g, 2.0 * g]);
        spec.ratio = Grid::Text(format!("linspace:0.5,3,{n}"));
        spec.simulate = Some(SimulateSpec {
            n0: 8,
            trials: 2,
            replicates: 2,
            seed: seed as u64,
            n_test: 10,
            backend: "linearized".into(),
        });
        let back = SweepSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(sweep_bytes(&spec, 1), sweep_bytes(&back, 2));
    }
}

#[test]
fn every_flush_leaves_a_valid_prefix() {
    let spec = small_spec();
    let mut snaps = Snapshots::default();
    let summary = run_sweep(&spec, &mut snaps, 2).unwrap();
    let full = read_rows(snaps.buf.as_slice()).unwrap();
    assert_eq!(full.len(), summary.rows);
    assert_eq!(summary.rows, 2 * 3 * 2);
    assert!(snaps.buf.starts_with(CSV_HEADER.as_bytes()));
    let mut last = 0;
    for snap in &snaps.at_flush {
        let rows = read_rows(snap.as_slice()).unwrap();
        assert!(rows.len() >= last);
        assert_eq!(rows[..], full[..rows.len()]);
        last = rows.len();
    }
    assert!(snaps.at_flush.len() > summary.rows);
}

#[test]
fn simulated_sweep_is_reproducible_across_workers() {
    let mut spec = small_spec();
    spec.gamma = Grid::Single(0.1);
    spec.simulate = Some(SimulateSpec {
        n0: 16,
        trials: 3,
        replicates: 2,
        seed: 42,
        n_test: 20,
        backend: "nonlinear".into(),
    });
    assert_eq!(sweep_bytes(&spec, 1), sweep_bytes(&spec, 3));
}

fn shiftlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_shiftlab")).args(args).output().unwrap()
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "ljsd = \"identity\"\nactivation = \"relu\"\nphi = 1\nratio = 1\ngamma = 0.1\nsigma_eps2 = 0\ncolour = 3\n").unwrap();
    assert_eq!(shiftlab(&["sweep", bad.to_str().unwrap()]).status.code(), Some(2));

    let out = shiftlab(&["theory", "--ljsd", "identity", "--activation", "relu", "--phi", "0", "--ratio", "1", "--gamma", "1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = shiftlab(&[
        "theory", "--ljsd", "identity", "--activation", "affine:1,0", "--phi", "0.5", "--ratio", "0", "--gamma", "0",
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    let out = shiftlab(&["check"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    // theory and a deliberately mismatched "simulation" column
    let csv = dir.path().join("rows.csv");
    let out = shiftlab(&[
        "theory", "--ljsd", "diatomic:2,1", "--activation", "relu", "--phi", "1", "--ratio", "2", "--gamma", "0.1",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let mut rows = read_rows(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    let theory = rows[0].err_theory.unwrap();
    rows[0].err_sim = Some(2.0 * theory);
    rows[0].err_sim_se = Some(1e-3);
    let mut w = csv::Writer::from_path(&csv).unwrap();
    w.serialize(&rows[0]).unwrap();
    w.flush().unwrap();
    drop(w);
    assert_eq!(shiftlab(&["compare", csv.to_str().unwrap()]).status.code(), Some(4));

    rows[0].err_sim = Some(theory * 1.001);
    let mut w = csv::Writer::from_path(&csv).unwrap();
    w.serialize(&rows[0]).unwrap();
    w.flush().unwrap();
    drop(w);
    assert_eq!(shiftlab(&["compare", csv.to_str().unwrap()]).status.code(), Some(0));
}
