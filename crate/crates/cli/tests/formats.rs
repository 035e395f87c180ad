use dlban::io::{
    feature_header, quantize_trajectory, read_partition, read_trajectories, read_window_file, read_windows, write_partition,
    write_trajectories, write_window_file, write_windows,
};
use dlban::CliError;
use dlban_core::datagen::{build_scenario_grid, prelabel, simulate_trajectory, GridConfig, Label, Origin, SimulationConfig, WindowSample};
use dlban_core::DenseArray;
use proptest::prelude::*;

fn parse_position(e: CliError) -> (u64, usize) {
    match e {
        CliError::Parse { line, column, .. } => (line, column),
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn feature_columns_are_row_major() {
    assert_eq!(feature_header(2, 3), ["f_0_0", "f_0_1", "f_0_2", "f_1_0", "f_1_1", "f_1_2"]);
}

#[test]
fn trajectories_roundtrip_after_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let grid = build_scenario_grid(&GridConfig { line_count: 1, clearing_time_count: 1, seed: 3 }).unwrap();
    let sim = SimulationConfig { bus_count: 4, ..Default::default() };
    let samples: Vec<_> = grid[..5]
        .iter()
        .map(|s| {
            let mut t = simulate_trajectory(s, &sim).unwrap();
            quantize_trajectory(&mut t);
            t.label = prelabel(&t);
            t
        })
        .collect();
    let (sp, tp) = (dir.path().join("s.csv"), dir.path().join("t.csv"));
    write_trajectories(&sp, &tp, &samples).unwrap();
    assert_eq!(read_trajectories(&sp, &tp).unwrap(), samples);
}

#[test]
fn window_diagnostics_name_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.csv");
    std::fs::write(&p, "sample_id,label,origin,scenario_id,f_0_0,f_0_1,f_0_2\n0,1,simulated,0,1,2,3\n1,1,simulated,1,1,x,3\n").unwrap();
    assert_eq!(parse_position(read_windows(&p).unwrap_err()), (3, 6));
    std::fs::write(&p, "sample_id,label,origin,scenario_id,f_0_0,f_0_1,f_0_2\n0,2,simulated,0,1,2,3\n").unwrap();
    assert_eq!(parse_position(read_windows(&p).unwrap_err()), (2, 2));
    std::fs::write(&p, "sample_id,label,origin,scenario_id,f_0_0,f_0_2,f_0_1\n").unwrap();
    assert_eq!(parse_position(read_windows(&p).unwrap_err()).0, 1);

    std::fs::write(&p, "u_0,p_0,q_0\n1,2,3\n1,2\n").unwrap();
    let e = read_window_file(&p).unwrap_err();
    assert_eq!(e.category(), "parse");
    assert_eq!(parse_position(e).0, 3);
    std::fs::write(&p, "u_0,p_0,q_0\n1,2,3\n1,nan,3\n").unwrap();
    assert_eq!(parse_position(read_window_file(&p).unwrap_err()), (3, 2));
    std::fs::write(&p, "u_0,p_0\n1,2\n").unwrap();
    assert!(read_window_file(&p).is_err());
}

#[test]
fn window_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("w.csv");
    let w = DenseArray::matrix(3, 6, (0..18).map(|k| (k as f64 * 0.77).sin()).collect()).unwrap();
    write_window_file(&p, &w).unwrap();
    assert_eq!(read_window_file(&p).unwrap(), w);
}

fn sample() -> impl Strategy<Value = WindowSample> {
    (
        0usize..1000,
        prop::sample::select(vec![Label::Stable, Label::Unstable, Label::Unlabeled]),
        any::<bool>(),
        prop::collection::vec(-1e3f64..1e3, 6),
    )
        .prop_map(|(id, label, gan, features)| WindowSample {
            id,
            label,
            origin: if gan { Origin::Generated } else { Origin::Simulated },
            scenario_id: (!gan).then_some(id),
            features,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn windows_and_partition_roundtrip(mut samples in prop::collection::vec(sample(), 1..20), cut in 0usize..20) {
        for (k, s) in samples.iter_mut().enumerate() {
            s.id = k * 3 + 1;
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        write_windows(&p, 2, 3, &samples).unwrap();
        let t = read_windows(&p).unwrap();
        prop_assert_eq!((t.q, t.channels), (2, 3));
        prop_assert_eq!(&t.samples, &samples);

        let cut = cut.min(samples.len());
        let train: Vec<usize> = (0..cut).collect();
        let test: Vec<usize> = (cut..samples.len()).collect();
        let pp = dir.path().join("p.csv");
        write_partition(&pp, &samples, &train, &test).unwrap();
        prop_assert_eq!(read_partition(&pp, &samples).unwrap(), (train, test));
    }
}
