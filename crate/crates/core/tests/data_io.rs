use std::fs;

use fairgse_core::data::{
    generate_synthetic, load_manifest_file, load_structure, read_edge_list, write_dataset, DataError, SynthSpec,
};

#[test]
fn written_datasets_load_back_exactly() {
    let g = generate_synthetic(&SynthSpec { n: 60, ..SynthSpec::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(&g, dir.path(), "toy").unwrap();
    let back = load_manifest_file(&manifest).unwrap();
    assert_eq!(back, g);
}

#[test]
fn synthetic_generation_is_seeded() {
    let a = generate_synthetic(&SynthSpec::default()).unwrap();
    let b = generate_synthetic(&SynthSpec::default()).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic(&SynthSpec { seed: 2, ..SynthSpec::default() }).unwrap();
    assert_ne!(a, c);
    assert_eq!(a.n(), 400);
    assert_eq!(a.feature_dim(), 8);
}

#[test]
fn structure_files_with_threshold_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("g.edges");
    let nodes = dir.path().join("g.csv");
    fs::write(&edges, "# triangle\n0 1 1.0\n1 2 2.0\n\n0 2 0.5\n").unwrap();
    fs::write(&nodes, "age,y\n20,0\n45,1\n31,1\n").unwrap();
    let g = load_structure(&edges, &nodes, "age", Some(30.0), Some("y")).unwrap();
    assert_eq!(g.sensitive(), &[0, 1, 1]);
    assert_eq!(g.labels(), &[0, 1, 1]);
    assert_eq!(g.num_edges(), 3);
    assert_eq!(g.feature_dim(), 0);
    assert!(matches!(load_structure(&edges, &nodes, "region", None, None), Err(DataError::MissingColumn { .. })));
    assert!(matches!(load_structure(&edges, &nodes, "age", None, None), Err(DataError::Parse { .. })));
}

#[test]
fn malformed_edge_lines_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.edges");
    fs::write(&path, "0 1 1.0\n1 2\n").unwrap();
    match read_edge_list(&path) {
        Err(DataError::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}
