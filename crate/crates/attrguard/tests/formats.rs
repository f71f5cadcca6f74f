use attrguard::io;
use attrguard_core::graph::{gen_synthetic, LabelSet, SynthConfig};

#[test]
fn synthetic_world_round_trips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let world = gen_synthetic(&SynthConfig { node_count: 120, seed: 9, ..SynthConfig::default() }).unwrap();
    let g = dir.path().join("g.txt");
    let b = dir.path().join("b.txt");
    let l = dir.path().join("l.txt");
    io::save_graph(&g, &world.graph).unwrap();
    io::save_behaviors(&b, &world.behaviors).unwrap();
    io::save_labels(&l, &LabelSet::Multiclass(world.labels.clone())).unwrap();

    assert_eq!(io::load_graph(&g).unwrap(), world.graph);
    assert_eq!(io::load_behaviors(&b).unwrap(), world.behaviors);
    assert_eq!(io::load_multiclass_labels(&l).unwrap(), world.labels);

    let text = io::read_text(&g).unwrap();
    assert_eq!(io::write_graph(&io::parse_graph(&text).unwrap()), text);
    let text = io::read_text(&b).unwrap();
    assert_eq!(io::write_behaviors(&io::parse_behaviors(&text).unwrap()), text);
    let text = io::read_text(&l).unwrap();
    assert_eq!(io::write_labels(&io::parse_labels(&text).unwrap()), text);
}

#[test]
fn dense_rows_reproduce_triplets() {
    let world = gen_synthetic(&SynthConfig { node_count: 60, seed: 2, ..SynthConfig::default() }).unwrap();
    let b = &world.behaviors;
    for u in 0..b.user_count() {
        let dense = b.dense_row(u);
        let mut expect = vec![0.0; b.object_count()];
        for (j, v) in b.row(u) {
            expect[j] = v;
        }
        assert_eq!(dense, expect);
    }
}

#[test]
fn binary_labels_round_trip() {
    let world = gen_synthetic(&SynthConfig { node_count: 50, seed: 5, ..SynthConfig::default() }).unwrap();
    let labels = LabelSet::Binary(world.labels.to_binary(0));
    let text = io::write_labels(&labels);
    assert!(text.lines().all(|l| l.ends_with("+1") || l.ends_with("-1")));
    assert_eq!(io::write_labels(&io::parse_labels(&text).unwrap()), text);
}

#[test]
fn missing_file_reports_path() {
    let err = io::load_graph(std::path::Path::new("/nonexistent/graph.txt")).unwrap_err();
    assert!(err.to_string().contains("/nonexistent/graph.txt"));
    assert!(err.is_validation());
}
