use std::path::Path;

use graphssl_core::tudataset::load_dir;

fn mutag_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/MUTAG"))
}

#[test]
fn mutag_shape() {
    let ds = load_dir(mutag_dir(), "MUTAG").unwrap();
    assert_eq!(ds.len(), 188);
    assert_eq!(ds.num_classes(), 2);
    assert_eq!(ds.feature_dim(), 7);
    let labels = ds.labels();
    assert_eq!(labels.iter().filter(|&&y| y == 1).count(), 125);
    let nodes: usize = ds.graphs().iter().map(|g| g.num_nodes()).sum();
    assert_eq!(nodes, 3371);
    assert!(ds.graphs().iter().all(|g| g.validate().is_ok()));
}
