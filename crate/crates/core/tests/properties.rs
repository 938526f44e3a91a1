//! Randomised invariants across the toolkit.

use graphssl_core::augment::{attr_mask, edge_perturb, node_drop, subgraph_walk};
use graphssl_core::encoder::{init_params, EncoderConfig};
use graphssl_core::eval::stratified_folds;
use graphssl_core::losses::{covariance_matrix, invariance_term, nt_xent_loss};
use graphssl_core::rng::stream;
use graphssl_core::tudataset::{load_dir, write_tudataset};
use graphssl_core::{batch_graphs, Dataset, Graph, Tape, Tensor};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn expected_drop(ratio: f64, n: usize) -> usize {
    (ratio * n as f64 + 1e-9).floor() as usize
}

fn expected_keep(ratio: f64, n: usize) -> usize {
    ((1.0 - ratio) * n as f64 - 1e-9).ceil() as usize
}

/// Random simple graph with strictly positive features.
fn random_graph(n: usize, density: f64, dim: usize, seed: u64) -> Graph {
    let mut rng = stream(seed, &[]);
    let edges = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|_| rng.gen_bool(density))
        .collect::<Vec<_>>();
    let mut rng = stream(seed, &[1]);
    let x = Tensor::new(vec![n, dim], (0..n * dim).map(|_| rng.gen_range(0.1..1.0)).collect()).unwrap();
    Graph::new(n, edges, x, (seed % 2) as usize).unwrap()
}

fn graph_strategy() -> impl Strategy<Value = Graph> {
    (1usize..30, 0.0f64..0.6, 1usize..5, any::<u64>())
        .prop_map(|(n, density, dim, seed)| random_graph(n, density, dim, seed))
}

fn ratio_strategy() -> impl Strategy<Value = f64> {
    prop::sample::select(vec![0.0, 0.1, 0.2, 0.4])
}

fn zero_rows(g: &Graph) -> usize {
    (0..g.num_nodes())
        .filter(|&v| g.features().row(v).iter().all(|&x| x == 0.0))
        .count()
}

fn max_edges(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

proptest! {
    #[test]
    fn augmentation_counts(g in graph_strategy(), ratio in ratio_strategy(), seed in any::<u64>()) {
        let n = g.num_nodes();
        let m = g.num_edges();

        let dropped = node_drop(&g, ratio, &mut stream(seed, &[0]));
        prop_assert_eq!(dropped.num_nodes(), (n - expected_drop(ratio, n)).max(1));

        let walked = subgraph_walk(&g, ratio, &mut stream(seed, &[1]));
        prop_assert_eq!(walked.num_nodes(), expected_keep(ratio, n).clamp(1, n));

        let perturbed = edge_perturb(&g, ratio, &mut stream(seed, &[2]));
        let swaps = expected_drop(ratio, m);
        prop_assert_eq!(perturbed.num_nodes(), n);
        prop_assert_eq!(perturbed.num_edges(), m - swaps + swaps.min(max_edges(n) - m));

        let masked = attr_mask(&g, ratio, &mut stream(seed, &[3]));
        prop_assert_eq!(zero_rows(&masked), expected_drop(ratio, n));

        for out in [&dropped, &walked, &perturbed, &masked] {
            prop_assert!(out.validate().is_ok());
            prop_assert_eq!(out.feature_dim(), g.feature_dim());
            prop_assert_eq!(out.label(), g.label());
        }
        if ratio == 0.0 {
            prop_assert_eq!(&dropped, &g);
            prop_assert_eq!(&walked, &g);
            prop_assert_eq!(&perturbed, &g);
            prop_assert_eq!(&masked, &g);
        }
    }

    #[test]
    fn augmentation_is_seed_deterministic(g in graph_strategy(), ratio in ratio_strategy(), seed in any::<u64>()) {
        type Aug = fn(&Graph, f64, &mut graphssl_core::rng::Stream) -> Graph;
        let augs: [Aug; 4] = [node_drop, subgraph_walk, edge_perturb, attr_mask];
        for aug in augs {
            prop_assert_eq!(aug(&g, ratio, &mut stream(seed, &[])), aug(&g, ratio, &mut stream(seed, &[])));
        }
    }

    #[test]
    fn walk_keeps_connected_pieces(n in 2usize..25, seed in any::<u64>(), ratio in ratio_strategy()) {
        // On a connected graph the walk never needs to restart.
        let path = Graph::new(n, (1..n).map(|v| (v - 1, v)).collect(), Tensor::filled(n, 1, 1.0), 0).unwrap();
        let walked = subgraph_walk(&path, ratio, &mut stream(seed, &[]));
        prop_assert!(walked.is_connected());
    }

    #[test]
    fn encoder_is_permutation_invariant(g in graph_strategy(), seed in any::<u64>()) {
        let params = init_params(&EncoderConfig::default(), g.feature_dim(), seed).unwrap();
        let base = params.encode(&batch_graphs(std::slice::from_ref(&g)).unwrap()).unwrap();
        let n = g.num_nodes();
        let mut rng = stream(seed, &[9]);
        for _ in 0..100 {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let edges = g.edges().iter().map(|&(u, v)| (perm[u], perm[v])).collect();
            let mut x = Tensor::zeros(n, g.feature_dim());
            for v in 0..n {
                x.row_mut(perm[v]).copy_from_slice(g.features().row(v));
            }
            let h = params.encode(&batch_graphs(&[Graph::new(n, edges, x, g.label()).unwrap()]).unwrap()).unwrap();
            prop_assert!(h.max_abs_diff(&base) <= 1e-9);
        }
    }

    #[test]
    fn covariance_is_symmetric(n in 2usize..20, d in 1usize..10, seed in any::<u64>()) {
        let mut rng = stream(seed, &[]);
        let z = Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let mut tape = Tape::new();
        let v = tape.constant(z);
        let c = covariance_matrix(&mut tape, v).unwrap();
        let c = tape.value(c);
        prop_assert_eq!(c, &c.transpose());
    }

    #[test]
    fn invariance_is_nonnegative_and_zero_on_equal_views(n in 1usize..10, d in 1usize..6, p in prop::sample::select(vec![1.0, 1.5, 2.0, 3.0]), seed in any::<u64>()) {
        let mut rng = stream(seed, &[]);
        let mut m = || Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let (za, zb) = (m(), m());
        let mut tape = Tape::new();
        let (a, b) = (tape.constant(za), tape.constant(zb));
        let s = invariance_term(&mut tape, a, b, p).unwrap();
        let same = invariance_term(&mut tape, a, a, p).unwrap();
        prop_assert!(tape.value(s).item().unwrap() >= 0.0);
        prop_assert_eq!(tape.value(same).item().unwrap(), 0.0);
    }

    #[test]
    fn nt_xent_symmetries(n in 2usize..8, d in 2usize..6, seed in any::<u64>()) {
        let mut rng = stream(seed, &[]);
        let mut m = || Tensor::matrix(n, d, (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let (za, zb) = (m(), m());
        let loss = |a: &Tensor, b: &Tensor| {
            let mut tape = Tape::new();
            let (a, b) = (tape.constant(a.clone()), tape.constant(b.clone()));
            let l = nt_xent_loss(&mut tape, a, b, 0.5).unwrap();
            tape.value(l).item().unwrap()
        };
        let base = loss(&za, &zb);
        let mut scaled = za.clone();
        scaled.row_mut(0).iter_mut().for_each(|v| *v *= 3.5);
        prop_assert!((loss(&scaled, &zb) - base).abs() < 1e-10);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let permute = |z: &Tensor| Tensor::from_rows(&order.iter().map(|&i| z.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
        prop_assert!((loss(&permute(&za), &permute(&zb)) - base).abs() < 1e-10);
    }

    #[test]
    fn folds_match_class_histogram(labels in prop::collection::vec(0usize..4, 20..120), k in 2usize..11, seed in any::<u64>()) {
        let folds = stratified_folds(&labels, k, seed, 0).unwrap();
        for class in 0..4 {
            let total = labels.iter().filter(|&&y| y == class).count() as f64;
            for f in 0..k {
                let c = labels.iter().zip(&folds).filter(|&(&y, &g)| y == class && g == f).count() as f64;
                prop_assert!((c - total / k as f64).abs() <= 1.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tudataset_round_trip(graphs in prop::collection::vec(graph_strategy(), 1..8)) {
        let dim = graphs[0].feature_dim();
        let graphs: Vec<Graph> = graphs
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let x = Tensor::new(vec![g.num_nodes(), dim], (0..g.num_nodes() * dim).map(|k| (k + i) as f64 * 0.25).collect()).unwrap();
                Graph::new(g.num_nodes(), g.edges().to_vec(), x, i % 2).unwrap()
            })
            .collect();
        let classes = if graphs.len() > 1 { 2 } else { 1 };
        let ds = Dataset::new("RT", graphs, classes).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_tudataset(&ds, dir.path()).unwrap();
        let back = load_dir(dir.path(), "RT").unwrap();
        prop_assert_eq!(back.len(), ds.len());
        for (a, b) in back.graphs().iter().zip(ds.graphs()) {
            prop_assert_eq!(a.num_nodes(), b.num_nodes());
            prop_assert_eq!(a.label(), b.label());
            let mut ea = a.edges().to_vec();
            let mut eb = b.edges().to_vec();
            ea.sort_unstable();
            eb.sort_unstable();
            prop_assert_eq!(ea, eb);
            prop_assert_eq!(a.features(), b.features());
        }
    }
}
