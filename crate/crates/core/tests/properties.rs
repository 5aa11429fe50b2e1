mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fairhc::cost::{pairwise_total_cost, total_cost};
use fairhc::data::{build_similarity, quotas, subsample, Dataset};
use fairhc::fairify::{fold_by_color, make_fair_traced, split_root, FairParams, MakeFairOptions};
use fairhc::linkage::{average_linkage, average_linkage_tree};
use fairhc::metrics::balance_histogram;
use fairhc::operators::{del_ins, shallow_fold};
use fairhc::random::{random_binary_tree, random_colors, random_graph, random_skewed_tree, random_tree_with};
use fairhc::{cluster_balance, is_relatively_balanced, Dendrogram, NodeId};

use common::*;

fn colored_tree(seed: u64, n: usize, num_colors: usize, max_arity: usize) -> Dendrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let colors = random_colors(&mut rng, n, num_colors, 0.3);
    if max_arity == 2 {
        random_binary_tree(&mut rng, &colors, num_colors).unwrap()
    } else {
        random_tree_with(&mut rng, &colors, num_colors, max_arity).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregated_cost_matches_pairwise(seed in any::<u64>(), n in 2usize..40, arity in 2usize..5) {
        let t = colored_tree(seed, n, 1, arity);
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), n);
        let fast = total_cost(&t, &g).unwrap();
        prop_assert!((fast - pairwise_total_cost(&t, &g).unwrap()).abs() <= 1e-9 * fast.max(1.0));
        prop_assert!((fast - oracle_cost(&t, &g)).abs() <= 1e-9 * fast.max(1.0));
    }

    #[test]
    fn binarize_keeps_leaves_and_counts(seed in any::<u64>(), n in 2usize..60, arity in 2usize..6) {
        let t = colored_tree(seed, n, 2, arity);
        let b = t.binarized();
        prop_assert!(b.is_binary());
        prop_assert_eq!(fingerprint(&b), fingerprint(&t));
        prop_assert!(counts_consistent(&b));
    }

    #[test]
    fn binarize_never_raises_cost(seed in any::<u64>(), n in 2usize..32, arity in 3usize..7) {
        let t = colored_tree(seed, n, 1, arity);
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed ^ 3), n);
        prop_assert!(total_cost(&t.binarized(), &g).unwrap() <= total_cost(&t, &g).unwrap() + 1e-12);
    }

    #[test]
    fn child_balances_average_to_parent(seed in any::<u64>(), n in 2usize..80, arity in 2usize..6) {
        let t = colored_tree(seed, n, 3, arity);
        for v in t.internal_nodes() {
            let size = leaves_below(&t, v).len() as f64;
            for color in 0..3 {
                let weighted: f64 = t
                    .children(v)
                    .iter()
                    .map(|&c| cluster_balance(&t, c, color).unwrap() * leaves_below(&t, c).len() as f64)
                    .sum();
                prop_assert!((weighted / size - cluster_balance(&t, v, color).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn del_ins_conserves_and_reparents(seed in any::<u64>(), n in 3usize..50) {
        let mut t = colored_tree(seed, n, 3, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let nodes = t.preorder(t.root());
        let u = nodes[rng.random_range(1..nodes.len())];
        let pu = t.parent(u).unwrap();
        let targets: Vec<NodeId> = nodes.iter().copied().filter(|&v| v != pu && !t.is_ancestor(u, v)).collect();
        prop_assume!(!targets.is_empty());
        let v = targets[rng.random_range(0..targets.len())];
        let before = fingerprint(&t);
        let moved = leaves_below(&t, u);
        let target_leaves = leaves_below(&t, v);
        del_ins(&mut t, u, v).unwrap();
        prop_assert_eq!(fingerprint(&t), before);
        prop_assert!(counts_consistent(&t));
        t.validate().unwrap();
        // u now sits next to what was at v.
        let p = t.parent(u).unwrap();
        let mut under = moved.clone();
        under.extend(&target_leaves);
        under.sort_unstable();
        under.dedup();
        prop_assert_eq!(leaves_below(&t, p), under);
    }

    #[test]
    fn shallow_fold_unions_children(seed in any::<u64>(), n in 4usize..50) {
        let mut t = colored_tree(seed, n, 2, 4);
        let root = t.root();
        let kids = t.children(root).to_vec();
        let before = fingerprint(&t);
        let mut expected: Vec<usize> = kids.iter().flat_map(|&k| leaves_below(&t, k)).collect();
        expected.sort_unstable();
        let f = shallow_fold(&mut t, &kids).unwrap();
        prop_assert_eq!(leaves_below(&t, f), expected);
        prop_assert_eq!(fingerprint(&t), before);
        prop_assert!(counts_consistent(&t));
    }

    #[test]
    fn fold_by_color_conserves(seed in any::<u64>(), n in 16usize..80, k in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors = random_colors(&mut rng, n, 2, 0.4);
        let mut t = random_tree_with(&mut rng, &colors, 2, 8).unwrap();
        let root = t.root();
        let kids = t.children(root).to_vec();
        prop_assume!(kids.len() >= k);
        let before = fingerprint(&t);
        let out = fold_by_color(&mut t, &kids, 0, k).unwrap();
        prop_assert_eq!(out.len(), kids.len().div_ceil(k));
        prop_assert_eq!(fingerprint(&t), before);
        prop_assert!(counts_consistent(&t));
    }

    #[test]
    fn split_root_balances(seed in any::<u64>(), n in 64usize..400, h in 2usize..9, chain in 0.0f64..1.0) {
        let eps = 1.0 / 16.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors = random_colors(&mut rng, n, 2, 0.5);
        let mut t = random_skewed_tree(&mut rng, &colors, 2, chain).unwrap();
        let before = fingerprint(&t);
        let root = t.root();
        let r = split_root(&mut t, root, h, eps).unwrap();
        prop_assert_eq!(t.children(root).len(), h);
        prop_assert!(is_relatively_balanced(&t, root, eps).unwrap());
        prop_assert!(!t.has_dummies());
        prop_assert_eq!(fingerprint(&t), before);
        prop_assert!(counts_consistent(&t));
        // Excess never grows.
        let mut prev = r.moves.first().map(|m| m.state.excess);
        for m in &r.moves {
            let start = prev.unwrap();
            prop_assert!(m.excess_after <= start + 1e-9);
            prop_assert!(m.state.delta >= 0.0);
            prev = Some(m.excess_after);
        }
    }

    #[test]
    fn make_fair_output_is_balanced_and_conserving(seed in any::<u64>(), n in 2usize..300, lambda in 1usize..3) {
        let t = colored_tree(seed, n, lambda, 3);
        let p = FairParams::new(4, 2, 1.0 / 20.0).unwrap();
        let options = MakeFairOptions { record_separations: false, check_conservation: true };
        let (out, trace) = make_fair_traced(&t, &p, &options).unwrap();
        prop_assert_eq!(fingerprint(&out), fingerprint(&t));
        prop_assert!(counts_consistent(&out));
        prop_assert!(!out.has_dummies());
        let base = trace.base_case_nodes();
        for v in out.internal_nodes() {
            if base.contains(&v) {
                prop_assert!(out.children(v).iter().all(|&c| out.is_leaf(c)));
            } else {
                prop_assert!(oracle_balanced(&out, v, p.eps));
            }
        }
    }

    #[test]
    fn fractions_stay_within_depth_bounds(seed in any::<u64>(), n in 64usize..600, c in prop::sample::select(vec![2.0, 4.0, 8.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors = random_colors(&mut rng, n, 2, 0.25);
        let t = random_skewed_tree(&mut rng, &colors, 2, 0.5).unwrap();
        let p = FairParams::with_eps_c(4, 2, c, n).unwrap();
        let options = MakeFairOptions { record_separations: false, check_conservation: false };
        let (out, _) = make_fair_traced(&t, &p, &options).unwrap();
        let (_, root_colors) = recount(&out, out.root());
        for color in 0..2 {
            let share = root_colors[color] as f64 / n as f64;
            for v in out.internal_nodes() {
                let mut depth = 0;
                let mut x = v;
                while let Some(up) = out.parent(x) {
                    depth += 1;
                    x = up;
                }
                let (size, counts) = recount(&out, v);
                let (lo, hi) = p.depth_bounds(share, depth);
                let f = counts[color] as f64 / size as f64;
                let base = out.children(v).iter().all(|&ch| out.is_leaf(ch));
                prop_assert!(base || (f >= lo - 1e-12 && f <= hi + 1e-12), "node {v} depth {depth} fraction {f} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn linkage_matches_naive(seed in any::<u64>(), n in 2usize..24) {
        let g = random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let fast: Vec<(usize, usize)> = average_linkage(&g).unwrap().iter().map(|m| (m.left, m.right)).collect();
        let slow: Vec<(usize, usize)> = naive_average_linkage(&g).iter().map(|&(a, b, _)| (a, b)).collect();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn subsample_tracks_color_fractions(seed in any::<u64>(), sizes in prop::collection::vec(1usize..200, 1..4), frac in 0.05f64..1.0) {
        let features: Vec<Vec<f64>> = sizes.iter().enumerate().flat_map(|(c, &s)| (0..s).map(move |i| vec![i as f64, c as f64])).collect();
        let colors: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
        let total = colors.len();
        let d = Dataset::new(features, colors, sizes.len(), vec!["a".into(), "b".into()]).unwrap();
        let n = ((total as f64 * frac) as usize).clamp(2.min(total), total);
        prop_assume!(n >= 2);
        let q = quotas(&sizes, n);
        prop_assert_eq!(q.iter().sum::<usize>(), n);
        let s = subsample(&d, n, seed).unwrap();
        prop_assert_eq!(s.len(), n);
        for (c, &size) in sizes.iter().enumerate() {
            let got = s.color_counts()[c] as f64 / n as f64;
            let want = size as f64 / total as f64;
            prop_assert!((got - want).abs() < 1.0 / n as f64);
        }
        prop_assert_eq!(subsample(&d, n, seed).unwrap(), s);
    }

    #[test]
    fn similarity_is_symmetric_in_unit_interval(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-50.0..50.0), rng.random_range(0.0..1e4)]).collect();
        let d = Dataset::new(features, vec![0; n], 1, vec!["a".into(), "b".into()]).unwrap();
        let g = build_similarity(&d).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(g.weight(i, j), g.weight(j, i));
                if i != j {
                    prop_assert!(g.weight(i, j) > 0.0 && g.weight(i, j) <= 1.0);
                }
            }
        }
    }

    #[test]
    fn histogram_counts_every_cluster(seed in any::<u64>(), n in 2usize..120, bins in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let colors = random_colors(&mut rng, n, 2, 0.3);
        let g = random_graph(&mut rng, n);
        let t = average_linkage_tree(&g, &colors, 2).unwrap();
        let h = balance_histogram(&t, 0, bins).unwrap();
        prop_assert_eq!(h.total() as usize, t.internal_nodes().len());
    }
}
