use icode::analysis::{
    binarize_causality, causality_matrix, detection_metrics, localize, pick_threshold, ranking, root_cause_cyber,
    root_cause_measurement, top_m_concentration,
};
use icode::anomaly::AnomalyKind;
use icode::model::IcodeModel;
use icode::ode::{DependencyGraph, SystemSpec, Trajectory};
use icode::tensor::Tensor;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut impl Rng, p: usize) -> Tensor<f64> {
    Tensor::matrix(p, p, (0..p * p).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn random_graph(rng: &mut impl Rng, p: usize) -> DependencyGraph {
    let density = rng.random_range(0.05..0.6);
    let bits: Vec<bool> = (0..p * p).map(|_| rng.random_bool(density)).collect();
    DependencyGraph::from_fn(p, |i, j| bits[i * p + j])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn row_plus_column_sums_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let p = rng.random_range(2..=20);
        let d = random_matrix(&mut rng, p);
        let s = root_cause_measurement(&d).unwrap();
        for (k, got) in s.iter().enumerate() {
            let mut want = 0.0;
            for j in 0..p {
                want += d.at(k, j);
            }
            for i in 0..p {
                want += d.at(i, k);
            }
            assert!(close(*got, want), "S({k}) = {got}, reference {want}");
        }
    }
}

#[test]
fn neighbourhood_sums_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..1000 {
        let p = rng.random_range(2..=20);
        let g = random_graph(&mut rng, p);
        let s: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..5.0)).collect();
        let sp = root_cause_cyber(&s, &g).unwrap();
        for i in 0..p {
            let mut want = 0.0;
            for (k, sk) in s.iter().enumerate() {
                let linked = if k == i { g.get(i, i) } else { g.get(i, k) || g.get(k, i) };
                if linked {
                    want += sk;
                }
            }
            assert!(close(sp[i], want), "S'({i}) = {}, reference {want}", sp[i]);
        }
    }
}

/// Top-m entries by explicit enumeration: sort (value, index) pairs, keep
/// everything at or above the m-th value, count per row and column.
fn brute_force_concentration(d: &Tensor<f64>, m: usize) -> (f64, Vec<bool>) {
    let p = d.rows();
    let mut entries: Vec<(f64, usize)> = d.data().iter().copied().zip(0..).collect();
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    let cut = entries[m - 1].0;
    let mut mask = vec![false; p * p];
    let mut rows = vec![0usize; p];
    let mut cols = vec![0usize; p];
    let mut n = 0;
    for &(v, idx) in &entries {
        if v < cut {
            break;
        }
        mask[idx] = true;
        rows[idx / p] += 1;
        cols[idx % p] += 1;
        n += 1;
    }
    let best = rows.iter().chain(&cols).copied().max().unwrap();
    (best as f64 / n as f64, mask)
}

#[test]
fn concentration_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..1000 {
        let p = 20;
        let mut d = random_matrix(&mut rng, p);
        if trial % 4 == 0 {
            // Plant a heavy row so the full range of M gets exercised.
            let r = rng.random_range(0..p);
            for j in 0..p {
                d.data_mut()[r * p + j] += rng.random_range(0.0..2.0);
            }
        }
        if trial % 7 == 0 {
            // Quantize so ties at the cut occur.
            for v in d.data_mut() {
                *v = (*v * 4.0).floor();
            }
        }
        let (want_m, want_mask) = brute_force_concentration(&d, 10);
        let got = top_m_concentration(&d, 10).unwrap();
        if got.degenerate {
            assert!(d.data().iter().all(|&v| v == 0.0));
            continue;
        }
        assert_eq!(got.top_mask, want_mask);
        assert!(close(got.score, want_m), "M = {}, reference {want_m}", got.score);
    }
}

#[test]
fn lorenz_one_hot_spreads_to_neighbourhood() {
    let spec = SystemSpec::<f64>::lorenz96(20, 10.0).unwrap();
    let g = spec.ground_truth_graph();
    for k in 0..20 {
        let mut s = vec![0.0; 20];
        s[k] = 1.0;
        let sp = root_cause_cyber(&s, &g).unwrap();
        // f_i reads x_{i-2}, x_{i-1}, x_i and x_{i+1}; linking either way leaves offsets -2..=2.
        let expected: Vec<usize> = (0..20usize).filter(|&i| [0, 1, 2, 18, 19].contains(&((i + 20 - k) % 20))).collect();
        let nonzero: Vec<usize> = (0..20).filter(|&i| sp[i] != 0.0).collect();
        assert_eq!(nonzero, expected, "k = {k}");
    }
}

#[test]
fn ring_one_hot_peaks_in_closed_neighbourhood() {
    let p = 12;
    let ring = DependencyGraph::from_fn(p, |i, j| (i + 1) % p == j || (j + 1) % p == i);
    for k in 0..p {
        let mut d = Tensor::zeros(&[p, p]);
        d.data_mut()[k * p + k] = 1.0;
        let loc = localize(AnomalyKind::Cyber, &d, &ring).unwrap();
        let top = loc.ranking[0];
        assert!(ring.closed_neighborhood(k).contains(&top), "k = {k}, top = {top}");
    }
}

#[test]
fn causality_median_matches_sort_and_pick() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = 3;
    let mut model = IcodeModel::<f64>::new(p, 7, 5);
    for t in model.params_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..p).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let c = causality_matrix(&model, &Trajectory::from_states(&rows).unwrap()).unwrap();
    let phis: Vec<Tensor<f64>> = rows.iter().map(|x| model.phi_forward(x).unwrap()).collect();
    for e in 0..p * p {
        let mut vals: Vec<f64> = phis.iter().map(|phi| phi.data()[e].abs()).collect();
        vals.sort_by(f64::total_cmp);
        assert_eq!(c.data()[e], vals[2]);
    }
}

#[test]
fn even_count_median_averages_centre() {
    let mut model = IcodeModel::<f64>::zeros(1, 2);
    model.phi.w1 = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
    model.phi.w2 = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
    // Φ(x) = tanh(x): the median of |tanh| over {0.1, 0.2, 0.4, 0.8} is the mean of the middle two.
    let traj = Trajectory::from_states(&[vec![0.8], vec![0.1], vec![0.4], vec![0.2]]).unwrap();
    let c = causality_matrix(&model, &traj).unwrap();
    let want = (0.2f64.tanh() + 0.4f64.tanh()) / 2.0;
    assert!((c.data()[0] - want).abs() < 1e-15);
}

/// Minimum within-cluster sum of squares over every split of the sorted values.
fn best_split(v: &[f64]) -> f64 {
    let mut s: Vec<f64> = v.to_vec();
    s.sort_by(f64::total_cmp);
    let sse = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..s.len() {
        let cost = sse(&s[..k]) + sse(&s[k..]);
        if cost < best.0 {
            best = (cost, (s[k - 1] + s[k]) / 2.0);
        }
    }
    best.1
}

#[test]
fn binarization_matches_exhaustive_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..200 {
        let p = rng.random_range(3..=20);
        let hi_share = rng.random_range(0.1..0.6);
        let spread = rng.random_range(0.01..0.15);
        let v: Vec<f64> = (0..p * p)
            .map(|_| {
                let centre: f64 = if rng.random_bool(hi_share) { 0.8 } else { 0.1 };
                (centre + rng.random_range(-spread..spread)).abs()
            })
            .collect();
        let cut = best_split(&v);
        let b = binarize_causality(&Tensor::matrix(p, p, v.clone()).unwrap()).unwrap();
        for (e, &x) in v.iter().enumerate() {
            assert_eq!(b.graph.as_slice()[e], x > cut, "entry {x} vs cut {cut}");
        }
    }
}

#[test]
fn threshold_matches_sort_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..500 {
        let n = rng.random_range(1..300);
        let q = rng.random_range(0.01..0.999);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        // Smallest value with at least q·n values at or below it.
        let want = *sorted.iter().find(|&&s| sorted.iter().filter(|&&t| t <= s).count() as f64 >= q * n as f64).unwrap();
        assert_eq!(pick_threshold(&scores, q).unwrap(), want);
    }
}

#[test]
fn confusion_counts_match_hand_tally() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let flags: Vec<bool> = (0..200).map(|_| rng.random_bool(0.3)).collect();
    let truth: Vec<bool> = (0..200).map(|_| rng.random_bool(0.4)).collect();
    let m = detection_metrics(&flags, &truth).unwrap();
    let tally = |f: bool, t: bool| flags.iter().zip(&truth).filter(|&(&a, &b)| a == f && b == t).count();
    let (tp, fp, fn_) = (tally(true, true), tally(true, false), tally(false, true));
    assert_eq!((m.tp, m.fp, m.fn_, m.tn), (tp, fp, fn_, tally(false, false)));
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    assert!((m.precision - precision).abs() < 1e-15);
    assert!((m.recall - recall).abs() < 1e-15);
    assert!((m.f1 - 2.0 * precision * recall / (precision + recall)).abs() < 1e-15);
}

fn matrix_strategy(p: usize) -> impl Strategy<Value = Tensor<f64>> {
    proptest::collection::vec(0.0f64..1.0, p * p).prop_map(move |v| Tensor::matrix(p, p, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rankings_and_selection_are_scale_equivariant(
        d in matrix_strategy(8),
        c in 1e-3f64..1e3,
        bits in proptest::collection::vec(proptest::bool::ANY, 64),
    ) {
        let g = DependencyGraph::from_fn(8, |i, j| bits[i * 8 + j]);
        let scaled = d.map(|v| v * c);
        let (s, s2) = (root_cause_measurement(&d).unwrap(), root_cause_measurement(&scaled).unwrap());
        prop_assert_eq!(ranking(&s), ranking(&s2));
        prop_assert_eq!(
            ranking(&root_cause_cyber(&s, &g).unwrap()),
            ranking(&root_cause_cyber(&s2, &g).unwrap())
        );
        let (a, b) = (top_m_concentration(&d, 10).unwrap(), top_m_concentration(&scaled, 10).unwrap());
        prop_assert_eq!(&a.top_mask, &b.top_mask);
        prop_assert_eq!(a.score, b.score);
    }

    #[test]
    fn scores_are_permutation_equivariant(
        d in matrix_strategy(7),
        seed in any::<u64>(),
        bits in proptest::collection::vec(proptest::bool::ANY, 49),
    ) {
        let p = 7;
        let mut perm: Vec<usize> = (0..p).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut moved = Tensor::zeros(&[p, p]);
        for i in 0..p {
            for j in 0..p {
                moved.data_mut()[perm[i] * p + perm[j]] = d.at(i, j);
            }
        }
        let g = DependencyGraph::from_fn(p, |i, j| bits[i * p + j]);
        let gm = g.permuted(&perm);
        let s = root_cause_measurement(&d).unwrap();
        let sm = root_cause_measurement(&moved).unwrap();
        let sp = root_cause_cyber(&s, &g).unwrap();
        let spm = root_cause_cyber(&sm, &gm).unwrap();
        for i in 0..p {
            prop_assert!(close(sm[perm[i]], s[i]));
            prop_assert!(close(spm[perm[i]], sp[i]));
        }
        let mapped: Vec<usize> = ranking(&s).iter().map(|&i| perm[i]).collect();
        prop_assert_eq!(ranking(&sm), mapped);
    }

    #[test]
    fn concentration_is_a_fraction(d in matrix_strategy(6), m in 1usize..=36, quantize in proptest::bool::ANY) {
        let d = if quantize { d.map(|v| (v * 3.0).floor()) } else { d };
        let r = top_m_concentration(&d, m).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.score));
        if !r.degenerate {
            let p = 6;
            let one_line = (0..p).any(|l| {
                (0..p * p).filter(|&e| r.top_mask[e]).all(|e| e / p == l)
                    || (0..p * p).filter(|&e| r.top_mask[e]).all(|e| e % p == l)
            });
            prop_assert_eq!(r.score == 1.0, one_line);
        }
    }

    #[test]
    fn causality_ignores_sample_order(seed in any::<u64>(), n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = IcodeModel::<f64>::new(3, 5, seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        let a = causality_matrix(&model, &Trajectory::from_states(&rows).unwrap()).unwrap();
        let b = causality_matrix(&model, &Trajectory::from_states(&shuffled).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}
