use pcmg_core::dtree::*;
use pcmg_core::rng::SampleRng;

fn sample(i: u32, attrs: Vec<f64>, label: bool, profit: f64) -> LabeledSample {
    LabeledSample {
        sample_index: i,
        attributes: attrs,
        label,
        profit,
    }
}

fn names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("A{i}")).collect()
}

/// Gain of every (attribute, midpoint) pair computed from raw filters.
fn brute_force(data: &[LabeledSample]) -> Option<(usize, f64, f64)> {
    let h = |t: usize, n: usize| {
        if n == 0 || t == 0 || t == n {
            return 0.0;
        }
        let p = t as f64 / n as f64;
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    };
    let n = data.len();
    let t = data.iter().filter(|s| s.label).count();
    let hp = h(t, n);
    let mut best: Option<(usize, f64, f64)> = None;
    for a in 0..data[0].attributes.len() {
        let mut vals: Vec<f64> = data.iter().map(|s| s.attributes[a]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let left: Vec<_> = data.iter().filter(|s| s.attributes[a] >= thr).collect();
            let lt = left.iter().filter(|s| s.label).count();
            let nl = left.len();
            let nr = n - nl;
            let rem = nl as f64 / n as f64 * h(lt, nl) + nr as f64 / n as f64 * h(t - lt, nr);
            let g = if hp > 0.0 { (hp - rem) / hp } else { 0.0 };
            if best.map_or(true, |(_, _, bg)| g > bg + 1e-12) {
                best = Some((a, thr, g));
            }
        }
    }
    best
}

#[test]
fn six_sample_gain_matches_enumeration() {
    let pts = [(1.0, true), (2.0, true), (3.0, false), (4.0, true), (5.0, false), (6.0, false)];
    let data: Vec<_> = pts
        .iter()
        .enumerate()
        .map(|(i, &(v, l))| sample(i as u32, vec![v], l, 0.0))
        .collect();
    let refs: Vec<_> = data.iter().collect();
    let g = info_gain(&refs, Split { attribute: 0, threshold: 3.5 }).unwrap();
    // left {4T,5F,6F}: 1/3; right {1T,2T,3F}: 2/3; parent 1/2.
    let h13 = -(1.0f64 / 3.0) * (1.0f64 / 3.0).log2() - (2.0f64 / 3.0) * (2.0f64 / 3.0).log2();
    assert!((g - (1.0 - h13)).abs() < 1e-12);
    let (a, thr, bg) = brute_force(&data).unwrap();
    let (split, gain) = best_split(&refs).unwrap();
    assert_eq!((split.attribute, split.threshold), (a, thr));
    assert!((gain - bg).abs() < 1e-12);
}

#[test]
fn best_split_agrees_with_exhaustive_search() {
    for seed in 0..25 {
        let mut rng = SampleRng::new(seed, 0);
        let data: Vec<_> = (0..40)
            .map(|i| {
                let attrs = vec![
                    (rng.uniform() * 10.0).round(),
                    rng.uniform() * 5.0,
                    (rng.uniform() * 3.0).floor(),
                ];
                let label = rng.uniform() < 0.4 + 0.05 * attrs[0];
                sample(i, attrs, label, 0.0)
            })
            .collect();
        let refs: Vec<_> = data.iter().collect();
        let (a, thr, bg) = brute_force(&data).unwrap();
        let (split, gain) = best_split(&refs).unwrap();
        assert_eq!((split.attribute, split.threshold), (a, thr), "seed {seed}");
        assert!((gain - bg).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&gain));
    }
}

/// Normal upper tail by composite Simpson integration of the density.
fn normal_upper_tail(z: f64) -> f64 {
    let (a, b, n) = (z, z + 12.0, 20_000);
    let f = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn critical_value_matches_independent_quadrature() {
    // One degree of freedom: P(X > c) = 2 P(Z > sqrt c).
    let (mut lo, mut hi) = (0.0, 10.0);
    for _ in 0..80 {
        let mid = (lo + hi) / 2.0;
        if 2.0 * normal_upper_tail(mid) > 0.001 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let oracle = lo * lo;
    assert!((chi2_critical(0.001) - oracle).abs() < 1e-6);
    assert!((oracle - 10.8276).abs() < 1e-4);
}

#[test]
fn statistic_at_critical_value_is_rejected() {
    let crit = chi2_critical(0.001);
    // Strict inequality.
    assert!(!(crit > crit));
    // Search a 2x2 table whose statistic lands just below and just above.
    let stat = |a: usize| chi2_statistic(Counts { n: 200, n_true: a }, Counts { n: 200, n_true: 100 }).unwrap();
    let a = (100..200).find(|&a| stat(a) > crit).unwrap();
    assert!(stat(a - 1) <= crit);
    let mk = |t: usize| {
        let mut v = Vec::new();
        for i in 0..200 {
            v.push(sample(i, vec![1.0], i < t as u32, 0.0));
        }
        for i in 0..200 {
            v.push(sample(200 + i, vec![0.0], i < 100, 0.0));
        }
        v
    };
    let split = Split { attribute: 0, threshold: 0.5 };
    let acc = mk(a);
    let rej = mk(a - 1);
    assert!(chi2_accept(&acc.iter().collect::<Vec<_>>(), split, 0.001));
    assert!(!chi2_accept(&rej.iter().collect::<Vec<_>>(), split, 0.001));
}

fn fig1_set(n: u32, seed: u64) -> Vec<LabeledSample> {
    (0..n)
        .map(|i| {
            let mut rng = SampleRng::new(seed, i as u64);
            let a1 = rng.uniform_between(0.0, 20.0);
            let noise: Vec<f64> = (0..5).map(|_| rng.uniform() * 10.0).collect();
            let a7 = if rng.uniform() < 0.5 { 1.0 } else { 0.0 };
            let mut attrs = vec![a1];
            attrs.extend(noise);
            attrs.push(a7);
            let label = a1 < 8.2 && a7 == 0.0;
            sample(i, attrs, label, 0.0)
        })
        .collect()
}

#[test]
fn recovers_two_level_ground_truth() {
    let data = fig1_set(5000, 1);
    let tree = train(&names(7), &data, &TrainConfig::default()).unwrap();
    let root = tree.root();
    let split = root.split.unwrap();
    assert_eq!(split.attribute, 0);
    assert!((split.threshold - 8.2).abs() < 0.05, "{}", split.threshold);

    let rules = tree.extract_rules();
    assert_eq!(rules.len(), 1);
    let r = &rules[0];
    assert_eq!(r.predicates.len(), 2);
    assert_eq!(r.predicates[0].attribute, "A1");
    assert_eq!(r.predicates[0].op, Op::Lt);
    assert_eq!(r.predicates[1].attribute, "A7");
    assert_eq!(r.predicates[1].op, Op::Lt);
    assert_eq!(r.purity, 1.0);

    let falses = tree.false_rules();
    let top = falses.iter().find(|f| f.predicates.len() == 1).unwrap();
    assert_eq!(top.predicates[0].attribute, "A1");
    assert_eq!(top.predicates[0].op, Op::Ge);
    assert_eq!(top.leaf_id, 2);

    let p = tree.classify(&[9.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(!p.label);
    assert_eq!(p.leaf_id, 2);
    let p = tree.classify(&[5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(p.label && p.true_rule);
}

#[test]
fn random_conjunction_generalizes() {
    let gen = |seed: u64, n: u32| -> Vec<LabeledSample> {
        (0..n)
            .map(|i| {
                let mut rng = SampleRng::new(seed, i as u64);
                let a: Vec<f64> = (0..5).map(|_| rng.uniform() * 100.0).collect();
                let label = a[1] >= 30.0 && a[3] < 70.0 && a[4] >= 20.0;
                sample(i, a, label, 0.0)
            })
            .collect()
    };
    let train_set = gen(10, 2000);
    let test_set = gen(11, 1000);
    let tree = train(&names(5), &train_set, &TrainConfig::default()).unwrap();
    let report = tree.evaluate_mr(&test_set).unwrap();
    assert!(report.mr <= 0.05, "accuracy {}", 1.0 - report.mr);
    assert!(report.mrr <= report.mr);
}

#[test]
fn purest_dead_end_is_promoted() {
    let mut data = Vec::new();
    for i in 0..100 {
        data.push(sample(i, vec![1.0], i < 61, 0.0));
    }
    for i in 0..100 {
        data.push(sample(100 + i, vec![0.0], i < 34, 0.0));
    }
    let tree = train(&names(1), &data, &TrainConfig::default()).unwrap();
    assert_eq!(tree.nodes.len(), 3);
    let rules = tree.extract_rules();
    assert_eq!(rules.len(), 1);
    assert!(rules[0].promoted);
    assert!((rules[0].purity - 0.61).abs() < 1e-12);
    assert!(!tree.nodes[2].promoted);
}

#[test]
fn rules_follow_merit_order() {
    let mut data = Vec::new();
    for i in 0..60u32 {
        let v = (i % 3) as f64;
        let label = v > 0.0;
        let profit = match i % 3 {
            1 => 7.0,
            2 => 10.0,
            _ => 0.0,
        };
        data.push(sample(i, vec![v, (i % 3 == 2) as u8 as f64], label, profit));
    }
    // Leaves split by the second attribute so the two True groups stay apart.
    for i in 60..120u32 {
        data.push(sample(i, vec![0.0, 0.0], false, 0.0));
    }
    let tree = train(&names(2), &data, &TrainConfig::default()).unwrap();
    let rules = tree.extract_rules();
    let profits: Vec<f64> = rules.iter().map(|r| r.mean_profit).collect();
    let mut sorted = profits.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    assert_eq!(profits, sorted);
}

#[test]
fn true_rules_cover_their_leaf_subsets() {
    let data = fig1_set(3000, 4);
    let n = names(7);
    let tree = train(&n, &data, &TrainConfig::default()).unwrap();
    for rule in tree.extract_rules() {
        let members: Vec<_> = data
            .iter()
            .filter(|s| tree.classify(&s.attributes).unwrap().leaf_id == rule.leaf_id)
            .collect();
        assert_eq!(members.len(), rule.support);
        assert!(members.iter().all(|s| rule.matches(&n, &s.attributes).unwrap()));
        assert!(rule.promoted || rule.purity > 0.9);
    }
}

#[test]
fn training_is_deterministic() {
    let data = fig1_set(2000, 9);
    let a = train(&names(7), &data, &TrainConfig::default()).unwrap();
    let b = train(&names(7), &data, &TrainConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
}

#[test]
fn mrr_never_exceeds_mr() {
    for seed in 0..5 {
        let data: Vec<_> = fig1_set(1500, seed)
            .into_iter()
            .map(|mut s| {
                // Flip a tenth of labels to create errors.
                if SampleRng::new(seed + 100, s.sample_index as u64).uniform() < 0.1 {
                    s.label = !s.label;
                }
                s
            })
            .collect();
        let (test, train_set): (Vec<_>, Vec<_>) = data.into_iter().partition(|s| s.sample_index % 3 == 2);
        let tree = train(&names(7), &train_set, &TrainConfig::default()).unwrap();
        let r = tree.evaluate_mr(&test).unwrap();
        assert!(r.mrr <= r.mr && r.mr <= 1.0);
        assert!(r.misclassified > 0);
    }
}

#[test]
fn in_band_dead_ends_are_retracted() {
    // Children at 0.5 and 0.2 purity with a significant split: the 0.5 side is in band.
    let mut data = Vec::new();
    for i in 0..300 {
        data.push(sample(i, vec![1.0], i % 2 == 0, 0.0));
    }
    for i in 0..300 {
        data.push(sample(300 + i, vec![0.0], i % 5 == 0, 0.0));
    }
    let tree = train(&names(1), &data, &TrainConfig::default()).unwrap();
    assert_eq!(tree.nodes.len(), 1);
    assert_eq!(tree.root().kind, NodeKind::DeadEnd);
    assert!(tree.root().promoted);
}
