use pcmg_core::assets::DgKind;
use pcmg_core::balancer::*;
use pcmg_core::dtree::NodeKind;
use pcmg_core::lsgen::{Direction, Origin};
use pcmg_core::planner::*;
use pcmg_core::{Error, Scenario};

fn quiet(mut dev: DeviationModel) -> DeviationModel {
    for env in [&mut dev.load, &mut dev.pv, &mut dev.wind] {
        env.lower = 0.0;
        env.upper = 0.0;
        env.extreme_lower = 0.0;
        env.extreme_upper = 0.0;
    }
    dev
}

#[test]
fn deficit_is_sized_by_the_load_envelope() {
    let sc = Scenario::bundled();
    let state = sc.state().unwrap();
    assert!((max_deficit(&sc, &state, &sc.deviation) - 330.0).abs() < 1e-9);
    let (deficit, _) = hour_requirements(&sc, &state);
    assert_eq!(deficit.origin, Origin::LoadDeviation);

    // With a tighter envelope the CHP at bus 15 (225 kW + 25 kW reserve) dominates.
    let mut dev = sc.deviation.clone();
    dev.load.upper = 0.1;
    let mut tight = sc.clone();
    tight.deviation = dev.clone();
    assert!((max_deficit(&tight, &state, &dev) - 250.0).abs() < 1e-9);
    let (deficit, _) = hour_requirements(&tight, &state);
    assert_eq!(deficit.origin, Origin::DgLoss { bus: 15 });
    assert!((deficit.magnitude_kw - 250.0).abs() < 1e-9);
}

#[test]
fn deficit_without_generation_or_envelope_is_zero() {
    let mut sc = Scenario::bundled();
    sc.assets.dg.clear();
    sc.schedule.dg.clear();
    let state = sc.state().unwrap();
    assert_eq!(max_deficit(&sc, &state, &quiet(sc.deviation.clone())), 0.0);
}

#[test]
fn excess_sums_units_of_one_weather_type() {
    let mut sc = Scenario::bundled();
    sc.assets.dg.retain(|u| u.kind == DgKind::Pv);
    sc.assets.dg.truncate(2);
    for u in &mut sc.assets.dg {
        u.availability_kw = 50.0;
    }
    sc.schedule.dg.clear();
    let state = sc.state().unwrap();
    let mut dev = quiet(sc.deviation.clone());
    dev.pv.upper = 0.15;
    assert!((max_excess(&sc, &state, &dev) - 15.0).abs() < 1e-9);

    for u in &mut sc.assets.dg {
        u.availability_kw = 0.0;
    }
    let state = sc.state().unwrap();
    assert_eq!(max_excess(&sc, &state, &dev), 0.0);
}

#[test]
fn deadband_requirements_give_empty_plans() {
    let mut sc = Scenario::bundled();
    sc.deviation.load.lower = -0.01;
    sc.deviation.load.upper = 0.01;
    sc.deviation.pv.upper = 0.0;
    sc.deviation.wind.upper = 0.0;
    sc.meta.nominal_total_load_kw = 100_000.0;
    let state = sc.state().unwrap();
    let (deficit, excess) = plan_hour(&sc, &state, &PlanConfig::default()).unwrap();
    for plan in [&deficit, &excess] {
        assert!(plan.is_empty());
        assert_eq!(plan.note.as_deref(), Some("within deadband"));
    }
    assert_eq!(deficit.direction, Direction::Deficit);
    assert_eq!(excess.direction, Direction::Excess);
}

#[test]
fn hour_plans_cover_both_directions() {
    let sc = Scenario::bundled();
    let state = sc.state().unwrap();
    let cfg = PlanConfig { samples: 300, seed: 4, ..PlanConfig::default() };
    let (deficit, excess) = plan_hour(&sc, &state, &cfg).unwrap();
    assert_eq!(deficit.levels.len(), DEFAULT_LEVELS.len());
    assert_eq!(excess.levels.len(), DEFAULT_LEVELS.len());
    assert!(deficit.levels.windows(2).all(|w| w[0].threshold <= w[1].threshold));
    assert!(!deficit.is_empty() && !excess.is_empty());
}

#[test]
fn vacuous_level_makes_the_root_a_rule() {
    let sc = Scenario::bundled();
    let state = sc.state().unwrap();
    let cfg = PlanConfig { levels: vec![1.0], samples: 200, seed: 2, ..PlanConfig::default() };
    let (plan, ls) = plan_requirement(&sc, &state, islanding_requirement(&state), &cfg).unwrap();
    let level = &plan.levels[0];
    let feasible = ls.records.iter().filter(|r| r.feasible).count() as f64 / ls.records.len() as f64;
    assert!((level.true_fraction - feasible).abs() < 1e-12);
    if feasible == 1.0 {
        assert_eq!(level.rules.len(), 1);
        assert!(level.rules[0].predicates.is_empty());
        let labeled = ls.label_top(1.0).unwrap();
        let (train_set, _) = labeled.split_train_test();
        let tree = pcmg_core::dtree::train(&ls.attribute_names, &train_set, &cfg.train).unwrap();
        assert_eq!(tree.root().kind, NodeKind::Leaf);
    }
}

#[test]
fn islanding_plan_has_rules_at_loose_levels() {
    let sc = Scenario::bundled();
    let state = sc.state().unwrap();
    let plan = plan_islanding(&sc, &state, &PlanConfig { seed: 3, ..PlanConfig::default() }).unwrap();
    assert_eq!(plan.direction, Direction::Deficit);
    assert_eq!(plan.requirement.origin, Origin::Islanding);
    assert!(!plan.levels[0].rules.is_empty());
    for l in &plan.levels {
        let mr = l.mr.unwrap();
        assert!(mr.mrr <= mr.mr);
    }
}

#[test]
fn exporting_island_balances_an_excess() {
    let sc = Scenario::bundled();
    let mut state = sc.state().unwrap();
    for v in &mut state.load_next_kw {
        *v *= 0.3;
    }
    for v in &mut state.load_now_kw {
        *v *= 0.3;
    }
    let plan = plan_islanding(&sc, &state, &PlanConfig { samples: 200, ..PlanConfig::default() }).unwrap();
    assert_eq!(plan.direction, Direction::Excess);
}

#[test]
fn zero_exchange_island_needs_no_plan() {
    let sc = Scenario::bundled();
    let mut state = sc.state().unwrap();
    state.load_now_kw.iter_mut().for_each(|v| *v = 0.0);
    state.load_next_kw.iter_mut().for_each(|v| *v = 0.0);
    for d in &mut state.dg {
        d.p_kw = 0.0;
        d.r_kw = 0.0;
        d.committed = false;
    }
    let plan = plan_islanding(&sc, &state, &PlanConfig::default()).unwrap();
    assert!(plan.is_empty() && plan.levels.is_empty());
}

#[test]
fn island_without_enough_flexibility_names_the_shortfall() {
    let mut sc = Scenario::bundled();
    for l in &mut sc.assets.loads {
        l.curtailable = false;
        l.curtailment_cost = None;
    }
    let state = sc.state().unwrap();
    match plan_islanding(&sc, &state, &PlanConfig::default()) {
        Err(Error::Shortfall { required, available, shortfall }) => {
            assert!(required > available);
            assert!((shortfall - (required - available)).abs() < 1e-9);
        }
        other => panic!("expected a shortfall, got {other:?}"),
    }
}

#[test]
fn every_source_gets_its_annual_events() {
    let sc = Scenario::bundled();
    let ev = scenario_events(&sc, None, 8).unwrap();
    for s in Source::ALL {
        assert_eq!(ev.raw_count(s), 402);
    }
    let mut hours: Vec<u32> = ev.raw.iter().filter(|e| e.source == Source::Load).map(|e| e.hour).collect();
    hours.sort();
    hours.dedup();
    assert_eq!(hours.len(), 402);
    assert!(ev.raw.iter().filter(|e| e.source == Source::Pv).all(|e| e.kw >= 0.0));
    assert!(ev.combined.iter().all(|c| c.kw.abs() > ev.deadband_kw));
    assert!((ev.deadband_kw - 0.033 * sc.meta.nominal_total_load_kw).abs() < 1e-9);
}

#[test]
fn event_magnitudes_sit_outside_two_sigma() {
    let sc = Scenario::bundled();
    let ev = scenario_events(&sc, None, 1).unwrap();
    let dev = &sc.deviation;
    for e in &ev.raw {
        let env = dev.envelope(e.source);
        let cap = if e.fraction > 0.0 { env.upper } else { -env.lower };
        let mag = e.fraction.abs();
        assert!(mag >= (2.0 * env.sigma).min(cap) - 1e-12, "{e:?}");
        assert!(mag <= cap + 1e-12);
    }
}

#[test]
fn combined_instances_average_near_seven_hundred() {
    let sc = Scenario::bundled();
    let mean = (0..20).map(|s| scenario_events(&sc, None, s).unwrap().combined.len()).sum::<usize>() as f64 / 20.0;
    assert!((630.0..=770.0).contains(&mean), "{mean}");
}

#[test]
fn zero_envelopes_give_no_events() {
    let sc = Scenario::bundled();
    let profile = synthetic_profile(&ProfileShape::default(), sc.rated_load_kw());
    let ev = generate_annual_events(&quiet(sc.deviation.clone()), &profile, 100.0, 2730.0, 0).unwrap();
    assert!(ev.raw.is_empty() && ev.combined.is_empty());
    assert!(generate_annual_events(&sc.deviation, &profile[..100], 100.0, 2730.0, 0).is_err());
}

#[test]
fn profile_files_need_a_full_year() {
    let text: String = (0..HOURS_PER_YEAR).map(|h| format!("{}\n", 1000 + h % 24)).collect();
    let p = parse_profile(&format!("# kW\n{text}")).unwrap();
    assert_eq!(p.len(), HOURS_PER_YEAR);
    assert_eq!(p[25], 1001.0);
    assert!(parse_profile("1\n2\n").is_err());
    assert!(matches!(parse_profile("x\n"), Err(Error::Parse(_))));
}

#[test]
fn options_split_capacity_by_converter() {
    let sc = Scenario::bundled();
    let v = StorageOption { capacity_kwh: 300.0, preferred_soc: 0.7 }.apply(&sc).unwrap();
    let caps: Vec<f64> = v.assets.storage.iter().map(|b| b.capacity_kwh).collect();
    assert_eq!(caps, vec![30.0, 30.0, 120.0, 120.0]);
    assert!(v.assets.storage.iter().all(|b| b.soc == 0.7 && b.preferred_soc == 0.7));
    assert_eq!(scenario_options(&sc).len(), 8);
}

#[test]
fn huge_storage_absorbs_excess_for_free() {
    let sc = Scenario::bundled();
    let ev = scenario_events(&sc, None, 0).unwrap();
    let cfg = PlanConfig { samples: 200, ..PlanConfig::default() };
    let opts = [StorageOption { capacity_kwh: 1500.0, preferred_soc: 0.7 }];
    let table = appraise(&sc, &opts, &ev, &cfg).unwrap();
    let row = table.get(1500.0, 0.7).unwrap();
    assert!(row.suitable);
    assert_eq!(row.excess_cost, 0.0);
    assert_eq!(table.combined_events, ev.combined.len());
    let binned: u32 = table.bin_counts.iter().map(|(_, n)| n).sum();
    assert_eq!(binned as usize, ev.combined.len());
}
