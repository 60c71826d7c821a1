use chrono::{Datelike, Days, NaiveDate, Weekday};
use proptest::prelude::*;

use wfbt_core::execution::*;
use wfbt_core::market_data::{align_calendar, Bar, BusinessCalendar, PriceSeries};
use wfbt_core::signal::{build_signal, ema_smooth, SignalError};
use wfbt_core::synthetic::{generate, SyntheticSpec};
use wfbt_core::walkforward::*;

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

fn short_history() -> PriceSeries {
    generate(&SyntheticSpec { end: d(2017, 12, 31), ..SyntheticSpec::default() }).unwrap()
}

// ---------------------------------------------------------------- reference simulator

/// Straight-line re-implementation of the long-only close-trigger state machine.
fn reference_path(inputs: &[DayInput], rules: &TradeRules, costs: &CostModel, delay: usize) -> Vec<(f64, f64, f64)> {
    let e = &rules.exit;
    let (mut holding, mut entry, mut peak, mut age, mut streak, mut scale) = (false, 0.0, 0.0, 0u32, 0u32, 1.0);
    let mut targets = Vec::new();
    for day in inputs {
        let c = day.bar.close;
        let mut target = 0.0;
        if holding {
            age += 1;
            if c > peak {
                peak = c;
            }
            let mut exit = false;
            if let Some(a) = day.atr {
                exit = c <= entry - e.hard_stop_mult * a || c <= peak - e.trail_stop_mult * a;
            }
            if !exit && age >= e.timeout_days {
                exit = true;
            }
            if !exit {
                let bear = 1.0 - day.p_bull.unwrap_or(0.5);
                if day.p_bull.is_some() && bear > e.derisk_threshold {
                    streak += 1;
                    if streak >= 2 {
                        exit = true;
                    } else {
                        scale *= 0.5;
                    }
                } else {
                    streak = 0;
                }
            }
            if !exit {
                target = day.sizing_weight * scale;
                if target <= 0.0 {
                    exit = true;
                    target = 0.0;
                }
            }
            if exit {
                holding = false;
            }
        } else if day.tradeable
            && day.atr.is_some()
            && day.sizing_weight > 0.0
            && day.p_bull.is_some_and(|p| p >= rules.activation_threshold)
            && day.slope > 0.0
        {
            holding = true;
            entry = c;
            peak = c;
            age = 0;
            streak = 0;
            scale = 1.0;
            target = day.sizing_weight;
        }
        targets.push(target);
    }
    let mut out = Vec::new();
    let mut prev_fill = 0.0;
    for t in 0..inputs.len() {
        let fill = if t >= delay { targets[t - delay] } else { 0.0 };
        let gross = prev_fill * inputs[t].asset_return;
        let dw = (fill - prev_fill).abs();
        let net = gross - costs.cost_multiplier * costs.k * dw - costs.impact_multiplier * costs.gamma * dw.powf(1.5);
        out.push((fill, gross, net));
        prev_fill = fill;
    }
    out
}

fn arb_inputs() -> impl Strategy<Value = Vec<DayInput>> {
    prop::collection::vec(
        (-0.03f64..0.03, 0.0f64..1.0, -1.0f64..1.0, 0.0f64..0.03, 0.0f64..1.5, any::<bool>()),
        5..120,
    )
    .prop_map(|days| {
        let mut close = 100.0;
        let mut prev_p = None;
        days.into_iter()
            .enumerate()
            .map(|(i, (r, p, slope, atr, w, zero_w))| {
                close *= 1.0 + r;
                let p_bull = (i % 17 != 3).then_some(p);
                let input = DayInput {
                    date: d(2020, 1, 1) + Days::new(i as u64),
                    bar: Bar::flat(d(2020, 1, 1) + Days::new(i as u64), close),
                    asset_return: r,
                    p_bull,
                    prev_p_bull: prev_p,
                    slope,
                    atr: (i >= 3).then_some(atr * close),
                    tradeable: i >= 3,
                    sizing_weight: if zero_w && i % 5 == 0 { 0.0 } else { w },
                };
                prev_p = p_bull;
                input
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn simulate_path_matches_reference(inputs in arb_inputs(), delay in 0u8..=2, cm in 0.0f64..3.0, im in 0.0f64..3.0) {
        let rules = TradeRules { exit: ExitParams::default(), activation_threshold: 0.52, direction: Direction::Long };
        let costs = CostModel { cost_multiplier: cm, impact_multiplier: im, ..CostModel::default() };
        let rows = simulate_path(&inputs, &rules, &costs, LatencyMode::new(delay).unwrap());
        let oracle = reference_path(&inputs, &rules, &costs, delay as usize);
        prop_assert_eq!(rows.len(), oracle.len());
        for (r, (fill, gross, net)) in rows.iter().zip(oracle) {
            prop_assert_eq!(r.filled_weight, fill);
            prop_assert!((r.gross_return - gross).abs() < 1e-15);
            prop_assert!((r.net_return - net).abs() < 1e-15);
        }
    }

    #[test]
    fn latency_is_a_pure_shift(inputs in arb_inputs()) {
        let rules = TradeRules { exit: ExitParams::default(), activation_threshold: 0.52, direction: Direction::Long };
        let costs = CostModel::default();
        let t0 = simulate_path(&inputs, &rules, &costs, LatencyMode::new(0).unwrap());
        let t1 = simulate_path(&inputs, &rules, &costs, LatencyMode::new(1).unwrap());
        prop_assert_eq!(t1[0].filled_weight, 0.0);
        for t in 1..t0.len() {
            prop_assert_eq!(t1[t].filled_weight, t0[t - 1].target_weight);
        }
    }
}

// ---------------------------------------------------------------- calendar

fn nth_weekday(y: i32, m: u32, wd: Weekday, n: u32) -> NaiveDate {
    NaiveDate::from_weekday_of_month_opt(y, m, wd, n as u8).unwrap()
}

fn last_weekday(y: i32, m: u32, wd: Weekday) -> NaiveDate {
    let mut x = if m == 12 { d(y + 1, 1, 1) } else { d(y, m + 1, 1) } - Days::new(1);
    while x.weekday() != wd {
        x = x - Days::new(1);
    }
    x
}

fn easter(y: i32) -> NaiveDate {
    let a = y % 19;
    let b = y / 100;
    let c = y % 100;
    let dd = b / 4;
    let e = b % 4;
    let f = (b + 8) / 25;
    let g = (b - f + 1) / 3;
    let h = (19 * a + b - dd - g + 15) % 30;
    let i = c / 4;
    let k = c % 4;
    let l = (32 + 2 * e + 2 * i - h - k) % 7;
    let m = (a + 11 * h + 22 * l) / 451;
    let month = (h + l - 7 * m + 114) / 31;
    let day = (h + l - 7 * m + 114) % 31 + 1;
    d(y, month as u32, day as u32)
}

fn observed(x: NaiveDate) -> Option<NaiveDate> {
    match x.weekday() {
        Weekday::Sat if x.month() == 1 && x.day() == 1 => None,
        Weekday::Sat => Some(x - Days::new(1)),
        Weekday::Sun => Some(x + Days::new(1)),
        _ => Some(x),
    }
}

/// US equity-exchange style full-day closures.
fn exchange_holidays(from: i32, to: i32) -> Vec<NaiveDate> {
    let mut out = vec![d(2012, 10, 29), d(2012, 10, 30), d(2018, 12, 5), d(2025, 1, 9)];
    for y in from..=to {
        out.extend(observed(d(y, 1, 1)));
        out.push(nth_weekday(y, 1, Weekday::Mon, 3));
        out.push(nth_weekday(y, 2, Weekday::Mon, 3));
        out.push(easter(y) - Days::new(2));
        out.push(last_weekday(y, 5, Weekday::Mon));
        if y >= 2022 {
            out.extend(observed(d(y, 6, 19)));
        }
        out.extend(observed(d(y, 7, 4)));
        out.push(nth_weekday(y, 9, Weekday::Mon, 1));
        out.push(nth_weekday(y, 11, Weekday::Thu, 4));
        out.extend(observed(d(y, 12, 25)));
    }
    out
}

#[test]
fn stitched_day_count_on_exchange_calendar() {
    let cal = BusinessCalendar::with_holidays("exchange", exchange_holidays(2004, 2026));
    assert_eq!(cal.days(d(2016, 1, 1)..=d(2016, 12, 31)).len(), 252);
    assert_eq!(cal.days(d(2025, 1, 1)..=d(2025, 12, 31)).len(), 250);

    let end = d(2026, 2, 10);
    let raw = generate(&SyntheticSpec { end, ..SyntheticSpec::default() }).unwrap();
    let series = align_calendar(&raw, &cal, raw.first_date().unwrap()..=end).unwrap();
    let run = run_walk_forward(&series, &EngineConfig::default(), &RunVariant::base(&EngineConfig::default())).unwrap();
    let ledger = run.stitched.unwrap();
    assert_eq!(ledger.len(), cal.days(d(2015, 1, 1)..=end).len());
    assert_eq!(ledger.len(), 2793);
    assert_eq!(ledger[0].date, d(2015, 1, 2));
    assert!(ledger.windows(2).all(|w| w[0].date < w[1].date));
}

// ---------------------------------------------------------------- freezing

#[test]
fn fit_is_deterministic_and_frozen() {
    let h = short_history();
    let cfg = EngineConfig::default();
    let v = RunVariant::base(&cfg);
    let w = generate_windows(h.first_date().unwrap()..=h.last_date().unwrap(), &cfg.window).unwrap()[1];
    let a = fit_window(&h, &w, &cfg, &v).unwrap();
    let b = fit_window(&h, &w, &cfg, &v).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    let before = a.hash();
    run_oos(&h, &w, &a, &cfg, &v).unwrap();
    assert_eq!(before, a.hash());
}

#[test]
fn test_prices_never_leak_into_fit() {
    let h = short_history();
    let cfg = EngineConfig::default();
    let v = RunVariant::base(&cfg);
    let w = generate_windows(h.first_date().unwrap()..=h.last_date().unwrap(), &cfg.window).unwrap()[0];
    let bars: Vec<Bar> = h
        .bars()
        .iter()
        .map(|b| if w.test_range().contains(&b.date) { Bar::flat(b.date, b.close * 3.0) } else { *b })
        .collect();
    let perturbed = PriceSeries::new(bars, "weekdays").unwrap();
    assert_eq!(fit_window(&h, &w, &cfg, &v).unwrap(), fit_window(&perturbed, &w, &cfg, &v).unwrap());
}

#[test]
fn constant_training_prices_are_degenerate() {
    let dates = BusinessCalendar::weekdays().days(d(2004, 12, 1)..=d(2015, 12, 31));
    let flat = PriceSeries::new(dates.into_iter().map(|x| Bar::flat(x, 100.0)).collect(), "weekdays").unwrap();
    let cfg = EngineConfig::default();
    let w = generate_windows(d(2004, 12, 1)..=d(2015, 12, 31), &cfg.window).unwrap()[0];
    let e = fit_window(&flat, &w, &cfg, &RunVariant::base(&cfg)).unwrap_err();
    assert!(matches!(e, WalkForwardError::Signal(SignalError::DegenerateTraining)));
}

#[test]
fn train_moments_match_second_pass() {
    let h = short_history();
    let cfg = EngineConfig::default();
    let w = generate_windows(h.first_date().unwrap()..=h.last_date().unwrap(), &cfg.window).unwrap()[2];
    let fp = fit_window(&h, &w, &cfg, &RunVariant::base(&cfg)).unwrap();

    let train = h.slice(w.train_range());
    let sig = build_signal(&train, &fp.signal, &fp.stats).unwrap();
    let c = train.closes();
    let mut rule = Vec::new();
    let mut raw = Vec::new();
    for t in 1..c.len() {
        let r = c[t] / c[t - 1] - 1.0;
        raw.push(r);
        let prev = &sig.days[t - 1];
        let on = prev.tradeable && prev.p_bull.unwrap() >= 0.52 && prev.slope > 0.0;
        rule.push(if on { r } else { 0.0 });
    }
    let pop = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        (m, (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt())
    };
    let (mu, sigma) = pop(&rule);
    let (mu_u, sigma_u) = pop(&raw);
    assert!((fp.moments.mu - mu).abs() < 1e-15);
    assert!((fp.moments.sigma - sigma).abs() < 1e-15);
    assert!((fp.moments.mu_u - mu_u).abs() < 1e-15);
    assert!((fp.moments.sigma_u - sigma_u).abs() < 1e-15);
}

#[test]
fn filters_run_continuously_into_the_test_slice() {
    let h = short_history();
    let cfg = EngineConfig::default();
    let w = generate_windows(h.first_date().unwrap()..=h.last_date().unwrap(), &cfg.window).unwrap()[3];
    let fp = fit_window(&h, &w, &cfg, &RunVariant::base(&cfg)).unwrap();
    let span = h.slice(w.train_start..=w.test_end);
    let y: Vec<f64> = span.closes().iter().map(|c| c.ln()).collect();
    let continuous = ema_smooth(&y, fp.signal.lambda_ema).unwrap();
    let sig = build_signal(&span, &fp.signal, &fp.stats).unwrap();
    let first_test = span.dates().iter().position(|x| *x >= w.test_start).unwrap();
    assert_eq!(sig.days[first_test].y_tilde, continuous[first_test]);
    let inputs = build_day_inputs(&span, &fp).unwrap();
    let ledger = run_oos(&h, &w, &fp, &cfg, &RunVariant::base(&cfg)).unwrap();
    assert_eq!(ledger[0].p_bull, inputs[first_test].p_bull);
    assert_eq!(ledger[0].regime, Regime::from_p_bull(inputs[first_test - 1].p_bull));
}

// ---------------------------------------------------------------- variants

#[test]
fn ablations_pin_omega_and_reversal_shorts() {
    let h = short_history();
    let cfg = EngineConfig::default();
    let w = generate_windows(h.first_date().unwrap()..=h.last_date().unwrap(), &cfg.window).unwrap()[0];
    let base = RunVariant::base(&cfg);
    let slope = fit_window(&h, &w, &cfg, &RunVariant { ablation: Ablation::SlopeOnly, ..base }).unwrap();
    let mom = fit_window(&h, &w, &cfg, &RunVariant { ablation: Ablation::MomentumOnly, ..base }).unwrap();
    assert_eq!(slope.signal.omega, 1.0);
    assert_eq!(mom.signal.omega, 0.0);

    let rev = run_walk_forward(&h, &cfg, &RunVariant { reversed: true, ..base }).unwrap();
    let ledger = rev.stitched.unwrap();
    assert!(ledger.iter().all(|r| r.target_weight <= 0.0));
    assert!(ledger.iter().any(|r| r.target_weight < 0.0));
}

#[test]
fn selection_grid_picks_from_candidates() {
    let h = short_history();
    let mut cfg = EngineConfig::default();
    cfg.selection = SelectionGrid { lambda_ema: vec![0.9, 0.94, 0.97], omega: vec![0.4, 0.6] };
    let w = generate_windows(h.first_date().unwrap()..=h.last_date().unwrap(), &cfg.window).unwrap()[0];
    let fp = fit_window(&h, &w, &cfg, &RunVariant::base(&cfg)).unwrap();
    assert!(cfg.selection.lambda_ema.contains(&fp.signal.lambda_ema));
    assert!(cfg.selection.omega.contains(&fp.signal.omega));
}

#[test]
fn overlapping_mode_refuses_to_stitch() {
    let h = short_history();
    let mut cfg = EngineConfig::default();
    cfg.window.advance_months = 1;
    let run = run_walk_forward(&h, &cfg, &RunVariant::base(&cfg)).unwrap();
    assert!(run.stitched.is_none());
    assert!(run.windows.len() > 6);
    let slices: Vec<Vec<LedgerRow>> = run.windows.iter().map(|w| w.ledger.clone()).collect();
    assert!(matches!(stitch(&slices), Err(WalkForwardError::OverlapInStitch { .. })));
    assert_eq!(run.slice_summaries().len(), run.windows.len());
}

#[test]
fn adjacent_slices_concatenate() {
    let h = short_history();
    let cfg = EngineConfig::default();
    let run = run_walk_forward(&h, &cfg, &RunVariant::base(&cfg)).unwrap();
    let two = stitch(&[run.windows[0].ledger.clone(), run.windows[1].ledger.clone()]).unwrap();
    assert_eq!(two.len(), run.windows[0].ledger.len() + run.windows[1].ledger.len());
    assert_eq!(two.first().unwrap().date, d(2015, 1, 1));
    assert!(two.last().unwrap().date <= d(2015, 12, 31));
    assert!(run.windows.iter().all(|w| w.ledger.last().unwrap().filled_weight == 0.0));
}

#[test]
fn stress_identity_cell_and_cost_axis() {
    let h = short_history();
    let cfg = EngineConfig::default();
    let grid = StressGrid { latencies: vec![1], ablations: false, ..StressGrid::default() };
    let cells = run_stress_grid(&h, &cfg, &grid).unwrap();
    assert_eq!(cells.len(), 16);
    let base = run_walk_forward(&h, &cfg, &RunVariant::base(&cfg)).unwrap();
    let base_summary = wfbt_core::analytics::perf_summary(&base.stitched.unwrap()).unwrap();
    let unit = cells.iter().find(|c| c.variant.cost_multiplier == 1.0 && c.variant.impact_multiplier == 1.0).unwrap();
    assert_eq!(unit.summary, base_summary);
    for im in [0.5, 1.0, 1.5, 2.0] {
        let axis: Vec<f64> = cells
            .iter()
            .filter(|c| c.variant.impact_multiplier == im)
            .map(|c| c.summary.ann_return)
            .collect();
        assert!(axis.windows(2).all(|p| p[1] <= p[0]));
    }
}

#[test]
fn ledger_prefix_survives_truncation() {
    let h = short_history();
    let mut cfg = EngineConfig::default();
    cfg.flatten_slices = false;
    let v = RunVariant::base(&cfg);
    let full = run_walk_forward(&h, &cfg, &v).unwrap().stitched.unwrap();
    for cut in [h.len() - 1, h.len() - 200, h.len() - 333] {
        let short = run_walk_forward(&h.prefix(cut), &cfg, &v).unwrap().stitched.unwrap();
        assert_eq!(&full[..short.len()], &short[..]);
    }
}
