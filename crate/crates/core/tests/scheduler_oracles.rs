use loraswitch::profiler::{ImportanceProfile, Metric, ProfileSource};
use loraswitch::scheduler::{
    build_schedule, mixing_ratio, schedule_draws, switch_coefficient, Choice, Mode, SwitchSchedule,
};
use proptest::prelude::*;

fn flat_profile(id: &str, delta: f64, t: usize) -> ImportanceProfile {
    ImportanceProfile {
        adapter_id: id.into(),
        metric: Metric::Freq2,
        total_steps: t,
        seed: 0,
        source: ProfileSource::Toy,
        deltas: vec![delta; t],
    }
}

/// Distribution of the number of successes of independent Bernoulli(p_i).
fn bernoulli_count_distribution(ps: &[f64]) -> Vec<f64> {
    let mut dist = vec![1.0];
    for &p in ps {
        let mut next = vec![0.0; dist.len() + 1];
        for (k, q) in dist.iter().enumerate() {
            next[k] += q * (1.0 - p);
            next[k + 1] += q * p;
        }
        dist = next;
    }
    dist
}

#[test]
fn enumerated_draw_grids_match_product_bernoulli() {
    const GRID: [f64; 2] = [0.25, 0.75];
    const ETAS: [f64; 3] = [0.0, 0.5, 1.0];
    for t in 1..=4usize {
        let combos = 3usize.pow(t as u32);
        for e in 0..combos {
            let etas: Vec<f64> = (0..t)
                .map(|i| ETAS[(e / 3usize.pow(i as u32)) % 3])
                .collect();
            let mut counts = vec![0u32; t + 1];
            for g in 0..(1usize << t) {
                let draws: Vec<f64> = (0..t).map(|i| GRID[(g >> i) & 1]).collect();
                let s = SwitchSchedule::from_parts(Mode::Dynamic, 0, etas.clone(), draws).unwrap();
                counts[s.content_count()] += 1;
            }
            let empirical: Vec<f64> = counts
                .iter()
                .map(|&c| c as f64 / (1u32 << t) as f64)
                .collect();
            assert_eq!(
                empirical,
                bernoulli_count_distribution(&etas),
                "etas {etas:?}"
            );
        }
    }
}

#[test]
fn expected_content_count() {
    let etas = vec![1.0, 0.75, 0.5, 0.25, 0.0];
    let n = 10_000u64;
    let total: usize = (0..n)
        .map(|seed| {
            SwitchSchedule::from_etas(Mode::Dynamic, seed, etas.clone())
                .unwrap()
                .content_count()
        })
        .sum();
    let mean = total as f64 / n as f64;
    assert!((mean - 2.5).abs() <= 0.05, "mean content count {mean}");
}

#[test]
fn draws_are_uniform_and_seeded() {
    let a = schedule_draws(5, 2000);
    assert_eq!(a, schedule_draws(5, 2000));
    assert_ne!(a, schedule_draws(6, 2000));
    assert!(a.iter().all(|d| (0.0..1.0).contains(d)));
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    assert!((mean - 0.5).abs() < 0.03);
}

#[test]
fn endpoint_forcing() {
    let t = 50;
    let c = ImportanceProfile {
        deltas: (1..=t).map(|i| 1.0 + i as f64).collect(),
        ..flat_profile("content", 0.0, t)
    };
    let s = ImportanceProfile {
        deltas: (1..=t).map(|i| 100.0 / i as f64).collect(),
        ..flat_profile("style", 0.0, t)
    };
    let sched = build_schedule(Mode::Dynamic, t, Some((&c, &s)), 3).unwrap();
    assert_eq!(sched.etas[t - 1], 0.0);
    assert_eq!(sched.choice(t), Choice::Style);
    let x1 = mixing_ratio(c.delta(1), s.delta(1), 1, t).unwrap();
    let expected = s.delta(1) / (s.delta(1) + c.delta(1) * (t as f64 - 1.0));
    assert!((x1 - expected).abs() < 1e-15);
}

proptest! {
    #[test]
    fn eta_strictly_decreasing(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        prop_assume!(a != b);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-6);
        prop_assert!(switch_coefficient(lo).unwrap() > switch_coefficient(hi).unwrap());
    }

    #[test]
    fn more_style_importance_means_less_content(
        dc in 0.1f64..10.0,
        ds in 0.1f64..10.0,
        factor in 1.1f64..3.0,
        total in 2usize..60,
        frac in 0.0f64..1.0,
    ) {
        let t = 1 + ((total - 1) as f64 * frac) as usize;
        prop_assume!(t < total);
        let x1 = mixing_ratio(dc, ds, t, total).unwrap();
        let x2 = mixing_ratio(dc, ds * factor, t, total).unwrap();
        prop_assert!(x2 > x1);
        prop_assert!(switch_coefficient(x2).unwrap() < switch_coefficient(x1).unwrap());
    }

    #[test]
    fn equal_deltas_reduce_to_fixed(delta in 1e-6f64..1e6, total in 2usize..80, seed in any::<u64>()) {
        let c = flat_profile("content", delta, total);
        let s = flat_profile("style", delta, total);
        let dynamic = build_schedule(Mode::Dynamic, total, Some((&c, &s)), seed).unwrap();
        let fixed = build_schedule(Mode::Fixed, total, None, seed).unwrap();
        prop_assert_eq!(&dynamic.etas, &fixed.etas);
        prop_assert_eq!(&dynamic.draws, &fixed.draws);
        prop_assert_eq!(&dynamic.choices, &fixed.choices);
        prop_assert_eq!(dynamic.to_json().replace("dynamic", "fixed"), fixed.to_json());
    }

    #[test]
    fn schedules_are_deterministic_and_round_trip(
        deltas in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 2..40),
        seed in any::<u64>(),
    ) {
        let t = deltas.len();
        let c = ImportanceProfile { deltas: deltas.iter().map(|d| d.0).collect(), ..flat_profile("content", 0.0, t) };
        let s = ImportanceProfile { deltas: deltas.iter().map(|d| d.1).collect(), ..flat_profile("style", 0.0, t) };
        let a = build_schedule(Mode::Dynamic, t, Some((&c, &s)), seed).unwrap();
        prop_assert_eq!(&a, &build_schedule(Mode::Dynamic, t, Some((&c, &s)), seed).unwrap());
        prop_assert_eq!(&SwitchSchedule::from_json(&a.to_json()).unwrap(), &a);
        prop_assert!(a.etas.iter().all(|e| (0.0..=1.0).contains(e)));
    }
}
