use gridstor::{parse_network, read_profiles, write_network, write_profiles};
use gridstor_core::{
    scale_pv, synth_profiles, Bus, BusId, DaySpec, Line, Network, Phase, PhaseSet, PhaseTriple, PvScaling, SeasonShape,
    Source, SynthParams, TimeGrid,
};
use proptest::prelude::*;

fn phase_set(mask: u8) -> PhaseSet {
    Phase::ALL.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).fold(PhaseSet::EMPTY, |s, (_, p)| s.with(*p))
}

fn ohms() -> impl Strategy<Value = f64> {
    // awkward decimals on purpose: the writer must round-trip every bit
    (1e-4f64..2.0).prop_map(|x| x / 3.0)
}

prop_compose! {
    fn feeder()(n in 2usize..12)(
        parents in proptest::collection::vec(any::<proptest::sample::Index>(), n - 1),
        masks in proptest::collection::vec((1u8..8, 0u8..8, 0u8..8, any::<bool>()), n),
        imp in proptest::collection::vec(proptest::array::uniform6(ohms()), n - 1),
        v in (220.0f64..240.0, 1.0f64..20.0, 1.0f64..20.0),
    ) -> Network {
        let ids: Vec<BusId> = (0..masks.len() as BusId).map(|i| 10 + 7 * i).collect();
        let buses = ids
            .iter()
            .zip(&masks)
            .map(|(&id, &(ph, load, pv, ess))| {
                let phases = phase_set(ph);
                let keep = |m: u8| phase_set(m & ph);
                Bus { id, phases, load: keep(load), pv: keep(pv), ess_candidate: ess }
            })
            .collect();
        let lines = parents
            .iter()
            .zip(&imp)
            .enumerate()
            .map(|(k, (p, z))| Line {
                from: ids[p.index(k + 1)],
                to: ids[k + 1],
                resistance: PhaseTriple::new(z[0], z[1], z[2]),
                reactance: PhaseTriple::new(z[3], z[4], z[5]),
            })
            .collect();
        let source = Source { bus: ids[0], v_sub: v.0, v_min: v.0 - v.1, v_max: v.0 + v.2, base_voltage: 230.0 };
        Network::new(buses, lines, source).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn feeder_parse_write_parse(net in feeder()) {
        let text = write_network(&net);
        let back = parse_network(&text).unwrap();
        prop_assert_eq!(back.buses(), net.buses());
        prop_assert_eq!(back.lines(), net.lines());
        prop_assert_eq!(back.source(), net.source());
        prop_assert_eq!(write_network(&back), text);
    }

    #[test]
    fn profiles_save_load_keep_annual_energy(
        net in feeder(),
        seed in any::<u64>(),
        weights in proptest::collection::vec(1.0f64..120.0, 1..4),
        alpha in 0.1f64..5.0,
    ) {
        let total: f64 = weights.iter().sum();
        let days = weights.iter().enumerate().map(|(i, &w)| DaySpec::new(&format!("d{i}"), "summer", 365.0 * w / total)).collect();
        let grid = TimeGrid::new(24, 1.0, days).unwrap();
        let params = SynthParams {
            pv_rating_kw: 4.0,
            load_power_factor: 0.95,
            noise: 0.2,
            seasons: vec![SeasonShape {
                season: "summer".into(),
                peak_load_kw: 2.0,
                base_load_kw: 0.5,
                peak_hour: 19,
                pv_peak_fraction: 1.0,
                daylight_start: 6,
                daylight_end: 20,
            }],
        };
        let set = scale_pv(&synth_profiles(seed, &net, &grid, &params).unwrap(), PvScaling::new(alpha).unwrap());
        let back = read_profiles(&write_profiles(&set, &grid), &net, &grid).unwrap();
        let (l0, p0) = set.annual_energy_kwh(&grid);
        let (l1, p1) = back.annual_energy_kwh(&grid);
        prop_assert!((l0 - l1).abs() <= 1e-9 * l0.max(1.0), "load {} vs {}", l0, l1);
        prop_assert!((p0 - p1).abs() <= 1e-9 * p0.max(1.0), "pv {} vs {}", p0, p1);
        prop_assert!(set.records().eq(back.records()));
    }
}
