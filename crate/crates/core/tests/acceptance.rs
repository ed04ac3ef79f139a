//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! Runs without the libtest harness so the lines are always printed:
//! `cargo test -p hbt-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use hbt_core::config::RunConfig;
use hbt_core::correlator::{
    correlate_times, cross_correlate, cross_correlate_chunked, CorrelationConfig, CorrelationHistogram,
};
use hbt_core::estimator::{bin_attenuation, estimate_range, fit_g2, snr_measure, snr_predict, FitOptions, FitResult};
use hbt_core::photonsim::{
    delay_events, simulate_ranging_scenario, DetectorSpec, EventStream, Origin, ScenarioConfig,
};
use hbt_core::quantities::{
    coherence_time_from_linewidth, delay_from_range, g2_model, linewidth_from_wavelength_spread,
    photon_rate_from_power, range_from_delay, BunchingPeak, Hertz, Rate, SourceSpec, Watts,
};
use hbt_core::tagio::{
    decode_tags, encode_tags, parse_text_tags, quantize_stream, write_text_tags_to, Quantization, HEADER_LEN,
};
use hbt_core::{normalize_g2, Medium, Meters, Seconds, Tick};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Independent values for the unit conversions.
const C: f64 = 299_792_458.0;
const H: f64 = 6.626_070_15e-34;

fn within(what: &str, got: f64, want: f64, tol: f64) -> Result<String, String> {
    let msg = format!("{what} = {got:.6} (want {want} ± {tol})");
    if (got - want).abs() <= tol {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fit(h: &CorrelationHistogram) -> Result<FitResult<f64>, String> {
    let series = normalize_g2::<f64>(h).map_err(|e| e.to_string())?;
    let f = fit_g2(&series, &FitOptions::default()).map_err(|e| e.to_string())?;
    if !f.converged {
        return Err(format!("fit did not converge after {} iterations", f.iterations));
    }
    Ok(f)
}

/// Ideal 50:50 two-detector setup at zero distance.
fn ideal_pair(coherence_time: f64, rate_per_channel: f64, duration: f64, seed: u64) -> ScenarioConfig {
    let source = SourceSpec::new(Meters(518e-9), Seconds(coherence_time), Rate(2.0 * rate_per_channel)).unwrap();
    let mut cfg = ScenarioConfig::new(source, Meters(0.0), Seconds(duration), seed);
    cfg.split_ref = 0.5;
    cfg.split_probe = 0.5;
    cfg.detector_ref = DetectorSpec::ideal();
    cfg.detector_probe = DetectorSpec::ideal();
    cfg
}

fn join(parts: Vec<Outcome>) -> Outcome {
    let failed = parts.iter().any(Result::is_err);
    let text = parts.into_iter().map(|p| p.unwrap_or_else(|e| format!("[{e}]"))).collect::<Vec<_>>().join("; ");
    if failed {
        Err(text)
    } else {
        Ok(text)
    }
}

fn criterion_1() -> Outcome {
    let tc = 23.2e-9;
    let cfg = ideal_pair(tc, 2e5, 10.0, 101);
    let out = simulate_ranging_scenario(&cfg).map_err(|e| e.to_string())?;
    let bins = CorrelationConfig::symmetric(Tick(1000), 500).unwrap();
    let f = fit(&cross_correlate(&out.reference, &out.probe, &bins).unwrap())?;
    join(vec![
        within("g2(0)", f.g2_at_delay(), 2.0, 0.05),
        within("tau_c/23.2ns", f.coherence_time / tc, 1.0, 0.05),
    ])
}

fn criterion_2() -> Outcome {
    let preset = RunConfig::preset("short-range").unwrap();
    let medium = Medium::new(preset.scenario.refractive_index).unwrap();
    let bins = preset.correlation.config().unwrap();
    let scenario = preset.scenario.to_scenario().unwrap();
    let truth = scenario.distance.0;
    let out = simulate_ranging_scenario(&scenario).map_err(|e| e.to_string())?;
    let f = fit(&cross_correlate(&out.reference, &out.probe, &bins).unwrap())?;
    let range = estimate_range(&f, &medium).map_err(|e| e.to_string())?;
    let chi2 = if (0.8..=1.3).contains(&f.reduced_chi2) {
        Ok(format!("reduced chi2 = {:.3}", f.reduced_chi2))
    } else {
        Err(format!("reduced chi2 = {:.3} outside [0.8, 1.3]", f.reduced_chi2))
    };

    // placement sweep: common random numbers, only the distance changes
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..10 {
        let mut s = scenario.clone();
        s.distance = Meters(0.01 * k as f64);
        s.duration = Seconds(0.3);
        let o = simulate_ranging_scenario(&s).map_err(|e| e.to_string())?;
        let fk = fit(&cross_correlate(&o.reference, &o.probe, &bins).unwrap())?;
        xs.push(s.distance.0);
        ys.push(estimate_range(&fk, &medium).map_err(|e| e.to_string())?.range.0);
    }
    let (slope, _) = linear_fit(&xs, &ys);
    join(vec![
        within("d [mm]", range.range.0 * 1e3, truth * 1e3, 1.5).map(|m| format!("{m}, sigma {:.2} mm", range.sigma.0 * 1e3)),
        chi2,
        within("sweep slope", slope, 1.0, 0.02),
    ])
}

fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn criterion_3() -> Outcome {
    let mut parts = Vec::new();
    for name in ["long-range-1km", "long-range-2km"] {
        let preset = RunConfig::preset(name).unwrap();
        let scenario = preset.scenario.to_scenario().unwrap();
        let out = simulate_ranging_scenario(&scenario).map_err(|e| e.to_string())?;
        let h = cross_correlate(&out.reference, &out.probe, &preset.correlation.config().unwrap()).unwrap();
        let f = fit(&h)?;
        let range = estimate_range(&f, &Medium::new(preset.scenario.refractive_index).unwrap()).unwrap();
        parts.push(within(&format!("{name} d [m]"), range.range.0, scenario.distance.0, 0.05));
        parts.push(within(&format!("{name} peak g2"), f.peak_bin_g2(), 1.59, 0.03));
    }
    join(parts)
}

fn criterion_4() -> Outcome {
    let tc = 23.2e-9;
    let w = 2000;
    let cfg = ideal_pair(tc, 1e6, 5.0, 104);
    let out = simulate_ranging_scenario(&cfg).map_err(|e| e.to_string())?;
    // bin 100 is centred on zero delay
    let bins = CorrelationConfig::new(Tick(w), Tick(-w / 2 - 100 * w), Tick(w / 2 + 100 * w)).unwrap();
    let h = cross_correlate(&out.reference, &out.probe, &bins).unwrap();
    let series = normalize_g2::<f64>(&h).unwrap();
    let f = fit(&h)?;
    let central = series.points[100];
    if central.tau.abs() > 1e-15 {
        return Err(format!("central bin at {} s", central.tau));
    }
    let measured = central.g2 - f.baseline;
    let expected = bin_attenuation(w as f64 * 1e-12, tc);
    join(vec![
        within("analytic factor", expected, 0.958, 0.0005),
        within("measured/true amplitude", measured / out.truth.expected_amplitude, 0.958, 0.03),
    ])
}

fn truncate(s: &EventStream, dt: f64) -> EventStream {
    let end = Seconds(dt).to_ticks().unwrap();
    let k = s.times().partition_point(|&t| t <= end);
    EventStream::new(s.channel, s.times()[..k].to_vec(), Seconds(dt), Origin::Simulated).unwrap()
}

fn criterion_5() -> Outcome {
    let example = snr_predict(1e7, 0.6, 23e-9, 1e-3).unwrap();
    let exact = if format!("{example:.1}") == "28.8" {
        Ok(format!("predicted {example:.3}"))
    } else {
        Err(format!("predicted {example} != 28.8"))
    };

    // reference 1e7/s pure signal, probe 1e7/s with 60 % signal
    let tc = 23e-9;
    let source = SourceSpec::new(Meters(518e-9), Seconds(tc), Rate(2e7)).unwrap();
    let mut cfg = ScenarioConfig::new(source, Meters(0.0), Seconds(0.1), 105);
    cfg.split_ref = 0.5;
    cfg.split_probe = 0.5;
    cfg.probe_round_trip_transmission = 0.6;
    cfg.ambient_rate_probe = 4e6;
    cfg.detector_ref = DetectorSpec::ideal();
    cfg.detector_probe = DetectorSpec::ideal();
    let out = simulate_ranging_scenario(&cfg).map_err(|e| e.to_string())?;
    let bins = CorrelationConfig::symmetric(Tick(11_500), 200).unwrap();

    let mut log_t = Vec::new();
    let mut log_snr = Vec::new();
    let mut worst: f64 = 0.0;
    for ms in [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        let dt = ms * 1e-3;
        let (a, b) = (truncate(&out.reference, dt), truncate(&out.probe, dt));
        let h = cross_correlate(&a, &b, &bins).unwrap();
        let series = normalize_g2::<f64>(&h).unwrap();
        let f = fit(&h)?;
        let rate = ((a.len() * b.len()) as f64).sqrt() / dt;
        let r = snr_measure(&series, &f, rate, dt).map_err(|e| e.to_string())?;
        worst = worst.max(r.measured_snr / r.predicted_snr);
        log_t.push(dt.ln());
        log_snr.push(r.measured_snr.ln());
    }
    let (slope, _) = linear_fit(&log_t, &log_snr);
    let bound = if worst <= 1.2 {
        Ok(format!("max measured/predicted = {worst:.3}"))
    } else {
        Err(format!("measured/predicted reaches {worst:.3} > 1.2"))
    };
    join(vec![exact, within("log-log slope", slope, 0.5, 0.1), bound])
}

fn brute_force(a: &[Tick], b: &[Tick], cfg: &CorrelationConfig) -> Vec<u64> {
    let mut counts = vec![0u64; cfg.n_bins()];
    let (s, e, w) = (cfg.start().0, cfg.end().0, cfg.bin_width().0);
    for ta in a {
        for tb in b {
            let dt = tb.0 - ta.0;
            if dt >= s && dt < e {
                counts[((dt - s) / w) as usize] += 1;
            }
        }
    }
    counts
}

/// Sorted times on a coarse grid so that ties and exact bin edges are common.
fn grid_times(rng: &mut ChaCha8Rng, n: usize, grid: i64, span: i64) -> Vec<Tick> {
    let mut t: Vec<Tick> = (0..n).map(|_| Tick(rng.random_range(0..span) * grid)).collect();
    t.sort_unstable();
    t
}

fn stream(channel: u8, times: Vec<Tick>) -> EventStream {
    let end = times.last().map_or(0, |t| t.0);
    EventStream::new(channel, times, Seconds(end as f64 * 1e-12), Origin::Simulated).unwrap()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let cases = 120;
    let mut largest = 0;
    for case in 0..cases {
        // every tenth case at the full 10^4 events per stream
        let max_n = if case % 10 == 0 { 10_000 } else { 2_000 };
        let (na, nb) = (rng.random_range(0..=max_n), rng.random_range(0..=max_n));
        let grid = rng.random_range(1..=25);
        let span = rng.random_range(1..=(200 * max_n as i64));
        let a = grid_times(&mut rng, na, grid, span);
        let b = grid_times(&mut rng, nb, grid, span);
        let w = rng.random_range(1..=60);
        let first = rng.random_range(-40..=40);
        let n_bins = rng.random_range(1..=80);
        let cfg = CorrelationConfig::new(Tick(w), Tick(first * w), Tick((first + n_bins) * w)).unwrap();
        let h = correlate_times(&a, &b, &cfg, Tick(span * grid)).unwrap();
        if h.counts != brute_force(&a, &b, &cfg) {
            return Err(format!("case {case}: histogram differs from brute force"));
        }
        let (sa, sb) = (stream(0, a), stream(1, b));
        let plain = cross_correlate(&sa, &sb, &cfg).unwrap();
        for chunk in [1, rng.random_range(1..=span * grid + 1), rng.random_range(1..=1000), i64::MAX / 4] {
            if cross_correlate_chunked(&sa, &sb, &cfg, Tick(chunk)).unwrap() != plain {
                return Err(format!("case {case}: chunk {chunk} differs"));
            }
        }
        largest = largest.max(na.max(nb));
    }
    Ok(format!("{cases} randomized cases up to {largest} events: exact match, chunked identical"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let cases = 100;
    for case in 0..cases {
        let res = [1u64, 2, 7, 1000, 2000][rng.random_range(0..5)];
        let channels = rng.random_range(1..=4);
        let streams: Vec<EventStream> = (0..channels)
            .map(|c| {
                let n = rng.random_range(0..2000);
                let times = grid_times(&mut rng, n, res as i64, 3000);
                stream(c as u8, times)
            })
            .collect();
        let same = |back: &[EventStream]| {
            back.len() == streams.len() && back.iter().zip(&streams).all(|(x, y)| x.times() == y.times())
        };

        let bytes = encode_tags(&streams, res, Quantization::Exact).map_err(|e| e.to_string())?;
        let back = decode_tags(&bytes).map_err(|e| e.to_string())?;
        if !same(&back.streams) {
            return Err(format!("case {case}: binary round trip differs"));
        }
        let mut text = Vec::new();
        write_text_tags_to(&back.streams, res, Quantization::Exact, &mut text).unwrap();
        let from_text = parse_text_tags(text.as_slice()).map_err(|e| e.to_string())?;
        if !same(&from_text.streams) {
            return Err(format!("case {case}: text round trip differs"));
        }
        if encode_tags(&from_text.streams, res, Quantization::Exact).unwrap() != bytes {
            return Err(format!("case {case}: binary -> text -> binary not bit-identical"));
        }

        // off-grid times through a rounded file land on the quantized grid
        let raw = stream(0, grid_times(&mut rng, 500, 1, 1_000_000));
        let rounded = decode_tags(&encode_tags(std::slice::from_ref(&raw), res, Quantization::Rounded).unwrap()).unwrap();
        if rounded.streams[0].times() != quantize_stream(&raw, res, Quantization::Rounded).unwrap().times() {
            return Err(format!("case {case}: rounded file differs from quantized stream"));
        }

        for byte in 0..HEADER_LEN {
            for bit in 0..8 {
                let mut corrupt = bytes.clone();
                corrupt[byte] ^= 1 << bit;
                if decode_tags(&corrupt).is_ok() {
                    return Err(format!("case {case}: header flip byte {byte} bit {bit} accepted"));
                }
            }
        }
    }
    Ok(format!(
        "{cases} randomized files: binary and text round trips exact, {} header bit flips all rejected",
        cases * HEADER_LEN * 8
    ))
}

fn criterion_8() -> Outcome {
    let lambda = Meters(518e-9);
    let vacuum = Medium::vacuum();
    let fit_with_delay = |delay: f64, sigma: f64| FitResult {
        baseline: 1.0,
        amplitude: 1.0,
        delay,
        coherence_time: 1e-9,
        baseline_sigma: 0.0,
        amplitude_sigma: 0.0,
        delay_sigma: sigma,
        coherence_time_sigma: 0.0,
        chi2: 0.0,
        reduced_chi2: 1.0,
        n_points: 100,
        n_free_params: 4,
        bin_width: 40e-12,
        converged: true,
        iterations: 1,
    };
    let r0 = estimate_range(&fit_with_delay(0.606e-9, 0.008e-9), &vacuum).unwrap();
    let r1 = estimate_range(&fit_with_delay(6439.73e-9, 0.13e-9), &vacuum).unwrap();
    let shifted = delay_events(&stream(0, vec![Tick(0), Tick(1000)]), Seconds(6439.7e-9)).unwrap();
    let peak = |a: f64| BunchingPeak {
        amplitude: a,
        ..BunchingPeak::thermal(1e-9)
    };
    // (what, value, independent oracle, quoted value, half a unit of its last digit)
    let checks = [
        (
            "tau_c(43 MHz) [ns]",
            coherence_time_from_linewidth(Hertz(43e6)).unwrap().0 * 1e9,
            1e9 / 43e6,
            23.26,
            0.005,
        ),
        ("tau_c(1 GHz) [ns]", coherence_time_from_linewidth(Hertz(1e9)).unwrap().0 * 1e9, 1.0, 1.0, 1e-12),
        (
            "df(1.79 pm) [GHz]",
            linewidth_from_wavelength_spread(lambda, Meters(1.79e-12)).unwrap().0 * 1e-9,
            C * 1.79e-12 / (518e-9 * 518e-9) * 1e-9,
            2.00,
            0.005,
        ),
        (
            "df(3.85e-5 nm) [MHz]",
            linewidth_from_wavelength_spread(lambda, Meters(3.85e-14)).unwrap().0 * 1e-6,
            C * 3.85e-14 / (518e-9 * 518e-9) * 1e-6,
            43.0,
            0.05,
        ),
        (
            "R(12.5 uW) [1e13/s]",
            photon_rate_from_power(Watts(12.5e-6), lambda).unwrap().0 * 1e-13,
            12.5e-6 * 518e-9 / (H * C) * 1e-13,
            3.26,
            0.02 * 3.26,
        ),
        (
            "R(3.835e-19 W) [1/s]",
            photon_rate_from_power(Watts(3.835e-19), lambda).unwrap().0,
            3.835e-19 * 518e-9 / (H * C),
            1.0,
            0.005,
        ),
        ("d(0.606 ns) [mm]", range_from_delay(Seconds(0.606e-9), &vacuum).0 * 1e3, C * 0.606e-9 / 2.0 * 1e3, 90.8, 0.05),
        ("tau0(965.29 m) [ns]", delay_from_range(Meters(965.29), &vacuum).0 * 1e9, 2.0 * 965.29 / C * 1e9, 6439.7, 0.05),
        ("shifted ticks", (shifted.times()[0].0) as f64, 6_439_700.0, 6_439_700.0, 0.0),
        ("g2(0)", g2_model(Seconds(0.0), &peak(1.0)).unwrap(), 2.0, 2.0, 1e-12),
        (
            "g2(tau_c/2)",
            g2_model(Seconds(0.5e-9), &peak(1.0)).unwrap(),
            1.0 + (-1.0f64).exp(),
            1.3679,
            5e-5,
        ),
        ("g2(0), A=0.6", g2_model(Seconds(0.0), &peak(0.6)).unwrap(), 1.6, 1.6, 1e-12),
        ("range(0.606 ns) [mm]", r0.range.0 * 1e3, C * 0.606e-9 / 2.0 * 1e3, 90.8, 0.05),
        ("sigma(0.008 ns) [mm]", r0.sigma.0 * 1e3, C * 0.008e-9 / 2.0 * 1e3, 1.2, 0.05),
        ("range(6439.73 ns) [m]", r1.range.0, C * 6439.73e-9 / 2.0, 965.29, 0.005),
        ("sigma(0.13 ns) [m]", r1.sigma.0, C * 0.13e-9 / 2.0, 0.02, 0.005),
        ("bin attenuation 2 ns", bin_attenuation(2e-9, 23.2e-9), 23.2 / 2.0 * (1.0 - (-2.0f64 / 23.2).exp()), 0.958, 0.0005),
        ("snr example", snr_predict(1e7, 0.6, 23e-9, 1e-3).unwrap(), 1e7 * 0.6 * (23e-9f64 * 1e-3).sqrt(), 28.8, 0.05),
    ];
    let mut failures = Vec::new();
    for (what, got, oracle, quoted, tol) in checks {
        let rel = ((got - oracle) / oracle.abs().max(1e-300)).abs();
        if rel > 1e-9 {
            failures.push(format!("{what}: {got} disagrees with oracle {oracle}"));
        }
        if (got - quoted).abs() > tol {
            failures.push(format!("{what}: {got} not within {tol} of {quoted}"));
        }
    }
    if failures.is_empty() {
        Ok(format!("{} example values reproduced", checks.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("ideal thermal ground truth", criterion_1),
        ("short-range ranging and placement sweep", criterion_2),
        ("long-range ranging at 1 km and 2 km", criterion_3),
        ("bin washout", criterion_4),
        ("SNR prediction and scaling", criterion_5),
        ("correlator oracle", criterion_6),
        ("tag file round trips and header fuzz", criterion_7),
        ("unit conversions", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} [{secs:.1} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail} [{secs:.1} s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
