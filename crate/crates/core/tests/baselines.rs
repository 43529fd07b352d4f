use raca_core::baselines::{ra_powers, ra_rate, solve_ca, solve_mimo, solve_ra, RaSettings};
use raca_core::channel::generate_channels;
use raca_core::matops::{c64, CMat, ComplexMatrix};
use raca_core::metrics::actual_powers;
use raca_core::svdwf::svd_link;
use raca_core::sysmodel::{BeamformerSolution, SystemConfig};

fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let mut m = CMat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut(a.shape(), b.shape()).copy_from(b);
    m
}

#[test]
fn ca_on_copied_band_is_joint_block_waterfill() {
    let cfg = SystemConfig { p_ua_fl: 0.01, p_ur_fh: 0.005, p_r: 0.005, ..Default::default() };
    for seed in 0..10 {
        let mut ch = generate_channels(&cfg, 40 + seed).unwrap();
        ch.h_ua_fh = ch.h_ua_fl.clone();
        let (rate, _) = solve_ca(&ch, &cfg).unwrap();
        let joint = svd_link(&block_diag(&ch.h_ua_fl, &ch.h_ua_fl), 0.02, cfg.sigma_a2, 2 * cfg.n_s, true, 1e-10).unwrap();
        assert!((rate - joint.rate_bits).abs() <= 1e-9 * rate, "{rate} vs {}", joint.rate_bits);
    }
}

#[test]
fn ra_without_relay_is_direct_svdwf() {
    let cfg = SystemConfig::default();
    let ch = generate_channels(&cfg, 8).unwrap();
    let settings = RaSettings { force_zero_relay: true, t_max: 200, ..Default::default() };
    let (rate, sol, _) = solve_ra(&ch, &cfg, &settings).unwrap();
    let direct = svd_link(&ch.h_ua_fl, cfg.p_ua_fl + cfg.p_ur_fh, cfg.sigma_a2, cfg.n_s, true, 1e-10).unwrap();
    assert!((rate - direct.rate_bits).abs() <= 1e-6, "{rate} vs {}", direct.rate_bits);
    assert_eq!(ra_powers(&ch, &cfg, &sol.w_u, &sol.psi)[1], 0.0);
}

#[test]
fn ra_relay_only_respects_cut_set() {
    let cfg = SystemConfig::default();
    for seed in 0..3 {
        let mut ch = generate_channels(&cfg, 60 + seed).unwrap();
        ch.h_ua_fl = ComplexMatrix::zeros(cfg.n_a, cfg.n_u);
        let settings = RaSettings { t_max: 300, ..Default::default() };
        let (rate, sol, _) = solve_ra(&ch, &cfg, &settings).unwrap();
        assert!((ra_rate(&ch, &cfg, &sol.w_u, &sol.psi).unwrap() - rate).abs() <= 1e-9 * rate.max(1.0));
        let first = svd_link(&ch.h_ur_fl, cfg.p_ua_fl + cfg.p_ur_fh, cfg.sigma_r2, cfg.n_s, true, 1e-10).unwrap();
        let second = svd_link(&ch.h_ra_fl, cfg.p_r, cfg.sigma_a2, cfg.n_s, true, 1e-10).unwrap();
        assert!(rate > 0.0);
        assert!(rate <= first.rate_bits.min(second.rate_bits) + 1e-9);
        let used = ra_powers(&ch, &cfg, &sol.w_u, &sol.psi);
        assert!(used[0] <= (cfg.p_ua_fl + cfg.p_ur_fh) * (1.0 + 1e-9) && used[1] <= cfg.p_r * (1.0 + 1e-9));
    }
}

#[test]
fn mimo_rank_one_and_high_snr_slope() {
    let cfg = SystemConfig::default();
    let mut ch = generate_channels(&cfg, 9).unwrap();
    let u = CMat::from_fn(cfg.n_a, 1, |i, _| c64::new(1e-4, 1e-5 * i as f64));
    let v = CMat::from_fn(1, cfg.n_u, |_, j| c64::new(0.5, j as f64));
    ch.h_ua_fl = ComplexMatrix::new(u * v).unwrap();
    let (_, link) = solve_mimo(&ch, &cfg).unwrap();
    assert_eq!(link.allocation.power[1], 0.0);

    // full rank: each 3 dB of SNR buys about one bit per stream
    let ch = generate_channels(&cfg, 10).unwrap();
    let at = |noise_dbm: f64| solve_mimo(&ch, &cfg.clone().with_noise_dbm(noise_dbm)).unwrap().0;
    let slope = (at(-160.0) - at(-150.0)) / (10.0 * std::f64::consts::LOG10_2.recip() / 10.0);
    assert!((slope - cfg.n_s as f64).abs() <= 0.05, "{slope}");
}

#[test]
fn zero_solution_uses_no_power() {
    let cfg = SystemConfig::default();
    let ch = generate_channels(&cfg, 11).unwrap();
    let sol = BeamformerSolution::zeros(&cfg);
    assert_eq!(actual_powers(&ch, &sol, &cfg), [0.0; 3]);
}
