import itertools

import numpy as np
import pytest

from otfspred.config import SimConfig, desk_profile
from otfspred.estimation import (DegenerateSupportError, MeasurementSystem,
                                 bsomp, build_sensing, coeffs_to_channel,
                                 form_measurements, genie_ls, iterative_refine,
                                 lmmse_detect, sg_smooth, sg_smooth_adaptive,
                                 somp, stack_channel, unstack_channel, vbl_somp,
                                 FrameTruth)
from otfspred.modem import qpsk_random
from otfspred.otfs import (apply_channel, build_effective_channel,
                           eff_channel_from_gains, otfs_demodulate)
from otfspred.pilots import assemble_frame, build_pattern, pre_transform
from otfspred.bases import build_basis_set

from conftest import synth_bem_exact


def transmit(config, pattern, realization, rng, sigma2=0.0, payload=None):
    """One uplink frame through the time-domain simulator."""
    if payload is None:
        payload = np.stack([qpsk_random(rng, pattern.n_data)
                            for _ in range(config.N_u)])
    u = np.stack([assemble_frame(pattern, payload[ui], ui).u
                  for ui in range(config.N_u)])
    s_time = np.fft.ifft(u, axis=-1, norm="ortho")
    noise_rng = rng if sigma2 > 0 else None
    y_t = apply_channel(s_time, realization, 0, sigma2, noise_rng)
    return otfs_demodulate(y_t, config.M, config.N), payload


class TestMeasurements:
    def test_unitary_shift_identity(self):
        # the centre-offset transform composed with any other offset is a
        # pure cyclic shift (dense check on a small grid)
        m, n = 8, 4
        mn = m * n
        f_n = np.fft.fft(np.eye(n)) / np.sqrt(n)
        b_r = np.kron(f_n, np.eye(m))
        f_mn = np.fft.fft(np.eye(mn)) / np.sqrt(mn)
        q = 3
        offs = np.arange(q) - (q - 1) // 2
        u_mats = [b_r @ np.diag(np.exp(2j * np.pi * d * np.arange(mn) / mn))
                  @ np.conj(f_mn.T) for d in offs]
        pi = np.roll(np.eye(mn), 1, axis=0)
        center = (q - 1) // 2
        for qi, d in enumerate(offs):
            shift = np.linalg.matrix_power(pi, int(d) % mn)
            err = np.linalg.norm(np.conj(u_mats[center].T) @ u_mats[qi] - shift)
            assert err < 1e-10

    def test_linearization_contract(self, tiny_config):
        rng = np.random.default_rng(0)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            tiny_config, [(1, 4), (2, 4)], rng)
        y_dd, _ = transmit(tiny_config, pattern, real, rng)
        system = form_measurements(y_dd, pattern, sensing)
        assert system.contract_residual(s_bar) < 1e-8

    def test_zero_input_gives_zero_measurements(self, tiny_config):
        rng = np.random.default_rng(1)
        pattern = build_pattern(tiny_config, rng)
        sensing = build_sensing(pattern, build_basis_set(tiny_config),
                                tiny_config)
        system = form_measurements(
            np.zeros((tiny_config.N_r, tiny_config.MN)), pattern, sensing)
        assert np.all(system.y == 0)

    def test_dimension_mismatch(self, tiny_config):
        rng = np.random.default_rng(2)
        pattern = build_pattern(tiny_config, rng)
        sensing = build_sensing(pattern, build_basis_set(tiny_config),
                                tiny_config)
        with pytest.raises(ValueError):
            form_measurements(np.zeros((2, 10)), pattern, sensing)


def oracle_exhaustive_ls(system: MeasurementSystem, config) -> np.ndarray:
    """Best support by exhaustive least squares over the feasible family."""
    sen = system.sensing
    best, best_mask = np.inf, None
    delays = range(config.L)
    for common in delays:
        for i1, i2 in itertools.permutations(
                [d for d in delays if d != common], 2):
            cols = np.concatenate([
                sen.delay_cols(common), sen.sub_cols(i1, 0), sen.sub_cols(i2, 1)])
            cols = np.sort(cols)
            sol, _, _, _ = np.linalg.lstsq(sen.phi[:, cols], system.y,
                                           rcond=None)
            resid = np.linalg.norm(system.y - sen.phi[:, cols] @ sol)
            if resid < best:
                best = resid
                mask = np.zeros((config.N_u, config.L), dtype=bool)
                mask[:, common] = True
                mask[0, i1] = True
                mask[1, i2] = True
                best_mask = mask
    return best_mask


class TestVblSomp:
    def test_exact_recovery_against_exhaustive_oracle(self, tiny_config):
        from conftest import support_well_posed
        matches, coeff_ok = 0, 0
        trials, done, seed = 100, 0, 0
        while done < trials:
            rng = np.random.default_rng(seed)
            seed += 1
            pool = rng.permutation(tiny_config.L)
            common, i1, i2 = int(pool[0]), int(pool[1]), int(pool[2])
            supports = [sorted((common, i1)), sorted((common, i2))]
            real, pattern, basis, sensing, s_bar = synth_bem_exact(
                tiny_config, supports, rng)
            if not support_well_posed(sensing, supports):
                continue                      # instances require full rank
            done += 1
            y_dd, _ = transmit(tiny_config, pattern, real, rng,
                               payload=np.zeros((2, pattern.n_data)))
            system = form_measurements(y_dd, pattern, sensing)
            coeffs = vbl_somp(system, tiny_config.K, tiny_config.K_C)
            oracle_mask = oracle_exhaustive_ls(system, tiny_config)
            truth = np.zeros((2, tiny_config.L), dtype=bool)
            truth[:, common] = True
            truth[0, i1] = True
            truth[1, i2] = True
            if np.array_equal(coeffs.gamma, oracle_mask):
                matches += 1
                if np.array_equal(coeffs.gamma, truth):
                    # exact support: coefficients must match exactly too
                    err = np.linalg.norm(coeffs.s_bar - s_bar)
                    assert err / np.linalg.norm(s_bar) < 1e-8
                    coeff_ok += 1
        assert matches >= 95
        assert coeff_ok >= 90

    def test_zero_observation_gives_zero_coefficients(self, tiny_config):
        rng = np.random.default_rng(9)
        pattern = build_pattern(tiny_config, rng)
        sensing = build_sensing(pattern, build_basis_set(tiny_config),
                                tiny_config)
        system = form_measurements(
            np.zeros((tiny_config.N_r, tiny_config.MN)), pattern, sensing)
        coeffs = vbl_somp(system, tiny_config.K, tiny_config.K_C)
        assert np.all(coeffs.s_bar == 0)

    def test_iteration_count_matches_block_sparsity(self):
        # N_u(K - K_C) + K_C selections: 2*(4-1)+1 = 7
        cfg = SimConfig(M=16, N=4, N_r=2, N_u=2, L=10, K=4, K_C=1, Q=3,
                        Q_s=2, G=8, N_sg=2, Q_sg=2)
        rng = np.random.default_rng(3)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            cfg, [(0, 2, 4, 6), (0, 3, 5, 7)], rng)
        y_dd, _ = transmit(cfg, pattern, real, rng,
                           payload=np.zeros((2, pattern.n_data)))
        system = form_measurements(y_dd, pattern, sensing)
        coeffs = vbl_somp(system, cfg.K, cfg.K_C)
        assert len(coeffs.blocks) == 7
        assert sum(b[0] == "common" for b in coeffs.blocks) == 1

    def test_residual_monotone_and_support_grows(self, tiny_config):
        rng = np.random.default_rng(5)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            tiny_config, [(0, 3), (1, 3)], rng)
        y_dd, _ = transmit(tiny_config, pattern, real, rng, sigma2=0.1)
        system = form_measurements(y_dd, pattern, sensing)
        coeffs = vbl_somp(system, tiny_config.K, tiny_config.K_C)
        trace = np.asarray(coeffs.residual_trace)
        assert np.all(np.diff(trace) <= 1e-9)
        assert len(coeffs.blocks) == len(trace) - 1

    def test_degenerate_support_flagged(self):
        # fewer measurement rows than selected columns
        cfg = SimConfig(M=16, N=4, N_r=1, N_u=2, L=6, K=2, K_C=1, Q=3, Q_s=1,
                        G=2, N_sg=2, Q_sg=2)
        rng = np.random.default_rng(11)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            cfg, [(1, 4), (2, 4)], rng)
        y_dd, _ = transmit(cfg, pattern, real, rng)
        system = form_measurements(y_dd, pattern, sensing)
        with pytest.raises(DegenerateSupportError) as exc:
            vbl_somp(system, cfg.K, cfg.K_C)
        assert exc.value.partial.degenerate


class TestBaselines:
    def test_bsomp_equals_vbl_without_common_blocks(self, tiny_config):
        cfg = tiny_config.replace(N_u=1, K_C=0)
        rng = np.random.default_rng(7)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(cfg, [(1, 4)], rng)
        y_dd, _ = transmit(cfg, pattern, real, rng, sigma2=0.05)
        system = form_measurements(y_dd, pattern, sensing)
        a = vbl_somp(system, cfg.K, 0)
        b = bsomp(system, cfg.N_u * cfg.K)
        assert np.array_equal(a.gamma, b.gamma)

    def test_bsomp_exact_on_noiseless_instance(self, tiny_config):
        rng = np.random.default_rng(8)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            tiny_config, [(0, 2), (3, 5)], rng)
        y_dd, _ = transmit(tiny_config, pattern, real, rng,
                           payload=np.zeros((2, pattern.n_data)))
        system = form_measurements(y_dd, pattern, sensing)
        coeffs = bsomp(system, tiny_config.N_u * tiny_config.K)
        truth = np.zeros((2, tiny_config.L), dtype=bool)
        truth[0, [0, 2]] = True
        truth[1, [3, 5]] = True
        assert np.array_equal(coeffs.gamma, truth)
        assert np.linalg.norm(coeffs.s_bar - s_bar) < 1e-8

    def test_somp_worse_than_bsomp_on_block_instances(self, tiny_config):
        resid_somp, resid_bsomp = [], []
        for seed in range(100):
            rng = np.random.default_rng(1000 + seed)
            real, pattern, basis, sensing, s_bar = synth_bem_exact(
                tiny_config, [(1, 4), (2, 4)], rng)
            y_dd, _ = transmit(tiny_config, pattern, real, rng, sigma2=0.3)
            system = form_measurements(y_dd, pattern, sensing)
            n_cols = tiny_config.N_u * tiny_config.K * tiny_config.Q_s
            a = somp(system, n_cols)
            b = bsomp(system, tiny_config.N_u * tiny_config.K)
            resid_somp.append(np.linalg.norm(
                coeffs_to_channel(a, sensing)
                - real.frame_gains_full(0, tiny_config.L)))
            resid_bsomp.append(np.linalg.norm(
                coeffs_to_channel(b, sensing)
                - real.frame_gains_full(0, tiny_config.L)))
        assert np.mean(resid_bsomp) <= np.mean(resid_somp)

    def test_genie_is_a_lower_bound(self, tiny_config):
        rng = np.random.default_rng(21)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            tiny_config, [(1, 4), (2, 4)], rng)
        y_dd, _ = transmit(tiny_config, pattern, real, rng, sigma2=0.2)
        system = form_measurements(y_dd, pattern, sensing)
        truth = np.zeros((2, tiny_config.L), dtype=bool)
        truth[0, [1, 4]] = True
        truth[1, [2, 4]] = True
        genie = genie_ls(system, truth)
        target = real.frame_gains_full(0, tiny_config.L)
        err_genie = np.linalg.norm(coeffs_to_channel(genie, sensing) - target)
        for coeffs in (vbl_somp(system, tiny_config.K, tiny_config.K_C),
                       bsomp(system, tiny_config.N_u * tiny_config.K)):
            err = np.linalg.norm(coeffs_to_channel(coeffs, sensing) - target)
            assert err >= err_genie - 1e-6


class TestCoeffsToChannel:
    def test_zero_coefficients(self, tiny_config):
        rng = np.random.default_rng(0)
        pattern = build_pattern(tiny_config, rng)
        sensing = build_sensing(pattern, build_basis_set(tiny_config),
                                tiny_config)
        system = form_measurements(
            np.zeros((tiny_config.N_r, tiny_config.MN)), pattern, sensing)
        coeffs = vbl_somp(system, tiny_config.K, tiny_config.K_C)
        assert np.all(coeffs_to_channel(coeffs, sensing) == 0)

    def test_round_trip_on_bem_exact_channel(self, tiny_config):
        rng = np.random.default_rng(4)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            tiny_config, [(1, 4), (2, 4)], rng)
        y_dd, _ = transmit(tiny_config, pattern, real, rng,
                           payload=np.zeros((2, pattern.n_data)))
        system = form_measurements(y_dd, pattern, sensing)
        coeffs = vbl_somp(system, tiny_config.K, tiny_config.K_C)
        rebuilt = coeffs_to_channel(coeffs, sensing)
        target = real.frame_gains_full(0, tiny_config.L)
        assert (np.linalg.norm(rebuilt - target)
                / np.linalg.norm(target)) < 1e-9

    def test_single_dc_coefficient_gives_constant_column(self, tiny_config):
        # one unit coefficient at the centre offset: the gain sequence is the
        # first spatial basis column, constant over time (basis scale is
        # absorbed into the coefficients)
        rng = np.random.default_rng(6)
        pattern = build_pattern(tiny_config, rng)
        basis = build_basis_set(tiny_config)
        sensing = build_sensing(pattern, basis, tiny_config)
        from otfspred.estimation import SparseCoeffs
        s_bar = np.zeros((tiny_config.L * 2 * tiny_config.Q_s, 3), complex)
        row = 0 * 2 * tiny_config.Q_s + 0 * tiny_config.Q_s + 0   # l=0, u=0, qs=0
        s_bar[row, 1] = 1.0                                       # centre column
        gamma = np.zeros((2, tiny_config.L), dtype=bool)
        gamma[0, 0] = True
        coeffs = SparseCoeffs(s_bar=s_bar, gamma=gamma,
                              common_delays=np.zeros(0, int), blocks=[])
        gains = coeffs_to_channel(coeffs, sensing)
        expected = basis.D[0][:, 0]
        assert np.allclose(gains[:, 0, 0, :], expected[:, None], atol=1e-12)
        assert np.all(gains[:, 1] == 0)


class TestSgSmooth:
    def test_reproduces_polynomials(self):
        t = np.arange(40, dtype=float)
        cols = np.stack([t ** d for d in range(4)], axis=1)
        out = sg_smooth(cols, n_sg=4, q_sg=3)
        assert np.max(np.abs(out - cols)) / np.max(np.abs(cols)) < 1e-9

    def test_variance_reduction_on_noisy_constant(self):
        improvements = []
        for seed in range(100):
            rng = np.random.default_rng(seed)
            x = 1.0 + 0.3 * (rng.standard_normal(64)
                             + 1j * rng.standard_normal(64))
            out = sg_smooth(x[:, None], 3, 2)[:, 0]
            improvements.append(np.var(out) < np.var(x))
        assert np.mean(improvements) > 0.9

    def test_boundary_uses_shifted_window(self):
        # a cubic is reproduced exactly right up to the edges
        t = np.arange(20, dtype=float)
        x = (t - 3.0) ** 3
        out = sg_smooth(x[:, None], 4, 3)[:, 0]
        assert np.max(np.abs(out - x)) < 1e-8 * np.max(np.abs(x))

    def test_window_preconditions(self):
        with pytest.raises(ValueError):
            sg_smooth(np.zeros((5, 1)), 3, 2)       # too few rows
        with pytest.raises(ValueError):
            sg_smooth(np.zeros((20, 1)), 2, 5)      # order >= window

    def test_adaptive_passthrough_on_short_input(self):
        x = np.arange(4, dtype=float)[:, None]
        out = sg_smooth_adaptive(x, 5, 5)
        assert np.array_equal(out, x.astype(complex))


class TestLmmseDetect:
    def _identity_eff(self, config):
        gains = np.ones((config.N_r, 1, 1, config.MN), dtype=complex)
        support = np.zeros((1, config.L), dtype=bool)
        support[0, 0] = True
        full = np.zeros((config.N_r, 1, config.L, config.MN), dtype=complex)
        full[:, 0, 0] = 1.0
        return eff_channel_from_gains(full, support, config.M, config.N)

    def test_identity_channel_noiseless(self):
        cfg = SimConfig(M=8, N=4, N_r=2, N_u=1, L=4, K=1, K_C=1, Q=3, Q_s=1,
                        G=4, N_sg=2, Q_sg=2)
        rng = np.random.default_rng(0)
        pattern = build_pattern(cfg, rng)
        payload = qpsk_random(rng, pattern.n_data)[None, :]
        u = np.stack([assemble_frame(pattern, payload[0], 0).u])
        u_pilot = u.copy()
        u_pilot[:, pattern.data_idx] = 0.0
        eff = self._identity_eff(cfg)
        y = eff.apply(pre_transform(u, cfg.M, cfg.N))
        y_data = y - eff.apply(pre_transform(u_pilot, cfg.M, cfg.N))
        det = lmmse_detect(y_data, eff, pattern, snr_d=0.0, i_cg=40)
        assert np.allclose(det.hard, payload, atol=1e-8)

    def test_cg_matches_dense_solve(self):
        cfg = SimConfig(M=8, N=4, N_r=4, N_u=2, L=6, K=2, K_C=1, Q=3, Q_s=2,
                        G=6, N_sg=2, Q_sg=2)
        rng = np.random.default_rng(12)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            cfg, [(1, 4), (2, 5)], rng)
        eff = build_effective_channel(real, 0)
        y = rng.standard_normal((cfg.N_r, cfg.MN)) \
            + 1j * rng.standard_normal((cfg.N_r, cfg.MN))
        snr_d = 0.1
        det = lmmse_detect(y, eff, pattern, snr_d=snr_d, i_cg=60, tol=1e-14)
        # dense oracle assembled column by column
        n_d = pattern.n_data
        a = np.zeros((cfg.N_r * cfg.MN, cfg.N_u * n_d), dtype=complex)
        for ui in range(cfg.N_u):
            for j in range(n_d):
                u = np.zeros((cfg.N_u, cfg.MN), dtype=complex)
                u[ui, pattern.data_idx[j]] = 1.0
                a[:, ui * n_d + j] = eff.apply(
                    pre_transform(u, cfg.M, cfg.N)).ravel()
        rhs = np.conj(a.T) @ y.ravel()
        sol = np.linalg.solve(np.conj(a.T) @ a + snr_d * np.eye(a.shape[1]),
                              rhs)
        assert (np.linalg.norm(det.soft.ravel() - sol)
                / np.linalg.norm(sol)) < 1e-6

    def test_infinite_regularization_shrinks_to_zero(self):
        cfg = SimConfig(M=8, N=4, N_r=2, N_u=1, L=4, K=1, K_C=1, Q=3, Q_s=1,
                        G=4, N_sg=2, Q_sg=2)
        rng = np.random.default_rng(1)
        pattern = build_pattern(cfg, rng)
        eff = self._identity_eff(cfg)
        y = rng.standard_normal((cfg.N_r, cfg.MN)) * (1 + 0j)
        det = lmmse_detect(y, eff, pattern, snr_d=1e12, i_cg=10)
        assert np.max(np.abs(det.soft)) < 1e-9


class TestIterativeRefine:
    def test_noiseless_bem_exact_converges_immediately(self, tiny_config):
        cfg = tiny_config.replace(I_max=2)
        rng = np.random.default_rng(30)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            cfg, [(1, 4), (2, 4)], rng)
        y_dd, payload = transmit(cfg, pattern, real, rng)
        truth = FrameTruth(gains_full=real.frame_gains_full(0, cfg.L),
                           data=payload)
        est = iterative_refine(y_dd, pattern, sensing, cfg, sigma2=0.0,
                               truth=truth)
        assert est.nmse_trace[0] < -60 or est.nmse_trace[min(
            1, len(est.nmse_trace) - 1)] < -60

    def test_imax_zero_is_single_pass(self, tiny_config):
        cfg = tiny_config.replace(I_max=0)
        rng = np.random.default_rng(31)
        real, pattern, basis, sensing, s_bar = synth_bem_exact(
            cfg, [(1, 4), (2, 4)], rng)
        y_dd, payload = transmit(cfg, pattern, real, rng, sigma2=0.05)
        truth = FrameTruth(gains_full=real.frame_gains_full(0, cfg.L),
                           data=payload)
        est = iterative_refine(y_dd, pattern, sensing, cfg, sigma2=0.05,
                               truth=truth)
        assert len(est.nmse_trace) == 1
        assert len(est.ber_trace) == 1


class TestLayout:
    def test_stack_round_trip(self):
        rng = np.random.default_rng(2)
        gains = rng.standard_normal((3, 2, 2, 4, 8)) \
            + 1j * rng.standard_normal((3, 2, 2, 4, 8))
        mat = stack_channel(gains)
        assert mat.shape == (3 * 8, 2 * 2 * 4)
        back = unstack_channel(mat, 2, 2, 4, 8)
        assert np.array_equal(back, gains)
