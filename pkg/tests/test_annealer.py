"""Emulator behavior: temperature law, noise model, sampling backends."""

import numpy as np
import pytest

from qarbm import annealer, kernels
from qarbm.errors import CapacityError, FormatError, SaturationError
from qarbm.model import (ControlParameters, ModelParameters, RBMGraph,
                         model_from_control)

from helpers import joint_spins, oracle_device_energy, oracle_joint

QUIET = dict(sigma_pb_h=0, sigma_pb_j=0, sigma_noise_h=0, sigma_noise_j=0)


def quiet_profile(graph, t, **kw):
    return annealer.AnnealerProfile(graph, law="constant", t0=t, **QUIET, **kw)


def joint_index(spins):
    bits = ((spins + 1) // 2).astype(np.int64)
    return (bits * (1 << np.arange(spins.shape[1]))).sum(axis=1)


def empirical_tv(samples, params):
    _, probs, _ = oracle_joint(params)
    idx = joint_index(samples.spins)
    emp = np.bincount(idx, minlength=len(probs)) / len(idx)
    return 0.5 * np.abs(emp - probs).sum()


# ---------------------------------------------------------------------------
# temperature law


def test_constant_law():
    g = RBMGraph.complete(2, 2)
    prof = quiet_profile(g, 0.1)
    rng = np.random.default_rng(0)
    for _ in range(4):
        ctl = ControlParameters(g, rng.normal(0, 0.3, (2, 2)),
                                rng.normal(0, 0.3, 2), rng.normal(0, 0.3, 2))
        assert annealer.effective_temperature(prof, ctl) == 0.1


def test_affine_law_direct_value():
    # rms of the pooled instance = 0.4 -> 0.08 + 0.05 * 0.4 = 0.10
    g = RBMGraph.complete(2, 2)
    prof = annealer.AnnealerProfile(g, law="affine", a=0.08, b=0.05, **QUIET)
    ctl = ControlParameters(g, np.full((2, 2), 0.4), np.full(2, -0.4),
                            np.full(2, 0.4))
    assert annealer.effective_temperature(prof, ctl) == pytest.approx(0.10)


def test_affine_law_ignores_offgraph_zeros():
    g = RBMGraph(2, 2, [(0, 0)])  # single edge; dense J has 3 structural zeros
    prof = annealer.AnnealerProfile(g, law="affine", a=0.0, b=1.0, **QUIET)
    j = np.zeros((2, 2))
    j[0, 0] = 0.5
    ctl = ControlParameters(g, j, np.full(2, 0.5), np.full(2, 0.5))
    # pooled rms over 1 coupler + 4 fields, all 0.5
    assert annealer.effective_temperature(prof, ctl) == pytest.approx(0.5)


def test_law_must_be_positive():
    g = RBMGraph.complete(1, 1)
    prof = quiet_profile(g, -0.2)
    with pytest.raises(ValueError):
        annealer.effective_temperature(prof, ControlParameters.zeros(g))


def test_unknown_law_rejected():
    with pytest.raises(ValueError):
        annealer.AnnealerProfile(RBMGraph.complete(1, 1), law="cubic")
    with pytest.raises(ValueError):
        annealer.SamplerBackend(mode="magic")


def test_base_temperature_default():
    prof = quiet_profile(RBMGraph.complete(1, 1), 0.1)
    assert prof.base_temperature == pytest.approx(0.033)


# ---------------------------------------------------------------------------
# program_and_sample


def test_sample_count_and_shapes():
    g = RBMGraph.complete(4, 4)
    prof = quiet_profile(g, 0.1)
    out = annealer.program_and_sample(prof, ControlParameters.zeros(g), 1000,
                                      seed=1)
    assert len(out) == 1000
    assert out.spins.shape == (1000, 8) and out.spins.dtype == np.int8
    assert out.energies.shape == (1000,)
    assert set(np.unique(out.spins)) <= {-1, 1}
    assert out.scale == 1.0 and out.seed == 1


def test_zero_parameters_symmetric():
    g = RBMGraph.complete(4, 4)
    prof = quiet_profile(g, 0.1)
    out = annealer.program_and_sample(prof, ControlParameters.zeros(g), 4000,
                                      seed=3)
    assert np.abs(out.spins.mean(axis=0)).max() < 3 / np.sqrt(4000)


def test_single_edge_correlation():
    # device J=-0.03 at T=0.1 gives W=0.3, so <s_v s_h> = tanh(0.3)
    g = RBMGraph.complete(1, 1)
    ctl = ControlParameters(g, np.array([[-0.03]]), np.zeros(1), np.zeros(1))
    prof = quiet_profile(g, 0.1)
    out = annealer.program_and_sample(prof, ctl, 10000, seed=4)
    prods = (out.spins[:, 0] * out.spins[:, 1]).astype(float)
    se = prods.std(ddof=1) / np.sqrt(len(prods))
    assert abs(prods.mean() - np.tanh(0.3)) < 4 * se


def test_scale_rescales_couplings():
    g = RBMGraph.complete(1, 1)
    ctl = ControlParameters(g, np.array([[-0.06]]), np.zeros(1), np.zeros(1))
    prof = quiet_profile(g, 0.1)
    out = annealer.program_and_sample(prof, ctl, 20000, seed=5, scale=0.5)
    prods = (out.spins[:, 0] * out.spins[:, 1]).astype(float)
    se = prods.std(ddof=1) / np.sqrt(len(prods))
    assert abs(prods.mean() - np.tanh(0.3)) < 4 * se


def test_exact_backend_total_variation():
    rng = np.random.default_rng(5)
    g = RBMGraph.complete(3, 3)
    ctl = ControlParameters(g, rng.uniform(-0.08, 0.08, (3, 3)),
                            rng.uniform(-0.05, 0.05, 3),
                            rng.uniform(-0.05, 0.05, 3))
    prof = quiet_profile(g, 0.1)
    out = annealer.program_and_sample(prof, ctl, 100000, seed=11)
    assert empirical_tv(out, model_from_control(ctl, 0.1)) < 0.02


def test_exact_backend_structured_model_tv():
    g = RBMGraph.complete(4, 4)
    ctl = ControlParameters(g, np.full((4, 4), -0.03), np.full(4, 0.01),
                            np.zeros(4))
    prof = quiet_profile(g, 0.1)
    out = annealer.program_and_sample(prof, ctl, 100000, seed=12)
    assert empirical_tv(out, model_from_control(ctl, 0.1)) < 0.02


def test_energy_cache_matches_recompute():
    # noisy, scaled draw; cache must still be energies under the clean control
    rng = np.random.default_rng(6)
    g = RBMGraph.complete(3, 2)
    ctl = ControlParameters(g, rng.uniform(-0.1, 0.1, (3, 2)),
                            rng.uniform(-0.1, 0.1, 3),
                            rng.uniform(-0.1, 0.1, 2))
    prof = annealer.AnnealerProfile(g, law="constant", t0=0.1)
    out = annealer.program_and_sample(prof, ctl, 200, seed=7, scale=0.72)
    recomputed = kernels.batch_energies(out.spins, g.edges_joint,
                                        ctl.edge_values(), ctl.field_vector())
    np.testing.assert_array_equal(out.energies, recomputed)
    for row, e in zip(out.spins, out.energies):
        assert e == pytest.approx(oracle_device_energy(row, ctl), abs=1e-12)
    assert out.scale == 0.72
    np.testing.assert_array_equal(out.reference.j, ctl.j)


def test_determinism_and_seed_sensitivity():
    g = RBMGraph.complete(4, 4)
    prof = annealer.AnnealerProfile(g, law="affine")
    ctl = ControlParameters.zeros(g)
    a = annealer.program_and_sample(prof, ctl, 500, seed=42)
    b = annealer.program_and_sample(prof, ctl, 500, seed=42)
    c = annealer.program_and_sample(prof, ctl, 500, seed=43)
    np.testing.assert_array_equal(a.spins, b.spins)
    np.testing.assert_array_equal(a.energies, b.energies)
    assert not np.array_equal(a.spins, c.spins)


def test_persistent_bias_fixed_per_location():
    g = RBMGraph.complete(4, 4)
    kw = dict(law="constant", t0=0.1, sigma_pb_h=0.2, sigma_pb_j=0,
              sigma_noise_h=0, sigma_noise_j=0)
    p1 = annealer.AnnealerProfile(g, location_seed=3, **kw)
    p2 = annealer.AnnealerProfile(g, location_seed=3, **kw)
    p3 = annealer.AnnealerProfile(g, location_seed=4, **kw)
    np.testing.assert_array_equal(p1.persistent_h, p2.persistent_h)
    assert not np.array_equal(p1.persistent_h, p3.persistent_h)
    # same chip across two programmings: magnetizations agree to sampling noise
    z = ControlParameters.zeros(g)
    m1 = annealer.program_and_sample(p1, z, 10000, seed=21).spins.mean(axis=0)
    m2 = annealer.program_and_sample(p1, z, 10000, seed=22).spins.mean(axis=0)
    assert np.abs(m1 - m2).max() < 4 / np.sqrt(10000) + 0.01


def test_programming_noise_fresh_per_call():
    g = RBMGraph.complete(4, 4)
    prof = annealer.AnnealerProfile(g, law="constant", t0=0.1, sigma_pb_h=0,
                                    sigma_pb_j=0, sigma_noise_h=0.2,
                                    sigma_noise_j=0)
    z = ControlParameters.zeros(g)
    m1 = annealer.program_and_sample(prof, z, 10000, seed=23).spins.mean(axis=0)
    m2 = annealer.program_and_sample(prof, z, 10000, seed=24).spins.mean(axis=0)
    # fields redrawn at sigma 0.2 against T=0.1 pin the units differently
    assert np.abs(m1 - m2).max() > 0.5


def test_law_sees_noise_hook():
    g = RBMGraph.complete(4, 4)
    kw = dict(law="affine", a=0.08, b=0.5, sigma_pb_h=0, sigma_pb_j=0,
              sigma_noise_h=0.3, sigma_noise_j=0.3)
    ctl = ControlParameters.zeros(g)
    off = annealer.AnnealerProfile(g, law_sees_noise=False, **kw)
    on = annealer.AnnealerProfile(g, law_sees_noise=True, **kw)
    a = annealer.program_and_sample(off, ctl, 300, seed=9)
    b = annealer.program_and_sample(on, ctl, 300, seed=9)
    # same noise realization but different temperature -> different draws
    assert not np.array_equal(a.spins, b.spins)
    # the reported clean-law value never moves
    assert annealer.effective_temperature(on, ctl) == pytest.approx(0.08)


def test_argument_validation():
    g = RBMGraph.complete(2, 2)
    prof = quiet_profile(g, 0.1)
    with pytest.raises(ValueError):
        annealer.program_and_sample(prof, ControlParameters.zeros(g), 0, seed=1)
    other = ControlParameters.zeros(RBMGraph.complete(2, 3))
    with pytest.raises(ValueError):
        annealer.program_and_sample(prof, other, 10, seed=1)


def test_exact_capacity_error():
    g = RBMGraph.complete(22, 2)
    prof = quiet_profile(g, 0.1,
                         backend=annealer.SamplerBackend(mode="exact"))
    with pytest.raises(CapacityError):
        annealer.program_and_sample(prof, ControlParameters.zeros(g), 5, seed=1)


# ---------------------------------------------------------------------------
# gibbs backend


def test_gibbs_matches_exact_moments():
    rng = np.random.default_rng(17)
    g = RBMGraph.complete(4, 4)
    ctl = ControlParameters(g, rng.uniform(-0.06, 0.06, (4, 4)),
                            rng.uniform(-0.03, 0.03, 4),
                            rng.uniform(-0.03, 0.03, 4))
    exact = quiet_profile(g, 0.1)
    gibbs = quiet_profile(g, 0.1,
                          backend=annealer.SamplerBackend(mode="gibbs"))
    a = annealer.program_and_sample(exact, ctl, 20000, seed=8)
    b = annealer.program_and_sample(gibbs, ctl, 3000, seed=9)

    def moments(out):
        sp = out.spins.astype(float)
        ei, ej = g.edges_joint[:, 0], g.edges_joint[:, 1]
        vals = np.hstack([sp, sp[:, ei] * sp[:, ej]])
        return vals.mean(axis=0), vals.std(axis=0, ddof=1) / np.sqrt(len(sp))

    ma, sa = moments(a)
    mb, sb = moments(b)
    assert (np.abs(ma - mb) < 4 * np.sqrt(sa**2 + sb**2)).all()


def test_gibbs_long_chain_ferromagnet_tv():
    g = RBMGraph.complete(2, 2)
    ctl = ControlParameters(g, np.full((2, 2), -0.06), np.zeros(2),
                            np.zeros(2))
    prof = quiet_profile(
        g, 0.1, backend=annealer.SamplerBackend(mode="gibbs", burn_in=1000,
                                                thinning=1))
    out = annealer.program_and_sample(prof, ctl, 100000, seed=77)
    assert empirical_tv(out, model_from_control(ctl, 0.1)) < 0.02


# ---------------------------------------------------------------------------
# gibbs_chain


def test_chain_zero_steps_identity():
    g = RBMGraph.complete(3, 2)
    params = ModelParameters.zeros(g)
    init = np.array([1, -1, 1, -1, 1], dtype=np.int8)
    out = annealer.gibbs_chain(params, 0, init, seed=1)
    np.testing.assert_array_equal(out, init)
    out[0] = -1
    assert init[0] == 1  # returned copy, not a view


def test_chain_uniform_after_one_step():
    # zero parameters: every unit is an independent fair coin after one sweep
    g = RBMGraph.complete(4, 4)
    params = ModelParameters.zeros(g)
    init = np.ones(8, dtype=np.int8)
    finals = np.array([annealer.gibbs_chain(params, 1, init, seed=s)
                       for s in range(2000)])
    counts = (finals == 1).sum(axis=0)
    chi2 = (counts - 1000.0) ** 2 * 2 / 1000.0
    assert (chi2 < 10.8276).all()  # chi-square(1) at the 0.999 level


def test_chain_determinism():
    rng = np.random.default_rng(2)
    g = RBMGraph.complete(4, 3)
    params = ModelParameters(g, rng.normal(0, 1, (4, 3)), rng.normal(0, 1, 4),
                             rng.normal(0, 1, 3))
    init = (rng.integers(0, 2, 7) * 2 - 1).astype(np.int8)
    a = annealer.gibbs_chain(params, 25, init, seed=5)
    b = annealer.gibbs_chain(params, 25, init, seed=5)
    np.testing.assert_array_equal(a, b)


def test_chain_validates_shape():
    params = ModelParameters.zeros(RBMGraph.complete(2, 2))
    with pytest.raises(ValueError):
        annealer.gibbs_chain(params, 1, np.ones(3, dtype=np.int8), seed=0)


# ---------------------------------------------------------------------------
# persistent-bias calibration


def test_calibration_null_case():
    g = RBMGraph.complete(4, 4)
    prof = quiet_profile(g, 0.1)
    est = annealer.calibrate_persistent_bias(prof, 20000, seed=6)
    bound = 3 * 0.1 / np.sqrt(20000)
    assert np.abs(est.h).max() < bound
    assert np.abs(est.j).max() < bound
    assert est.temperature == pytest.approx(0.1)
    assert est.n_samples == 20000


def test_calibration_recovers_injected_offset():
    g = RBMGraph.complete(4, 4)
    prof = quiet_profile(g, 0.1)
    prof.persistent_h[:] = 0.0
    prof.persistent_h[1] = 0.05
    est = annealer.calibrate_persistent_bias(prof, 100000, seed=7)
    assert abs(est.h[1] - 0.05) < 0.01
    assert np.abs(np.delete(est.h, 1)).max() < 0.01


def test_calibration_deterministic():
    g = RBMGraph.complete(3, 3)
    prof = annealer.AnnealerProfile(g, law="constant", t0=0.1)
    a = annealer.calibrate_persistent_bias(prof, 5000, seed=11)
    b = annealer.calibrate_persistent_bias(prof, 5000, seed=11)
    np.testing.assert_array_equal(a.h, b.h)
    np.testing.assert_array_equal(a.j, b.j)


def test_calibration_saturation_error():
    g = RBMGraph.complete(1, 1)
    prof = quiet_profile(g, 0.001)  # frozen: every sample identical
    prof.persistent_h[:] = [0.5, 0.5]
    with pytest.raises(SaturationError):
        annealer.calibrate_persistent_bias(prof, 50, seed=2)


def test_calibration_external_temperature():
    # single-pass estimates are exactly linear in the assumed temperature
    g = RBMGraph.complete(2, 2)
    prof = quiet_profile(g, 0.1)
    a = annealer.calibrate_persistent_bias(prof, 2000, seed=3, rounds=1)
    b = annealer.calibrate_persistent_bias(prof, 2000, seed=3, rounds=1,
                                           temperature=0.2)
    np.testing.assert_allclose(b.h, 2 * a.h, rtol=1e-12)
    assert b.temperature == pytest.approx(0.2)


def test_calibration_iteration_beats_single_pass():
    # with couplers and programming noise active, the single inversion leaks
    # neighbour magnetization into every field estimate; refinement rounds
    # should recover a clearly better correction
    g = RBMGraph.complete(4, 4)
    prof = annealer.AnnealerProfile(g, location_seed=3)
    one = annealer.calibrate_persistent_bias(prof, 10**5, seed=21, rounds=1)
    many = annealer.calibrate_persistent_bias(prof, 10**5, seed=21)
    err1_h = np.abs(one.h - prof.persistent_h).max()
    errk_h = np.abs(many.h - prof.persistent_h).max()
    err1_j = np.abs(one.j - prof.persistent_j).max()
    errk_j = np.abs(many.j - prof.persistent_j).max()
    assert errk_h < err1_h
    assert errk_j < err1_j
    rms = lambda x: float(np.sqrt(np.mean(np.square(x))))
    assert rms(many.h - prof.persistent_h) < 0.75 * rms(prof.persistent_h)


def test_correction_cancels_injected_bias():
    g = RBMGraph.complete(4, 4)
    prof = annealer.AnnealerProfile(g, law="constant", t0=0.1, sigma_pb_h=0.1,
                                    sigma_pb_j=0, sigma_noise_h=0,
                                    sigma_noise_j=0, location_seed=9)
    est = annealer.calibrate_persistent_bias(prof, 100000, seed=13)
    z = ControlParameters.zeros(g)
    raw = annealer.program_and_sample(prof, z, 20000, seed=14)
    fixed = annealer.program_and_sample(prof, z, 20000, seed=14,
                                        correction=est)
    assert np.abs(raw.spins.mean(axis=0)).max() > 0.2
    assert np.abs(fixed.spins.mean(axis=0)).max() < 0.05


# ---------------------------------------------------------------------------
# CSV round-trip


def test_samples_csv_roundtrip(tmp_path):
    g = RBMGraph.complete(3, 3)
    prof = annealer.AnnealerProfile(g, law="affine")
    rng = np.random.default_rng(1)
    ctl = ControlParameters(g, rng.uniform(-0.1, 0.1, (3, 3)),
                            rng.uniform(-0.1, 0.1, 3),
                            rng.uniform(-0.1, 0.1, 3))
    out = annealer.program_and_sample(prof, ctl, 50, seed=19)
    path = tmp_path / "samples.csv"
    annealer.save_samples(out, path)
    header = path.read_text().splitlines()[0]
    assert header == "energy," + ",".join(f"s_{i}" for i in range(6))
    loaded = annealer.load_samples(path)
    np.testing.assert_array_equal(loaded.spins, out.spins)
    np.testing.assert_array_equal(loaded.energies, out.energies)


def test_samples_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("wrong,s_0\n")
    with pytest.raises(FormatError, match=":1:"):
        annealer.load_samples(p)
    p.write_text("energy,s_0,s_1\n0.5,1,-1\n0.5,1\n")
    with pytest.raises(FormatError, match=":3:"):
        annealer.load_samples(p)
    p.write_text("energy,s_0,s_1\n0.5,1,2\n")
    with pytest.raises(FormatError, match="spins"):
        annealer.load_samples(p)
    p.write_text("energy,s_0,s_1\nabc,1,-1\n")
    with pytest.raises(FormatError, match=":2:"):
        annealer.load_samples(p)
    p.write_text("energy,s_0,s_1\n")
    with pytest.raises(FormatError, match="no sample rows"):
        annealer.load_samples(p)
