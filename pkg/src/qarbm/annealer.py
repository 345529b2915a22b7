"""Emulated annealer: a Boltzmann sampler at a hidden effective temperature.

The emulator accepts control parameters (J, h), perturbs them with a fixed
per-chip persistent bias plus fresh per-programming Gaussian noise, picks an
effective temperature from a configurable law, and then draws honest Boltzmann
samples of the perturbed model at that temperature. Callers never see the
temperature or the perturbations; they only get spins and energies, which is
what makes the thermometry problem nontrivial.

Energies cached on the returned SampleSet are always computed under the clean,
unscaled reference parameters passed by the caller, regardless of the scale
factor or bias correction applied at programming time.
"""

import dataclasses

import numpy as np

from . import kernels
from .errors import CapacityError, FormatError, SaturationError
from .model import (ENUMERATION_LIMIT, ControlParameters, SampleSet,
                    model_from_control)

# Physical temperature of the device in programming units. The effective
# temperature produced by the law is typically well above this floor.
BASE_TEMPERATURE = 0.033


@dataclasses.dataclass
class SamplerBackend:
    """How configurations are drawn once the perturbed model is fixed.

    mode "auto" enumerates the visible layer exactly when it fits (at most
    `exact_limit` visible units) and falls back to single-chain block Gibbs
    with `burn_in` warmup sweeps and `thinning` sweeps between kept samples.
    """

    mode: str = "auto"
    exact_limit: int = 20
    burn_in: int = 1000
    thinning: int = 10

    def __post_init__(self):
        if self.mode not in ("auto", "exact", "gibbs"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")


@dataclasses.dataclass
class BiasEstimate:
    """Estimated persistent offsets, ready to subtract at programming time.

    `h` runs over all units in joint order; `j` is a dense (n, m) matrix that
    is zero off the graph, matching the ControlParameters layout.
    """

    h: np.ndarray
    j: np.ndarray
    temperature: float
    n_samples: int

    @classmethod
    def zero(cls, graph):
        return cls(np.zeros(graph.units), np.zeros((graph.n, graph.m)), 0.0, 0)


class AnnealerProfile:
    """Hidden ground truth of the emulated device.

    temperature law:
      "constant"  T_eff = t0
      "affine"    T_eff = a + b * rms(J, h) of the programmed instance

    Persistent biases are drawn once per profile from location_seed (one draw
    per unit field, one per coupler) and stay fixed for the profile's
    lifetime, emulating a particular chip location. Programming noise is
    redrawn at every program_and_sample call. With law_sees_noise the
    temperature law is applied to the noisy realized instance instead of the
    clean programmed one; off by default.
    """

    def __init__(self, graph, law="affine", t0=0.095, a=0.08, b=0.05,
                 sigma_pb_h=0.02, sigma_pb_j=0.02,
                 sigma_noise_h=0.01, sigma_noise_j=0.01,
                 location_seed=0, law_sees_noise=False, backend=None,
                 base_temperature=BASE_TEMPERATURE):
        if law not in ("constant", "affine"):
            raise ValueError(f"unknown temperature law {law!r}")
        self.graph = graph
        self.law = law
        self.t0 = float(t0)
        self.a = float(a)
        self.b = float(b)
        self.sigma_pb_h = float(sigma_pb_h)
        self.sigma_pb_j = float(sigma_pb_j)
        self.sigma_noise_h = float(sigma_noise_h)
        self.sigma_noise_j = float(sigma_noise_j)
        self.location_seed = location_seed
        self.law_sees_noise = law_sees_noise
        self.backend = backend if backend is not None else SamplerBackend()
        self.base_temperature = float(base_temperature)
        loc = np.random.default_rng(np.random.SeedSequence(location_seed))
        self.persistent_h = loc.normal(0.0, 1.0, graph.units) * sigma_pb_h
        # offsets exist only on physical couplers; keep dense layout zero
        # off the graph so they add directly onto ControlParameters.j
        self.persistent_j = _scatter(graph,
                                     loc.normal(0.0, 1.0, graph.n_edges)
                                     * sigma_pb_j)

    def law_temperature(self, j_edges, hv, hh):
        """Apply the temperature law to a raw instance (per-edge J values)."""
        if self.law == "constant":
            t = self.t0
        else:
            pooled = np.concatenate([j_edges, hv, hh])
            t = self.a + self.b * np.sqrt(np.mean(pooled * pooled))
        if t <= 0:
            raise ValueError(f"temperature law produced T={t}; must be positive")
        return float(t)


def _scatter(graph, edge_values):
    """Per-edge values -> dense (n, m) matrix, zero off the graph."""
    out = np.zeros((graph.n, graph.m))
    out[graph.edges[:, 0], graph.edges[:, 1]] = edge_values
    return out


def effective_temperature(profile, control):
    """Hidden T_eff the emulator would use for this clean instance.

    With law_sees_noise enabled the realized temperature additionally moves
    with the per-call noise draw; this function reports the noise-free value.
    """
    return profile.law_temperature(control.edge_values(), control.hv,
                                   control.hh)


def _perturb(profile, control, rng, scale, correction):
    """Build the realized (noisy) instance for one programming event."""
    g = control.graph
    j = scale * control.j
    hv = scale * control.hv
    hh = scale * control.hh
    if correction is not None:
        j = j - correction.j
        hv = hv - correction.h[:g.n]
        hh = hh - correction.h[g.n:]
    # the DAC clips requested values to its range
    j = np.clip(j, -control.j_limit, control.j_limit)
    hv = np.clip(hv, -control.h_limit, control.h_limit)
    hh = np.clip(hh, -control.h_limit, control.h_limit)
    # analog imperfections land after clipping and may exceed the range
    noise_h = rng.normal(0.0, 1.0, g.units) * profile.sigma_noise_h
    noise_j = _scatter(g, rng.normal(0.0, 1.0, g.n_edges)
                       * profile.sigma_noise_j)
    ph = profile.persistent_h
    j_real = j + profile.persistent_j + noise_j
    hv_real = hv + ph[:g.n] + noise_h[:g.n]
    hh_real = hh + ph[g.n:] + noise_h[g.n:]
    if profile.law_sees_noise:
        t_eff = profile.law_temperature(j_real[g.mask], hv_real, hh_real)
    else:
        t_eff = profile.law_temperature(j[g.mask], hv, hh)
    return j_real, hv_real, hh_real, t_eff


def _decode_visible(indices, n):
    """State integers -> (R, n) spin rows; bit i of the index is spin i."""
    bits = (indices[:, None] >> np.arange(n)) & 1
    return (bits * 2 - 1).astype(np.int8)


def _sample_exact(params, r, rng):
    g = params.graph
    logw = kernels.visible_logweights(params.w, params.bv, params.bh)
    shifted = logw - logw.max()
    p = np.exp(shifted)
    cum = np.cumsum(p)
    cum /= cum[-1]
    idx = np.searchsorted(cum, rng.random(r), side="right")
    v = _decode_visible(np.minimum(idx, 2 ** g.n - 1), g.n)
    u = kernels.gibbs_halfstep(v, params.w, params.bh, rng.random((r, g.m)))
    return np.concatenate([v, u], axis=1)


def _sweep(v, params, rng):
    """One block-Gibbs sweep u|v then v|u; returns (v', u')."""
    g = params.graph
    u = kernels.gibbs_halfstep(v, params.w, params.bh,
                               rng.random((len(v), g.m)))
    v = kernels.gibbs_halfstep(u, np.ascontiguousarray(params.w.T), params.bv,
                               rng.random((len(v), g.n)))
    return v, u


def _sample_gibbs(params, r, rng, burn_in, thinning):
    g = params.graph
    v = (rng.integers(0, 2, (1, g.n)) * 2 - 1).astype(np.int8)
    u = None
    for _ in range(burn_in):
        v, u = _sweep(v, params, rng)
    out = np.empty((r, g.units), dtype=np.int8)
    for k in range(r):
        for _ in range(max(thinning, 1)):
            v, u = _sweep(v, params, rng)
        out[k, :g.n] = v[0]
        out[k, g.n:] = u[0]
    return out


def program_and_sample(profile, control, r, seed, scale=1.0, correction=None):
    """Program scale*control (minus an optional bias correction) and sample.

    Draws R joint configurations from the Boltzmann distribution of the
    perturbed instance at the hidden effective temperature. The returned
    energies are device-form energies of the sampled spins under the clean,
    unscaled `control` as passed in, so sets drawn at different scales from
    the same control share a common energy reference.
    """
    if r < 1:
        raise ValueError(f"need at least one sample, got R={r}")
    if control.graph is not profile.graph and control.graph != profile.graph:
        raise ValueError("control parameters built on a different graph")
    rng = np.random.default_rng(seed)
    j_real, hv_real, hh_real, t_eff = _perturb(profile, control, rng, scale,
                                               correction)
    realized = ControlParameters(control.graph, j_real, hv_real, hh_real,
                                 j_limit=control.j_limit,
                                 h_limit=control.h_limit)
    params = model_from_control(realized, t_eff)
    g = control.graph
    be = profile.backend
    mode = be.mode
    if mode == "auto":
        fits = g.n <= min(be.exact_limit, ENUMERATION_LIMIT)
        mode = "exact" if fits else "gibbs"
    if mode == "exact":
        if g.n > min(be.exact_limit, ENUMERATION_LIMIT):
            raise CapacityError(
                f"exact backend limited to {be.exact_limit} visible units, "
                f"model has {g.n}")
        spins = _sample_exact(params, r, rng)
    else:
        spins = _sample_gibbs(params, r, rng, be.burn_in, be.thinning)
    energies = kernels.batch_energies(spins, g.edges_joint,
                                      control.edge_values(),
                                      control.field_vector())
    seed_tag = int(seed) if isinstance(seed, (int, np.integer)) else None
    return SampleSet(spins, energies, scale=float(scale), seed=seed_tag,
                     reference=control.copy())


def gibbs_chain(params, steps, init, seed):
    """Run `steps` block-Gibbs sweeps from a full joint configuration.

    Each sweep resamples the hidden layer given the visible one and then the
    visible layer given the fresh hidden one. steps=0 returns init unchanged.
    """
    g = params.graph
    init = np.asarray(init, dtype=np.int8)
    if init.shape != (g.units,):
        raise ValueError(f"init must have shape ({g.units},), got {init.shape}")
    if steps == 0:
        return init.copy()
    rng = np.random.default_rng(seed)
    v = init[None, :g.n].copy()
    u = init[None, g.n:].copy()
    for _ in range(steps):
        v, u = _sweep(v, params, rng)
    out = np.empty(g.units, dtype=np.int8)
    out[:g.n] = v[0]
    out[g.n:] = u[0]
    return out


def calibrate_persistent_bias(profile, r, seed, temperature=None, rounds=5,
                              average_last=3):
    """Estimate persistent offsets by sampling the all-zero instance.

    Programs J = h = 0, draws R configurations, and inverts the first-order
    isolated-term magnetization formulas: dh_i = -T * atanh(<s_i>) and
    dJ_ij = -T * atanh(<s_i s_j>).

    A single inversion has two error floors on a coupled graph: every
    neighbour's magnetization leaks into the single-site formula, and the
    one programming cycle engraves that cycle's analog noise draw into the
    estimate. Both contract under iteration, so by default the estimate is
    refined over several rounds: each round programs the zero instance with
    the accumulated correction applied and re-estimates whatever offset
    remains. The accumulated estimates from the last `average_last` rounds
    are averaged, which suppresses the per-cycle noise floor as well.
    `rounds=1` is the plain single-pass inversion.

    `temperature` defaults to the profile law evaluated on each round's
    clean (corrected) instance; pass an external estimate to use that value
    for every inversion instead.
    """
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    g = profile.graph
    zero = ControlParameters.zeros(g)
    if rounds == 1:
        seeds = [seed]
    else:
        ss = seed if isinstance(seed, np.random.SeedSequence) \
            else np.random.SeedSequence(seed)
        seeds = ss.spawn(rounds)
    ei, ej = g.edges_joint[:, 0], g.edges_joint[:, 1]
    keep = min(average_last, rounds)
    acc_h = np.zeros(g.units)
    acc_j = np.zeros((g.n, g.m))
    current = None
    tail_h, tail_j, tail_t = [], [], []
    for k, round_seed in enumerate(seeds):
        if temperature is not None:
            t = float(temperature)
        elif current is None:
            t = effective_temperature(profile, zero)
        else:
            # the device law reads the clean post-correction instance
            jc = np.clip(-current.j, -zero.j_limit, zero.j_limit)
            hc = np.clip(-current.h, -zero.h_limit, zero.h_limit)
            t = profile.law_temperature(jc[g.mask], hc[:g.n], hc[g.n:])
        samples = program_and_sample(profile, zero, r, round_seed,
                                     correction=current)
        spins = samples.spins.astype(np.float64)
        mag = spins.mean(axis=0)
        corr = (spins[:, ei] * spins[:, ej]).mean(axis=0)
        if np.any(np.abs(mag) >= 1.0) or np.any(np.abs(corr) >= 1.0):
            raise SaturationError(
                "sample magnetization saturated at +-1; cannot invert atanh "
                f"(R={r} too small or offsets too large)")
        acc_h = acc_h - t * np.arctanh(mag)
        acc_j = acc_j + _scatter(g, -t * np.arctanh(corr))
        if k >= rounds - keep:
            tail_h.append(acc_h)
            tail_j.append(acc_j)
        current = BiasEstimate(h=acc_h, j=acc_j, temperature=t, n_samples=r)
    return BiasEstimate(h=np.mean(tail_h, axis=0),
                        j=np.mean(tail_j, axis=0),
                        temperature=t, n_samples=r)


# ---------------------------------------------------------------------------
# sample set serialization


def save_samples(samples, path):
    """Write a SampleSet as CSV: header energy,s_0,...,s_{V-1}.

    Scale, seed and reference parameters are not part of the format; a
    round-trip keeps spins and energies only.
    """
    units = samples.spins.shape[1]
    with open(path, "w") as fh:
        fh.write("energy," + ",".join(f"s_{i}" for i in range(units)) + "\n")
        for row, e in zip(samples.spins, samples.energies):
            fh.write("%.17g," % e + ",".join(str(int(s)) for s in row) + "\n")


def load_samples(path):
    with open(path) as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if not cols or cols[0] != "energy" or len(cols) < 2:
            raise FormatError(f"{path}:1: expected header energy,s_0,...")
        units = len(cols) - 1
        if cols[1:] != [f"s_{i}" for i in range(units)]:
            raise FormatError(f"{path}:1: malformed spin column names")
        spins, energies = [], []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != units + 1:
                raise FormatError(
                    f"{path}:{lineno}: expected {units + 1} fields, "
                    f"got {len(parts)}")
            try:
                energies.append(float(parts[0]))
                row = [int(p) for p in parts[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if any(s not in (-1, 1) for s in row):
                raise FormatError(f"{path}:{lineno}: spins must be +1 or -1")
            spins.append(row)
    if not spins:
        raise FormatError(f"{path}: no sample rows")
    return SampleSet(np.array(spins, dtype=np.int8),
                     np.array(energies, dtype=np.float64))
