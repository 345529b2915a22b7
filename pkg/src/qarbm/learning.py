"""Gradient-ascent training: annealer-assisted loop and CD-k baselines.

The annealer-assisted loop never sees the emulator's hidden temperature. Each
iteration draws a native and a rescaled sample set, estimates the effective
temperature from their energy histograms, forms model moments from the
samples (optionally augmented by importance-reweighting the rescaled set),
takes a gradient step on the model parameters (W, b), and reprograms control
parameters J = -T_hat * W, h = -T_hat * b for the next iteration.

Fixed-temperature variants skip the second draw and the estimation step and
convert with their constant T instead. CD-k baselines never touch the
annealer: model moments come from k block-Gibbs steps started at the data.

Exact average log-likelihood of the current model is logged every
`eval_every` iterations; it is computable because the visible layer stays
within enumeration capacity.
"""

import dataclasses
import time

import numpy as np

from . import annealer as annealer_mod
from . import kernels, thermometry
from .errors import DegenerateWeightsError, EstimationError
from .model import (ControlParameters, ModelParameters, MomentSet,
                    average_log_likelihood, control_from_model,
                    exact_data_averages, model_from_control)


@dataclasses.dataclass
class TrainingConfig:
    """Knobs of one training run.

    algorithm labels: "QuALe@T_eff" estimates the temperature every
    iteration; "QuALe@T_av" and "QuALe@T_phys" are fixed-temperature
    shorthands (0.1 and 0.033); "QuALe@<number>" fixes any temperature;
    "CD-<k>" is k-step contrastive divergence. d_kl defaults to r/2.
    """

    eta: float = 0.03
    iterations: int = 5000
    r: int = 1000
    d_kl: float | None = None
    algorithm: str = "QuALe@T_eff"
    warm_start_cd1: int = 100
    bias_correction: bool = False
    importance_reuse: bool = True
    eval_every: int = 50
    seed: int = 0
    t_init: float = 0.1
    noise_floor: float = 0.05
    calibration_samples: int = 100000
    log_temperatures: bool = False

    def validate(self):
        if self.eta < 0:
            raise ValueError("learning rate cannot be negative")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.r < 2:
            raise ValueError("need at least two samples per set")
        if self.eval_every < 1:
            raise ValueError("eval_every must be at least 1")
        if self.d_kl is not None and self.d_kl <= 0:
            raise ValueError("KL budget must be positive")
        if self.t_init <= 0:
            raise ValueError("initial temperature must be positive")
        if self.warm_start_cd1 < 0:
            raise ValueError("warm-start iteration count cannot be negative")
        if self.noise_floor < 0:
            raise ValueError("noise floor cannot be negative")
        if self.calibration_samples < 1:
            raise ValueError("calibration needs at least one sample")
        parse_algorithm(self.algorithm)

    def kl_budget(self):
        return self.r / 2.0 if self.d_kl is None else float(self.d_kl)


@dataclasses.dataclass
class TraceRecord:
    iteration: int
    l_av: float
    t_eff_hat: float
    x: float
    slope: float
    r_coeff: float
    grad_maxnorm: float
    wall_ms: float


@dataclasses.dataclass
class TrainingTrace:
    algorithm: str
    records: list
    events: list
    final_model: ModelParameters
    final_control: ControlParameters | None
    config: TrainingConfig
    temperatures: list


def parse_algorithm(label):
    """Split an algorithm label into ("quale", t_fixed_or_None) or ("cd", k)."""
    if label == "QuALe@T_eff":
        return ("quale", None)
    if label == "QuALe@T_av":
        return ("quale", 0.1)
    if label == "QuALe@T_phys":
        return ("quale", annealer_mod.BASE_TEMPERATURE)
    if label.startswith("QuALe@"):
        try:
            t = float(label[len("QuALe@"):])
        except ValueError:
            raise ValueError(f"unparseable algorithm label {label!r}") from None
        if t <= 0:
            raise ValueError(f"fixed temperature must be positive in {label!r}")
        return ("quale", t)
    if label.startswith("CD-"):
        try:
            k = int(label[3:])
        except ValueError:
            raise ValueError(f"unparseable algorithm label {label!r}") from None
        if k < 1:
            raise ValueError(f"CD step count must be >= 1 in {label!r}")
        return ("cd", k)
    raise ValueError(f"unknown algorithm label {label!r}")


# ---------------------------------------------------------------------------
# gradient pieces


def gradient(data_moments, model_moments):
    """Moment difference: positive phase minus negative phase."""
    if (data_moments.v.shape != model_moments.v.shape
            or data_moments.h.shape != model_moments.h.shape
            or data_moments.vh.shape != model_moments.vh.shape):
        raise ValueError("moment sets do not share the model's index sets")
    return MomentSet(v=data_moments.v - model_moments.v,
                     h=data_moments.h - model_moments.h,
                     vh=data_moments.vh - model_moments.vh)


def update(params, increment, eta):
    """One ascent step W += eta*dW, b += eta*db; off-graph entries stay zero.

    eta = 0 is allowed (useful for loop diagnostics); negative rates are not.
    """
    if eta < 0:
        raise ValueError("learning rate cannot be negative")
    g = params.graph
    return ModelParameters(g, params.w + eta * increment.vh * g.mask,
                           params.bv + eta * increment.v,
                           params.bh + eta * increment.h)


def sample_moments(samples, graph):
    """Plain sample averages of a joint SampleSet on the graph's index sets."""
    sp = samples.spins.astype(np.float64)
    ei, ej = graph.edges_joint[:, 0], graph.edges_joint[:, 1]
    vh = np.zeros((graph.n, graph.m))
    vh[graph.edges[:, 0], graph.edges[:, 1]] = \
        (sp[:, ei] * sp[:, ej]).mean(axis=0)
    return MomentSet(v=sp[:, :graph.n].mean(axis=0),
                     h=sp[:, graph.n:].mean(axis=0), vh=vh)


def cd_k_model_moments(params, starts, k, seed):
    """Model moments from k block-Gibbs steps started at each configuration.

    starts is a (D, n) array of visible configurations (normally the
    dataset). Each step samples the hidden layer given the visible one and
    then the visible layer given the fresh hidden one; after the k-th step
    the hidden layer is replaced by its conditional expectation tanh(...) to
    take variance out of the estimate.
    """
    if k < 1:
        raise ValueError("contrastive divergence needs k >= 1")
    g = params.graph
    v = np.ascontiguousarray(np.asarray(starts, dtype=np.int8))
    if v.ndim != 2 or v.shape[1] != g.n:
        raise ValueError(f"start configurations must be (D, {g.n})")
    rng = np.random.default_rng(seed)
    wt = np.ascontiguousarray(params.w.T)
    for _ in range(k):
        u = kernels.gibbs_halfstep(v, params.w, params.bh,
                                   rng.random((len(v), g.m)))
        v = kernels.gibbs_halfstep(u, wt, params.bv,
                                   rng.random((len(v), g.n)))
    vf = v.astype(np.float64)
    th = np.tanh(vf @ params.w + params.bh)
    return MomentSet(v=vf.mean(axis=0), h=th.mean(axis=0),
                     vh=(vf.T @ th) * g.mask / len(vf))


@dataclasses.dataclass
class WeightedMoments:
    moments: MomentSet
    ess: float
    total: int


def importance_weighted_moments(set_native, set_scaled, beta, beta_prime):
    """Pool native and rescaled samples with self-normalized weights.

    Native samples already target inverse temperature beta and get weight 1;
    rescaled samples were drawn at beta_prime and get
    rho(s) = exp(-(beta - beta_prime) E(s)) under the shared reference
    energies. Reports the effective sample size (sum w)^2 / sum w^2 of the
    pooled weights as a degeneracy diagnostic.
    """
    ref = set_native.reference
    if ref is None:
        raise ValueError("sample sets must carry reference parameters")
    g = ref.graph
    spins = np.concatenate([set_native.spins, set_scaled.spins])
    logw = np.concatenate([
        np.zeros(len(set_native)),
        -(beta - beta_prime) * np.asarray(set_scaled.energies)])
    with np.errstate(over="ignore"):
        w = np.exp(logw)
    total = w.sum()
    if not np.isfinite(total) or total <= 0:
        raise DegenerateWeightsError(
            "importance weights underflowed or overflowed; the rescaled set "
            "is too far from the target temperature")
    w /= total
    sp = spins.astype(np.float64)
    ei, ej = g.edges_joint[:, 0], g.edges_joint[:, 1]
    vh = np.zeros((g.n, g.m))
    vh[g.edges[:, 0], g.edges[:, 1]] = w @ (sp[:, ei] * sp[:, ej])
    moments = MomentSet(v=w @ sp[:, :g.n], h=w @ sp[:, g.n:], vh=vh)
    ess = 1.0 / np.sum(w * w)
    return WeightedMoments(moments=moments, ess=float(ess), total=len(w))


# ---------------------------------------------------------------------------
# training loops


def _initial_model(graph, rng):
    w = rng.uniform(-0.05, 0.05, (graph.n, graph.m)) * graph.mask
    return ModelParameters(graph, w, rng.uniform(-0.05, 0.05, graph.n),
                           rng.uniform(-0.05, 0.05, graph.m))


def _initial_control(graph, rng):
    j = rng.uniform(-0.05, 0.05, (graph.n, graph.m)) * graph.mask
    return ControlParameters(graph, j, rng.uniform(-0.05, 0.05, graph.n),
                             rng.uniform(-0.05, 0.05, graph.m))


def _grad_maxnorm(inc, mask):
    return max(np.abs(inc.vh[mask]).max(initial=0.0),
               np.abs(inc.v).max(initial=0.0),
               np.abs(inc.h).max(initial=0.0))


def _cd_phase(params, data, k, iterations, eta, seeds):
    for i in range(iterations):
        data_m = exact_data_averages(params, data)
        model_m = cd_k_model_moments(params, data, k, seeds[i])
        params = update(params, gradient(data_m, model_m), eta)
    return params


def cd_train(config, data):
    """Plain CD-k training; no annealer, no temperatures in the trace."""
    config.validate()
    kind, k = parse_algorithm(config.algorithm)
    if kind != "cd":
        raise ValueError(f"cd_train needs a CD-<k> label, got "
                         f"{config.algorithm!r}")
    data = np.asarray(data, dtype=np.int8)
    graph = _graph_for_data(data)
    ss = np.random.SeedSequence(config.seed)
    seeds = ss.spawn(config.iterations + 1)
    rng = np.random.default_rng(seeds[0])
    params = _initial_model(graph, rng)
    t0 = time.perf_counter()
    records, nan = [], float("nan")
    for it in range(1, config.iterations + 1):
        data_m = exact_data_averages(params, data)
        model_m = cd_k_model_moments(params, data, k, seeds[it])
        inc = gradient(data_m, model_m)
        params = update(params, inc, config.eta)
        if it % config.eval_every == 0 or it == config.iterations:
            records.append(TraceRecord(
                iteration=it,
                l_av=average_log_likelihood(params, data),
                t_eff_hat=nan, x=nan, slope=nan, r_coeff=nan,
                grad_maxnorm=_grad_maxnorm(inc, graph.mask),
                wall_ms=(time.perf_counter() - t0) * 1000.0))
    return TrainingTrace(algorithm=config.algorithm, records=records,
                         events=[], final_model=params, final_control=None,
                         config=config, temperatures=[])


def _graph_for_data(data):
    """Default graph: the Chimera-RBM whose visible layer fits the data."""
    from . import topology
    n = data.shape[1]
    side = {4: (1, 1), 8: (1, 2), 16: (2, 2)}.get(n)
    if side is None:
        raise ValueError(
            f"no default topology for {n} visible units; build the graph "
            "explicitly and use quale_train/cd_train via the harness")
    from .model import RBMGraph
    top = topology.build_chimera(*side)
    part = topology.chimera_rbm(top)
    g = RBMGraph.from_partition(part)
    if g.n != n:
        raise ValueError("topology does not match data width")
    return g


def quale_train(config, profile, data):
    """Annealer-in-the-loop training with per-iteration thermometry.

    Estimation failures at an iteration fall back to the previous estimate
    and are recorded as events rather than aborting the run.
    """
    config.validate()
    kind, t_fixed = parse_algorithm(config.algorithm)
    if kind != "quale":
        raise ValueError(f"quale_train needs a QuALe label, got "
                         f"{config.algorithm!r}")
    data = np.asarray(data, dtype=np.int8)
    graph = profile.graph
    if data.ndim != 2 or data.shape[1] != graph.n:
        raise ValueError(f"dataset must be (D, {graph.n})")
    estimate_t = t_fixed is None

    ss = np.random.SeedSequence(config.seed)
    # fixed seed layout: [init, warm-start block, calibration, per-iter pairs]
    seeds = ss.spawn(2 + config.warm_start_cd1 + 2 * config.iterations)
    s_init, s_cal = seeds[0], seeds[1]
    s_warm = seeds[2:2 + config.warm_start_cd1]
    s_iter = seeds[2 + config.warm_start_cd1:]
    rng = np.random.default_rng(s_init)

    events = []
    t_hat = config.t_init
    if config.warm_start_cd1 > 0:
        params = _initial_model(graph, rng)
        params = _cd_phase(params, data, 1, config.warm_start_cd1,
                           config.eta, s_warm)
        control, clipped = control_from_model(params, t_hat)
        if clipped:
            events.append((0, f"warm-start handoff clipped {clipped} "
                           "control values"))
    else:
        params = None  # cold start: first estimate defines W from J
        control = _initial_control(graph, rng)

    correction = None
    if config.bias_correction:
        correction = annealer_mod.calibrate_persistent_bias(
            profile, config.calibration_samples, s_cal)

    t0 = time.perf_counter()
    records, temps = [], []
    nan = float("nan")
    for it in range(1, config.iterations + 1):
        seed_nat, seed_sc = s_iter[2 * (it - 1)], s_iter[2 * (it - 1) + 1]
        native = annealer_mod.program_and_sample(
            profile, control, config.r, seed_nat, correction=correction)
        x = nan
        est = None
        if estimate_t:
            try:
                sigma = np.sqrt(thermometry.energy_variance(native))
                if sigma == 0:
                    raise EstimationError("energy spectrum degenerate")
                fac = thermometry.scaling_factor(
                    1.0 / t_hat, sigma, config.r, config.kl_budget(), "-",
                    x_max=control.scale_headroom())
                x = fac.x
                # early iterations: couplings too small to scale down through
                # the noise floor, so stretch them up instead
                if (x <= 0
                        or x * control.max_abs_coupling() < config.noise_floor):
                    fac = thermometry.scaling_factor(
                        1.0 / t_hat, sigma, config.r, config.kl_budget(), "+",
                        x_max=control.scale_headroom())
                    x = fac.x
                scaled = annealer_mod.program_and_sample(
                    profile, control, config.r, seed_sc, scale=x,
                    correction=correction)
                est = thermometry.estimate_temperature_regression(
                    native, scaled, x)
                t_hat = est.t_eff
            except EstimationError as exc:
                events.append((it, f"temperature estimation failed "
                               f"({exc}); kept T={t_hat:.6g}"))
                scaled = None
        else:
            t_hat = t_fixed
            scaled = None

        if params is None:
            params = model_from_control(control, t_hat)

        model_m = sample_moments(native, graph)
        if config.importance_reuse and scaled is not None:
            try:
                wm = importance_weighted_moments(
                    native, scaled, 1.0 / t_hat, x / t_hat)
                model_m = wm.moments
            except DegenerateWeightsError as exc:
                events.append((it, f"importance reuse degenerate ({exc}); "
                               "native moments only"))
        data_m = exact_data_averages(params, data)
        inc = gradient(data_m, model_m)
        params = update(params, inc, config.eta)
        control, _ = control_from_model(params, t_hat,
                                        j_limit=control.j_limit,
                                        h_limit=control.h_limit)

        if config.log_temperatures:
            t_pl = nan
            try:
                pl = thermometry.estimate_temperature_pseudolikelihood(
                    native, native.reference)
                t_pl = pl.t_eff
            except EstimationError:
                pass
            temps.append((it, t_hat if estimate_t else nan, t_pl))

        if it % config.eval_every == 0 or it == config.iterations:
            records.append(TraceRecord(
                iteration=it,
                l_av=average_log_likelihood(params, data),
                t_eff_hat=t_hat,
                x=x,
                slope=est.slope if est is not None else nan,
                r_coeff=est.r_coeff if est is not None else nan,
                grad_maxnorm=_grad_maxnorm(inc, graph.mask),
                wall_ms=(time.perf_counter() - t0) * 1000.0))
    return TrainingTrace(algorithm=config.algorithm, records=records,
                         events=events, final_model=params,
                         final_control=control, config=config,
                         temperatures=temps)


def train(config, data, profile=None):
    """Dispatch on the algorithm label."""
    kind, _ = parse_algorithm(config.algorithm)
    if kind == "cd":
        return cd_train(config, data)
    if profile is None:
        raise ValueError("QuALe training needs an annealer profile")
    return quale_train(config, profile, data)


# ---------------------------------------------------------------------------
# trace serialization

TRACE_COLUMNS = "iter,algo,L_av,T_eff_hat,x,slope,r_coeff,grad_maxnorm,wall_ms"


def save_trace(trace, path):
    with open(path, "w") as fh:
        fh.write(TRACE_COLUMNS + "\n")
        for r in trace.records:
            fh.write("%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n"
                     % (r.iteration, trace.algorithm, r.l_av, r.t_eff_hat,
                        r.x, r.slope, r.r_coeff, r.grad_maxnorm, r.wall_ms))


def load_trace_rows(path):
    """Trace CSV rows as (iteration, algo, values dict)."""
    from .errors import FormatError
    cols = TRACE_COLUMNS.split(",")
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TRACE_COLUMNS:
            raise FormatError(f"{path}:1: expected trace header")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(cols):
                raise FormatError(f"{path}:{lineno}: expected "
                                  f"{len(cols)} fields")
            try:
                vals = {c: (parts[i] if c == "algo" else float(parts[i]))
                        for i, c in enumerate(cols)}
                vals["iter"] = int(parts[0])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            rows.append(vals)
    return rows
