"""Experiment orchestration: datasets, config files, presets, artifacts.

An experiment is a list of curves (algorithm label plus training-flag
overrides) run for a number of repeats each. Every job derives its own seed
from the master seed by job index, so results are independent of how jobs are
scheduled; a parent process writes all artifacts in fixed job order. Output
artifacts are plain CSV/text and are byte-reproducible from (config, seed),
with the sole exception of the wall_ms trace column.
"""

import dataclasses
import itertools
import multiprocessing
import os

import numpy as np

from . import annealer as annealer_mod
from . import learning, thermometry, topology
from .errors import CapacityError, ConfigError, EstimationError, FormatError
from .model import RBMGraph


@dataclasses.dataclass
class Dataset:
    datapoints: np.ndarray  # (D, N) int8, entries +-1
    name: str

    def __len__(self):
        return len(self.datapoints)


def generate_bas(n):
    """All distinct n x n bars-and-stripes images, flattened row-major.

    Rows patterns set each image row to one color; column patterns set each
    column. The two uniform images appear in both families and are kept once.
    Images are returned in lexicographic order, which is stable and makes the
    set trivially closed under transposition.
    """
    if n < 1:
        raise ValueError("side length must be at least 1")
    if n > 5:
        raise CapacityError(
            f"exhaustive bars-and-stripes generation supports sides up to 5, "
            f"got {n}")
    signs = np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int8)
    stripes = np.repeat(signs, n, axis=1)              # constant rows
    bars = np.tile(signs, (1, n))                      # constant columns
    images = np.unique(np.concatenate([stripes, bars]), axis=0)
    return Dataset(datapoints=images, name=f"bas{n}")


def save_dataset(dataset, path):
    k = dataset.datapoints.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join(f"s_{i}" for i in range(k)) + "\n")
        for row in dataset.datapoints:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


def load_dataset(path, name=None):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("s_0"):
            raise FormatError(f"{path}:1: expected a spin-column header")
        width = len(header.split(","))
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width:
                raise FormatError(f"{path}:{lineno}: expected {width} fields")
            try:
                vals = [int(p) for p in parts]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if any(v not in (-1, 1) for v in vals):
                raise FormatError(f"{path}:{lineno}: spins must be +-1")
            rows.append(vals)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return Dataset(datapoints=np.array(rows, dtype=np.int8),
                   name=name or os.path.basename(path))


# ---------------------------------------------------------------------------
# bias-estimate files: header `n m temperature n_samples`, then h/J lines


def save_bias_estimate(est, path):
    n, m = est.j.shape
    with open(path, "w") as fh:
        fh.write("%d %d %.17g %d\n" % (n, m, est.temperature, est.n_samples))
        for i, val in enumerate(est.h):
            fh.write("h %d %.17g\n" % (i, val))
        for i in range(n):
            for j in range(m):
                if est.j[i, j] != 0.0:
                    fh.write("J %d %d %.17g\n" % (i, j, est.j[i, j]))


def load_bias_estimate(path, graph):
    h = np.zeros(graph.units)
    j = np.zeros((graph.n, graph.m))
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 4:
            raise FormatError(f"{path}:1: expected `n m temperature n_samples`")
        try:
            n, m = int(header[0]), int(header[1])
            temperature, n_samples = float(header[2]), int(header[3])
        except ValueError as exc:
            raise FormatError(f"{path}:1: {exc}") from None
        if (n, m) != (graph.n, graph.m):
            raise FormatError(f"{path}:1: size {n}x{m} does not match the "
                              f"{graph.n}x{graph.m} graph")
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "h" and len(parts) == 3:
                    h[int(parts[1])] = float(parts[2])
                elif parts[0] == "J" and len(parts) == 4:
                    a, b = int(parts[1]), int(parts[2])
                    if not graph.mask[a, b]:
                        raise FormatError(
                            f"{path}:{lineno}: edge ({a}, {b}) is off-graph")
                    j[a, b] = float(parts[3])
                else:
                    raise FormatError(f"{path}:{lineno}: unrecognized line")
            except (ValueError, IndexError) as exc:
                if isinstance(exc, FormatError):
                    raise
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    return annealer_mod.BiasEstimate(h=h, j=j, temperature=temperature,
                                     n_samples=n_samples)


# ---------------------------------------------------------------------------
# configuration


def parse_config_text(text, origin="<config>"):
    """Flat `key = value` lines; `#` starts a comment; keys may be dotted."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected `key = value`")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key:
            raise ConfigError(f"{origin}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config_text(fh.read(), origin=str(path))


def _parse_bool(key, value):
    low = value.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"key {key!r}: expected a boolean, got {value!r}")


ALGORITHM_PRESET = ("QuALe@T_eff", "QuALe@T_av", "QuALe@0.08", "QuALe@0.16",
                    "CD-1", "CD-10", "CD-100")

# curve name -> training-config overrides; "default" is the shared baseline
# for all three ablation comparisons
GADGET_PRESET = (
    ("default", {}),
    ("bias-corrected", {"bias_correction": True}),
    ("no-reuse", {"importance_reuse": False}),
    ("cold-start", {"warm_start_cd1": 0}),
)


@dataclasses.dataclass
class ExperimentConfig:
    rows: int = 2
    cols: int = 2
    side: int = 4
    train: learning.TrainingConfig = None
    annealer: dict = None
    curves: tuple = ()         # (name, algorithm, overrides dict)
    repeats: int = 5
    vary_location: bool = False
    output: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.train is None:
            self.train = learning.TrainingConfig()
        if self.annealer is None:
            self.annealer = {}
        if not self.curves:
            self.curves = tuple((_sanitize(label), label, {})
                                for label in ALGORITHM_PRESET)

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("topology dimensions must be positive")
        if self.repeats < 1:
            raise ConfigError("need at least one repeat")
        if self.side * self.side != 4 * self.rows * self.cols:
            raise ConfigError(
                f"dataset side {self.side} gives {self.side ** 2} pixels but "
                f"the {self.rows}x{self.cols} topology has "
                f"{4 * self.rows * self.cols} visible units")
        for name, label, overrides in self.curves:
            learning.parse_algorithm(label)
            cfg = dataclasses.replace(self.train, algorithm=label, **overrides)
            try:
                cfg.validate()
            except ValueError as exc:
                raise ConfigError(f"curve {name!r}: {exc}") from None

    def graph(self):
        top = topology.build_chimera(self.rows, self.cols)
        return RBMGraph.from_partition(topology.chimera_rbm(top))

    def profile(self, graph, location_seed):
        return annealer_mod.AnnealerProfile(graph=graph,
                                            location_seed=location_seed,
                                            **self.annealer)

    def resolved_items(self):
        """Sorted `key = value` pairs covering every knob, for the echo file."""
        # the output path is deliberately not echoed: artifacts stay
        # byte-identical when the same experiment lands in another directory
        items = {
            "topology.rows": self.rows, "topology.cols": self.cols,
            "dataset.side": self.side, "experiment.repeats": self.repeats,
            "experiment.vary_location": self.vary_location,
            "experiment.seed": self.seed,
            "experiment.curves": ";".join(n for n, _, _ in self.curves),
        }
        t = self.train
        for f in dataclasses.fields(t):
            if f.name in ("algorithm", "seed"):
                continue  # set per curve / per job
            items[f"train.{f.name}"] = getattr(t, f.name)
        g = self.graph()
        prof = self.profile(g, 0)
        for key in ("law", "t0", "a", "b", "sigma_pb_h", "sigma_pb_j",
                    "sigma_noise_h", "sigma_noise_j", "law_sees_noise",
                    "base_temperature"):
            items[f"annealer.{key}"] = getattr(prof, key)
        be = prof.backend
        items["annealer.backend"] = be.mode
        items["annealer.exact_limit"] = be.exact_limit
        items["annealer.burn_in"] = be.burn_in
        items["annealer.thinning"] = be.thinning
        return sorted(items.items())


_TRAIN_INT = {"iterations", "r", "warm_start_cd1", "eval_every",
              "calibration_samples"}
_TRAIN_FLOAT = {"eta", "d_kl", "t_init", "noise_floor"}
_TRAIN_BOOL = {"bias_correction", "importance_reuse", "log_temperatures"}
_ANNEALER_FLOAT = {"t0", "a", "b", "sigma_pb_h", "sigma_pb_j",
                   "sigma_noise_h", "sigma_noise_j", "base_temperature"}


def config_from_mapping(mapping, preset=None):
    """Build an ExperimentConfig from flat dotted keys; unknown keys error."""
    cfg = ExperimentConfig()
    if preset == "algorithms" or preset is None:
        pass
    elif preset == "gadgets":
        cfg.curves = tuple((name, "QuALe@T_eff", dict(ov))
                           for name, ov in GADGET_PRESET)
        cfg.vary_location = True
    else:
        raise ConfigError(f"unknown preset {preset!r}")
    backend = {}
    for key, value in mapping.items():
        try:
            if key == "topology.rows":
                cfg.rows = int(value)
            elif key == "topology.cols":
                cfg.cols = int(value)
            elif key == "dataset.side":
                cfg.side = int(value)
            elif key == "experiment.repeats":
                cfg.repeats = int(value)
            elif key == "experiment.seed":
                cfg.seed = int(value)
            elif key == "experiment.output":
                cfg.output = value
            elif key == "experiment.vary_location":
                cfg.vary_location = _parse_bool(key, value)
            elif key == "experiment.algorithms":
                labels = [v.strip() for v in value.split(",") if v.strip()]
                if not labels:
                    raise ConfigError("experiment.algorithms is empty")
                cfg.curves = tuple((_sanitize(lab), lab, {})
                                   for lab in labels)
            elif key.startswith("train."):
                name = key[len("train."):]
                if name in _TRAIN_INT:
                    setattr(cfg.train, name, int(value))
                elif name in _TRAIN_FLOAT:
                    setattr(cfg.train, name,
                            None if value.lower() == "none" else float(value))
                elif name in _TRAIN_BOOL:
                    setattr(cfg.train, name, _parse_bool(key, value))
                else:
                    raise ConfigError(f"unknown config key {key!r}")
            elif key.startswith("annealer."):
                name = key[len("annealer."):]
                if name in _ANNEALER_FLOAT:
                    cfg.annealer[name] = float(value)
                elif name == "law":
                    cfg.annealer[name] = value
                elif name == "law_sees_noise":
                    cfg.annealer[name] = _parse_bool(key, value)
                elif name == "location_seed":
                    cfg.annealer[name] = int(value)
                elif name == "backend":
                    backend["mode"] = value
                elif name in ("exact_limit", "burn_in", "thinning"):
                    backend[name] = int(value)
                else:
                    raise ConfigError(f"unknown config key {key!r}")
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"key {key!r}: {exc}") from None
    if backend:
        cfg.annealer["backend"] = annealer_mod.SamplerBackend(**backend)
    return cfg


# ---------------------------------------------------------------------------
# experiment execution


@dataclasses.dataclass
class Job:
    index: int
    curve: str
    algorithm: str
    repeat: int
    location_seed: int
    train: learning.TrainingConfig


def _sanitize(name):
    return name.replace("@", "-").replace("/", "-")


def build_jobs(config):
    """Expand curves x repeats into seeded jobs, ordered by (curve, repeat)."""
    config.validate()
    n_jobs = len(config.curves) * config.repeats
    seed_ints = np.random.SeedSequence(config.seed).generate_state(
        n_jobs, dtype=np.uint64)
    base_location = config.annealer.get("location_seed", 0)
    jobs = []
    for (name, label, overrides), rep in itertools.product(
            config.curves, range(config.repeats)):
        idx = len(jobs)
        train = dataclasses.replace(config.train, algorithm=label,
                                    seed=int(seed_ints[idx]), **overrides)
        loc = base_location + rep if config.vary_location else base_location
        jobs.append(Job(index=idx, curve=name, algorithm=label, repeat=rep,
                        location_seed=loc, train=train))
    return jobs


def _run_job(args):
    config, job = args
    kind, _ = learning.parse_algorithm(job.algorithm)
    data = generate_bas(config.side).datapoints
    if kind == "cd":
        return learning.cd_train(job.train, data)
    graph = config.graph()
    ann = dict(config.annealer)
    ann.pop("location_seed", None)
    profile = annealer_mod.AnnealerProfile(graph=graph,
                                           location_seed=job.location_seed,
                                           **ann)
    return learning.quale_train(job.train, profile, data)


def _trace_path(outdir, job):
    return os.path.join(outdir,
                        f"trace_{_sanitize(job.curve)}_rep{job.repeat}.csv")


def _write_metadata(path, config, job, trace):
    lines = [f"{k} = {v}" for k, v in config.resolved_items()]
    lines.append(f"job.curve = {job.curve}")
    lines.append(f"job.algorithm = {job.algorithm}")
    lines.append(f"job.repeat = {job.repeat}")
    lines.append(f"job.location_seed = {job.location_seed}")
    lines.append(f"job.seed = {job.train.seed}")
    for field, val in sorted(dataclasses.asdict(job.train).items()):
        lines.append(f"job.train.{field} = {val}")
    for it, msg in trace.events:
        lines.append(f"event.{it} = {msg}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_temps(path, temperatures):
    with open(path, "w") as fh:
        fh.write("iter,t_regression,t_pseudolikelihood\n")
        for it, t_reg, t_pl in temperatures:
            fh.write("%d,%.17g,%.17g\n" % (it, t_reg, t_pl))


def summarize(curve_rows):
    """Median and quartiles of L_av per (curve, iteration) across repeats.

    curve_rows maps curve name -> list of per-repeat row lists as loaded from
    trace CSVs. Returns summary lines (without header) in curve-then-iteration
    order.
    """
    lines = []
    for curve, repeats in curve_rows.items():
        iters = [r["iter"] for r in repeats[0]]
        for rep in repeats[1:]:
            if [r["iter"] for r in rep] != iters:
                raise FormatError(
                    f"curve {curve!r}: repeats disagree on logged iterations")
        for i, it in enumerate(iters):
            vals = np.array([rep[i]["L_av"] for rep in repeats])
            q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
            lines.append("%s,%d,%.17g,%.17g,%.17g"
                         % (curve, it, med, q1, q3))
    return lines


SUMMARY_HEADER = "curve,iter,l_av_median,l_av_q1,l_av_q3"


def _write_summary(path, lines):
    with open(path, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for line in lines:
            fh.write(line + "\n")


def _write_config_echo(path, config):
    with open(path, "w") as fh:
        for key, val in config.resolved_items():
            fh.write(f"{key} = {val}\n")


def _diagnostics_artifact(config, jobs, traces, outdir):
    """Fit one regression on the first estimated-T curve's final control."""
    pick = None
    for job, trace in zip(jobs, traces):
        kind, fixed = learning.parse_algorithm(job.algorithm)
        if kind == "quale" and fixed is None and job.repeat == 0:
            pick = (job, trace)
            break
    if pick is None:
        return
    job, trace = pick
    control = trace.final_control
    graph = config.graph()
    ann = dict(config.annealer)
    ann.pop("location_seed", None)
    profile = annealer_mod.AnnealerProfile(graph=graph,
                                           location_seed=job.location_seed,
                                           **ann)
    r = job.train.r
    ss = np.random.SeedSequence(config.seed, spawn_key=(0xD1A6,))
    s_nat, s_sc = ss.spawn(2)
    try:
        native = annealer_mod.program_and_sample(profile, control, r, s_nat)
        t_hat = trace.records[-1].t_eff_hat
        sigma = np.sqrt(thermometry.energy_variance(native))
        fac = thermometry.scaling_factor(1.0 / t_hat, sigma, r,
                                         job.train.kl_budget(), "-",
                                         x_max=control.scale_headroom())
        x = fac.x
        if x <= 0 or x * control.max_abs_coupling() < job.train.noise_floor:
            fac = thermometry.scaling_factor(1.0 / t_hat, sigma, r,
                                             job.train.kl_budget(), "+",
                                             x_max=control.scale_headroom())
            x = fac.x
        scaled = annealer_mod.program_and_sample(profile, control, r, s_sc,
                                                 scale=x)
        est = thermometry.estimate_temperature_regression(native, scaled, x)
    except (EstimationError, ValueError):
        return  # diagnostics are best-effort; the traces already exist
    thermometry.save_regression_diagnostics(
        est, x, os.path.join(outdir, "diagnostics.csv"))


def run_experiment(config, workers=1):
    """Run all jobs and write every artifact; returns the output directory.

    Jobs may execute on a process pool, but artifacts are written by this
    process in job order, so outputs are identical for any worker count
    (timing columns aside).
    """
    config.validate()
    jobs = build_jobs(config)
    outdir = config.output
    os.makedirs(outdir, exist_ok=True)
    work = [(config, job) for job in jobs]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            traces = pool.map(_run_job, work)
    else:
        traces = [_run_job(w) for w in work]
    curve_rows = {}
    for job, trace in zip(jobs, traces):
        path = _trace_path(outdir, job)
        learning.save_trace(trace, path)
        _write_metadata(path[:-4] + ".meta", config, job, trace)
        if trace.temperatures:
            _write_temps(os.path.join(
                outdir, f"temps_{_sanitize(job.curve)}_rep{job.repeat}.csv"),
                trace.temperatures)
        curve_rows.setdefault(job.curve, []).append(learning.load_trace_rows(path))
    _write_summary(os.path.join(outdir, "summary.csv"), summarize(curve_rows))
    _write_config_echo(os.path.join(outdir, "experiment.meta"), config)
    _diagnostics_artifact(config, jobs, traces, outdir)
    return outdir


# ---------------------------------------------------------------------------
# report: recompute summaries, compare runs


def _scan_traces(outdir):
    """Map curve -> repeat-ordered trace rows from the files on disk."""
    names = sorted(os.listdir(outdir))
    curve_rows = {}
    for name in names:
        if not (name.startswith("trace_") and name.endswith(".csv")):
            continue
        stem = name[len("trace_"):-len(".csv")]
        curve, _, rep = stem.rpartition("_rep")
        if not curve or not rep.isdigit():
            raise FormatError(f"{name}: cannot parse curve and repeat")
        curve_rows.setdefault(curve, []).append(
            (int(rep), learning.load_trace_rows(os.path.join(outdir, name))))
    if not curve_rows:
        raise FormatError(f"{outdir}: no trace files")
    return {curve: [rows for _, rows in sorted(entries)]
            for curve, entries in sorted(curve_rows.items())}


def recompute_summary(outdir):
    return summarize(_scan_traces(outdir))


def summary_matches(outdir):
    """True when the stored summary equals a recomputation from the traces."""
    path = os.path.join(outdir, "summary.csv")
    with open(path) as fh:
        stored = fh.read().splitlines()
    if not stored or stored[0] != SUMMARY_HEADER:
        raise FormatError(f"{path}:1: expected summary header")
    return sorted(stored[1:]) == sorted(recompute_summary(outdir))


def _strip_wall_ms(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    cols = lines[0].split(",")
    if "wall_ms" not in cols:
        return "\n".join(lines)
    drop = cols.index("wall_ms")
    kept = []
    for line in lines:
        parts = line.split(",")
        del parts[drop]
        kept.append(",".join(parts))
    return "\n".join(kept)


def compare_directories(dir_a, dir_b):
    """Byte-compare artifacts, ignoring wall-clock columns; returns mismatches."""
    names_a = {n for n in os.listdir(dir_a) if not n.startswith(".")}
    names_b = {n for n in os.listdir(dir_b) if not n.startswith(".")}
    mismatches = [f"only in {dir_a}: {n}" for n in sorted(names_a - names_b)]
    mismatches += [f"only in {dir_b}: {n}" for n in sorted(names_b - names_a)]
    for name in sorted(names_a & names_b):
        pa, pb = os.path.join(dir_a, name), os.path.join(dir_b, name)
        if name.endswith(".csv"):
            same = _strip_wall_ms(pa) == _strip_wall_ms(pb)
        else:
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                same = fa.read() == fb.read()
        if not same:
            mismatches.append(f"differs: {name}")
    return mismatches
