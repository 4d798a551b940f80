"""Experiment harness: scenario configs, Monte-Carlo runs, sweeps, exports.

A scenario bundles dimensions, link budget, feature generator, coding
precision, scheme list, solver options and Monte-Carlo counts.  A run draws
channels, estimates feature statistics from synthetic training samples,
builds every requested precoder, and evaluates the rate-reduction value,
MAP accuracy, normalized LMMSE error and latency per (draw, scheme).

Reproducibility: every random stream is keyed by
``(master_seed, draw_index, stream_id[, scheme_key])`` through
``numpy.random.SeedSequence``, where ``stream_id`` is a fixed constant per
purpose and ``scheme_key`` is the CRC-32 of the scheme name.  Adding or
removing schemes therefore never perturbs the randomness of the others, and
channel draws can be executed by parallel workers without changing results
(aggregation is ordered by draw index).
"""

import dataclasses
import hashlib
import json
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import baselines, classifier, objective
from .bca import SolverOptions, solve_bca
from .channel import ChannelRealization, LinkBudget, SystemDims, draw_channel
from .features import GmSpec, estimate_stats, orthogonal_spec, sample_gm, sphere_spec
from .objective import Mcr2Params, PrecoderSet, delta_r
from .pga import ellipsoid_volume, solve_pga

__all__ = [
    "ScenarioConfig",
    "RunRecord",
    "run_scenario",
    "sweep",
    "sphere_experiment",
    "SCHEMES",
]

SCHEMES = ("mcr2", "pga", "lmmse", "iwf", "random", "identity")

# Stream ids for seed derivation (documented constants; do not renumber).
STREAM_CHANNEL = 1
STREAM_TRAIN = 2
STREAM_TEST = 3
STREAM_NOISE = 4
STREAM_SOLVER = 5


def child_seed(master, draw, stream, scheme=None):
    """Derive an independent child seed for one random stream."""
    entropy = [int(master), int(draw), int(stream)]
    if scheme is not None:
        entropy.append(zlib.crc32(scheme.encode("utf-8")))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def dbm_to_watts(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass
class ScenarioConfig:
    """Full experiment description, serializable to JSON."""

    dims: SystemDims
    budget: LinkBudget
    gm: GmSpec
    eps: float = 1e-3
    schemes: tuple = ("mcr2", "random")
    solver: SolverOptions = field(default_factory=SolverOptions)
    channel_draws: int = 10
    train_samples: int = 2000
    test_samples: int = 500
    noise_trials: int = 1
    seed: int = 0
    block_fading: bool = True
    store_precoders: bool = False

    def __post_init__(self):
        self.schemes = tuple(self.schemes)
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes: {sorted(unknown)}")
        if min(self.channel_draws, self.train_samples, self.test_samples,
               self.noise_trials) < 1:
            raise ValueError("Monte-Carlo counts must be >= 1")
        if self.gm.dim != self.dims.feature_dim:
            raise ValueError("feature generator dimension does not match dims")

    def to_json(self):
        return {
            "dims": self.dims.to_json(),
            "budget": self.budget.to_json(),
            "gm": self.gm.to_json(),
            "eps": self.eps,
            "schemes": list(self.schemes),
            "solver": dataclasses.asdict(self.solver),
            "counts": {
                "channel_draws": self.channel_draws,
                "train_samples": self.train_samples,
                "test_samples": self.test_samples,
                "noise_trials": self.noise_trials,
            },
            "seed": self.seed,
            "block_fading": self.block_fading,
            "store_precoders": self.store_precoders,
        }

    @classmethod
    def from_json(cls, obj):
        counts = obj.get("counts", {})
        solver = SolverOptions(**obj.get("solver", {}))
        gm_obj = obj["gm"]
        if isinstance(gm_obj, dict) and "type" in gm_obj:
            gm = _gm_from_descriptor(gm_obj)
        else:
            gm = GmSpec.from_json(gm_obj)
        return cls(
            dims=SystemDims.from_json(obj["dims"]),
            budget=LinkBudget.from_json(obj["budget"]),
            gm=gm,
            eps=float(obj.get("eps", 1e-3)),
            schemes=tuple(obj.get("schemes", ["mcr2", "random"])),
            solver=solver,
            channel_draws=int(counts.get("channel_draws", 10)),
            train_samples=int(counts.get("train_samples", 2000)),
            test_samples=int(counts.get("test_samples", 500)),
            noise_trials=int(counts.get("noise_trials", 1)),
            seed=int(obj.get("seed", 0)),
            block_fading=bool(obj.get("block_fading", True)),
            store_precoders=bool(obj.get("store_precoders", False)),
        )

    def config_hash(self):
        blob = json.dumps(self.to_json(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    def replace(self, **kwargs):
        return dataclasses.replace(self, **kwargs)

    @classmethod
    def table_defaults(cls, devices=2, p0_dbm=0.0, slots=1, rx_antennas=8,
                       feature_dim_per_device=8, tx_antennas_per_device=4,
                       classes=10, seed=0, **kwargs):
        """Default complex-mode scenario: two to three devices, 8 features
        and 4 transmit antennas each, 10 kHz band, -170 dBm/Hz noise,
        240 m distance, Rician factor 1, coding precision 1e-3."""
        dims = SystemDims(
            feature_dims=(feature_dim_per_device,) * devices,
            tx_antennas=(tx_antennas_per_device,) * devices,
            rx_antennas=rx_antennas,
            slots=slots,
            mode="complex",
        )
        budget = LinkBudget(power_w=(dbm_to_watts(p0_dbm),) * devices)
        gm = orthogonal_spec(classes, dims.feature_dim, seed=seed + 1000)
        return cls(dims=dims, budget=budget, gm=gm, seed=seed, **kwargs)


def _gm_from_descriptor(obj):
    kind = obj["type"]
    if kind == "sphere3":
        return sphere_spec(cov_scale=float(obj.get("cov_scale", 0.02)))
    if kind == "orthogonal":
        return orthogonal_spec(
            classes=int(obj["classes"]),
            dim=int(obj["dim"]),
            seed=int(obj.get("seed", 0)),
            cov_scale=float(obj.get("cov_scale", 0.02)),
            sphere_project=bool(obj.get("sphere_project", True)),
        )
    if kind == "explicit":
        return GmSpec.from_json(obj)
    raise ValueError(f"unknown feature generator type: {kind}")


@dataclass
class RunRecord:
    """Results of one scenario run."""

    config: dict
    config_hash: str
    rows: list
    traces: list
    aggregates: dict
    precoders: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)

    def to_json(self):
        out = {
            "config": self.config,
            "config_hash": self.config_hash,
            "aggregates": self.aggregates,
        }
        if self.precoders:
            out["precoders"] = self.precoders
        return out


METRICS = ("delta_r", "accuracy", "nmse", "latency_s")


def make_precoder(scheme, config, chan, stats, params, draw):
    """Build one scheme's precoder for a channel draw.

    Returns ``(PrecoderSet, SolverReport or None)``.
    """
    dims = config.dims
    powers = config.budget.power_for(dims.devices)
    budgets = tuple(dims.slots * p for p in powers)
    seed = child_seed(config.seed, draw, STREAM_SOLVER, scheme)
    opts = dataclasses.replace(config.solver, seed=seed)
    if scheme == "mcr2":
        v0 = baselines.random_precoder(dims, stats, budgets, seed=seed)
        return solve_bca(v0, chan, stats, params, opts)
    if scheme == "pga":
        v0 = baselines.random_precoder(dims, stats, budgets, seed=seed)
        return solve_pga(v0, chan, stats, params, opts)
    if scheme == "lmmse":
        return baselines.lmmse_precoder(chan, stats, budgets, opts)
    if scheme == "iwf":
        qs, report = baselines.iwf_covariances(chan, budgets, opts)
        v = baselines.precoder_from_covariances(qs, stats, budgets, chan.mode)
        return v, report
    if scheme == "random":
        return baselines.random_precoder(dims, stats, budgets, seed=seed), None
    if scheme == "identity":
        return baselines.identity_precoder(dims, min(powers)), None
    raise ValueError(f"unknown scheme: {scheme}")


def _run_draw(config, draw):
    """All metrics for one channel draw (independent parallel task)."""
    dims = config.dims
    chan = draw_channel(dims, config.budget, config.block_fading,
                        seed=child_seed(config.seed, draw, STREAM_CHANNEL))
    train = sample_gm(config.gm, config.train_samples,
                      seed=child_seed(config.seed, draw, STREAM_TRAIN))
    test = sample_gm(config.gm, config.test_samples,
                     seed=child_seed(config.seed, draw, STREAM_TEST))
    stats = estimate_stats(train, dims.feature_dims, dims.mode)
    params = Mcr2Params.for_scenario(config.eps, dims.slots, dims.rx_antennas,
                                     chan.noise_power)
    tr_cov = float(np.real(np.trace(stats.cov)))
    rows, traces, stored = [], [], {}
    for scheme in config.schemes:
        try:
            v, report = make_precoder(scheme, config, chan, stats, params, draw)
            value = delta_r(v, chan, stats, params)
            accuracy, _ = classifier.eval_accuracy(
                v, chan, stats, test, config.noise_trials,
                seed=child_seed(config.seed, draw, STREAM_NOISE))
            nmse = baselines.lmmse_mse(v, chan, stats) / tr_cov
            latency = baselines.proposed_latency(dims.slots, config.budget.bandwidth_hz)
        except Exception as exc:
            raise RuntimeError(f"draw {draw}, scheme {scheme}: {exc}") from exc
        rows.append({"draw": draw, "scheme": scheme, "delta_r": value,
                     "accuracy": accuracy, "nmse": nmse, "latency_s": latency})
        if report is not None:
            traces.append({"draw": draw, "scheme": scheme, **report.to_json()})
        if config.store_precoders:
            stored[scheme] = v.to_json()
    return rows, traces, stored


def run_scenario(config, out_dir=None, jobs=1):
    """Run every channel draw and aggregate the per-scheme metrics.

    With ``jobs > 1`` draws execute in a process pool; results are reduced
    in draw order, so the output does not depend on the worker count.
    Writes ``results.csv``, ``run.json`` and ``traces.json`` when an output
    directory is given.
    """
    draws = list(range(config.channel_draws))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_draw, [config] * len(draws), draws))
    else:
        outcomes = [_run_draw(config, d) for d in draws]

    rows, traces, precoders = [], [], {}
    for d, (r, t, stored) in zip(draws, outcomes):
        rows.extend(r)
        traces.extend(t)
        if stored:
            precoders[str(d)] = stored
    record = RunRecord(
        config=config.to_json(),
        config_hash=config.config_hash(),
        rows=rows,
        traces=traces,
        aggregates=_aggregate(rows, config.schemes),
        precoders=precoders,
    )
    if out_dir is not None:
        write_outputs(record, out_dir)
    return record


def _aggregate(rows, schemes):
    out = {}
    for scheme in schemes:
        vals = {m: [r[m] for r in rows if r["scheme"] == scheme] for m in METRICS}
        out[scheme] = {}
        for m, xs in vals.items():
            xs = np.asarray(xs, dtype=float)
            mean = float(xs.mean()) if xs.size else float("nan")
            stderr = float(xs.std(ddof=1) / np.sqrt(xs.size)) if xs.size > 1 else 0.0
            out[scheme][m] = {"mean": mean, "stderr": stderr, "n": int(xs.size)}
    return out


def write_outputs(record, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_results_csv(record.rows, os.path.join(out_dir, "results.csv"))
    _dump_json(record.to_json(), os.path.join(out_dir, "run.json"))
    _dump_json({"traces": record.traces}, os.path.join(out_dir, "traces.json"))
    if record.geometry:
        _dump_json(record.geometry, os.path.join(out_dir, "geometry.json"))


def write_results_csv(rows, path):
    """Long-format CSV: one (draw, scheme, metric, value) line per metric."""
    with open(path, "w", newline="") as fh:
        fh.write("draw,scheme,metric,value\n")
        for r in rows:
            for m in METRICS:
                fh.write(f"{r['draw']},{r['scheme']},{m},{r[m]!r}\n")


def _dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


SWEEP_AXES = ("power", "slots", "rx_antennas")


def _apply_axis(config, axis, value):
    if axis == "power":
        watts = (dbm_to_watts(float(value)),) * config.dims.devices
        return config.replace(budget=dataclasses.replace(config.budget, power_w=watts))
    if axis == "slots":
        return config.replace(dims=dataclasses.replace(config.dims, slots=int(value)))
    if axis == "rx_antennas":
        return config.replace(dims=dataclasses.replace(config.dims, rx_antennas=int(value)))
    raise ValueError(f"unknown sweep axis: {axis} (one of {SWEEP_AXES})")


def sweep(config, axis, values, out_dir=None, jobs=1):
    """Clone the scenario along one axis and run each point.

    Returns the list of :class:`RunRecord`; writes a wide CSV with one row
    per (value, scheme) when an output directory is given.
    """
    values = list(values)
    if not values:
        raise ValueError("sweep values must be non-empty")
    records = []
    for value in values:
        sub = _apply_axis(config, axis, value)
        sub_dir = None
        if out_dir is not None:
            sub_dir = os.path.join(out_dir, f"{axis}_{value}")
        records.append((value, run_scenario(sub, out_dir=sub_dir, jobs=jobs)))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_sweep_csv(records, axis, os.path.join(out_dir, "results.csv"))
    return [r for _, r in records]


def write_sweep_csv(records, axis, path):
    """Wide CSV: axis value, scheme, then mean/stderr per metric."""
    cols = []
    for m in METRICS:
        cols.extend([f"{m}_mean", f"{m}_stderr"])
    with open(path, "w", newline="") as fh:
        fh.write("axis,value,scheme," + ",".join(cols) + "\n")
        for value, record in records:
            for scheme, agg in record.aggregates.items():
                cells = []
                for m in METRICS:
                    cells.extend([repr(agg[m]["mean"]), repr(agg[m]["stderr"])])
                fh.write(f"{axis},{value!r},{scheme}," + ",".join(cells) + "\n")


def sphere_experiment(snr_db, seed, draws=1, eps=1e-3, out_dir=None,
                      test_samples=300, noise_trials=1, solver=None):
    """Three-class sphere scenario in real mode.

    A single device sends 3-D features through an i.i.d. real Gaussian 3x3
    channel.  The noise power is fixed at one and the power budget set to
    the linear transmit SNR.  Runs the rate-reduction (coordinate ascent)
    precoder against the scaled identity, dumping received samples, the
    ellipsoid matrices ``H V V^T H^T`` with their volumes, and accuracies
    for the first draw.  Returns the run record with geometry attached.
    """
    p0 = 10.0 ** (snr_db / 10.0)
    dims = SystemDims(feature_dims=(3,), tx_antennas=(3,), rx_antennas=3,
                      slots=1, mode="real")
    budget = LinkBudget(power_w=(p0,), noise_power_w=1.0, rician_kappa=0.0)
    config = ScenarioConfig(
        dims=dims, budget=budget, gm=sphere_spec(), eps=eps,
        schemes=("mcr2", "identity"),
        solver=solver or SolverOptions(),
        channel_draws=draws, train_samples=300, test_samples=test_samples,
        noise_trials=noise_trials, seed=seed,
    )
    record = run_scenario(config, out_dir=None)
    record.geometry = _sphere_geometry(config)
    if out_dir is not None:
        write_outputs(record, out_dir)
    return record


def _sphere_geometry(config):
    draw = 0
    dims = config.dims
    chan = draw_channel(dims, config.budget, config.block_fading,
                        seed=child_seed(config.seed, draw, STREAM_CHANNEL))
    train = sample_gm(config.gm, config.train_samples,
                      seed=child_seed(config.seed, draw, STREAM_TRAIN))
    test = sample_gm(config.gm, config.test_samples,
                     seed=child_seed(config.seed, draw, STREAM_TEST))
    stats = estimate_stats(train, dims.feature_dims, dims.mode)
    params = Mcr2Params.for_scenario(config.eps, dims.slots, dims.rx_antennas,
                                     chan.noise_power)
    geometry = {
        "snr_db": 10.0 * float(np.log10(config.budget.power_w[0] / chan.noise_power)),
        "seed": config.seed,
        "noise_power_w": chan.noise_power,
        "power_w": config.budget.power_w[0],
        "channel": chan.H.tolist(),
        "schemes": {},
    }
    zs = stats.to_stream(test.Z)
    for scheme in config.schemes:
        v, _ = make_precoder(scheme, config, chan, stats, params, draw)
        hv = chan.H @ v.assembled
        ell = hv @ hv.T
        noisefree = hv @ zs
        rng = np.random.default_rng(child_seed(config.seed, draw, STREAM_NOISE))
        received = noisefree + np.sqrt(chan.noise_power) * rng.standard_normal(noisefree.shape)
        accuracy, _ = classifier.eval_accuracy(
            v, chan, stats, test, config.noise_trials,
            seed=child_seed(config.seed, draw, STREAM_NOISE))
        geometry["schemes"][scheme] = {
            "precoder": v.assembled.tolist(),
            "ellipsoid": ell.tolist(),
            "volume": ellipsoid_volume(hv),
            "points_noisefree": noisefree.tolist(),
            "points": received.tolist(),
            "labels": test.labels.tolist(),
            "accuracy": accuracy,
            "delta_r": delta_r(v, chan, stats, params),
        }
    return geometry
