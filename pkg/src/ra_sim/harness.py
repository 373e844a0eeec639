"""Monte Carlo experiment runner.

Sweeps one scenario parameter, runs independent seeded trials of the full
pipeline (scene, transmission, per-satellite estimation, fusion, data
detection) for each requested algorithm and detection mode, and aggregates
the metrics into a CSV. Trials are parallel over a process pool; per-trial
seeds are derived from the master seed and trial index so the worker count
never changes the output.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines, coop, dequant, detect, esprit, frames, metrics, oamp, scene
from .errors import ConfigError

CSV_SCHEMA = "ra-sim-v1"

ALGORITHMS = ("alg1", "alg1+alg2", "somp", "oracle_ls", "perfect_csi")
DETECTION_MODES = ("non_cooperative", "cooperative_ls", "bayes_msctp",
                   "bayes_mscbp", "ls_msctp", "ls_mscbp")
SWEEP_AXES = ("G", "SNR", "K_a", "K", "Q", "arraySize", "quantBits")

_ALG_ALIASES = {"oraclels": "oracle_ls", "perfectcsi": "perfect_csi"}
_MODE_ALIASES = {
    "noncooperative": "non_cooperative",
    "cooperativels": "cooperative_ls",
    "bayesdequantmsctp": "bayes_msctp",
    "bayesdequantmscbp": "bayes_mscbp",
    "lsmsctp": "ls_msctp",
    "lsmscbp": "ls_mscbp",
}


@dataclass(frozen=True)
class Scenario:
    num_users: int = 100
    num_active: int = 15
    num_paths: int = 3
    max_delay: int = 17
    nonisi_length: int = 136        # G; training length is G + L - 1
    data_length: int = 540
    used_subcarriers: int = 540
    num_frames: int = 1
    snr_db: float = 12.0
    num_satellites: int = 3
    array_x: int = 10
    array_y: int = 10
    rice_factor_db: float = 10.0
    quant_bits: int = 3

    @property
    def ts_length(self) -> int:
        return self.nonisi_length + self.max_delay - 1


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario = field(default_factory=Scenario)
    sweep_axis: str = "SNR"
    sweep_values: tuple = (12.0,)
    algorithms: tuple = ("alg1", "alg1+alg2")
    detection: tuple = ("cooperative_ls",)
    trials: int = 200
    seed: int = 0
    output: str = "results.csv"

    def __post_init__(self):
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}")
        if len(self.sweep_values) == 0:
            raise ConfigError("sweep_values must be nonempty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        for a in self.algorithms:
            if a not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {a!r}")
        for m in self.detection:
            if m not in DETECTION_MODES:
                raise ConfigError(f"unknown detection mode {m!r}")


def _norm_name(name: str, aliases: dict) -> str:
    key = name.replace("_", "").replace("-", "").replace("+", "plus").lower()
    key = key.replace("plus", "+")
    return aliases.get(key.replace("+", ""), name) if name not in ALGORITHMS + DETECTION_MODES else name


def load_config(path: str) -> ExperimentConfig:
    """Parse an experiment description from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    try:
        scn = Scenario(**raw.get("scenario", {}))
    except TypeError as exc:
        raise ConfigError(f"bad scenario field: {exc}") from exc
    algs = tuple(_norm_name(a, _ALG_ALIASES) for a in raw.get("algorithms", ["alg1"]))
    modes = tuple(_norm_name(m, _MODE_ALIASES) for m in raw.get("detection", ["cooperative_ls"]))
    try:
        return ExperimentConfig(
            scenario=scn,
            sweep_axis=raw.get("sweep_axis", "SNR"),
            sweep_values=tuple(raw.get("sweep_values", [scn.snr_db])),
            algorithms=algs,
            detection=modes,
            trials=int(raw.get("trials", 200)),
            seed=int(raw.get("seed", 0)),
            output=raw.get("output", "results.csv"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def apply_sweep(scn: Scenario, axis: str, value) -> Scenario:
    if axis == "G":
        return replace(scn, nonisi_length=int(value))
    if axis == "SNR":
        return replace(scn, snr_db=float(value))
    if axis == "K_a":
        return replace(scn, num_active=int(value))
    if axis == "K":
        return replace(scn, num_users=int(value))
    if axis == "Q":
        return replace(scn, num_satellites=int(value))
    if axis == "arraySize":
        return replace(scn, array_x=int(value), array_y=int(value))
    if axis == "quantBits":
        return replace(scn, quant_bits=int(value))
    raise ConfigError(f"unknown sweep axis {axis!r}")


def backhaul_bits_per_frame(scn: Scenario, mode: str) -> int:
    """Feeder-link payload size for one frame's observations."""
    per_obs = scn.data_length * scn.array_x * scn.array_y
    full = 2 * per_obs * 64
    quant = 64 + 2 * per_obs * scn.quant_bits
    q = scn.num_satellites
    if mode == "non_cooperative":
        return 0
    if mode == "cooperative_ls":
        return q * full
    if mode in ("bayes_msctp", "ls_msctp"):
        return q * quant
    if mode in ("bayes_mscbp", "ls_mscbp"):
        return (q - 1) * quant
    raise ConfigError(f"unknown detection mode {mode!r}")


def _estimate_channels(alg: str, cache: oamp.SvdCache, y_ts: np.ndarray,
                       noise_var: float, scn: Scenario,
                       truth_q: np.ndarray, true_rows: np.ndarray,
                       shared: dict) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One satellite's (estimate, row_support, user_activity) for one scheme."""
    K, L = scn.num_users, scn.max_delay
    if alg == "perfect_csi":
        sup = np.zeros(K * L, dtype=np.int64)
        sup[true_rows] = 1
        return truth_q, sup, oamp.detect_aus(sup, K, L)
    if alg == "oracle_ls":
        est = baselines.oracle_ls(cache.psi, y_ts, true_rows)
        sup = np.zeros(K * L, dtype=np.int64)
        sup[true_rows] = 1
        return est, sup, oamp.detect_aus(sup, K, L)
    if alg == "somp":
        est, picked = baselines.somp(cache.psi, y_ts, noise_var,
                                     max_atoms=scn.num_active * scn.num_paths)
        sup = np.zeros(K * L, dtype=np.int64)
        sup[picked] = 1
        return est, sup, oamp.detect_aus(sup, K, L)
    # alg1 and alg1+alg2 share the OAMP pass
    if "alg1" not in shared:
        rho0 = max(scn.num_active * scn.num_paths, 1) / (K * L)
        res = oamp.run_oamp_mmv(cache, y_ts, noise_var, rho0=rho0)
        sup = oamp.detect_support(res.estimate)
        shared["alg1"] = (res.estimate, sup, oamp.detect_aus(sup, K, L))
    est, sup, aus = shared["alg1"]
    if alg == "alg1":
        return est, sup, aus
    refined, _ = esprit.refine_estimate(est, sup, K, L, scn.array_x, scn.array_y)
    return refined, sup, aus


def _frame_bits_errors(got_bits: np.ndarray, detected: np.ndarray,
                       truth_bits: np.ndarray, true_active: np.ndarray) -> int:
    """Bit errors among users that are both detected and truly active."""
    det_idx = np.flatnonzero(detected)
    errors = 0
    for row, k in enumerate(det_idx):
        if true_active[k]:
            errors += int(np.sum(got_bits[row] != truth_bits[k]))
    return errors


def run_trial(scn: Scenario, seed_key: tuple,
              algorithms=ALGORITHMS, detection=DETECTION_MODES) -> dict:
    """One full pipeline trial; returns {(algorithm, mode): metrics dict}."""
    return _trial_worker((scn, seed_key, tuple(algorithms), tuple(detection)))


def _run_trial_impl(scn, cfg, ch, ts, noise_var, y_ts, all_frames, cache,
                    bits, bits_per_user,
                    algorithms=ALGORITHMS, detection=DETECTION_MODES) -> dict:
    K, L, Q = scn.num_users, scn.max_delay, scn.num_satellites
    out: dict = {}
    per_alg: dict = {}
    for alg in algorithms:
        ests, sups, auses = [], [], []
        for q in range(Q):
            shared = per_alg.setdefault(("shared", q), {})
            true_rows = np.flatnonzero(ch.true_row_support(q))
            est, sup, aus = _estimate_channels(
                alg, cache, y_ts[q], noise_var, scn, ch.cirm[q], true_rows, shared)
            ests.append(est)
            sups.append(sup)
            auses.append(aus)
        per_sat_aus = np.array(auses)
        fused = coop.majority_vote(per_sat_aus)
        nmse = metrics.nmse_db(ests, ch.cirm)
        aep_coop = metrics.aep(fused, ch.activity)
        aep_noncoop = metrics.aep(per_sat_aus, ch.activity)

        for mode in detection:
            ber = _detect_ber(scn, cfg, ch, ts, noise_var, all_frames,
                              ests, per_sat_aus, fused, bits, bits_per_user, mode)
            out[(alg, mode)] = {
                "nmse_db": nmse,
                "aep_coop": aep_coop,
                "aep_noncoop": aep_noncoop,
                "ber": ber,
                "backhaul_bits": backhaul_bits_per_frame(scn, mode),
            }
    return out


def _detect_ber(scn, cfg, ch, ts, noise_var, all_frames, ests, per_sat_aus,
                fused, bits, bits_per_user, mode):
    Q = scn.num_satellites
    true_active = ch.activity.astype(bool)
    n_active = int(true_active.sum())
    if n_active == 0:
        return float("nan")

    def ber_for(detected, bit_fn):
        det = np.asarray(detected).astype(bool)
        errors = 0
        if det.any():
            for t in range(cfg.num_frames):
                got = bit_fn(det, t)
                errors += _frame_bits_errors(got, det, bits[:, t, :], true_active)
        missed = int(np.sum(true_active & ~det)) * bits_per_user
        return (errors + missed) / (n_active * bits_per_user)

    if mode == "non_cooperative":
        vals = []
        for q in range(Q):
            vals.append(ber_for(
                per_sat_aus[q],
                lambda det, t, q=q: detect.detect_frame(
                    all_frames[q][t], ts, ests[q], det, cfg),
            ))
        return float(np.mean(vals))

    cirms = ests
    if mode == "cooperative_ls":
        return ber_for(fused, lambda det, t: coop.cooperative_ls_frame(
            [all_frames[q][t] for q in range(Q)], ts, cirms, det, cfg))

    # quantized backhaul modes share the cleaned per-satellite observations
    def quantized_bits(det, t):
        ys = []
        for q in range(Q):
            clean = detect.cancel_and_fold(
                all_frames[q][t],
                detect.pseudo_observation(ts, cirms[q], det, cfg), cfg)
            ys.append(np.fft.fft(clean, axis=0, norm="ortho"))
        h_f = np.concatenate(
            [detect.frequency_channel(cirms[q], det, cfg) for q in range(Q)],
            axis=1)
        if mode.endswith("mscbp"):
            obs = [dequant.BackhaulObservation.from_exact(ys[0])]
            obs += [dequant.BackhaulObservation.from_quantized(y, scn.quant_bits)
                    for y in ys[1:]]
        else:
            obs = [dequant.BackhaulObservation.from_quantized(y, scn.quant_bits)
                   for y in ys]
        if mode.startswith("bayes"):
            return dequant.run_bayes_dequant_dd(obs, h_f, noise_var, cfg).bits
        return dequant.ls_dequant_dd(obs, h_f, cfg)

    return ber_for(fused, quantized_bits)


def _trial_worker(args):
    scn, seed_key, algorithms, detection = args
    rng = np.random.default_rng(np.random.SeedSequence(seed_key))
    geo = scene.GeometryConfig(
        num_satellites=scn.num_satellites, num_users=scn.num_users,
        array_x=scn.array_x, array_y=scn.array_y,
    )
    params = scene.ChannelParams.with_rice_db(
        num_active=scn.num_active, num_paths=scn.num_paths,
        rice_db=scn.rice_factor_db, max_delay=scn.max_delay,
    )
    cfg = frames.FrameConfig(
        ts_length=scn.ts_length, data_length=scn.data_length,
        used_subcarriers=scn.used_subcarriers, max_delay=scn.max_delay,
        num_frames=scn.num_frames,
    )
    scn_geo = scene.sample_scene(geo, rng)
    ch = scene.sample_channels(scn_geo, params, rng)
    ts = frames.generate_ts_bank(scn.num_users, cfg.ts_length, rng)
    noise_var = frames.noise_var_for_snr_db(scn.snr_db)
    bits = rng.integers(0, 2, (scn.num_users, cfg.num_frames, cfg.bits_per_frame))
    blocks = np.array([
        [frames.modulate(bits[k, t], cfg) for t in range(cfg.num_frames)]
        for k in range(scn.num_users)
    ])
    bursts = [frames.transmit(ts, blocks, ch.cirm[q], noise_var, cfg, rng)
              for q in range(scn.num_satellites)]
    y_ts = [frames.extract_nonisi(b, cfg, 0) for b in bursts]
    all_frames = [[frames.extract_frame(b, cfg, t) for t in range(cfg.num_frames)]
                  for b in bursts]
    psi = frames.build_sensing_matrix(ts, cfg.max_delay)
    cache = oamp.SvdCache.build(psi)
    return _run_trial_impl(scn, cfg, ch, ts, noise_var, y_ts, all_frames,
                           cache, bits, cfg.num_frames * cfg.bits_per_frame,
                           algorithms, detection)


def run_sweep(config: ExperimentConfig, workers: int = 1,
              progress=None) -> str:
    """Run all sweep points and return the aggregated CSV text."""
    if progress is None:
        progress = lambda msg: print(msg, file=sys.stderr)
    rows = []
    for p_idx, value in enumerate(config.sweep_values):
        scn = apply_sweep(config.scenario, config.sweep_axis, value)
        tasks = [
            (scn, (config.seed, p_idx, t), config.algorithms, config.detection)
            for t in range(config.trials)
        ]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                trial_results = list(pool.map(_trial_worker, tasks))
        else:
            trial_results = [_trial_worker(t) for t in tasks]
        progress(f"point {config.sweep_axis}={value}: {len(trial_results)} trials done")
        for alg in config.algorithms:
            for mode in config.detection:
                series = [r[(alg, mode)] for r in trial_results]
                rows.append(_aggregate_row(config, value, alg, mode, series))
    return _to_csv(rows)


def _aggregate_row(config, value, alg, mode, series):
    def agg(key):
        vals = np.array([s[key] for s in series], dtype=np.float64)
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            return ("", "")
        return (f"{np.mean(vals):.10g}", f"{np.median(vals):.10g}")
    nmse = agg("nmse_db")
    aep_c = agg("aep_coop")
    aep_n = agg("aep_noncoop")
    ber = agg("ber")
    return {
        "schema": CSV_SCHEMA,
        "sweep_axis": config.sweep_axis,
        "sweep_value": f"{value}",
        "algorithm": alg,
        "detection": mode,
        "trials": str(len(series)),
        "nmse_db_mean": nmse[0], "nmse_db_median": nmse[1],
        "aep_coop_mean": aep_c[0], "aep_coop_median": aep_c[1],
        "aep_noncoop_mean": aep_n[0], "aep_noncoop_median": aep_n[1],
        "ber_mean": ber[0], "ber_median": ber[1],
        "backhaul_bits_per_frame": str(series[0]["backhaul_bits"]),
    }


def _to_csv(rows) -> str:
    fields = ["schema", "sweep_axis", "sweep_value", "algorithm", "detection",
              "trials", "nmse_db_mean", "nmse_db_median", "aep_coop_mean",
              "aep_coop_median", "aep_noncoop_mean", "aep_noncoop_median",
              "ber_mean", "ber_median", "backhaul_bits_per_frame"]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def correlation_csv(q_values, trials: int, seed: int = 0) -> str:
    """Sorted correlation-coefficient samples per satellite count."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["q", "index", "c0"])
    for q in q_values:
        if q < 1:
            raise ConfigError("satellite count must be >= 1")
        rng = np.random.default_rng(np.random.SeedSequence((seed, int(q))))
        samples = np.sort(coop.correlation_samples(int(q), trials, rng))
        for i, v in enumerate(samples):
            writer.writerow([q, i, f"{v:.10g}"])
    return buf.getvalue()
