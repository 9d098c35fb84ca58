"""Experiment configuration, deterministic parallel execution, and
persistence of trajectories and verification reports.

All walker payloads execute in worker processes whose BLAS pools are
pinned to one thread, so emitted files are byte-identical for any
``workers`` count: work is partitioned by walker index, never by
scheduling, and each walker draws from its own substream.  The harness
owns all I/O; simulation modules never write files.
"""

from __future__ import annotations

import dataclasses
import datetime
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "ARTIFACT_VERSION",
    "OUT_DIR_ENV",
    "ConfigError",
    "ExperimentConfig",
    "RunManifest",
    "run",
    "verify",
    "VERIFY_SUITES",
]

ARTIFACT_VERSION = "0.1.0"
OUT_DIR_ENV = "PURISIM_OUT"
EXPERIMENT_KINDS = ("manybody", "rank2", "dyson", "fermion", "stabilizer")
VERIFY_SUITES = (
    "moments",
    "fermion-oracle",
    "dyson-identity",
    "inequalities",
    "stabilizer-stats",
)
FLOAT_FMT = "%.17g"


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the field path."""


@dataclass
class ExperimentConfig:
    kind: str
    n: int = 0  # Hilbert dimension / modes / qubits
    steps: int = 0
    walkers: int = 1
    seed: int = 0
    workers: int = 1
    out_dir: str = ""
    mode: str = "measurement"  # manybody/rank2: measurement | postselection
    variant: str = "conserving"  # fermion: conserving | general
    sampling: str = "uniform_all_paulis"  # stabilizer
    d: int = 2  # dyson: rank
    dt: float | None = None  # dyson: defaults to 1/n
    record_entropy: bool = True  # manybody
    record_renyi2: bool = True  # fermion
    stop_purity: float | None = None  # manybody early stop
    stop_at_order1: bool = False  # fermion early stop

    def validate(self) -> "ExperimentConfig":
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"kind: unknown experiment {self.kind!r}")
        for fname in ("n", "steps", "walkers", "workers"):
            if getattr(self, fname) <= 0 and not (fname == "steps" and self.steps == 0):
                raise ConfigError(f"{fname}: must be positive, got {getattr(self, fname)}")
        if self.kind in ("manybody", "rank2"):
            if self.n % 2 != 0:
                raise ConfigError(f"n: need even Hilbert dimension, got {self.n}")
            if self.mode not in ("measurement", "postselection"):
                raise ConfigError(f"mode: unknown {self.mode!r}")
        if self.kind == "fermion" and self.variant not in ("conserving", "general"):
            raise ConfigError(f"variant: unknown {self.variant!r}")
        if self.kind == "stabilizer" and self.sampling not in (
            "uniform_all_paulis",
            "uniform_nonidentity",
        ):
            raise ConfigError(f"sampling: unknown {self.sampling!r}")
        if self.kind == "dyson":
            if self.d < 1:
                raise ConfigError(f"d: need rank >= 1, got {self.d}")
            if self.dt is not None and self.dt <= 0:
                raise ConfigError(f"dt: must be positive, got {self.dt}")
        if not self.out_dir:
            raise ConfigError("out_dir: missing (flag --out or PURISIM_OUT)")
        return self

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"{sorted(unknown)[0]}: unknown config field")
        return cls(**data)


@dataclass
class RunManifest:
    config: dict
    artifact_version: str
    started: str
    finished: str
    worker_seeds: list[dict]
    files: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2)

    def digests(self) -> dict:
        return {f["name"]: f["sha256"] for f in self.files}


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _utcnow() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _worker_init():
    # pin BLAS to one thread inside workers: outputs must not depend on the
    # worker count or the library's threading heuristics
    from threadpoolctl import threadpool_limits

    global _WORKER_LIMITS
    _WORKER_LIMITS = threadpool_limits(limits=1)


def _partition(walkers: int, workers: int) -> list[list[int]]:
    chunks = [[] for _ in range(min(workers, walkers))]
    for w in range(walkers):
        chunks[w % len(chunks)].append(w)
    return chunks


def _run_chunk(args):
    cfg_dict, walker_ids = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    out = []
    for w in walker_ids:
        out.append((w, _run_single_walker(cfg, w)))
    return out


def _run_single_walker(cfg: ExperimentConfig, walker: int):
    if cfg.kind in ("manybody", "rank2"):
        from .manybody import run_trajectory

        initial = np.array([0.5, 0.5]) if cfg.kind == "rank2" else None
        rec = run_trajectory(
            cfg.n,
            cfg.steps,
            cfg.mode,
            seed=cfg.seed,
            stream_index=walker,
            initial_spectrum=initial,
            record_entropy=cfg.record_entropy,
            stop_purity=cfg.stop_purity,
        )
        return {"csv": rec.to_csv(), "summary": rec.summary()}
    if cfg.kind == "stabilizer":
        from .stabilizer import run_purification

        traj = run_purification(
            cfg.n, cfg.steps, sampling=cfg.sampling, seed=cfg.seed, stream_index=walker
        )
        return {
            "csv": traj.to_csv(),
            "steps_to_pure": traj.steps_to_pure,
            "visits_by_k": traj.visits_by_k.tolist(),
            "added_by_k": traj.added_by_k.tolist(),
        }
    raise ConfigError(f"kind: {cfg.kind} has no per-walker payload")


def run(config: ExperimentConfig) -> RunManifest:
    """Execute one experiment, write CSV/JSON artifacts plus a manifest."""
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started = _utcnow()
    chunks = _partition(config.walkers, config.workers)
    worker_seeds = [
        {"worker": i, "walkers": chunk, "seed": config.seed} for i, chunk in enumerate(chunks)
    ]
    files: list[Path] = []

    if config.kind in ("manybody", "rank2", "stabilizer"):
        results: dict[int, dict] = {}
        with ProcessPoolExecutor(
            max_workers=len(chunks), initializer=_worker_init
        ) as pool:
            for chunk_result in pool.map(
                _run_chunk, [(dataclasses.asdict(config), c) for c in chunks]
            ):
                for w, payload in chunk_result:
                    results[w] = payload
        summaries = []
        for w in range(config.walkers):
            path = out_dir / f"trajectory_w{w:04d}.csv"
            path.write_text(results[w]["csv"])
            files.append(path)
            if config.kind in ("manybody", "rank2"):
                summaries.append({"walker": w, **results[w]["summary"]})
        if config.kind == "stabilizer":
            visits = np.sum([results[w]["visits_by_k"] for w in results], axis=0)
            added = np.sum([results[w]["added_by_k"] for w in results], axis=0)
            with np.errstate(invalid="ignore", divide="ignore"):
                freq = np.where(visits > 0, added / np.maximum(visits, 1), np.nan)
            summary = {
                "kind": config.kind,
                "n": config.n,
                "walkers": config.walkers,
                "seed": config.seed,
                "visits_by_k": visits.tolist(),
                "added_by_k": added.tolist(),
                "added_frequency_by_k": [None if not np.isfinite(v) else v for v in freq],
                "steps_to_pure": [results[w]["steps_to_pure"] for w in range(config.walkers)],
            }
        else:
            summary = {
                "kind": config.kind,
                "n": config.n,
                "mode": config.mode,
                "seed": config.seed,
                "trajectories": summaries,
            }
        spath = out_dir / "summary.json"
        spath.write_text(json.dumps(summary, sort_keys=True, indent=2))
        files.append(spath)

    elif config.kind == "dyson":
        payload = _run_in_worker(_dyson_payload, dataclasses.asdict(config))
        cpath = out_dir / "spectra.csv"
        cpath.write_text(payload["csv"])
        files.append(cpath)
        spath = out_dir / "summary.json"
        spath.write_text(json.dumps(payload["summary"], sort_keys=True, indent=2))
        files.append(spath)

    elif config.kind == "fermion":
        payload = _run_in_worker(_fermion_payload, dataclasses.asdict(config))
        cpath = out_dir / "entropy.csv"
        cpath.write_text(payload["csv"])
        files.append(cpath)
        spath = out_dir / "summary.json"
        spath.write_text(json.dumps(payload["summary"], sort_keys=True, indent=2))
        files.append(spath)

    manifest = RunManifest(
        config=dataclasses.asdict(config),
        artifact_version=ARTIFACT_VERSION,
        started=started,
        finished=_utcnow(),
        worker_seeds=worker_seeds,
        files=[{"name": p.name, "sha256": _sha256(p)} for p in files],
    )
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def _run_in_worker(fn, cfg_dict):
    # batched-ensemble kinds vectorize internally over walkers; they still
    # run inside a single pinned worker so numerics match any worker count
    with ProcessPoolExecutor(max_workers=1, initializer=_worker_init) as pool:
        return pool.submit(fn, cfg_dict).result()


def _dyson_payload(cfg_dict):
    from .dyson import run_sde_ensemble

    cfg = ExperimentConfig.from_dict(cfg_dict)
    dt = cfg.dt if cfg.dt is not None else 1.0 / cfg.n
    initial = np.full(cfg.d, 1.0 / cfg.d)
    ens = run_sde_ensemble(
        initial, dt, cfg.steps, cfg.walkers, cfg.seed, keep_walker_series=True
    )
    lines = ["step,walker," + ",".join(f"lambda_{a+1}" for a in range(cfg.d))]
    for t in range(ens.walker_spectra.shape[0]):
        for w in range(cfg.walkers):
            row = ",".join(FLOAT_FMT % v for v in ens.walker_spectra[t, w])
            lines.append(f"{t},{w},{row}")
    summary = {
        "kind": "dyson",
        "d": cfg.d,
        "dt": dt,
        "steps": cfg.steps,
        "walkers": cfg.walkers,
        "seed": cfg.seed,
        "mean_purity": [float(v) for v in ens.mean_purity],
        "stderr_purity": [float(v) for v in ens.stderr_purity],
        "mean_sorted_eigs_final": [float(v) for v in ens.mean_sorted_eigs[-1]],
        "second_moment_eigs_final": [float(v) for v in ens.second_moment_eigs[-1]],
        "clipped_steps": ens.clipped_steps,
        "perturbed_steps": ens.perturbed_steps,
    }
    return {"csv": "\n".join(lines) + "\n", "summary": summary}


def _fermion_payload(cfg_dict):
    from .fermion import run_purification

    cfg = ExperimentConfig.from_dict(cfg_dict)
    ens = run_purification(
        cfg.n,
        cfg.steps,
        cfg.variant,
        cfg.walkers,
        cfg.seed,
        record_renyi2=cfg.record_renyi2,
        stop_at_order1=cfg.stop_at_order1,
        keep_walker_series=True,
    )
    lines = ["step,walker,s_proxy_nats,renyi2_nats"]
    for ti, t in enumerate(ens.times):
        for w in range(cfg.walkers):
            s_val = ens.walker_s_proxy[ti, w]
            r_val = ens.walker_renyi2[ti, w] if ens.walker_renyi2 is not None else float("nan")
            lines.append(f"{t},{w},{FLOAT_FMT % s_val},{FLOAT_FMT % r_val}")
    summary = {
        "kind": "fermion",
        "variant": cfg.variant,
        "n": cfg.n,
        "steps_run": ens.steps_run,
        "walkers": cfg.walkers,
        "seed": cfg.seed,
        "half_entropy_time": ens.half_entropy_time,
        "order1_purity_time": ens.order1_purity_time,
        "bound_violations": ens.bound_violations,
        "mean_entropy_density": [float(v) for v in ens.mean_density],
    }
    return {"csv": "\n".join(lines) + "\n", "summary": summary}


# ---------------------------------------------------------------------------
# Verification suites
# ---------------------------------------------------------------------------


def verify(suite: str, seed: int = 0, scale: float = 1.0) -> dict:
    """Run one named verification suite; returns a JSON-ready report with a
    top-level ``pass`` flag.  ``scale`` shrinks sample counts for smoke runs."""
    if suite == "moments":
        return _verify_moments(seed, scale)
    if suite == "fermion-oracle":
        return _verify_fermion_oracle(seed, scale)
    if suite == "dyson-identity":
        return _verify_dyson_identity(seed, scale)
    if suite == "inequalities":
        return _verify_inequalities(seed, scale)
    if suite == "stabilizer-stats":
        return _verify_stabilizer_stats(seed, scale)
    raise ConfigError(f"suite: unknown verification suite {suite!r}")


def _verify_moments(seed: int, scale: float) -> dict:
    from .moments import (
        TraceProfile,
        analytic_delta_sq,
        analytic_measured_mean,
        analytic_noise,
        analytic_postselected_mean,
        mc_measurement_noise,
        mc_purity_statistic,
    )
    from .rng import RngStream

    samples = max(int(200_000 * scale), 2000)
    report = {"suite": "moments", "samples": samples, "checks": []}
    stream = 0
    for n in (32, 64, 128):
        rho = np.zeros((n, n), dtype=complex)
        rho[0, 0], rho[1, 1] = 0.7, 0.3
        prof = TraceProfile.from_density_matrix(rho)
        targets = {
            "measured": analytic_measured_mean(prof, n),
            "postselected": analytic_postselected_mean(prof, n),
            "delta": 0.0,
            "delta_sq": analytic_delta_sq(prof, n),
            "pp_trace": prof.t2 / 4 + 1 / (4 * n),
        }
        for stat, target in targets.items():
            stream += 1
            est = mc_purity_statistic(rho, n, stat, samples, RngStream(seed, stream))
            tol = 3 * est.standard_error + 4.0 / n**2
            report["checks"].append(
                {
                    "N": n,
                    "statistic": stat,
                    "analytic": target,
                    "mc_mean": est.mean,
                    "mc_stderr": est.standard_error,
                    "pass": bool(abs(est.mean - target) <= tol),
                }
            )
    for n in (32, 64):
        rho = np.zeros((n, n), dtype=complex)
        rho[0, 0], rho[1, 1] = 0.7, 0.3
        prof = TraceProfile.from_density_matrix(rho)
        for mode in ("measurement", "postselection"):
            stream += 1
            _, var, var_se = mc_measurement_noise(
                rho, n, mode, samples, RngStream(seed, stream)
            )
            target = analytic_noise(prof, n)
            report["checks"].append(
                {
                    "N": n,
                    "statistic": f"noise_{mode}",
                    "analytic": target,
                    "mc_mean": var,
                    "mc_stderr": var_se,
                    "pass": bool(abs(var - target) <= 3 * var_se + 8.0 / n**2),
                }
            )
    report["pass"] = all(c["pass"] for c in report["checks"])
    return report


def _verify_fermion_oracle(seed: int, scale: float) -> dict:
    from .fermion import (
        MajoranaState,
        ModeState,
        apply_mode_unitary,
        apply_rotation,
        delta_s_proxy_conserving,
        delta_s_proxy_general,
        measure_mode_conserving,
        measure_mode_general,
        s_proxy,
    )
    from .fock import fock_measure
    from .randmat import haar_special_orthogonal, haar_unitary
    from .rng import RngStream

    per_n = max(int(25 * scale), 2)
    gen = RngStream(seed, 77).generator()
    max_dev = 0.0
    max_ds_dev = 0.0
    count = 0
    for n in (2, 3, 4, 5):
        for _ in range(per_n):
            eta = gen.uniform(-1, 1, size=n)
            st = apply_mode_unitary(ModeState.from_occupations(eta), haar_unitary(n, gen))
            j = int(gen.integers(0, n))
            oracle = fock_measure(st, j)
            for empty, corr, prob in (
                (True, oracle.corr_empty, oracle.p_empty),
                (False, oracle.corr_filled, oracle.p_filled),
            ):
                if prob < 1e-9:
                    continue
                upd, _ = measure_mode_conserving(st, j, _Forced(empty))
                max_dev = max(max_dev, float(np.max(np.abs(upd.matrix - corr))))
            eta_j = float(np.real(st.matrix[j, j]))
            p_plus = 0.5 * (1 + eta_j)
            plus, _ = measure_mode_conserving(st, j, _Forced(True))
            minus, _ = measure_mode_conserving(st, j, _Forced(False))
            direct = p_plus * s_proxy(plus) + (1 - p_plus) * s_proxy(minus) - s_proxy(st)
            max_ds_dev = max(max_ds_dev, abs(direct - delta_s_proxy_conserving(st, j)))

            lam = gen.uniform(-1, 1, size=n)
            stm = apply_rotation(
                MajoranaState.from_williamson(lam), haar_special_orthogonal(2 * n, gen)
            )
            j = int(gen.integers(0, n))
            oracle = fock_measure(stm, j)
            for empty, corr, prob in (
                (True, oracle.corr_empty, oracle.p_empty),
                (False, oracle.corr_filled, oracle.p_filled),
            ):
                if prob < 1e-9:
                    continue
                upd, _ = measure_mode_general(stm, j, _Forced(empty))
                max_dev = max(max_dev, float(np.max(np.abs(upd.matrix - corr))))
            alpha = float(stm.matrix[2 * j, 2 * j + 1])
            p_plus = 0.5 * (1 + alpha)
            plus, _ = measure_mode_general(stm, j, _Forced(True))
            minus, _ = measure_mode_general(stm, j, _Forced(False))
            direct = p_plus * s_proxy(plus) + (1 - p_plus) * s_proxy(minus) - s_proxy(stm)
            max_ds_dev = max(max_ds_dev, abs(direct - delta_s_proxy_general(stm, j)))
            count += 2
    return {
        "suite": "fermion-oracle",
        "states": count,
        "max_update_deviation": max_dev,
        "max_delta_s_deviation": max_ds_dev,
        "pass": bool(max_dev < 1e-10 and max_ds_dev < 1e-10),
    }


class _Forced:
    def __init__(self, empty: bool):
        self._val = 0.0 if empty else 1.0

    def uniform(self):
        return self._val


def _verify_dyson_identity(seed: int, scale: float) -> dict:
    from .dyson import apply_generator_to_purity, generator_quadratic_form
    from .rng import RngStream

    trials = max(int(1000 * scale), 50)
    gen = RngStream(seed, 78).generator()
    max_dev = 0.0
    max_kernel = 0.0
    for _ in range(trials):
        d = int(gen.integers(2, 9))
        lam = gen.dirichlet(np.ones(d))
        while np.min(np.diff(np.sort(lam))) < 1e-6:
            lam = gen.dirichlet(np.ones(d))
        quad = generator_quadratic_form(lam, 2 * lam, 2 * np.eye(d))
        max_dev = max(max_dev, abs(quad - apply_generator_to_purity(lam)))
        fp, fpp = gen.standard_normal(2)
        kernel = generator_quadratic_form(lam, fp * np.ones(d), fpp * np.ones((d, d)))
        max_kernel = max(max_kernel, abs(kernel))
    return {
        "suite": "dyson-identity",
        "trials": trials,
        "max_purity_identity_deviation": max_dev,
        "max_sum_function_generator": max_kernel,
        "pass": bool(max_dev < 1e-12 and max_kernel < 1e-12),
    }


def _verify_inequalities(seed: int, scale: float) -> dict:
    from .manybody import avg_entropy_after_measurement, purity, vn_entropy
    from .randmat import random_projector
    from .rng import RngStream

    per_n = max(int(1000 * scale), 20)
    gen = RngStream(seed, 79).generator()
    violations = 0
    checked = 0
    for n in (4, 8, 16):
        for _ in range(per_n):
            g = gen.standard_normal((n, n)) + 1j * gen.standard_normal((n, n))
            rho = g @ g.conj().T
            rho /= np.real(np.trace(rho))
            r = int(gen.integers(1, n))
            p = random_projector(n, r, gen)
            ent, sqp = avg_entropy_after_measurement(rho, [p, np.eye(n) - p])
            if ent > vn_entropy(rho) + 1e-9:
                violations += 1
            if sqp < np.sqrt(purity(rho)) - 1e-9:
                violations += 1
            checked += 1
    return {
        "suite": "inequalities",
        "cases": checked,
        "violations": violations,
        "pass": violations == 0,
    }


def _verify_stabilizer_stats(seed: int, scale: float) -> dict:
    from .stabilizer import run_purification, theory_added_probability

    n = 10
    trajectories = max(int(10_000 * scale), 100)
    visits = np.zeros(n + 1, dtype=np.int64)
    added = np.zeros(n + 1, dtype=np.int64)
    monotone_ok = True
    for s in range(trajectories):
        traj = run_purification(n, 50_000, seed=seed, stream_index=s)
        visits += traj.visits_by_k
        added += traj.added_by_k
        ent = traj.entropy
        if any(b > a for a, b in zip(ent, ent[1:])):
            monotone_ok = False
    checks = []
    for k in range(n):
        if visits[k] < 300:
            continue
        p = theory_added_probability(n, k)
        phat = added[k] / visits[k]
        se = float(np.sqrt(p * (1 - p) / visits[k]))
        checks.append(
            {
                "k": k,
                "visits": int(visits[k]),
                "empirical": float(phat),
                "theory": p,
                "pass": bool(abs(phat - p) <= 3 * se + 1e-12),
            }
        )
    return {
        "suite": "stabilizer-stats",
        "n": n,
        "trajectories": trajectories,
        "monotone_entropy": monotone_ok,
        "per_k": checks,
        "pass": bool(monotone_ok and all(c["pass"] for c in checks)),
    }
