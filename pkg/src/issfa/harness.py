"""Experiment pipeline: simulate to disk, run the sampler, evaluate artifacts.

A run directory contains:

    trace.csv                    one row per thinned sweep (fixed header)
    metrics.json                 summary scores, histories, config echo
    run_meta.json                seed, data path, schedule echo
    checkpoint.issfa             final model state (ISSFA1 container)
    checkpoints/                 periodic checkpoints when enabled
    features_final.ismx          S from the last sweep
    weights_final.ismx           A o Z from the last sweep
    svd_features.ismx            rank-K baseline features from the training fit
    issfa_holdout_recon.ismx     posterior-mean holdout reconstruction
    svd_holdout_recon.ismx       baseline holdout reconstruction
    features/sample_*.ismx       per-thinned-sample feature dumps (+ PGM previews)
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from .checkpoint import save_state
from .config import ExperimentConfig, Schedule, config_echo
from .matrixio import feature_row_to_image, read_matrix, read_sidecar, write_matrix, write_pgm
from .metrics import metric_er, metric_excess_kurtosis, svd_baseline, svd_project
from .model import Hyperparams, TraceRecord
from .sampler import IssfaGibbs, draw_prior_state, initial_state_kmeans, substream
from .simulate import Dataset, SimConfig, simulate
from .spectral import AffineCurve, SpectralPrecision, dct_transform


class HarnessError(RuntimeError):
    pass


# -- data directories ---------------------------------------------------------

def simulate_to_dir(cfg: ExperimentConfig, out_dir: str | Path) -> Dataset:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = simulate(cfg.sim)
    prov = {"stage": "simulate", "seed": cfg.sim.seed,
            "grid": list(cfg.sim.grid_dims)}
    write_matrix(out / "Y.ismx", data.y, prov)
    write_matrix(out / "S_true.ismx", data.s_true, prov)
    write_matrix(out / "W_true.ismx", data.w_true, prov)
    write_matrix(out / "X.ismx", data.x_true, prov)
    if data.y_holdout is not None:
        write_matrix(out / "holdout_Y.ismx", data.y_holdout, prov)
        write_matrix(out / "holdout_W.ismx", data.w_holdout, prov)
        write_matrix(out / "holdout_X.ismx", data.x_holdout, prov)
    (out / "sim_meta.json").write_text(
        json.dumps({"config": config_echo(cfg)["simulation"], "grid": list(cfg.sim.grid_dims)},
                   indent=2)
    )
    return data


def load_data_dir(data_dir: str | Path) -> Dataset:
    data_dir = Path(data_dir)

    def maybe(name: str):
        path = data_dir / name
        return read_matrix(path) if path.exists() else None

    y_path = data_dir / "Y.ismx"
    if not y_path.exists():
        raise HarnessError(f"data directory {data_dir} is missing Y.ismx")
    meta_path = data_dir / "sim_meta.json"
    if meta_path.exists():
        grid = tuple(json.loads(meta_path.read_text())["grid"])
    else:
        grid = tuple(read_sidecar(y_path).get("provenance", {}).get("grid", ()))
    y = read_matrix(y_path)
    if not grid:
        raise HarnessError(f"{data_dir}: cannot determine grid dims (no sim_meta.json)")
    if int(np.prod(grid)) != y.shape[1]:
        raise HarnessError(f"{data_dir}: grid {grid} does not match V={y.shape[1]}")
    return Dataset(
        y=y, grid_dims=grid,
        s_true=maybe("S_true.ismx"), w_true=maybe("W_true.ismx"), x_true=maybe("X.ismx"),
        y_holdout=maybe("holdout_Y.ismx"), w_holdout=maybe("holdout_W.ismx"),
        x_holdout=maybe("holdout_X.ismx"),
    )


# -- metrics ---------------------------------------------------------------

METRIC_SCHEMA: dict[str, type] = {
    "seed": int,
    "sweeps": int,
    "thin": int,
    "kplus_history": list,
    "theta_history": list,
    "kplus_final": int,
    "train_sse_final": float,
    "holdout_sse_issfa": float,
    "holdout_sse_svd": float,
    "holdout_sse_ratio": float,
    "er_true_vs_issfa": float,
    "er_true_vs_svd": float,
    "er_issfa_vs_true": float,
    "er_svd_vs_true": float,
    "er_ratio": float,
    "excess_kurtosis_weights": float,
    "runtime_s": float,
    "diagnostics": dict,
    "config": dict,
}


def validate_metrics(metrics: dict) -> None:
    for key, typ in METRIC_SCHEMA.items():
        if key not in metrics:
            raise HarnessError(f"metrics.json missing key {key!r}")
        val = metrics[key]
        if typ is float and isinstance(val, int):
            continue
        if val is not None and not isinstance(val, typ):
            raise HarnessError(f"metrics key {key!r} has type {type(val).__name__}, "
                               f"expected {typ.__name__}")


def shared_weight_values(weights: np.ndarray) -> np.ndarray:
    """Flattened A o Z over columns active in more than one row (unique excluded)."""
    counts = (weights != 0).sum(axis=0)
    return weights[:, counts > 1].ravel()


# -- the run ----------------------------------------------------------------

def run_experiment(
    cfg: ExperimentConfig,
    data_dir: str | Path,
    out_dir: str | Path,
    seed: int | None = None,
    sweeps: int | None = None,
    thin: int | None = None,
    progress: bool = False,
) -> dict:
    sched = cfg.schedule
    seed = sched.seed if seed is None else int(seed)
    n_sweeps = sched.sweeps if sweeps is None else int(sweeps)
    thin = sched.thin if thin is None else int(thin)
    burnin = int(sched.burnin_frac * n_sweeps)

    data = load_data_dir(data_dir)
    out = Path(out_dir)
    (out / "features" / "pgm").mkdir(parents=True, exist_ok=True)
    if sched.checkpoint_every:
        (out / "checkpoints").mkdir(exist_ok=True)

    transform = dct_transform(*data.grid_dims)
    prec = SpectralPrecision(
        transform, AffineCurve(transform.base_eigenvalues()), np.exp(np.asarray(cfg.hyper.m_xi))
    )
    init_rng = substream(seed, 0xA11CE)
    if sched.init == "kmeans":
        state = initial_state_kmeans(
            data.y, prec, cfg.hyper, init_rng,
            n_clusters=sched.kmeans_clusters, detect_sd=sched.init_detect_sd,
        )
    else:
        state = draw_prior_state(data.y.shape[0], prec, cfg.hyper, init_rng)
    sampler = IssfaGibbs(data.y, state, prec, cfg.hyper, seed=seed,
                         refresh_every=sched.refresh_every)

    k_rank = sched.svd_rank
    if k_rank == 0:
        k_rank = data.s_true.shape[0] if data.s_true is not None else 10
    svd = svd_baseline(data.y, min(k_rank, min(data.y.shape)))

    holdout_target = None
    if data.y_holdout is not None:
        holdout_target = data.x_holdout if data.x_holdout is not None else data.y_holdout

    t_start = time.monotonic()
    kplus_history: list[int] = []
    theta_history: list[list[float]] = []
    sample_iters: list[int] = []
    recon_sum = np.zeros_like(data.y)
    holdout_sum = np.zeros_like(data.y_holdout) if data.y_holdout is not None else None
    n_collected = 0

    trace_path = out / "trace.csv"
    with trace_path.open("w") as trace:
        trace.write(TraceRecord.CSV_HEADER + "\n")
        for i in range(1, n_sweeps + 1):
            info = sampler.sweep()
            kplus_history.append(info["kplus"])
            theta_history.append([float(x) for x in info["theta"]])
            at_thin = i % thin == 0 or i == n_sweeps
            if at_thin:
                holdout_sse = float("nan")
                if data.y_holdout is not None and sampler.state.kplus:
                    _, _, recon_h = sampler.heldout_infer(
                        data.y_holdout, sched.inner_sweeps, stream_key=i
                    )
                    holdout_sse = float(np.sum((recon_h - holdout_target) ** 2))
                elif data.y_holdout is not None:
                    recon_h = np.zeros_like(data.y_holdout)
                    holdout_sse = float(np.sum(holdout_target**2))
                rec = TraceRecord(
                    iteration=i, kplus=info["kplus"], sigma2=info["sigma2"],
                    alpha=info["alpha"], beta=info["beta"], theta=info["theta"],
                    train_sse=info["train_sse"], holdout_sse=holdout_sse,
                    wall_ms=(time.monotonic() - t_start) * 1e3,
                )
                trace.write(rec.csv_row() + "\n")
                if i > burnin:
                    sample_iters.append(i)
                    recon_sum += sampler.state.reconstruction()
                    if holdout_sum is not None:
                        holdout_sum += recon_h
                    n_collected += 1
                    write_matrix(
                        out / "features" / f"sample_{i:06d}.ismx", sampler.state.S,
                        {"stage": "features", "sweep": i, "grid": list(data.grid_dims)},
                    )
                    for k in range(sampler.state.kplus):
                        img = feature_row_to_image(sampler.state.S[k], data.grid_dims)
                        write_pgm(out / "features" / "pgm" / f"sample_{i:06d}_f{k:02d}.pgm", img)
            if sched.checkpoint_every and i % sched.checkpoint_every == 0:
                save_state(out / "checkpoints" / f"ckpt_{i:06d}.issfa", sampler.state)
            if progress and (i % max(1, n_sweeps // 20) == 0 or i == n_sweeps):
                print(f"sweep {i}/{n_sweeps}  K+={info['kplus']}  sigma2={info['sigma2']:.3f}  "
                      f"train_sse={info['train_sse']:.1f}", flush=True)

    runtime = time.monotonic() - t_start
    st = sampler.state
    save_state(out / "checkpoint.issfa", st)
    prov = {"stage": "run", "seed": seed, "grid": list(data.grid_dims)}
    write_matrix(out / "features_final.ismx", st.S, prov)
    write_matrix(out / "weights_final.ismx", st.weights(), prov)
    write_matrix(out / "svd_features.ismx", svd.features, prov)

    metrics: dict = {
        "seed": seed, "sweeps": n_sweeps, "thin": thin,
        "kplus_history": kplus_history,
        "theta_history": theta_history,
        "kplus_final": int(st.kplus),
        "train_sse_final": sampler.train_sse(),
        "holdout_sse_issfa": float("nan"),
        "holdout_sse_svd": float("nan"),
        "holdout_sse_ratio": float("nan"),
        "er_true_vs_issfa": float("nan"),
        "er_true_vs_svd": float("nan"),
        "er_issfa_vs_true": float("nan"),
        "er_svd_vs_true": float("nan"),
        "er_ratio": float("nan"),
        "excess_kurtosis_weights": float("nan"),
        "runtime_s": runtime,
        "diagnostics": dict(sampler.diagnostics),
        "config": config_echo(cfg),
    }

    if holdout_sum is not None and n_collected:
        recon_issfa_h = holdout_sum / n_collected
        recon_svd_h = svd_project(data.y_holdout, svd.features)
        write_matrix(out / "issfa_holdout_recon.ismx", recon_issfa_h, prov)
        write_matrix(out / "svd_holdout_recon.ismx", recon_svd_h, prov)
        sse_issfa = float(np.sum((recon_issfa_h - holdout_target) ** 2))
        sse_svd = float(np.sum((recon_svd_h - holdout_target) ** 2))
        metrics["holdout_sse_issfa"] = sse_issfa
        metrics["holdout_sse_svd"] = sse_svd
        metrics["holdout_sse_ratio"] = sse_svd / sse_issfa if sse_issfa > 0 else float("inf")

    if data.s_true is not None and st.kplus:
        metrics["er_true_vs_issfa"] = metric_er(data.s_true, st.S)
        metrics["er_true_vs_svd"] = metric_er(data.s_true, svd.features)
        metrics["er_issfa_vs_true"] = metric_er(st.S, data.s_true)
        metrics["er_svd_vs_true"] = metric_er(svd.features, data.s_true)
        if metrics["er_true_vs_issfa"] > 0:
            metrics["er_ratio"] = metrics["er_true_vs_svd"] / metrics["er_true_vs_issfa"]

    shared_w = shared_weight_values(st.weights())
    if shared_w.size >= 4 and np.var(shared_w) > 0:
        metrics["excess_kurtosis_weights"] = metric_excess_kurtosis(shared_w)

    (out / "metrics.json").write_text(json.dumps(metrics, indent=2))
    (out / "run_meta.json").write_text(json.dumps({
        "seed": seed, "sweeps": n_sweeps, "thin": thin, "burnin": burnin,
        "data_dir": str(Path(data_dir).resolve()),
        "sample_iterations": sample_iters,
        "schedule": config_echo(cfg)["schedule"],
    }, indent=2))
    return metrics


# -- eval --------------------------------------------------------------------

def read_trace(run_dir: str | Path) -> dict[str, np.ndarray]:
    path = Path(run_dir) / "trace.csv"
    if not path.exists():
        raise HarnessError(f"{run_dir} has no trace.csv")
    lines = path.read_text().strip().splitlines()
    if not lines or lines[0] != TraceRecord.CSV_HEADER:
        raise HarnessError(f"{path}: unexpected header")
    cols = TraceRecord.CSV_HEADER.split(",")
    rows = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(cols):
            raise HarnessError(f"{path}: malformed row at line {ln}")
        rows.append([float(p) for p in parts])
    arr = np.asarray(rows)
    return {name: arr[:, i] for i, name in enumerate(cols)}


def evaluate_run(run_dir: str | Path, truth_dir: str | Path | None = None) -> dict:
    """Recompute what the artifacts allow and check it against metrics.json.

    Returns the recomputed metrics; raises HarnessError on schema violations
    or mismatches beyond float tolerance.
    """
    run = Path(run_dir)
    metrics_path = run / "metrics.json"
    if not metrics_path.exists():
        raise HarnessError(f"{run} has no metrics.json")
    stored = json.loads(metrics_path.read_text())
    validate_metrics(stored)
    trace = read_trace(run)

    recomputed: dict = dict(stored)
    recomputed["kplus_final"] = int(trace["Kplus"][-1])

    weights = read_matrix(run / "weights_final.ismx")
    shared_w = shared_weight_values(weights)
    if shared_w.size >= 4 and np.var(shared_w) > 0:
        recomputed["excess_kurtosis_weights"] = metric_excess_kurtosis(shared_w)

    truth = Path(truth_dir) if truth_dir else None
    if truth is not None:
        s_true = read_matrix(truth / "S_true.ismx")
        s_est = read_matrix(run / "features_final.ismx")
        s_svd = read_matrix(run / "svd_features.ismx")
        recomputed["er_true_vs_issfa"] = metric_er(s_true, s_est)
        recomputed["er_true_vs_svd"] = metric_er(s_true, s_svd)
        recomputed["er_issfa_vs_true"] = metric_er(s_est, s_true)
        recomputed["er_svd_vs_true"] = metric_er(s_svd, s_true)
        if recomputed["er_true_vs_issfa"] > 0:
            recomputed["er_ratio"] = (
                recomputed["er_true_vs_svd"] / recomputed["er_true_vs_issfa"]
            )
        hold_x = truth / "holdout_X.ismx"
        if hold_x.exists() and (run / "issfa_holdout_recon.ismx").exists():
            target = read_matrix(hold_x)
            ih = read_matrix(run / "issfa_holdout_recon.ismx")
            sh = read_matrix(run / "svd_holdout_recon.ismx")
            recomputed["holdout_sse_issfa"] = float(np.sum((ih - target) ** 2))
            recomputed["holdout_sse_svd"] = float(np.sum((sh - target) ** 2))
            recomputed["holdout_sse_ratio"] = (
                recomputed["holdout_sse_svd"] / recomputed["holdout_sse_issfa"]
            )

    for key, val in recomputed.items():
        ref = stored.get(key)
        if isinstance(val, float) and isinstance(ref, (int, float)):
            if np.isfinite(val) and np.isfinite(ref) and not np.isclose(val, ref, rtol=1e-8):
                raise HarnessError(
                    f"eval mismatch for {key!r}: stored {ref}, recomputed {val}"
                )
    validate_metrics(recomputed)
    return recomputed
