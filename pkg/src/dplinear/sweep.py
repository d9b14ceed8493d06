"""Run orchestration: single runs, epsilon sweeps, and grid search.

This layer turns a declarative run request (data source, method, budget or
explicit noise multiplier, hyperparameters) into calibrated, audited training
runs. It is shared by the HTTP service and the CLI.

Budget resolution: exactly one of epsilon or sigma must be supplied. A finite
epsilon is converted to the method's sigma through the zCDP coefficient; a
delta of 1e-5 is assumed when omitted. epsilon = inf is the non-private
sentinel: every sanitization step including clipping is turned off and the
run charges rho = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .accountant import (
    Ledger,
    MechanismCost,
    PrivacyBudget,
    calibrate_sigma,
    epsilon_from_rho,
    rho_from_epsilon_delta,
)
from .datasets import FeatureDataset, SyntheticSpec, generate_synthetic, load_csv, load_dataset
from .sanitize import ClipConfig
from .solvers import SolverConfig, evaluate_top1, train

DEFAULT_DELTA = 1e-5


@dataclass(frozen=True)
class RunRequest:
    """Declarative description of one training run."""

    method: str
    loss: str = "logistic"
    iterations: int = 1
    learning_rate: float = 1.0
    ridge: float = 0.0
    alpha: float = 0.0
    feature_clip: float | None = None
    gradient_clip: float | None = None
    epsilon: float | None = None
    delta: float | None = None
    sigma: float | None = None
    seed: int = 0
    fit_bias: bool | None = None
    optimizer: str = "adam"
    average_iterates: bool = False
    synthetic: SyntheticSpec | None = None
    features: str | None = None
    labels: str | None = None
    test_features: str | None = None
    test_labels: str | None = None


class RequestError(ValueError):
    """Invalid run request (usage error at the CLI/service boundary)."""


class SolverMismatch(RuntimeError):
    """Internal audit failure: ledger total drifted from the calibrated cost."""


def _resolved_delta(req: RunRequest) -> float:
    return DEFAULT_DELTA if req.delta is None else req.delta


def resolve_noise(req: RunRequest) -> tuple[float, float, bool]:
    """Return (sigma, target_rho, non_private) for the request.

    Raises RequestError unless exactly one of epsilon / sigma is given.
    """
    if (req.epsilon is None) == (req.sigma is None):
        raise RequestError("supply exactly one of epsilon or sigma")
    cost = MechanismCost(req.method, req.iterations)
    if req.sigma is not None:
        if req.sigma < 0:
            raise RequestError(f"sigma must be >= 0, got {req.sigma}")
        if req.sigma == 0:
            return 0.0, 0.0, True
        return float(req.sigma), cost.rho_coefficient / req.sigma ** 2, False
    if math.isinf(req.epsilon):
        return 0.0, 0.0, True
    budget = PrivacyBudget(req.epsilon, _resolved_delta(req))
    return calibrate_sigma(cost, budget), budget.rho, False


def load_data(req: RunRequest) -> tuple[FeatureDataset, FeatureDataset | None]:
    """Materialize the (train, test) pair from files or a synthetic spec."""
    if req.synthetic is not None:
        if req.features or req.labels:
            raise RequestError("give either dataset paths or a synthetic spec, not both")
        return generate_synthetic(req.synthetic)
    if not (req.features and req.labels):
        raise RequestError("a run needs dataset paths or a synthetic spec")
    train_set = _load_pair(req.features, req.labels)
    test_set = None
    if req.test_features and req.test_labels:
        test_set = _load_pair(req.test_features, req.test_labels)
    return train_set, test_set


def _load_pair(feature_path: str, label_path: str) -> FeatureDataset:
    if str(feature_path).endswith(".csv") or str(label_path).endswith(".csv"):
        return load_csv(feature_path, label_path)
    return load_dataset(feature_path, label_path)


def _solver_config(req: RunRequest, sigma: float, non_private: bool) -> SolverConfig:
    if non_private:
        clip = None
    else:
        clip = ClipConfig(feature_clip=req.feature_clip, gradient_clip=req.gradient_clip)
    return SolverConfig(
        method=req.method,
        iterations=req.iterations,
        learning_rate=req.learning_rate,
        ridge=req.ridge,
        alpha=req.alpha,
        clip=clip,
        sigma=sigma,
        seed=req.seed,
        loss=req.loss,
        fit_bias=req.fit_bias,
        optimizer=req.optimizer,
        average_iterates=req.average_iterates,
    )


def _is_single_label(dataset: FeatureDataset) -> bool:
    return bool(np.all(np.diff(dataset.label_offsets) == 1))


def run_training(req: RunRequest) -> dict:
    """Calibrate, train, evaluate; returns the serializable report dict."""
    sigma, target_rho, non_private = resolve_noise(req)
    train_set, test_set = load_data(req)
    config = _solver_config(req, sigma, non_private)
    ledger = Ledger()
    delta = _resolved_delta(req) if (req.epsilon is not None or req.delta is not None) else None
    weights, report = train(train_set, config, ledger, delta=delta)
    if abs(ledger.total_rho - target_rho) > 1e-9 * max(1.0, target_rho):
        raise SolverMismatch(
            f"ledger total {ledger.total_rho} does not match calibrated target {target_rho}"
        )
    if _is_single_label(train_set):
        report.train_accuracy = evaluate_top1(weights, train_set)
    if test_set is not None and _is_single_label(test_set):
        report.test_accuracy = evaluate_top1(weights, test_set)
    out = report.to_dict()
    out["epsilon_target"] = None if req.epsilon is None else float(req.epsilon)
    out["non_private"] = non_private
    return out


def run_sweep(
    base: RunRequest,
    methods: list[str],
    epsilons: list[float],
    seeds: list[int],
) -> dict:
    """Cross-product of (method, epsilon, seed) runs with mean/std aggregation.

    Per-cell failures are recorded and the sweep continues. Rows are sorted
    by (method, epsilon).
    """
    if not methods or not epsilons or not seeds:
        raise RequestError("methods, epsilons and seeds must all be nonempty")
    delta = _resolved_delta(base)
    cells = []
    for method in methods:
        for eps in epsilons:
            for seed in seeds:
                req = replace(
                    base, method=method, epsilon=float(eps), sigma=None,
                    delta=delta, seed=int(seed),
                )
                cell = {"method": method, "epsilon": float(eps), "seed": int(seed)}
                try:
                    out = run_training(req)
                    cell.update(
                        test_accuracy=out["test_accuracy"],
                        train_accuracy=out["train_accuracy"],
                        sigma=out["sigma"],
                        rho_spent=out["rho_spent"],
                    )
                except Exception as exc:  # cell failure must not kill the sweep
                    cell["error"] = f"{type(exc).__name__}: {exc}"
                cells.append(cell)

    rows = []
    for method in sorted(set(methods)):
        for eps in sorted(set(float(e) for e in epsilons)):
            group = [c for c in cells if c["method"] == method and c["epsilon"] == eps]
            ok = [c for c in group if "error" not in c and c.get("test_accuracy") is not None]
            accs = [c["test_accuracy"] for c in ok]
            row = {
                "method": method,
                "epsilon": eps,
                "seeds": len(group),
                "failures": len(group) - len(ok),
                "mean_accuracy": float(np.mean(accs)) if accs else None,
                "std_accuracy": float(np.std(accs)) if accs else None,
                "sigma": ok[0]["sigma"] if ok else None,
                "rho": 0.0 if math.isinf(eps) else rho_from_epsilon_delta(eps, delta),
            }
            rows.append(row)
    return {"delta": delta, "rows": rows, "cells": cells, "table": render_sweep_table(rows)}


def run_grid(
    base: RunRequest,
    learning_rates: list[float] | None,
    ridges: list[float] | None,
    alphas: list[float] | None,
) -> dict:
    """Exhaustive hyperparameter grid, scored by held-out top-1 accuracy.

    Each grid point is an independent run at the same budget and seed (the
    tuning cost is not composed into the privacy accounting). Ties break
    toward smaller ridge, then smaller learning rate, then smaller alpha.
    """
    lrs = [base.learning_rate] if not learning_rates else [float(v) for v in learning_rates]
    rgs = [base.ridge] if not ridges else [float(v) for v in ridges]
    als = [base.alpha] if not alphas else [float(v) for v in alphas]
    if not lrs or not rgs or not als:
        raise RequestError("grid lists must be nonempty")

    rows = []
    for lr in lrs:
        for rg in rgs:
            for al in als:
                req = replace(base, learning_rate=lr, ridge=rg, alpha=al)
                row = {"learning_rate": lr, "ridge": rg, "alpha": al}
                try:
                    out = run_training(req)
                    if out["test_accuracy"] is None:
                        raise RequestError("grid search needs a held-out single-label split")
                    row["accuracy"] = out["test_accuracy"]
                except RequestError:
                    raise
                except Exception as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)

    scored = [r for r in rows if "error" not in r]
    if not scored:
        raise RequestError("every grid point failed")
    best = min(scored, key=lambda r: (-r["accuracy"], r["ridge"], r["learning_rate"], r["alpha"]))
    return {"best": best, "rows": rows, "table": render_grid_table(rows, best)}


def calibrate(method: str, iterations: int, epsilon: float, delta: float) -> dict:
    """sigma / rho / coefficient triple for a budget (all mutually derivable)."""
    cost = MechanismCost(method, iterations)
    if math.isinf(epsilon):
        return {
            "method": method, "iterations": iterations, "epsilon": epsilon,
            "delta": delta, "rho": 0.0, "sigma": 0.0,
            "coefficient": cost.rho_coefficient, "non_private": True,
        }
    budget = PrivacyBudget(epsilon, delta)
    rho = budget.rho
    sigma = calibrate_sigma(cost, budget)
    return {
        "method": method, "iterations": iterations, "epsilon": epsilon,
        "delta": delta, "rho": rho, "sigma": sigma,
        "coefficient": cost.rho_coefficient, "non_private": False,
        "epsilon_check": epsilon_from_rho(rho, delta),
    }


def _fmt(value, width=12, places=4):
    if value is None:
        return " " * (width - 1) + "-"
    if isinstance(value, float) and math.isinf(value):
        return f"{'inf':>{width}}"
    if isinstance(value, float):
        return f"{value:>{width}.{places}f}"
    return f"{value:>{width}}"


def render_sweep_table(rows: list[dict]) -> str:
    header = (
        f"{'method':<20}{'epsilon':>12}{'mean_acc':>12}{'std_acc':>12}"
        f"{'sigma':>12}{'rho':>14}{'seeds':>7}{'fail':>6}"
    )
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(
            f"{r['method']:<20}"
            + _fmt(r["epsilon"])
            + _fmt(r["mean_accuracy"])
            + _fmt(r["std_accuracy"])
            + _fmt(r["sigma"])
            + _fmt(r["rho"], width=14, places=6)
            + f"{r['seeds']:>7}{r['failures']:>6}"
        )
    return "\n".join(lines)


def render_grid_table(rows: list[dict], best: dict) -> str:
    header = f"{'learning_rate':>14}{'ridge':>12}{'alpha':>12}{'accuracy':>12}  "
    lines = [header, "-" * len(header)]
    for r in rows:
        mark = " <-- best" if r is best else ""
        acc = _fmt(r.get("accuracy")) if "error" not in r else f"{'ERROR':>12}"
        lines.append(
            _fmt(r["learning_rate"], width=14)
            + _fmt(r["ridge"])
            + _fmt(r["alpha"])
            + acc
            + mark
        )
    return "\n".join(lines)
