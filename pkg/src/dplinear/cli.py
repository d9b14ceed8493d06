"""Command-line client for the training service.

Subcommands: calibrate, train, sweep, grid, synth, serve. By default every
command talks to the service in-process (no network); pass --server URL to
target a running instance instead. Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical failure.

`--iters` counts full-batch iterations, which in this regime equal epochs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_CATEGORY_CODES = {"usage": EXIT_USAGE, "data": EXIT_DATA, "numerical": EXIT_NUMERIC}

METHOD_CHOICES = ("first_order", "newton", "least_squares", "feature_covariance")


class ClientError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category
        self.exit_code = _CATEGORY_CODES.get(category, EXIT_NUMERIC)


class ServiceClient:
    """Thin JSON-over-HTTP client; in-process ASGI transport by default."""

    def __init__(self, server: str | None = None):
        if server:
            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            # Starlette's TestClient is a synchronous httpx client bound
            # directly to the ASGI app: request handling without a socket.
            from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app, raise_server_exceptions=False)

    def post(self, path: str, payload: dict) -> dict:
        try:
            resp = self._client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise ClientError("data", f"service request failed: {exc}") from exc
        if resp.status_code == 200:
            return resp.json()
        try:
            detail = resp.json().get("detail")
        except ValueError:
            detail = resp.text
        if isinstance(detail, dict) and "category" in detail:
            raise ClientError(detail["category"], detail.get("message", "service error"))
        raise ClientError("usage", f"HTTP {resp.status_code}: {detail}")

    def close(self):
        self._client.close()


class _Parser(argparse.ArgumentParser):
    """argparse with the documented usage exit code (1, not argparse's 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _parse_float(text: str) -> float:
    value = float(text)  # accepts 'inf'
    return value


def _parse_float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip() != ""]


def _parse_int_list(text: str) -> list[int]:
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ClientError("usage", f"cannot read config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ClientError("usage", f"config {path} must hold a JSON object")
    return payload


def _run_payload(args) -> dict:
    """Merge --config JSON with explicit flag overrides."""
    payload = _load_config(getattr(args, "config", None))
    overrides = {
        "method": getattr(args, "method", None),
        "epsilon": getattr(args, "epsilon", None),
        "delta": getattr(args, "delta", None),
        "sigma": getattr(args, "sigma", None),
        "iterations": getattr(args, "iters", None),
        "seed": getattr(args, "seed", None),
        "learning_rate": getattr(args, "eta", None),
        "ridge": getattr(args, "ridge", None),
        "alpha": getattr(args, "alpha", None),
        "loss": getattr(args, "loss", None),
        "feature_clip": getattr(args, "feature_clip", None),
        "gradient_clip": getattr(args, "gradient_clip", None),
        "features": getattr(args, "features", None),
        "labels": getattr(args, "labels", None),
        "test_features": getattr(args, "test_features", None),
        "test_labels": getattr(args, "test_labels", None),
    }
    payload.update({k: v for k, v in overrides.items() if v is not None})
    return payload


def _write_out(args, payload: dict) -> None:
    if getattr(args, "out", None):
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        Path(args.out).write_text(text, encoding="utf-8")


def _emit(args, payload: dict, human: str) -> None:
    _write_out(args, payload)
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(human)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    client = ServiceClient(args.server)
    payload = client.post(
        "/calibrate",
        {
            "epsilon": args.epsilon,
            "delta": args.delta,
            "method": args.method,
            "iterations": args.iters,
        },
    )
    _emit(
        args,
        payload,
        f"method={payload['method']} T={payload['iterations']} "
        f"epsilon={payload['epsilon']} delta={payload['delta']}\n"
        f"rho   = {payload['rho']:.10g}\n"
        f"sigma = {payload['sigma']:.10g}",
    )
    return EXIT_OK


def cmd_train(args) -> int:
    client = ServiceClient(args.server)
    response = client.post("/train", _run_payload(args))
    report = response["report"]
    _write_out(args, report)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        acc = report.get("test_accuracy")
        acc_text = "n/a" if acc is None else f"{acc:.4f}"
        eps = report.get("epsilon_spent")
        eps_text = "n/a" if eps is None else f"{eps:.6g}"
        print(
            f"method={report['method']} sigma={report['sigma']:.6g} "
            f"rho={report['rho_spent']:.6g} epsilon={eps_text}\n"
            f"train_accuracy={report.get('train_accuracy')}"
            f" test_accuracy={acc_text}"
        )
    return EXIT_OK


def cmd_sweep(args) -> int:
    payload = _run_payload(args)
    payload.pop("epsilon", None)
    payload.pop("sigma", None)
    payload["methods"] = args.methods
    payload["epsilons"] = args.epsilons
    payload["seeds"] = args.seeds
    if args.delta is not None:
        payload["delta"] = args.delta
    client = ServiceClient(args.server)
    response = client.post("/sweep", payload)
    _emit(args, response, response["table"])
    return EXIT_OK


def cmd_grid(args) -> int:
    payload = _run_payload(args)
    if args.etas is not None:
        payload["learning_rates"] = args.etas
    if args.ridges is not None:
        payload["ridges"] = args.ridges
    if args.alphas is not None:
        payload["alphas"] = args.alphas
    client = ServiceClient(args.server)
    response = client.post("/grid", payload)
    best = response["best"]
    human = response["table"] + (
        f"\nbest: learning_rate={best['learning_rate']} ridge={best['ridge']} "
        f"alpha={best['alpha']} accuracy={best['accuracy']:.4f}"
    )
    _emit(args, response, human)
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "spec": {
            "num_examples": args.n,
            "num_features": args.d,
            "num_classes": args.m,
            "margin": args.margin,
            "noise": args.noise,
            "seed": args.seed,
        },
        "train_features": str(out_dir / "train.fmat"),
        "train_labels": str(out_dir / "train.lpos"),
        "test_features": str(out_dir / "test.fmat"),
        "test_labels": str(out_dir / "test.lpos"),
    }
    client = ServiceClient(args.server)
    response = client.post("/synth", payload)
    _emit(
        args,
        response,
        f"wrote {response['num_train']} train / {response['num_test']} test examples "
        f"(d={response['num_features']}, m={response['num_classes']}) to {out_dir}",
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import app

    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dplinear", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--server", default=None, help="service URL (default: in-process)")
        p.add_argument("--json", action="store_true", help="print the raw JSON response")
        p.add_argument("--out", default=None, help="write the JSON result to this path")

    def add_run_flags(p):
        p.add_argument("--config", default=None, help="JSON file with run settings")
        p.add_argument("--method", choices=METHOD_CHOICES, default=None)
        p.add_argument("--epsilon", type=_parse_float, default=None,
                       help="privacy budget epsilon ('inf' = non-private)")
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--sigma", type=float, default=None,
                       help="explicit noise multiplier (instead of epsilon)")
        p.add_argument("--iters", type=int, default=None,
                       help="full-batch iterations (= epochs)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--eta", type=float, default=None, help="learning rate")
        p.add_argument("--ridge", type=float, default=None, help="lambda regularizer")
        p.add_argument("--alpha", type=float, default=None, help="negative-class weight (DP-LS)")
        p.add_argument("--loss", choices=("logistic", "squared"), default=None)
        p.add_argument("--feature-clip", dest="feature_clip", type=float, default=None)
        p.add_argument("--gradient-clip", dest="gradient_clip", type=float, default=None)
        p.add_argument("--features", default=None)
        p.add_argument("--labels", default=None)
        p.add_argument("--test-features", dest="test_features", default=None)
        p.add_argument("--test-labels", dest="test_labels", default=None)

    p = sub.add_parser("calibrate", help="convert a budget to sigma/rho")
    p.add_argument("--epsilon", type=_parse_float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--method", choices=METHOD_CHOICES, required=True)
    p.add_argument("--iters", type=int, default=1)
    add_common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="run one training job")
    add_run_flags(p)
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="methods x epsilons x seeds cross product")
    add_run_flags(p)
    p.add_argument("--methods", type=lambda s: s.split(","), required=True)
    p.add_argument("--epsilons", type=_parse_float_list, required=True)
    p.add_argument("--seeds", type=_parse_int_list, required=True,
                   help="comma list; ranges like 0..19 allowed")
    add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    add_run_flags(p)
    p.add_argument("--etas", type=_parse_float_list, default=None)
    p.add_argument("--ridges", type=_parse_float_list, default=None)
    p.add_argument("--alphas", type=_parse_float_list, default=None)
    add_common(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("synth", help="generate a synthetic dataset pair")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--margin", type=float, default=4.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0; usage errors exit 1
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ClientError as exc:
        print(f"dplinear: {exc.category} error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"dplinear: i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
