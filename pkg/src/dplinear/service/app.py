"""HTTP surface wrapping the core package.

Endpoints: /health, /calibrate, /train, /sweep, /grid, /synth. Application
errors carry a JSON body {"category": "usage"|"data"|"numerical",
"message": ...} with HTTP 400 so clients can map them to exit codes; request
shape errors surface as FastAPI's usual 422.

Dataset paths in requests are resolved on the service host. The CLI runs the
app in-process by default, so paths behave like local files there.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..datasets import DatasetError, generate_synthetic, save_dataset
from ..solvers import SolverError
from ..sweep import RequestError, SolverMismatch, calibrate, run_grid, run_sweep, run_training
from . import schemas


def _fail(category: str, exc: Exception) -> HTTPException:
    return HTTPException(
        status_code=400,
        detail={"category": category, "message": f"{type(exc).__name__}: {exc}"},
    )


def _guarded(func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except DatasetError as exc:
        raise _fail("data", exc) from exc
    except OSError as exc:
        raise _fail("data", exc) from exc
    except (SolverError, SolverMismatch, ArithmeticError) as exc:
        raise _fail("numerical", exc) from exc
    except (RequestError, ValueError) as exc:
        raise _fail("usage", exc) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="dplinear", version=__version__)

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate_endpoint(req: schemas.CalibrateRequest):
        result = _guarded(calibrate, req.method, req.iterations, req.epsilon, req.delta)
        return schemas.CalibrateResponse(**result)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_endpoint(req: schemas.RunModel):
        report = _guarded(lambda: run_training(req.to_request()))
        return schemas.TrainResponse(report=report)

    @app.post("/sweep", response_model=schemas.SweepResponse)
    def sweep_endpoint(req: schemas.SweepRequest):
        base = req.to_request(epsilon=None, sigma=None)
        result = _guarded(
            lambda: run_sweep(base, list(req.methods), list(req.epsilons), list(req.seeds))
        )
        return schemas.SweepResponse(**result)

    @app.post("/grid", response_model=schemas.GridResponse)
    def grid_endpoint(req: schemas.GridRequest):
        result = _guarded(
            lambda: run_grid(req.to_request(), req.learning_rates, req.ridges, req.alphas)
        )
        return schemas.GridResponse(**result)

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth_endpoint(req: schemas.SynthRequest):
        def build():
            train_set, test_set = generate_synthetic(req.spec.to_spec())
            save_dataset(train_set, req.train_features, req.train_labels)
            save_dataset(test_set, req.test_features, req.test_labels)
            return train_set, test_set

        train_set, test_set = _guarded(build)
        return schemas.SynthResponse(
            train_features=req.train_features,
            train_labels=req.train_labels,
            test_features=req.test_features,
            test_labels=req.test_labels,
            num_train=train_set.num_examples,
            num_test=test_set.num_examples,
            num_features=train_set.num_features,
            num_classes=train_set.num_classes,
        )

    return app


app = create_app()
