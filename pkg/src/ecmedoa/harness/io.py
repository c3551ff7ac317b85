"""JSON configuration loading and CSV/JSON persistence.

Angles are degrees in every file; they are converted to radians on load.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..ecme import EcmeOptions
from ..exceptions import DomainError
from ..model import SampleCovariance, Scenario, SnapshotMatrix


class ConfigError(DomainError):
    """Invalid configuration; the message names the offending field."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _require(doc, key, where):
    if not isinstance(doc, dict):
        raise ConfigError(where, "expected a JSON object")
    if key not in doc:
        raise ConfigError(f"{where}.{key}".lstrip("."), "missing required field")
    return doc[key]


def _matrix(value, where):
    try:
        M = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(where, "expected a numeric matrix") from None
    if M.ndim != 2:
        raise ConfigError(where, "expected a 2-D list")
    return M


def scenario_from_dict(doc, where="scenario"):
    """Build a :class:`Scenario` from ``{W, betas_deg, source_cov: {re, im}, delta}``."""
    W = _require(doc, "W", where)
    if not isinstance(W, int) or isinstance(W, bool):
        raise ConfigError(f"{where}.W", "must be an integer")
    betas = _require(doc, "betas_deg", where)
    if not isinstance(betas, list) or not betas:
        raise ConfigError(f"{where}.betas_deg", "must be a non-empty list")
    cov = _require(doc, "source_cov", where)
    re = _matrix(_require(cov, "re", f"{where}.source_cov"), f"{where}.source_cov.re")
    im = _matrix(cov.get("im", np.zeros_like(re).tolist()), f"{where}.source_cov.im")
    if re.shape != im.shape:
        raise ConfigError(f"{where}.source_cov", "re and im shapes differ")
    delta = _require(doc, "delta", where)
    fields = {"betas_deg": betas, "delta": delta}
    for name, value in fields.items():
        try:
            np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.{name}", "expected a list of numbers") from None
    try:
        return Scenario(W, np.deg2rad(np.asarray(betas, dtype=float)), re + 1j * im,
                        np.asarray(delta, dtype=float))
    except DomainError as exc:
        raise ConfigError(where, str(exc)) from None


def scenario_to_dict(sc):
    return {
        "W": sc.W,
        "betas_deg": np.rad2deg(sc.betas).tolist(),
        "source_cov": {"re": sc.source_cov.real.tolist(), "im": sc.source_cov.imag.tolist()},
        "delta": sc.noise.tolist(),
    }


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"invalid JSON ({exc})") from None


def load_scenario(path):
    return scenario_from_dict(load_json(path))


_SOLVER_KEYS = {
    "max_iters": int,
    "grad_tol": float,
    "armijo_c": float,
    "backtrack_factor": float,
    "boundary_fraction": float,
    "max_descent_steps": int,
    "max_halvings": int,
}


def solver_from_dict(doc, where="solver"):
    """EcmeOptions from JSON; the angular tolerance is given as ``beta_tol_deg``."""
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(where, "expected a JSON object")
    kwargs = {}
    for key, value in doc.items():
        try:
            if key == "beta_tol_deg":
                kwargs["beta_tol"] = float(np.deg2rad(value))
            elif key in _SOLVER_KEYS:
                kwargs[key] = _SOLVER_KEYS[key](value)
            else:
                raise ConfigError(f"{where}.{key}", "unknown solver option")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{where}.{key}", "expected a number") from None
    kwargs["llf_trace"] = True
    try:
        return EcmeOptions(**kwargs)
    except DomainError as exc:
        raise ConfigError(where, str(exc)) from None


@dataclass
class InitSettings:
    mode: str = "fixed"
    fixed_betas: np.ndarray = None  # radians
    grid_step: float = None  # radians


@dataclass
class ExperimentConfig:
    scenario: Scenario
    L_values: list
    trials: int = 200
    base_seed: int = 0
    init: InitSettings = field(default_factory=InitSettings)
    solver: EcmeOptions = field(default_factory=EcmeOptions)
    outputs: str = "results"
    workers: int = 1


def experiment_from_dict(doc, base_dir=None):
    """Parse an experiment document (schema in the README)."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected a JSON object")
    sc_doc = _require(doc, "scenario", "")
    if isinstance(sc_doc, str):
        path = Path(sc_doc)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        sc_doc = load_json(path)
    scenario = scenario_from_dict(sc_doc)
    L_values = _require(doc, "L_values", "")
    if (not isinstance(L_values, list) or not L_values
            or not all(isinstance(L, int) and L > 0 for L in L_values)):
        raise ConfigError("L_values", "must be a non-empty list of positive integers")
    trials = doc.get("trials", 200)
    if not isinstance(trials, int) or trials < 1:
        raise ConfigError("trials", "must be an integer >= 1")
    base_seed = doc.get("base_seed", 0)
    if not isinstance(base_seed, int) or base_seed < 0:
        raise ConfigError("base_seed", "must be a non-negative integer")

    init_doc = doc.get("init", {"mode": "fixed"})
    mode = init_doc.get("mode", "fixed")
    init = InitSettings(mode=mode)
    if mode == "fixed":
        fb = init_doc.get("fixed_betas_deg")
        if fb is None:
            raise ConfigError("init.fixed_betas_deg", "required when mode is 'fixed'")
        if len(fb) != scenario.V:
            raise ConfigError("init.fixed_betas_deg", f"expected {scenario.V} angles")
        fb = np.deg2rad(np.asarray(fb, dtype=float))
        if np.any(fb <= 0) or np.any(fb >= np.pi):
            raise ConfigError("init.fixed_betas_deg", "angles must lie in (0, 180)")
        init.fixed_betas = fb
    elif mode == "grid":
        step = init_doc.get("grid_step_deg", 2.0)
        if not isinstance(step, (int, float)) or step <= 0:
            raise ConfigError("init.grid_step_deg", "must be positive")
        init.grid_step = float(np.deg2rad(step))
    else:
        raise ConfigError("init.mode", "must be 'fixed' or 'grid'")

    workers = doc.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("workers", "must be an integer >= 1")
    return ExperimentConfig(
        scenario=scenario,
        L_values=L_values,
        trials=trials,
        base_seed=base_seed,
        init=init,
        solver=solver_from_dict(doc.get("solver")),
        outputs=str(doc.get("outputs", "results")),
        workers=workers,
    )


def load_experiment(path):
    return experiment_from_dict(load_json(path), base_dir=Path(path).parent)


def _f(x):
    return repr(float(x))


def write_snapshots(path, snapshots):
    X = snapshots.data
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["sensor", "t", "re", "im"])
        for t in range(X.shape[1]):
            for w in range(X.shape[0]):
                wr.writerow([w, t, _f(X[w, t].real), _f(X[w, t].imag)])


def read_snapshots(path):
    """Parse a ``sensor,t,re,im`` CSV into a :class:`SnapshotMatrix`."""
    rows = _read_rows(path, ["sensor", "t", "re", "im"])
    idx = np.array([(int(r[0]), int(r[1])) for r in rows])
    vals = np.array([float(r[2]) + 1j * float(r[3]) for r in rows])
    W, L = idx[:, 0].max() + 1, idx[:, 1].max() + 1
    if len(rows) != W * L:
        raise ConfigError(str(path), f"expected {W * L} entries, found {len(rows)}")
    X = np.zeros((W, L), dtype=complex)
    X[idx[:, 0], idx[:, 1]] = vals
    return SnapshotMatrix(data=X)


def write_covariance(path, R):
    R = R.matrix if isinstance(R, SampleCovariance) else np.asarray(R)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["row", "col", "re", "im"])
        for i in range(R.shape[0]):
            for j in range(R.shape[1]):
                wr.writerow([i, j, _f(R[i, j].real), _f(R[i, j].imag)])


def read_covariance(path):
    rows = _read_rows(path, ["row", "col", "re", "im"])
    idx = np.array([(int(r[0]), int(r[1])) for r in rows])
    W = idx.max() + 1
    if len(rows) != W * W:
        raise ConfigError(str(path), "covariance CSV must list the full matrix")
    R = np.zeros((W, W), dtype=complex)
    R[idx[:, 0], idx[:, 1]] = [float(r[2]) + 1j * float(r[3]) for r in rows]
    if np.max(np.abs(R - R.conj().T)) > 1e-10 * (1 + np.abs(R).max()):
        raise ConfigError(str(path), "covariance is not Hermitian")
    return 0.5 * (R + R.conj().T)


def _read_rows(path, header):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        got = next(rd, None)
        if got != header:
            raise ConfigError(str(path), f"expected header {','.join(header)}, got {got}")
        rows = [r for r in rd if r]
    if not rows:
        raise ConfigError(str(path), "no data rows")
    try:
        return [(int(r[0]), int(r[1]), float(r[2]), float(r[3])) for r in rows]
    except (ValueError, IndexError):
        raise ConfigError(str(path), "malformed row") from None


def estimate_to_dict(result):
    p = result.params
    return {
        "betas_deg": np.rad2deg(p.betas).tolist(),
        "source_cov": {"re": p.source_cov.real.tolist(), "im": p.source_cov.imag.tolist()},
        "delta": p.noise.tolist(),
        "llf_trace": [float(x) for x in result.llf_trace],
        "iterations": result.iterations,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
    }
