"""JSON experiment configs: schema, parsing, and whole-file validation.

Validation never stops at the first problem; every violation is collected
with its JSON path so a bad config is fixable in one edit.  The parsed
config keeps the raw dict around so reports can echo their input verbatim.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import Covariance, DynamicsModel, ObservationOperator
from .encoding import EncodingScheme
from .errors import ConfigValidationError
from .twin import TwinConfig

METHODS = ("fourdvar", "pf", "qaoa", "qmcmc", "qvpf")
RESAMPLERS = ("systematic", "quantum", "qvr")
TABLE_METHODS = ("qaoa", "qmcmc", "qvpf")
MAX_TABLE_QUBITS = 16


@dataclass
class MethodParams:
    particles: int = 256
    depth: int = 2
    ess_threshold: float = 0.5
    resampler: str = "quantum"
    chain_steps: int = 2000
    burn_in: int = 200
    refine_steps: int = 1
    refine_flips: int = 2
    corrected_qmcmc: bool = True
    qaoa_iters: int = 150
    qaoa_restarts: int = 3
    qaoa_learning_rate: float = 1.0
    natural_gradient: bool = False
    shots: int = 4096
    qvr_layers: int = 2


@dataclass
class ProblemConfig:
    model: DynamicsModel
    window: int
    obs_op: ObservationOperator
    background_cov: Covariance
    obs_cov: Covariance
    process_noise: Covariance | None
    truth_init: np.ndarray | None
    perturb_background: bool
    perturb_obs: bool

    def twin_config(self) -> TwinConfig:
        return TwinConfig(
            model=self.model,
            obs_op=self.obs_op,
            background_cov=self.background_cov,
            obs_cov=self.obs_cov,
            window=self.window,
            truth_init=self.truth_init,
            perturb_background=self.perturb_background,
            perturb_obs=self.perturb_obs,
        )


@dataclass
class PipelineConfig:
    seed: int
    method: str
    problem: ProblemConfig
    encoding: EncodingScheme | None
    params: MethodParams
    out_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.raw))

    def __eq__(self, other):
        if not isinstance(other, PipelineConfig):
            return NotImplemented
        return _canonical(self.raw) == _canonical(other.raw)


def _canonical(obj):
    return json.loads(json.dumps(obj, sort_keys=True))


def _covariance_from(node, dim_hint, path, violations) -> Covariance | None:
    if not isinstance(node, dict):
        violations.append(f"{path}: expected an object with 'diag' or 'matrix'")
        return None
    try:
        if "diag" in node:
            return Covariance.diagonal(np.asarray(node["diag"], dtype=float))
        if "matrix" in node:
            return Covariance(np.asarray(node["matrix"], dtype=float))
        violations.append(f"{path}: needs a 'diag' or 'matrix' key")
    except Exception as exc:
        violations.append(f"{path}: {exc}")
    return None


def _model_from(node, path, violations) -> DynamicsModel | None:
    if not isinstance(node, dict) or "kind" not in node:
        violations.append(f"{path}: model object with a 'kind' key is required")
        return None
    try:
        return DynamicsModel.from_dict(node)
    except Exception as exc:
        violations.append(f"{path}: {exc}")
        return None


def _problem_from(node, path, violations) -> ProblemConfig | None:
    if not isinstance(node, dict):
        violations.append(f"{path}: required object is missing")
        return None
    missing = [k for k in ("model", "window", "background_cov", "obs_cov") if k not in node]
    for key in missing:
        violations.append(f"{path}.{key}: required field is missing")
    model = _model_from(node.get("model"), f"{path}.model", violations) if "model" in node else None
    if missing or model is None:
        return None
    d = model.state_dim

    window = node["window"]
    if not isinstance(window, int) or window < 1:
        violations.append(f"{path}.window: must be an integer >= 1")
        return None

    obs_node = node.get("obs_operator", "identity")
    try:
        if obs_node == "identity":
            obs_op = ObservationOperator.identity(d)
        else:
            obs_op = ObservationOperator(np.asarray(obs_node["matrix"], dtype=float))
        if obs_op.state_dim != d:
            violations.append(f"{path}.obs_operator: operates on {obs_op.state_dim} dims, model has {d}")
    except Exception as exc:
        violations.append(f"{path}.obs_operator: {exc}")
        return None

    b_cov = _covariance_from(node["background_cov"], d, f"{path}.background_cov", violations)
    r_cov = _covariance_from(node["obs_cov"], obs_op.obs_dim, f"{path}.obs_cov", violations)
    q_cov = None
    if node.get("process_noise") is not None:
        q_cov = _covariance_from(node["process_noise"], d, f"{path}.process_noise", violations)
    if b_cov is None or r_cov is None:
        return None
    if b_cov.dim != d:
        violations.append(f"{path}.background_cov: dimension {b_cov.dim} != state dimension {d}")
    if r_cov.dim != obs_op.obs_dim:
        violations.append(f"{path}.obs_cov: dimension {r_cov.dim} != observation dimension {obs_op.obs_dim}")
    if q_cov is not None and q_cov.dim != d:
        violations.append(f"{path}.process_noise: dimension {q_cov.dim} != state dimension {d}")

    truth_init = None
    if node.get("truth_init") is not None:
        truth_init = np.asarray(node["truth_init"], dtype=float)
        if truth_init.shape != (d,):
            violations.append(f"{path}.truth_init: expected {d} components")

    return ProblemConfig(
        model=model,
        window=window,
        obs_op=obs_op,
        background_cov=b_cov,
        obs_cov=r_cov,
        process_noise=q_cov,
        truth_init=truth_init,
        perturb_background=bool(node.get("perturb_background", True)),
        perturb_obs=bool(node.get("perturb_obs", True)),
    )


def _encoding_from(node, state_dim, path, violations) -> EncodingScheme | None:
    if not isinstance(node, dict):
        violations.append(f"{path}: required object is missing")
        return None
    missing = [k for k in ("bits_per_dim", "lower", "upper") if k not in node]
    for key in missing:
        violations.append(f"{path}.{key}: required field is missing")
    if missing:
        return None
    try:
        scheme = EncodingScheme(
            dims=int(node.get("dims", state_dim)),
            bits_per_dim=int(node["bits_per_dim"]),
            lower=np.asarray(node["lower"], dtype=float),
            upper=np.asarray(node["upper"], dtype=float),
        )
    except Exception as exc:
        violations.append(f"{path}: {exc}")
        return None
    if scheme.dims != state_dim:
        violations.append(f"{path}.dims: {scheme.dims} != model state dimension {state_dim}")
    return scheme


def _params_from(node, path, violations) -> MethodParams:
    params = MethodParams()
    if node is None:
        return params
    if not isinstance(node, dict):
        violations.append(f"{path}: expected an object")
        return params
    known = set(MethodParams.__dataclass_fields__)
    for key, value in node.items():
        if key not in known:
            violations.append(f"{path}.{key}: unknown parameter")
            continue
        setattr(params, key, value)
    if params.resampler not in RESAMPLERS:
        violations.append(f"{path}.resampler: must be one of {RESAMPLERS}")
    for key in ("particles", "depth", "chain_steps", "refine_steps", "refine_flips", "shots", "qvr_layers"):
        if int(getattr(params, key)) < 1 and not (key == "refine_steps" and int(getattr(params, key)) == 0):
            violations.append(f"{path}.{key}: must be >= 1")
        else:
            setattr(params, key, int(getattr(params, key)))
    if params.burn_in < 0 or params.burn_in >= params.chain_steps:
        violations.append(f"{path}.burn_in: need chain_steps > burn_in >= 0")
    if not 0.0 <= float(params.ess_threshold) <= 1.0:
        violations.append(f"{path}.ess_threshold: must lie in [0, 1]")
    return params


def config_from_dict(doc: dict, default_out: str = "out") -> PipelineConfig:
    """Validate a parsed JSON document into a runnable config."""
    violations: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigValidationError(["top level: expected a JSON object"])

    seed = doc.get("seed")
    if seed is None:
        violations.append("seed: required field is missing (reproducibility is contractual)")
        seed = 0
    elif not isinstance(seed, int):
        violations.append("seed: must be an integer")
        seed = 0

    method = doc.get("method")
    if method is None:
        violations.append("method: required field is missing")
    elif method not in METHODS:
        violations.append(f"method: {method!r} is not one of {METHODS}")

    problem = _problem_from(doc.get("problem"), "problem", violations)
    params = _params_from(doc.get("params"), "params", violations)

    encoding = None
    if doc.get("encoding") is not None and problem is not None:
        encoding = _encoding_from(doc["encoding"], problem.model.state_dim, "encoding", violations)
    if method in TABLE_METHODS:
        if encoding is None:
            violations.append(f"encoding: required for method {method!r}")
        elif encoding.num_qubits > MAX_TABLE_QUBITS:
            violations.append(
                f"encoding: {encoding.num_qubits} qubits exceed the {MAX_TABLE_QUBITS}-qubit cost-table cap"
            )

    if violations:
        raise ConfigValidationError(violations)
    return PipelineConfig(
        seed=seed,
        method=method,
        problem=problem,
        encoding=encoding,
        params=params,
        out_dir=str(doc.get("out_dir", default_out)),
        raw=doc,
    )


def load_config(path) -> PipelineConfig:
    """Parse and validate one config file; syntax errors keep line/column."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(
            [f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc
    return config_from_dict(doc)


def load_config_list(path) -> list[PipelineConfig]:
    """Parse a file holding either a JSON array of configs or {'configs': [...]}."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(
            [f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"]
        ) from exc
    if isinstance(doc, dict) and "configs" in doc:
        doc = doc["configs"]
    if not isinstance(doc, list) or not doc:
        raise ConfigValidationError([f"{path}: expected a non-empty list of configs"])
    configs = []
    violations = []
    for i, entry in enumerate(doc):
        try:
            configs.append(config_from_dict(entry))
        except ConfigValidationError as exc:
            violations.extend(f"configs[{i}].{v}" for v in exc.violations)
    if violations:
        raise ConfigValidationError(violations)
    return configs
