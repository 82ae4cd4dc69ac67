"""Scaling sweeps: oracle calls vs acceptance fraction, and particle-filter
error vs ensemble size against the exact Kalman posterior.

Both sweeps fit ordinary least squares on log-log data and report slope,
intercept, and residuals; nothing here asserts a rate, the acceptance tests
do that with their own tolerances.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import Covariance, DynamicsModel, ObservationOperator
from .errors import ConfigValidationError
from .kalman import kalman_filter
from .mcmc import (
    ProposalKernel,
    TargetDistribution,
    classical_rejection_step,
    qmcmc_step,
)
from .particle_filter import run_pf
from .report import dump_json, write_csv
from .rngutil import rng_from, spawn_seeds
from .twin import TwinConfig, generate_twin


@dataclass
class FitResult:
    slope: float
    intercept: float
    residuals: list[float]


@dataclass
class ScalingReport:
    kind: str
    seed: int
    grid: list[float]
    curves: dict[str, list[float]]
    fits: dict[str, FitResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "seed": self.seed,
            "grid": [float(g) for g in self.grid],
            "curves": {k: [float(v) for v in vs] for k, vs in self.curves.items()},
            "fits": {
                k: {
                    "slope": f.slope,
                    "intercept": f.intercept,
                    "residuals": f.residuals,
                }
                for k, f in self.fits.items()
            },
        }


def loglog_fit(xs, ys) -> FitResult:
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    residuals = ly - (slope * lx + intercept)
    return FitResult(float(slope), float(intercept), [float(r) for r in residuals])


def single_marked_target(num_qubits: int) -> TargetDistribution:
    """One dominant state, one mid-density start state, the rest negligible."""
    lw = np.full(1 << num_qubits, -60.0)
    lw[0] = 0.0
    lw[(1 << num_qubits) - 1] = 0.0
    return TargetDistribution(log_weights=lw)


def epsilon_scaling(
    qubit_grid: list[int], seed: int, trials: int = 80
) -> ScalingReport:
    """Mean oracle calls per accepted move vs marked fraction 2^-n.

    Quantum steps amplify the single acceptable proposal; the classical
    baseline is fixed-u rejection sampling over the same kernel.
    """
    if len(qubit_grid) < 4:
        raise ConfigValidationError(["epsilon_scaling: grid needs >= 4 points"])
    eps_nominal = []
    quantum_cost = []
    classical_cost = []
    seeds = spawn_seeds(seed, len(qubit_grid))
    for n, n_seed in zip(qubit_grid, seeds):
        n = int(n)
        if n < 2:
            raise ConfigValidationError(["epsilon_scaling: qubit counts must be >= 2"])
        target = single_marked_target(n)
        kernel = ProposalKernel("uniform_global")
        trial_seeds = spawn_seeds(n_seed, 2 * trials)
        q_calls = q_accepted = 0
        for t in range(trials):
            _, accepted, calls = qmcmc_step(target, kernel, 0, trial_seeds[t])
            q_calls += calls
            q_accepted += int(accepted)
        c_calls = c_accepted = 0
        for t in range(trials):
            _, accepted, draws = classical_rejection_step(
                target, kernel, 0, trial_seeds[trials + t]
            )
            c_calls += draws
            c_accepted += int(accepted)
        eps_nominal.append(2.0**-n)
        quantum_cost.append(q_calls / max(1, q_accepted))
        classical_cost.append(c_calls / max(1, c_accepted))
    report = ScalingReport(
        kind="epsilon_scaling",
        seed=seed,
        grid=eps_nominal,
        curves={"quantum": quantum_cost, "classical": classical_cost},
    )
    report.fits["quantum"] = loglog_fit(eps_nominal, quantum_cost)
    report.fits["classical"] = loglog_fit(eps_nominal, classical_cost)
    return report


def _linear_gaussian_setup() -> TwinConfig:
    angle = 0.4
    rot = np.array(
        [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
    )
    return TwinConfig(
        model=DynamicsModel(kind="linear", matrix=0.92 * rot),
        obs_op=ObservationOperator.identity(2),
        background_cov=Covariance.isotropic(0.5**2, 2),
        obs_cov=Covariance.isotropic(0.35**2, 2),
        window=6,
        truth_center=np.zeros(2),
    )


def particle_scaling(
    n_grid: list[int], seed: int, repeats: int = 24
) -> ScalingReport:
    """Particle-mean RMSE against the exact Kalman filtering mean, per N.

    Runs the classical bootstrap filter and the quantum-resampling variant
    of the same filter; the quantum curve is reported, not asserted.
    """
    if len(n_grid) < 4:
        raise ConfigValidationError(["particle_scaling: grid needs >= 4 points"])
    cfg = _linear_gaussian_setup()
    q_cov = Covariance.isotropic(0.2**2, 2)
    rep_seeds = spawn_seeds(seed, repeats)
    errors = {"classical": np.zeros(len(n_grid)), "quantum_resampling": np.zeros(len(n_grid))}
    for r, rep_seed in enumerate(rep_seeds):
        twin_seed, pf_seed_base = spawn_seeds(rep_seed, 2)
        twin = generate_twin(cfg, twin_seed)
        kf_means, _ = kalman_filter(
            cfg.model.matrix,
            cfg.obs_op.matrix,
            q_cov,
            cfg.obs_cov,
            twin.problem.background,
            cfg.background_cov,
            twin.observations,
        )
        pf_seeds = spawn_seeds(pf_seed_base, 2 * len(n_grid))
        for i, n in enumerate(n_grid):
            for j, resampler in enumerate(("systematic", "quantum")):
                analysis, _ = run_pf(
                    twin.problem,
                    int(n),
                    resampler=resampler,
                    threshold=0.5,
                    seed=pf_seeds[2 * i + j],
                    process_noise=q_cov,
                )
                err = float(np.sqrt(np.mean((analysis - kf_means) ** 2)))
                key = "classical" if resampler == "systematic" else "quantum_resampling"
                errors[key][i] += err / repeats
    report = ScalingReport(
        kind="particle_scaling",
        seed=seed,
        grid=[float(n) for n in n_grid],
        curves={k: v.tolist() for k, v in errors.items()},
    )
    for key, ys in report.curves.items():
        report.fits[key] = loglog_fit(report.grid, ys)
    return report


def scaling_experiment(kind: str, grid: list, seed: int) -> ScalingReport:
    """Dispatch a sweep; grid entries are qubit counts or particle counts."""
    if len(grid) < 4:
        raise ConfigValidationError([f"{kind}: grid needs >= 4 points"])
    if kind == "epsilon_scaling":
        return epsilon_scaling([int(g) for g in grid], seed)
    if kind == "particle_scaling":
        return particle_scaling([int(g) for g in grid], seed)
    raise ConfigValidationError(
        [f"kind: {kind!r} is not one of ('epsilon_scaling', 'particle_scaling')"]
    )


def write_scaling_report(report: ScalingReport, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "scaling.json"]
    dump_json(report.to_dict(), written[0])
    path = out / f"plotdata_{report.kind}.csv"
    names = sorted(report.curves)
    rows = [
        [g] + [report.curves[name][i] for name in names]
        for i, g in enumerate(report.grid)
    ]
    write_csv(path, ["grid"] + names, rows)
    written.append(path)
    return written
