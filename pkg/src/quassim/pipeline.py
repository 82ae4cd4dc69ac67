"""Experiment orchestration: single-method runs, the hybrid particle
pipeline, method comparison on a shared twin, and scaling sweeps.

The hybrid run executes, per window: particles drawn from the prior, a
full-window cost table, variational optimization of the proposal state,
measurement-based particle initialization, then per step a predict /
chain-refine / reweight / resample cycle with the analysis taken as the
weighted mean.  Every stage appends a log entry so reports are replayable.
"""
from __future__ import annotations

import logging
import time

import numpy as np

from . import __version__
from . import mcmc, particle_filter, qaoa
from .config import PipelineConfig
from .encoding import EncodingScheme, decode_batch, encode_batch, tabulate_cost
from .errors import ConfigValidationError
from .fourdvar import AssimilationProblem, cost_batch, minimize, trajectory
from .mcmc import ProposalKernel, TargetDistribution
from .particle_filter import ParticleEnsemble, QvrConfig, ess, update_weights
from .report import AssimilationReport
from .rngutil import rng_from, spawn_seeds
from .statevector import probabilities as sv_probs
from .twin import TwinExperiment, generate_twin

log = logging.getLogger("quassim.pipeline")

DIVERGENCE_PENALTY = 1e12


def build_twin(config: PipelineConfig) -> TwinExperiment:
    twin_seed = spawn_seeds(config.seed, 1)[0]
    return generate_twin(config.problem.twin_config(), twin_seed)


def window_cost_table(problem: AssimilationProblem, scheme: EncodingScheme):
    """Tabulate the full-window cost over the grid; blow-ups become a finite
    penalty so the table stays a valid diagonal observable."""

    def batched(points):
        values = cost_batch(problem, points)
        values[~np.isfinite(values)] = DIVERGENCE_PENALTY
        return np.minimum(values, DIVERGENCE_PENALTY)

    return tabulate_cost(scheme, batched, batched=True)


def _encoding_diagnostics(scheme: EncodingScheme) -> dict:
    """Discretization-error summary reported next to any table-based result."""
    return {
        "bits_per_dim": scheme.bits_per_dim,
        "cell_widths": scheme.cell_widths.tolist(),
        "max_quantization_error": (scheme.cell_widths / 2).tolist(),
    }


def _rmse(analysis: np.ndarray, truth: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean((analysis - truth) ** 2, axis=1))


def _report(config, twin, analysis, diagnostics, stages, timings) -> AssimilationReport:
    return AssimilationReport(
        method=config.method,
        analysis=analysis,
        truth=twin.truth,
        rmse=_rmse(analysis, twin.truth),
        free_run_rmse=twin.free_run_rmse(),
        diagnostics=diagnostics,
        stages=stages,
        config_echo=config.to_dict(),
        version=__version__,
        timings=timings,
    )


def run(config: PipelineConfig) -> AssimilationReport:
    """Run one method on the twin experiment derived from the config seed."""
    t0 = time.perf_counter()
    twin = build_twin(config)
    timings = {"twin_s": time.perf_counter() - t0}
    runner = {
        "fourdvar": _run_fourdvar,
        "pf": _run_pf,
        "qaoa": _run_qaoa,
        "qmcmc": _run_qmcmc,
        "qvpf": run_qvpf,
    }[config.method]
    t0 = time.perf_counter()
    report = runner(config, twin, timings)
    timings["method_s"] = time.perf_counter() - t0
    report.timings.update(timings)
    return report


def _run_fourdvar(config, twin, timings) -> AssimilationReport:
    result = minimize(twin.problem, twin.problem.background)
    analysis = trajectory(twin.problem, result.x_opt)
    diagnostics = {
        "cost_trace": result.cost_trace.tolist(),
        "converged": result.converged,
        "diverged": result.diverged,
        "x0_estimate": result.x_opt.tolist(),
    }
    if config.problem.process_noise is not None:
        diagnostics["model_error_note"] = (
            "strong-constraint analysis: the configured process noise is used "
            "by particle methods but ignored by this deterministic trajectory"
        )
    return _report(config, twin, analysis, diagnostics, [], timings)


def _clip_bounds(config):
    if config.encoding is None:
        return None
    return (config.encoding.lower, config.encoding.upper)


def _run_pf(config, twin, timings) -> AssimilationReport:
    pf_seed = spawn_seeds(config.seed, 2)[1]
    analysis, diag = particle_filter.run_pf(
        twin.problem,
        config.params.particles,
        resampler=config.params.resampler,
        threshold=config.params.ess_threshold,
        seed=pf_seed,
        process_noise=config.problem.process_noise,
        clip_bounds=_clip_bounds(config),
        qvr_config=QvrConfig(layers=config.params.qvr_layers),
    )
    diagnostics = {
        "ess_trace": diag.ess_trace.tolist(),
        "resampled": diag.resampled.tolist(),
        "resample_count": diag.resample_count,
        "qvr_divergences": diag.qvr_divergences,
    }
    return _report(config, twin, analysis, diagnostics, [], timings)


def _qaoa_config(config, seed) -> qaoa.QaoaOptimizerConfig:
    return qaoa.QaoaOptimizerConfig(
        max_iters=config.params.qaoa_iters,
        learning_rate=config.params.qaoa_learning_rate,
        natural_gradient=config.params.natural_gradient,
        restarts=config.params.qaoa_restarts,
        shots=config.params.shots,
        seed=seed,
    )


def _run_qaoa(config, twin, timings) -> AssimilationReport:
    seeds = spawn_seeds(config.seed, 3)
    t0 = time.perf_counter()
    table = window_cost_table(twin.problem, config.encoding)
    timings["tabulation_s"] = time.perf_counter() - t0
    result = qaoa.optimize(table, config.params.depth, _qaoa_config(config, seeds[1]))
    state = qaoa.evolve(table, result.params)
    x0 = decode_batch(np.asarray([int(np.argmax(sv_probs(state)))]), config.encoding)[0]
    analysis = trajectory(twin.problem, x0)
    diagnostics = {
        "qaoa_trace": [[i, v] for i, v in result.trace],
        "expectation": result.expectation,
        "table_min": float(table.values.min()),
        "table_argmin": int(np.argmin(table.values)),
        "sample_counts": {str(k): v for k, v in sorted(result.samples.counts.items())},
        "x0_estimate": x0.tolist(),
    }
    return _report(config, twin, analysis, diagnostics, [], timings)


def _run_qmcmc(config, twin, timings) -> AssimilationReport:
    seeds = spawn_seeds(config.seed, 3)
    t0 = time.perf_counter()
    table = window_cost_table(twin.problem, config.encoding)
    timings["tabulation_s"] = time.perf_counter() - t0
    target = TargetDistribution.from_cost_table(table.values)
    kernel = ProposalKernel("bitflip_neighborhood", config.params.refine_flips)
    chain = mcmc.run_chain(
        target,
        kernel,
        steps=config.params.chain_steps,
        burn_in=config.params.burn_in,
        seed=seeds[1],
        init=int(encode_batch(twin.problem.background[None, :], config.encoding)[0]),
        step_kind="quantum",
        corrected=config.params.corrected_qmcmc,
    )
    decoded = decode_batch(chain.states, config.encoding)
    x0 = decoded.mean(axis=0)
    analysis = trajectory(twin.problem, x0)
    chain_diag = mcmc.diagnostics(chain)
    diagnostics = {
        "acceptance_rate": chain_diag.acceptance_rate,
        "ess": chain_diag.ess,
        "autocorrelation_time": chain_diag.autocorrelation_time,
        "oracle_calls": chain.oracle_calls,
        "x0_estimate": x0.tolist(),
    }
    return _report(config, twin, analysis, diagnostics, [], timings)


def step_likelihood_target(
    y: np.ndarray, problem: AssimilationProblem, obs_index: int, scheme: EncodingScheme
) -> TargetDistribution:
    """Discretized single-observation log likelihood over the grid."""
    op = problem.obs_ops[obs_index]
    cov = problem.obs_covs[obs_index]
    points = decode_batch(np.arange(scheme.num_states), scheme)
    residuals = y[None, :] - op.apply_batch(points)
    maha = np.einsum("np,np->n", residuals, cov.solve(residuals.T).T)
    return TargetDistribution(log_weights=-0.5 * maha)


def run_qvpf(config: PipelineConfig, twin: TwinExperiment | None = None, timings=None) -> AssimilationReport:
    """The hybrid pipeline: variationally initialized particles, chain-refined
    weighting, and quantum resampling, advanced one window step at a time."""
    if twin is None:
        twin = build_twin(config)
    timings = timings if timings is not None else {}
    problem = twin.problem
    params = config.params
    scheme = config.encoding
    n_particles = params.particles
    stages: list[dict] = []
    seeds = spawn_seeds(config.seed, 6)
    _, prior_seed, qaoa_seed, sample_seed, chain_seed, step_seed = seeds
    bounds = (scheme.lower, scheme.upper)

    def stage(name, **info):
        entry = {"stage": name, **info}
        stages.append(entry)
        log.info("stage %s: %s", name, info)

    ensemble = ParticleEnsemble.from_prior(
        problem.background, problem.background_cov, n_particles, prior_seed
    )
    stage("prior_particles", count=n_particles, mean=ensemble.mean().tolist())

    stage(
        "parameter_init",
        depth=params.depth,
        qaoa_restarts=params.qaoa_restarts,
        refine_steps=params.refine_steps,
        refine_flips=params.refine_flips,
        corrected_qmcmc=params.corrected_qmcmc,
    )

    t0 = time.perf_counter()
    table = window_cost_table(problem, scheme)
    timings["tabulation_s"] = time.perf_counter() - t0
    stage(
        "cost_tabulation",
        states=int(table.dim),
        min=float(table.values.min()),
        argmin=int(np.argmin(table.values)),
    )

    t0 = time.perf_counter()
    result = qaoa.optimize(table, params.depth, _qaoa_config(config, qaoa_seed))
    timings["qaoa_s"] = time.perf_counter() - t0
    stage(
        "qaoa_optimize",
        expectation=result.expectation,
        iterations=len(result.trace),
    )

    particles = qaoa.sample_particles(table, result, n_particles, scheme, sample_seed)
    ensemble = ParticleEnsemble.uniform(particles)
    stage("qaoa_sample", mean=ensemble.mean().tolist())

    kernel = ProposalKernel("bitflip_neighborhood", params.refine_flips)
    chain_rng = rng_from(chain_seed)
    step_seeds = spawn_seeds(step_seed, 2 * problem.window)
    obs_at: dict[int, int] = {}
    for i, (k, _) in enumerate(problem.observations):
        obs_at[k] = i

    analysis = np.empty((problem.window, problem.state_dim))
    ess_trace = np.empty(problem.window)
    resampled = np.zeros(problem.window, dtype=bool)
    accept_counts: list[float] = []
    oracle_totals: list[int] = []
    t_loop = time.perf_counter()
    for k in range(problem.window):
        if k > 0:
            ensemble = particle_filter.predict(
                ensemble,
                problem.model,
                config.problem.process_noise,
                step_seeds[2 * k],
                clip_bounds=bounds,
            )
        refine_info = {"accepted": 0, "oracle_calls": 0}
        if k in obs_at and params.refine_steps > 0:
            i = obs_at[k]
            _, y = problem.observations[i]
            target = step_likelihood_target(y, problem, i, scheme)
            moved = ensemble.particles.copy()
            indices = encode_batch(moved, scheme)
            for p_idx in range(n_particles):
                idx = int(indices[p_idx])
                hops = 0
                for _ in range(params.refine_steps):
                    idx, acc, calls = mcmc.qmcmc_step(
                        target, kernel, idx, chain_rng, corrected=params.corrected_qmcmc
                    )
                    refine_info["oracle_calls"] += calls
                    refine_info["accepted"] += int(acc)
                    hops += int(acc)
                if hops:
                    moved[p_idx] = decode_batch(np.asarray([idx]), scheme)[0]
            ensemble = ParticleEnsemble(moved, ensemble.weights.copy())
        if k in obs_at:
            i = obs_at[k]
            _, y = problem.observations[i]
            ensemble = update_weights(ensemble, y, problem.obs_ops[i], problem.obs_covs[i])
        ess_trace[k] = ess(ensemble)
        analysis[k] = ensemble.mean()
        if ess_trace[k] < params.ess_threshold * n_particles:
            r_seed = step_seeds[2 * k + 1]
            if params.resampler == "systematic":
                ensemble = particle_filter.resample_systematic(ensemble, r_seed)
            elif params.resampler == "qvr":
                ensemble, _ = particle_filter.resample_variational(
                    ensemble, r_seed, QvrConfig(layers=params.qvr_layers)
                )
            else:
                ensemble = particle_filter.resample_quantum(ensemble, n_particles, r_seed)
            resampled[k] = True
        accept_counts.append(refine_info["accepted"] / max(1, n_particles * params.refine_steps))
        oracle_totals.append(refine_info["oracle_calls"])
        stage(
            "window_step",
            time_index=k,
            ess=float(ess_trace[k]),
            resampled=bool(resampled[k]),
            refine_acceptance=accept_counts[-1],
            refine_oracle_calls=refine_info["oracle_calls"],
            analysis=analysis[k].tolist(),
        )
    timings["window_loop_s"] = time.perf_counter() - t_loop

    diagnostics = {
        "ess_trace": ess_trace.tolist(),
        "resampled": resampled.tolist(),
        "resample_count": int(resampled.sum()),
        "qaoa_trace": [[i, v] for i, v in result.trace],
        "qaoa_expectation": result.expectation,
        "refine_acceptance": accept_counts,
        "refine_oracle_calls": oracle_totals,
        "oracle_calls": int(np.sum(oracle_totals)),
    }
    return _report(config, twin, analysis, diagnostics, stages, timings)


def compare_methods(configs: list[PipelineConfig]) -> list[dict]:
    """Run every config on the identical twin; one result row per config."""
    if not configs:
        raise ConfigValidationError(["compare: need at least one config"])
    reference = configs[0]
    ref_problem = reference.raw.get("problem")
    for i, cfg in enumerate(configs[1:], start=1):
        if cfg.seed != reference.seed or cfg.raw.get("problem") != ref_problem:
            raise ConfigValidationError(
                [f"configs[{i}]: compare requires identical seed and problem blocks"]
            )
    rows = []
    for cfg in configs:
        t0 = time.perf_counter()
        row = {"method": cfg.method}
        try:
            report = run(cfg)
            diag = report.diagnostics
            ess_val = None
            if "ess_trace" in diag:
                ess_val = float(np.mean(diag["ess_trace"]))
            elif "ess" in diag:
                ess_val = float(diag["ess"])
            row.update(
                final_rmse=report.final_rmse(),
                mean_rmse=float(np.mean(report.rmse)),
                ess=ess_val,
                acceptance_rate=diag.get("acceptance_rate"),
                oracle_calls=diag.get("oracle_calls"),
                error=None,
            )
        except Exception as exc:  # one bad method must not sink the table
            log.exception("method %s failed", cfg.method)
            row.update(
                final_rmse=None,
                mean_rmse=None,
                ess=None,
                acceptance_rate=None,
                oracle_calls=None,
                error=f"{type(exc).__name__}: {exc}",
            )
        row["wall_s"] = time.perf_counter() - t0
        rows.append(row)
    return rows
