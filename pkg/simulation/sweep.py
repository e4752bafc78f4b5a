"""
End-to-end β sweep for the quadratically coupled system.

Stages, in order (each failure is reported with the stage name and leaves the
artifacts written so far in place):

  ground        U, V and c₁, c₂ on the configured grid
  thresholds    S̄_p from the limit problem V ≡ V∞, then c₁*, c₂*
  brackets      t1 < 1 < t2 and s1 < 1 < s2 along the rays tU, sV
  continuation  Newton solves along ascending β, warm-started
  surfaces      m_β and the deformed-surface estimate of c_β for every β
  probe         gradient-gap witness at the smallest β
  artifacts     results.csv, manifest.txt, summary.md, field snapshots

The distances reported are distances to the computed pair (U, V), an upper
bound on the distance to the whole set of ground-state pairs.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from tqdm import tqdm

from src.core.functional import c_star, estimate_sbar_p
from src.solvers.coupled import (
    GapProbe,
    MinimaxSurface,
    ReferencePair,
    SolveReport,
    continuation_sweep,
    gradient_gap_probe,
    separation_radius,
    surface_max_m_beta,
    surface_minimax_c_beta,
)
from src.solvers.ground import Bracket, bracket_ts, solve_ground_state
from src.utils.errors import ConfigError, ContinuationError, CritPointError, StageError
from src.utils.records import RunManifest, SweepRecord, emit_csv, write_manifest, write_snapshot

logger = logging.getLogger(__name__)


@dataclass
class GroundSummary:
    c1: float
    c2: float
    c1_star: float
    c2_star: float
    sbar_p: float
    brackets: tuple[Bracket, Bracket]


@dataclass
class ExperimentResult:
    records: list[SweepRecord] = field(default_factory=list)
    artifacts: dict[str, Path] = field(default_factory=dict)
    reports: list[SolveReport] = field(default_factory=list)
    ground: Optional[GroundSummary] = None
    probe: Optional[GapProbe] = None
    monotone: bool = True


def prepare_output_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot use output directory {out}: {exc}") from exc
    if not out.is_dir():
        raise ConfigError(f"output path {out} is not a directory")
    return out


@contextmanager
def _stage(name: str):
    logger.info("stage: %s", name)
    try:
        yield
    except StageError:
        raise
    except (CritPointError, ValueError, OSError) as exc:
        logger.error("stage '%s' failed: %s", name, exc)
        raise StageError(name, exc) from exc


def check_monotone(records: list[SweepRecord], level_sum: float) -> bool:
    """|I_β - (c₁+c₂)| should not grow as β decreases; violations are warnings."""
    ordered = sorted(records, key=lambda r: -r.beta)
    ok = True
    for previous, current in zip(ordered, ordered[1:]):
        if abs(current.I_beta - level_sum) > abs(previous.I_beta - level_sum):
            logger.warning(
                "|I_beta - (c1+c2)| grew from %.3e at beta=%.6g to %.3e at beta=%.6g",
                abs(previous.I_beta - level_sum), previous.beta,
                abs(current.I_beta - level_sum), current.beta,
            )
            ok = False
    return ok


def run_experiment(manifest: RunManifest, progress: bool = True) -> ExperimentResult:
    config = manifest.config
    out = prepare_output_dir(config.output_dir)
    result = ExperimentResult()
    result.artifacts["manifest"] = write_manifest(manifest, out / "manifest.txt")

    grid = config.grid()
    params = config.model_params()
    descent = config.descent_controls()

    with _stage("ground"):
        first = solve_ground_state(params, 1, grid=grid, controls=descent)
        second = solve_ground_state(params, 2, grid=grid, controls=descent)
        reference = ReferencePair(first, second)
        result.artifacts["U"] = write_snapshot(out / "U.bin", first.field.as_array())
        result.artifacts["V"] = write_snapshot(out / "V.bin", second.field.as_array())

    with _stage("thresholds"):
        sbar = estimate_sbar_p(params, grid, controls=descent)
        c1_star, c2_star = c_star(params, 1, sbar), c_star(params, 2, sbar)

    with _stage("brackets"):
        brackets = (bracket_ts(params, 1, first), bracket_ts(params, 2, second))

    result.ground = GroundSummary(reference.c1, reference.c2, c1_star, c2_star, sbar, brackets)

    betas = sorted(config.beta_schedule)
    try:
        with _stage("continuation"):
            try:
                result.reports = continuation_sweep(params, reference, betas, config.newton_controls())
            except ContinuationError as exc:
                result.reports = list(exc.reports)
                raise
    finally:
        for k, report in enumerate(result.reports):
            result.artifacts[f"u_beta_{k}"] = write_snapshot(out / f"u_beta_{k}.bin", report.pair.u.as_array())
            result.artifacts[f"v_beta_{k}"] = write_snapshot(out / f"v_beta_{k}.bin", report.pair.v.as_array())

    m_betas: dict[float, float] = {}
    try:
        with _stage("surfaces"):
            for report in tqdm(result.reports, desc="minimax surfaces", disable=not progress):
                at_beta = params.with_beta(report.beta)
                maximum = surface_max_m_beta(at_beta, reference, brackets)
                surface = MinimaxSurface.from_reference(
                    at_beta, reference, brackets, config.surface_nodes, config.surface_nodes
                )
                estimate = surface_minimax_c_beta(at_beta, surface, config.flow_controls())
                if estimate.exhausted:
                    logger.warning("surface flow at beta=%.6g used its full budget", report.beta)
                m_betas[report.beta] = maximum.m_beta
                result.records.append(SweepRecord(
                    beta=report.beta,
                    c_beta=estimate.c_beta_estimate,
                    m_beta=maximum.m_beta,
                    I_beta=report.energy,
                    dist_to_UV=report.dist_to_uv,
                    residual=report.residual_norm,
                    norm_u=report.norm_u,
                    norm_v=report.norm_v,
                ))

        with _stage("probe"):
            smallest = min(result.reports, key=lambda r: r.beta)
            d = 0.5 * separation_radius(params.p, reference.c1, reference.c2)
            result.probe = gradient_gap_probe(
                params.with_beta(smallest.beta),
                reference,
                0.5 * d,
                config.probe_samples,
                m_beta=m_betas[smallest.beta],
                seed=manifest.seed,
            )
    finally:
        if result.records:
            result.artifacts["csv"] = emit_csv(result.records, out / "results.csv")

    with _stage("artifacts"):
        result.monotone = check_monotone(result.records, reference.level_sum)
        result.artifacts["summary"] = write_summary(out / "summary.md", result, reference, betas)
    return result


# ─── summary.md ──────────────────────────────────────────────────────────────

def _fmt(x: float) -> str:
    return f"{x:.8g}"


def write_summary(path: Path, result: ExperimentResult, reference: ReferencePair, betas: list[float]) -> Path:
    g = result.ground
    m0 = reference.level_sum
    lines = [
        "# Coupled system β sweep",
        "",
        "## Ground states",
        "",
        "| i | c_i | c_i* | c_i* - c_i | t1 | t2 |",
        "|---|-----|------|------------|----|----|",
    ]
    for i, (c, cs, b) in enumerate(((g.c1, g.c1_star, g.brackets[0]), (g.c2, g.c2_star, g.brackets[1])), start=1):
        lines.append(f"| {i} | {_fmt(c)} | {_fmt(cs)} | {_fmt(cs - c)} | {_fmt(b.t1)} | {_fmt(b.t2)} |")
    lines += [
        "",
        f"S̄_p = {_fmt(g.sbar_p)}, c1 + c2 = {_fmt(m0)}",
        "",
        "## Convergence as β → 0",
        "",
        "| k | β | I_β | \\|I_β - (c1+c2)\\| | \\|m_β - (c1+c2)\\| | c_β estimate | dist to (U,V) | dist/β | I_β - max(c1,c2) |",
        "|---|---|-----|------------------|------------------|--------------|---------------|--------|------------------|",
    ]
    by_beta = {r.beta: r for r in result.records}
    for k, report in enumerate(result.reports):
        record = by_beta.get(report.beta)
        ratio = _fmt(report.dist_to_uv / report.beta) if report.beta > 0 else "-"
        m_gap = _fmt(abs(record.m_beta - m0)) if record else "-"
        c_est = _fmt(record.c_beta) if record else "-"
        lines.append(
            f"| {k} | {_fmt(report.beta)} | {_fmt(report.energy)} | {_fmt(abs(report.energy - m0))} | {m_gap} "
            f"| {c_est} | {_fmt(report.dist_to_uv)} | {ratio} | {_fmt(report.high_energy_margin(reference))} |"
        )
    converged = [r.beta for r in result.reports]
    lines += [
        "",
        f"Largest β with a converged Newton solve: {_fmt(max(converged)) if converged else 'none'} "
        f"(schedule maximum {_fmt(max(betas))}).",
        f"Convergence table monotone: {'yes' if result.monotone else 'no'}.",
    ]
    if result.probe is not None:
        delta = "none passed the energy filter" if result.probe.delta_estimate is None else _fmt(result.probe.delta_estimate)
        lines.append(f"Gradient gap estimate: {delta} ({result.probe.kept} of {result.probe.n_samples} samples kept).")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
