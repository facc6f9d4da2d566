"""
Run ledger: records game runs and verification reports in the database.

Recording is best effort. A missing or unmigrated database logs a warning and
the caller carries on; the ledger never changes a command's outcome.
"""
import logging
import math
from pathlib import Path
from typing import Optional, Sequence, Union

from django.conf import settings
from django.db import DatabaseError, transaction

from ..models import AgentResult, GameRun, VerificationRecord
from .game import GameTrace
from .scenarios import Scenario

logger = logging.getLogger(__name__)


def _enabled() -> bool:
    return bool(settings.CONSENSUS_RECORD_RUNS)


def _finite(value: float) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


def start_run(scenario: Scenario, output_dir: Union[str, Path] = '') -> Optional[GameRun]:
    """Create a 'running' GameRun row; None when recording is off or the database is unavailable."""
    if not _enabled():
        return None
    try:
        return GameRun.objects.create(
            scenario_name=scenario.name,
            nx=scenario.nx,
            ny=scenario.ny,
            final_time=scenario.T,
            dt_strategy=scenario.dt_strategy,
            agent_count=scenario.k,
            status='running',
            output_dir=str(output_dir),
        )
    except DatabaseError as e:
        logger.warning(f"Run ledger unavailable, not recording {scenario.name}: {e}")
        return None


def complete_run(run: Optional[GameRun], scenario: Scenario, trace: GameTrace) -> Optional[GameRun]:
    """Store final costs and per-agent results, ranked by cost (1 = lowest)."""
    if run is None:
        return None
    costs = [float(c) for c in trace.final_costs]
    order = sorted(range(len(costs)), key=lambda i: (costs[i], i))
    ranks = {index: rank + 1 for rank, index in enumerate(order)}
    try:
        with transaction.atomic():
            run.status = 'completed'
            run.costs = costs
            run.final_mass = _finite(trace.masses[-1])
            run.save(update_fields=['status', 'costs', 'final_mass'])
            AgentResult.objects.bulk_create([
                AgentResult(
                    run=run,
                    agent_index=i,
                    strategy_variant=seed.strategy.variant,
                    final_cost=costs[i],
                    final_position=[float(p) for p in trace.positions[-1, i]],
                    rank=ranks[i],
                )
                for i, seed in enumerate(scenario.agents)
            ])
    except DatabaseError as e:
        logger.warning(f"Could not record results of run #{run.id}: {e}")
    return run


def fail_run(run: Optional[GameRun], message: str):
    if run is None:
        return
    try:
        run.mark_failed(message)
    except DatabaseError as e:
        logger.warning(f"Could not mark run #{run.id} as failed: {e}")


def record_reports(reports: Sequence) -> int:
    """Store verification reports; returns the number of rows written."""
    if not _enabled() or not reports:
        return 0
    try:
        rows = VerificationRecord.objects.bulk_create([
            VerificationRecord(
                check_name=report.check,
                lhs=float(report.lhs),
                rhs=float(report.rhs),
                passed=report.passed,
                self_test_failed=report.self_test_failed,
                params=report.to_dict()['params'],
                resolutions=list(report.resolutions),
                orders=[o for o in (_finite(o) for o in report.orders) if o is not None],
            )
            for report in reports
        ])
    except (DatabaseError, TypeError, ValueError) as e:
        logger.warning(f"Could not record verification reports: {e}")
        return 0
    return len(rows)
