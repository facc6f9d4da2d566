"""
Writes a finished run to disk: summary.json, trajectory.csv, one field CSV and
PGM per snapshot and, when enabled, report.pdf.
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from django.conf import settings

from .game import GameTrace
from .grid import write_field_csv, write_field_pgm

logger = logging.getLogger(__name__)


class OutputError(Exception):
    """Raised when run outputs cannot be written."""

    def __init__(self, message: str, path: Path):
        super().__init__(f"{path}: {message}")
        self.path = path


def snapshot_stem(time: float) -> str:
    return f"rho_t{time:g}"


def build_summary(trace: GameTrace, description: str = '', readings: Optional[List[dict]] = None) -> dict:
    """JSON-ready dict of a trace; contains no timestamps so reruns are byte-identical."""
    grid = trace.final_density.grid
    return {
        'scenario': trace.scenario_name,
        'description': description,
        'agents': list(readings or []),
        'grid': {'nx': grid.nx, 'ny': grid.ny, 'x0': grid.x0, 'y0': grid.y0, 'dx': grid.dx, 'dy': grid.dy},
        'dt': trace.dt,
        'T': float(trace.times[-1]),
        'epochs': trace.n_epochs,
        'costs': {f"J_{i + 1}": float(c) for i, c in enumerate(trace.final_costs)},
        'final_mass': float(trace.masses[-1]),
        'initial_mass': float(trace.masses[0]),
        'transport': {'substeps': trace.substeps, 'max_courant': trace.max_courant},
        'times': trace.times.tolist(),
        'positions': trace.positions.tolist(),
        'controls': trace.controls.tolist(),
        'running_costs': trace.running_costs.tolist(),
        'masses': trace.masses.tolist(),
        'snapshots': [f"{snapshot_stem(t)}.csv" for t in sorted(trace.snapshots)],
    }


def _write_trajectory(trace: GameTrace, path: Path) -> Path:
    header = ','.join(['time'] + [f"P{i + 1}{axis}" for i in range(trace.k) for axis in 'xy'])
    rows = np.column_stack([trace.times, trace.positions.reshape(len(trace.times), -1)])
    with open(path, 'w', newline='\n') as fh:
        np.savetxt(fh, rows, delimiter=',', fmt='%.17g', header=header, comments='')
    return path


def write_outputs(
    trace: GameTrace,
    out_dir: Union[str, Path],
    description: str = '',
    pdf: Optional[bool] = None,
    readings: Optional[List[dict]] = None,
) -> List[Path]:
    """
    Write every output file of a run.

    Args:
        trace: finished run
        out_dir: destination directory (created if missing)
        description: scenario description copied into the summary
        pdf: also render report.pdf (defaults to CONSENSUS_PDF_REPORT)
        readings: per-agent kernel form, sign and gradient reading

    Returns:
        List of written paths, summary.json first
    """
    out_dir = Path(out_dir)
    if pdf is None:
        pdf = settings.CONSENSUS_PDF_REPORT
    written = []
    current = out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)

        current = out_dir / 'summary.json'
        current.write_text(json.dumps(build_summary(trace, description, readings), indent=2) + '\n')
        written.append(current)

        current = out_dir / 'trajectory.csv'
        written.append(_write_trajectory(trace, current))

        for time in sorted(trace.snapshots):
            field = trace.snapshots[time]
            current = out_dir / f"{snapshot_stem(time)}.csv"
            written.append(write_field_csv(field, current))
            current = out_dir / f"{snapshot_stem(time)}.pgm"
            written.append(write_field_pgm(field, current))

        if pdf:
            from .pdf_generator import RunReportGenerator

            current = out_dir / 'report.pdf'
            buffer = RunReportGenerator().generate_report(trace, description)
            current.write_bytes(buffer.getvalue())
            written.append(current)
    except OSError as e:
        raise OutputError(e.strerror or str(e), current)

    logger.info(f"Wrote {len(written)} output file(s) to {out_dir}")
    return written
