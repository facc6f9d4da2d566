"""
python manage.py run <scenario.toml | --preset NAME> [--nx N --ny N] [--out DIR] [--snapshots t1,t2,...]
"""
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from consensus.services import ledger
from consensus.services.game import run_game
from consensus.services.grid import NumericsError
from consensus.services.report_writer import OutputError, write_outputs
from consensus.services.scenarios import ScenarioError, agent_readings, load_scenario, preset, preset_names

logger = logging.getLogger(__name__)

CONFIG_ERROR = 2
NUMERICS_ERROR = 3


def _parse_times(raw: str):
    try:
        return [float(t) for t in raw.split(',') if t.strip()]
    except ValueError:
        raise CommandError(f"--snapshots: expected comma-separated numbers, got {raw!r}", returncode=CONFIG_ERROR)


class Command(BaseCommand):
    help = "Play a consensus game from a TOML scenario or a built-in preset and write its outputs"

    def add_arguments(self, parser):
        parser.add_argument('scenario', nargs='?', help="Path to a scenario .toml file")
        parser.add_argument('--preset', choices=preset_names(), help="Built-in scenario instead of a file")
        parser.add_argument('--nx', type=int, help="Override the number of cells along x")
        parser.add_argument('--ny', type=int, help="Override the number of cells along y")
        parser.add_argument('--out', help="Output directory (default CONSENSUS_OUTPUT_DIR/<scenario name>)")
        parser.add_argument('--snapshots', help="Comma-separated times at which to write density snapshots")
        parser.add_argument(
            '--seedless-deterministic', action='store_true',
            help="Accepted for compatibility; runs are always deterministic",
        )

    def handle(self, *args, **options):
        scenario = self._scenario(options)
        out_dir = Path(options['out']) if options['out'] else Path(settings.CONSENSUS_OUTPUT_DIR) / scenario.name

        run = ledger.start_run(scenario, out_dir)
        try:
            trace = run_game(scenario)
            write_outputs(trace, out_dir, scenario.description, readings=agent_readings(scenario))
        except NumericsError as e:
            logger.exception(f"Run of {scenario.name} failed")
            ledger.fail_run(run, str(e))
            raise CommandError(str(e), returncode=NUMERICS_ERROR)
        except OutputError as e:
            ledger.fail_run(run, str(e))
            raise CommandError(str(e), returncode=CONFIG_ERROR)

        ledger.complete_run(run, scenario, trace)
        for i, cost in enumerate(trace.final_costs):
            self.stdout.write(f"J_{i + 1}={float(cost):.10g}")

    def _scenario(self, options):
        if bool(options['scenario']) == bool(options['preset']):
            raise CommandError("give either a scenario file or --preset", returncode=CONFIG_ERROR)
        try:
            if options['preset']:
                scenario = preset(options['preset'], options['nx'] or options['ny'])
            else:
                scenario = load_scenario(Path(options['scenario']))
            if options['nx'] or options['ny']:
                scenario = scenario.with_grid(options['nx'] or scenario.nx, options['ny'] or scenario.ny)
            if options['snapshots']:
                scenario = scenario.with_snapshots(_parse_times(options['snapshots']))
        except ScenarioError as e:
            raise CommandError(str(e), returncode=CONFIG_ERROR)
        return scenario
