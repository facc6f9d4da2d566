"""
python manage.py verify [--suite support|stability|gradient|convergence|reproduction|all] [--out DIR]

'all' runs the analytic suites; 'reproduction' plays every preset and is opt-in.
"""
import logging
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from consensus.services import ledger
from consensus.services.grid import NumericsError
from consensus.services.verify import EXTRA_SUITES, SUITES, run_suite, suite_passed, write_report

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = "Run the numerical verification suite and write verify_report.json"

    def add_arguments(self, parser):
        parser.add_argument('--suite', choices=SUITES + EXTRA_SUITES + ('all',), default='all')
        parser.add_argument('--out', help="Report directory (default CONSENSUS_OUTPUT_DIR/verify)")

    def handle(self, *args, **options):
        names = SUITES if options['suite'] == 'all' else (options['suite'],)
        out_dir = Path(options['out']) if options['out'] else Path(settings.CONSENSUS_OUTPUT_DIR) / 'verify'

        try:
            reports = run_suite(names)
        except NumericsError as e:
            logger.exception("Verification aborted")
            raise CommandError(str(e), returncode=3)

        for report in reports:
            verdict = 'PASS' if report.passed else 'FAIL'
            self.stdout.write(
                f"{report.check}: {verdict} lhs={report.lhs:.6g} rhs={report.rhs:.6g} "
                f"self_test_failed={report.self_test_failed}"
            )
        path = write_report(reports, out_dir)
        ledger.record_reports(reports)
        self.stdout.write(f"report: {path}")

        if not suite_passed(reports):
            failed = [r.check for r in reports if not r.passed or r.self_test_failed is False]
            raise CommandError(f"failed check(s): {', '.join(failed)}", returncode=1)
