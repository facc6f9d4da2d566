import json

from django.core.management.base import BaseCommand

from consensus.services.scenarios import PRESETS


class Command(BaseCommand):
    help = "List the built-in scenarios"

    def add_arguments(self, parser):
        parser.add_argument('--json', action='store_true', help="Machine-readable output")

    def handle(self, *args, **options):
        if options['json']:
            entries = [
                {'name': p.name, 'description': p.description, 'anchor': p.anchor}
                for p in PRESETS.values()
            ]
            self.stdout.write(json.dumps(entries, indent=2))
            return

        width = max(len(name) for name in PRESETS)
        for p in PRESETS.values():
            self.stdout.write(f"{p.name:<{width}}  {p.description}  [{p.anchor}]")
