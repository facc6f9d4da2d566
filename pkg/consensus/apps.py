from django.apps import AppConfig


class ConsensusConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'consensus'
    verbose_name = 'Crowd Consensus Games'
