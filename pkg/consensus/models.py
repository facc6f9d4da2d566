"""
Run ledger for the consensus game simulator.
Stores game runs, per-agent results and verification check outcomes.
"""
from django.db import models


class GameRun(models.Model):
    """
    One invocation of the run command.
    """
    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('running', 'Running'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    scenario_name = models.CharField(max_length=100)
    nx = models.IntegerField()
    ny = models.IntegerField()
    final_time = models.FloatField(help_text="Horizon T")
    dt_strategy = models.FloatField(help_text="Length of one strategy epoch")
    agent_count = models.IntegerField(default=1)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending')
    error_message = models.TextField(null=True, blank=True)
    costs = models.JSONField(default=list, help_text="Final cost of every agent, in agent order")
    final_mass = models.FloatField(null=True, blank=True)
    output_dir = models.CharField(max_length=500, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"Run #{self.id} - {self.scenario_name} ({self.status})"

    def mark_failed(self, message: str):
        self.status = 'failed'
        self.error_message = message
        self.save(update_fields=['status', 'error_message'])


class AgentResult(models.Model):
    """
    Outcome of one agent in a completed run.
    """
    run = models.ForeignKey(GameRun, on_delete=models.CASCADE, related_name='agents')
    agent_index = models.IntegerField(help_text="Zero-based agent index")
    strategy_variant = models.CharField(max_length=20)
    final_cost = models.FloatField()
    final_position = models.JSONField(default=list)
    rank = models.IntegerField(default=0, help_text="1 for the lowest cost")

    class Meta:
        ordering = ['rank', 'agent_index']

    def __str__(self):
        return f"P{self.agent_index + 1} in run #{self.run_id}: {self.final_cost:.4f}"


class VerificationRecord(models.Model):
    """
    One check report of the verification suite.
    """
    check_name = models.CharField(max_length=50)
    lhs = models.FloatField()
    rhs = models.FloatField()
    passed = models.BooleanField(default=False)
    self_test_failed = models.BooleanField(null=True, help_text="True when the inflated-lhs self-test failed as required")
    params = models.JSONField(default=dict)
    resolutions = models.JSONField(default=list)
    orders = models.JSONField(default=list)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at', 'check_name']

    def __str__(self):
        verdict = 'pass' if self.passed else 'fail'
        return f"{self.check_name}: {verdict}"
