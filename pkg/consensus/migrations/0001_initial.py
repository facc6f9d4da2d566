# Generated by Django 4.2.27 on 2026-10-19 09:12

from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='GameRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('scenario_name', models.CharField(max_length=100)),
                ('nx', models.IntegerField()),
                ('ny', models.IntegerField()),
                ('final_time', models.FloatField(help_text='Horizon T')),
                ('dt_strategy', models.FloatField(help_text='Length of one strategy epoch')),
                ('agent_count', models.IntegerField(default=1)),
                ('status', models.CharField(choices=[('pending', 'Pending'), ('running', 'Running'), ('completed', 'Completed'), ('failed', 'Failed')], default='pending', max_length=20)),
                ('error_message', models.TextField(blank=True, null=True)),
                ('costs', models.JSONField(default=list, help_text='Final cost of every agent, in agent order')),
                ('final_mass', models.FloatField(blank=True, null=True)),
                ('output_dir', models.CharField(blank=True, max_length=500)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='VerificationRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('check_name', models.CharField(max_length=50)),
                ('lhs', models.FloatField()),
                ('rhs', models.FloatField()),
                ('passed', models.BooleanField(default=False)),
                ('self_test_failed', models.BooleanField(help_text='True when the inflated-lhs self-test failed as required', null=True)),
                ('params', models.JSONField(default=dict)),
                ('resolutions', models.JSONField(default=list)),
                ('orders', models.JSONField(default=list)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at', 'check_name'],
            },
        ),
        migrations.CreateModel(
            name='AgentResult',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('agent_index', models.IntegerField(help_text='Zero-based agent index')),
                ('strategy_variant', models.CharField(max_length=20)),
                ('final_cost', models.FloatField()),
                ('final_position', models.JSONField(default=list)),
                ('rank', models.IntegerField(default=0, help_text='1 for the lowest cost')),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='agents', to='consensus.gamerun')),
            ],
            options={
                'ordering': ['rank', 'agent_index'],
            },
        ),
    ]
