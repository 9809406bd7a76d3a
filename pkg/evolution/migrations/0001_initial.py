# Generated by Django 5.1.15 on 2026-10-18 09:12

import django.db.models.deletion
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='SearchRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('spec_name', models.CharField(db_index=True, max_length=100)),
                ('seed', models.BigIntegerField(default=0)),
                ('config', models.JSONField(default=dict, help_text='Merged run configuration echo.')),
                ('run_dir', models.CharField(max_length=500)),
                ('status', models.CharField(choices=[('running', 'Running'), ('completed', 'Completed'), ('budget_not_reached', 'Budget not reached'), ('failed', 'Failed')], default='running', max_length=20)),
                ('param_budget', models.BigIntegerField(default=0)),
                ('best_individual_id', models.PositiveIntegerField(blank=True, null=True)),
                ('best_fitness', models.FloatField(blank=True, null=True)),
                ('best_params', models.BigIntegerField(blank=True, null=True)),
                ('best_widths', models.JSONField(blank=True, default=list)),
                ('steps', models.PositiveIntegerField(default=0)),
                ('error', models.TextField(blank=True, default='')),
                ('created_at', models.DateTimeField(auto_now_add=True, db_index=True)),
                ('finished_at', models.DateTimeField(blank=True, null=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='IndividualRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('individual_id', models.PositiveIntegerField()),
                ('parent_id', models.PositiveIntegerField(blank=True, null=True)),
                ('event', models.CharField(db_index=True, max_length=20)),
                ('mutation_tag', models.CharField(blank=True, db_index=True, max_length=10)),
                ('params', models.BigIntegerField()),
                ('fitness', models.FloatField()),
                ('best_fitness', models.FloatField()),
                ('population_size', models.PositiveIntegerField()),
                ('widths', models.JSONField(default=list)),
                ('wallclock_s', models.FloatField(default=0.0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='individuals', to='evolution.searchrun')),
            ],
            options={
                'ordering': ['run', 'individual_id'],
                'constraints': [models.UniqueConstraint(fields=('run', 'individual_id'), name='unique_individual_per_run')],
            },
        ),
    ]
