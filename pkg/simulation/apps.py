from django.apps import AppConfig


class SimulationConfig(AppConfig):
    name = 'simulation'
    verbose_name = 'Link adaptation and abstraction runs'
