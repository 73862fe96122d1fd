from django.apps import AppConfig


class PhyConfig(AppConfig):
    name = 'phy'
    verbose_name = 'Physical layer'
